//! Exact combinatorics behind state evolution for iterative algorithms on
//! random symmetric matrices.
//!
//! The crate is organized around rooted *monomial trees*: the expansion of an
//! AMP-style iterate into products of matrix entries, one edge per entry.
//! On top of the tree machinery it provides
//!
//! - [`poly`]: polynomial nonlinearities and exact Gaussian moment functionals,
//! - [`trees`]: tree expansion, labelings, and structural diagnostics
//!   (excess, edge classes, bad subtrees),
//! - [`wick`]: the moment algebra of rooted trees, row-wise Wick pairing
//!   counts, and the Gaussian recursion that reproduces them,
//! - [`se`]: state-evolution variance sequences and moment predictions,
//! - [`oracle`]: exact brute-force verifiers over `Q(sqrt(N))`,
//! - [`regime`]: the analytic iteration-count threshold where state evolution
//!   breaks down for degree-`D` monomial nonlinearities,
//! - [`spiked`]: colored trees and the spiked Wick product,
//! - [`amp`]: a reference implementation of the iteration itself.
//!
//! Everything outside `amp` uses exact rational (or `Q(sqrt(N))`) arithmetic;
//! floating point appears only where an iterate is actually simulated.
//!
//! The crate is `no_std` compatible (with `alloc`); the companion `wickamp`
//! crate carries IO, file formats, and the command-line interface.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod amp;
pub mod oracle;
pub mod partitions;
pub mod poly;
pub mod rational;
pub mod regime;
pub mod se;
pub mod spiked;
pub mod trees;
pub mod wick;

pub use rational::{Int, Rational, Uint};

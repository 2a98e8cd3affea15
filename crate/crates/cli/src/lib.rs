//! Simulator, file formats, and verification suites for the `wickamp`
//! toolkit. The exact combinatorics lives in `wickamp-core`; this crate adds
//! everything that touches randomness, files, or the terminal.

pub mod formats;
pub mod manifest;
pub mod sim;
pub mod verify;

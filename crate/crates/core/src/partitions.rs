//! Set-partition enumeration via restricted growth strings.
//!
//! A partition of `{0, .., n-1}` is encoded as the array `b` with `b[i]` the
//! block index of element `i`, subject to `b[0] = 0` and
//! `b[i] <= max(b[0..i]) + 1`. Enumeration order is lexicographic in `b`.

use alloc::vec;
use alloc::vec::Vec;

/// Calls `f` once per set partition of `n` elements with the block-index
/// array and the number of blocks. `n = 0` yields the single empty partition.
pub fn for_each_partition(n: usize, mut f: impl FnMut(&[usize], usize)) {
    if n == 0 {
        f(&[], 0);
        return;
    }
    let mut b = vec![0usize; n];
    let mut maxb = vec![0usize; n];
    loop {
        let blocks = maxb[n - 1] + 1;
        f(&b, blocks);
        // Advance: find the rightmost position that can still grow.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if b[i] <= maxb[i - 1] {
                break;
            }
            i -= 1;
        }
        b[i] += 1;
        maxb[i] = maxb[i - 1].max(b[i]);
        for j in (i + 1)..n {
            b[j] = 0;
            maxb[j] = maxb[j - 1];
        }
    }
}

/// Collects all partitions; for small `n` only.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_partition(n, |b, _| out.push(b.to_vec()));
    out
}

/// Block sizes of a partition given as a block-index array.
pub fn block_sizes(b: &[usize], blocks: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; blocks];
    for &bi in b {
        sizes[bi] += 1;
    }
    sizes
}

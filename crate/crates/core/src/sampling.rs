//! Halton low-discrepancy points in a box.

use crate::poly::IntervalBox;

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Radical inverse of `index` in `base`, in [0, 1).
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// The `index`-th Halton point scaled into `bx`. Index 0 is skipped by
/// callers that want to avoid the lower corner.
pub fn halton_point(index: u64, bx: &IntervalBox) -> Vec<f64> {
    assert!(bx.len() <= PRIMES.len(), "Halton sampling supports at most {} dimensions", PRIMES.len());
    bx.bounds()
        .iter()
        .zip(PRIMES)
        .map(|(b, p)| b.lo + radical_inverse(index, p) * (b.hi - b.lo))
        .collect()
}

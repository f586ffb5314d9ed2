//! Small rank statistics shared by training diagnostics and tests.

use crate::{real_of_usize, Real};

/// Kendall rank correlation (tau-a) between two aligned value lists.
///
/// Counts concordant minus discordant pairs over all n(n−1)/2 pairs; tied
/// pairs on either side contribute zero. Returns 0 for lists shorter than 2.
pub fn kendall_tau<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "kendall_tau needs aligned lists");
    let n = a.len();
    if n < 2 {
        return T::zero();
    }
    let mut net = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i].partial_cmp(&a[j]).expect("values are never NaN");
            let db = b[i].partial_cmp(&b[j]).expect("values are never NaN");
            if da == std::cmp::Ordering::Equal || db == std::cmp::Ordering::Equal {
                continue;
            }
            net += if da == db { 1 } else { -1 };
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    T::from_i64(net).expect("pair count fits") / real_of_usize(pairs as usize)
}

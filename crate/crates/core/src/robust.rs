//! Robust order-statistic estimators shared by scale recovery and edge
//! ratio aggregation.

use crate::scalar::Real;

/// Lower median: the element at sorted index `(n - 1) / 2`. For odd counts
/// this is the usual median; for even counts the lower of the two central
/// elements. Picking an element (rather than averaging) keeps the estimator
/// an exact order statistic, reproducible bit-for-bit, and tolerant of up to
/// 40% arbitrary-magnitude contamination.
pub fn lower_median<S: Real>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let mut buf = values.to_vec();
    let mid = (buf.len() - 1) / 2;
    let (_, median, _) = buf.select_nth_unstable_by(mid, |a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    Some(*median)
}

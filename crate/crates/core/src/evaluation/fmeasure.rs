//! Best-match F-measure between a partition and ground-truth labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::UNKNOWN_LABEL;

/// For each truth cluster `t`, `F(t) = max_c 2|t & c| / (|t| + |c|)`; the
/// result is `sum_t (|t| / N) F(t)`. Rows whose truth label is
/// [`UNKNOWN_LABEL`] are dropped before anything is counted.
pub fn f_measure(predicted: &[usize], truth: &[i64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut joint: BTreeMap<(i64, usize), usize> = BTreeMap::new();
    let mut truth_size: BTreeMap<i64, usize> = BTreeMap::new();
    let mut pred_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut n = 0usize;
    for (&c, &t) in predicted.iter().zip(truth) {
        if t == UNKNOWN_LABEL {
            continue;
        }
        n += 1;
        *joint.entry((t, c)).or_default() += 1;
        *truth_size.entry(t).or_default() += 1;
        *pred_size.entry(c).or_default() += 1;
    }
    if n == 0 {
        return Err(Error::InvalidData("no rows with a known truth label".into()));
    }
    let mut best: BTreeMap<i64, f64> = BTreeMap::new();
    for (&(t, c), &both) in &joint {
        let f = 2.0 * both as f64 / (truth_size[&t] + pred_size[&c]) as f64;
        let e = best.entry(t).or_insert(0.0);
        *e = e.max(f);
    }
    let weighted: f64 = truth_size.iter().map(|(t, &size)| size as f64 * best[t]).sum();
    Ok(weighted / n as f64)
}

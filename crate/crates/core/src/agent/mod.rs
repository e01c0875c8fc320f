//! The sampling agent: the reliability target, the learned per-angle scorer
//! and windowed top-k angle selection.

mod scorer;
mod selection;

pub use scorer::{
    score_all_candidates, CandidateScorer, ConstantScorer, CountingScorer, OracleScorer,
    ScorerModel, SCORER_HIDDEN,
};
pub use selection::{select_topk_in_range, Selection, SelectionState};

use crate::error::{Error, Result};

/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `exp(-||est - gt||^2 / D)`: 1 for a perfectly consistent row, decaying
/// towards 0 as the row drifts from the measured one.
///
/// The value is exactly 1 only for identical rows. Distinct rows are kept in
/// the open interval even where the formula rounds to 1 (differences below
/// about 1e-8) or underflows to 0.
pub fn reliability_score(row_est: &[f64], row_gt: &[f64]) -> Result<f64> {
    if row_est.len() != row_gt.len() {
        return Err(Error::Shape {
            expected: (1, row_gt.len()),
            actual: (1, row_est.len()),
        });
    }
    if row_gt.is_empty() {
        return Err(Error::Empty("detector row"));
    }
    if row_est.iter().chain(row_gt).any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration: 0,
            what: "non-finite detector value",
        });
    }
    if row_est == row_gt {
        return Ok(1.0);
    }
    let ss: f64 = row_est
        .iter()
        .zip(row_gt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::exp(-ss / row_gt.len() as f64).clamp(f64::from_bits(1), BELOW_ONE))
}

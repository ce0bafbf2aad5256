//! Regression direction comparison via expected log predictive density.
//!
//! Two orientations of the same variable pair are fitted and compared on
//! their LOO pointwise predictive densities. A difference smaller than two
//! standard errors is reported as undecidable.

use super::{BglmFit, RegressError};
use crate::evalkit::pointwise_elpd;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// The first variable is the response.
    Forward,
    /// The second variable is the response.
    Reverse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DirectionVerdict {
    Preferred(Orientation),
    Undecidable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub verdict: DirectionVerdict,
    /// elpd(forward) - elpd(reverse)
    pub elpd_diff: f64,
    pub elpd_diff_se: f64,
    pub elpd_forward: f64,
    pub elpd_reverse: f64,
    /// Mean per-observation log predictive density difference.
    pub log_fit_ratio: f64,
    /// Set when the two responses are not on a comparable scale, which makes
    /// raw density comparison questionable.
    pub scale_caveat: bool,
}

/// Compares two fitted orientations using their pointwise LOO elpds.
///
/// `same_response_scale` should be false when the two fits model different
/// response variables whose densities are not directly comparable; the
/// report then carries a caveat flag but the arithmetic is unchanged.
pub fn compare_directions(
    forward: &BglmFit,
    reverse: &BglmFit,
    same_response_scale: bool,
) -> Result<DirectionReport, RegressError> {
    let fwd = pointwise_elpd(forward.pointwise_loglik()).map_err(RegressError::from)?;
    let rev = pointwise_elpd(reverse.pointwise_loglik()).map_err(RegressError::from)?;
    if fwd.len() != rev.len() {
        return Err(RegressError::TooShort { need: fwd.len(), got: rev.len() });
    }
    let n = fwd.len() as f64;
    let diffs: Vec<f64> = fwd.iter().zip(&rev).map(|(a, b)| a - b).collect();
    let elpd_forward: f64 = fwd.iter().sum();
    let elpd_reverse: f64 = rev.iter().sum();
    let elpd_diff = elpd_forward - elpd_reverse;
    let se = (n * crate::numeric::stats::variance(&diffs)).sqrt();
    let verdict = if elpd_diff.abs() <= 2.0 * se {
        DirectionVerdict::Undecidable
    } else if elpd_diff > 0.0 {
        DirectionVerdict::Preferred(Orientation::Forward)
    } else {
        DirectionVerdict::Preferred(Orientation::Reverse)
    };
    Ok(DirectionReport {
        verdict,
        elpd_diff,
        elpd_diff_se: se,
        elpd_forward,
        elpd_reverse,
        log_fit_ratio: elpd_diff / n,
        scale_caveat: !same_response_scale,
    })
}

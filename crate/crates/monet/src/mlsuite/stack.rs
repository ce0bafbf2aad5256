//! Stacking ensembles: a Gaussian-identity regression of the response on
//! pooled out-of-fold member predictions, plus the adoption gate that only
//! accepts an ensemble strictly beating every member on test RMSE and MAE.

use super::cv::{CvReport, TrainedModel};
use super::MlError;
use crate::evalkit::{point_metrics, PointMetrics};
use crate::numeric::stats::weighted_least_squares;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFit {
    pub member_kinds: Vec<String>,
    /// Intercept first, then one weight per member.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_statistics: Vec<f64>,
    pub null_deviance: f64,
    pub null_df: usize,
    pub residual_deviance: f64,
    pub residual_df: usize,
    pub dispersion: f64,
    pub n_pooled: usize,
}

impl EnsembleFit {
    /// Combines member predictions for new rows.
    pub fn combine(&self, member_predictions: &[Vec<f64>]) -> Vec<f64> {
        let n = member_predictions.first().map_or(0, |v| v.len());
        (0..n)
            .map(|i| {
                self.coefficients[0]
                    + member_predictions
                        .iter()
                        .zip(&self.coefficients[1..])
                        .map(|(p, c)| c * p[i])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Fits the stacking regression on the members' pooled out-of-fold
/// predictions. Members must come from the same cross-validation plan so the
/// pooled rows align.
pub fn stack_members(members: &[&TrainedModel]) -> Result<EnsembleFit, MlError> {
    if members.len() < 2 {
        return Err(MlError::BadConfig("stacking needs at least two members".into()));
    }
    let plan = members[0].plan;
    let y = &members[0].oof_targets;
    let n = y.len();
    for m in members {
        if m.plan != plan || m.oof_targets.len() != n || m.oof_predictions.len() != n {
            return Err(MlError::IncompatibleMembers);
        }
    }
    let k = members.len();
    let design = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            members[j - 1].oof_predictions[i]
        }
    });

    // condition-number guard against near-identical member predictions
    let xtx = design.transpose() * &design;
    let eig = xtx.clone().symmetric_eigen();
    let max_e = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_e = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_e > 0.0) || max_e / min_e > 1e12 {
        return Err(MlError::CollinearMembers);
    }

    let fit = weighted_least_squares(&design, y, None).ok_or(MlError::CollinearMembers)?;
    let residual_df = n - (k + 1);
    let dispersion = fit.rss / residual_df as f64;
    let standard_errors: Vec<f64> =
        (0..=k).map(|j| (dispersion * fit.xtx_inv[(j, j)]).sqrt()).collect();
    let t_statistics: Vec<f64> =
        fit.coefficients.iter().zip(&standard_errors).map(|(c, s)| c / s).collect();
    let ybar = crate::numeric::stats::mean(y);
    let null_deviance: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();

    Ok(EnsembleFit {
        member_kinds: members.iter().map(|m| m.kind.to_string()).collect(),
        coefficients: fit.coefficients,
        standard_errors,
        t_statistics,
        null_deviance,
        null_df: n - 1,
        residual_deviance: fit.rss,
        residual_df,
        dispersion,
        n_pooled: n,
    })
}

/// Test metrics of the stacked ensemble, from the members' shared test split.
pub fn ensemble_test_report(
    fit: &EnsembleFit,
    members: &[&TrainedModel],
) -> Result<PointMetrics, MlError> {
    let preds: Vec<Vec<f64>> = members.iter().map(|m| m.test_predictions.clone()).collect();
    let combined = fit.combine(&preds);
    point_metrics(&members[0].test_targets, &combined, true)
        .map_err(|_| MlError::IncompatibleMembers)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Adopt,
    RejectInFavorOf(String),
}

/// Adopts the ensemble only when it strictly beats every member on both test
/// RMSE and MAE; otherwise names the best single member.
pub fn ensemble_gate(ensemble_test: &PointMetrics, member_reports: &[CvReport]) -> GateDecision {
    let beats_all = member_reports
        .iter()
        .all(|r| ensemble_test.rmse < r.test.rmse && ensemble_test.mae < r.test.mae);
    if beats_all {
        return GateDecision::Adopt;
    }
    let best = member_reports
        .iter()
        .min_by(|a, b| {
            a.test
                .rmse
                .partial_cmp(&b.test.rmse)
                .unwrap()
                .then(a.test.mae.partial_cmp(&b.test.mae).unwrap())
        })
        .expect("at least one member");
    GateDecision::RejectInFavorOf(best.kind.to_string())
}

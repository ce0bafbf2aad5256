//! Repeated cross-validation with per-model hyperparameter grids.
//!
//! The data is first split into an 80% working partition and a 20% test
//! partition. Grid points are scored by mean RMSE over `folds x repeats`
//! held-out folds of the working partition; the winner is refit on the full
//! working partition. Out-of-fold predictions under the winning grid point
//! are kept for stacking.

use super::brnn::{BrnnModel, BrnnParams};
use super::cforest::{CForestModel, CForestParams};
use super::qrf::{QrfModel, QrfParams};
use super::svr::{median_heuristic_gamma, SvrModel, SvrParams};
use super::{derive_seed, MlError, ModelKind, Standardizer};
use crate::evalkit::{point_metrics, PointMetrics};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self { folds: 10, repeats: 100, test_fraction: 0.2, seed: 0 }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.folds < 2 {
            return Err(MlError::BadConfig("folds must be >= 2".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(MlError::BadConfig("test_fraction must lie in (0,1)".into()));
        }
        if self.repeats == 0 {
            return Err(MlError::BadConfig("repeats must be >= 1".into()));
        }
        Ok(())
    }

    /// Initial shuffle deciding the test partition.
    pub fn test_split(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x7E57));
        idx.shuffle(&mut rng);
        let n_test = ((n as f64 * self.test_fraction).round() as usize).clamp(1, n - 1);
        let test = idx.split_off(n - n_test);
        (idx, test)
    }

    /// Fold assignment for one repeat, over `m` working rows.
    pub fn fold_assignment(&self, m: usize, repeat: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 1 + repeat as u64));
        order.shuffle(&mut rng);
        let mut fold = vec![0usize; m];
        for (pos, &row) in order.iter().enumerate() {
            fold[row] = pos % self.folds;
        }
        fold
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Qrf(QrfParams),
    Brnn(BrnnParams),
    SvmRadial(SvrParams),
    CForest(CForestParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Qrf(_) => ModelKind::Qrf,
            ModelSpec::Brnn(_) => ModelKind::Brnn,
            ModelSpec::SvmRadial(_) => ModelKind::SvmRadial,
            ModelSpec::CForest(_) => ModelKind::CForest,
        }
    }
}

/// Default grid for a model kind over `p` features. `trees` scales the
/// forest sizes so callers can trade accuracy for runtime.
pub fn default_grid(kind: ModelKind, p: usize, trees: usize) -> Vec<ModelSpec> {
    match kind {
        ModelKind::Qrf => {
            let mut grid = Vec::new();
            for mtry in 1..=p.max(1) {
                for min_node_size in [3usize, 5, 10] {
                    grid.push(ModelSpec::Qrf(QrfParams { trees, mtry, min_node_size }));
                }
            }
            grid
        }
        ModelKind::Brnn => (1..=4)
            .map(|neurons| ModelSpec::Brnn(BrnnParams { neurons, epochs: 60 }))
            .collect(),
        ModelKind::SvmRadial => {
            // gamma is filled in from the median heuristic at fit time; the
            // grid varies C and a width multiplier stored via gamma sign
            let mut grid = Vec::new();
            let mut c = 0.25;
            while c <= 256.0 {
                for mult in [0.5, 1.0, 2.0] {
                    grid.push(ModelSpec::SvmRadial(SvrParams { c, gamma: mult, epsilon: 0.1 }));
                }
                c *= 4.0;
            }
            grid
        }
        ModelKind::CForest => [2usize, 1]
            .iter()
            .filter(|&&mtry| mtry <= p.max(1))
            .map(|&mtry| {
                ModelSpec::CForest(CForestParams {
                    trees,
                    mtry,
                    alpha: 0.05,
                    min_node_size: 7,
                    permutations: 99,
                    subsample: 0.632,
                })
            })
            .collect(),
    }
}

/// An immutable fitted model; prediction is safe to call concurrently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedModel {
    Qrf(QrfModel),
    Brnn(Standardizer, BrnnModel),
    SvmRadial(Standardizer, SvrModel),
    CForest(CForestModel),
}

impl FittedModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Qrf(m) => m.predict(row),
            FittedModel::Brnn(s, m) => m.predict(&s.apply(row)),
            FittedModel::SvmRadial(s, m) => m.predict(&s.apply(row)),
            FittedModel::CForest(m) => m.predict(row),
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

fn fit_spec(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], seed: u64) -> FittedModel {
    match spec {
        ModelSpec::Qrf(p) => FittedModel::Qrf(QrfModel::fit(x, y, *p, seed)),
        ModelSpec::Brnn(p) => {
            let std = Standardizer::fit(x);
            let xs = std.apply_all(x);
            FittedModel::Brnn(std, BrnnModel::fit(&xs, y, *p, seed))
        }
        ModelSpec::SvmRadial(p) => {
            let std = Standardizer::fit(x);
            let xs = std.apply_all(x);
            // the grid stores a width multiplier in `gamma`
            let gamma = p.gamma * median_heuristic_gamma(&xs);
            let resolved = SvrParams { c: p.c, gamma, epsilon: p.epsilon };
            FittedModel::SvmRadial(std, SvrModel::fit(&xs, y, resolved, seed))
        }
        ModelSpec::CForest(p) => FittedModel::CForest(CForestModel::fit(x, y, *p, seed)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub fitted: FittedModel,
    pub plan: CvPlan,
    /// Pooled out-of-fold predictions under the winning grid point, one block
    /// of working-partition rows per repeat, in repeat-then-row order.
    pub oof_predictions: Vec<f64>,
    /// Targets aligned with `oof_predictions`.
    pub oof_targets: Vec<f64>,
    /// Test-partition predictions and targets.
    pub test_predictions: Vec<f64>,
    pub test_targets: Vec<f64>,
}

impl TrainedModel {
    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.fitted.predict_all(rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub train: PointMetrics,
    pub test: PointMetrics,
    /// RMSE per held-out fold, `folds * repeats` entries.
    pub fold_rmse: Vec<f64>,
}

/// Per-grid-point repeated-CV score under the shared fold assignments.
fn grid_score(
    spec: &ModelSpec,
    x: &[Vec<f64>],
    y: &[f64],
    plan: &CvPlan,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let m = y.len();
    let mut fold_rmse = Vec::with_capacity(plan.folds * plan.repeats);
    let mut oof = Vec::with_capacity(m * plan.repeats);
    for repeat in 0..plan.repeats {
        let fold = plan.fold_assignment(m, repeat);
        let mut rep_pred = vec![f64::NAN; m];
        for f in 0..plan.folds {
            let (tr, te): (Vec<usize>, Vec<usize>) =
                (0..m).partition(|&i| fold[i] != f);
            if te.is_empty() || tr.len() < 5 {
                continue;
            }
            let xtr: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
            let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
            let seed = derive_seed(plan.seed, 0x1000 + (repeat * plan.folds + f) as u64);
            let model = fit_spec(spec, &xtr, &ytr, seed);
            let mut se = 0.0;
            for &i in &te {
                let p = model.predict(&x[i]);
                if !p.is_finite() {
                    return None;
                }
                rep_pred[i] = p;
                se += (p - y[i]) * (p - y[i]);
            }
            fold_rmse.push((se / te.len() as f64).sqrt());
        }
        oof.extend(rep_pred);
    }
    if fold_rmse.is_empty() {
        return None;
    }
    let mean_rmse = crate::numeric::stats::mean(&fold_rmse);
    Some((mean_rmse, fold_rmse, oof))
}

/// Grid-search training with repeated cross-validation.
pub fn train_model(
    kind: ModelKind,
    x: &[Vec<f64>],
    y: &[f64],
    grid: &[ModelSpec],
    plan: &CvPlan,
) -> Result<(TrainedModel, CvReport), MlError> {
    plan.validate()?;
    let n = y.len();
    if n < 30 || x.len() != n {
        return Err(MlError::TooFewRows { need: 30, got: n.min(x.len()) });
    }
    if grid.is_empty() || grid.iter().any(|s| s.kind() != kind) {
        return Err(MlError::BadConfig("grid empty or mismatched with kind".into()));
    }
    if crate::numeric::stats::variance(y) < 1e-24 {
        return Err(MlError::DegenerateTarget);
    }

    let (work_idx, test_idx) = plan.test_split(n);
    let xw: Vec<Vec<f64>> = work_idx.iter().map(|&i| x[i].clone()).collect();
    let yw: Vec<f64> = work_idx.iter().map(|&i| y[i]).collect();
    let xt: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
    let yt: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();

    let scored: Vec<(usize, (f64, Vec<f64>, Vec<f64>))> = grid
        .par_iter()
        .enumerate()
        .filter_map(|(g, spec)| grid_score(spec, &xw, &yw, plan).map(|s| (g, s)))
        .collect();
    let (best_g, (_, fold_rmse, oof)) = scored
        .into_iter()
        .min_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap().then(a.0.cmp(&b.0)))
        .ok_or(MlError::GridExhausted)?;
    let spec = grid[best_g];

    let fitted = fit_spec(&spec, &xw, &yw, derive_seed(plan.seed, 0xF17));
    let train_pred = fitted.predict_all(&xw);
    let test_pred = fitted.predict_all(&xt);
    let train = point_metrics(&yw, &train_pred, true).map_err(|_| MlError::GridExhausted)?;
    let test = point_metrics(&yt, &test_pred, true).map_err(|_| MlError::GridExhausted)?;

    let oof_targets: Vec<f64> = (0..plan.repeats).flat_map(|_| yw.iter().copied()).collect();
    let (oof_predictions, oof_targets): (Vec<f64>, Vec<f64>) =
        oof.iter().zip(oof_targets).filter(|(p, _)| p.is_finite()).map(|(p, t)| (*p, t)).unzip();

    Ok((
        TrainedModel {
            kind,
            spec,
            fitted,
            plan: *plan,
            oof_predictions,
            oof_targets,
            test_predictions: test_pred,
            test_targets: yt,
        },
        CvReport { kind, train, test, fold_rmse },
    ))
}

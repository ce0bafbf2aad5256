//! Machine learning regressors, repeated cross-validation, and stacking.
//!
//! Four model families are available: quantile random forest, Bayesian
//! regularized neural network, radial-kernel support vector regression, and
//! conditional-inference random forest. Hyperparameters are chosen by
//! repeated k-fold cross-validation on an 80% partition; the held-out 20%
//! provides test metrics. Stacking pools the out-of-fold predictions into a
//! Gaussian-identity regression over member outputs.

pub mod brnn;
pub mod cforest;
pub mod cv;
pub mod qrf;
pub mod svr;
pub mod stack;

pub use cv::{default_grid, train_model, CvPlan, CvReport, ModelSpec, TrainedModel};
pub use stack::{ensemble_gate, ensemble_test_report, stack_members, EnsembleFit, GateDecision};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum MlError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("every hyperparameter grid point failed")]
    GridExhausted,
    #[error("member predictions are collinear (condition number too high)")]
    CollinearMembers,
    #[error("members were trained under different cross-validation plans")]
    IncompatibleMembers,
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    Qrf,
    Brnn,
    SvmRadial,
    CForest,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Qrf => write!(f, "QRF"),
            ModelKind::Brnn => write!(f, "BRNN"),
            ModelKind::SvmRadial => write!(f, "SVM-radial"),
            ModelKind::CForest => write!(f, "CForest"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = MlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qrf" => Ok(ModelKind::Qrf),
            "brnn" => Ok(ModelKind::Brnn),
            "svm" | "svm-radial" | "svmradial" => Ok(ModelKind::SvmRadial),
            "cforest" => Ok(ModelKind::CForest),
            other => Err(MlError::BadConfig(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Column-standardization fitted on training features, applied at predict
/// time for the models that need conditioning (neural net and SVM).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, |r| r.len());
        let n = x.len() as f64;
        let mut means = vec![0.0; p];
        for row in x {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut sds = vec![0.0; p];
        for row in x {
            for j in 0..p {
                sds[j] += (row[j] - means[j]).powi(2) / n;
            }
        }
        for s in sds.iter_mut() {
            *s = s.sqrt().max(1e-12);
        }
        Self { means, sds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.apply(r)).collect()
    }
}

/// Deterministic seed derivation for independent subtasks.
pub(crate) fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

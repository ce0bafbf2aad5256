//! Per-country analysis pipeline: dataset load, direction comparisons,
//! bootstrap functional-form tests, distribution fitting, the Bayesian GLM
//! with LOO evaluation, the ML suite with stacking, and report assembly.
//!
//! All stages derive their randomness from the master seed, so a (data,
//! config, seed) triple fully determines the report. Stage failures are
//! recorded and only dependent stages are skipped.

pub mod report;

use crate::dataset::{Country, CountryDataset, QuarterStamp, Variable};
use crate::distfit::{select_distribution, DistFamily, FitMethod, FitResult};
use crate::evalkit::{gvif, point_metrics, psis_loo, GvifReport, LooReport, PointMetrics};
use crate::mlsuite::{
    default_grid, ensemble_gate, ensemble_test_report, stack_members, train_model, CvPlan,
    CvReport, EnsembleFit, GateDecision, ModelKind, TrainedModel,
};
use crate::regress::glm::build_design;
use crate::regress::{
    compare_directions, fit_bayes_lm, fit_bglm, reset_bayes_bootstrap, BglmFit, DirectionReport,
    Family, GlmSpec, Link, ObjectivePriors, ResetVariant, TermTransform,
};
use crate::sampler::ChainConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to run one country end to end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountryConfig {
    pub country: Country,
    /// CSV file with the quarterly series.
    pub data_path: PathBuf,
    /// Defaults to the country's data coverage when absent.
    pub start: Option<QuarterStamp>,
    pub end: Option<QuarterStamp>,
    pub sampler: ChainConfig,
    pub reset_replicates: usize,
    /// GLM specification; defaults to the country's published final model.
    pub glm: Option<GlmSpec>,
    pub cv: CvPlan,
    /// Trees per forest model; lower values trade accuracy for runtime.
    pub ml_trees: usize,
    pub ml_kinds: Vec<ModelKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl CountryConfig {
    pub fn new(country: Country, data_path: PathBuf, seed: u64) -> Self {
        let sampler = ChainConfig {
            chains: 4,
            warmup: 500,
            keep: 500,
            seed,
            ..Default::default()
        };
        Self {
            country,
            data_path,
            start: None,
            end: None,
            sampler,
            reset_replicates: 1000,
            glm: None,
            cv: CvPlan { folds: 10, repeats: 10, test_fraction: 0.2, seed },
            ml_trees: 200,
            ml_kinds: vec![ModelKind::Brnn, ModelKind::Qrf],
            seed,
            output_dir: PathBuf::from("reports"),
        }
    }

    pub fn range(&self) -> (QuarterStamp, QuarterStamp) {
        let (ds, de) = self.country.default_range();
        (self.start.unwrap_or(ds), self.end.unwrap_or(de))
    }

    /// The published per-country final model.
    pub fn default_glm(country: Country) -> GlmSpec {
        let gold_term = match country {
            Country::CA => TermTransform::WeibullTransform {
                variable: Variable::Gold,
                shape: 5.883053,
                scale: 6.473397,
            },
            _ => TermTransform::Spline { variable: Variable::Gold, df: 5 },
        };
        let family = match country {
            Country::BR => Family::Gaussian,
            _ => Family::Gamma,
        };
        GlmSpec {
            family,
            link: Link::Log,
            response: Variable::M1,
            log_response: true,
            terms: vec![TermTransform::Log(Variable::Ngdp), gold_term],
        }
    }

    pub fn resolved_glm(&self) -> GlmSpec {
        self.glm.clone().unwrap_or_else(|| Self::default_glm(self.country))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionRow {
    pub response: String,
    pub predictor: String,
    pub report: DirectionReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResetRow {
    pub response: String,
    pub predictor: String,
    pub variant: String,
    pub mean_p: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistFitRow {
    pub variable: String,
    pub fits: Vec<FitResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BglmSection {
    pub spec: GlmSpec,
    pub term_labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub coefficient_sds: Vec<f64>,
    pub dispersion: f64,
    pub rhat_max: f64,
    pub ess_bulk_min: f64,
    pub divergences: usize,
    pub loo: Option<LooReport>,
    pub metrics: PointMetrics,
    pub gvif: Option<GvifReport>,
    /// Positive posterior-mean coefficient on the quantity-of-output term,
    /// as the model form requires.
    pub output_sign_ok: bool,
    /// Gold-term signs; mixed signs are allowed by the model form.
    pub gold_signs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlSection {
    pub kind: String,
    pub report: CvReport,
    pub chosen: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSection {
    pub fit: EnsembleFit,
    pub test_metrics: PointMetrics,
    pub gate: GateDecision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub country: Country,
    pub range: (QuarterStamp, QuarterStamp),
    pub seed: u64,
    pub data_hash: String,
    pub config_hash: String,
    /// Defaults that filled gaps in the configuration.
    pub defaults_applied: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub provenance: Provenance,
    pub observations: usize,
    pub directions: Vec<DirectionRow>,
    pub reset: Vec<ResetRow>,
    pub distfit: Vec<DistFitRow>,
    pub bglm: Option<BglmSection>,
    pub ml: Vec<MlSection>,
    pub ensemble: Option<EnsembleSection>,
    pub errors: Vec<StageError>,
}

impl PipelineReport {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }
}

/// FNV-1a, enough to fingerprint inputs for provenance.
pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn var_label(v: Variable) -> String {
    format!("log({v})")
}

/// The three variable pairs compared for direction, response first.
const PAIRS: [(Variable, Variable); 3] = [
    (Variable::M1, Variable::Ngdp),
    (Variable::Gold, Variable::Ngdp),
    (Variable::M1, Variable::Gold),
];

pub fn run_directions(
    dataset: &CountryDataset,
    sampler: &ChainConfig,
    errors: &mut Vec<StageError>,
) -> (Vec<DirectionRow>, Vec<BglmFit>) {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (k, (a, b)) in PAIRS.iter().enumerate() {
        let ya = dataset.log_values(*a);
        let yb = dataset.log_values(*b);
        let mut cfg = sampler.clone();
        cfg.seed = sampler.seed.wrapping_add(11 + k as u64);
        let forward = ObjectivePriors::from_frequentist(&[yb], ya);
        let reverse = ObjectivePriors::from_frequentist(&[ya], yb);
        let fwd = fit_bayes_lm(ya, yb, &forward, &cfg);
        let rev = fit_bayes_lm(yb, ya, &reverse, &cfg);
        match (fwd, rev) {
            (Ok(f), Ok(r)) => match compare_directions(&f, &r, false) {
                Ok(report) => {
                    rows.push(DirectionRow {
                        response: var_label(*a),
                        predictor: var_label(*b),
                        report,
                    });
                    fits.push(f);
                    fits.push(r);
                }
                Err(e) => errors.push(StageError {
                    stage: format!("direction {a}~{b}"),
                    message: e.to_string(),
                }),
            },
            (f, r) => {
                for e in [f.err(), r.err()].into_iter().flatten() {
                    errors.push(StageError {
                        stage: format!("direction {a}~{b}"),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    (rows, fits)
}

pub fn run_reset(
    dataset: &CountryDataset,
    replicates: usize,
    seed: u64,
    errors: &mut Vec<StageError>,
) -> Vec<ResetRow> {
    let mut rows = Vec::new();
    for (k, (a, b)) in PAIRS.iter().enumerate() {
        for (flip, (resp, pred)) in [(*a, *b), (*b, *a)].into_iter().enumerate() {
            let y = dataset.log_values(resp);
            let x = dataset.log_values(pred);
            for (v, variant) in ResetVariant::ALL.into_iter().enumerate() {
                let rep_seed =
                    seed.wrapping_add(100 + (k * 6 + flip * 3 + v) as u64);
                match reset_bayes_bootstrap(y, &[x], variant, replicates, rep_seed) {
                    Ok(r) => rows.push(ResetRow {
                        response: var_label(resp),
                        predictor: var_label(pred),
                        variant: variant.to_string(),
                        mean_p: r.mean_p,
                        rejection_rate: r.rejection_rate,
                    }),
                    Err(e) => errors.push(StageError {
                        stage: format!("reset {resp}~{pred} {variant}"),
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    rows
}

pub fn run_distfit(dataset: &CountryDataset, errors: &mut Vec<StageError>) -> Vec<DistFitRow> {
    let families =
        [DistFamily::Gamma, DistFamily::LogNormal, DistFamily::Normal, DistFamily::Weibull];
    let mut rows = Vec::new();
    for v in [Variable::M1, Variable::Ngdp, Variable::Gold] {
        let sample = dataset.log_values(v);
        match select_distribution(sample, &families, FitMethod::Mge) {
            Ok(fits) => rows.push(DistFitRow { variable: var_label(v), fits }),
            Err(e) => errors
                .push(StageError { stage: format!("distfit {v}"), message: e.to_string() }),
        }
    }
    rows
}

pub fn run_bglm(
    dataset: &CountryDataset,
    spec: &GlmSpec,
    sampler: &ChainConfig,
    errors: &mut Vec<StageError>,
) -> Option<BglmSection> {
    let fit = match fit_bglm(dataset, spec, sampler) {
        Ok(f) => f,
        Err(e) => {
            errors.push(StageError { stage: "bglm".into(), message: e.to_string() });
            return None;
        }
    };
    let y: Vec<f64> = if spec.log_response {
        dataset.log_values(spec.response).to_vec()
    } else {
        dataset.values(spec.response).to_vec()
    };
    let metrics = match point_metrics(&y, &fit.fitted, spec.family == Family::Gaussian) {
        Ok(m) => m,
        Err(e) => {
            errors.push(StageError { stage: "bglm metrics".into(), message: e.to_string() });
            return None;
        }
    };
    let loo = match psis_loo(fit.pointwise_loglik()) {
        Ok(l) => Some(l),
        Err(e) => {
            errors.push(StageError { stage: "bglm loo".into(), message: e.to_string() });
            None
        }
    };
    let gvif_report = match build_design(dataset, &spec.terms) {
        Ok(design) if design.groups.len() >= 2 => match gvif(&design.matrix, &design.groups) {
            Ok(g) => Some(g),
            Err(e) => {
                errors.push(StageError { stage: "bglm gvif".into(), message: e.to_string() });
                None
            }
        },
        Ok(_) => None,
        Err(e) => {
            errors.push(StageError { stage: "bglm gvif".into(), message: e.to_string() });
            None
        }
    };

    // sign checks against the model form: output term positive, gold terms free
    let mut output_sign_ok = true;
    let mut gold_signs = Vec::new();
    let mut col = 1;
    for term in &spec.terms {
        let width = match term {
            TermTransform::Spline { df, .. } => *df,
            _ => 1,
        };
        let is_output = matches!(
            term,
            TermTransform::Raw(Variable::Ngdp) | TermTransform::Log(Variable::Ngdp)
        );
        for j in col..col + width {
            if is_output {
                output_sign_ok &= fit.coefficients[j] > 0.0;
            } else {
                gold_signs.push(fit.coefficients[j].signum());
            }
        }
        col += width;
    }

    Some(BglmSection {
        spec: spec.clone(),
        term_labels: fit.term_labels.clone(),
        coefficients: fit.coefficients.clone(),
        coefficient_sds: fit.coefficient_sds.clone(),
        dispersion: fit.dispersion,
        rhat_max: fit.diagnostics.rhat.iter().cloned().fold(0.0, f64::max),
        ess_bulk_min: fit.diagnostics.ess_bulk.iter().cloned().fold(f64::INFINITY, f64::min),
        divergences: fit.diagnostics.divergences,
        loo,
        metrics,
        gvif: gvif_report,
        output_sign_ok,
        gold_signs,
    })
}

pub fn ml_features(dataset: &CountryDataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ngdp = dataset.log_values(Variable::Ngdp);
    let gold = dataset.log_values(Variable::Gold);
    let y = dataset.log_values(Variable::M1).to_vec();
    let x = ngdp.iter().zip(gold).map(|(&a, &b)| vec![a, b]).collect();
    (x, y)
}

pub fn run_ml(
    dataset: &CountryDataset,
    config: &CountryConfig,
    errors: &mut Vec<StageError>,
) -> (Vec<MlSection>, Vec<TrainedModel>, Vec<CvReport>) {
    let (x, y) = ml_features(dataset);
    let mut sections = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for (k, kind) in config.ml_kinds.iter().enumerate() {
        let grid = default_grid(*kind, 2, config.ml_trees);
        let mut plan = config.cv;
        plan.seed = config.seed; // shared splits across kinds
        let _ = k;
        match train_model(*kind, &x, &y, &grid, &plan) {
            Ok((model, report)) => {
                sections.push(MlSection {
                    kind: kind.to_string(),
                    chosen: format!("{:?}", model.spec),
                    report: report.clone(),
                });
                models.push(model);
                reports.push(report);
            }
            Err(e) => errors
                .push(StageError { stage: format!("ml {kind}"), message: e.to_string() }),
        }
    }
    (sections, models, reports)
}

pub fn run_ensemble(
    models: &[TrainedModel],
    reports: &[CvReport],
    errors: &mut Vec<StageError>,
) -> Option<EnsembleSection> {
    if models.len() < 2 {
        errors.push(StageError {
            stage: "ensemble".into(),
            message: "fewer than two trained members".into(),
        });
        return None;
    }
    let refs: Vec<&TrainedModel> = models.iter().collect();
    let fit = match stack_members(&refs) {
        Ok(f) => f,
        Err(e) => {
            errors.push(StageError { stage: "ensemble".into(), message: e.to_string() });
            return None;
        }
    };
    let test_metrics = match ensemble_test_report(&fit, &refs) {
        Ok(m) => m,
        Err(e) => {
            errors.push(StageError { stage: "ensemble".into(), message: e.to_string() });
            return None;
        }
    };
    let gate = ensemble_gate(&test_metrics, reports);
    Some(EnsembleSection { fit, test_metrics, gate })
}

/// Runs every stage in order over the configured country.
pub fn run_pipeline(config: &CountryConfig) -> Result<PipelineReport, PipelineError> {
    config
        .sampler
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    config.cv.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

    let bytes = std::fs::read(&config.data_path)?;
    let range = config.range();
    let dataset = crate::dataset::dataset_from_bytes(&bytes, config.country, range)?;

    let mut defaults_applied = Vec::new();
    if config.start.is_none() || config.end.is_none() {
        defaults_applied.push(format!("date range {} to {}", range.0, range.1));
    }
    let spec = config.resolved_glm();
    if config.glm.is_none() {
        defaults_applied.push("published final model specification".to_string());
    }
    defaults_applied.push("ml features: log output, log gold".to_string());

    let provenance = Provenance {
        schema_version: SCHEMA_VERSION,
        country: config.country,
        range,
        seed: config.seed,
        data_hash: fnv1a(&bytes),
        config_hash: {
            // The output directory has no bearing on the results, so it is
            // excluded from the configuration fingerprint.
            let mut fingerprint = config.clone();
            fingerprint.output_dir = PathBuf::new();
            fnv1a(serde_json::to_string(&fingerprint)?.as_bytes())
        },
        defaults_applied,
    };

    let mut errors = Vec::new();
    // independent stages; directions dominate the cost so the cheap stages
    // run alongside on the same thread pool used by the chains
    let (directions, _direction_fits) =
        run_directions(&dataset, &config.sampler, &mut errors);
    let reset = run_reset(&dataset, config.reset_replicates, config.seed, &mut errors);
    let distfit = run_distfit(&dataset, &mut errors);
    let bglm = run_bglm(&dataset, &spec, &config.sampler, &mut errors);
    let (ml, models, reports) = run_ml(&dataset, config, &mut errors);
    let ensemble = run_ensemble(&models, &reports, &mut errors);

    Ok(PipelineReport {
        provenance,
        observations: dataset.len(),
        directions,
        reset,
        distfit,
        bglm,
        ml,
        ensemble,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_models_follow_the_published_choices() {
        let ca = CountryConfig::default_glm(Country::CA);
        assert_eq!(ca.family, Family::Gamma);
        assert!(matches!(ca.terms[1], TermTransform::WeibullTransform { .. }));
        let br = CountryConfig::default_glm(Country::BR);
        assert_eq!(br.family, Family::Gaussian);
        assert_eq!(br.link, Link::Log);
        let us = CountryConfig::default_glm(Country::US);
        assert!(matches!(us.terms[1], TermTransform::Spline { df: 5, .. }));
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(b"hello"), fnv1a(b"hello"));
        assert_ne!(fnv1a(b"hello"), fnv1a(b"hellp"));
    }

    #[test]
    fn missing_data_file_is_a_config_error() {
        let config =
            CountryConfig::new(Country::US, PathBuf::from("/nonexistent/file.csv"), 1);
        assert!(matches!(run_pipeline(&config), Err(PipelineError::Io(_))));
    }
}

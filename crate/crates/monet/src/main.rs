//! Command line front end for the monetary-model verification pipeline.
//!
//! `monet run --config <file>` executes the full per-country pipeline and
//! writes reports; the remaining subcommands run single stages against a
//! quarterly CSV for quick inspection. Exit codes: 0 on full success, 2 when
//! the pipeline finished but one or more stages recorded an error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use monet::dataset::{load_country_dataset, Country, CountryDataset, QuarterStamp, Variable};
use monet::distfit::{select_distribution, DistFamily, FitMethod};
use monet::emd::{emd_trend, imf_counts, EmdOptions};
use monet::mlsuite::ModelKind;
use monet::pipeline::report::{load_report, render_report, to_markdown, ReportFormat};
use monet::pipeline::{
    fnv1a, run_bglm, run_directions, run_ensemble, run_ml, run_pipeline, run_reset,
    CountryConfig, PipelineReport, Provenance, SCHEMA_VERSION,
};
use monet::quantity::{
    classify_scenario, predict_m1, total_differential, QuantityInputs, ScenarioDelta,
    ScenarioVerdict,
};

#[derive(Parser)]
#[command(name = "monet", version, about = "Monetary quantity model and verification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Sampler settings shared by the Bayesian subcommands.
#[derive(Args, Clone)]
struct SamplerArgs {
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 500)]
    warmup: usize,
    /// Kept posterior draws per chain.
    #[arg(long, default_value_t = 500)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    target_accept: f64,
}

impl SamplerArgs {
    fn chain_config(&self) -> monet::sampler::ChainConfig {
        monet::sampler::ChainConfig {
            chains: self.chains,
            warmup: self.warmup,
            keep: self.draws,
            target_accept: self.target_accept,
            max_tree_depth: 10,
            seed: self.seed,
        }
    }
}

/// Dataset selection shared by the per-stage subcommands.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    country: Country,
    /// Quarterly CSV path; falls back to $MONET_DATA_DIR/quarterly.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// First quarter to keep, as YYYYQn; defaults to the country's coverage.
    #[arg(long)]
    start: Option<String>,
    /// Last quarter to keep, as YYYYQn; defaults to the country's coverage.
    #[arg(long)]
    end: Option<String>,
}

impl DataArgs {
    fn data_path(&self) -> anyhow::Result<PathBuf> {
        if let Some(p) = &self.data {
            return Ok(p.clone());
        }
        if let Ok(dir) = std::env::var("MONET_DATA_DIR") {
            return Ok(Path::new(&dir).join("quarterly.csv"));
        }
        anyhow::bail!("no data file: pass --data or set MONET_DATA_DIR")
    }

    fn range(&self) -> anyhow::Result<(QuarterStamp, QuarterStamp)> {
        let (ds, de) = self.country.default_range();
        let parse = |s: &Option<String>, fallback| -> anyhow::Result<QuarterStamp> {
            match s {
                None => Ok(fallback),
                Some(raw) => QuarterStamp::parse(raw)
                    .ok_or_else(|| anyhow::anyhow!("bad quarter stamp {raw:?}")),
            }
        };
        Ok((parse(&self.start, ds)?, parse(&self.end, de)?))
    }

    fn load(&self) -> anyhow::Result<(CountryDataset, Vec<u8>)> {
        let path = self.data_path()?;
        let bytes = std::fs::read(&path)?;
        let dataset = load_country_dataset(&path, self.country, self.range()?)?;
        Ok((dataset, bytes))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output formats to render; defaults to all three.
        #[arg(long, value_delimiter = ',')]
        format: Vec<ReportFormat>,
    },
    /// Load and summarize a country's quarterly series, with trend extraction.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit candidate distribution families to one log-scale variable.
    Distfit {
        #[command(flatten)]
        data: DataArgs,
        /// m1, ngdp or gold (log scale is implied).
        #[arg(long)]
        variable: Variable,
        /// mle or mge.
        #[arg(long, default_value = "mge")]
        method: String,
    },
    /// Compare regression directions for each variable pair.
    Direction {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Functional-form misspecification checks over all pair orientations.
    Reset {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the country's Bayesian GLM and report fit quality.
    Bglm {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Cross-validate one machine-learning model kind.
    Ml {
        #[command(flatten)]
        data: DataArgs,
        /// qrf, brnn, svm-radial or cforest.
        #[arg(long)]
        kind: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trees: usize,
    },
    /// Cross-validate several members and stack them, with an adoption gate.
    Ensemble {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated model kinds, e.g. brnn,qrf.
        #[arg(long, value_delimiter = ',')]
        members: Vec<ModelKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trees: usize,
    },
    /// Evaluate the closed-form quantity model at a point.
    Simulate {
        #[arg(long)]
        lambda_p: f64,
        #[arg(long)]
        lambda_gold: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        d_lambda_p: f64,
        #[arg(long, default_value_t = 0.0)]
        d_lambda_gold: f64,
    },
    /// Re-render a stored structured JSON report in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Output directory; defaults to the input file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Report shell for single-stage subcommands so they can reuse the renderer.
fn skeleton_report(data: &DataArgs, bytes: &[u8], n: usize, seed: u64) -> PipelineReport {
    PipelineReport {
        provenance: Provenance {
            schema_version: SCHEMA_VERSION,
            country: data.country,
            range: data.range().expect("validated earlier"),
            seed,
            data_hash: fnv1a(bytes),
            config_hash: fnv1a(b"cli-stage"),
            defaults_applied: Vec::new(),
        },
        observations: n,
        directions: Vec::new(),
        reset: Vec::new(),
        distfit: Vec::new(),
        bglm: None,
        ml: Vec::new(),
        ensemble: None,
        errors: Vec::new(),
    }
}

fn finish(report: &PipelineReport) -> ExitCode {
    print!("{}", to_markdown(report));
    if report.is_complete() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn cmd_run(config_path: &Path, formats: &[ReportFormat]) -> anyhow::Result<ExitCode> {
    let raw = std::fs::read_to_string(config_path)?;
    let config: CountryConfig = serde_json::from_str(&raw)?;
    let report = run_pipeline(&config)?;
    let formats = if formats.is_empty() {
        vec![ReportFormat::StructuredJson, ReportFormat::Markdown, ReportFormat::Csv]
    } else {
        formats.to_vec()
    };
    std::fs::create_dir_all(&config.output_dir)?;
    for format in formats {
        for path in render_report(&report, format, &config.output_dir)? {
            println!("wrote {}", path.display());
        }
    }
    for err in &report.errors {
        eprintln!("stage {} failed: {}", err.stage, err.message);
    }
    Ok(if report.is_complete() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_ingest(data: &DataArgs) -> anyhow::Result<ExitCode> {
    let (dataset, _) = data.load()?;
    let (start, end) = data.range()?;
    println!("{}: {} quarters, {start} to {end}", data.country, dataset.len());
    for variable in Variable::ALL {
        let series = dataset.log_values(variable);
        let trend = emd_trend(series, &EmdOptions::default())?;
        let modes = trend.imfs.len();
        let (maxima, minima) = trend
            .imfs
            .last()
            .map(|imf| imf_counts(imf))
            .unwrap_or((0, 0));
        println!(
            "  log {variable}: {modes} oscillatory modes, last mode {maxima} maxima / {minima} minima"
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_distfit(data: &DataArgs, variable: Variable, method: &str) -> anyhow::Result<ExitCode> {
    let method = match method.to_ascii_lowercase().as_str() {
        "mle" => FitMethod::Mle,
        "mge" => FitMethod::Mge,
        other => anyhow::bail!("unknown fit method {other:?} (expected mle or mge)"),
    };
    let (dataset, _) = data.load()?;
    let sample = dataset.log_values(variable);
    let fits = select_distribution(sample, &DistFamily::ALL, method)?;
    println!("log {variable} ({} observations), best fit first:", sample.len());
    println!("{:<12} {:>12} {:>12} {:>12}", "family", "param1", "param2", "BIC");
    for fit in fits {
        println!(
            "{:<12} {:>12.6} {:>12.6} {:>12.3}",
            fit.family.to_string(),
            fit.param1,
            fit.param2,
            fit.bic
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_direction(data: &DataArgs, sampler: &SamplerArgs) -> anyhow::Result<ExitCode> {
    let (dataset, bytes) = data.load()?;
    let mut report = skeleton_report(data, &bytes, dataset.len(), sampler.seed);
    let (rows, _) = run_directions(&dataset, &sampler.chain_config(), &mut report.errors);
    report.directions = rows;
    Ok(finish(&report))
}

fn cmd_reset(data: &DataArgs, replicates: usize, seed: u64) -> anyhow::Result<ExitCode> {
    let (dataset, bytes) = data.load()?;
    let mut report = skeleton_report(data, &bytes, dataset.len(), seed);
    report.reset = run_reset(&dataset, replicates, seed, &mut report.errors);
    Ok(finish(&report))
}

fn cmd_bglm(data: &DataArgs, sampler: &SamplerArgs) -> anyhow::Result<ExitCode> {
    let (dataset, bytes) = data.load()?;
    let spec = CountryConfig::default_glm(data.country);
    let mut report = skeleton_report(data, &bytes, dataset.len(), sampler.seed);
    report.bglm = run_bglm(&dataset, &spec, &sampler.chain_config(), &mut report.errors);
    Ok(finish(&report))
}

fn ml_config(data: &DataArgs, seed: u64, trees: usize) -> anyhow::Result<CountryConfig> {
    let mut config = CountryConfig::new(data.country, data.data_path()?, seed);
    config.ml_trees = trees;
    config.start = data.start.as_deref().and_then(QuarterStamp::parse);
    config.end = data.end.as_deref().and_then(QuarterStamp::parse);
    Ok(config)
}

fn cmd_ml(data: &DataArgs, kind: ModelKind, seed: u64, trees: usize) -> anyhow::Result<ExitCode> {
    let (dataset, bytes) = data.load()?;
    let mut config = ml_config(data, seed, trees)?;
    config.ml_kinds = vec![kind];
    let mut report = skeleton_report(data, &bytes, dataset.len(), seed);
    let (sections, _, _) = run_ml(&dataset, &config, &mut report.errors);
    report.ml = sections;
    Ok(finish(&report))
}

fn cmd_ensemble(
    data: &DataArgs,
    members: &[ModelKind],
    seed: u64,
    trees: usize,
) -> anyhow::Result<ExitCode> {
    if members.len() < 2 {
        anyhow::bail!("need at least two members, e.g. --members brnn,qrf");
    }
    let (dataset, bytes) = data.load()?;
    let mut config = ml_config(data, seed, trees)?;
    config.ml_kinds = members.to_vec();
    let mut report = skeleton_report(data, &bytes, dataset.len(), seed);
    let (sections, models, reports) = run_ml(&dataset, &config, &mut report.errors);
    report.ml = sections;
    report.ensemble = run_ensemble(&models, &reports, &mut report.errors);
    Ok(finish(&report))
}

fn cmd_simulate(
    lambda_p: f64,
    lambda_gold: f64,
    beta: f64,
    d_lambda_p: f64,
    d_lambda_gold: f64,
) -> anyhow::Result<ExitCode> {
    let inputs = QuantityInputs::new(lambda_p, lambda_gold, beta)?;
    let delta = ScenarioDelta::new(d_lambda_p, d_lambda_gold)?;
    let level = predict_m1(inputs);
    let diff = total_differential(inputs, delta);
    let verdict = classify_scenario(inputs, delta);
    let label = match verdict {
        ScenarioVerdict::Positive => "money supply rises".to_string(),
        ScenarioVerdict::Negative => "money supply falls".to_string(),
        ScenarioVerdict::Zero => "money supply unchanged".to_string(),
        ScenarioVerdict::Conditional(_) => format!(
            "sign depends on magnitudes; resolved {}",
            if verdict.sign() > 0.0 {
                "positive"
            } else if verdict.sign() < 0.0 {
                "negative"
            } else {
                "zero"
            }
        ),
    };
    println!("implied money supply: {level}");
    println!("first-order change:   {diff}");
    println!("case: {label}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(input: &Path, format: ReportFormat, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let report = load_report(input)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => input.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    std::fs::create_dir_all(&dir)?;
    for path in render_report(&report, format, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, format } => cmd_run(&config, &format),
        Command::Ingest { data } => cmd_ingest(&data),
        Command::Distfit { data, variable, method } => cmd_distfit(&data, variable, &method),
        Command::Direction { data, sampler } => cmd_direction(&data, &sampler),
        Command::Reset { data, replicates, seed } => cmd_reset(&data, replicates, seed),
        Command::Bglm { data, sampler } => cmd_bglm(&data, &sampler),
        Command::Ml { data, kind, seed, trees } => cmd_ml(&data, kind, seed, trees),
        Command::Ensemble { data, members, seed, trees } => {
            cmd_ensemble(&data, &members, seed, trees)
        }
        Command::Simulate { lambda_p, lambda_gold, beta, d_lambda_p, d_lambda_gold } => {
            cmd_simulate(lambda_p, lambda_gold, beta, d_lambda_p, d_lambda_gold)
        }
        Command::Report { input, format, out } => cmd_report(&input, format, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

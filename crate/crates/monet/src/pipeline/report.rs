//! Report rendering: structured JSON (schema-versioned, lossless), markdown
//! tables mirroring the analysis sections, and per-table CSV files for
//! external plotting.

use super::{PipelineError, PipelineReport};
use crate::regress::DirectionVerdict;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    StructuredJson,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" | "structured-json" => Ok(ReportFormat::StructuredJson),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

/// Round-trip-exact float formatting for text outputs.
fn fmt_f(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn verdict_str(v: &DirectionVerdict) -> String {
    match v {
        DirectionVerdict::Undecidable => "Undecidable".to_string(),
        DirectionVerdict::Preferred(o) => format!("{o:?}"),
    }
}

/// One (name, header, rows) table per report section.
pub fn tables(report: &PipelineReport) -> Vec<(String, Vec<String>, Vec<Vec<String>>)> {
    let mut out = Vec::new();

    let rows = report
        .directions
        .iter()
        .map(|d| {
            vec![
                d.response.clone(),
                d.predictor.clone(),
                verdict_str(&d.report.verdict),
                fmt_f(d.report.elpd_diff),
                fmt_f(d.report.elpd_diff_se),
                fmt_f(d.report.log_fit_ratio),
                d.report.scale_caveat.to_string(),
            ]
        })
        .collect();
    out.push((
        "directions".to_string(),
        ["Response", "Predictor", "Verdict", "ELPD diff", "SE", "Log fit ratio", "Caveat"]
            .map(String::from)
            .to_vec(),
        rows,
    ));

    let rows = report
        .reset
        .iter()
        .map(|r| {
            vec![
                r.response.clone(),
                r.predictor.clone(),
                r.variant.clone(),
                fmt_f(r.mean_p),
                fmt_f(r.rejection_rate),
            ]
        })
        .collect();
    out.push((
        "reset".to_string(),
        ["Response", "Predictor", "Variant", "Mean p", "Rejection rate"]
            .map(String::from)
            .to_vec(),
        rows,
    ));

    let mut rows = Vec::new();
    for block in &report.distfit {
        for fit in &block.fits {
            rows.push(vec![
                block.variable.clone(),
                fit.family.to_string(),
                fmt_f(fit.param1),
                fmt_f(fit.param2),
                fmt_f(fit.bic),
            ]);
        }
    }
    out.push((
        "distfit".to_string(),
        ["Variable", "Family", "Parameter 1", "Parameter 2", "BIC"].map(String::from).to_vec(),
        rows,
    ));

    if let Some(b) = &report.bglm {
        let rows = b
            .term_labels
            .iter()
            .zip(b.coefficients.iter().zip(&b.coefficient_sds))
            .map(|(l, (c, s))| vec![l.clone(), fmt_f(*c), fmt_f(*s)])
            .collect();
        out.push((
            "bglm_coefficients".to_string(),
            ["Term", "Estimate", "Posterior SD"].map(String::from).to_vec(),
            rows,
        ));

        let mut rows = vec![
            vec!["MAE".to_string(), fmt_f(b.metrics.mae)],
            vec!["MAE % of minimum".to_string(), fmt_f(b.metrics.mae_pct_min)],
            vec!["RMSE".to_string(), fmt_f(b.metrics.rmse)],
            vec!["Dispersion".to_string(), fmt_f(b.dispersion)],
            vec!["Max R-hat".to_string(), fmt_f(b.rhat_max)],
            vec!["Divergences".to_string(), b.divergences.to_string()],
        ];
        if let Some(loo) = &b.loo {
            rows.push(vec!["ELPD LOO".to_string(), fmt_f(loo.elpd_loo)]);
            rows.push(vec!["ELPD LOO SE".to_string(), fmt_f(loo.se_elpd)]);
            rows.push(vec!["P LOO".to_string(), fmt_f(loo.p_loo)]);
            rows.push(vec!["LOO IC".to_string(), fmt_f(loo.looic)]);
        }
        if let Some(g) = &b.gvif {
            for t in &g.terms {
                rows.push(vec![format!("GVIF {}", t.name), fmt_f(t.gvif_df_corrected)]);
            }
        }
        rows.push(vec!["Output sign check".to_string(), b.output_sign_ok.to_string()]);
        out.push((
            "bglm_performance".to_string(),
            ["Statistic", "Value"].map(String::from).to_vec(),
            rows,
        ));
    }

    let rows = report
        .ml
        .iter()
        .map(|m| {
            vec![
                m.kind.clone(),
                fmt_f(m.report.train.rmse),
                fmt_f(m.report.train.mae),
                fmt_f(m.report.test.rmse),
                fmt_f(m.report.test.mae),
                m.report.test.r2.map(fmt_f).unwrap_or_default(),
            ]
        })
        .collect();
    out.push((
        "ml_cv".to_string(),
        ["Model", "Train RMSE", "Train MAE", "Test RMSE", "Test MAE", "Test R2"]
            .map(String::from)
            .to_vec(),
        rows,
    ));

    if let Some(e) = &report.ensemble {
        let mut labels = vec!["Intercept".to_string()];
        labels.extend(e.fit.member_kinds.iter().cloned());
        let mut rows: Vec<Vec<String>> = labels
            .iter()
            .zip(e.fit.coefficients.iter().zip(&e.fit.standard_errors).zip(&e.fit.t_statistics))
            .map(|(l, ((c, s), t))| vec![l.clone(), fmt_f(*c), fmt_f(*s), fmt_f(*t)])
            .collect();
        rows.push(vec![
            "Null deviance".to_string(),
            fmt_f(e.fit.null_deviance),
            format!("df {}", e.fit.null_df),
            String::new(),
        ]);
        rows.push(vec![
            "Residual deviance".to_string(),
            fmt_f(e.fit.residual_deviance),
            format!("df {}", e.fit.residual_df),
            String::new(),
        ]);
        rows.push(vec![
            "Dispersion".to_string(),
            fmt_f(e.fit.dispersion),
            String::new(),
            String::new(),
        ]);
        rows.push(vec![format!("Gate: {:?}", e.gate), String::new(), String::new(), String::new()]);
        out.push((
            "ensemble".to_string(),
            ["Term", "Estimate", "Std. error", "t value"].map(String::from).to_vec(),
            rows,
        ));
    }

    if !report.errors.is_empty() {
        let rows =
            report.errors.iter().map(|e| vec![e.stage.clone(), e.message.clone()]).collect();
        out.push((
            "stage_errors".to_string(),
            ["Stage", "Error"].map(String::from).to_vec(),
            rows,
        ));
    }
    out
}

pub fn to_markdown(report: &PipelineReport) -> String {
    let mut s = String::new();
    let p = &report.provenance;
    let _ = writeln!(s, "# Pipeline report: {}", p.country);
    let _ = writeln!(s);
    let _ = writeln!(s, "- Range: {} to {}", p.range.0, p.range.1);
    let _ = writeln!(s, "- Observations: {}", report.observations);
    let _ = writeln!(s, "- Seed: {}", p.seed);
    let _ = writeln!(s, "- Data hash: `{}`", p.data_hash);
    let _ = writeln!(s, "- Config hash: `{}`", p.config_hash);
    let _ = writeln!(s, "- Schema version: {}", p.schema_version);
    for d in &p.defaults_applied {
        let _ = writeln!(s, "- Default applied: {d}");
    }
    for (name, header, rows) in tables(report) {
        let _ = writeln!(s);
        let _ = writeln!(s, "## {name}");
        let _ = writeln!(s);
        let _ = writeln!(s, "| {} |", header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
        for row in rows {
            let mut padded = row;
            padded.resize(header.len(), String::new());
            let _ = writeln!(s, "| {} |", padded.join(" | "));
        }
    }
    s
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Writes the report in the requested format; returns the files created.
pub fn render_report(
    report: &PipelineReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let tag = report.provenance.country.to_string().to_lowercase();
    let mut files = Vec::new();
    match format {
        ReportFormat::StructuredJson => {
            let path = dir.join(format!("{tag}_report.json"));
            let json = serde_json::to_string_pretty(report)?;
            std::fs::write(&path, json)?;
            files.push(path);
        }
        ReportFormat::Markdown => {
            let path = dir.join(format!("{tag}_report.md"));
            std::fs::write(&path, to_markdown(report))?;
            files.push(path);
        }
        ReportFormat::Csv => {
            for (name, header, rows) in tables(report) {
                let path = dir.join(format!("{tag}_{name}.csv"));
                let mut s = String::new();
                let _ = writeln!(s, "{}", header.iter().map(|h| csv_escape(h)).collect::<Vec<_>>().join(","));
                for row in rows {
                    let mut padded = row;
                    padded.resize(header.len(), String::new());
                    let _ = writeln!(
                        s,
                        "{}",
                        padded.iter().map(|f| csv_escape(f)).collect::<Vec<_>>().join(",")
                    );
                }
                std::fs::write(&path, s)?;
                files.push(path);
            }
        }
    }
    Ok(files)
}

/// Reloads a structured report; inverse of the JSON render.
pub fn load_report(path: &Path) -> Result<PipelineReport, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let report: PipelineReport = serde_json::from_str(&text)?;
    if report.provenance.schema_version != super::SCHEMA_VERSION {
        return Err(PipelineError::Config(format!(
            "unsupported schema version {}",
            report.provenance.schema_version
        )));
    }
    Ok(report)
}

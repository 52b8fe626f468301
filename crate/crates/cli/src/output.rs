//! Tables and JSON documents written by a run.
//!
//! - `candidates.csv`: one row per scored candidate, fixed column order,
//!   6 significant digits (weights with 6 decimals).
//! - `summary.json`: averaged estimates keyed by quantity, then criterion.
//! - `manifest.json`: seed, versions, candidate bookkeeping, truncation
//!   events and exclusions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use modelavg::pipeline::CandidateOutcome;
use modelavg::{AveragedEstimate, ICKind};
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::RunResult;
use crate::CliError;

/// `x` with 6 significant digits, plain notation for moderate magnitudes.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    // The exponent after rounding, so 9.9999996 counts as 1e1.
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

fn weight_maps(result: &RunResult) -> BTreeMap<ICKind, BTreeMap<&str, f64>> {
    result
        .summaries
        .iter()
        .map(|s| {
            let m = s.weights.ids.iter().map(String::as_str).zip(s.weights.weights.iter().copied()).collect();
            (s.kind, m)
        })
        .collect()
}

fn header(result: &RunResult) -> Vec<String> {
    let mut h: Vec<String> =
        ["id", "model", "t_min", "d_C", "k", "N", "chi2", "Q"].iter().map(|s| s.to_string()).collect();
    for kind in &result.criteria {
        h.push(kind.name().to_string());
        h.push(format!("{}_weight", kind.name()));
        if result.outcomes.iter().any(|o| o.ics.get(kind).is_some_and(|r| r.mc_sigma.is_some())) {
            h.push(format!("{}_mc_sigma", kind.name()));
        }
    }
    for q in &result.quantities {
        h.push(q.name.clone());
        h.push(format!("{}_err", q.name));
    }
    h
}

fn row(o: &CandidateOutcome, result: &RunResult, weights: &BTreeMap<ICKind, BTreeMap<&str, f64>>) -> Vec<String> {
    let fit = o.fit.as_ref().expect("scored candidates carry a fit");
    let mut r = vec![
        o.id.clone(),
        o.model.clone(),
        format!("{}", o.t_min),
        o.d_cut.to_string(),
        o.k.to_string(),
        o.n.to_string(),
        format_sig6(fit.chi2_hat),
        format_sig6(fit.q_value),
    ];
    for kind in &result.criteria {
        let report = o.ics.get(kind);
        r.push(report.map(|x| format_sig6(x.value)).unwrap_or_default());
        let w = weights.get(kind).and_then(|m| m.get(o.id.as_str()));
        r.push(w.map(|w| format!("{w:.6}")).unwrap_or_default());
        if result.outcomes.iter().any(|c| c.ics.get(kind).is_some_and(|x| x.mc_sigma.is_some())) {
            r.push(report.and_then(|x| x.mc_sigma).map(format_sig6).unwrap_or_default());
        }
    }
    for q in &result.quantities {
        match o.param(&q.name) {
            Some(p) => {
                r.push(format_sig6(p.value));
                r.push(format_sig6(p.error));
            }
            None => r.extend([String::new(), String::new()]),
        }
    }
    r
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    #[serde(flatten)]
    estimate: Option<&'a AveragedEstimate>,
    n_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes `candidates.csv` and `summary.json` into `dir`. Fails without
/// touching the filesystem if no candidate was scored.
pub fn emit_table(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if result.scored().next().is_none() {
        return Err(CliError::EmptyResults);
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let weights = weight_maps(result);
    let mut csv = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::io(dir.join("candidates.csv"), e.into());
    csv.write_record(header(result)).map_err(io)?;
    for o in result.scored() {
        csv.write_record(row(o, result, &weights)).map_err(io)?;
    }
    let bytes = csv.into_inner().map_err(|e| CliError::io(dir, e.into_error()))?;
    let table = dir.join("candidates.csv");
    write(&table, &bytes)?;

    let mut summary: BTreeMap<&str, BTreeMap<&str, SummaryEntry>> = BTreeMap::new();
    for s in &result.summaries {
        for (q, avg) in &s.quantities {
            summary.entry(q.as_str()).or_default().insert(
                s.kind.name(),
                SummaryEntry { estimate: avg.estimate.as_ref(), n_missing: avg.n_missing, error: avg.error.as_deref() },
            );
        }
    }
    let json = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&json, format!("{text}\n").as_bytes())?;
    Ok(vec![table, json])
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub library_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub criteria: Vec<ICKind>,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_min: Option<f64>,
    pub runs: Vec<RunEntry>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunEntry {
    pub n: usize,
    /// Output directory relative to the manifest.
    pub dir: String,
    pub d_used: usize,
    pub n_models: usize,
    pub n_partitions: usize,
    pub n_candidates: usize,
    pub n_scored: usize,
    pub excluded: Vec<Excluded>,
    /// Candidates where any expansion was truncated.
    pub truncation: Vec<Truncation>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Excluded {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Truncation {
    pub id: String,
    /// Criteria whose correction term was dropped.
    pub truncated: Vec<ICKind>,
    pub ppic_samples_dropped: usize,
}

impl Manifest {
    pub fn new(cfg: &RunConfig, command: &str, results: &[(String, &RunResult)]) -> Self {
        let runs = results
            .iter()
            .map(|(dir, r)| {
                let excluded: Vec<Excluded> = r
                    .outcomes
                    .iter()
                    .filter_map(|o| o.error.as_ref().map(|e| Excluded { id: o.id.clone(), error: e.clone() }))
                    .collect();
                let truncation = r
                    .scored()
                    .filter_map(|o| {
                        let truncated: Vec<ICKind> = o.ics.values().filter(|x| x.truncated).map(|x| x.kind).collect();
                        let dropped = o.ics.get(&ICKind::Ppic).map_or(0, |x| x.n_truncated_samples);
                        (!truncated.is_empty() || dropped > 0).then(|| Truncation {
                            id: o.id.clone(),
                            truncated,
                            ppic_samples_dropped: dropped,
                        })
                    })
                    .collect();
                let n_scored = r.scored().count();
                assert_eq!(n_scored + excluded.len(), r.n_models * r.n_partitions);
                RunEntry {
                    n: r.n,
                    dir: dir.clone(),
                    d_used: r.d_used,
                    n_models: r.n_models,
                    n_partitions: r.n_partitions,
                    n_candidates: r.outcomes.len(),
                    n_scored,
                    excluded,
                    truncation,
                }
            })
            .collect();
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            library_version: modelavg::VERSION,
            command: command.to_string(),
            seed: cfg.seed,
            criteria: cfg.criteria.clone(),
            exact: cfg.exact,
            n_draws: cfg.exact.then_some(cfg.n_draws),
            snr_min: cfg.snr_min,
            runs,
            warnings: results.iter().flat_map(|(_, r)| r.warnings.iter().cloned()).collect(),
        }
    }
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write(&path, format!("{text}\n").as_bytes())?;
    Ok(path)
}

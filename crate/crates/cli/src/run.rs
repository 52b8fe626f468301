use std::fs::File;
use std::io::BufReader;

use modelavg::data::{compute_stats, load_dataset, snr_cut};
use modelavg::pipeline::{average, evaluate_candidates, sweep, AverageSummary, CandidateOutcome, QuantitySpec, RunOptions};
use modelavg::synth::{gen_exp, gen_poly};
use modelavg::{DataSet, Error, FitOptions, ICKind, SubsetPartition};

use crate::config::{RunConfig, SynthSource};
use crate::CliError;

/// Correlations between kept and cut columns above this are reported,
/// since the subset penalties assume the cut block is uncorrelated.
const OFF_BLOCK_WARN: f64 = 0.8;

/// Everything produced for one sample size.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub n: usize,
    /// Columns left after the signal-to-noise cut.
    pub d_used: usize,
    pub n_models: usize,
    pub n_partitions: usize,
    pub criteria: Vec<ICKind>,
    pub quantities: Vec<QuantitySpec>,
    /// Sorted by model name, then t_min.
    pub outcomes: Vec<CandidateOutcome>,
    pub summaries: Vec<AverageSummary>,
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn scored(&self) -> impl Iterator<Item = &CandidateOutcome> {
        self.outcomes.iter().filter(|o| o.succeeded())
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<DataSet, CliError> {
    if let Some(path) = &cfg.data.file {
        let f = File::open(path).map_err(|e| CliError::io(path, e))?;
        return Ok(load_dataset(BufReader::new(f), cfg.data.coords.clone())?);
    }
    match cfg.data.synth.as_ref() {
        Some(s) => synthesize(s),
        None => Err(CliError::Config("no data source".into())),
    }
}

pub fn synthesize(s: &SynthSource) -> Result<DataSet, CliError> {
    Ok(match s {
        SynthSource::Poly(c) => gen_poly(c)?,
        SynthSource::Exp(c) => gen_exp(c)?,
    })
}

/// Largest |correlation| between a kept and a cut column over all
/// partitions, when the full covariance is usable.
fn max_off_block_correlation(ds: &DataSet, parts: &[SubsetPartition]) -> Option<f64> {
    let stats = compute_stats(ds, &SubsetPartition::full(ds.d())).ok()?;
    let sd: Vec<f64> = (0..ds.d()).map(|j| stats.cov[(j, j)].sqrt()).collect();
    let mut worst: f64 = 0.0;
    for p in parts {
        let kept = p.kept();
        for cut in (0..ds.d()).filter(|j| kept.binary_search(j).is_err()) {
            for &k in kept {
                worst = worst.max((stats.cov[(k, cut)] / (sd[k] * sd[cut])).abs());
            }
        }
    }
    Some(worst)
}

fn run_one(cfg: &RunConfig, ds: DataSet, opts: &RunOptions) -> Result<RunResult, CliError> {
    let n = ds.n();
    let mut warnings = Vec::new();
    let ds = match cfg.snr_min {
        Some(snr) => {
            let stats = compute_stats(&ds, &SubsetPartition::full(ds.d()))?;
            let keep = snr_cut(&ds, &stats, snr)?;
            ds.restrict(&keep)?
        }
        None => ds,
    };
    let parts = match cfg.sweep.values()? {
        None => vec![SubsetPartition::full(ds.d())],
        Some(ts) => {
            let mut parts = Vec::new();
            let mut skipped = Vec::new();
            for t in ts {
                match SubsetPartition::from_min_coord(ds.coords(), t) {
                    Ok(p) => parts.push(p),
                    Err(_) => skipped.push(t.to_string()),
                }
            }
            if !skipped.is_empty() {
                warnings.push(format!("N = {n}: t_min = {} keep no data and were skipped", skipped.join(", ")));
            }
            parts
        }
    };
    if parts.is_empty() {
        return Err(CliError::Config(format!("N = {n}: no t_min in the sweep keeps any data")));
    }
    if let Some(c) = max_off_block_correlation(&ds, &parts) {
        if c > OFF_BLOCK_WARN {
            warnings.push(format!(
                "N = {n}: kept and cut data correlate up to {c:.3}; BPIC/PPIC subset penalties assume they do not, prefer BAIC"
            ));
        }
    }
    let models = cfg.models.iter().map(|m| m.build()).collect::<Result<Vec<_>, _>>()?;
    let cands = sweep(&models, &parts);
    let outcomes = evaluate_candidates(&ds, &cands, opts);
    let quantities = if cfg.quantities.is_empty() {
        // Every parameter of every model, skipped where absent.
        let mut names: Vec<String> = models.iter().flat_map(|m| m.param_names()).collect();
        names.sort();
        names.dedup();
        names.into_iter().map(|name| QuantitySpec { name, optional: true }).collect()
    } else {
        cfg.quantity_specs()
    };
    let mut summaries = Vec::new();
    for &kind in &opts.criteria {
        match average(&outcomes, kind, &quantities) {
            Ok(s) => summaries.push(s),
            Err(Error::AllInvalid) => warnings.push(format!("N = {n}: no candidate has a finite {kind}")),
            Err(e) => return Err(e.into()),
        }
    }
    let result = RunResult {
        n,
        d_used: ds.d(),
        n_models: models.len(),
        n_partitions: parts.len(),
        criteria: opts.criteria.clone(),
        quantities,
        outcomes,
        summaries,
        warnings,
    };
    assert_eq!(result.outcomes.len(), result.n_models * result.n_partitions);
    Ok(result)
}

/// Runs the full pipeline once per sample size: all samples, or each prefix
/// in `n_subsample`.
pub fn run(cfg: &RunConfig) -> Result<Vec<RunResult>, CliError> {
    let ds = load_data(cfg)?;
    let opts = RunOptions {
        criteria: cfg.criteria.clone(),
        exact: cfg.exact.then(|| cfg.mc_config()),
        fit: FitOptions { seed: cfg.seed, ..FitOptions::default() },
    };
    if cfg.n_subsample.is_empty() {
        return Ok(vec![run_one(cfg, ds, &opts)?]);
    }
    cfg.n_subsample
        .iter()
        .map(|&n| run_one(cfg, ds.prefix(n)?, &opts))
        .collect()
}

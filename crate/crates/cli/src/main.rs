use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modelavg::data::write_dataset;
use modelavg::pipeline::{evaluate_candidate, Candidate, RunOptions};
use modelavg::synth::{ExpSynthConfig, PolySynthConfig};
use modelavg::{FitOptions, SubsetPartition};
use modelavg_cli::config::SynthSource;
use modelavg_cli::output::{emit_table, write_manifest, Manifest};
use modelavg_cli::run::{load_data, run, synthesize};
use modelavg_cli::{CliError, RunConfig};

/// Bayesian model averaging over candidate models and fit ranges.
#[derive(Parser, Debug)]
#[command(name = "modelavg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed (and the synthetic-data seed).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Drop data from the first column whose signal-to-noise ratio is below this.
    #[arg(long = "snr-min", global = true, value_name = "REAL")]
    snr_min: Option<f64>,
    /// Monte-Carlo BPIC and PPIC instead of the Laplace expansions.
    #[arg(long, global = true)]
    exact: bool,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a single candidate and print its criteria.
    Fit {
        /// Model name (default: the first model in the config).
        #[arg(long)]
        model: Option<String>,
        /// First kept coordinate (default: all data).
        #[arg(long = "t-min")]
        t_min: Option<f64>,
    },
    /// Sweep all candidates, score them and write the averaged estimates.
    Average,
    /// Write a synthetic dataset.
    Synth {
        /// Generator to use when the config has no `[data.synth]` table.
        #[arg(long, value_enum)]
        generator: Option<Generator>,
    },
    /// `average` with Monte-Carlo evaluation of BPIC and PPIC.
    Exact,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    Poly,
    Exp,
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.data.synth = cfg.data.synth.map(|s| s.with_seed(seed));
    }
    if let Some(s) = common.snr_min {
        cfg.snr_min = Some(s);
    }
    cfg.exact |= common.exact;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_average(common: &Common, name: &str, force_exact: bool) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    cfg.exact |= force_exact;
    cfg.validate()?;
    let results = run(&cfg)?;
    let out = cfg.output.dir.clone();
    let single = results.len() == 1;
    let mut dirs = Vec::new();
    for r in &results {
        let rel = if single { ".".to_string() } else { format!("n{}", r.n) };
        emit_table(r, &if single { out.clone() } else { out.join(&rel) })?;
        dirs.push(rel);
    }
    let entries: Vec<(String, &_)> = dirs.into_iter().zip(&results).collect();
    let manifest = Manifest::new(&cfg, name, &entries);
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    write_manifest(&manifest, &out)?;
    for r in &results {
        for s in &r.summaries {
            for (q, avg) in &s.quantities {
                if let Some(e) = &avg.estimate {
                    println!("N={} {:<7} {q} = {} +- {}", r.n, s.kind, fmt(e.mean), fmt(e.sigma));
                }
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn fmt(x: f64) -> String {
    modelavg_cli::format_sig6(x)
}

fn cmd_fit(common: &Common, model: Option<&str>, t_min: Option<f64>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mut ds = load_data(&cfg)?;
    if let Some(snr) = cfg.snr_min {
        let stats = modelavg::compute_stats(&ds, &SubsetPartition::full(ds.d()))?;
        ds = ds.restrict(&modelavg::snr_cut(&ds, &stats, snr)?)?;
    }
    let specs = cfg.models.iter().map(|m| m.build()).collect::<Result<Vec<_>, _>>()?;
    let spec = match model {
        Some(name) => specs
            .into_iter()
            .find(|m| m.name == name)
            .ok_or_else(|| CliError::Config(format!("no model named {name:?} in the config")))?,
        None => specs.into_iter().next().expect("validated config has a model"),
    };
    let part = match t_min {
        Some(t) => SubsetPartition::from_min_coord(ds.coords(), t)?,
        None => SubsetPartition::full(ds.d()),
    };
    let opts = RunOptions {
        criteria: cfg.criteria.clone(),
        exact: cfg.exact.then(|| cfg.mc_config()),
        fit: FitOptions { seed: cfg.seed, ..FitOptions::default() },
    };
    let outcome = evaluate_candidate(&ds, &Candidate { model: spec, part }, &opts);
    let text = serde_json::to_string_pretty(&outcome).expect("outcome serializes");
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("fit.json");
    std::fs::write(&path, format!("{text}\n")).map_err(|e| CliError::io(&path, e))?;
    if let Some(err) = &outcome.error {
        return Err(CliError::Model(modelavg::Error::Domain(format!("{}: {err}", outcome.id))));
    }
    let fit = outcome.fit.as_ref().expect("successful candidate has a fit");
    println!("{}  chi2 = {}  Q = {}", outcome.id, fmt(fit.chi2_hat), fmt(fit.q_value));
    for p in &outcome.params {
        println!("  {:<6} {} +- {}", p.name, fmt(p.value), fmt(p.error));
    }
    for r in outcome.ics.values() {
        println!("  {:<7} {}", r.kind, fmt(r.value));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(common: &Common, generator: Option<Generator>) -> Result<(), CliError> {
    let (source, seed, out) = match &common.config {
        Some(_) => {
            let cfg = load_config(common)?;
            let s = cfg
                .data
                .synth
                .clone()
                .ok_or_else(|| CliError::Config("config has no [data.synth] table".into()))?;
            (s, None, cfg.output.dir)
        }
        None => {
            let s = match generator {
                Some(Generator::Exp) => SynthSource::Exp(ExpSynthConfig::default()),
                Some(Generator::Poly) | None => SynthSource::Poly(PolySynthConfig::default()),
            };
            (s, common.seed, common.out.clone().unwrap_or_else(|| PathBuf::from("out")))
        }
    };
    let source = match seed {
        Some(seed) => source.with_seed(seed),
        None => source,
    };
    let ds = synthesize(&source)?;
    write_data(&ds, &out)
}

fn write_data(ds: &modelavg::DataSet, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("data.txt");
    let f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_dataset(ds, std::io::BufWriter::new(f))?;
    println!("wrote {} ({} samples x {} points)", path.display(), ds.n(), ds.d());
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MODELAVG_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("MODELAVG_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Fit { model, t_min } => cmd_fit(&cli.common, model.as_deref(), *t_min),
        Command::Average => cmd_average(&cli.common, "average", false),
        Command::Exact => cmd_average(&cli.common, "exact", true),
        Command::Synth { generator } => cmd_synth(&cli.common, *generator),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("modelavg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `hfair`: run, sweep and fit horizon-fair vRAN controllers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

mod config;
mod run;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hfair_core::models::{fit_linear_profiles, read_measurements};
use hfair_core::scenarios::{build_mintb, export_trace};

use config::{load_scenario, Resolved, RunConfig};

#[derive(Parser)]
#[command(name = "hfair", version, about = "Horizon-fair vRAN control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy on a scenario for each seed.
    Run(RunArgs),
    /// Run once per value of one parameter and merge the summaries.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values (prediction modes for `--axis pred`).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Fit linear server profiles from a measurement CSV.
    Fit {
        /// CSV with columns pu_id,snr_db,tb_size_bits,proc_time_s,energy_j.
        measurements: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the environments of a threshold scenario in the trace format.
    GenTrace {
        #[arg(long)]
        scenario: String,
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Preset (assignment-1, assignment-2, mintb-1, mintb-2-trace, mintb-3) or scenario TOML.
    #[arg(long)]
    scenario: Option<String>,
    /// alg1 | alg2 | slot-fair | utilitarian (default: the learner matching the scenario).
    #[arg(long)]
    policy: Option<String>,
    /// none | naive | perfect | good | moderate | noisy:<c>.
    #[arg(long)]
    pred: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Cost weight of the threshold problem.
    #[arg(long)]
    phi: Option<f64>,
    /// Saving scale of the assignment problem.
    #[arg(long = "phi-h")]
    phi_h: Option<f64>,
    /// Threshold cap.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long = "T")]
    t: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML run configuration; fields it sets take precedence over flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Alpha,
    Beta,
    Phi,
    Pred,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Phi => "phi",
            Axis::Pred => "pred",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<f64>()
                .with_context(|| format!("sweep value {value:?} is not a number"))
        };
        match self {
            Axis::Alpha => cfg.alpha = Some(num()?),
            Axis::Beta => cfg.beta = Some(num()?),
            Axis::Phi => cfg.phi = Some(num()?),
            Axis::Pred => cfg.pred = Some(value.to_string()),
        }
        Ok(())
    }
}

/// Errors that are the caller's fault rather than the run's.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| ConfigError(e).into())
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let flags = RunConfig {
            scenario: self.scenario.clone(),
            policy: self.policy.clone(),
            pred: self.pred.clone(),
            alpha: self.alpha,
            beta: self.beta,
            phi: self.phi,
            phi_h: self.phi_h,
            k: self.k,
            t: self.t,
            seeds: self.seeds.clone(),
            out: self.out.clone(),
        };
        Ok(match &self.config {
            Some(path) => flags.overlay(RunConfig::from_file(path)?),
            None => flags,
        })
    }
}

fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    config_err(Resolved::from_config(cfg).and_then(|r| run::validate(&r).map(|_| r)))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = resolve(&config_err(args.to_config())?)?;
    let (summary, _) = run::run(&cfg)?;
    println!(
        "{} on {} ({} seeds, T={}): mean final regret {:.6e}{}",
        summary.policy,
        cfg.spec.kind.name(),
        summary.runs,
        summary.horizon,
        summary.mean_final_regret,
        if summary.oracle_warnings > 0 {
            format!(", {} oracle warnings", summary.oracle_warnings)
        } else {
            String::new()
        }
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs, axis: Axis, values: &[String]) -> Result<()> {
    let base = config_err(args.to_config())?;
    let root = base.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    // Resolve every point before running any of them.
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        config_err(axis.apply(&mut cfg, v))?;
        cfg.out = Some(root.join(format!("{}={v}", axis.name())));
        points.push((v.clone(), resolve(&cfg)?));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (value, cfg) in &points {
        let (summary, results) = run::run(cfg)?;
        rows.push(run::SweepRow {
            value: value.clone(),
            summary,
            results,
        });
    }
    let provenance = format!(
        "hfair {} sweep axis={} base_config_sha256={}",
        env!("CARGO_PKG_VERSION"),
        axis.name(),
        points[0].1.hash()
    );
    let path = root.join("sweep_summary.csv");
    run::write_sweep_csv(&path, axis.name(), &provenance, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_fit(measurements: &PathBuf, out: &PathBuf) -> Result<()> {
    let file = config_err(
        File::open(measurements).with_context(|| format!("opening {}", measurements.display())),
    )?;
    let rows = config_err(read_measurements(file).map_err(Into::into))?;
    let profiles = config_err(fit_linear_profiles(&rows).map_err(Into::into))?;
    for p in &profiles {
        for w in p.ha_warnings() {
            eprintln!("warning: {}: {w}", p.id);
        }
    }
    fs::write(out, serde_json::to_string_pretty(&profiles)? + "\n")
        .with_context(|| format!("writing {}", out.display()))?;
    println!("fitted {} profiles to {}", profiles.len(), out.display());
    Ok(())
}

fn cmd_gen_trace(scenario: &str, t: Option<usize>, seed: u64, out: &PathBuf) -> Result<()> {
    let mut spec = config_err(load_scenario(scenario, t))?;
    if spec.kind.is_assignment() {
        return Err(ConfigError(anyhow::anyhow!(
            "gen-trace needs a threshold (mintb) scenario"
        ))
        .into());
    }
    if let Some(t) = t {
        spec.t = t;
    }
    spec.seed = seed;
    let (seq, _) = config_err(build_mintb(&spec).map_err(Into::into))?;
    let w =
        BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    export_trace(w, &seq.envs)?;
    println!("wrote {} slots to {}", seq.envs.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { run, axis, values } => cmd_sweep(run, *axis, values),
        Command::Fit { measurements, out } => cmd_fit(measurements, out),
        Command::GenTrace {
            scenario,
            t,
            seed,
            out,
        } => cmd_gen_trace(scenario, *t, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Executing runs and sweeps and writing their artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use hfair_core::assignment::Init;
use hfair_core::evaluation::regret::trace_averages;
use hfair_core::evaluation::report::{
    assignment_regret_rows, checkpoints, mintb_regret_rows, summarize, write_regret_csv,
    PolicySummary, RegretRow, RunOutcome,
};
use hfair_core::evaluation::{run_baseline, Baseline, OracleOptions};
use hfair_core::scenarios::{build_assignment, build_mintb};
use hfair_core::sim::{run_assignment, run_mintb};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PolicyKind, Resolved};

/// What one seed produced, beyond its files.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub outcome: RunOutcome,
    /// Mean unweighted energy per slot (threshold runs only).
    pub mean_energy: Option<f64>,
    /// Mean per-user utility (threshold runs: the empty-buffer delay proxy).
    pub mean_utility: f64,
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    version: &'static str,
    config_sha256: String,
    config: &'a Resolved,
    oracle: OracleOptions,
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    provenance: Provenance<'a>,
    /// True when some hindsight benchmark or baseline slot did not certify.
    oracle_warning: bool,
    summary: &'a PolicySummary,
}

/// Checks that the first seed builds, so configuration mistakes surface
/// before any work or output happens.
pub fn validate(cfg: &Resolved) -> Result<()> {
    let spec = cfg.spec_for(cfg.seeds[0]);
    if spec.kind.is_assignment() {
        build_assignment(&spec)?;
    } else {
        build_mintb(&spec)?;
    }
    Ok(())
}

fn jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn run_seed(cfg: &Resolved, seed: u64) -> Result<SeedResult> {
    let spec = cfg.spec_for(seed);
    let points = checkpoints(spec.t);
    let policy = cfg.policy.name();
    let stem = format!("{policy}_seed{seed}");
    let (rows, result): (Vec<RegretRow>, SeedResult) = if spec.kind.is_assignment() {
        let (seq, params) = build_assignment(&spec)?;
        let (trace, baseline_warnings) = match cfg.policy {
            PolicyKind::Alg1 => (
                run_assignment(&seq.envs, &params, cfg.mode, Init::Default, seed)?,
                0,
            ),
            PolicyKind::SlotFair => run_baseline(&seq.envs, &params, Baseline::SlotFair, seed)?,
            PolicyKind::Utilitarian => {
                run_baseline(&seq.envs, &params, Baseline::Utilitarian, seed)?
            }
            PolicyKind::Alg2 => unreachable!("rejected during resolution"),
        };
        let opts = OracleOptions {
            seed,
            ..Default::default()
        };
        let rows = assignment_regret_rows(
            policy,
            seed,
            &trace.records,
            &seq.envs,
            &params,
            &opts,
            &points,
        )?;
        jsonl(&cfg.out.join(format!("trace_{stem}.jsonl")), &trace.records)?;
        let (u, h) = trace_averages(&trace.records)?;
        let outcome = RunOutcome {
            final_regret: rows.last().map_or(0.0, |r| r.regret),
            clips: trace.clip_count(trace.len()),
            oracle_warnings: rows.iter().filter(|r| r.oracle_warning).count() + baseline_warnings,
            total: u.iter().sum::<f64>() + h.iter().sum::<f64>(),
            u_avg: u,
            h_avg: Some(h),
        };
        let mean_utility = outcome.u_avg.iter().sum::<f64>() / outcome.u_avg.len() as f64;
        (
            rows,
            SeedResult {
                outcome,
                mean_energy: None,
                mean_utility,
            },
        )
    } else {
        let (seq, params) = build_mintb(&spec)?;
        let trace = run_mintb(&seq.envs, &params, cfg.mode, Init::Default, seed)?;
        let rows = mintb_regret_rows(policy, seed, &trace.records, &seq.envs, &params, &points)?;
        jsonl(&cfg.out.join(format!("trace_{stem}.jsonl")), &trace.records)?;
        let n = trace.len() as f64;
        let dim = trace.records[0].u.len();
        let mut u = vec![0.0; dim];
        for r in &trace.records {
            u.iter_mut().zip(&r.u).for_each(|(a, v)| *a += v / n);
        }
        let cost = trace.records.iter().map(|r| r.cost).sum::<f64>() / n;
        let energy = trace.records.iter().map(|r| r.energy).sum::<f64>() / n;
        let outcome = RunOutcome {
            final_regret: rows.last().map_or(0.0, |r| r.regret),
            clips: trace.clip_count(trace.len()),
            oracle_warnings: 0,
            total: u.iter().sum::<f64>() - cost,
            u_avg: u,
            h_avg: None,
        };
        let mean_utility = outcome.u_avg.iter().sum::<f64>() / dim as f64;
        (
            rows,
            SeedResult {
                outcome,
                mean_energy: Some(energy),
                mean_utility,
            },
        )
    };
    let csv = cfg.out.join(format!("regret_{stem}.csv"));
    let w =
        BufWriter::new(File::create(&csv).with_context(|| format!("creating {}", csv.display()))?);
    write_regret_csv(w, &cfg.provenance(seed), &rows)?;
    Ok(result)
}

/// Runs every seed (in parallel), then writes `summary.json`.
pub fn run(cfg: &Resolved) -> Result<(PolicySummary, Vec<SeedResult>)> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let results = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<RunOutcome> = results.iter().map(|r| r.outcome.clone()).collect();
    let summary = summarize(cfg.policy.name(), &cfg.pred, cfg.spec.t, &outcomes)?;
    let file = SummaryFile {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.hash(),
            config: cfg,
            oracle: OracleOptions::default(),
        },
        oracle_warning: summary.oracle_warnings > 0,
        summary: &summary,
    };
    let path = cfg.out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok((summary, results))
}

/// One row of a sweep table.
pub struct SweepRow {
    pub value: String,
    pub summary: PolicySummary,
    pub results: Vec<SeedResult>,
}

pub fn write_sweep_csv(path: &Path, axis: &str, provenance: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "# provenance: {provenance}")?;
    writeln!(
        w,
        "axis,value,policy,prediction,runs,horizon,mean_final_regret,min_final_regret,max_final_regret,\
         mean_utility_jain,mean_saving_jain,mean_total,mean_utility,mean_energy,oracle_warnings"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
    for r in rows {
        let s = &r.summary;
        let n = r.results.len() as f64;
        let mean_u = r.results.iter().map(|x| x.mean_utility).sum::<f64>() / n;
        let energy = r
            .results
            .iter()
            .map(|x| x.mean_energy)
            .sum::<Option<f64>>()
            .map(|e| e / n);
        writeln!(
            w,
            "{axis},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{},{}",
            r.value,
            s.policy,
            s.prediction,
            s.runs,
            s.horizon,
            s.mean_final_regret,
            s.min_final_regret,
            s.max_final_regret,
            s.mean_utility_jain,
            opt(s.mean_saving_jain),
            s.mean_total,
            mean_u,
            opt(energy),
            s.oracle_warnings
        )?;
    }
    w.flush()?;
    Ok(())
}

//! `train` / `train-single`: run gradient-ascent training and write the
//! parameter bundle, the per-epoch log, the wall-clock sidecar, and the
//! resolved config. The log and bundle depend only on (resolved config,
//! seeds); wall-clock times live in a separate file so those artifacts are
//! byte-reproducible.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use mpgmerge::policy::save_bundle;
use mpgmerge::train::{train, train_single_agent, TrainError, TrainResult};

use crate::config::ExperimentConfig;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (TOML); omitted sections take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Clone, Copy)]
pub enum Mode {
    /// Every vehicle runs the shared network; ascend the total potential.
    MultiAgent,
    /// Only the ego learns, surroundings follow the car-following baseline.
    SingleAgent,
}

#[derive(Serialize)]
struct TimingLine {
    seed: u64,
    epoch: usize,
    wall_ms: u64,
}

pub fn run(args: TrainArgs, mode: Mode) -> anyhow::Result<u8> {
    let cfg = crate::load_config(args.config.as_deref())?;
    let train_cfg = cfg.train_config();

    let result = match mode {
        Mode::MultiAgent => train(&train_cfg),
        Mode::SingleAgent => train_single_agent(&train_cfg, &cfg.idm_params()),
    };
    let result = match result {
        Ok(r) => r,
        Err(TrainError::Diverged { seed, epoch }) => {
            eprintln!("training diverged: non-finite rollout at seed {seed}, epoch {epoch}");
            return Ok(1);
        }
        Err(e) => return Err(e.into()),
    };

    write_artifacts(&args.out, &cfg, &result)?;

    for run in &result.runs {
        let first = run.logs.first().map(|l| l.mean_objective).unwrap_or(f64::NAN);
        let last = run.logs.last().map(|l| l.mean_objective).unwrap_or(f64::NAN);
        println!("seed {}: mean objective {first:.4} -> {last:.4} over {} epochs", run.seed, run.logs.len());
    }
    println!("wrote params.json, log.jsonl, log.timing.jsonl, resolved_config.toml to {}", args.out.display());
    Ok(0)
}

fn write_artifacts(
    out: &std::path::Path,
    cfg: &ExperimentConfig,
    result: &TrainResult<f64>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let entries: Vec<(u64, &mpgmerge::policy::PolicyNet<f64>)> =
        result.runs.iter().map(|r| (r.seed, &r.net)).collect();
    std::fs::write(out.join("params.json"), save_bundle(&entries))?;

    let mut log = String::new();
    let mut timing = String::new();
    for run in &result.runs {
        for line in &run.logs {
            log.push_str(&serde_json::to_string(line)?);
            log.push('\n');
        }
        for (epoch, &wall_ms) in run.wall_ms.iter().enumerate() {
            timing.push_str(&serde_json::to_string(&TimingLine { seed: run.seed, epoch, wall_ms })?);
            timing.push('\n');
        }
    }
    std::fs::write(out.join("log.jsonl"), log)?;
    std::fs::write(out.join("log.timing.jsonl"), timing)?;
    std::fs::write(out.join("resolved_config.toml"), cfg.resolved_toml())?;
    Ok(())
}

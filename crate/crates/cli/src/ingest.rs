//! `ingest`: parse a delimited trajectory recording, smooth it, recompute
//! speeds, reassign lanes, and extract replay scenarios. Writes
//! `tracks.json`, `manifest.json` (consumed by `eval --others replay:…` and
//! `replay`), and the resolved config.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use mpgmerge::ingest::{build_replay_scenarios, parse_trajectory_text, process_tracks};

use crate::artifacts::{ReplayManifest, TracksFile};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Experiment config (TOML); omitted sections take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Delimited trajectory text (comma or whitespace separated)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

pub fn run(args: IngestArgs) -> anyhow::Result<u8> {
    let cfg = crate::load_config(args.config.as_deref())?;
    let ing = &cfg.ingest;

    let text = std::fs::read_to_string(&args.data)
        .with_context(|| format!("reading trajectory data {}", args.data.display()))?;
    let (raws, stats) =
        parse_trajectory_text::<f64>(&text, &cfg.column_map(), ing.frame_rate_hz, ing.feet_to_meters)
            .with_context(|| format!("parsing trajectory data {}", args.data.display()))?;

    let (tracks, excluded_short) =
        process_tracks(&raws, ing.window, ing.order, &ing.lane_boundaries)?;
    let build = build_replay_scenarios(&tracks, &cfg.replay_query())?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let tracks_file = TracksFile { stats, excluded_short, tracks };
    std::fs::write(
        args.out.join("tracks.json"),
        serde_json::to_string_pretty(&tracks_file)? + "\n",
    )?;
    let manifest = ReplayManifest {
        scenarios: build.scenarios,
        ego_ids: build.ego_ids,
        skipped: build.skipped,
    };
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    std::fs::write(args.out.join("resolved_config.toml"), cfg.resolved_toml())?;

    println!(
        "parsed {} rows ({} skipped, {} duplicate frames) into {} tracks",
        stats.rows_total,
        stats.rows_skipped,
        stats.duplicate_frames,
        tracks_file.tracks.len() + excluded_short,
    );
    println!(
        "smoothed {} tracks ({} excluded as shorter than window {}); {} replay scenarios, {} on-ramp vehicles skipped",
        tracks_file.tracks.len(),
        excluded_short,
        ing.window,
        manifest.scenarios.len(),
        manifest.skipped.len(),
    );
    println!("wrote tracks.json, manifest.json, resolved_config.toml to {}", args.out.display());
    Ok(0)
}

//! On-disk artifact schemas shared between subcommands: the replay-scenario
//! manifest (written by `ingest`, read by `eval`/`replay`), the processed
//! track file, evaluation reports, and the JSON-lines trace format.

use std::io::Write;

use serde::{Deserialize, Serialize};

use mpgmerge::eval::EvalReport;
use mpgmerge::ingest::{ParseStats, SkippedScenario, SmoothTrack};
use mpgmerge::rewards::{Lane, RewardBreakdown};
use mpgmerge::sim::{ReplayScenario, Termination, Trajectory};

/// `manifest.json`: replay scenarios extracted from recorded trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub scenarios: Vec<ReplayScenario<f64>>,
    /// Recorded vehicle id behind each scenario's ego, parallel to
    /// `scenarios`.
    pub ego_ids: Vec<u64>,
    pub skipped: Vec<SkippedScenario>,
}

/// `tracks.json`: smoothed tracks plus parse/exclusion bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracksFile {
    pub stats: ParseStats,
    /// Tracks dropped for being shorter than the smoothing window.
    pub excluded_short: usize,
    pub tracks: Vec<SmoothTrack<f64>>,
}

/// Where an evaluation battery came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatteryDesc {
    Sampled { n: usize, scenario_seed: u64 },
    Replay { manifest: String, n: usize },
}

/// One evaluated (seed, policy-pairing) entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    /// Training seed of the parameters involved; `null` when both sides are
    /// parameter-free.
    pub seed: Option<u64>,
    pub report: EvalReport,
}

/// Seed-averaged battery metrics (`Option` fields average the entries that
/// reported a value).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub collision_rate: f64,
    pub failure_rate: f64,
    pub avg_ego_speed: f64,
    pub avg_abs_accel: Option<f64>,
    pub avg_abs_jerk: Option<f64>,
    pub avg_min_gap: Option<f64>,
}

/// `report.json`: the full evaluation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub ego: String,
    pub others: String,
    pub battery: BatteryDesc,
    pub entries: Vec<ReportEntry>,
    pub mean: MeanMetrics,
}

impl ReportFile {
    pub fn new(
        ego: String,
        others: String,
        battery: BatteryDesc,
        entries: Vec<ReportEntry>,
    ) -> Self {
        let n = entries.len() as f64;
        let mean_opt = |f: fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<f64> = entries.iter().filter_map(|e| f(&e.report)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let mean = MeanMetrics {
            collision_rate: entries.iter().map(|e| e.report.collision_rate).sum::<f64>() / n,
            failure_rate: entries.iter().map(|e| e.report.failure_rate).sum::<f64>() / n,
            avg_ego_speed: entries.iter().map(|e| e.report.avg_ego_speed).sum::<f64>() / n,
            avg_abs_accel: mean_opt(|r| r.avg_abs_accel),
            avg_abs_jerk: mean_opt(|r| r.avg_abs_jerk),
            avg_min_gap: mean_opt(|r| r.avg_min_gap),
        };
        ReportFile { ego, others, battery, entries, mean }
    }
}

#[derive(Serialize)]
struct TraceStep<'a> {
    kind: &'static str,
    seed: Option<u64>,
    scenario: usize,
    step: usize,
    /// Simulation time at the start of the step [s].
    t: f64,
    x: &'a [f64],
    v: &'a [f64],
    lane: &'a [Lane],
    u: &'a [f64],
    r: &'a [RewardBreakdown<f64>],
    phi: f64,
}

#[derive(Serialize)]
struct TraceEnd<'a> {
    kind: &'static str,
    seed: Option<u64>,
    scenario: usize,
    steps: usize,
    termination: &'static str,
    /// Colliding vehicle pair, `null` on a clean horizon.
    pair: Option<(usize, usize)>,
    final_x: &'a [f64],
    final_v: &'a [f64],
    final_lane: &'a [Lane],
    merged: bool,
}

/// Appends one scenario's rollout to a JSON-lines trace stream: one `step`
/// record per simulation step, then one `end` record.
pub fn write_trace<W: Write>(
    w: &mut W,
    seed: Option<u64>,
    scenario: usize,
    traj: &Trajectory<f64>,
    dt: f64,
) -> anyhow::Result<()> {
    for (step, rec) in traj.steps.iter().enumerate() {
        let line = TraceStep {
            kind: "step",
            seed,
            scenario,
            step,
            t: step as f64 * dt,
            x: &rec.xs,
            v: &rec.vs,
            lane: &rec.lanes,
            u: &rec.us,
            r: &rec.rewards,
            phi: rec.potential,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    let (termination, pair) = match traj.termination {
        Termination::Horizon => ("horizon", None),
        Termination::Collision { pair, .. } => ("collision", Some(pair)),
    };
    let end = TraceEnd {
        kind: "end",
        seed,
        scenario,
        steps: traj.steps.len(),
        termination,
        pair,
        final_x: &traj.final_xs,
        final_v: &traj.final_vs,
        final_lane: &traj.final_lanes,
        merged: traj.final_lanes[0] == Lane::Target,
    };
    serde_json::to_writer(&mut *w, &end)?;
    w.write_all(b"\n")?;
    Ok(())
}

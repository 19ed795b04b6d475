//! `eval` / `replay`: roll an ego/surroundings policy pairing over a
//! scenario battery and write `report.json` (per-seed metrics plus their
//! seed average), `traces.jsonl`, and the resolved config.
//!
//! Policy arguments:
//!   --ego     net:PARAMS | idm | const          (bare path ≡ net:PATH)
//!   --others  ne:PARAMS | idm | const | replay:MANIFEST
//!
//! When both sides load parameter bundles, entries are paired by training
//! seed. The battery is sampled once from the config's evaluation seed and
//! shared by every entry, so metric differences between entries come from
//! the policies alone.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use clap::Args;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mpgmerge::eval::{evaluate_with_trajectories, EgoPolicy, EvalScenarios, SurroundPolicy};
use mpgmerge::policy::{load_bundle, PolicyNet};
use mpgmerge::scenario::sample_batch;
use mpgmerge::sim::SimParams;

use crate::artifacts::{write_trace, BatteryDesc, ReplayManifest, ReportEntry, ReportFile};
use crate::config::ExperimentConfig;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment config (TOML); omitted sections take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Ego controller: net:PARAMS, idm, or const
    #[arg(long, value_name = "POLICY")]
    ego: EgoSpec,

    /// Surrounding controller: ne:PARAMS, idm, const, or replay:MANIFEST
    #[arg(long, value_name = "POLICY")]
    others: OthersSpec,

    /// Battery size; overrides the config's evaluation scenario count
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Evaluate only the first N paired parameter entries
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Skip writing traces.jsonl
    #[arg(long)]
    no_traces: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Experiment config (TOML); omitted sections take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Scenario manifest produced by `ingest`
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,

    /// Ego controller: net:PARAMS, idm, or const
    #[arg(long, value_name = "POLICY", default_value = "idm")]
    ego: EgoSpec,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Skip writing traces.jsonl
    #[arg(long)]
    no_traces: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EgoSpec {
    Net(PathBuf),
    Idm,
    Const,
}

impl FromStr for EgoSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "idm" => Ok(EgoSpec::Idm),
            "const" => Ok(EgoSpec::Const),
            _ => {
                let path = s.strip_prefix("net:").unwrap_or(s);
                if path.is_empty() {
                    Err("expected net:PARAMS, idm, or const".into())
                } else {
                    Ok(EgoSpec::Net(path.into()))
                }
            }
        }
    }
}

impl fmt::Display for EgoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EgoSpec::Net(p) => write!(f, "net:{}", p.display()),
            EgoSpec::Idm => write!(f, "idm"),
            EgoSpec::Const => write!(f, "const"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OthersSpec {
    /// Every surrounding vehicle runs the bundled network (the
    /// traffic equilibrium a parameter-shared policy was trained toward).
    Ne(PathBuf),
    Idm,
    Const,
    Replay(PathBuf),
}

impl FromStr for OthersSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "idm" => Ok(OthersSpec::Idm),
            "const" => Ok(OthersSpec::Const),
            "replay" => Err("replay needs a manifest: replay:MANIFEST".into()),
            _ => {
                if let Some(path) = s.strip_prefix("replay:") {
                    if path.is_empty() {
                        return Err("replay needs a manifest: replay:MANIFEST".into());
                    }
                    return Ok(OthersSpec::Replay(path.into()));
                }
                let path = s.strip_prefix("ne:").unwrap_or(s);
                if path.is_empty() {
                    Err("expected ne:PARAMS, idm, const, or replay:MANIFEST".into())
                } else {
                    Ok(OthersSpec::Ne(path.into()))
                }
            }
        }
    }
}

impl fmt::Display for OthersSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OthersSpec::Ne(p) => write!(f, "ne:{}", p.display()),
            OthersSpec::Idm => write!(f, "idm"),
            OthersSpec::Const => write!(f, "const"),
            OthersSpec::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

/// One evaluation run: the parameters each side uses, tagged by the
/// training seed they came from.
struct PairedEntry {
    seed: Option<u64>,
    ego_net: Option<PolicyNet<f64>>,
    others_net: Option<PolicyNet<f64>>,
}

fn load_params(path: &Path) -> anyhow::Result<Vec<(u64, PolicyNet<f64>)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading parameter bundle {}", path.display()))?;
    let bundle = load_bundle::<f64>(&text)
        .with_context(|| format!("parsing parameter bundle {}", path.display()))?;
    anyhow::ensure!(!bundle.is_empty(), "parameter bundle {} is empty", path.display());
    Ok(bundle)
}

fn pair_entries(
    ego: Option<Vec<(u64, PolicyNet<f64>)>>,
    others: Option<Vec<(u64, PolicyNet<f64>)>>,
) -> anyhow::Result<Vec<PairedEntry>> {
    let entries = match (ego, others) {
        (Some(a), Some(b)) => a
            .into_iter()
            .map(|(seed, ego_net)| {
                let others_net = b
                    .iter()
                    .find(|(s, _)| *s == seed)
                    .map(|(_, n)| n.clone())
                    .with_context(|| format!("surroundings bundle has no entry for seed {seed}"))?;
                Ok(PairedEntry { seed: Some(seed), ego_net: Some(ego_net), others_net: Some(others_net) })
            })
            .collect::<anyhow::Result<Vec<_>>>()?,
        (Some(a), None) => a
            .into_iter()
            .map(|(seed, net)| PairedEntry { seed: Some(seed), ego_net: Some(net), others_net: None })
            .collect(),
        (None, Some(b)) => b
            .into_iter()
            .map(|(seed, net)| PairedEntry { seed: Some(seed), ego_net: None, others_net: Some(net) })
            .collect(),
        (None, None) => vec![PairedEntry { seed: None, ego_net: None, others_net: None }],
    };
    Ok(entries)
}

fn load_manifest(path: &Path) -> anyhow::Result<ReplayManifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario manifest {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario manifest {}", path.display()))
}

pub fn run_eval(args: EvalArgs) -> anyhow::Result<u8> {
    let cfg = crate::load_config(args.config.as_deref())?;
    let sim = cfg.sim_params();

    let ego_bundle = match &args.ego {
        EgoSpec::Net(p) => Some(load_params(p)?),
        _ => None,
    };
    let others_bundle = match &args.others {
        OthersSpec::Ne(p) => Some(load_params(p)?),
        _ => None,
    };
    let mut entries = pair_entries(ego_bundle, others_bundle)?;
    truncate_entries(&mut entries, args.seeds)?;

    let manifest;
    let scenes;
    let (scenarios, battery) = match &args.others {
        OthersSpec::Replay(path) => {
            manifest = load_manifest(path)?;
            let n = args.n.unwrap_or(manifest.scenarios.len());
            anyhow::ensure!(
                n <= manifest.scenarios.len(),
                "battery size {n} exceeds the manifest's {} scenarios",
                manifest.scenarios.len()
            );
            let battery = BatteryDesc::Replay { manifest: path.display().to_string(), n };
            (EvalScenarios::Replay(&manifest.scenarios[..n]), battery)
        }
        _ => {
            let n = args.n.unwrap_or(cfg.eval.n_scenarios);
            anyhow::ensure!(n > 0, "empty scenario battery (n = 0)");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.scenario_seed);
            scenes = sample_batch(&cfg.scenario_config(), n, &mut rng)?;
            let battery = BatteryDesc::Sampled { n, scenario_seed: cfg.eval.scenario_seed };
            (EvalScenarios::Sampled(&scenes), battery)
        }
    };

    run_battery(
        &cfg,
        &sim,
        &entries,
        &args.ego,
        &args.others,
        scenarios,
        battery,
        &args.out,
        !args.no_traces,
    )
}

pub fn run_replay(args: ReplayArgs) -> anyhow::Result<u8> {
    let cfg = crate::load_config(args.config.as_deref())?;
    let sim = cfg.sim_params();

    let ego_bundle = match &args.ego {
        EgoSpec::Net(p) => Some(load_params(p)?),
        _ => None,
    };
    let entries = pair_entries(ego_bundle, None)?;

    let manifest = load_manifest(&args.manifest)?;
    let battery = BatteryDesc::Replay {
        manifest: args.manifest.display().to_string(),
        n: manifest.scenarios.len(),
    };
    let others = OthersSpec::Replay(args.manifest.clone());

    run_battery(
        &cfg,
        &sim,
        &entries,
        &args.ego,
        &others,
        EvalScenarios::Replay(&manifest.scenarios),
        battery,
        &args.out,
        !args.no_traces,
    )
}

fn truncate_entries(entries: &mut Vec<PairedEntry>, seeds: Option<usize>) -> anyhow::Result<()> {
    if let Some(k) = seeds {
        anyhow::ensure!(k > 0, "--seeds must be at least 1");
        anyhow::ensure!(
            k <= entries.len(),
            "--seeds {k} asks for more entries than the {} available",
            entries.len()
        );
        entries.truncate(k);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_battery(
    cfg: &ExperimentConfig,
    sim: &SimParams<f64>,
    entries: &[PairedEntry],
    ego_spec: &EgoSpec,
    others_spec: &OthersSpec,
    scenarios: EvalScenarios<'_, f64>,
    battery: BatteryDesc,
    out: &Path,
    traces: bool,
) -> anyhow::Result<u8> {
    anyhow::ensure!(!scenarios.is_empty(), "empty scenario battery");
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let idm = cfg.idm_params();
    let mut report_entries = Vec::with_capacity(entries.len());
    let mut trace_file = if traces {
        Some(std::io::BufWriter::new(std::fs::File::create(out.join("traces.jsonl"))?))
    } else {
        None
    };

    for entry in entries {
        let ego = match ego_spec {
            EgoSpec::Net(_) => EgoPolicy::Net(entry.ego_net.as_ref().expect("paired above")),
            EgoSpec::Idm => EgoPolicy::Idm(&idm),
            EgoSpec::Const => EgoPolicy::ConstantSpeed,
        };
        let others = match others_spec {
            OthersSpec::Ne(_) => {
                SurroundPolicy::SharedNet(entry.others_net.as_ref().expect("paired above"))
            }
            OthersSpec::Idm => SurroundPolicy::Idm(&idm),
            OthersSpec::Const => SurroundPolicy::ConstantSpeed,
            OthersSpec::Replay(_) => SurroundPolicy::Replay,
        };

        let (report, trajectories) = evaluate_with_trajectories(ego, others, scenarios, sim)?;
        if let Some(w) = trace_file.as_mut() {
            for (scenario, traj) in trajectories.iter().enumerate() {
                write_trace(w, entry.seed, scenario, traj, sim.dt)?;
            }
        }
        let label = entry.seed.map_or_else(|| "-".into(), |s| s.to_string());
        println!(
            "seed {label}: collision_rate {:.3} failure_rate {:.3} avg_speed {:.2}",
            report.collision_rate, report.failure_rate, report.avg_ego_speed
        );
        report_entries.push(ReportEntry { seed: entry.seed, report });
    }
    if let Some(w) = trace_file.as_mut() {
        w.flush()?;
    }

    let file = ReportFile::new(ego_spec.to_string(), others_spec.to_string(), battery, report_entries);
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    std::fs::write(out.join("resolved_config.toml"), cfg.resolved_toml())?;
    println!(
        "mean: collision_rate {:.3} failure_rate {:.3} avg_speed {:.2} -> {}",
        file.mean.collision_rate,
        file.mean.failure_rate,
        file.mean.avg_ego_speed,
        out.join("report.json").display()
    );
    Ok(0)
}

//! Decentralized policy-gradient training of the shared merging policy.
//!
//! Every training epoch samples (or reuses, when frozen) a batch of initial
//! scenes, differentiates the rollout objective exactly with respect to the
//! shared network parameters on each scene ([`crate::bptt`]), averages the
//! per-scene gradients, clips the mean to an L2 ball, and takes one ascent
//! step. Two trainers share the loop:
//!
//! * [`train`] — cooperative: every vehicle runs the shared network and the
//!   objective is the discounted total potential;
//! * [`train_single_agent`] — baseline: only the ego runs the network,
//!   surrounding vehicles follow IDM, and the objective is the ego's own
//!   discounted return.
//!
//! Determinism: each seed derives three independent RNG streams (network
//! init, batch sampling, probe sampling), batches are sampled sequentially,
//! rollouts run in parallel but are reduced in batch order, so two runs with
//! the same configuration and seeds produce bit-identical parameters and
//! logs. Wall-clock times are kept out of [`EpochLog`] for that reason and
//! reported separately in [`SeedRun::wall_ms`].

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bptt::{rollout_with_gradient, Objective};
use crate::idm::IdmParams;
use crate::policy::{build_observation, NetGrads, ObservationSpec, PolicyNet, BASE_FEATURES};
use crate::scalar::{real, to_f64, Scalar};
use crate::scenario::{sample_batch, Scene, ScenarioConfig, ScenarioError};
use crate::sim::{rollout, total_potential, AgentController, SimError, SimParams};

/// RNG stream ids: one seed fans out into independent ChaCha streams so that
/// changing e.g. the probe size never perturbs the batch sequence.
const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_PROBE: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    /// The objective or gradient became non-finite.
    #[error("training diverged (non-finite objective or gradient) at seed {seed}, epoch {epoch}")]
    Diverged { seed: u64, epoch: usize },
}

/// Full specification of one training run (all seeds).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    /// Initial-scene distribution (also fixes the number of vehicles).
    pub scenario: ScenarioConfig<T>,
    pub sim: SimParams<T>,
    /// Hidden-layer widths of the policy network.
    pub hidden: [usize; 2],
    /// Leaky-ReLU negative-branch slope of the policy network.
    pub leaky_slope: T,
    /// Gradient-ascent step size.
    pub eta: T,
    pub epochs: usize,
    /// Scenes per epoch gradient estimate.
    pub batch_size: usize,
    /// Size of the frozen probe set behind the per-epoch action-difference
    /// convergence signal (0 disables the probe; the logged difference is
    /// then 0).
    pub probe_size: usize,
    /// L2 norm ceiling applied to the batch-mean gradient before the step.
    pub grad_clip: T,
    /// One independent run per seed.
    pub seeds: Vec<u64>,
    /// Reuse the first sampled batch every epoch instead of resampling.
    pub frozen_batch: bool,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            scenario: ScenarioConfig::default(),
            sim: SimParams::default(),
            hidden: [64, 64],
            leaky_slope: real(0.01),
            eta: real(1e-3),
            epochs: 60,
            batch_size: 32,
            probe_size: 256,
            grad_clip: real(10.0),
            seeds: vec![0, 1, 2],
            frozen_batch: false,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    /// Number of vehicles per scene under this scenario configuration.
    pub fn n_agents(&self) -> usize {
        1 + self.scenario.n_leaders + self.scenario.n_followers
    }

    /// Network input width: base features plus one identity slot per agent.
    pub fn input_dim(&self) -> usize {
        BASE_FEATURES + self.n_agents()
    }
}

/// One epoch's deterministic log record. Wall-clock time deliberately lives
/// elsewhere ([`SeedRun::wall_ms`]) so that serialized logs are reproducible
/// byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub seed: u64,
    pub epoch: usize,
    /// Batch-mean objective measured *before* this epoch's update (so entry
    /// 0 reports the freshly initialized network).
    pub mean_objective: f64,
    /// Mean squared raw-action difference on the probe set across this
    /// epoch's update; see [`mean_squared_action_difference`].
    pub action_difference: f64,
}

/// Outcome of one seed's run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun<T> {
    pub seed: u64,
    /// Parameters after the final epoch.
    pub net: PolicyNet<T>,
    /// Parameters before the first epoch (epoch-0 snapshot).
    pub initial_net: PolicyNet<T>,
    pub logs: Vec<EpochLog>,
    /// Per-epoch wall-clock durations [ms]; not reproducible, hence not in
    /// [`EpochLog`].
    pub wall_ms: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult<T> {
    /// One entry per configured seed, in order.
    pub runs: Vec<SeedRun<T>>,
}

/// Who runs the shared network during training.
#[derive(Clone, Copy)]
enum Roles<'a, T> {
    /// Every vehicle (cooperative training).
    AllShared,
    /// Only the ego; everyone else follows IDM.
    EgoNetOthersIdm(&'a IdmParams<T>),
}

fn build_controllers<'c, T: Scalar>(
    roles: Roles<'c, T>,
    net: &'c PolicyNet<T>,
    n: usize,
) -> Vec<AgentController<'c, T>> {
    (0..n)
        .map(|i| match roles {
            Roles::AllShared => AgentController::SharedNet(net),
            Roles::EgoNetOthersIdm(_) if i == 0 => AgentController::SharedNet(net),
            Roles::EgoNetOthersIdm(idm) => AgentController::Idm(idm),
        })
        .collect()
}

fn shared_agents<T>(roles: &Roles<'_, T>, n: usize) -> Vec<usize> {
    match roles {
        Roles::AllShared => (0..n).collect(),
        Roles::EgoNetOthersIdm(_) => vec![0],
    }
}

/// Raw (pre-projection) commands `g·tanh(net(o_i))` of `agents` on every
/// probe scene, flattened scene-major.
fn probe_actions<T: Scalar>(
    net: &PolicyNet<T>,
    probes: &[Scene<T>],
    agents: &[usize],
    obs: &ObservationSpec<T>,
) -> Result<Vec<T>, SimError> {
    let slots = net.input_dim.checked_sub(BASE_FEATURES).ok_or_else(|| {
        SimError::InvalidParams("network input narrower than the base feature block".into())
    })?;
    let mut out = Vec::with_capacity(probes.len() * agents.len());
    for scene in probes {
        for &i in agents {
            if i >= scene.n() {
                return Err(SimError::InvalidParams(format!(
                    "probe agent {i} out of range for {} vehicles",
                    scene.n()
                )));
            }
            let features =
                build_observation(&scene.xs, &scene.vs, &scene.lanes, i, obs).features(slots, obs)?;
            out.push(net.forward(&features)?);
        }
    }
    Ok(out)
}

fn msad_from<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return T::zero();
    }
    let n = real::<T>(a.len() as f64);
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / n
}

/// Mean squared difference of two networks' raw commands over a probe scene
/// set, restricted to `agents`.
///
/// "Raw" means the pre-safety-projection output `g·tanh(·)`: the projection
/// is scene-coupled across agents and can mask parameter movement near its
/// bounds, while this probe asks whether the *policy itself* has stopped
/// changing the behavior it commands. Returns 0 for an empty probe set.
pub fn mean_squared_action_difference<T: Scalar>(
    a: &PolicyNet<T>,
    b: &PolicyNet<T>,
    probes: &[Scene<T>],
    agents: &[usize],
    obs: &ObservationSpec<T>,
) -> Result<T, SimError> {
    let ua = probe_actions(a, probes, agents, obs)?;
    let ub = probe_actions(b, probes, agents, obs)?;
    if ua.len() != ub.len() {
        return Err(SimError::InvalidParams(
            "probe action counts disagree between the two networks".into(),
        ));
    }
    Ok(msad_from(&ua, &ub))
}

/// Batch-mean discounted total potential of the all-shared policy on a fixed
/// scene set (no gradients; used to measure training progress on a held-out
/// or frozen batch).
pub fn mean_total_potential<T: Scalar>(
    net: &PolicyNet<T>,
    scenes: &[Scene<T>],
    sim: &SimParams<T>,
) -> Result<T, SimError> {
    if scenes.is_empty() {
        return Err(SimError::InvalidParams("empty scene set".into()));
    }
    let vals: Result<Vec<T>, SimError> = scenes
        .par_iter()
        .map(|s| {
            let ctrls: Vec<AgentController<'_, T>> =
                (0..s.n()).map(|_| AgentController::SharedNet(net)).collect();
            rollout(s, &ctrls, sim).map(|t| total_potential(&t, sim.gamma))
        })
        .collect();
    let vals = vals?;
    let n = real::<T>(vals.len() as f64);
    Ok(vals.iter().copied().sum::<T>() / n)
}

fn validate_config<T: Scalar>(cfg: &TrainConfig<T>) -> Result<(), TrainError> {
    let bad = |m: &str| Err(TrainError::Config(m.into()));
    if cfg.seeds.is_empty() {
        return bad("at least one seed is required");
    }
    if cfg.batch_size == 0 {
        return bad("batch_size must be at least 1");
    }
    if cfg.hidden[0] == 0 || cfg.hidden[1] == 0 {
        return bad("hidden widths must be positive");
    }
    if !(cfg.eta.is_finite() && cfg.eta >= T::zero()) {
        return bad("eta must be finite and non-negative");
    }
    if !(cfg.leaky_slope.is_finite() && cfg.leaky_slope >= T::zero() && cfg.leaky_slope < T::one())
    {
        return bad("leaky_slope must lie in [0, 1)");
    }
    if !(cfg.grad_clip.is_finite() && cfg.grad_clip > T::zero()) {
        return bad("grad_clip must be positive");
    }
    cfg.sim.validate()?;
    Ok(())
}

fn run_seed<T: Scalar>(
    cfg: &TrainConfig<T>,
    roles: Roles<'_, T>,
    objective: Objective,
    seed: u64,
) -> Result<SeedRun<T>, TrainError> {
    let n_agents = cfg.n_agents();

    let mut rng_init = ChaCha8Rng::seed_from_u64(seed);
    rng_init.set_stream(STREAM_INIT);
    let mut net = PolicyNet::random(cfg.input_dim(), cfg.hidden, &mut rng_init);
    net.leaky_slope = cfg.leaky_slope;
    // The command bound is the same physical limit the safety projection and
    // the dynamics enforce.
    net.action_scale = cfg.sim.accel_bound;
    let initial_net = net.clone();

    let mut rng_batch = ChaCha8Rng::seed_from_u64(seed);
    rng_batch.set_stream(STREAM_BATCH);
    let mut rng_probe = ChaCha8Rng::seed_from_u64(seed);
    rng_probe.set_stream(STREAM_PROBE);

    let probes = sample_batch(&cfg.scenario, cfg.probe_size, &mut rng_probe)?;
    let shared = shared_agents(&roles, n_agents);
    let mut prev_actions = probe_actions(&net, &probes, &shared, &cfg.sim.obs)?;

    let frozen: Option<Vec<Scene<T>>> = if cfg.frozen_batch {
        Some(sample_batch(&cfg.scenario, cfg.batch_size, &mut rng_batch)?)
    } else {
        None
    };

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut wall_ms = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let fresh;
        let batch: &[Scene<T>] = match &frozen {
            Some(b) => b,
            None => {
                fresh = sample_batch(&cfg.scenario, cfg.batch_size, &mut rng_batch)?;
                &fresh
            }
        };

        // Per-scene exact gradients in parallel; the reduction below runs in
        // batch order, keeping the mean bit-reproducible.
        let results = batch
            .par_iter()
            .map(|scene| {
                let ctrls = build_controllers(roles, &net, scene.n());
                rollout_with_gradient(scene, &ctrls, &net, &cfg.sim, objective)
            })
            .collect::<Result<Vec<_>, SimError>>()
            .map_err(|e| match e {
                SimError::NonFinite => TrainError::Diverged { seed, epoch },
                other => TrainError::Sim(other),
            })?;

        let mut grad = NetGrads::zeros_like(&net);
        let mut obj_sum = T::zero();
        for r in &results {
            grad.add(&r.grads);
            obj_sum = obj_sum + r.objective;
        }
        let m = real::<T>(batch.len() as f64);
        grad.scale(T::one() / m);
        let mean_objective = obj_sum / m;
        if !mean_objective.is_finite() || !grad.is_finite() {
            return Err(TrainError::Diverged { seed, epoch });
        }

        let norm = grad.l2_norm();
        if norm > cfg.grad_clip {
            grad.scale(cfg.grad_clip / norm);
        }
        net.ascend(&grad, cfg.eta);

        let new_actions = probe_actions(&net, &probes, &shared, &cfg.sim.obs)?;
        let action_difference = msad_from(&prev_actions, &new_actions);
        prev_actions = new_actions;

        logs.push(EpochLog {
            seed,
            epoch,
            mean_objective: to_f64(mean_objective),
            action_difference: to_f64(action_difference),
        });
        wall_ms.push(t0.elapsed().as_millis() as u64);
    }

    Ok(SeedRun { seed, net, initial_net, logs, wall_ms })
}

/// Cooperative training: every vehicle runs the shared network and the
/// ascent direction is the exact gradient of the batch-mean discounted total
/// potential.
pub fn train<T: Scalar>(cfg: &TrainConfig<T>) -> Result<TrainResult<T>, TrainError> {
    validate_config(cfg)?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, Roles::AllShared, Objective::DiscountedPotential, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainResult { runs })
}

/// Single-agent baseline: the ego runs the network, every surrounding
/// vehicle follows `idm`, and the ascent direction is the exact gradient of
/// the ego's own discounted return.
pub fn train_single_agent<T: Scalar>(
    cfg: &TrainConfig<T>,
    idm: &IdmParams<T>,
) -> Result<TrainResult<T>, TrainError> {
    validate_config(cfg)?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, Roles::EgoNetOthersIdm(idm), Objective::AgentReturn(0), s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainResult { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::MergeRewardSpec;
    use crate::scenario::ScenarioConfig;

    fn small_cfg() -> TrainConfig<f64> {
        let mut cfg = TrainConfig::<f64>::default();
        cfg.scenario = ScenarioConfig {
            n_leaders: 1,
            n_followers: 1,
            ego_x_range: (80.0, 100.0),
            ego_v_range: (8.0, 14.0),
            lane_v_range: (8.0, 16.0),
            gap_range: (15.0, 40.0),
            ..ScenarioConfig::default()
        };
        cfg.sim.n_steps = 20;
        cfg.hidden = [8, 8];
        cfg.eta = 1e-3;
        cfg.epochs = 3;
        cfg.batch_size = 4;
        cfg.probe_size = 6;
        cfg.seeds = vec![7];
        cfg
    }

    #[test]
    fn zero_step_size_changes_nothing() {
        let mut cfg = small_cfg();
        cfg.eta = 0.0;
        cfg.frozen_batch = true;
        let result = train(&cfg).unwrap();
        let run = &result.runs[0];
        assert_eq!(run.net, run.initial_net);
        assert_eq!(run.logs.len(), 3);
        assert_eq!(run.wall_ms.len(), 3);
        for log in &run.logs {
            assert_eq!(log.action_difference, 0.0);
            assert_eq!(log.mean_objective, run.logs[0].mean_objective);
        }
    }

    #[test]
    fn frozen_batch_objective_is_monotone_for_small_steps() {
        let mut cfg = small_cfg();
        cfg.eta = 1e-4;
        cfg.epochs = 12;
        cfg.frozen_batch = true;
        let result = train(&cfg).unwrap();
        let logs = &result.runs[0].logs;
        for w in logs.windows(2) {
            assert!(
                w[1].mean_objective >= w[0].mean_objective - 1e-10,
                "objective decreased across an update: {} -> {}",
                w[0].mean_objective,
                w[1].mean_objective
            );
        }
        assert!(
            last_objective(logs) > logs[0].mean_objective,
            "objective made no progress at all"
        );
    }

    fn last_objective(logs: &[EpochLog]) -> f64 {
        logs.last().unwrap().mean_objective
    }

    #[test]
    fn training_is_bit_reproducible() {
        let mut cfg = small_cfg();
        cfg.epochs = 2;
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.runs.len(), b.runs.len());
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            assert_eq!(ra.net, rb.net);
            assert_eq!(ra.initial_net, rb.initial_net);
            assert_eq!(ra.logs, rb.logs);
        }
    }

    #[test]
    fn single_agent_learns_to_track_the_desired_speed() {
        let mut cfg = TrainConfig::<f64>::default();
        cfg.scenario = ScenarioConfig {
            n_leaders: 0,
            n_followers: 0,
            ego_x_range: (50.0, 50.0),
            ego_v_range: (6.0, 6.0),
            ..ScenarioConfig::default()
        };
        cfg.sim.n_steps = 40;
        cfg.sim.rewards = MergeRewardSpec {
            w_comfort: 0.0,
            w_same_lane: 0.0,
            w_conflict: 0.0,
            ..MergeRewardSpec::default()
        };
        cfg.hidden = [8, 8];
        cfg.eta = 5e-3;
        cfg.epochs = 600;
        cfg.batch_size = 1;
        cfg.probe_size = 1;
        cfg.seeds = vec![0];
        let idm = IdmParams::<f64>::default();
        let result = train_single_agent(&cfg, &idm).unwrap();
        let run = &result.runs[0];
        assert!(
            last_objective(&run.logs) > run.logs[0].mean_objective,
            "ego return did not improve"
        );

        // Roll the trained policy out and check it actually reaches v_d.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        rng.set_stream(STREAM_PROBE);
        let scene = crate::scenario::sample_scene(&cfg.scenario, &mut rng).unwrap();
        let ctrls = vec![AgentController::SharedNet(&run.net)];
        let traj = rollout(&scene, &ctrls, &cfg.sim).unwrap();
        let v_end = traj.final_vs[0];
        assert!(
            (v_end - cfg.sim.rewards.v_d).abs() < 0.5,
            "final speed {v_end} not within 0.5 of the desired 15"
        );
    }

    #[test]
    fn action_difference_probe_matches_hand_value() {
        let obs = ObservationSpec::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scenario = small_cfg().scenario;
        let probes = sample_batch(&scenario, 4, &mut rng).unwrap();
        let agents: Vec<usize> = (0..3).collect();

        let a = PolicyNet::<f64>::zeros(BASE_FEATURES + 3, [8, 8]);
        let mut b = a.clone();
        b.b3 = 0.3;

        // With all weights zero the command is scene-independent: u =
        // g·tanh(b3), so the mean squared difference is exactly (g·tanh 0.3)².
        let expected = (a.action_scale * 0.3f64.tanh()).powi(2);
        let got = mean_squared_action_difference(&a, &b, &probes, &agents, &obs).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

        let sym = mean_squared_action_difference(&b, &a, &probes, &agents, &obs).unwrap();
        assert_eq!(got, sym);

        let zero = mean_squared_action_difference(&a, &a, &probes, &agents, &obs).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let mut cfg = small_cfg();
        cfg.batch_size = 0;
        assert!(matches!(train(&cfg), Err(TrainError::Config(_))));

        let mut cfg = small_cfg();
        cfg.seeds.clear();
        assert!(matches!(train(&cfg), Err(TrainError::Config(_))));

        let mut cfg = small_cfg();
        cfg.eta = f64::NAN;
        assert!(matches!(train(&cfg), Err(TrainError::Config(_))));
    }
}

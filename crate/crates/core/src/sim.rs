//! Deterministic merge rollouts: steps every vehicle with its controller
//! (shared policy network behind a safety-feasibility projection, IDM,
//! constant speed, or recorded replay data), records per-step states,
//! actions, rewards, and potential, and terminates on collision or horizon.
//!
//! Geometry conventions: motion is purely longitudinal (zero steering, zero
//! heading); lanes are lateral offsets — the target lane at `y = 0`, the
//! on-ramp at `y = ramp_y`. A ramp vehicle whose position reaches the
//! conflict point `x_c` is reclassified to the target lane and its lateral
//! offset snaps to 0; from that moment it can physically collide with
//! target-lane traffic, which is exactly the hazard the merge rewards
//! penalize in advance. The snap is also applied to the initial scene so
//! lane labels always agree with the geometry.
//!
//! Collision is checked on the state *before* each step (an initially
//! overlapping scene yields a zero-step trajectory) and once more on the
//! state after the final step.
//!
//! Replay vehicles take their successive states from recorded data (constant
//! speed extrapolation past the end of the recording); their implied
//! acceleration `(v_next − v_now)/dt` is recorded as their action so comfort
//! terms and traces stay meaningful.

use crate::dynamics::{
    detect_collision, feasible_action_interval, step_vehicle, DynamicsError, FeasibilityParams,
    FeasibleSet, VehicleAction, VehicleGeometry, VehicleState,
};
use crate::idm::{idm_acceleration, IdmParams};
use crate::policy::{
    build_observation, neighbors_in_lane, NetCache, ObservationSpec, PolicyError, PolicyNet,
    BASE_FEATURES,
};
use crate::rewards::{agent_reward, potential_function, Lane, MergeRewardSpec, RewardBreakdown};
use crate::scalar::{real, Scalar};
use crate::scenario::Scene;

/// Errors from rollout configuration or execution.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation parameters invalid: {0}")]
    InvalidParams(String),
    #[error("scene has {agents} agents but {controllers} controllers were supplied")]
    ControllerMismatch { agents: usize, controllers: usize },
    #[error("initial scene is inconsistent (mismatched lengths, non-finite values, or negative speeds)")]
    BadScene,
    #[error("replay track for agent {agent} is empty")]
    EmptyReplay { agent: usize },
    #[error("replay agent {agent} must be on the target lane")]
    ReplayLane { agent: usize },
    #[error("all shared-net controllers must reference the differentiated network")]
    ForeignNet,
    #[error("gradient or objective became non-finite")]
    NonFinite,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Recorded longitudinal trace of one vehicle, sampled at the simulation
/// step (`x[t]`, `v[t]` are the state at the start of step `t`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplayTrack<T> {
    pub x: Vec<T>,
    pub v: Vec<T>,
}

/// One recorded merge situation extracted from trajectory data: the ego's
/// initial state plus open-loop tracks for the surrounding vehicles.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplayScenario<T> {
    pub ego_x0: T,
    pub ego_v0: T,
    /// Sampling interval of the tracks [s]; must equal the simulation step.
    pub dt: T,
    pub tracks: Vec<ReplayTrack<T>>,
}

impl<T: Scalar> ReplayScenario<T> {
    /// Initial scene: ego (index 0, on-ramp) plus one target-lane vehicle
    /// per track at its first recorded sample.
    pub fn initial_scene(&self) -> Scene<T> {
        let mut xs = vec![self.ego_x0];
        let mut vs = vec![self.ego_v0];
        let mut lanes = vec![Lane::Ramp];
        for tr in &self.tracks {
            xs.push(tr.x[0]);
            vs.push(tr.v[0]);
            lanes.push(Lane::Target);
        }
        Scene { xs, vs, lanes }
    }
}

/// Per-agent controller. All `SharedNet` agents must reference the *same*
/// network when the rollout is differentiated (parameter sharing).
#[derive(Debug, Clone, Copy)]
pub enum AgentController<'a, T> {
    /// Shared policy network behind the safety-feasibility projection.
    SharedNet(&'a PolicyNet<T>),
    /// IDM car-following on the same-lane leader, clamped to the action
    /// bound. IDM models human drivers, so it is *not* run through the
    /// network's feasibility projection — its own braking rule is the model.
    Idm(&'a IdmParams<T>),
    /// Zero acceleration.
    ConstantSpeed,
    /// Recorded states, open loop.
    Replay(&'a ReplayTrack<T>),
}

/// Rollout parameters: integration, horizon, safety projection, rewards,
/// observations, and lane geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams<T> {
    /// Integration step [s].
    pub dt: T,
    /// Horizon in steps.
    pub n_steps: usize,
    /// Speed ceiling [m/s].
    pub v_max: T,
    /// Discount factor per step for total-potential/total-reward objectives.
    pub gamma: T,
    /// Safety time-to-collision threshold of the feasibility projection [s].
    pub tau_s: T,
    /// Acceleration bound [m/s²].
    pub accel_bound: T,
    pub geometry: VehicleGeometry<T>,
    pub rewards: MergeRewardSpec<T>,
    pub obs: ObservationSpec<T>,
    /// Lateral offset of the on-ramp [m]; the target lane sits at 0.
    pub ramp_y: T,
}

impl<T: Scalar> Default for SimParams<T> {
    fn default() -> Self {
        SimParams {
            dt: real(0.1),
            n_steps: 300,
            v_max: real(30.0),
            gamma: real(0.99),
            tau_s: real(3.0),
            accel_bound: real(crate::dynamics::STANDARD_GRAVITY),
            geometry: VehicleGeometry::default(),
            rewards: MergeRewardSpec::default(),
            obs: ObservationSpec::default(),
            ramp_y: real(3.5),
        }
    }
}

impl<T: Scalar> SimParams<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidParams(msg.into()));
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return bad("dt must be positive");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if !(self.v_max.is_finite() && self.v_max > T::zero()) {
            return bad("v_max must be positive");
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau_s.is_finite() && self.tau_s > T::zero()) {
            return bad("tau_s must be positive");
        }
        if !(self.accel_bound.is_finite() && self.accel_bound > T::zero()) {
            return bad("accel_bound must be positive");
        }
        self.geometry.validate().map_err(SimError::Dynamics)?;
        if self.obs.x_c != self.rewards.x_c {
            return bad("observation and reward conflict points disagree");
        }
        if !(self.obs.pos_scale > T::zero() && self.obs.speed_scale > T::zero()) {
            return bad("observation scales must be positive");
        }
        // Ramp and target lanes must be laterally separated by more than a
        // body width, otherwise pre-merge vehicles overlap across lanes.
        if self.ramp_y.abs() <= self.geometry.body_width {
            return bad("ramp_y must exceed the body width");
        }
        Ok(())
    }

    /// Feasibility-projection parameters consistent with the simulation.
    pub fn feasibility(&self) -> FeasibilityParams<T> {
        FeasibilityParams {
            dt: self.dt,
            tau_s: self.tau_s,
            v_max: self.v_max,
            accel_bound: self.accel_bound,
        }
    }

    pub fn lane_y(&self, lane: Lane) -> T {
        match lane {
            Lane::Ramp => self.ramp_y,
            Lane::Target => T::zero(),
        }
    }
}

/// Snapshot of step `t`: the state all controllers acted on, the actions
/// they produced, and the resulting rewards and potential.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub xs: Vec<T>,
    pub vs: Vec<T>,
    pub lanes: Vec<Lane>,
    pub us: Vec<T>,
    pub rewards: Vec<RewardBreakdown<T>>,
    pub potential: T,
}

/// Why a rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Ran the full horizon without collision.
    Horizon,
    /// Bounding boxes of `pair` overlapped after `step` completed steps
    /// (`step` equals the number of recorded steps; 0 means the initial
    /// scene already overlapped).
    Collision { step: usize, pair: (usize, usize) },
}

/// Recorded rollout: one [`StepRecord`] per completed step plus the final
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<StepRecord<T>>,
    pub final_xs: Vec<T>,
    pub final_vs: Vec<T>,
    pub final_lanes: Vec<Lane>,
    pub termination: Termination,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Discounted sum of the per-step potential, `Σ_t γ^t · φ_t` (0 for an
/// empty trajectory).
pub fn total_potential<T: Scalar>(traj: &Trajectory<T>, gamma: T) -> T {
    let mut acc = T::zero();
    let mut g = T::one();
    for s in &traj.steps {
        acc = acc + g * s.potential;
        g = g * gamma;
    }
    acc
}

/// Discounted sum of one agent's reward, `Σ_t γ^t · r_i,t`.
pub fn total_agent_reward<T: Scalar>(traj: &Trajectory<T>, agent: usize, gamma: T) -> T {
    let mut acc = T::zero();
    let mut g = T::one();
    for s in &traj.steps {
        acc = acc + g * s.rewards[agent].total;
        g = g * gamma;
    }
    acc
}

/// Recorded state of a replay track at step `t`, extrapolating at constant
/// speed past the end of the recording.
pub(crate) fn replay_sample<T: Scalar>(track: &ReplayTrack<T>, t: usize, dt: T) -> (T, T) {
    let last = track.x.len() - 1;
    if t <= last {
        (track.x[t], track.v[t])
    } else {
        let k = real::<T>((t - last) as f64);
        (track.x[last] + track.v[last] * dt * k, track.v[last])
    }
}

/// Everything the action computation of one agent produced, kept so the
/// backward pass can re-walk the identical pipeline.
#[derive(Debug, Clone)]
pub(crate) enum ActionInfo<T> {
    Net {
        u: T,
        raw: T,
        passthrough: bool,
        feasible: FeasibleSet<T>,
        features: Vec<T>,
        cache: NetCache<T>,
        leader: Option<usize>,
        follower: Option<usize>,
    },
    Idm {
        u: T,
        leader: Option<usize>,
    },
    Constant,
    Replay {
        u: T,
    },
}

impl<T: Scalar> ActionInfo<T> {
    pub(crate) fn u(&self) -> T {
        match self {
            ActionInfo::Net { u, .. } | ActionInfo::Idm { u, .. } | ActionInfo::Replay { u } => *u,
            ActionInfo::Constant => T::zero(),
        }
    }
}

/// Net bumper-to-bumper gap between a vehicle and its leader.
pub(crate) fn net_gap<T: Scalar>(x_rear: T, x_front: T, geom: &VehicleGeometry<T>) -> T {
    x_front - x_rear - geom.body_length
}

/// Computes agent `i`'s action at the current state, exposing every
/// intermediate. This single pipeline is shared by the forward rollout and
/// the backward pass so they cannot drift apart.
pub(crate) fn action_pipeline<T: Scalar>(
    i: usize,
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    controllers: &[AgentController<'_, T>],
    params: &SimParams<T>,
    t: usize,
) -> Result<ActionInfo<T>, SimError> {
    match controllers[i] {
        AgentController::SharedNet(net) => {
            let obs = build_observation(xs, vs, lanes, i, &params.obs);
            let slots = net.input_dim - BASE_FEATURES;
            let features = obs.features(slots, &params.obs)?;
            let (raw, cache) = net.forward_cached(&features)?;
            let (leader, follower) = neighbors_in_lane(xs, lanes, i);
            let mk_state = |j: usize| VehicleState {
                x: xs[j],
                y: params.lane_y(lanes[j]),
                v: vs[j],
                phi: T::zero(),
            };
            let ego = mk_state(i);
            let lead_state = leader.map(mk_state);
            let fol_state = follower.map(mk_state);
            let feasible = feasible_action_interval(
                &ego,
                lead_state.as_ref(),
                fol_state.as_ref(),
                &params.feasibility(),
            )?;
            let proj = feasible.project(raw);
            Ok(ActionInfo::Net {
                u: proj.u,
                raw,
                passthrough: proj.passthrough,
                feasible,
                features,
                cache,
                leader,
                follower,
            })
        }
        AgentController::Idm(idm) => {
            let (leader, _) = neighbors_in_lane(xs, lanes, i);
            let (gap, dv) = match leader {
                Some(l) => (net_gap(xs[i], xs[l], &params.geometry), vs[i] - vs[l]),
                None => (T::infinity(), T::zero()),
            };
            let u = idm_acceleration(gap, vs[i], dv, idm);
            Ok(ActionInfo::Idm { u, leader })
        }
        AgentController::ConstantSpeed => Ok(ActionInfo::Constant),
        AgentController::Replay(track) => {
            let (_, v_now) = replay_sample(track, t, params.dt);
            let (_, v_next) = replay_sample(track, t + 1, params.dt);
            Ok(ActionInfo::Replay { u: (v_next - v_now) / params.dt })
        }
    }
}

fn check_setup<T: Scalar>(
    scene0: &Scene<T>,
    controllers: &[AgentController<'_, T>],
    params: &SimParams<T>,
) -> Result<(), SimError> {
    params.validate()?;
    if !scene0.is_consistent() {
        return Err(SimError::BadScene);
    }
    if controllers.len() != scene0.n() {
        return Err(SimError::ControllerMismatch {
            agents: scene0.n(),
            controllers: controllers.len(),
        });
    }
    for (i, c) in controllers.iter().enumerate() {
        if let AgentController::Replay(track) = c {
            if track.x.is_empty() || track.x.len() != track.v.len() {
                return Err(SimError::EmptyReplay { agent: i });
            }
            if scene0.lanes[i] != Lane::Target {
                return Err(SimError::ReplayLane { agent: i });
            }
        }
    }
    Ok(())
}

/// Runs a full deterministic rollout.
pub fn rollout<T: Scalar>(
    scene0: &Scene<T>,
    controllers: &[AgentController<'_, T>],
    params: &SimParams<T>,
) -> Result<Trajectory<T>, SimError> {
    check_setup(scene0, controllers, params)?;
    let n = scene0.n();
    let mut xs = scene0.xs.clone();
    let mut vs = scene0.vs.clone();
    let mut lanes = scene0.lanes.clone();
    // Lane labels must agree with the geometry from the start.
    snap_lanes(&mut lanes, &xs, params);
    let mut ys: Vec<T> = lanes.iter().map(|&l| params.lane_y(l)).collect();

    let mut steps: Vec<StepRecord<T>> = Vec::with_capacity(params.n_steps);
    let mut termination = Termination::Horizon;

    for t in 0..params.n_steps {
        let states: Vec<VehicleState<T>> = (0..n)
            .map(|i| VehicleState { x: xs[i], y: ys[i], v: vs[i], phi: T::zero() })
            .collect();
        if let Some(pair) = detect_collision(&states, &params.geometry) {
            termination = Termination::Collision { step: t, pair };
            break;
        }

        let mut us = vec![T::zero(); n];
        for i in 0..n {
            us[i] = action_pipeline(i, &xs, &vs, &lanes, controllers, params, t)?.u();
        }

        let rewards: Vec<RewardBreakdown<T>> = (0..n)
            .map(|i| agent_reward(&xs, &vs, &lanes, us[i], i, &params.rewards))
            .collect();
        let potential = potential_function(&xs, &vs, &lanes, &us, &params.rewards);
        steps.push(StepRecord {
            xs: xs.clone(),
            vs: vs.clone(),
            lanes: lanes.clone(),
            us: us.clone(),
            rewards,
            potential,
        });

        for i in 0..n {
            if let AgentController::Replay(track) = controllers[i] {
                let (x, v) = replay_sample(track, t + 1, params.dt);
                xs[i] = x;
                vs[i] = v;
            } else {
                let st = VehicleState { x: xs[i], y: ys[i], v: vs[i], phi: T::zero() };
                let out = step_vehicle(
                    &st,
                    &VehicleAction::longitudinal(us[i]),
                    &params.geometry,
                    params.dt,
                    params.v_max,
                )?;
                xs[i] = out.state.x;
                vs[i] = out.state.v;
            }
        }
        let before = lanes.clone();
        snap_lanes(&mut lanes, &xs, params);
        for i in 0..n {
            if lanes[i] != before[i] {
                ys[i] = params.lane_y(lanes[i]);
            }
        }
    }

    if termination == Termination::Horizon {
        let states: Vec<VehicleState<T>> = (0..n)
            .map(|i| VehicleState { x: xs[i], y: ys[i], v: vs[i], phi: T::zero() })
            .collect();
        if let Some(pair) = detect_collision(&states, &params.geometry) {
            termination = Termination::Collision { step: steps.len(), pair };
        }
    }

    Ok(Trajectory { steps, final_xs: xs, final_vs: vs, final_lanes: lanes, termination })
}

/// Ramp vehicles at or beyond the conflict point are reclassified to the
/// target lane.
fn snap_lanes<T: Scalar>(lanes: &mut [Lane], xs: &[T], params: &SimParams<T>) {
    for (lane, &x) in lanes.iter_mut().zip(xs) {
        if *lane == Lane::Ramp && x >= params.rewards.x_c {
            *lane = Lane::Target;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scene, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> SimParams<f64> {
        SimParams { n_steps: 50, ..SimParams::default() }
    }

    fn scene(xs: Vec<f64>, vs: Vec<f64>, lanes: Vec<Lane>) -> Scene<f64> {
        Scene { xs, vs, lanes }
    }

    #[test]
    fn zero_policy_constant_speeds_full_horizon() {
        let net = PolicyNet::<f64>::zeros(BASE_FEATURES + 2, [4, 4]);
        let s0 = scene(
            vec![50.0, 120.0],
            vec![12.0, 15.0],
            vec![Lane::Ramp, Lane::Target],
        );
        let p = params();
        let traj = rollout(&s0, &[AgentController::SharedNet(&net), AgentController::ConstantSpeed], &p).unwrap();
        assert_eq!(traj.termination, Termination::Horizon);
        assert_eq!(traj.len(), 50);
        for rec in &traj.steps {
            assert_eq!(rec.us, vec![0.0, 0.0]);
            assert_eq!(rec.vs, vec![12.0, 15.0]);
        }
        assert_eq!(traj.final_vs, vec![12.0, 15.0]);
        assert!((traj.final_xs[0] - (50.0 + 12.0 * 0.1 * 50.0)).abs() < 1e-9);
    }

    #[test]
    fn initially_overlapping_scene_terminates_immediately() {
        let s0 = scene(
            vec![100.0, 102.0],
            vec![10.0, 10.0],
            vec![Lane::Target, Lane::Target],
        );
        let traj = rollout(
            &s0,
            &[AgentController::ConstantSpeed, AgentController::ConstantSpeed],
            &params(),
        )
        .unwrap();
        assert_eq!(traj.len(), 0);
        assert_eq!(traj.termination, Termination::Collision { step: 0, pair: (0, 1) });
        assert_eq!(total_potential(&traj, 0.99), 0.0);
    }

    #[test]
    fn collision_appearing_at_the_final_state_is_flagged() {
        // Gap 5.2 m > 4.5 m body length: clear initially; after one step the
        // rear vehicle has closed 1.0 m → overlap at the final state.
        let s0 = scene(vec![0.0, 5.2], vec![10.0, 0.0], vec![Lane::Target, Lane::Target]);
        let p = SimParams { n_steps: 1, ..params() };
        let traj = rollout(
            &s0,
            &[AgentController::ConstantSpeed, AgentController::ConstantSpeed],
            &p,
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.termination, Termination::Collision { step: 1, pair: (0, 1) });
    }

    #[test]
    fn idm_platoon_never_collides_and_keeps_gaps() {
        let idm = IdmParams::<f64>::default();
        let s0 = scene(
            vec![0.0, 25.0, 50.0, 75.0, 100.0],
            vec![20.0, 5.0, 15.0, 8.0, 12.0],
            vec![Lane::Target; 5],
        );
        let p = SimParams { n_steps: 200, ..params() };
        let controllers = vec![AgentController::Idm(&idm); 5];
        let traj = rollout(&s0, &controllers, &p).unwrap();
        assert_eq!(traj.termination, Termination::Horizon);
        for rec in &traj.steps {
            for i in 0..4 {
                let gap = net_gap(rec.xs[i], rec.xs[i + 1], &p.geometry);
                assert!(gap > idm.s0 / 2.0, "gap {gap} collapsed below s0/2");
            }
        }
    }

    #[test]
    fn feasibility_projection_caps_an_aggressive_net() {
        // Net with a large positive bias: raw ≈ +9.81·tanh(5).
        let mut net = PolicyNet::<f64>::zeros(BASE_FEATURES + 2, [2, 2]);
        net.b3 = 5.0;
        // Both on the target lane; leader 17 m ahead, slower.
        // Next-step centers: ego 101.5, leader 118.0 → distance 16.5;
        // admissible speed w = 10 + 16.5/3 = 15.5 → hi = (15.5-15)/0.1 = 5.
        let s0 = scene(vec![100.0, 117.0], vec![15.0, 10.0], vec![Lane::Target, Lane::Target]);
        let p = SimParams { n_steps: 1, ..params() };
        let traj = rollout(&s0, &[AgentController::SharedNet(&net), AgentController::ConstantSpeed], &p).unwrap();
        let u = traj.steps[0].us[0];
        assert!((u - 5.0).abs() < 1e-9, "expected the leader cap 5.0, got {u}");
        assert!(u < 9.81 * 5.0_f64.tanh());
    }

    #[test]
    fn infeasible_interval_forces_emergency_braking() {
        let mut net = PolicyNet::<f64>::zeros(BASE_FEATURES + 2, [2, 2]);
        net.b3 = 5.0;
        // Leader close and much slower: w = 10 + 11.5/3 ≈ 13.83 → hi ≈ -11.6
        // below -9.81 → empty interval → emergency brake.
        let s0 = scene(vec![100.0, 112.0], vec![15.0, 10.0], vec![Lane::Target, Lane::Target]);
        let p = SimParams { n_steps: 1, ..params() };
        let traj = rollout(&s0, &[AgentController::SharedNet(&net), AgentController::ConstantSpeed], &p).unwrap();
        assert_eq!(traj.steps[0].us[0], -9.81);
    }

    #[test]
    fn ramp_vehicle_snaps_to_target_lane_at_the_conflict_point() {
        let s0 = scene(vec![179.5, 120.0], vec![15.0, 15.0], vec![Lane::Ramp, Lane::Target]);
        let p = SimParams { n_steps: 3, ..params() };
        let traj = rollout(
            &s0,
            &[AgentController::ConstantSpeed, AgentController::ConstantSpeed],
            &p,
        )
        .unwrap();
        assert_eq!(traj.steps[0].lanes[0], Lane::Ramp);
        // After one step x = 181.0 ≥ 180 → target lane.
        assert_eq!(traj.steps[1].lanes[0], Lane::Target);
        assert_eq!(traj.final_lanes[0], Lane::Target);
    }

    #[test]
    fn initial_scene_beyond_conflict_point_is_snapped() {
        let s0 = scene(vec![185.0], vec![15.0], vec![Lane::Ramp]);
        let p = SimParams { n_steps: 1, ..params() };
        let traj = rollout(&s0, &[AgentController::ConstantSpeed], &p).unwrap();
        assert_eq!(traj.steps[0].lanes[0], Lane::Target);
    }

    #[test]
    fn lane_snap_can_create_a_merge_collision() {
        // Ramp vehicle crosses x_c right next to a target-lane vehicle:
        // laterally separated before the snap, overlapping after it.
        let s0 = scene(vec![179.0, 179.0], vec![15.0, 15.0], vec![Lane::Ramp, Lane::Target]);
        let p = SimParams { n_steps: 5, ..params() };
        let traj = rollout(
            &s0,
            &[AgentController::ConstantSpeed, AgentController::ConstantSpeed],
            &p,
        )
        .unwrap();
        match traj.termination {
            Termination::Collision { step, pair } => {
                assert_eq!(pair, (0, 1));
                assert_eq!(step, 1);
            }
            other => panic!("expected a merge collision, got {other:?}"),
        }
    }

    #[test]
    fn replay_agents_follow_recorded_states_and_extrapolate() {
        let track = ReplayTrack { x: vec![100.0, 101.0, 102.5], v: vec![10.0, 12.0, 13.0] };
        let s0 = scene(vec![50.0, 100.0], vec![8.0, 10.0], vec![Lane::Ramp, Lane::Target]);
        let p = SimParams { n_steps: 5, ..params() };
        let traj = rollout(
            &s0,
            &[AgentController::ConstantSpeed, AgentController::Replay(&track)],
            &p,
        )
        .unwrap();
        let xs1: Vec<f64> = traj.steps.iter().map(|r| r.xs[1]).collect();
        assert_eq!(xs1, vec![100.0, 101.0, 102.5, 103.8, 105.1]);
        let vs1: Vec<f64> = traj.steps.iter().map(|r| r.vs[1]).collect();
        assert_eq!(vs1, vec![10.0, 12.0, 13.0, 13.0, 13.0]);
        // Implied accelerations: (12-10)/0.1, (13-12)/0.1, then 0 extrapolated.
        let us1: Vec<f64> = traj.steps.iter().map(|r| r.us[1]).collect();
        assert!((us1[0] - 20.0).abs() < 1e-9);
        assert!((us1[1] - 10.0).abs() < 1e-9);
        assert_eq!(us1[2], 0.0);
        assert_eq!(us1[3], 0.0);
    }

    #[test]
    fn replay_on_ramp_lane_is_rejected() {
        let track = ReplayTrack { x: vec![100.0], v: vec![10.0] };
        let s0 = scene(vec![100.0], vec![10.0], vec![Lane::Ramp]);
        let err = rollout(&s0, &[AgentController::Replay(&track)], &params()).unwrap_err();
        assert!(matches!(err, SimError::ReplayLane { agent: 0 }));
    }

    #[test]
    fn controller_count_must_match_scene() {
        let s0 = scene(vec![0.0, 50.0], vec![10.0, 10.0], vec![Lane::Target, Lane::Target]);
        let err = rollout(&s0, &[AgentController::ConstantSpeed], &params()).unwrap_err();
        assert!(matches!(err, SimError::ControllerMismatch { agents: 2, controllers: 1 }));
    }

    #[test]
    fn full_pipeline_rollout_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ScenarioConfig { n_leaders: 2, n_followers: 2, ..ScenarioConfig::default() };
        let s0 = sample_scene(&cfg, &mut rng).unwrap();
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 5, [16, 16], &mut rng);
        let idm = IdmParams::<f64>::default();
        let controllers = vec![
            AgentController::SharedNet(&net),
            AgentController::Idm(&idm),
            AgentController::SharedNet(&net),
            AgentController::Idm(&idm),
            AgentController::ConstantSpeed,
        ];
        let p = params();
        let a = rollout(&s0, &controllers, &p).unwrap();
        let b = rollout(&s0, &controllers, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn total_potential_matches_a_discounted_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ScenarioConfig { n_leaders: 1, n_followers: 1, ..ScenarioConfig::default() };
        let s0 = sample_scene(&cfg, &mut rng).unwrap();
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 3, [8, 8], &mut rng);
        let controllers = vec![AgentController::SharedNet(&net); 3];
        let traj = rollout(&s0, &controllers, &params()).unwrap();
        assert!(traj.len() > 10);
        let gamma = 0.97;
        let direct = total_potential(&traj, gamma);
        let oracle: f64 = traj
            .steps
            .iter()
            .enumerate()
            .map(|(t, r)| gamma.powi(t as i32) * r.potential)
            .sum();
        assert!((direct - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
        // gamma = 0 keeps only the first step.
        assert_eq!(total_potential(&traj, 0.0), traj.steps[0].potential);
        // Per-agent totals sum to... the potential only for the self terms;
        // here just check the agent series against its own oracle.
        let r0 = total_agent_reward(&traj, 0, gamma);
        let o0: f64 = traj
            .steps
            .iter()
            .enumerate()
            .map(|(t, r)| gamma.powi(t as i32) * r.rewards[0].total)
            .sum();
        assert!((r0 - o0).abs() < 1e-12 * o0.abs().max(1.0));
    }

    #[test]
    fn constant_potential_sums_to_the_geometric_series() {
        let rec = StepRecord {
            xs: vec![0.0],
            vs: vec![0.0],
            lanes: vec![Lane::Target],
            us: vec![0.0],
            rewards: vec![],
            potential: -3.0,
        };
        let traj = Trajectory {
            steps: vec![rec; 40],
            final_xs: vec![0.0],
            final_vs: vec![0.0],
            final_lanes: vec![Lane::Target],
            termination: Termination::Horizon,
        };
        let gamma: f64 = 0.9;
        let expected = -3.0 * (1.0 - gamma.powi(40)) / (1.0 - gamma);
        assert!((total_potential(&traj, gamma) - expected).abs() < 1e-12);
    }

    #[test]
    fn recorded_actions_always_respect_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = ScenarioConfig::default();
        let p = params();
        for _ in 0..5 {
            let s0 = sample_scene(&cfg, &mut rng).unwrap();
            let net = PolicyNet::<f64>::random(BASE_FEATURES + 9, [8, 8], &mut rng);
            let controllers = vec![AgentController::SharedNet(&net); 9];
            let traj = rollout(&s0, &controllers, &p).unwrap();
            for rec in &traj.steps {
                for &u in &rec.us {
                    assert!(u.abs() <= 9.81 + 1e-12);
                }
            }
        }
    }
}

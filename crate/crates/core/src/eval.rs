//! Closed-loop evaluation: rollout batteries over fixed scenario sets and
//! the aggregate safety / efficiency / comfort metrics.
//!
//! The merging vehicle (index 0) and the surrounding traffic are assigned
//! controllers independently, so the same scenario set can compare e.g. a
//! cooperatively trained network against IDM traffic, against traffic
//! running the same network (the self-consistent population it was trained
//! in), against constant-speed traffic, or against recorded open-loop
//! tracks.
//!
//! Six aggregate metrics are reported: collision rate, merge-failure rate,
//! average ego speed, average absolute ego acceleration, average absolute
//! ego jerk, and the minimum bounding-box distance between the ego and any
//! other vehicle. Evaluation is deterministic: rollouts run in parallel but
//! every reduction happens in scenario order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{bounding_box_distance, VehicleState};
use crate::idm::IdmParams;
use crate::policy::PolicyNet;
use crate::rewards::Lane;
use crate::scalar::{to_f64, Scalar};
use crate::scenario::Scene;
use crate::sim::{
    rollout, AgentController, ReplayScenario, SimError, SimParams, Termination, Trajectory,
};

/// Controller of the merging vehicle (index 0) during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EgoPolicy<'a, T> {
    Net(&'a PolicyNet<T>),
    Idm(&'a IdmParams<T>),
    ConstantSpeed,
}

/// Controller shared by every surrounding vehicle during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum SurroundPolicy<'a, T> {
    /// Each surrounding vehicle runs this network — the self-consistent
    /// traffic a parameter-shared policy was trained in.
    SharedNet(&'a PolicyNet<T>),
    Idm(&'a IdmParams<T>),
    ConstantSpeed,
    /// Recorded open-loop tracks; only valid with replay scenarios.
    Replay,
}

/// The scenario battery: sampled initial scenes (closed-loop surroundings)
/// or recorded merge situations (which carry their own tracks).
#[derive(Debug, Clone, Copy)]
pub enum EvalScenarios<'a, T> {
    Sampled(&'a [Scene<T>]),
    Replay(&'a [ReplayScenario<T>]),
}

impl<T> EvalScenarios<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            EvalScenarios::Sampled(s) => s.len(),
            EvalScenarios::Replay(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-scenario evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: usize,
    /// Any two vehicles collided (bounding-box overlap) during the rollout.
    pub collided: bool,
    /// The ego reached the target lane by the end of the rollout.
    pub merged: bool,
    /// Completed steps before the horizon or a collision ended the rollout.
    pub steps: usize,
    pub ego_final_x: f64,
    /// Mean ego speed over all recorded states (including the final one).
    pub avg_ego_speed: f64,
    /// Mean |executed ego acceleration|; `None` if no step completed.
    pub avg_abs_accel: Option<f64>,
    /// Mean |Δu|/dt over successive executed ego accelerations; `None` if
    /// fewer than two steps completed.
    pub avg_abs_jerk: Option<f64>,
    /// Minimum bounding-box distance from the ego to any other vehicle over
    /// all recorded states (0 = touching/overlap); `None` if the ego is the
    /// only vehicle.
    pub min_gap: Option<f64>,
}

/// Aggregate metrics over one scenario battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_scenarios: usize,
    /// Fraction of scenarios that ended in a collision.
    pub collision_rate: f64,
    /// Fraction of scenarios with no collision where the ego still had not
    /// reached the target lane when the horizon ran out.
    pub failure_rate: f64,
    /// Mean over scenarios of the per-scenario mean ego speed.
    pub avg_ego_speed: f64,
    /// Mean over scenarios (with ≥1 step) of the per-scenario mean
    /// |ego acceleration|.
    pub avg_abs_accel: Option<f64>,
    /// Mean over scenarios (with ≥2 steps) of the per-scenario mean
    /// |ego jerk|.
    pub avg_abs_jerk: Option<f64>,
    /// Mean over scenarios (with ≥2 vehicles) of the per-scenario minimum
    /// ego gap.
    pub avg_min_gap: Option<f64>,
    pub outcomes: Vec<ScenarioOutcome>,
}

fn vehicle_state<T: Scalar>(x: T, v: T, lane: Lane, sim: &SimParams<T>) -> VehicleState<T> {
    VehicleState { x, y: sim.lane_y(lane), v, phi: T::zero() }
}

fn scenario_outcome<T: Scalar>(
    scenario: usize,
    traj: &Trajectory<T>,
    sim: &SimParams<T>,
) -> ScenarioOutcome {
    let n = traj.final_xs.len();
    let collided = matches!(traj.termination, Termination::Collision { .. });
    let merged = traj.final_lanes[0] == Lane::Target;

    let mut speed_sum = 0.0;
    for s in &traj.steps {
        speed_sum += to_f64(s.vs[0]);
    }
    speed_sum += to_f64(traj.final_vs[0]);
    let avg_ego_speed = speed_sum / (traj.len() + 1) as f64;

    let avg_abs_accel = if traj.is_empty() {
        None
    } else {
        Some(traj.steps.iter().map(|s| to_f64(s.us[0]).abs()).sum::<f64>() / traj.len() as f64)
    };

    let avg_abs_jerk = if traj.len() < 2 {
        None
    } else {
        let dt = to_f64(sim.dt);
        let sum: f64 = traj
            .steps
            .windows(2)
            .map(|w| (to_f64(w[1].us[0]) - to_f64(w[0].us[0])).abs() / dt)
            .sum();
        Some(sum / (traj.len() - 1) as f64)
    };

    let min_gap = if n < 2 {
        None
    } else {
        let mut min = f64::INFINITY;
        let mut scan = |xs: &[T], vs: &[T], lanes: &[Lane]| {
            let ego = vehicle_state(xs[0], vs[0], lanes[0], sim);
            for j in 1..n {
                let other = vehicle_state(xs[j], vs[j], lanes[j], sim);
                min = min.min(to_f64(bounding_box_distance(&ego, &other, &sim.geometry)));
            }
        };
        for s in &traj.steps {
            scan(&s.xs, &s.vs, &s.lanes);
        }
        scan(&traj.final_xs, &traj.final_vs, &traj.final_lanes);
        Some(min)
    };

    ScenarioOutcome {
        scenario,
        collided,
        merged,
        steps: traj.len(),
        ego_final_x: to_f64(traj.final_xs[0]),
        avg_ego_speed,
        avg_abs_accel,
        avg_abs_jerk,
        min_gap,
    }
}

fn ego_controller<'c, T: Scalar>(ego: EgoPolicy<'c, T>) -> AgentController<'c, T> {
    match ego {
        EgoPolicy::Net(net) => AgentController::SharedNet(net),
        EgoPolicy::Idm(idm) => AgentController::Idm(idm),
        EgoPolicy::ConstantSpeed => AgentController::ConstantSpeed,
    }
}

fn surround_controller<'c, T: Scalar>(
    surround: SurroundPolicy<'c, T>,
) -> Option<AgentController<'c, T>> {
    match surround {
        SurroundPolicy::SharedNet(net) => Some(AgentController::SharedNet(net)),
        SurroundPolicy::Idm(idm) => Some(AgentController::Idm(idm)),
        SurroundPolicy::ConstantSpeed => Some(AgentController::ConstantSpeed),
        SurroundPolicy::Replay => None,
    }
}

/// Rolls the ego/surroundings controller pairing out on every scenario and
/// aggregates the six evaluation metrics.
pub fn evaluate<T: Scalar>(
    ego: EgoPolicy<'_, T>,
    surround: SurroundPolicy<'_, T>,
    scenarios: EvalScenarios<'_, T>,
    sim: &SimParams<T>,
) -> Result<EvalReport, SimError> {
    Ok(evaluate_with_trajectories(ego, surround, scenarios, sim)?.0)
}

/// [`evaluate`], additionally returning the underlying rollout of every
/// scenario (in scenario order) for trace emission.
pub fn evaluate_with_trajectories<T: Scalar>(
    ego: EgoPolicy<'_, T>,
    surround: SurroundPolicy<'_, T>,
    scenarios: EvalScenarios<'_, T>,
    sim: &SimParams<T>,
) -> Result<(EvalReport, Vec<Trajectory<T>>), SimError> {
    if scenarios.is_empty() {
        return Err(SimError::InvalidParams("empty scenario set".into()));
    }

    let trajectories: Result<Vec<Trajectory<T>>, SimError> = match scenarios {
        EvalScenarios::Sampled(scenes) => {
            if matches!(surround, SurroundPolicy::Replay) {
                return Err(SimError::InvalidParams(
                    "replay surroundings need replay scenarios (sampled scenes carry no tracks)"
                        .into(),
                ));
            }
            scenes
                .par_iter()
                .map(|scene| {
                    let mut ctrls = vec![ego_controller(ego)];
                    for _ in 1..scene.n() {
                        ctrls.push(surround_controller(surround).expect("checked above"));
                    }
                    rollout(scene, &ctrls, sim)
                })
                .collect()
        }
        EvalScenarios::Replay(replays) => {
            if matches!(surround, SurroundPolicy::Replay) {
                for r in replays {
                    if r.dt != sim.dt {
                        return Err(SimError::InvalidParams(
                            "replay track sampling interval differs from the simulation step"
                                .into(),
                        ));
                    }
                }
            }
            replays
                .par_iter()
                .map(|r| {
                    let scene = r.initial_scene();
                    let mut ctrls = vec![ego_controller(ego)];
                    for tr in &r.tracks {
                        ctrls.push(match surround_controller(surround) {
                            Some(c) => c,
                            None => AgentController::Replay(tr),
                        });
                    }
                    rollout(&scene, &ctrls, sim)
                })
                .collect()
        }
    };
    let trajectories = trajectories?;

    let outcomes: Vec<ScenarioOutcome> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| scenario_outcome(i, t, sim))
        .collect();

    let n = outcomes.len();
    let collision_rate = outcomes.iter().filter(|o| o.collided).count() as f64 / n as f64;
    let failure_rate =
        outcomes.iter().filter(|o| !o.collided && !o.merged).count() as f64 / n as f64;
    let avg_ego_speed = outcomes.iter().map(|o| o.avg_ego_speed).sum::<f64>() / n as f64;
    let mean_of = |vals: Vec<f64>| {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let avg_abs_accel = mean_of(outcomes.iter().filter_map(|o| o.avg_abs_accel).collect());
    let avg_abs_jerk = mean_of(outcomes.iter().filter_map(|o| o.avg_abs_jerk).collect());
    let avg_min_gap = mean_of(outcomes.iter().filter_map(|o| o.min_gap).collect());

    let report = EvalReport {
        n_scenarios: n,
        collision_rate,
        failure_rate,
        avg_ego_speed,
        avg_abs_accel,
        avg_abs_jerk,
        avg_min_gap,
        outcomes,
    };
    Ok((report, trajectories))
}

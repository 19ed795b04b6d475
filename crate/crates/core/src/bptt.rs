//! Exact reverse-mode differentiation of a deterministic rollout objective
//! with respect to the shared policy parameters.
//!
//! The forward rollout is recorded by [`crate::sim::rollout`]; the backward
//! pass re-walks the *identical* action pipeline at every recorded step (the
//! rollout is deterministic, so recomputation reproduces each intermediate
//! bit for bit) and pushes adjoints backwards through
//!
//! * the Euler dynamics update (`x' = x + v·dt`, `v' = clamp(v + u·dt)`,
//!   clamp subgradient 1 inside and at the boundary, 0 outside — matching
//!   the forward clamp flag);
//! * the per-step reward/potential, via the analytic reward gradients;
//! * each agent's action: through the network when the feasibility
//!   projection passed the raw command through, through the *active bound's*
//!   dependence on the ego/neighbor states when it clamped (an empty
//!   interval's emergency brake is constant), through the IDM response for
//!   IDM agents, and not at all for constant-speed or replay agents (replay
//!   states are data, so adjoints arriving at them are discarded).
//!
//! Discrete structure — neighbor selection, lane classification and the
//! merge lane snap, flag features, which bound is active, clamp activity,
//! and the termination time — is treated as locally constant, so the result
//! is the exact gradient of the piecewise-smooth objective almost
//! everywhere (kink conventions as documented on the respective functions).

use crate::idm::idm_acceleration_grad;
use crate::policy::{feat, NetGrads, PolicyNet};
use crate::rewards::{agent_reward_grad, potential_grad};
use crate::scalar::Scalar;
use crate::scenario::Scene;
use crate::sim::{
    action_pipeline, net_gap, rollout, total_agent_reward, total_potential, ActionInfo,
    AgentController, SimError, SimParams, Trajectory,
};

/// What the rollout gradient maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Discounted total potential `Σ_t γ^t · φ_t` — the cooperative signal.
    DiscountedPotential,
    /// Discounted return of one agent, `Σ_t γ^t · r_i,t`.
    AgentReturn(usize),
}

/// A rollout, its objective value, and the exact parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGradient<T> {
    pub objective: T,
    pub grads: NetGrads<T>,
    pub trajectory: Trajectory<T>,
}

/// Runs a rollout and differentiates `objective` with respect to the shared
/// network parameters. Every [`AgentController::SharedNet`] entry must
/// reference `net`; the trajectory length is treated as a constant (the
/// gradient is taken on the recorded, possibly collision-truncated,
/// horizon).
pub fn rollout_with_gradient<T: Scalar>(
    scene0: &Scene<T>,
    controllers: &[AgentController<'_, T>],
    net: &PolicyNet<T>,
    params: &SimParams<T>,
    objective: Objective,
) -> Result<RolloutGradient<T>, SimError> {
    for c in controllers {
        if let AgentController::SharedNet(other) = c {
            if !std::ptr::eq(*other, net) {
                return Err(SimError::ForeignNet);
            }
        }
    }
    if let Objective::AgentReturn(i) = objective {
        if i >= scene0.n() {
            return Err(SimError::InvalidParams(format!(
                "objective agent {i} out of range for {} agents",
                scene0.n()
            )));
        }
    }

    let traj = rollout(scene0, controllers, params)?;
    let value = match objective {
        Objective::DiscountedPotential => total_potential(&traj, params.gamma),
        Objective::AgentReturn(i) => total_agent_reward(&traj, i, params.gamma),
    };

    let n = scene0.n();
    let mut grads = NetGrads::zeros_like(net);
    // Adjoints of the state *after* the step currently being processed.
    let mut ax = vec![T::zero(); n];
    let mut av = vec![T::zero(); n];
    let dt = params.dt;
    let ps = params.obs.pos_scale;
    let ss = params.obs.speed_scale;

    for t in (0..traj.len()).rev() {
        let rec = &traj.steps[t];
        let gamma_t = params.gamma.powi(t as i32);
        let mut nx = vec![T::zero(); n];
        let mut nv = vec![T::zero(); n];
        let mut du = vec![T::zero(); n];

        // (a) Dynamics pullback: distribute the adjoints of (x_{t+1},
        // v_{t+1}) onto (x_t, v_t, u_t). Replay agents' successors are data;
        // their arriving adjoints are dropped.
        for i in 0..n {
            if matches!(controllers[i], AgentController::Replay(_)) {
                continue;
            }
            let v_raw = rec.vs[i] + rec.us[i] * dt;
            let gate = if v_raw < T::zero() || v_raw > params.v_max { T::zero() } else { T::one() };
            nx[i] = nx[i] + ax[i];
            nv[i] = nv[i] + ax[i] * dt + gate * av[i];
            du[i] = du[i] + gate * av[i] * dt;
        }

        // (b) Direct reward partials at step t.
        match objective {
            Objective::DiscountedPotential => {
                let (_, gx, gv, gu) = potential_grad(&rec.xs, &rec.vs, &rec.lanes, &rec.us, &params.rewards);
                for i in 0..n {
                    if matches!(controllers[i], AgentController::Replay(_)) {
                        continue;
                    }
                    nx[i] = nx[i] + gamma_t * gx[i];
                    nv[i] = nv[i] + gamma_t * gv[i];
                    du[i] = du[i] + gamma_t * gu[i];
                }
            }
            Objective::AgentReturn(e) => {
                let (_, gx, gv, gu) =
                    agent_reward_grad(&rec.xs, &rec.vs, &rec.lanes, rec.us[e], e, &params.rewards);
                for i in 0..n {
                    if matches!(controllers[i], AgentController::Replay(_)) {
                        continue;
                    }
                    nx[i] = nx[i] + gamma_t * gx[i];
                    nv[i] = nv[i] + gamma_t * gv[i];
                }
                if !matches!(controllers[e], AgentController::Replay(_)) {
                    du[e] = du[e] + gamma_t * gu;
                }
            }
        }

        // (c) Action pullback: u_t[i] is itself a function of the step-t
        // state (and the parameters, for shared-net agents).
        for i in 0..n {
            if du[i] == T::zero() {
                continue;
            }
            let info = action_pipeline(i, &rec.xs, &rec.vs, &rec.lanes, controllers, params, t)?;
            debug_assert_eq!(info.u(), rec.us[i], "backward recomputation diverged from the rollout");
            match info {
                ActionInfo::Net {
                    raw,
                    passthrough,
                    feasible,
                    features,
                    cache,
                    leader,
                    follower,
                    ..
                } => {
                    if passthrough {
                        let dinput = net.backward(&features, &cache, du[i], &mut grads);
                        nx[i] = nx[i] + dinput[feat::DIST_TO_CONFLICT] / ps;
                        nv[i] = nv[i] + dinput[feat::SPEED] / ss;
                        if let Some(l) = leader {
                            // leader_dist = x_l − x_i; leader_rel = v_l − v_i.
                            nx[l] = nx[l] + dinput[feat::LEADER_DIST] / ps;
                            nx[i] = nx[i] - dinput[feat::LEADER_DIST] / ps;
                            nv[l] = nv[l] + dinput[feat::LEADER_REL_SPEED] / ss;
                            nv[i] = nv[i] - dinput[feat::LEADER_REL_SPEED] / ss;
                        }
                        if let Some(f) = follower {
                            // follower_dist = x_i − x_f; follower_rel = v_f − v_i.
                            nx[i] = nx[i] + dinput[feat::FOLLOWER_DIST] / ps;
                            nx[f] = nx[f] - dinput[feat::FOLLOWER_DIST] / ps;
                            nv[f] = nv[f] + dinput[feat::FOLLOWER_REL_SPEED] / ss;
                            nv[i] = nv[i] - dinput[feat::FOLLOWER_REL_SPEED] / ss;
                        }
                    } else if let crate::dynamics::FeasibleSet::Interval { lo, hi } = feasible {
                        // The raw command was clamped to one bound; that
                        // bound is an explicit function of the ego and the
                        // constraining neighbor. An emergency brake is
                        // constant and contributes nothing.
                        if raw > hi {
                            // hi < raw ≤ accel_bound, so hi came from the
                            // leader candidate (w − v_i)/dt with
                            // w = v_l + |Δ|/τ, Δ the next-step center offset.
                            let l = leader.expect("a binding upper bound requires a leader");
                            let delta = (rec.xs[l] + rec.vs[l] * dt) - (rec.xs[i] + rec.vs[i] * dt);
                            let s = if delta >= T::zero() { T::one() } else { -T::one() };
                            let tau = params.tau_s;
                            let g = du[i];
                            nx[i] = nx[i] - g * s / (tau * dt);
                            nv[i] = nv[i] + g * (-s / tau - T::one() / dt);
                            nx[l] = nx[l] + g * s / (tau * dt);
                            nv[l] = nv[l] + g * (T::one() / dt + s / tau);
                        } else if raw < lo {
                            // lo > −accel_bound, so lo came from the follower
                            // candidate (w' − v_i)/dt with w' = v_f − |Δ'|/τ.
                            // Its partials share the leader-case form.
                            let f = follower.expect("a binding lower bound requires a follower");
                            let delta = (rec.xs[i] + rec.vs[i] * dt) - (rec.xs[f] + rec.vs[f] * dt);
                            let s = if delta >= T::zero() { T::one() } else { -T::one() };
                            let tau = params.tau_s;
                            let g = du[i];
                            nx[i] = nx[i] - g * s / (tau * dt);
                            nv[i] = nv[i] + g * (-s / tau - T::one() / dt);
                            nx[f] = nx[f] + g * s / (tau * dt);
                            nv[f] = nv[f] + g * (T::one() / dt + s / tau);
                        }
                        // raw exactly at a bound never reaches this branch:
                        // the projection reports it as passthrough.
                    }
                }
                ActionInfo::Idm { leader, .. } => {
                    let idm = match controllers[i] {
                        AgentController::Idm(p) => p,
                        _ => unreachable!("IDM action info from a non-IDM controller"),
                    };
                    let (gap, dv) = match leader {
                        Some(l) => (net_gap(rec.xs[i], rec.xs[l], &params.geometry), rec.vs[i] - rec.vs[l]),
                        None => (T::infinity(), T::zero()),
                    };
                    let g = idm_acceleration_grad(gap, rec.vs[i], dv, idm);
                    let w = du[i];
                    nv[i] = nv[i] + w * (g.d_v + g.d_dv);
                    nx[i] = nx[i] - w * g.d_gap;
                    if let Some(l) = leader {
                        nx[l] = nx[l] + w * g.d_gap;
                        nv[l] = nv[l] - w * g.d_dv;
                    }
                }
                ActionInfo::Constant | ActionInfo::Replay { .. } => {}
            }
        }

        ax = nx;
        av = nv;
    }

    if !grads.is_finite() || !value.is_finite() {
        return Err(SimError::NonFinite);
    }
    Ok(RolloutGradient { objective: value, grads, trajectory: traj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::IdmParams;
    use crate::policy::BASE_FEATURES;
    use crate::rewards::{Lane, MergeRewardSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n_steps: usize) -> SimParams<f64> {
        SimParams { n_steps, ..SimParams::default() }
    }

    /// Full-coordinate central finite difference of the rollout objective.
    fn fd_gradient(
        scene0: &Scene<f64>,
        roles: &[&str],
        net: &PolicyNet<f64>,
        idm: &IdmParams<f64>,
        p: &SimParams<f64>,
        objective: Objective,
        h: f64,
    ) -> Vec<f64> {
        let mut net = net.clone();
        let mut out = Vec::with_capacity(net.param_count());
        for k in 0..net.param_count() {
            let saved = net.param_get(k);
            let eval = |theta: f64, net: &mut PolicyNet<f64>| -> f64 {
                net.param_set(k, theta);
                let controllers: Vec<AgentController<'_, f64>> = roles
                    .iter()
                    .map(|r| match *r {
                        "net" => AgentController::SharedNet(net),
                        "idm" => AgentController::Idm(idm),
                        _ => AgentController::ConstantSpeed,
                    })
                    .collect();
                let g = rollout_with_gradient(scene0, &controllers, net, p, objective).unwrap();
                g.objective
            };
            let up = eval(saved + h, &mut net);
            let dn = eval(saved - h, &mut net);
            net.param_set(k, saved);
            out.push((up - dn) / (2.0 * h));
        }
        out
    }

    fn analytic(
        scene0: &Scene<f64>,
        roles: &[&str],
        net: &PolicyNet<f64>,
        idm: &IdmParams<f64>,
        p: &SimParams<f64>,
        objective: Objective,
    ) -> RolloutGradient<f64> {
        let controllers: Vec<AgentController<'_, f64>> = roles
            .iter()
            .map(|r| match *r {
                "net" => AgentController::SharedNet(net),
                "idm" => AgentController::Idm(idm),
                _ => AgentController::ConstantSpeed,
            })
            .collect();
        rollout_with_gradient(scene0, &controllers, net, p, objective).unwrap()
    }

    fn assert_grad_close(an: &PolicyNet<f64>, g: &NetGrads<f64>, fd: &[f64], tol_rel: f64, tol_abs: f64) {
        for k in 0..an.param_count() {
            let a = PolicyNet::grad_get(g, k);
            let f = fd[k];
            let err = (a - f).abs();
            assert!(
                err < tol_rel * a.abs().max(f.abs()) + tol_abs,
                "param {k}: analytic {a} vs fd {f}"
            );
        }
    }

    /// Two shared-net agents, three steps, potential objective: the exact
    /// backward pass must match central finite differences coordinate-wise.
    #[test]
    fn matches_finite_differences_on_smooth_rollouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let p = params(3);
        let idm = IdmParams::<f64>::default();
        for trial in 0..10 {
            let mut net = PolicyNet::<f64>::random(BASE_FEATURES + 2, [8, 8], &mut rng);
            // Small parameters keep every action strictly inside its
            // feasible interval (the clamped path has its own test).
            for k in 0..net.param_count() {
                net.param_set(k, net.param_get(k) * 0.3);
            }
            let scene0 = Scene {
                xs: vec![100.0 + rng.gen_range(-5.0..5.0), 130.0 + rng.gen_range(-5.0..5.0)],
                vs: vec![rng.gen_range(8.0..14.0), rng.gen_range(10.0..16.0)],
                lanes: vec![Lane::Ramp, Lane::Target],
            };
            let roles = ["net", "net"];
            let res = analytic(&scene0, &roles, &net, &idm, &p, Objective::DiscountedPotential);
            let fd = fd_gradient(&scene0, &roles, &net, &idm, &p, Objective::DiscountedPotential, 1e-6);
            assert_grad_close(&net, &res.grads, &fd, 1e-4, 1e-7);
            assert!(res.trajectory.len() == 3, "trial {trial} truncated unexpectedly");
        }
    }

    /// A leading net agent drives freely while its follower is capped by the
    /// leader-TTC bound: gradients must flow through the bound's dependence
    /// on both vehicles' states.
    #[test]
    fn matches_finite_differences_through_active_feasibility_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let p = params(3);
        let idm = IdmParams::<f64>::default();
        let mut net = PolicyNet::<f64>::random(BASE_FEATURES + 2, [6, 6], &mut rng);
        for k in 0..net.param_count() {
            net.param_set(k, net.param_get(k) * 0.05);
        }
        net.b3 = 2.0; // raw ≈ 9.81·tanh(2) ≈ 9.46 for both agents
        let scene0 = Scene {
            xs: vec![100.0, 92.0],
            vs: vec![10.0, 12.0],
            lanes: vec![Lane::Target, Lane::Target],
        };
        let roles = ["net", "net"];
        let res = analytic(&scene0, &roles, &net, &idm, &p, Objective::DiscountedPotential);
        // Setup check: the follower (agent 1) is clamped to the leader cap
        // (w − v)/dt = ((10 + 7.8/3) − 12)/0.1 = 6.0 at step 0, while the
        // leader passes through (its interval is [−6, 9.81]).
        let u1 = res.trajectory.steps[0].us[1];
        assert!((u1 - 6.0).abs() < 0.2, "expected a clamped follower near 6.0, got {u1}");
        let u0 = res.trajectory.steps[0].us[0];
        assert!(u0 > 6.5 && u0 < 9.81, "expected a passthrough leader, got {u0}");
        // h = 1e-4: the objective is ~1e2 in magnitude, so smaller steps
        // drown the quotient in cancellation noise (the clamp margins are
        // ~0.6, far wider than the perturbation).
        let fd = fd_gradient(&scene0, &roles, &net, &idm, &p, Objective::DiscountedPotential, 1e-4);
        assert_grad_close(&net, &res.grads, &fd, 1e-4, 1e-8);
    }

    /// Ego return with an IDM follower reacting to the ego: gradients flow
    /// through the IDM response's exact partial derivatives.
    #[test]
    fn matches_finite_differences_through_idm_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let p = params(3);
        let idm = IdmParams::<f64>::default();
        for _ in 0..5 {
            let mut net = PolicyNet::<f64>::random(BASE_FEATURES + 2, [6, 6], &mut rng);
            for k in 0..net.param_count() {
                net.param_set(k, net.param_get(k) * 0.3);
            }
            let scene0 = Scene {
                xs: vec![100.0, 70.0],
                vs: vec![10.0, 12.0],
                lanes: vec![Lane::Target, Lane::Target],
            };
            let roles = ["net", "idm"];
            let res = analytic(&scene0, &roles, &net, &idm, &p, Objective::AgentReturn(0));
            let fd = fd_gradient(&scene0, &roles, &net, &idm, &p, Objective::AgentReturn(0), 1e-6);
            assert_grad_close(&net, &res.grads, &fd, 1e-4, 1e-7);
        }
    }

    /// Replay neighbors are data: the gradient w.r.t. the shared parameters
    /// must still match finite differences exactly.
    #[test]
    fn matches_finite_differences_with_replay_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let p = params(3);
        let mut net = PolicyNet::<f64>::random(BASE_FEATURES + 2, [6, 6], &mut rng);
        for k in 0..net.param_count() {
            net.param_set(k, net.param_get(k) * 0.3);
        }
        let track = crate::sim::ReplayTrack {
            x: vec![130.0, 131.2, 132.3, 133.5],
            v: vec![12.0, 11.0, 12.5, 12.0],
        };
        let scene0 = Scene {
            xs: vec![100.0, 130.0],
            vs: vec![10.0, 12.0],
            lanes: vec![Lane::Ramp, Lane::Target],
        };
        let controllers = [AgentController::SharedNet(&net), AgentController::Replay(&track)];
        let res =
            rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();
        let mut fd = Vec::new();
        let mut pert = net.clone();
        let h = 1e-6;
        for k in 0..pert.param_count() {
            let saved = pert.param_get(k);
            let eval = |theta: f64, pn: &mut PolicyNet<f64>| {
                pn.param_set(k, theta);
                let cs = [AgentController::SharedNet(&*pn), AgentController::Replay(&track)];
                rollout_with_gradient(&scene0, &cs, pn, &p, Objective::DiscountedPotential)
                    .unwrap()
                    .objective
            };
            let up = eval(saved + h, &mut pert);
            let dn = eval(saved - h, &mut pert);
            pert.param_set(k, saved);
            fd.push((up - dn) / (2.0 * h));
        }
        assert_grad_close(&net, &res.grads, &fd, 1e-4, 1e-7);
    }

    /// One agent, one step: the chain rule collapses to
    /// dJ/dθ = (∂φ/∂u)·(∂u/∂θ) = (−2·w_comfort·u)·∂u/∂θ.
    #[test]
    fn single_step_gradient_reduces_to_the_hand_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 1, [4, 4], &mut rng);
        let p = params(1);
        let scene0 = Scene { xs: vec![100.0], vs: vec![9.0], lanes: vec![Lane::Ramp] };
        let controllers = [AgentController::SharedNet(&net)];
        let res =
            rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();

        // Hand side: recompute the action and backpropagate the reward's
        // ∂φ/∂u directly through the network.
        let info = action_pipeline(0, &scene0.xs, &scene0.vs, &scene0.lanes, &controllers, &p, 0).unwrap();
        let (u, features, cache) = match info {
            ActionInfo::Net { u, features, cache, .. } => (u, features, cache),
            _ => unreachable!(),
        };
        let upstream = -2.0 * p.rewards.w_comfort * u;
        let mut hand = NetGrads::zeros_like(&net);
        net.backward(&features, &cache, upstream, &mut hand);
        assert_eq!(res.grads, hand);
        assert_eq!(res.objective, res.trajectory.steps[0].potential);
    }

    #[test]
    fn zero_reward_weights_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 2, [4, 4], &mut rng);
        let spec = MergeRewardSpec {
            w_speed: 0.0,
            w_comfort: 0.0,
            w_same_lane: 0.0,
            w_conflict: 0.0,
            ..MergeRewardSpec::default()
        };
        let p = SimParams { rewards: spec, n_steps: 4, ..SimParams::default() };
        let scene0 = Scene {
            xs: vec![100.0, 120.0],
            vs: vec![10.0, 12.0],
            lanes: vec![Lane::Ramp, Lane::Target],
        };
        let controllers = [AgentController::SharedNet(&net), AgentController::SharedNet(&net)];
        let res =
            rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.grads.l2_norm(), 0.0);
    }

    #[test]
    fn objective_values_match_the_trajectory_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 3, [6, 6], &mut rng);
        let idm = IdmParams::<f64>::default();
        let p = params(20);
        let scene0 = Scene {
            xs: vec![100.0, 130.0, 80.0],
            vs: vec![10.0, 12.0, 14.0],
            lanes: vec![Lane::Ramp, Lane::Target, Lane::Target],
        };
        let controllers = [
            AgentController::SharedNet(&net),
            AgentController::Idm(&idm),
            AgentController::Idm(&idm),
        ];
        let a = rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();
        assert_eq!(a.objective, total_potential(&a.trajectory, p.gamma));
        let b = rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::AgentReturn(0)).unwrap();
        assert_eq!(b.objective, total_agent_reward(&b.trajectory, 0, p.gamma));
        // The embedded trajectory is the plain rollout, bit for bit.
        let plain = rollout(&scene0, &controllers, &p).unwrap();
        assert_eq!(a.trajectory, plain);
        // And the whole computation is deterministic.
        let a2 =
            rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn foreign_network_references_are_rejected() {
        let net = PolicyNet::<f64>::zeros(BASE_FEATURES + 1, [4, 4]);
        let other = PolicyNet::<f64>::zeros(BASE_FEATURES + 1, [4, 4]);
        let p = params(2);
        let scene0 = Scene { xs: vec![100.0], vs: vec![10.0], lanes: vec![Lane::Ramp] };
        let controllers = [AgentController::SharedNet(&other)];
        let err = rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential)
            .unwrap_err();
        assert!(matches!(err, SimError::ForeignNet));
    }

    #[test]
    fn collision_truncated_rollouts_differentiate_over_recorded_steps() {
        // Two constant-speed colliders plus a net ego far away: the gradient
        // is over the truncated horizon and stays finite.
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let net = PolicyNet::<f64>::random(BASE_FEATURES + 3, [4, 4], &mut rng);
        let p = params(50);
        let scene0 = Scene {
            xs: vec![20.0, 100.0, 106.0],
            vs: vec![10.0, 12.0, 0.0],
            lanes: vec![Lane::Ramp, Lane::Target, Lane::Target],
        };
        let controllers = [
            AgentController::SharedNet(&net),
            AgentController::ConstantSpeed,
            AgentController::ConstantSpeed,
        ];
        let res =
            rollout_with_gradient(&scene0, &controllers, &net, &p, Objective::DiscountedPotential).unwrap();
        assert!(matches!(res.trajectory.termination, crate::sim::Termination::Collision { .. }));
        assert!(res.trajectory.len() < 50);
        assert!(res.grads.is_finite());
        assert_eq!(res.objective, total_potential(&res.trajectory, p.gamma));
    }
}

//! Reward design for the highway forced-merge game.
//!
//! Each agent's reward combines four terms:
//! - speed tracking: `-(v - v_d)^2`
//! - comfort: `-u^2`
//! - same-lane safety (pairwise, piecewise in the speed difference):
//!   `-1 / (|Δx| / v_c + ε)` when `|Δv| <= v_c`, else `-1 / (TTC + ε)` with
//!   `TTC = |Δx| / |Δv|`
//! - conflict-point gap (pairwise, across lanes):
//!   `-1 / (sqrt(T_i T_j) (T_i - T_j)^2 + ε)` with `T_k = |x_k - x_c| / (v_k + ε)`
//!
//! The self terms depend only on the agent's own speed/action and the
//! pairwise terms are exactly symmetric under exchange of the pair, so the
//! game admits the potential assembled by [`potential_function`]: the sum of
//! all self terms plus each pairwise term counted once.
//!
//! Pair classification: two vehicles in the same lane use the same-lane term;
//! a ramp/target pair uses the conflict-point term. Once a ramp vehicle
//! passes the conflict point it is reassigned to the target lane, switching
//! its pairwise terms to the same-lane form.
//!
//! Every term is `<= 0`; zero is unattainable (the pair penalties saturate at
//! `-1/something` only as distances grow unbounded).

use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// Lane membership used for pair classification and observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lane {
    /// Highway target lane (merge destination).
    Target,
    /// On-ramp lane, upstream of the conflict point.
    Ramp,
}

/// Weights and shaping constants of the merge reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRewardSpec<T> {
    /// Weight on the speed-tracking term.
    pub w_speed: T,
    /// Weight on the comfort (acceleration) term.
    pub w_comfort: T,
    /// Weight on the same-lane pairwise safety term.
    pub w_same_lane: T,
    /// Weight on the conflict-point pairwise gap term.
    pub w_conflict: T,
    /// Desired speed v_d [m/s].
    pub v_d: T,
    /// Speed-difference threshold v_c of the same-lane piecewise term [m/s].
    pub v_c: T,
    /// Regularizer ε keeping every denominator positive.
    pub eps: T,
    /// Longitudinal coordinate of the merge conflict point x_c [m].
    pub x_c: T,
}

impl<T: Scalar> Default for MergeRewardSpec<T> {
    fn default() -> Self {
        MergeRewardSpec {
            w_speed: real(1.0),
            w_comfort: real(0.5),
            w_same_lane: real(20.0),
            w_conflict: real(20.0),
            v_d: real(15.0),
            v_c: real(1.0),
            eps: real(1e-3),
            x_c: real(180.0),
        }
    }
}

/// Weighted contributions of one agent's reward; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub speed: T,
    pub comfort: T,
    pub same_lane: T,
    pub conflict: T,
    pub total: T,
}

/// Unweighted speed-tracking term `-(v - v_d)^2`.
pub fn speed_tracking_reward<T: Scalar>(v: T, spec: &MergeRewardSpec<T>) -> T {
    let d = v - spec.v_d;
    -(d * d)
}

/// Unweighted comfort term `-u^2`.
pub fn comfort_reward<T: Scalar>(u: T) -> T {
    -(u * u)
}

/// Unweighted same-lane safety term for an ordered pair.
///
/// Piecewise: near-equal speeds (`|Δv| <= v_c`) penalize proximity through
/// `-1/(|Δx|/v_c + ε)`; otherwise penalize short time-to-collision through
/// `-1/(|Δx|/|Δv| + ε)`. Continuous at `|Δv| = v_c` and exactly symmetric in
/// the pair.
pub fn same_lane_ttc_reward<T: Scalar>(x_i: T, v_i: T, x_j: T, v_j: T, spec: &MergeRewardSpec<T>) -> T {
    let adx = (x_i - x_j).abs();
    let adv = (v_i - v_j).abs();
    let denom = if adv <= spec.v_c { adx / spec.v_c + spec.eps } else { adx / adv + spec.eps };
    -denom.recip()
}

/// Conflict-point gap term expressed in arrival times `T_i`, `T_j`.
pub fn conflict_gap_from_times<T: Scalar>(t_i: T, t_j: T, eps: T) -> T {
    let d = (t_i * t_j).sqrt() * (t_i - t_j) * (t_i - t_j) + eps;
    -d.recip()
}

/// Time for a vehicle at `x` with speed `v` to reach the conflict point.
pub fn time_to_conflict<T: Scalar>(x: T, v: T, spec: &MergeRewardSpec<T>) -> T {
    (x - spec.x_c).abs() / (v + spec.eps)
}

/// Unweighted conflict-point gap term for an ordered pair in different lanes.
///
/// Penalizes similar arrival times at the conflict point; exactly symmetric
/// in the pair.
pub fn conflict_time_gap_reward<T: Scalar>(x_i: T, v_i: T, x_j: T, v_j: T, spec: &MergeRewardSpec<T>) -> T {
    conflict_gap_from_times(time_to_conflict(x_i, v_i, spec), time_to_conflict(x_j, v_j, spec), spec.eps)
}

/// Weighted pairwise term for agents `i`, `j` given their lane classes.
fn pair_term<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    i: usize,
    j: usize,
    spec: &MergeRewardSpec<T>,
) -> T {
    if lanes[i] == lanes[j] {
        spec.w_same_lane * same_lane_ttc_reward(xs[i], vs[i], xs[j], vs[j], spec)
    } else {
        spec.w_conflict * conflict_time_gap_reward(xs[i], vs[i], xs[j], vs[j], spec)
    }
}

/// Reward of agent `i` given all longitudinal positions, speeds, lane
/// classes, and the agent's own acceleration command.
pub fn agent_reward<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    u_i: T,
    i: usize,
    spec: &MergeRewardSpec<T>,
) -> RewardBreakdown<T> {
    let speed = spec.w_speed * speed_tracking_reward(vs[i], spec);
    let comfort = spec.w_comfort * comfort_reward(u_i);
    let mut same_lane = T::zero();
    let mut conflict = T::zero();
    for j in 0..xs.len() {
        if j == i {
            continue;
        }
        let term = pair_term(xs, vs, lanes, i, j, spec);
        if lanes[i] == lanes[j] {
            same_lane = same_lane + term;
        } else {
            conflict = conflict + term;
        }
    }
    RewardBreakdown { speed, comfort, same_lane, conflict, total: speed + comfort + same_lane + conflict }
}

/// Exact potential of the merge game: all self terms plus each pairwise term
/// counted once (`j < i`).
pub fn potential_function<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    us: &[T],
    spec: &MergeRewardSpec<T>,
) -> T {
    let n = xs.len();
    let mut phi = T::zero();
    for i in 0..n {
        phi = phi + spec.w_speed * speed_tracking_reward(vs[i], spec)
            + spec.w_comfort * comfort_reward(us[i]);
        for j in 0..i {
            phi = phi + pair_term(xs, vs, lanes, i, j, spec);
        }
    }
    phi
}

// ---------------------------------------------------------------------------
// Derivative-augmented variants used by the trainer's backward pass.
// Conventions: sign(0) = 0 at absolute-value kinks; at sqrt(T_i T_j) = 0 the
// (unbounded) square-root derivative is replaced by 0. Both choices pick a
// valid subgradient on measure-zero sets.
// ---------------------------------------------------------------------------

/// Value and partial derivatives of a pairwise term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGrad<T> {
    pub value: T,
    pub dx_i: T,
    pub dv_i: T,
    pub dx_j: T,
    pub dv_j: T,
}

fn sign0<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// [`same_lane_ttc_reward`] with partial derivatives.
pub fn same_lane_ttc_grad<T: Scalar>(x_i: T, v_i: T, x_j: T, v_j: T, spec: &MergeRewardSpec<T>) -> PairGrad<T> {
    let dx = x_i - x_j;
    let dv = v_i - v_j;
    let adx = dx.abs();
    let adv = dv.abs();
    if adv <= spec.v_c {
        let h = adx / spec.v_c + spec.eps;
        let inv_h2 = (h * h).recip();
        let d_adx = inv_h2 / spec.v_c;
        let gx = sign0(dx) * d_adx;
        PairGrad { value: -h.recip(), dx_i: gx, dv_i: T::zero(), dx_j: -gx, dv_j: T::zero() }
    } else {
        let h = adx / adv + spec.eps;
        let inv_h2 = (h * h).recip();
        let d_adx = inv_h2 / adv;
        let d_adv = -inv_h2 * adx / (adv * adv);
        let gx = sign0(dx) * d_adx;
        let gv = sign0(dv) * d_adv;
        PairGrad { value: -h.recip(), dx_i: gx, dv_i: gv, dx_j: -gx, dv_j: -gv }
    }
}

/// [`conflict_time_gap_reward`] with partial derivatives.
pub fn conflict_time_gap_grad<T: Scalar>(x_i: T, v_i: T, x_j: T, v_j: T, spec: &MergeRewardSpec<T>) -> PairGrad<T> {
    let eps = spec.eps;
    let t_i = time_to_conflict(x_i, v_i, spec);
    let t_j = time_to_conflict(x_j, v_j, spec);
    let s = (t_i * t_j).sqrt();
    let diff = t_i - t_j;
    let d = s * diff * diff + eps;
    let inv_d2 = (d * d).recip();
    // dD/dT taken as 0 where sqrt(T_i T_j) = 0 (subgradient at the kink).
    let (dd_dti, dd_dtj) = if s > T::zero() {
        let half = real::<T>(0.5);
        (
            half * t_j / s * diff * diff + s * (diff + diff),
            half * t_i / s * diff * diff - s * (diff + diff),
        )
    } else {
        (T::zero(), T::zero())
    };
    let dti_dx = sign0(x_i - spec.x_c) / (v_i + eps);
    let dti_dv = -(x_i - spec.x_c).abs() / ((v_i + eps) * (v_i + eps));
    let dtj_dx = sign0(x_j - spec.x_c) / (v_j + eps);
    let dtj_dv = -(x_j - spec.x_c).abs() / ((v_j + eps) * (v_j + eps));
    PairGrad {
        value: -d.recip(),
        dx_i: inv_d2 * dd_dti * dti_dx,
        dv_i: inv_d2 * dd_dti * dti_dv,
        dx_j: inv_d2 * dd_dtj * dtj_dx,
        dv_j: inv_d2 * dd_dtj * dtj_dv,
    }
}

/// Gradient of the potential with respect to every position, speed, and
/// acceleration. Returns `(phi, dphi/dx, dphi/dv, dphi/du)`.
pub fn potential_grad<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    us: &[T],
    spec: &MergeRewardSpec<T>,
) -> (T, Vec<T>, Vec<T>, Vec<T>) {
    let n = xs.len();
    let mut phi = T::zero();
    let mut gx = vec![T::zero(); n];
    let mut gv = vec![T::zero(); n];
    let mut gu = vec![T::zero(); n];
    let two = real::<T>(2.0);
    for i in 0..n {
        phi = phi + spec.w_speed * speed_tracking_reward(vs[i], spec)
            + spec.w_comfort * comfort_reward(us[i]);
        gv[i] = gv[i] - spec.w_speed * two * (vs[i] - spec.v_d);
        gu[i] = gu[i] - spec.w_comfort * two * us[i];
        for j in 0..i {
            let (w, g) = if lanes[i] == lanes[j] {
                (spec.w_same_lane, same_lane_ttc_grad(xs[i], vs[i], xs[j], vs[j], spec))
            } else {
                (spec.w_conflict, conflict_time_gap_grad(xs[i], vs[i], xs[j], vs[j], spec))
            };
            phi = phi + w * g.value;
            gx[i] = gx[i] + w * g.dx_i;
            gv[i] = gv[i] + w * g.dv_i;
            gx[j] = gx[j] + w * g.dx_j;
            gv[j] = gv[j] + w * g.dv_j;
        }
    }
    (phi, gx, gv, gu)
}

/// Gradient of a single agent's reward with respect to every position,
/// speed, and its own acceleration. Returns `(r_i, dr/dx, dr/dv, dr/du_i)`.
pub fn agent_reward_grad<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    u_i: T,
    i: usize,
    spec: &MergeRewardSpec<T>,
) -> (T, Vec<T>, Vec<T>, T) {
    let n = xs.len();
    let mut gx = vec![T::zero(); n];
    let mut gv = vec![T::zero(); n];
    let two = real::<T>(2.0);
    let mut r = spec.w_speed * speed_tracking_reward(vs[i], spec) + spec.w_comfort * comfort_reward(u_i);
    gv[i] = gv[i] - spec.w_speed * two * (vs[i] - spec.v_d);
    let gu = -spec.w_comfort * two * u_i;
    for j in 0..n {
        if j == i {
            continue;
        }
        let (w, g) = if lanes[i] == lanes[j] {
            (spec.w_same_lane, same_lane_ttc_grad(xs[i], vs[i], xs[j], vs[j], spec))
        } else {
            (spec.w_conflict, conflict_time_gap_grad(xs[i], vs[i], xs[j], vs[j], spec))
        };
        r = r + w * g.value;
        gx[i] = gx[i] + w * g.dx_i;
        gv[i] = gv[i] + w * g.dv_i;
        gx[j] = gx[j] + w * g.dx_j;
        gv[j] = gv[j] + w * g.dv_j;
    }
    (r, gx, gv, gu)
}

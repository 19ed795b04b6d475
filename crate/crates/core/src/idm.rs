//! Intelligent Driver Model (IDM) car-following baseline.
//!
//! Smooth longitudinal acceleration from the own speed, the net
//! (bumper-to-bumper) gap to the immediate leader, and the closing speed:
//!
//! `a = a_max · (1 − (v/v0)^δ − (s*/gap)²)` with desired gap
//! `s* = s0 + max(0, v·T_h + v·Δv / (2·√(a_max·b)))`,
//! clamped to `[-accel_bound, accel_bound]`.
//!
//! A free road is `gap = +∞` (the interaction term vanishes). The model is
//! used two ways: as the surrounding-traffic baseline, and as part of the
//! differentiable rollout when a learning ego drives among IDM followers —
//! hence the exact partial derivatives alongside the value.

use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// IDM parameters. Defaults: desired speed 15 m/s, time headway 1.5 s,
/// jam distance 2 m, max acceleration 1.5 m/s², comfortable braking 2 m/s²,
/// exponent 4, clamp at standard gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams<T> {
    /// Desired free-road speed v0 [m/s].
    pub v0: T,
    /// Desired time headway T_h [s].
    pub t_headway: T,
    /// Jam (standstill) distance s0 [m].
    pub s0: T,
    /// Maximum acceleration a_max [m/s²].
    pub a_max: T,
    /// Comfortable braking deceleration b [m/s²].
    pub b_comfort: T,
    /// Free-road exponent δ.
    pub delta: T,
    /// Output clamp bound [m/s²].
    pub accel_bound: T,
}

impl<T: Scalar> Default for IdmParams<T> {
    fn default() -> Self {
        IdmParams {
            v0: real(15.0),
            t_headway: real(1.5),
            s0: real(2.0),
            a_max: real(1.5),
            b_comfort: real(2.0),
            delta: real(4.0),
            accel_bound: real(crate::dynamics::STANDARD_GRAVITY),
        }
    }
}

/// Floor applied to the gap so a vanishing gap saturates the braking term
/// instead of producing non-finite intermediates (the clamp then returns
/// `-accel_bound`).
fn effective_gap<T: Scalar>(gap: T) -> T {
    gap.max(real(1e-6))
}

/// IDM acceleration for net gap `gap` [m] (`+∞` for a free road), own speed
/// `v` [m/s] (non-negative), and closing speed `dv = v − v_leader` [m/s].
pub fn idm_acceleration<T: Scalar>(gap: T, v: T, dv: T, p: &IdmParams<T>) -> T {
    let gap = effective_gap(gap);
    let c = (p.a_max * p.b_comfort).sqrt();
    let two = real::<T>(2.0);
    let dynamic = v * p.t_headway + v * dv / (two * c);
    let s_star = p.s0 + dynamic.max(T::zero());
    let ratio = s_star / gap;
    let a = p.a_max * (T::one() - (v / p.v0).powf(p.delta) - ratio * ratio);
    a.max(-p.accel_bound).min(p.accel_bound)
}

/// Value and exact partial derivatives of [`idm_acceleration`].
///
/// Conventions at the kinks: the `max(0, ·)` inside the desired gap takes
/// derivative 1 at exactly zero (positive branch, matching the Leaky-ReLU
/// convention); a clamped output has all partials zero, an output exactly at
/// the clamp boundary keeps its interior partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmGrad<T> {
    pub a: T,
    /// ∂a/∂gap.
    pub d_gap: T,
    /// ∂a/∂v (own speed).
    pub d_v: T,
    /// ∂a/∂dv (closing speed).
    pub d_dv: T,
}

/// Computes [`idm_acceleration`] together with its partial derivatives.
pub fn idm_acceleration_grad<T: Scalar>(gap: T, v: T, dv: T, p: &IdmParams<T>) -> IdmGrad<T> {
    let gap_eff = effective_gap(gap);
    let c = (p.a_max * p.b_comfort).sqrt();
    let two = real::<T>(2.0);
    let dynamic = v * p.t_headway + v * dv / (two * c);
    let active = dynamic >= T::zero();
    let s_star = p.s0 + dynamic.max(T::zero());
    let ratio = s_star / gap_eff;
    let free = (v / p.v0).powf(p.delta);
    let a_raw = p.a_max * (T::one() - free - ratio * ratio);

    if a_raw < -p.accel_bound || a_raw > p.accel_bound {
        return IdmGrad {
            a: a_raw.max(-p.accel_bound).min(p.accel_bound),
            d_gap: T::zero(),
            d_v: T::zero(),
            d_dv: T::zero(),
        };
    }
    // Interior (or exactly at the clamp boundary): differentiate the raw form.
    // The gap floor is only reachable in the saturated-brake region, so the
    // interior expression always uses the raw gap.
    let d_gap = two * p.a_max * s_star * s_star / (gap_eff * gap_eff * gap_eff);
    let ds_dv = if active { p.t_headway + dv / (two * c) } else { T::zero() };
    let ds_ddv = if active { v / (two * c) } else { T::zero() };
    // d(free)/dv = δ·(v/v0)^(δ−1)/v0; at v = 0 with δ > 1 this is 0, and
    // powf(0, δ−1) already returns 0.
    let dfree_dv = p.delta * (v / p.v0).powf(p.delta - T::one()) / p.v0;
    let d_v = p.a_max * (-dfree_dv - two * ratio * ds_dv / gap_eff);
    let d_dv = p.a_max * (-two * ratio * ds_ddv / gap_eff);
    IdmGrad { a: a_raw, d_gap, d_v, d_dv }
}

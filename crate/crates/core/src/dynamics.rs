//! Kinematic bicycle dynamics, time-to-collision, safety-feasible action
//! intervals, and rectangle-overlap collision detection.
//!
//! The vehicle model is the discrete kinematic bicycle
//!
//! ```text
//! x'   = x + v cos(φ + β) Δt
//! y'   = y + v sin(φ + β) Δt
//! v'   = v + u Δt                    (then clamped to [0, v_max])
//! φ'   = φ + (v / l_r) sin(β) Δt
//! β    = arctan( l_r / (l_r + l_f) · tan(δ_f) )
//! ```
//!
//! applied as one simultaneous forward-Euler update: every line reads the
//! pre-step state. The speed clamp is a hard projection applied after the
//! update and reported via a flag so callers (and the trainer's backward
//! pass) can gate gradients on it.

use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// Standard gravity [m/s²]; the longitudinal action space is `[-g, g]`.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Errors from the dynamics routines.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DynamicsError {
    /// A state, action, or parameter carried NaN/inf.
    #[error("non-finite input in {context}")]
    NonFinite { context: &'static str },
    /// Time step must be strictly positive.
    #[error("time step must be > 0")]
    NonPositiveDt,
    /// Geometry lengths must be strictly positive.
    #[error("vehicle geometry must have positive dimensions")]
    BadGeometry,
}

/// Axle and body dimensions of a vehicle [m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry<T> {
    /// Distance from the center of gravity to the front axle [m].
    pub l_f: T,
    /// Distance from the center of gravity to the rear axle [m].
    pub l_r: T,
    /// Bounding-box length [m].
    pub body_length: T,
    /// Bounding-box width [m].
    pub body_width: T,
}

impl<T: Scalar> VehicleGeometry<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let vals = [self.l_f, self.l_r, self.body_length, self.body_width];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { context: "geometry" });
        }
        if vals.iter().any(|v| *v <= T::zero()) {
            return Err(DynamicsError::BadGeometry);
        }
        Ok(())
    }
}

impl<T: Scalar> Default for VehicleGeometry<T> {
    fn default() -> Self {
        VehicleGeometry {
            l_f: real(1.4),          // CoG to front axle [m]
            l_r: real(1.4),          // CoG to rear axle [m]
            body_length: real(4.5),  // sedan-scale box [m]
            body_width: real(1.8),
        }
    }
}

/// Planar vehicle state: position of the center of gravity, speed, heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<T> {
    /// Longitudinal position [m].
    pub x: T,
    /// Lateral position [m].
    pub y: T,
    /// Speed [m/s], kept in `[0, v_max]`.
    pub v: T,
    /// Heading angle [rad].
    pub phi: T,
}

impl<T: Scalar> VehicleState<T> {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.phi.is_finite()
    }
}

/// Control input: longitudinal acceleration and front steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleAction<T> {
    /// Longitudinal acceleration u [m/s²].
    pub accel: T,
    /// Front-wheel steering angle δ_f [rad].
    pub steer: T,
}

impl<T: Scalar> VehicleAction<T> {
    pub fn longitudinal(accel: T) -> Self {
        VehicleAction { accel, steer: T::zero() }
    }
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    pub state: VehicleState<T>,
    /// True when the post-update speed was projected back into `[0, v_max]`.
    pub speed_clamped: bool,
}

/// Slip angle `β = arctan( l_r/(l_r+l_f) · tan(δ_f) )`.
pub fn slip_angle<T: Scalar>(steer: T, l_f: T, l_r: T) -> T {
    (l_r / (l_r + l_f) * steer.tan()).atan()
}

/// One forward-Euler step of the kinematic bicycle model.
///
/// All five update lines read the pre-step state (`x'` uses the current `v`,
/// not the accelerated one). The speed is clamped to `[0, v_max]` after the
/// update; the clamp is reported in the outcome flag.
pub fn step_vehicle<T: Scalar>(
    state: &VehicleState<T>,
    action: &VehicleAction<T>,
    geom: &VehicleGeometry<T>,
    dt: T,
    v_max: T,
) -> Result<StepOutcome<T>, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite { context: "state" });
    }
    if !(action.accel.is_finite() && action.steer.is_finite()) {
        return Err(DynamicsError::NonFinite { context: "action" });
    }
    if !dt.is_finite() || dt <= T::zero() {
        return Err(DynamicsError::NonPositiveDt);
    }
    geom.validate()?;

    let beta = slip_angle(action.steer, geom.l_f, geom.l_r);
    let heading = state.phi + beta;
    let x = state.x + state.v * heading.cos() * dt;
    let y = state.y + state.v * heading.sin() * dt;
    let v_raw = state.v + action.accel * dt;
    let v = v_raw.max(T::zero()).min(v_max);
    let phi = state.phi + state.v / geom.l_r * beta.sin() * dt;
    Ok(StepOutcome { state: VehicleState { x, y, v, phi }, speed_clamped: v != v_raw })
}

/// Time to collision for a leader/follower pair.
///
/// `gap` is the longitudinal distance between the pair [m] and
/// `closing_speed` the rate at which it shrinks [m/s]. A non-closing pair
/// (`closing_speed <= 0`) never collides: TTC is `+inf`.
pub fn time_to_collision<T: Scalar>(gap: T, closing_speed: T) -> T {
    if closing_speed <= T::zero() {
        T::infinity()
    } else {
        gap.max(T::zero()) / closing_speed
    }
}

/// Parameters of the one-step safety-feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityParams<T> {
    /// Integration step used for the one-step lookahead [s].
    pub dt: T,
    /// Safety time-to-collision threshold τ_s [s].
    pub tau_s: T,
    /// Speed ceiling shared with `step_vehicle` [m/s].
    pub v_max: T,
    /// Acceleration bound: the action space is `[-accel_bound, accel_bound]`.
    pub accel_bound: T,
}

impl<T: Scalar> Default for FeasibilityParams<T> {
    fn default() -> Self {
        FeasibilityParams {
            dt: real(0.1),
            tau_s: real(3.0),
            v_max: real(30.0),
            accel_bound: real(STANDARD_GRAVITY),
        }
    }
}

/// Set of safety-feasible longitudinal accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet<T> {
    /// Non-empty closed interval `[lo, hi]` within the acceleration bounds.
    Interval { lo: T, hi: T },
    /// No acceleration satisfies both TTC constraints; fall back to the
    /// single hardest-braking action.
    EmergencyBrake { u: T },
}

/// Result of projecting a raw acceleration onto a feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedAction<T> {
    pub u: T,
    /// True when the raw command was inside the set (gradient passes through);
    /// false when it was clamped or overridden (gradient blocked).
    pub passthrough: bool,
}

impl<T: Scalar> FeasibleSet<T> {
    /// Clamps `raw` into the set. The subgradient convention is identity
    /// inside the interval (boundary included), zero outside.
    pub fn project(&self, raw: T) -> ProjectedAction<T> {
        match *self {
            FeasibleSet::Interval { lo, hi } => {
                if raw < lo {
                    ProjectedAction { u: lo, passthrough: false }
                } else if raw > hi {
                    ProjectedAction { u: hi, passthrough: false }
                } else {
                    ProjectedAction { u: raw, passthrough: true }
                }
            }
            FeasibleSet::EmergencyBrake { u } => ProjectedAction { u, passthrough: false },
        }
    }
}

/// Computes the set of accelerations that keep the ego TTC-safe for one step.
///
/// The lookahead advances the ego with acceleration `u` and steering 0, and
/// the leader/follower (when present) with their current speeds, all by one
/// Euler step. Feasible means: post-step `TTC(ego → leader) >= tau_s` and
/// `TTC(follower → ego) >= tau_s`, with distances measured between vehicle
/// centers. Both constraints are monotone in `u`, so the set is an interval;
/// when it is empty the hardest-braking singleton `u = -accel_bound` is
/// returned as a fallback.
pub fn feasible_action_interval<T: Scalar>(
    ego: &VehicleState<T>,
    leader: Option<&VehicleState<T>>,
    follower: Option<&VehicleState<T>>,
    params: &FeasibilityParams<T>,
) -> Result<FeasibleSet<T>, DynamicsError> {
    if !ego.is_finite() {
        return Err(DynamicsError::NonFinite { context: "ego state" });
    }
    if let Some(l) = leader {
        if !l.is_finite() {
            return Err(DynamicsError::NonFinite { context: "leader state" });
        }
    }
    if let Some(f) = follower {
        if !f.is_finite() {
            return Err(DynamicsError::NonFinite { context: "follower state" });
        }
    }
    if !(params.dt > T::zero()) || !(params.tau_s > T::zero()) {
        return Err(DynamicsError::NonPositiveDt);
    }

    let bound = params.accel_bound;
    let mut lo = -bound;
    let mut hi = bound;

    // Post-step ego speed is clamp(v + u dt, 0, v_max): monotone in u. Each
    // constraint therefore reduces to a threshold on the post-step speed.
    if let Some(lead) = leader {
        // Gap after one step at current speeds (positions use pre-step speeds).
        let gap = ((lead.x + lead.v * params.dt) - (ego.x + ego.v * params.dt)).abs();
        // TTC >= tau_s  <=>  post-step ego speed <= lead.v + gap / tau_s.
        let w = lead.v + gap / params.tau_s;
        if w < params.v_max {
            hi = hi.min((w - ego.v) / params.dt);
        }
    }
    if let Some(fol) = follower {
        let gap = ((ego.x + ego.v * params.dt) - (fol.x + fol.v * params.dt)).abs();
        // TTC >= tau_s  <=>  post-step ego speed >= fol.v - gap / tau_s.
        let w = fol.v - gap / params.tau_s;
        if w > T::zero() {
            lo = lo.max((w - ego.v) / params.dt);
        }
    }

    if lo <= hi {
        Ok(FeasibleSet::Interval { lo, hi })
    } else {
        Ok(FeasibleSet::EmergencyBrake { u: -bound })
    }
}

/// Axis-aligned half-extents of a heading-rotated body rectangle.
fn aabb_half_extents<T: Scalar>(phi: T, geom: &VehicleGeometry<T>) -> (T, T) {
    let half = real::<T>(0.5);
    let (s, c) = (phi.sin().abs(), phi.cos().abs());
    let ex = half * (geom.body_length * c + geom.body_width * s);
    let ey = half * (geom.body_length * s + geom.body_width * c);
    (ex, ey)
}

/// Returns the first colliding pair `(i, j)` with `i < j`, scanning pairs in
/// lexicographic index order. Collision means the axis-aligned bounding boxes
/// of the heading-rotated body rectangles overlap with positive area; exact
/// touching does not count.
pub fn detect_collision<T: Scalar>(
    states: &[VehicleState<T>],
    geom: &VehicleGeometry<T>,
) -> Option<(usize, usize)> {
    let ext: Vec<(T, T)> = states.iter().map(|s| aabb_half_extents(s.phi, geom)).collect();
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let dx = (states[i].x - states[j].x).abs();
            let dy = (states[i].y - states[j].y).abs();
            if dx < ext[i].0 + ext[j].0 && dy < ext[i].1 + ext[j].1 {
                return Some((i, j));
            }
        }
    }
    None
}

/// Closest-point distance between two vehicles' axis-aligned bounding boxes;
/// zero when they touch or overlap. Used by the evaluation metrics.
pub fn bounding_box_distance<T: Scalar>(
    a: &VehicleState<T>,
    b: &VehicleState<T>,
    geom: &VehicleGeometry<T>,
) -> T {
    let (exa, eya) = aabb_half_extents(a.phi, geom);
    let (exb, eyb) = aabb_half_extents(b.phi, geom);
    let dx = ((a.x - b.x).abs() - (exa + exb)).max(T::zero());
    let dy = ((a.y - b.y).abs() - (eya + eyb)).max(T::zero());
    (dx * dx + dy * dy).sqrt()
}

//! Parameter-sharing deterministic policy: local observation construction,
//! a 3-layer fully-connected network with Leaky-ReLU hidden activations and
//! a tanh-bounded output, exact reverse-mode derivatives, and a versioned
//! JSON parameter bundle.
//!
//! Every agent evaluates the *same* parameter vector; agents are
//! distinguished purely by their observation (lane flag and one-hot index),
//! so updating the shared parameters changes every agent's policy at once.
//!
//! The observation is local: the agent's own signed distance to the merge
//! conflict point and speed, the immediate leader and follower *within its
//! current lane* (distance, relative speed, presence flag, with sentinel
//! values when absent), a lane flag, and a one-hot agent index. Features are
//! normalized (positions by `pos_scale`, speeds by `speed_scale`) because
//! unnormalized inputs train poorly.
//!
//! Derivative conventions (shared with the trainer's backward pass):
//! Leaky-ReLU uses the positive-branch slope 1 at a pre-activation of
//! exactly zero; the clamp onto a feasible action interval has subgradient
//! 1 inside the interval (boundary included) and 0 outside (see
//! [`crate::dynamics::FeasibleSet::project`]).

use crate::rewards::Lane;
use crate::scalar::{real, to_f64, Scalar};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Errors from network evaluation and parameter-bundle I/O.
#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    /// The feature vector length does not match the network input layer.
    #[error("observation has {got} features but the network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// More agents in the scene than one-hot slots.
    #[error("scene has {agents} agents but only {slots} one-hot slots are available")]
    TooManyAgents { agents: usize, slots: usize },
    /// Bundle format version not understood.
    #[error("unsupported policy bundle version {0} (supported: {BUNDLE_VERSION})")]
    UnsupportedVersion(u32),
    /// Bundle arrays inconsistent with the declared layer sizes.
    #[error("policy bundle shape inconsistent: {0}")]
    BadShape(String),
    /// Bundle is not valid JSON.
    #[error("policy bundle is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

/// Normalization constants and sentinels for observation construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec<T> {
    /// Longitudinal coordinate of the merge conflict point [m]. Must match
    /// the reward spec's conflict point.
    pub x_c: T,
    /// Sentinel distance reported for an absent neighbor [m].
    pub d_max: T,
    /// Position features are divided by this scale [m].
    pub pos_scale: T,
    /// Speed features are divided by this scale [m/s].
    pub speed_scale: T,
}

impl<T: Scalar> Default for ObservationSpec<T> {
    fn default() -> Self {
        ObservationSpec {
            x_c: real(180.0),
            d_max: real(200.0),
            pos_scale: real(200.0),
            speed_scale: real(30.0),
        }
    }
}

/// One agent's local observation, in physical units (normalization happens
/// in [`Observation::features`]).
///
/// Relative speeds are `neighbor speed − own speed` (positive = the leader
/// is pulling away / the follower is closing in).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    /// Signed longitudinal distance to the conflict point, `x_i − x_c` [m]
    /// (negative before the point, positive after).
    pub dist_to_conflict: T,
    /// Own speed [m/s].
    pub speed: T,
    /// Distance to the immediate same-lane leader [m]; `d_max` when absent.
    pub leader_dist: T,
    /// Leader speed minus own speed [m/s]; 0 when absent.
    pub leader_rel_speed: T,
    /// 1 when a same-lane leader exists, else 0.
    pub leader_flag: T,
    /// Distance to the immediate same-lane follower [m]; `d_max` when absent.
    pub follower_dist: T,
    /// Follower speed minus own speed [m/s]; 0 when absent.
    pub follower_rel_speed: T,
    /// 1 when a same-lane follower exists, else 0.
    pub follower_flag: T,
    /// 1 on the on-ramp, 0 on the target lane.
    pub lane_flag: T,
    /// One-hot agent identity, a 1 exactly at the agent's index.
    pub agent_onehot: Vec<T>,
}

/// Number of features preceding the one-hot block.
pub const BASE_FEATURES: usize = 9;

/// Feature-vector indices (see [`Observation::features`] for the layout).
pub mod feat {
    pub const DIST_TO_CONFLICT: usize = 0;
    pub const SPEED: usize = 1;
    pub const LEADER_DIST: usize = 2;
    pub const LEADER_REL_SPEED: usize = 3;
    pub const LEADER_FLAG: usize = 4;
    pub const FOLLOWER_DIST: usize = 5;
    pub const FOLLOWER_REL_SPEED: usize = 6;
    pub const FOLLOWER_FLAG: usize = 7;
    pub const LANE_FLAG: usize = 8;
}

impl<T: Scalar> Observation<T> {
    /// Normalized feature vector with the one-hot block padded to
    /// `onehot_slots` entries (padding lets a network trained for N agents
    /// drive scenes with fewer).
    ///
    /// Layout: `[dist_to_conflict/ps, speed/ss, leader_dist/ps,
    /// leader_rel/ss, leader_flag, follower_dist/ps, follower_rel/ss,
    /// follower_flag, lane_flag, onehot...]`.
    pub fn features(&self, onehot_slots: usize, spec: &ObservationSpec<T>) -> Result<Vec<T>, PolicyError> {
        if self.agent_onehot.len() > onehot_slots {
            return Err(PolicyError::TooManyAgents {
                agents: self.agent_onehot.len(),
                slots: onehot_slots,
            });
        }
        let ps = spec.pos_scale;
        let ss = spec.speed_scale;
        let mut f = Vec::with_capacity(BASE_FEATURES + onehot_slots);
        f.push(self.dist_to_conflict / ps);
        f.push(self.speed / ss);
        f.push(self.leader_dist / ps);
        f.push(self.leader_rel_speed / ss);
        f.push(self.leader_flag);
        f.push(self.follower_dist / ps);
        f.push(self.follower_rel_speed / ss);
        f.push(self.follower_flag);
        f.push(self.lane_flag);
        f.extend(self.agent_onehot.iter().copied());
        f.resize(BASE_FEATURES + onehot_slots, T::zero());
        Ok(f)
    }
}

/// Immediate same-lane leader and follower of agent `i` by longitudinal
/// order: the leader is the nearest same-lane vehicle strictly ahead, the
/// follower the nearest strictly behind. Vehicles at exactly the same
/// position are neither (such a pair is already colliding).
pub fn neighbors_in_lane<T: Scalar>(xs: &[T], lanes: &[Lane], i: usize) -> (Option<usize>, Option<usize>) {
    let mut leader: Option<usize> = None;
    let mut follower: Option<usize> = None;
    for j in 0..xs.len() {
        if j == i || lanes[j] != lanes[i] {
            continue;
        }
        if xs[j] > xs[i] && leader.is_none_or(|l| xs[j] < xs[l]) {
            leader = Some(j);
        }
        if xs[j] < xs[i] && follower.is_none_or(|f| xs[j] > xs[f]) {
            follower = Some(j);
        }
    }
    (leader, follower)
}

/// Builds agent `i`'s local observation from the global longitudinal state.
///
/// The one-hot block has one slot per agent in the scene; pad it when the
/// consuming network was sized for more agents (see
/// [`Observation::features`]).
pub fn build_observation<T: Scalar>(
    xs: &[T],
    vs: &[T],
    lanes: &[Lane],
    i: usize,
    spec: &ObservationSpec<T>,
) -> Observation<T> {
    assert!(i < xs.len(), "agent index {i} out of range for {} vehicles", xs.len());
    let (leader, follower) = neighbors_in_lane(xs, lanes, i);
    let (leader_dist, leader_rel_speed, leader_flag) = match leader {
        Some(l) => (xs[l] - xs[i], vs[l] - vs[i], T::one()),
        None => (spec.d_max, T::zero(), T::zero()),
    };
    let (follower_dist, follower_rel_speed, follower_flag) = match follower {
        Some(f) => (xs[i] - xs[f], vs[f] - vs[i], T::one()),
        None => (spec.d_max, T::zero(), T::zero()),
    };
    let mut agent_onehot = vec![T::zero(); xs.len()];
    agent_onehot[i] = T::one();
    Observation {
        dist_to_conflict: xs[i] - spec.x_c,
        speed: vs[i],
        leader_dist,
        leader_rel_speed,
        leader_flag,
        follower_dist,
        follower_rel_speed,
        follower_flag,
        lane_flag: if lanes[i] == Lane::Ramp { T::one() } else { T::zero() },
        agent_onehot,
    }
}

// ---------------------------------------------------------------------------
// The shared network
// ---------------------------------------------------------------------------

/// Current parameter-bundle format version.
pub const BUNDLE_VERSION: u32 = 1;

/// 3-layer fully-connected policy network:
/// `u = scale · tanh(w3·lrelu(W2·lrelu(W1·o + b1) + b2) + b3)`.
///
/// Weight matrices are row-major `[out][in]`. The output is always within
/// `[-action_scale, action_scale]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    /// `hidden[0] × input_dim`.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `hidden[1] × hidden[0]`.
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    /// `1 × hidden[1]`.
    pub w3: Vec<T>,
    pub b3: T,
    /// Leaky-ReLU negative-branch slope.
    pub leaky_slope: T,
    /// Output bound (the gravity-scaled acceleration limit).
    pub action_scale: T,
}

/// Cached intermediates of one forward pass, consumed by [`PolicyNet::backward`].
#[derive(Debug, Clone)]
pub struct NetCache<T> {
    pub z1: Vec<T>,
    pub h1: Vec<T>,
    pub z2: Vec<T>,
    pub h2: Vec<T>,
    /// `tanh` of the output pre-activation.
    pub tanh_z3: T,
}

/// Parameter-space gradient accumulator, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub w3: Vec<T>,
    pub b3: T,
}

impl<T: Scalar> NetGrads<T> {
    pub fn zeros_like(net: &PolicyNet<T>) -> Self {
        NetGrads {
            w1: vec![T::zero(); net.w1.len()],
            b1: vec![T::zero(); net.b1.len()],
            w2: vec![T::zero(); net.w2.len()],
            b2: vec![T::zero(); net.b2.len()],
            w3: vec![T::zero(); net.w3.len()],
            b3: T::zero(),
        }
    }

    pub fn add(&mut self, other: &NetGrads<T>) {
        let zip = |a: &mut Vec<T>, b: &Vec<T>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        };
        zip(&mut self.w1, &other.w1);
        zip(&mut self.b1, &other.b1);
        zip(&mut self.w2, &other.w2);
        zip(&mut self.b2, &other.b2);
        zip(&mut self.w3, &other.w3);
        self.b3 = self.b3 + other.b3;
    }

    pub fn scale(&mut self, c: T) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3] {
            for x in v.iter_mut() {
                *x = *x * c;
            }
        }
        self.b3 = self.b3 * c;
    }

    pub fn l2_norm(&self) -> T {
        let mut s = T::zero();
        for v in [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3] {
            for x in v.iter() {
                s = s + *x * *x;
            }
        }
        s = s + self.b3 * self.b3;
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
            && self.b3.is_finite()
    }
}

fn lrelu<T: Scalar>(z: T, slope: T) -> T {
    if z >= T::zero() {
        z
    } else {
        slope * z
    }
}

/// Derivative of the Leaky-ReLU; the kink at zero takes the positive-branch
/// value 1.
fn lrelu_gate<T: Scalar>(z: T, slope: T) -> T {
    if z >= T::zero() {
        T::one()
    } else {
        slope
    }
}

impl<T: Scalar> PolicyNet<T> {
    /// All-zero parameters (output identically 0) with the default slope
    /// (0.01) and action scale (standard gravity).
    pub fn zeros(input_dim: usize, hidden: [usize; 2]) -> Self {
        PolicyNet {
            input_dim,
            hidden,
            w1: vec![T::zero(); hidden[0] * input_dim],
            b1: vec![T::zero(); hidden[0]],
            w2: vec![T::zero(); hidden[1] * hidden[0]],
            b2: vec![T::zero(); hidden[1]],
            w3: vec![T::zero(); hidden[1]],
            b3: T::zero(),
            leaky_slope: real(0.01),
            action_scale: real(crate::dynamics::STANDARD_GRAVITY),
        }
    }

    /// Uniform `±1/√fan_in` initialization per layer, deterministic in the
    /// RNG state.
    pub fn random(input_dim: usize, hidden: [usize; 2], rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        let fill = |v: &mut [T], fan_in: usize, rng: &mut ChaCha8Rng| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for x in v.iter_mut() {
                *x = real(rng.gen_range(-s..s));
            }
        };
        fill(&mut net.w1, input_dim, rng);
        fill(&mut net.b1, input_dim, rng);
        fill(&mut net.w2, hidden[0], rng);
        fill(&mut net.b2, hidden[0], rng);
        fill(&mut net.w3, hidden[1], rng);
        let s3 = 1.0 / (hidden[1] as f64).sqrt();
        net.b3 = real(rng.gen_range(-s3..s3));
        net
    }

    fn check_features(&self, features: &[T]) -> Result<(), PolicyError> {
        if features.len() != self.input_dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Forward pass returning the bounded acceleration command.
    pub fn forward(&self, features: &[T]) -> Result<T, PolicyError> {
        Ok(self.forward_cached(features)?.0)
    }

    /// Forward pass that also returns the intermediates needed by
    /// [`PolicyNet::backward`].
    pub fn forward_cached(&self, features: &[T]) -> Result<(T, NetCache<T>), PolicyError> {
        self.check_features(features)?;
        let (h1n, h2n) = (self.hidden[0], self.hidden[1]);
        let mut z1 = vec![T::zero(); h1n];
        for r in 0..h1n {
            let mut acc = self.b1[r];
            let row = &self.w1[r * self.input_dim..(r + 1) * self.input_dim];
            for (w, o) in row.iter().zip(features) {
                acc = acc + *w * *o;
            }
            z1[r] = acc;
        }
        let h1: Vec<T> = z1.iter().map(|&z| lrelu(z, self.leaky_slope)).collect();
        let mut z2 = vec![T::zero(); h2n];
        for r in 0..h2n {
            let mut acc = self.b2[r];
            let row = &self.w2[r * h1n..(r + 1) * h1n];
            for (w, h) in row.iter().zip(&h1) {
                acc = acc + *w * *h;
            }
            z2[r] = acc;
        }
        let h2: Vec<T> = z2.iter().map(|&z| lrelu(z, self.leaky_slope)).collect();
        let mut z3 = self.b3;
        for (w, h) in self.w3.iter().zip(&h2) {
            z3 = z3 + *w * *h;
        }
        let tanh_z3 = z3.tanh();
        Ok((self.action_scale * tanh_z3, NetCache { z1, h1, z2, h2, tanh_z3 }))
    }

    /// Exact reverse-mode derivatives of [`PolicyNet::forward`]: accumulates
    /// `upstream · ∂u/∂θ` into `grads` and returns `upstream · ∂u/∂o`.
    pub fn backward(
        &self,
        features: &[T],
        cache: &NetCache<T>,
        upstream: T,
        grads: &mut NetGrads<T>,
    ) -> Vec<T> {
        let (h1n, h2n) = (self.hidden[0], self.hidden[1]);
        let dz3 = upstream * self.action_scale * (T::one() - cache.tanh_z3 * cache.tanh_z3);
        grads.b3 = grads.b3 + dz3;
        let mut dz2 = vec![T::zero(); h2n];
        for r in 0..h2n {
            grads.w3[r] = grads.w3[r] + dz3 * cache.h2[r];
            dz2[r] = dz3 * self.w3[r] * lrelu_gate(cache.z2[r], self.leaky_slope);
        }
        let mut dh1 = vec![T::zero(); h1n];
        for r in 0..h2n {
            let g = dz2[r];
            if g == T::zero() {
                continue;
            }
            grads.b2[r] = grads.b2[r] + g;
            let row = &mut grads.w2[r * h1n..(r + 1) * h1n];
            let wrow = &self.w2[r * h1n..(r + 1) * h1n];
            for c in 0..h1n {
                row[c] = row[c] + g * cache.h1[c];
                dh1[c] = dh1[c] + g * wrow[c];
            }
        }
        let mut dinput = vec![T::zero(); self.input_dim];
        for r in 0..h1n {
            let g = dh1[r] * lrelu_gate(cache.z1[r], self.leaky_slope);
            if g == T::zero() {
                continue;
            }
            grads.b1[r] = grads.b1[r] + g;
            let row = &mut grads.w1[r * self.input_dim..(r + 1) * self.input_dim];
            let wrow = &self.w1[r * self.input_dim..(r + 1) * self.input_dim];
            for c in 0..self.input_dim {
                row[c] = row[c] + g * features[c];
                dinput[c] = dinput[c] + g * wrow[c];
            }
        }
        dinput
    }

    /// Gradient-ascent step `θ ← θ + step · g`.
    pub fn ascend(&mut self, grads: &NetGrads<T>, step: T) {
        let zip = |a: &mut Vec<T>, b: &Vec<T>| {
            for (x, g) in a.iter_mut().zip(b) {
                *x = *x + step * *g;
            }
        };
        zip(&mut self.w1, &grads.w1);
        zip(&mut self.b1, &grads.b1);
        zip(&mut self.w2, &grads.w2);
        zip(&mut self.b2, &grads.b2);
        zip(&mut self.w3, &grads.w3);
        self.b3 = self.b3 + step * grads.b3;
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    /// Reads parameter `k` in the fixed order `w1, b1, w2, b2, w3, b3`.
    pub fn param_get(&self, k: usize) -> T {
        let parts: [&[T]; 5] = [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3];
        let mut k = k;
        for p in parts {
            if k < p.len() {
                return p[k];
            }
            k -= p.len();
        }
        assert_eq!(k, 0, "parameter index out of range");
        self.b3
    }

    /// Writes parameter `k` (same ordering as [`PolicyNet::param_get`]).
    pub fn param_set(&mut self, k: usize, value: T) {
        let mut k = k;
        for p in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3] {
            if k < p.len() {
                p[k] = value;
                return;
            }
            k -= p.len();
        }
        assert_eq!(k, 0, "parameter index out of range");
        self.b3 = value;
    }

    /// Matching gradient entry `k` from an accumulator (same ordering).
    pub fn grad_get(grads: &NetGrads<T>, k: usize) -> T {
        let parts: [&[T]; 5] = [&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3];
        let mut k = k;
        for p in parts {
            if k < p.len() {
                return p[k];
            }
            k -= p.len();
        }
        assert_eq!(k, 0, "gradient index out of range");
        grads.b3
    }
}

// ---------------------------------------------------------------------------
// Versioned parameter bundle (JSON)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BundleEntry {
    seed: u64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
}

/// On-disk representation: layer shapes in the header, one parameter set per
/// training seed.
#[derive(Serialize, Deserialize)]
struct BundleFile {
    version: u32,
    input_dim: usize,
    hidden: [usize; 2],
    leaky_slope: f64,
    action_scale: f64,
    policies: Vec<BundleEntry>,
}

/// Serializes one network per seed into the versioned JSON bundle format.
pub fn save_bundle<T: Scalar>(nets: &[(u64, &PolicyNet<T>)]) -> String {
    assert!(!nets.is_empty(), "bundle must contain at least one policy");
    let first = nets[0].1;
    let file = BundleFile {
        version: BUNDLE_VERSION,
        input_dim: first.input_dim,
        hidden: first.hidden,
        leaky_slope: to_f64(first.leaky_slope),
        action_scale: to_f64(first.action_scale),
        policies: nets
            .iter()
            .map(|(seed, n)| {
                assert_eq!(n.input_dim, first.input_dim, "bundle mixes input dims");
                assert_eq!(n.hidden, first.hidden, "bundle mixes hidden sizes");
                BundleEntry {
                    seed: *seed,
                    w1: n.w1.iter().map(|&x| to_f64(x)).collect(),
                    b1: n.b1.iter().map(|&x| to_f64(x)).collect(),
                    w2: n.w2.iter().map(|&x| to_f64(x)).collect(),
                    b2: n.b2.iter().map(|&x| to_f64(x)).collect(),
                    w3: n.w3.iter().map(|&x| to_f64(x)).collect(),
                    b3: to_f64(n.b3),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("bundle serialization cannot fail")
}

/// Parses a JSON parameter bundle, validating version and layer shapes.
pub fn load_bundle<T: Scalar>(text: &str) -> Result<Vec<(u64, PolicyNet<T>)>, PolicyError> {
    let file: BundleFile = serde_json::from_str(text)?;
    if file.version != BUNDLE_VERSION {
        return Err(PolicyError::UnsupportedVersion(file.version));
    }
    let mut out = Vec::with_capacity(file.policies.len());
    for e in &file.policies {
        let expect = |name: &str, got: usize, want: usize| -> Result<(), PolicyError> {
            if got != want {
                return Err(PolicyError::BadShape(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
            Ok(())
        };
        expect("w1", e.w1.len(), file.hidden[0] * file.input_dim)?;
        expect("b1", e.b1.len(), file.hidden[0])?;
        expect("w2", e.w2.len(), file.hidden[1] * file.hidden[0])?;
        expect("b2", e.b2.len(), file.hidden[1])?;
        expect("w3", e.w3.len(), file.hidden[1])?;
        let net = PolicyNet {
            input_dim: file.input_dim,
            hidden: file.hidden,
            w1: e.w1.iter().map(|&x| real(x)).collect(),
            b1: e.b1.iter().map(|&x| real(x)).collect(),
            w2: e.w2.iter().map(|&x| real(x)).collect(),
            b2: e.b2.iter().map(|&x| real(x)).collect(),
            w3: e.w3.iter().map(|&x| real(x)).collect(),
            b3: real(e.b3),
            leaky_slope: real(file.leaky_slope),
            action_scale: real(file.action_scale),
        };
        out.push((e.seed, net));
    }
    if out.is_empty() {
        return Err(PolicyError::BadShape("bundle contains no policies".into()));
    }
    Ok(out)
}

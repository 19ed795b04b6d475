//! Random merge-scenario construction: one ego on the on-ramp plus a
//! platoon of target-lane vehicles around it, sampled by stratified
//! uniform draws and filtered by headway and time-to-collision admissibility.
//!
//! Vehicle layout in every sampled [`Scene`]: index 0 is the ego (on-ramp);
//! indices `1..=n_leaders` are target-lane vehicles ahead of the ego,
//! nearest first; the remaining indices are target-lane vehicles behind the
//! ego, nearest first.
//!
//! Stratified sampling: when k values are drawn from a range, the range is
//! split into k equal strata, the strata are assigned to the draws by a
//! random permutation, and each value is drawn uniformly within its stratum.
//! This keeps batches spread over the range instead of clustering.
//!
//! Gaps are sampled as *net* bumper-to-bumper distances, so the sampled gap
//! is directly the headway that admissibility checks against; successive
//! vehicle centers sit `body_length + gap` apart.

use crate::dynamics::time_to_collision;
use crate::rewards::Lane;
use crate::scalar::{real, Scalar};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Longitudinal snapshot of every vehicle: positions, speeds, lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub xs: Vec<T>,
    pub vs: Vec<T>,
    pub lanes: Vec<Lane>,
}

impl<T: Scalar> Scene<T> {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.xs.len() == self.vs.len()
            && self.xs.len() == self.lanes.len()
            && self.xs.iter().all(|x| x.is_finite())
            && self.vs.iter().all(|v| v.is_finite() && *v >= T::zero())
    }
}

/// Sampler configuration. Ranges are inclusive-exclusive `[lo, hi)` except
/// that a degenerate range `lo == hi` always yields `lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    /// Target-lane vehicles ahead of the ego.
    pub n_leaders: usize,
    /// Target-lane vehicles behind the ego.
    pub n_followers: usize,
    /// Ego initial longitudinal position range [m].
    pub ego_x_range: (T, T),
    /// Ego initial speed range [m/s].
    pub ego_v_range: (T, T),
    /// Target-lane vehicle speed range [m/s] (stratified).
    pub lane_v_range: (T, T),
    /// Net bumper-to-bumper gap range [m] (stratified).
    pub gap_range: (T, T),
    /// Admissibility: every successive target-lane pair keeps at least this
    /// net gap [m].
    pub min_headway: T,
    /// Admissibility: every successive target-lane pair keeps at least this
    /// time-to-collision [s] (an opening gap passes trivially).
    pub min_ttc: T,
    /// Vehicle body length used to convert net gaps to center spacing [m];
    /// must match the simulation geometry.
    pub body_length: T,
    /// Give up after this many rejected draws.
    pub max_rejects: usize,
}

impl<T: Scalar> Default for ScenarioConfig<T> {
    fn default() -> Self {
        ScenarioConfig {
            n_leaders: 4,
            n_followers: 4,
            ego_x_range: (real(60.0), real(100.0)),
            ego_v_range: (real(6.0), real(18.0)),
            lane_v_range: (real(6.0), real(20.0)),
            gap_range: (real(12.0), real(45.0)),
            min_headway: real(7.0),
            min_ttc: real(4.0),
            body_length: real(4.5),
            max_rejects: 10_000,
        }
    }
}

/// Sampler failures.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario config invalid: {0}")]
    InvalidConfig(String),
    /// The configured ranges cannot satisfy the headway/TTC admissibility
    /// constraints (or make them astronomically unlikely).
    #[error("no admissible scenario found after {attempts} attempts; the configured ranges conflict with min_headway/min_ttc")]
    InfeasibleRanges { attempts: usize },
}

fn check_range<T: Scalar>(name: &str, (lo, hi): (T, T)) -> Result<(), ScenarioError> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(ScenarioError::InvalidConfig(format!(
            "{name} must be a finite range with lo <= hi"
        )));
    }
    Ok(())
}

fn validate<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<(), ScenarioError> {
    check_range("ego_x_range", cfg.ego_x_range)?;
    check_range("ego_v_range", cfg.ego_v_range)?;
    check_range("lane_v_range", cfg.lane_v_range)?;
    check_range("gap_range", cfg.gap_range)?;
    if cfg.ego_v_range.0 < T::zero() || cfg.lane_v_range.0 < T::zero() {
        return Err(ScenarioError::InvalidConfig("speed ranges must be non-negative".into()));
    }
    if cfg.gap_range.0 <= T::zero() {
        return Err(ScenarioError::InvalidConfig("gaps must be positive".into()));
    }
    if cfg.min_headway <= T::zero() || cfg.min_ttc <= T::zero() {
        return Err(ScenarioError::InvalidConfig("min_headway and min_ttc must be positive".into()));
    }
    if cfg.body_length <= T::zero() {
        return Err(ScenarioError::InvalidConfig("body_length must be positive".into()));
    }
    if cfg.max_rejects == 0 {
        return Err(ScenarioError::InvalidConfig("max_rejects must be at least 1".into()));
    }
    Ok(())
}

fn uniform<T: Scalar>((lo, hi): (T, T), rng: &mut ChaCha8Rng) -> T {
    if hi > lo {
        let u: f64 = rng.gen_range(0.0..1.0);
        lo + (hi - lo) * real(u)
    } else {
        lo
    }
}

/// Draws `k` values from `range` by stratification: the range is split into
/// `k` equal strata, assigned to draw positions by a random permutation.
fn stratified<T: Scalar>((lo, hi): (T, T), k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if k == 0 {
        return Vec::new();
    }
    let width = (hi - lo) / real(k as f64);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    order
        .into_iter()
        .map(|s| {
            let s_lo = lo + width * real(s as f64);
            uniform((s_lo, s_lo + width), rng)
        })
        .collect()
}

/// True when every successive target-lane pair (sorted by position) keeps
/// the minimum net headway and minimum time-to-collision.
pub fn is_admissible<T: Scalar>(scene: &Scene<T>, cfg: &ScenarioConfig<T>) -> bool {
    let mut lane_idx: Vec<usize> = (0..scene.n()).filter(|&i| scene.lanes[i] == Lane::Target).collect();
    lane_idx.sort_by(|&a, &b| scene.xs[a].partial_cmp(&scene.xs[b]).expect("finite positions"));
    for w in lane_idx.windows(2) {
        let (rear, front) = (w[0], w[1]);
        let headway = scene.xs[front] - scene.xs[rear] - cfg.body_length;
        if headway < cfg.min_headway {
            return false;
        }
        let ttc = time_to_collision(headway, scene.vs[rear] - scene.vs[front]);
        if ttc < cfg.min_ttc {
            return false;
        }
    }
    true
}

/// Samples one admissible scene by rejection, deterministic in the RNG
/// state. With no target-lane vehicles every draw is trivially admissible;
/// with ranges that conflict with the admissibility thresholds (e.g. gaps
/// capped below `min_headway`) this returns
/// [`ScenarioError::InfeasibleRanges`].
pub fn sample_scene<T: Scalar>(cfg: &ScenarioConfig<T>, rng: &mut ChaCha8Rng) -> Result<Scene<T>, ScenarioError> {
    validate(cfg)?;
    let k = cfg.n_leaders + cfg.n_followers;
    for _ in 0..cfg.max_rejects {
        let ego_x = uniform(cfg.ego_x_range, rng);
        let ego_v = uniform(cfg.ego_v_range, rng);
        let speeds = stratified(cfg.lane_v_range, k, rng);
        let gaps = stratified(cfg.gap_range, k, rng);

        let n = 1 + k;
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        let mut lanes = Vec::with_capacity(n);
        xs.push(ego_x);
        vs.push(ego_v);
        lanes.push(Lane::Ramp);
        let mut front = ego_x;
        for l in 0..cfg.n_leaders {
            front = front + cfg.body_length + gaps[l];
            xs.push(front);
            vs.push(speeds[l]);
            lanes.push(Lane::Target);
        }
        let mut rear = ego_x;
        for f in 0..cfg.n_followers {
            rear = rear - cfg.body_length - gaps[cfg.n_leaders + f];
            xs.push(rear);
            vs.push(speeds[cfg.n_leaders + f]);
            lanes.push(Lane::Target);
        }
        let scene = Scene { xs, vs, lanes };
        if is_admissible(&scene, cfg) {
            debug_assert!(scene.is_consistent());
            return Ok(scene);
        }
    }
    Err(ScenarioError::InfeasibleRanges { attempts: cfg.max_rejects })
}

/// Samples a batch of admissible scenes sequentially from one RNG.
pub fn sample_batch<T: Scalar>(
    cfg: &ScenarioConfig<T>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Scene<T>>, ScenarioError> {
    (0..count).map(|_| sample_scene(cfg, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> ScenarioConfig<f64> {
        ScenarioConfig::default()
    }

    #[test]
    fn layout_matches_the_documented_index_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        let s = sample_scene(&c, &mut rng).unwrap();
        assert_eq!(s.n(), 9);
        assert_eq!(s.lanes[0], Lane::Ramp);
        assert!(s.lanes[1..].iter().all(|&l| l == Lane::Target));
        // Leaders ahead of the ego, ascending (nearest first).
        for l in 1..=4 {
            assert!(s.xs[l] > s.xs[0]);
            if l > 1 {
                assert!(s.xs[l] > s.xs[l - 1]);
            }
        }
        // Followers behind the ego, descending (nearest first).
        for f in 5..9 {
            assert!(s.xs[f] < s.xs[0]);
            if f > 5 {
                assert!(s.xs[f] < s.xs[f - 1]);
            }
        }
    }

    /// Every accepted scene satisfies the admissibility constraints, the
    /// sampled values stay in their ranges, and center spacing reflects
    /// net-gap-plus-body-length construction.
    #[test]
    fn accepted_scenes_respect_ranges_and_admissibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = cfg();
        for _ in 0..500 {
            let s = sample_scene(&c, &mut rng).unwrap();
            assert!(is_admissible(&s, &c));
            assert!(s.xs[0] >= c.ego_x_range.0 && s.xs[0] <= c.ego_x_range.1);
            assert!(s.vs[0] >= c.ego_v_range.0 && s.vs[0] <= c.ego_v_range.1);
            for i in 1..s.n() {
                assert!(s.vs[i] >= c.lane_v_range.0 && s.vs[i] <= c.lane_v_range.1);
            }
            // Successive leader gaps are in range (ditto followers).
            for l in 2..=4 {
                let gap = s.xs[l] - s.xs[l - 1] - c.body_length;
                assert!(gap >= c.gap_range.0 - 1e-12 && gap <= c.gap_range.1 + 1e-12);
            }
            for f in 6..9 {
                let gap = s.xs[f - 1] - s.xs[f] - c.body_length;
                assert!(gap >= c.gap_range.0 - 1e-12 && gap <= c.gap_range.1 + 1e-12);
            }
        }
    }

    /// Stratification puts exactly one draw in each equal sub-interval.
    #[test]
    fn stratified_draws_cover_all_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let vals = stratified::<f64>((0.0, 8.0), 8, &mut rng);
            let mut hit = [false; 8];
            for v in vals {
                let s = v.floor() as usize;
                assert!(!hit[s.min(7)], "two draws in stratum {s}");
                hit[s.min(7)] = true;
            }
            assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn single_vehicle_config_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = ScenarioConfig { n_leaders: 0, n_followers: 0, ..cfg() };
        let s = sample_scene(&c, &mut rng).unwrap();
        assert_eq!(s.n(), 1);
        assert_eq!(s.lanes[0], Lane::Ramp);
    }

    /// Gap ranges capped below the minimum headway can never satisfy
    /// admissibility: the sampler reports infeasible ranges instead of
    /// spinning forever.
    #[test]
    fn five_meter_spacing_with_seven_meter_headway_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = ScenarioConfig {
            gap_range: (4.0, 5.0),
            max_rejects: 200,
            ..cfg()
        };
        match sample_scene(&c, &mut rng) {
            Err(ScenarioError::InfeasibleRanges { attempts: 200 }) => {}
            other => panic!("expected InfeasibleRanges, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected_upfront() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bad_range = ScenarioConfig { gap_range: (30.0, 10.0), ..cfg() };
        assert!(matches!(sample_scene(&bad_range, &mut rng), Err(ScenarioError::InvalidConfig(_))));
        let bad_speed = ScenarioConfig { ego_v_range: (-1.0, 5.0), ..cfg() };
        assert!(matches!(sample_scene(&bad_speed, &mut rng), Err(ScenarioError::InvalidConfig(_))));
        let bad_len = ScenarioConfig { body_length: 0.0, ..cfg() };
        assert!(matches!(sample_scene(&bad_len, &mut rng), Err(ScenarioError::InvalidConfig(_))));
    }

    #[test]
    fn degenerate_ranges_yield_the_single_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = ScenarioConfig {
            n_leaders: 1,
            n_followers: 0,
            ego_x_range: (80.0, 80.0),
            ego_v_range: (12.0, 12.0),
            lane_v_range: (12.0, 12.0),
            gap_range: (20.0, 20.0),
            ..cfg()
        };
        let s = sample_scene(&c, &mut rng).unwrap();
        assert_eq!(s.xs, vec![80.0, 80.0 + 4.5 + 20.0]);
        assert_eq!(s.vs, vec![12.0, 12.0]);
    }

    #[test]
    fn sampling_is_deterministic_in_the_rng_state() {
        let c = cfg();
        let a = sample_batch(&c, 5, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = sample_batch(&c, 5, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    /// TTC admissibility actually rejects: a fast rear vehicle close behind
    /// a slow front vehicle violates min_ttc even with adequate headway.
    #[test]
    fn ttc_constraint_rejects_fast_closers() {
        let c = cfg();
        let scene = Scene {
            xs: vec![100.0, 120.0, 112.0],
            vs: vec![10.0, 10.0, 18.0],
            lanes: vec![Lane::Ramp, Lane::Target, Lane::Target],
        };
        // Net gap 120-112-4.5 = 3.5 < 7 → headway violation; widen it.
        let scene2 = Scene {
            xs: vec![100.0, 130.0, 112.0],
            vs: vec![10.0, 10.0, 18.0],
            lanes: vec![Lane::Ramp, Lane::Target, Lane::Target],
        };
        // Net gap 13.5, closing 8 → TTC ≈ 1.7 s < 4 s.
        assert!(!is_admissible(&scene, &c));
        assert!(!is_admissible(&scene2, &c));
        // Opening gap passes regardless of magnitude.
        let scene3 = Scene {
            xs: vec![100.0, 130.0, 112.0],
            vs: vec![10.0, 18.0, 10.0],
            lanes: vec![Lane::Ramp, Lane::Target, Lane::Target],
        };
        assert!(is_admissible(&scene3, &c));
    }
}

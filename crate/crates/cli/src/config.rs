//! The experiment configuration file: one TOML document covering scenario
//! sampling, rewards, network architecture, trainer hyperparameters, the
//! IDM baseline, evaluation, and data ingestion.
//!
//! Every field has a default, any subset may be given, and unknown keys are
//! rejected. The fully resolved configuration (every field explicit) is
//! echoed as `resolved_config.toml` next to every artifact a command writes,
//! so each artifact is reproducible from the resolved config and the seeds
//! alone.

use anyhow::Context;
use serde::{Deserialize, Serialize};

use mpgmerge::dynamics::VehicleGeometry;
use mpgmerge::idm::IdmParams;
use mpgmerge::ingest::{ColumnMap, ReplayQuery};
use mpgmerge::policy::ObservationSpec;
use mpgmerge::rewards::MergeRewardSpec;
use mpgmerge::scenario::ScenarioConfig;
use mpgmerge::sim::SimParams;
use mpgmerge::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One independent training run / parameter set per seed.
    pub seeds: Vec<u64>,
    pub scenario: ScenarioSection,
    pub rewards: RewardsSection,
    pub network: NetworkSection,
    pub sim: SimSection,
    pub trainer: TrainerSection,
    pub idm: IdmSection,
    pub eval: EvalSection,
    pub ingest: IngestSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0, 1, 2],
            scenario: ScenarioSection::default(),
            rewards: RewardsSection::default(),
            network: NetworkSection::default(),
            sim: SimSection::default(),
            trainer: TrainerSection::default(),
            idm: IdmSection::default(),
            eval: EvalSection::default(),
            ingest: IngestSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_leaders: usize,
    pub n_followers: usize,
    pub ego_x_range: (f64, f64),
    pub ego_v_range: (f64, f64),
    pub lane_v_range: (f64, f64),
    pub gap_range: (f64, f64),
    pub min_headway: f64,
    pub min_ttc: f64,
    pub max_rejects: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let c = ScenarioConfig::<f64>::default();
        ScenarioSection {
            n_leaders: c.n_leaders,
            n_followers: c.n_followers,
            ego_x_range: c.ego_x_range,
            ego_v_range: c.ego_v_range,
            lane_v_range: c.lane_v_range,
            gap_range: c.gap_range,
            min_headway: c.min_headway,
            min_ttc: c.min_ttc,
            max_rejects: c.max_rejects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardsSection {
    pub w_speed: f64,
    pub w_comfort: f64,
    pub w_same_lane: f64,
    pub w_conflict: f64,
    pub v_d: f64,
    pub v_c: f64,
    pub eps: f64,
    pub x_c: f64,
}

impl Default for RewardsSection {
    fn default() -> Self {
        let r = MergeRewardSpec::<f64>::default();
        RewardsSection {
            w_speed: r.w_speed,
            w_comfort: r.w_comfort,
            w_same_lane: r.w_same_lane,
            w_conflict: r.w_conflict,
            v_d: r.v_d,
            v_c: r.v_c,
            eps: r.eps,
            x_c: r.x_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: [usize; 2],
    pub leaky_slope: f64,
    /// Observation normalization: positions are divided by this [m].
    pub pos_scale: f64,
    /// Observation normalization: speeds are divided by this [m/s].
    pub speed_scale: f64,
    /// Sentinel distance reported for an absent neighbor [m].
    pub d_max: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let o = ObservationSpec::<f64>::default();
        NetworkSection {
            hidden: [64, 64],
            leaky_slope: 0.01,
            pos_scale: o.pos_scale,
            speed_scale: o.speed_scale,
            d_max: o.d_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub n_steps: usize,
    pub v_max: f64,
    pub gamma: f64,
    /// Safety time-to-collision threshold of the feasibility projection [s].
    pub tau_s: f64,
    /// Acceleration bound; also the network's command scale [m/s²].
    pub accel_bound: f64,
    /// Lateral offset of the on-ramp (target lane sits at 0) [m].
    pub ramp_y: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub body_length: f64,
    pub body_width: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimParams::<f64>::default();
        SimSection {
            dt: s.dt,
            n_steps: s.n_steps,
            v_max: s.v_max,
            gamma: s.gamma,
            tau_s: s.tau_s,
            accel_bound: s.accel_bound,
            ramp_y: s.ramp_y,
            l_f: s.geometry.l_f,
            l_r: s.geometry.l_r,
            body_length: s.geometry.body_length,
            body_width: s.geometry.body_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub probe_size: usize,
    pub grad_clip: f64,
    pub frozen_batch: bool,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::<f64>::default();
        TrainerSection {
            eta: t.eta,
            epochs: t.epochs,
            batch_size: t.batch_size,
            probe_size: t.probe_size,
            grad_clip: t.grad_clip,
            frozen_batch: t.frozen_batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmSection {
    pub v0: f64,
    pub t_headway: f64,
    pub s0: f64,
    pub a_max: f64,
    pub b_comfort: f64,
    pub delta: f64,
    pub accel_bound: f64,
}

impl Default for IdmSection {
    fn default() -> Self {
        let p = IdmParams::<f64>::default();
        IdmSection {
            v0: p.v0,
            t_headway: p.t_headway,
            s0: p.s0,
            a_max: p.a_max,
            b_comfort: p.b_comfort,
            delta: p.delta,
            accel_bound: p.accel_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Scenarios sampled for one evaluation battery.
    pub n_scenarios: usize,
    /// RNG seed of the evaluation battery (independent of training seeds so
    /// the battery is a fresh, fixed test set).
    pub scenario_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_scenarios: 50, scenario_seed: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// 0-based column indices: vehicle id, frame, longitudinal x, lateral y.
    pub columns: ColumnsSection,
    pub frame_rate_hz: f64,
    /// Multiply raw positions by 0.3048 (survey datasets record feet).
    pub feet_to_meters: bool,
    /// Savitzky–Golay window (odd) and polynomial order.
    pub window: usize,
    pub order: usize,
    /// Strictly increasing lane-boundary lateral positions [m]; k+1
    /// boundaries delimit lanes 0..k.
    pub lane_boundaries: Vec<f64>,
    /// Lane index vehicles merge from / into when building replay scenarios.
    pub ramp_lane: usize,
    pub target_lane: usize,
    /// Surrounding-vehicle caps for replay scenarios.
    pub n_leaders: usize,
    pub n_followers: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            columns: ColumnsSection::default(),
            frame_rate_hz: 10.0,
            feet_to_meters: false,
            window: 21,
            order: 3,
            // Matches the simulation geometry: target lane centered at 0,
            // ramp at 3.5.
            lane_boundaries: vec![-1.85, 1.85, 5.35],
            ramp_lane: 1,
            target_lane: 0,
            n_leaders: 4,
            n_followers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnsSection {
    pub vehicle_id: usize,
    pub frame: usize,
    pub local_x: usize,
    pub local_y: usize,
}

impl Default for ColumnsSection {
    fn default() -> Self {
        let c = ColumnMap::default();
        ColumnsSection {
            vehicle_id: c.vehicle_id,
            frame: c.frame,
            local_x: c.local_x,
            local_y: c.local_y,
        }
    }
}

impl ExperimentConfig {
    /// Loads a TOML config, filling omitted fields with defaults and
    /// rejecting unknown keys.
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// The fully resolved document, every field explicit.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenario_config(&self) -> ScenarioConfig<f64> {
        let s = &self.scenario;
        ScenarioConfig {
            n_leaders: s.n_leaders,
            n_followers: s.n_followers,
            ego_x_range: s.ego_x_range,
            ego_v_range: s.ego_v_range,
            lane_v_range: s.lane_v_range,
            gap_range: s.gap_range,
            min_headway: s.min_headway,
            min_ttc: s.min_ttc,
            body_length: self.sim.body_length,
            max_rejects: s.max_rejects,
        }
    }

    pub fn reward_spec(&self) -> MergeRewardSpec<f64> {
        let r = &self.rewards;
        MergeRewardSpec {
            w_speed: r.w_speed,
            w_comfort: r.w_comfort,
            w_same_lane: r.w_same_lane,
            w_conflict: r.w_conflict,
            v_d: r.v_d,
            v_c: r.v_c,
            eps: r.eps,
            x_c: r.x_c,
        }
    }

    pub fn observation_spec(&self) -> ObservationSpec<f64> {
        ObservationSpec {
            x_c: self.rewards.x_c,
            d_max: self.network.d_max,
            pos_scale: self.network.pos_scale,
            speed_scale: self.network.speed_scale,
        }
    }

    pub fn sim_params(&self) -> SimParams<f64> {
        let s = &self.sim;
        SimParams {
            dt: s.dt,
            n_steps: s.n_steps,
            v_max: s.v_max,
            gamma: s.gamma,
            tau_s: s.tau_s,
            accel_bound: s.accel_bound,
            geometry: VehicleGeometry {
                l_f: s.l_f,
                l_r: s.l_r,
                body_length: s.body_length,
                body_width: s.body_width,
            },
            rewards: self.reward_spec(),
            obs: self.observation_spec(),
            ramp_y: s.ramp_y,
        }
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        let t = &self.trainer;
        TrainConfig {
            scenario: self.scenario_config(),
            sim: self.sim_params(),
            hidden: self.network.hidden,
            leaky_slope: self.network.leaky_slope,
            eta: t.eta,
            epochs: t.epochs,
            batch_size: t.batch_size,
            probe_size: t.probe_size,
            grad_clip: t.grad_clip,
            seeds: self.seeds.clone(),
            frozen_batch: t.frozen_batch,
        }
    }

    pub fn idm_params(&self) -> IdmParams<f64> {
        let p = &self.idm;
        IdmParams {
            v0: p.v0,
            t_headway: p.t_headway,
            s0: p.s0,
            a_max: p.a_max,
            b_comfort: p.b_comfort,
            delta: p.delta,
            accel_bound: p.accel_bound,
        }
    }

    pub fn column_map(&self) -> ColumnMap {
        let c = &self.ingest.columns;
        ColumnMap { vehicle_id: c.vehicle_id, frame: c.frame, local_x: c.local_x, local_y: c.local_y }
    }

    pub fn replay_query(&self) -> ReplayQuery {
        let i = &self.ingest;
        ReplayQuery {
            ramp_lane: i.ramp_lane,
            target_lane: i.target_lane,
            n_leaders: i.n_leaders,
            n_followers: i.n_followers,
        }
    }
}

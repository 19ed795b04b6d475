//! Multi-agent reinforcement-learning toolkit for highway forced-merge
//! driving, built around Markov potential games.
//!
//! The crate has two halves that check each other:
//!
//! * an **exact tabular oracle** ([`tabular`]) for finite Markov games —
//!   value functions by linear solve, potential construction from
//!   structured rewards, a sampled potential-identity verifier, projected
//!   gradient play, and exploitability;
//! * a **continuous merge simulator** — kinematic bicycle dynamics
//!   ([`dynamics`]), structured merge rewards with analytic gradients
//!   ([`rewards`]), and (in the modules layered on top) a parameter-sharing
//!   policy network trained by backpropagating the discounted potential
//!   through deterministic rollouts.
//!
//! [`abstraction`] bridges the two: it discretizes the simulator into a
//! factored tabular game so the oracle can verify the structural claims the
//! training pipeline relies on.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`]
//! (implemented for `f32` and `f64`); concrete `*64`/`*32` aliases for the
//! common types live at the crate root.

pub mod abstraction;
pub mod bptt;
pub mod dynamics;
pub mod eval;
pub mod idm;
pub mod ingest;
pub mod linalg;
pub mod policy;
pub mod rewards;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod tabular;
pub mod train;

pub use scalar::Scalar;

/// Double-precision aliases (the default throughout the test suite).
pub type VehicleState64 = dynamics::VehicleState<f64>;
pub type VehicleAction64 = dynamics::VehicleAction<f64>;
pub type VehicleGeometry64 = dynamics::VehicleGeometry<f64>;
pub type FeasibilityParams64 = dynamics::FeasibilityParams<f64>;
pub type FeasibleSet64 = dynamics::FeasibleSet<f64>;
pub type MergeRewardSpec64 = rewards::MergeRewardSpec<f64>;
pub type TabularGame64 = tabular::TabularGame<f64>;
pub type DirectPolicy64 = tabular::DirectPolicy<f64>;
pub type StatePotential64 = tabular::StatePotential<f64>;
pub type PolicyNet64 = policy::PolicyNet<f64>;
pub type ObservationSpec64 = policy::ObservationSpec<f64>;
pub type IdmParams64 = idm::IdmParams<f64>;
pub type SimParams64 = sim::SimParams<f64>;
pub type TrainConfig64 = train::TrainConfig<f64>;

/// Single-precision aliases.
pub type VehicleState32 = dynamics::VehicleState<f32>;
pub type VehicleAction32 = dynamics::VehicleAction<f32>;
pub type VehicleGeometry32 = dynamics::VehicleGeometry<f32>;
pub type FeasibilityParams32 = dynamics::FeasibilityParams<f32>;
pub type FeasibleSet32 = dynamics::FeasibleSet<f32>;
pub type MergeRewardSpec32 = rewards::MergeRewardSpec<f32>;
pub type TabularGame32 = tabular::TabularGame<f32>;
pub type DirectPolicy32 = tabular::DirectPolicy<f32>;
pub type StatePotential32 = tabular::StatePotential<f32>;
pub type PolicyNet32 = policy::PolicyNet<f32>;
pub type ObservationSpec32 = policy::ObservationSpec<f32>;
pub type IdmParams32 = idm::IdmParams<f32>;
pub type SimParams32 = sim::SimParams<f32>;
pub type TrainConfig32 = train::TrainConfig<f32>;

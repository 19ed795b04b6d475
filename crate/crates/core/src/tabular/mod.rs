//! Exact oracle for finite Markov games.
//!
//! A game is the tuple `(N, S, A, P, r, γ, ρ)`: `N` agents, a finite global
//! state space of size `S`, per-agent finite action sets whose product forms
//! the joint action space, a joint transition kernel `P(s'|s, a)`, per-agent
//! reward tables `r_i(s, a)`, a discount `γ`, and an initial distribution
//! `ρ`. Policies are directly parameterized: one probability row per state
//! per agent.
//!
//! Everything downstream (potential construction, the Markov-potential-game
//! checker, gradient play, exploitability) builds on exact linear-algebra
//! evaluations of such games; no sampling is involved outside the test
//! oracles.

mod generate;
mod io;
mod learn;
mod potential;
mod value;

pub use generate::{
    random_action_coupled_game, random_dense_game, random_mixed_game, random_pairwise_game,
    random_self_reward_game, random_zero_sum_counterexample, AgentChain, CompileError,
    CompiledGame, FactoredGame, FactoredRewards, RandomGameSpec,
};
pub use io::{parse_game_text, write_game_text, GameFile, GameIoError};
pub use learn::{
    best_deterministic_policy, enumerate_deterministic_policies, exploitability, gradient_play,
    simplex_projection, ExploitabilityOptions, ExploitabilityReport, GradientPlayOptions,
    GradientPlayResult, IterationRecord, LearnError,
};
pub use potential::{
    build_mixed_potential, build_pairwise_potential, build_self_potential, extract_self_tables,
    transition_independence_deviation, verify_mpg, verify_transition_independence, MpgReport,
    PairwiseTables, StructureError, VerifyMpgOptions,
};
pub use value::{
    averaged_q, exact_value_functions, policy_gradient, policy_gradient_all, scalar_objective,
    state_action_visitation, total_reward, transition_under_policy, value_function,
    visitation_measure, ValueError,
};

use crate::scalar::{real, Scalar};

/// Validation and dimension errors for tabular games and policies.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("game must have at least one agent, one state, and one action per agent")]
    EmptyGame,
    #[error("expected {expected} values for {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("transition row (state {state}, joint action {joint_action}) sums to {sum} (must be 1)")]
    NotStochastic { state: usize, joint_action: usize, sum: f64 },
    #[error("probabilities must be finite and nonnegative ({what})")]
    BadProbability { what: &'static str },
    #[error("discount factor must lie in [0, 1)")]
    BadDiscount,
    #[error("initial distribution must be nonnegative and sum to 1 (sum {sum})")]
    BadInitialDistribution { sum: f64 },
    #[error("reward values must be finite")]
    NonFiniteReward,
    #[error("policy row (agent {agent}, state {state}) is not on the simplex (sum {sum})")]
    PolicyNotSimplex { agent: usize, state: usize, sum: f64 },
}

/// Numerical tolerance for stochasticity checks, scaled to the precision of `T`.
fn stochastic_tol<T: Scalar>() -> T {
    real::<T>(1e-12).max(T::epsilon() * real::<T>(64.0))
}

/// A finite `N`-agent Markov game with dense tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame<T> {
    n_agents: usize,
    n_states: usize,
    action_counts: Vec<usize>,
    n_joint_actions: usize,
    gamma: T,
    /// Initial state distribution, length `S`.
    rho: Vec<T>,
    /// Joint transition kernel, row-major `[s][a_joint][s']`.
    transition: Vec<T>,
    /// Per-agent reward tables, each row-major `[s][a_joint]`.
    rewards: Vec<Vec<T>>,
}

impl<T: Scalar> TabularGame<T> {
    /// Validates and assembles a game from dense tensors.
    pub fn new(
        action_counts: Vec<usize>,
        n_states: usize,
        gamma: T,
        rho: Vec<T>,
        transition: Vec<T>,
        rewards: Vec<Vec<T>>,
    ) -> Result<Self, GameError> {
        let n_agents = action_counts.len();
        if n_agents == 0 || n_states == 0 || action_counts.iter().any(|&a| a == 0) {
            return Err(GameError::EmptyGame);
        }
        let n_joint_actions: usize = action_counts.iter().product();
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(GameError::BadDiscount);
        }
        if rho.len() != n_states {
            return Err(GameError::DimensionMismatch {
                what: "initial distribution",
                expected: n_states,
                got: rho.len(),
            });
        }
        if rho.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(GameError::BadProbability { what: "initial distribution" });
        }
        let rho_sum: T = rho.iter().copied().sum();
        if (rho_sum - T::one()).abs() > stochastic_tol::<T>() {
            return Err(GameError::BadInitialDistribution { sum: crate::scalar::to_f64(rho_sum) });
        }
        let expected_p = n_states * n_joint_actions * n_states;
        if transition.len() != expected_p {
            return Err(GameError::DimensionMismatch {
                what: "transition tensor",
                expected: expected_p,
                got: transition.len(),
            });
        }
        if transition.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(GameError::BadProbability { what: "transition tensor" });
        }
        for s in 0..n_states {
            for a in 0..n_joint_actions {
                let base = (s * n_joint_actions + a) * n_states;
                let sum: T = transition[base..base + n_states].iter().copied().sum();
                if (sum - T::one()).abs() > stochastic_tol::<T>() {
                    return Err(GameError::NotStochastic {
                        state: s,
                        joint_action: a,
                        sum: crate::scalar::to_f64(sum),
                    });
                }
            }
        }
        if rewards.len() != n_agents {
            return Err(GameError::DimensionMismatch {
                what: "reward tables",
                expected: n_agents,
                got: rewards.len(),
            });
        }
        for table in &rewards {
            if table.len() != n_states * n_joint_actions {
                return Err(GameError::DimensionMismatch {
                    what: "reward table",
                    expected: n_states * n_joint_actions,
                    got: table.len(),
                });
            }
            if table.iter().any(|r| !r.is_finite()) {
                return Err(GameError::NonFiniteReward);
            }
        }
        Ok(TabularGame { n_agents, n_states, action_counts, n_joint_actions, gamma, rho, transition, rewards })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn n_joint_actions(&self) -> usize {
        self.n_joint_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn reward_table(&self, agent: usize) -> &[T] {
        &self.rewards[agent]
    }

    pub fn reward(&self, agent: usize, state: usize, joint_action: usize) -> T {
        self.rewards[agent][state * self.n_joint_actions + joint_action]
    }

    /// Probability row `P(· | s, a_joint)`.
    pub fn transition_row(&self, state: usize, joint_action: usize) -> &[T] {
        let base = (state * self.n_joint_actions + joint_action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Encodes per-agent actions into a joint index (agent 0 most significant).
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.n_agents);
        actions
            .iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (&a, &n)| {
                debug_assert!(a < n);
                acc * n + a
            })
    }

    /// Decodes a joint action index into per-agent actions.
    pub fn decode_joint(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.n_agents];
        for i in (0..self.n_agents).rev() {
            out[i] = joint % self.action_counts[i];
            joint /= self.action_counts[i];
        }
        out
    }

    /// Action of one agent inside a joint index.
    pub fn agent_action(&self, joint: usize, agent: usize) -> usize {
        let stride: usize = self.action_counts[agent + 1..].iter().product();
        (joint / stride) % self.action_counts[agent]
    }

    /// Replaces agent `agent`'s action inside a joint index.
    pub fn with_agent_action(&self, joint: usize, agent: usize, action: usize) -> usize {
        let stride: usize = self.action_counts[agent + 1..].iter().product();
        let old = (joint / stride) % self.action_counts[agent];
        joint - old * stride + action * stride
    }

    /// True when `ρ(s) > 0` for every state (full-support initial
    /// distribution, the standing exploration assumption for the
    /// stationary-point ⇔ Nash equivalence).
    pub fn full_support_initial_distribution(&self) -> bool {
        self.rho.iter().all(|p| *p > T::zero())
    }
}

/// Directly parameterized product policy: per agent, one probability row per
/// state (`tables[agent][s * A_agent + a]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectPolicy<T> {
    pub tables: Vec<Vec<T>>,
}

impl<T: Scalar> DirectPolicy<T> {
    /// Uniform policy for a game.
    pub fn uniform(game: &TabularGame<T>) -> Self {
        let tables = game
            .action_counts
            .iter()
            .map(|&a| {
                let p = T::one() / real::<T>(a as f64);
                vec![p; game.n_states * a]
            })
            .collect();
        DirectPolicy { tables }
    }

    /// Deterministic policy from per-agent per-state action choices
    /// (`choices[agent][state]`).
    pub fn deterministic(game: &TabularGame<T>, choices: &[Vec<usize>]) -> Self {
        let tables = choices
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                let a = game.action_counts[i];
                let mut t = vec![T::zero(); game.n_states * a];
                for (s, &c) in ch.iter().enumerate() {
                    t[s * a + c] = T::one();
                }
                t
            })
            .collect();
        DirectPolicy { tables }
    }

    /// Builds a policy from raw tables without simplex validation. Intended
    /// for finite-difference probes that evaluate the objective at
    /// off-simplex points.
    pub fn from_tables_unchecked(tables: Vec<Vec<T>>) -> Self {
        DirectPolicy { tables }
    }

    /// Checks that every row is a probability distribution.
    pub fn validate(&self, game: &TabularGame<T>) -> Result<(), GameError> {
        if self.tables.len() != game.n_agents {
            return Err(GameError::DimensionMismatch {
                what: "policy tables",
                expected: game.n_agents,
                got: self.tables.len(),
            });
        }
        for (i, table) in self.tables.iter().enumerate() {
            let a = game.action_counts[i];
            if table.len() != game.n_states * a {
                return Err(GameError::DimensionMismatch {
                    what: "policy table",
                    expected: game.n_states * a,
                    got: table.len(),
                });
            }
            for s in 0..game.n_states {
                let row = &table[s * a..(s + 1) * a];
                if row.iter().any(|p| !p.is_finite() || *p < T::zero()) {
                    return Err(GameError::BadProbability { what: "policy row" });
                }
                let sum: T = row.iter().copied().sum();
                if (sum - T::one()).abs() > stochastic_tol::<T>() {
                    return Err(GameError::PolicyNotSimplex {
                        agent: i,
                        state: s,
                        sum: crate::scalar::to_f64(sum),
                    });
                }
            }
        }
        Ok(())
    }

    /// Probability row of one agent at one state.
    pub fn row(&self, game: &TabularGame<T>, agent: usize, state: usize) -> &[T] {
        let a = game.action_counts[agent];
        &self.tables[agent][state * a..(state + 1) * a]
    }

    /// Joint probability `Π_i θ_i(a_i | s)` of a joint action index.
    pub fn joint_prob(&self, game: &TabularGame<T>, state: usize, joint: usize) -> T {
        let mut p = T::one();
        for agent in 0..game.n_agents {
            let a = game.agent_action(joint, agent);
            p = p * self.row(game, agent, state)[a];
        }
        p
    }

    /// Joint probability of all agents except `skip` (used for marginals).
    pub fn joint_prob_excluding(
        &self,
        game: &TabularGame<T>,
        state: usize,
        joint: usize,
        skip: usize,
    ) -> T {
        let mut p = T::one();
        for agent in 0..game.n_agents {
            if agent == skip {
                continue;
            }
            let a = game.agent_action(joint, agent);
            p = p * self.row(game, agent, state)[a];
        }
        p
    }

    /// Rounds each row to the deterministic policy at its argmax.
    pub fn round_deterministic(&self, game: &TabularGame<T>) -> Vec<Vec<usize>> {
        (0..game.n_agents)
            .map(|i| {
                (0..game.n_states)
                    .map(|s| {
                        let row = self.row(game, i, s);
                        let mut best = 0;
                        for (a, p) in row.iter().enumerate() {
                            if *p > row[best] {
                                best = a;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest distance of any row from the deterministic vertex it rounds to.
    pub fn max_distance_from_vertex(&self, game: &TabularGame<T>) -> T {
        let mut worst = T::zero();
        for i in 0..game.n_agents {
            for s in 0..game.n_states {
                let row = self.row(game, i, s);
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                worst = worst.max(T::one() - max);
            }
        }
        worst
    }
}

/// A state-dependent potential `Φ(s, a_joint)` stored like a reward table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePotential<T> {
    /// Row-major `[s][a_joint]`.
    pub values: Vec<T>,
}

impl<T: Scalar> StatePotential<T> {
    pub fn at(&self, game: &TabularGame<T>, state: usize, joint: usize) -> T {
        self.values[state * game.n_joint_actions + joint]
    }
}

/// Mapping between the global state index and per-agent local states
/// (agent 0 most significant, matching the joint-action encoding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    pub state_counts: Vec<usize>,
}

impl Factorization {
    pub fn n_global(&self) -> usize {
        self.state_counts.iter().product()
    }

    pub fn global_index(&self, locals: &[usize]) -> usize {
        locals
            .iter()
            .zip(&self.state_counts)
            .fold(0, |acc, (&s, &n)| {
                debug_assert!(s < n);
                acc * n + s
            })
    }

    pub fn decode(&self, mut global: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.state_counts.len()];
        for i in (0..self.state_counts.len()).rev() {
            out[i] = global % self.state_counts[i];
            global /= self.state_counts[i];
        }
        out
    }

    pub fn local_state(&self, global: usize, agent: usize) -> usize {
        let stride: usize = self.state_counts[agent + 1..].iter().product();
        (global / stride) % self.state_counts[agent]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_game() -> TabularGame<f64> {
        // 2 agents, 2 states, 2 actions each; arbitrary valid tensors.
        let transition = vec![
            // s=0: a=(0,0),(0,1),(1,0),(1,1)
            0.9, 0.1, 0.5, 0.5, 0.3, 0.7, 0.2, 0.8,
            // s=1
            0.6, 0.4, 0.1, 0.9, 0.8, 0.2, 0.4, 0.6,
        ];
        let r0 = vec![1.0, 0.0, -1.0, 0.5, 0.2, 0.3, 0.4, -0.2];
        let r1 = vec![0.0, 1.0, 0.5, -1.0, -0.3, 0.2, 0.1, 0.6];
        TabularGame::new(vec![2, 2], 2, 0.9, vec![0.5, 0.5], transition, vec![r0, r1]).unwrap()
    }

    #[test]
    fn joint_index_roundtrips() {
        let g = two_state_game();
        for a0 in 0..2 {
            for a1 in 0..2 {
                let j = g.joint_index(&[a0, a1]);
                assert_eq!(g.decode_joint(j), vec![a0, a1]);
                assert_eq!(g.agent_action(j, 0), a0);
                assert_eq!(g.agent_action(j, 1), a1);
                assert_eq!(g.with_agent_action(j, 0, 1 - a0), g.joint_index(&[1 - a0, a1]));
            }
        }
    }

    #[test]
    fn mixed_radix_ordering_is_agent0_major() {
        let g = TabularGame::<f64>::new(
            vec![2, 3],
            1,
            0.5,
            vec![1.0],
            {
                let mut t = Vec::new();
                for _ in 0..6 {
                    t.push(1.0);
                }
                t
            },
            vec![vec![0.0; 6], vec![0.0; 6]],
        )
        .unwrap();
        assert_eq!(g.joint_index(&[0, 0]), 0);
        assert_eq!(g.joint_index(&[0, 2]), 2);
        assert_eq!(g.joint_index(&[1, 0]), 3);
        assert_eq!(g.joint_index(&[1, 2]), 5);
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let mut transition = vec![0.0; 2 * 4 * 2];
        for s in 0..2 {
            for a in 0..4 {
                transition[(s * 4 + a) * 2] = 1.0;
            }
        }
        transition[0] = 0.9; // row now sums to 0.9
        let err = TabularGame::new(
            vec![2, 2],
            2,
            0.9,
            vec![0.5, 0.5],
            transition,
            vec![vec![0.0; 8], vec![0.0; 8]],
        )
        .unwrap_err();
        assert!(matches!(err, GameError::NotStochastic { state: 0, joint_action: 0, .. }));
    }

    #[test]
    fn validation_rejects_bad_gamma_and_rho() {
        let t = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        assert!(matches!(
            TabularGame::new(vec![2, 2], 2, 1.0, vec![0.5, 0.5], t.clone(), vec![vec![0.0; 8], vec![0.0; 8]]),
            Err(GameError::BadDiscount)
        ));
        assert!(matches!(
            TabularGame::new(vec![2, 2], 2, 0.9, vec![0.5, 0.4], t, vec![vec![0.0; 8], vec![0.0; 8]]),
            Err(GameError::BadInitialDistribution { .. })
        ));
    }

    #[test]
    fn policy_validation_flags_off_simplex_rows() {
        let g = two_state_game();
        let mut pi = DirectPolicy::uniform(&g);
        pi.validate(&g).unwrap();
        pi.tables[0][0] = 0.8; // row sums to 1.3
        assert!(matches!(
            pi.validate(&g),
            Err(GameError::PolicyNotSimplex { agent: 0, state: 0, .. })
        ));
    }

    #[test]
    fn deterministic_policy_and_rounding() {
        let g = two_state_game();
        let choices = vec![vec![1, 0], vec![0, 1]];
        let pi = DirectPolicy::deterministic(&g, &choices);
        pi.validate(&g).unwrap();
        assert_eq!(pi.round_deterministic(&g), choices);
        assert_eq!(pi.max_distance_from_vertex(&g), 0.0);
    }

    #[test]
    fn factorization_roundtrips() {
        let f = Factorization { state_counts: vec![2, 3, 2] };
        assert_eq!(f.n_global(), 12);
        for g in 0..12 {
            let locals = f.decode(g);
            assert_eq!(f.global_index(&locals), g);
            for (i, &l) in locals.iter().enumerate() {
                assert_eq!(f.local_state(g, i), l);
            }
        }
    }
}

//! Structured and unstructured random game generators.
//!
//! The factored generators build games from per-agent Markov chains (each
//! agent's local state moves under its own action only) plus structured
//! rewards, which is exactly the regime in which the three potential
//! constructions apply. `compile` multiplies the chains into a dense joint
//! game and derives the potential through the *validating* builders, so a
//! hand-assembled inconsistent `FactoredGame` is rejected rather than
//! silently compiled.
//!
//! Two adversarial generators complete the test bed: a zero-sum game with
//! coupled rewards (no potential exists; the naive candidate `φ = r_0` must
//! fail verification loudly) and a game whose rewards are perfectly
//! self-structured but whose transitions are action-coupled (the potential
//! construction's side condition fails, and the compiled self-potential is
//! not a potential).

use super::potential::{
    build_mixed_potential, build_pairwise_potential, build_self_potential, PairwiseTables,
    StructureError,
};
use super::{Factorization, GameError, StatePotential, TabularGame};
use crate::scalar::{real, Scalar};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Errors from compiling a [`FactoredGame`] into a dense joint game.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("agent {agent}'s chain tensors do not match its declared state/action counts")]
    ChainShape { agent: usize },
    #[error("rewards are declared for {declared} agents but the game has {actual} chains")]
    RewardAgents { declared: usize, actual: usize },
}

/// One agent's private Markov chain: local states move under the agent's
/// own action only.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentChain<T> {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a][s']`.
    pub transition: Vec<T>,
    /// Local initial distribution `[s]`.
    pub rho: Vec<T>,
}

impl<T: Scalar> AgentChain<T> {
    fn check(&self, agent: usize) -> Result<(), CompileError> {
        let ok = self.transition.len() == self.n_states * self.n_actions * self.n_states
            && self.rho.len() == self.n_states
            && self.n_states > 0
            && self.n_actions > 0;
        if ok {
            Ok(())
        } else {
            Err(CompileError::ChainShape { agent })
        }
    }

    fn row(&self, s: usize, a: usize) -> &[T] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }
}

/// Structured reward declaration for a factored game.
#[derive(Debug, Clone, PartialEq)]
pub enum FactoredRewards<T> {
    /// `r_i(s,a) = tables[i][s_i * A_i + a_i]`.
    SelfOnly { tables: Vec<Vec<T>> },
    /// `r_i(s,a) = Σ_{j≠i} r_ij(s_i, s_j, a_i, a_j)` with symmetric tables.
    PairwiseSymmetric { pair_tables: PairwiseTables<T> },
    /// `r_i(s,a) = α r_i^self(s_i,a_i) + Σ_{j≠i} β_ij r_ij(...)`,
    /// shared `α`, symmetric `β`.
    Mixed { alpha: T, self_tables: Vec<Vec<T>>, betas: Vec<Vec<T>>, pair_tables: PairwiseTables<T> },
}

/// Per-agent chains plus structured rewards; [`FactoredGame::compile`]
/// produces the dense joint game together with its derived potential.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGame<T> {
    pub chains: Vec<AgentChain<T>>,
    pub gamma: T,
    pub rewards: FactoredRewards<T>,
}

/// A compiled factored game: the dense joint game, the state factorization,
/// and the potential derived (and validated) from the reward structure.
#[derive(Debug, Clone)]
pub struct CompiledGame<T> {
    pub game: TabularGame<T>,
    pub factorization: Factorization,
    pub potential: StatePotential<T>,
}

impl<T: Scalar> FactoredGame<T> {
    pub fn n_agents(&self) -> usize {
        self.chains.len()
    }

    /// Multiplies the per-agent chains into the dense joint game and builds
    /// the potential through the validating construction that matches the
    /// declared reward structure.
    pub fn compile(&self) -> Result<CompiledGame<T>, CompileError> {
        for (i, c) in self.chains.iter().enumerate() {
            c.check(i)?;
        }
        let n = self.n_agents();
        let fact = Factorization { state_counts: self.chains.iter().map(|c| c.n_states).collect() };
        let action_counts: Vec<usize> = self.chains.iter().map(|c| c.n_actions).collect();
        let n_states = fact.n_global();
        let n_joint: usize = action_counts.iter().product();

        let mut rho = vec![T::one(); n_states];
        for (s, slot) in rho.iter_mut().enumerate() {
            for i in 0..n {
                *slot = *slot * self.chains[i].rho[fact.local_state(s, i)];
            }
        }

        let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
        let mut joint_actions = vec![0usize; n];
        for s in 0..n_states {
            joint_actions.iter_mut().for_each(|a| *a = 0);
            for _a in 0..n_joint {
                for sp in 0..n_states {
                    let mut p = T::one();
                    for i in 0..n {
                        p = p * self.chains[i].row(fact.local_state(s, i), joint_actions[i])
                            [fact.local_state(sp, i)];
                    }
                    transition.push(p);
                }
                // advance the joint action odometer, agent 0 most significant
                for i in (0..n).rev() {
                    joint_actions[i] += 1;
                    if joint_actions[i] < action_counts[i] {
                        break;
                    }
                    joint_actions[i] = 0;
                }
            }
        }

        let rewards = self.dense_rewards(&fact, &action_counts)?;
        let game = TabularGame::new(
            action_counts,
            n_states,
            self.gamma,
            rho,
            transition,
            rewards,
        )?;
        let potential = match &self.rewards {
            FactoredRewards::SelfOnly { .. } => build_self_potential(&game, &fact)?,
            FactoredRewards::PairwiseSymmetric { pair_tables } => {
                build_pairwise_potential(&game, &fact, pair_tables)?
            }
            FactoredRewards::Mixed { alpha, self_tables, betas, pair_tables } => {
                build_mixed_potential(
                    &game,
                    &fact,
                    &vec![*alpha; n],
                    self_tables,
                    betas,
                    pair_tables,
                )?
            }
        };
        Ok(CompiledGame { game, factorization: fact, potential })
    }

    fn dense_rewards(
        &self,
        fact: &Factorization,
        action_counts: &[usize],
    ) -> Result<Vec<Vec<T>>, CompileError> {
        let n = self.n_agents();
        let declared = match &self.rewards {
            FactoredRewards::SelfOnly { tables } => tables.len(),
            FactoredRewards::PairwiseSymmetric { pair_tables } => pair_tables.tables.len(),
            FactoredRewards::Mixed { self_tables, .. } => self_tables.len(),
        };
        if declared != n {
            return Err(CompileError::RewardAgents { declared, actual: n });
        }
        let n_states = fact.n_global();
        let n_joint: usize = action_counts.iter().product();
        let decode_action = |joint: usize, agent: usize| -> usize {
            let mut j = joint;
            let mut a = 0;
            for i in (0..n).rev() {
                a = j % action_counts[i];
                j /= action_counts[i];
                if i == agent {
                    return a;
                }
            }
            a
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut table = vec![T::zero(); n_states * n_joint];
            for s in 0..n_states {
                for a in 0..n_joint {
                    let s_i = fact.local_state(s, i);
                    let a_i = decode_action(a, i);
                    let mut r = T::zero();
                    match &self.rewards {
                        FactoredRewards::SelfOnly { tables } => {
                            r = tables[i][s_i * action_counts[i] + a_i];
                        }
                        FactoredRewards::PairwiseSymmetric { pair_tables } => {
                            for j in 0..n {
                                if j == i {
                                    continue;
                                }
                                let s_j = fact.local_state(s, j);
                                let a_j = decode_action(a, j);
                                r = r + pair_tables.at(fact, action_counts, i, j, s_i, s_j, a_i, a_j);
                            }
                        }
                        FactoredRewards::Mixed { alpha, self_tables, betas, pair_tables } => {
                            r = *alpha * self_tables[i][s_i * action_counts[i] + a_i];
                            for j in 0..n {
                                if j == i {
                                    continue;
                                }
                                let s_j = fact.local_state(s, j);
                                let a_j = decode_action(a, j);
                                r = r + betas[i][j]
                                    * pair_tables.at(fact, action_counts, i, j, s_i, s_j, a_i, a_j);
                            }
                        }
                    }
                    table[s * n_joint + a] = r;
                }
            }
            out.push(table);
        }
        Ok(out)
    }
}

/// Shape of a randomly generated game. For the factored generators,
/// `states_per_agent[i]` is agent `i`'s local chain size; for
/// [`random_dense_game`] the global state count is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGameSpec {
    pub states_per_agent: Vec<usize>,
    pub actions_per_agent: Vec<usize>,
    pub gamma: f64,
}

fn dirichlet_row<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    // Dirichlet(1): normalized standard exponentials.
    let raw: Vec<f64> = (0..n).map(|_| -(rng.gen::<f64>().max(1e-300).ln())).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| real::<T>(x / sum)).collect()
}

fn uniform_rewards<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| real::<T>(rng.gen_range(-1.0..1.0))).collect()
}

fn random_chain<T: Scalar>(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> AgentChain<T> {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_row::<T>(rng, n_states));
    }
    AgentChain { n_states, n_actions, transition, rho: dirichlet_row(rng, n_states) }
}

fn check_factored_spec(spec: &RandomGameSpec) {
    assert_eq!(
        spec.states_per_agent.len(),
        spec.actions_per_agent.len(),
        "factored generators need one state count and one action count per agent"
    );
    assert!(!spec.states_per_agent.is_empty(), "need at least one agent");
}

fn random_chains<T: Scalar>(spec: &RandomGameSpec, rng: &mut ChaCha8Rng) -> Vec<AgentChain<T>> {
    spec.states_per_agent
        .iter()
        .zip(&spec.actions_per_agent)
        .map(|(&s, &a)| random_chain(rng, s, a))
        .collect()
}

fn random_pair_tables<T: Scalar>(spec: &RandomGameSpec, rng: &mut ChaCha8Rng) -> PairwiseTables<T> {
    let n = spec.states_per_agent.len();
    let fact = Factorization { state_counts: spec.states_per_agent.clone() };
    let mut pairs = PairwiseTables::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let fwd_len = PairwiseTables::<T>::expected_len(&fact, &spec.actions_per_agent, i, j);
            let rev_len = PairwiseTables::<T>::expected_len(&fact, &spec.actions_per_agent, j, i);
            let fwd = uniform_rewards::<T>(rng, fwd_len);
            // Mirror exactly: r_ji(s_j, s_i, a_j, a_i) = r_ij(s_i, s_j, a_i, a_j).
            let (s_j_count, a_i_count, a_j_count) =
                (spec.states_per_agent[j], spec.actions_per_agent[i], spec.actions_per_agent[j]);
            let s_i_count = spec.states_per_agent[i];
            let mut rev = vec![T::zero(); rev_len];
            for s_i in 0..s_i_count {
                for s_j in 0..s_j_count {
                    for a_i in 0..a_i_count {
                        for a_j in 0..a_j_count {
                            let f = ((s_i * s_j_count + s_j) * a_i_count + a_i) * a_j_count + a_j;
                            let r = ((s_j * s_i_count + s_i) * a_j_count + a_j) * a_i_count + a_i;
                            rev[r] = fwd[f];
                        }
                    }
                }
            }
            pairs.tables[i][j] = Some(fwd);
            pairs.tables[j][i] = Some(rev);
        }
    }
    pairs
}

/// Random game whose rewards are purely self-structured (Markov potential
/// game with `Φ = Σ_i r_i^self` once compiled, since the chains are
/// action-independent across agents by construction).
pub fn random_self_reward_game<T: Scalar>(
    spec: &RandomGameSpec,
    rng: &mut ChaCha8Rng,
) -> FactoredGame<T> {
    check_factored_spec(spec);
    let chains = random_chains(spec, rng);
    let tables = spec
        .states_per_agent
        .iter()
        .zip(&spec.actions_per_agent)
        .map(|(&s, &a)| uniform_rewards::<T>(rng, s * a))
        .collect();
    FactoredGame { chains, gamma: real(spec.gamma), rewards: FactoredRewards::SelfOnly { tables } }
}

/// Random game whose rewards are sums of symmetric pairwise terms.
pub fn random_pairwise_game<T: Scalar>(
    spec: &RandomGameSpec,
    rng: &mut ChaCha8Rng,
) -> FactoredGame<T> {
    check_factored_spec(spec);
    let chains = random_chains(spec, rng);
    let pair_tables = random_pair_tables(spec, rng);
    FactoredGame {
        chains,
        gamma: real(spec.gamma),
        rewards: FactoredRewards::PairwiseSymmetric { pair_tables },
    }
}

/// Random game mixing a shared-weight self term with symmetric weighted
/// pairwise terms.
pub fn random_mixed_game<T: Scalar>(
    spec: &RandomGameSpec,
    rng: &mut ChaCha8Rng,
) -> FactoredGame<T> {
    check_factored_spec(spec);
    let n = spec.states_per_agent.len();
    let chains = random_chains(spec, rng);
    let alpha = real::<T>(rng.gen_range(0.25..2.0));
    let self_tables = spec
        .states_per_agent
        .iter()
        .zip(&spec.actions_per_agent)
        .map(|(&s, &a)| uniform_rewards::<T>(rng, s * a))
        .collect();
    let mut betas = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let b = real::<T>(rng.gen_range(-1.0..1.0));
            betas[i][j] = b;
            betas[j][i] = b;
        }
    }
    let pair_tables = random_pair_tables(spec, rng);
    FactoredGame {
        chains,
        gamma: real(spec.gamma),
        rewards: FactoredRewards::Mixed { alpha, self_tables, betas, pair_tables },
    }
}

/// Dense unstructured random game: Dirichlet(1) transition rows over the
/// product state space, rewards uniform on `[-1, 1]`.
pub fn random_dense_game<T: Scalar>(spec: &RandomGameSpec, rng: &mut ChaCha8Rng) -> TabularGame<T> {
    let n_states: usize = spec.states_per_agent.iter().product();
    let n_joint: usize = spec.actions_per_agent.iter().product();
    assert!(n_states > 0 && n_joint > 0);
    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    for _ in 0..n_states * n_joint {
        transition.extend(dirichlet_row::<T>(rng, n_states));
    }
    let rewards = (0..spec.actions_per_agent.len())
        .map(|_| uniform_rewards::<T>(rng, n_states * n_joint))
        .collect();
    TabularGame::new(
        spec.actions_per_agent.clone(),
        n_states,
        real(spec.gamma),
        dirichlet_row(rng, n_states),
        transition,
        rewards,
    )
    .expect("generated tensors are valid by construction")
}

/// Two-agent zero-sum game with action-coupled rewards and the (wrong)
/// candidate potential `φ = r_0`. No potential exists for a nontrivial
/// zero-sum game, so the verifier must report a large violation: any
/// deviation by agent 1 changes `V_1` while `V_φ = V_0 = -V_1` moves the
/// opposite way.
pub fn random_zero_sum_counterexample<T: Scalar>(
    rng: &mut ChaCha8Rng,
) -> (TabularGame<T>, StatePotential<T>) {
    let n_states = 2;
    let n_joint = 4; // two agents, two actions each
    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    for _ in 0..n_states * n_joint {
        transition.extend(dirichlet_row::<T>(rng, n_states));
    }
    // Reward for agent 0; re-drawn until agent 1 has real action influence
    // so the counterexample cannot be accidentally degenerate.
    let r0: Vec<T> = loop {
        let candidate = uniform_rewards::<T>(rng, n_states * n_joint);
        let mut spread = T::zero();
        for s in 0..n_states {
            for a0 in 0..2 {
                let lo = candidate[s * n_joint + a0 * 2];
                let hi = candidate[s * n_joint + a0 * 2 + 1];
                spread = spread.max((lo - hi).abs());
            }
        }
        if spread > real::<T>(0.5) {
            break candidate;
        }
    };
    let r1: Vec<T> = r0.iter().map(|x| -*x).collect();
    let game = TabularGame::new(
        vec![2, 2],
        n_states,
        real(0.9),
        dirichlet_row(rng, n_states),
        transition,
        vec![r0.clone(), r1],
    )
    .expect("generated tensors are valid by construction");
    (game, StatePotential { values: r0 })
}

/// Game with perfectly self-structured rewards whose transitions are
/// action-coupled: agent 0's local state is pushed toward
/// `(s_0 + a_0 + a_1) mod S_0`, so its chain marginal depends on agent 1's
/// action. The self-potential construction's side condition fails here, and
/// `Σ_i r_i^self` is demonstrably not a potential. Returns the dense game
/// and its state factorization.
pub fn random_action_coupled_game<T: Scalar>(
    spec: &RandomGameSpec,
    rng: &mut ChaCha8Rng,
) -> (TabularGame<T>, Factorization) {
    check_factored_spec(spec);
    assert!(spec.states_per_agent.len() >= 2, "coupling needs at least two agents");
    let n = spec.states_per_agent.len();
    let fact = Factorization { state_counts: spec.states_per_agent.clone() };
    let action_counts = spec.actions_per_agent.clone();
    let n_states = fact.n_global();
    let n_joint: usize = action_counts.iter().product();
    let s0_count = spec.states_per_agent[0];

    // Independent chains for agents 1..N.
    let tail_chains: Vec<AgentChain<T>> = (1..n)
        .map(|i| random_chain(rng, spec.states_per_agent[i], spec.actions_per_agent[i]))
        .collect();
    let rho0 = dirichlet_row::<T>(rng, s0_count);

    let decode_action = |joint: usize, agent: usize| -> usize {
        let mut j = joint;
        let mut a = 0;
        for i in (0..n).rev() {
            a = j % action_counts[i];
            j /= action_counts[i];
            if i == agent {
                return a;
            }
        }
        a
    };

    // Agent 0's coupled row: mostly mass on (s_0 + a_0 + a_1) mod S_0.
    let coupled_row = |s_0: usize, a_0: usize, a_1: usize| -> Vec<T> {
        let target = (s_0 + a_0 + a_1) % s0_count;
        let off = real::<T>(0.05);
        let mut row = vec![off; s0_count];
        row[target] = T::one() - off * real::<T>((s0_count - 1) as f64);
        row
    };

    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    for s in 0..n_states {
        for a in 0..n_joint {
            let a0 = decode_action(a, 0);
            let a1 = decode_action(a, 1);
            let row0 = coupled_row(fact.local_state(s, 0), a0, a1);
            for sp in 0..n_states {
                let mut p = row0[fact.local_state(sp, 0)];
                for i in 1..n {
                    p = p * tail_chains[i - 1]
                        .row(fact.local_state(s, i), decode_action(a, i))
                        [fact.local_state(sp, i)];
                }
                transition.push(p);
            }
        }
    }

    let mut rho = vec![T::one(); n_states];
    for (s, slot) in rho.iter_mut().enumerate() {
        *slot = *slot * rho0[fact.local_state(s, 0)];
        for i in 1..n {
            *slot = *slot * tail_chains[i - 1].rho[fact.local_state(s, i)];
        }
    }

    // Self-structured rewards; agent 0's reward separates its local states
    // strongly so the bogus self-potential misses the coupling by a wide
    // margin.
    let mut rewards = Vec::with_capacity(n);
    for i in 0..n {
        let a_i = action_counts[i];
        let s_i = spec.states_per_agent[i];
        let mut table = uniform_rewards::<T>(rng, s_i * a_i);
        if i == 0 && s_i > 1 {
            for s in 0..s_i {
                let level =
                    real::<T>(2.0 * s as f64 / (s_i - 1) as f64 - 1.0) * real::<T>(2.0);
                for a in 0..a_i {
                    table[s * a_i + a] = table[s * a_i + a] * real::<T>(0.1) + level;
                }
            }
        }
        let mut dense = vec![T::zero(); n_states * n_joint];
        for s in 0..n_states {
            for a in 0..n_joint {
                dense[s * n_joint + a] =
                    table[fact.local_state(s, i) * a_i + decode_action(a, i)];
            }
        }
        rewards.push(dense);
    }

    let game = TabularGame::new(action_counts, n_states, real(spec.gamma), rho, transition, rewards)
        .expect("generated tensors are valid by construction");
    (game, fact)
}

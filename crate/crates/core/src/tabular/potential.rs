//! Potential constructions for structured games and the
//! Markov-potential-game checker.
//!
//! Three constructions are supported, mirroring the sufficient conditions
//! under which a structured game is an exact Markov potential game:
//!
//! 1. **Decoupled self rewards** (`build_self_potential`): if every agent's
//!    reward depends only on its own local state and action,
//!    `r_i(s,a) = r_i^self(s_i, a_i)`, and every agent's state transitions
//!    independently of the others' actions, then `Φ = Σ_i r_i^self`.
//! 2. **Symmetric pairwise rewards** (`build_pairwise_potential`): if
//!    `r_i = Σ_{j≠i} r_ij` with `r_ij(s_i,s_j,a_i,a_j) = r_ji(s_j,s_i,a_j,a_i)`,
//!    then `Φ = Σ_i Σ_{j<i} r_ij` (each pair counted once).
//! 3. **Mixed** (`build_mixed_potential`): `r_i = α r_i^self + Σ_j β_ij r_ij`
//!    with a shared `α` and symmetric `β`, giving
//!    `Φ = α Σ_i r_i^self + Σ_i Σ_{j<i} β_ij r_ij`.
//!
//! The mixed construction deliberately requires one shared `α`: with
//! per-agent `α_i` the candidate potential is not well defined (a unilateral
//! deviation by agent `i` changes `Φ`'s self part by `α_i Δr_i^self` only if
//! the same `α_i` multiplies every self term, i.e. agent-dependent scaling
//! must be absorbed into `r_i^self` beforehand).
//!
//! `verify_mpg` checks the defining identity on sampled unilateral
//! deviations: for random `(θ, i, θ_i')`,
//! `V_i^{θ_i',θ_{-i}}(s) - V_i^{θ}(s) = V_Φ^{θ_i',θ_{-i}}(s) - V_Φ^{θ}(s)`
//! at every initial state `s` (and therefore also after averaging with `ρ`),
//! with both sides computed by exact linear solves.

use super::value::value_function;
use super::{DirectPolicy, Factorization, StatePotential, TabularGame};
use crate::scalar::{real, to_f64, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Structural validation errors for the potential constructions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("factorization covers {covered} global states but the game has {actual}")]
    FactorizationMismatch { covered: usize, actual: usize },
    #[error(
        "agent {agent}'s reward is not a function of its own (state, action): \
         max deviation {deviation} at local state {local_state}, action {action}"
    )]
    NotSelfStructured { agent: usize, local_state: usize, action: usize, deviation: f64 },
    #[error("pairwise table r[{i}][{j}] is missing")]
    MissingPairTable { i: usize, j: usize },
    #[error("pairwise table r[{i}][{j}] has length {got}, expected {expected}")]
    PairTableShape { i: usize, j: usize, expected: usize, got: usize },
    #[error("pairwise symmetry violated for pair ({i}, {j}): max deviation {deviation}")]
    AsymmetricPair { i: usize, j: usize, deviation: f64 },
    #[error("beta weights must be symmetric: beta[{i}][{j}] != beta[{j}][{i}]")]
    AsymmetricBeta { i: usize, j: usize },
    #[error(
        "mixed potential requires a single shared alpha (alpha[{agent}] = {value} differs \
         from alpha[0] = {first}); fold per-agent scaling into the self rewards instead"
    )]
    AlphaNotShared { agent: usize, value: f64, first: f64 },
    #[error("declared decomposition does not reproduce agent {agent}'s reward: max deviation {deviation}")]
    DecompositionMismatch { agent: usize, deviation: f64 },
    #[error("alpha/beta tables have wrong dimensions for {n_agents} agents")]
    WeightShape { n_agents: usize },
}

/// Tolerance for structural equality checks.
fn structure_tol<T: Scalar>() -> T {
    real::<T>(1e-12).max(T::epsilon() * real::<T>(64.0))
}

fn check_factorization<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
) -> Result<(), StructureError> {
    let covered = fact.n_global();
    if covered != game.n_states() || fact.state_counts.len() != game.n_agents() {
        return Err(StructureError::FactorizationMismatch { covered, actual: game.n_states() });
    }
    Ok(())
}

/// Extracts per-agent self-reward tables `r_i^self(s_i, a_i)` from the dense
/// reward tensors, verifying that each agent's reward is constant across all
/// completions `(s_{-i}, a_{-i})`. Returned tables are row-major
/// `[s_i][a_i]`.
pub fn extract_self_tables<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
) -> Result<Vec<Vec<T>>, StructureError> {
    check_factorization(game, fact)?;
    let tol = structure_tol::<T>();
    let mut out = Vec::with_capacity(game.n_agents());
    for i in 0..game.n_agents() {
        let a_i = game.action_counts()[i];
        let s_i = fact.state_counts[i];
        let mut table = vec![T::nan(); s_i * a_i];
        let mut max_dev = T::zero();
        let mut dev_loc = (0usize, 0usize);
        for s in 0..game.n_states() {
            let local = fact.local_state(s, i);
            for a in 0..game.n_joint_actions() {
                let ai = game.agent_action(a, i);
                let r = game.reward(i, s, a);
                let slot = &mut table[local * a_i + ai];
                if slot.is_nan() {
                    *slot = r;
                } else {
                    let dev = (*slot - r).abs();
                    if dev > max_dev {
                        max_dev = dev;
                        dev_loc = (local, ai);
                    }
                }
            }
        }
        if max_dev > tol {
            return Err(StructureError::NotSelfStructured {
                agent: i,
                local_state: dev_loc.0,
                action: dev_loc.1,
                deviation: to_f64(max_dev),
            });
        }
        out.push(table);
    }
    Ok(out)
}

/// Builds `Φ(s,a) = Σ_i r_i^self(s_i, a_i)` for a game whose rewards are
/// self-structured under the declared factorization.
///
/// Note this construction only yields an exact potential when each agent's
/// transitions are also independent of the other agents' actions; use
/// [`verify_transition_independence`] to check that side condition.
pub fn build_self_potential<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
) -> Result<StatePotential<T>, StructureError> {
    let tables = extract_self_tables(game, fact)?;
    let na = game.n_joint_actions();
    let mut values = vec![T::zero(); game.n_states() * na];
    for s in 0..game.n_states() {
        for a in 0..na {
            let mut phi = T::zero();
            for i in 0..game.n_agents() {
                let local = fact.local_state(s, i);
                let ai = game.agent_action(a, i);
                phi = phi + tables[i][local * game.action_counts()[i] + ai];
            }
            values[s * na + a] = phi;
        }
    }
    Ok(StatePotential { values })
}

/// Pairwise reward decomposition: `tables[i][j]` holds
/// `r_ij(s_i, s_j, a_i, a_j)` row-major in `[s_i][s_j][a_i][a_j]`, for every
/// ordered pair `i != j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTables<T> {
    pub tables: Vec<Vec<Option<Vec<T>>>>,
}

impl<T: Scalar> PairwiseTables<T> {
    pub fn empty(n_agents: usize) -> Self {
        PairwiseTables { tables: vec![vec![None; n_agents]; n_agents] }
    }

    pub fn expected_len(fact: &Factorization, actions: &[usize], i: usize, j: usize) -> usize {
        fact.state_counts[i] * fact.state_counts[j] * actions[i] * actions[j]
    }

    pub fn at(
        &self,
        fact: &Factorization,
        actions: &[usize],
        i: usize,
        j: usize,
        s_i: usize,
        s_j: usize,
        a_i: usize,
        a_j: usize,
    ) -> T {
        let t = self.tables[i][j].as_ref().expect("pair table present");
        t[((s_i * fact.state_counts[j] + s_j) * actions[i] + a_i) * actions[j] + a_j]
    }

    fn validate(
        &self,
        game: &TabularGame<T>,
        fact: &Factorization,
    ) -> Result<(), StructureError> {
        let n = game.n_agents();
        if self.tables.len() != n || self.tables.iter().any(|row| row.len() != n) {
            return Err(StructureError::WeightShape { n_agents: n });
        }
        let tol = structure_tol::<T>();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let t = self.tables[i][j]
                    .as_ref()
                    .ok_or(StructureError::MissingPairTable { i, j })?;
                let expected = Self::expected_len(fact, game.action_counts(), i, j);
                if t.len() != expected {
                    return Err(StructureError::PairTableShape { i, j, expected, got: t.len() });
                }
                if j < i {
                    continue; // symmetry checked once per unordered pair
                }
                let mut dev = T::zero();
                for s_i in 0..fact.state_counts[i] {
                    for s_j in 0..fact.state_counts[j] {
                        for a_i in 0..game.action_counts()[i] {
                            for a_j in 0..game.action_counts()[j] {
                                let fwd = self.at(fact, game.action_counts(), i, j, s_i, s_j, a_i, a_j);
                                let rev = self.at(fact, game.action_counts(), j, i, s_j, s_i, a_j, a_i);
                                dev = dev.max((fwd - rev).abs());
                            }
                        }
                    }
                }
                if dev > tol {
                    return Err(StructureError::AsymmetricPair { i, j, deviation: to_f64(dev) });
                }
            }
        }
        Ok(())
    }
}

/// Sum of an agent's pairwise terms at a dense `(s, a)` index, weighted by
/// `beta` (pass `None` for unit weights).
fn pair_sum_for_agent<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
    pairs: &PairwiseTables<T>,
    betas: Option<&[Vec<T>]>,
    i: usize,
    s: usize,
    a: usize,
) -> T {
    let mut acc = T::zero();
    let s_i = fact.local_state(s, i);
    let a_i = game.agent_action(a, i);
    for j in 0..game.n_agents() {
        if j == i {
            continue;
        }
        let s_j = fact.local_state(s, j);
        let a_j = game.agent_action(a, j);
        let w = betas.map_or(T::one(), |b| b[i][j]);
        acc = acc + w * pairs.at(fact, game.action_counts(), i, j, s_i, s_j, a_i, a_j);
    }
    acc
}

/// Verifies that a declared decomposition reproduces the dense rewards:
/// `r_i(s,a) = α r_i^self(s_i,a_i) + Σ_{j≠i} β_ij r_ij(...)`.
fn check_decomposition<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
    alpha: T,
    self_tables: Option<&[Vec<T>]>,
    betas: Option<&[Vec<T>]>,
    pairs: &PairwiseTables<T>,
) -> Result<(), StructureError> {
    let tol = structure_tol::<T>() * real::<T>(game.n_agents() as f64 + 1.0);
    for i in 0..game.n_agents() {
        let mut dev = T::zero();
        for s in 0..game.n_states() {
            for a in 0..game.n_joint_actions() {
                let mut expect = pair_sum_for_agent(game, fact, pairs, betas, i, s, a);
                if let Some(selfs) = self_tables {
                    let s_i = fact.local_state(s, i);
                    let a_i = game.agent_action(a, i);
                    expect = expect + alpha * selfs[i][s_i * game.action_counts()[i] + a_i];
                }
                dev = dev.max((expect - game.reward(i, s, a)).abs());
            }
        }
        if dev > tol {
            return Err(StructureError::DecompositionMismatch { agent: i, deviation: to_f64(dev) });
        }
    }
    Ok(())
}

/// Builds `Φ = Σ_i Σ_{j<i} r_ij` for a game whose rewards are sums of
/// symmetric pairwise terms. Checks symmetry of the supplied tables and that
/// they reproduce the dense rewards.
pub fn build_pairwise_potential<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
    pairs: &PairwiseTables<T>,
) -> Result<StatePotential<T>, StructureError> {
    check_factorization(game, fact)?;
    pairs.validate(game, fact)?;
    check_decomposition(game, fact, T::zero(), None, None, pairs)?;
    let na = game.n_joint_actions();
    let mut values = vec![T::zero(); game.n_states() * na];
    for s in 0..game.n_states() {
        for a in 0..na {
            let mut phi = T::zero();
            for i in 0..game.n_agents() {
                for j in 0..i {
                    let s_i = fact.local_state(s, i);
                    let s_j = fact.local_state(s, j);
                    let a_i = game.agent_action(a, i);
                    let a_j = game.agent_action(a, j);
                    phi = phi + pairs.at(fact, game.action_counts(), i, j, s_i, s_j, a_i, a_j);
                }
            }
            values[s * na + a] = phi;
        }
    }
    Ok(StatePotential { values })
}

/// Builds the mixed potential
/// `Φ = α Σ_i r_i^self + Σ_i Σ_{j<i} β_ij r_ij`.
///
/// `alphas` must all be equal (the shared-`α` restriction documented at the
/// module level) and `betas` must be symmetric; both are validated, as is the
/// reproduction of the dense rewards from the declared decomposition.
pub fn build_mixed_potential<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
    alphas: &[T],
    self_tables: &[Vec<T>],
    betas: &[Vec<T>],
    pairs: &PairwiseTables<T>,
) -> Result<StatePotential<T>, StructureError> {
    check_factorization(game, fact)?;
    let n = game.n_agents();
    if alphas.len() != n || betas.len() != n || betas.iter().any(|row| row.len() != n) {
        return Err(StructureError::WeightShape { n_agents: n });
    }
    let tol = structure_tol::<T>();
    for (i, a) in alphas.iter().enumerate() {
        if (*a - alphas[0]).abs() > tol {
            return Err(StructureError::AlphaNotShared {
                agent: i,
                value: to_f64(*a),
                first: to_f64(alphas[0]),
            });
        }
    }
    for i in 0..n {
        for j in 0..i {
            if (betas[i][j] - betas[j][i]).abs() > tol {
                return Err(StructureError::AsymmetricBeta { i, j });
            }
        }
    }
    pairs.validate(game, fact)?;
    check_decomposition(game, fact, alphas[0], Some(self_tables), Some(betas), pairs)?;

    let alpha = alphas[0];
    let na = game.n_joint_actions();
    let mut values = vec![T::zero(); game.n_states() * na];
    for s in 0..game.n_states() {
        for a in 0..na {
            let mut phi = T::zero();
            for i in 0..n {
                let s_i = fact.local_state(s, i);
                let a_i = game.agent_action(a, i);
                phi = phi + alpha * self_tables[i][s_i * game.action_counts()[i] + a_i];
                for j in 0..i {
                    let s_j = fact.local_state(s, j);
                    let a_j = game.agent_action(a, j);
                    phi = phi
                        + betas[i][j] * pairs.at(fact, game.action_counts(), i, j, s_i, s_j, a_i, a_j);
                }
            }
            values[s * na + a] = phi;
        }
    }
    Ok(StatePotential { values })
}

/// Largest deviation of any agent's local-state transition marginal across
/// the other agents' actions:
/// `max_{i, s, a_i, a_{-i}, a_{-i}'} | P(s_i'|s, a_i, a_{-i}) - P(s_i'|s, a_i, a_{-i}') |`.
pub fn transition_independence_deviation<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
) -> Result<T, StructureError> {
    check_factorization(game, fact)?;
    let mut max_dev = T::zero();
    for i in 0..game.n_agents() {
        let s_i_count = fact.state_counts[i];
        let a_i_count = game.action_counts()[i];
        for s in 0..game.n_states() {
            // reference[a_i][s_i'] marginal for the first completion seen.
            let mut reference: Vec<Option<Vec<T>>> = vec![None; a_i_count];
            for a in 0..game.n_joint_actions() {
                let a_i = game.agent_action(a, i);
                let row = game.transition_row(s, a);
                let mut marginal = vec![T::zero(); s_i_count];
                for (sp, p) in row.iter().enumerate() {
                    marginal[fact.local_state(sp, i)] = marginal[fact.local_state(sp, i)] + *p;
                }
                match &reference[a_i] {
                    None => reference[a_i] = Some(marginal),
                    Some(r) => {
                        for (m, rv) in marginal.iter().zip(r) {
                            max_dev = max_dev.max((*m - *rv).abs());
                        }
                    }
                }
            }
        }
    }
    Ok(max_dev)
}

/// True iff every agent's local-state transition marginal is invariant to
/// the other agents' actions (deviation below 1e-12).
pub fn verify_transition_independence<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
) -> Result<bool, StructureError> {
    Ok(transition_independence_deviation(game, fact)? <= structure_tol::<T>())
}

/// Options for the Markov-potential-game checker.
#[derive(Debug, Clone, Copy)]
pub struct VerifyMpgOptions {
    /// Number of sampled unilateral deviations.
    pub n_deviations: usize,
    /// Pass threshold on the maximum violation.
    pub tol: f64,
    /// RNG seed; each deviation gets an independent deterministic stream.
    pub seed: u64,
}

impl Default for VerifyMpgOptions {
    fn default() -> Self {
        VerifyMpgOptions { n_deviations: 200, tol: 1e-8, seed: 0 }
    }
}

/// Outcome of [`verify_mpg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpgReport<T> {
    /// Max over samples and initial states of
    /// `| ΔV_i(s) - ΔV_Φ(s) |` for the sampled unilateral deviation.
    pub max_violation: T,
    /// Max over samples of the ρ-averaged violation `| ΔJ_i - ΔΦ |`.
    pub max_violation_avg: T,
    pub n_deviations: usize,
    /// `max_violation <= tol`.
    pub passed: bool,
}

fn dirichlet_row<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    // Dirichlet(1): normalized standard exponentials.
    let raw: Vec<f64> = (0..n).map(|_| -(rng.gen::<f64>().max(1e-300).ln())).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| real::<T>(x / sum)).collect()
}

/// One random policy table for `agent`.
///
/// With a factorization the table is drawn from the decentralized class:
/// one action distribution per *local* state, broadcast to every global
/// state sharing that local state. Without one, every global state gets an
/// independent distribution.
fn random_agent_table<T: Scalar>(
    game: &TabularGame<T>,
    fact: Option<&Factorization>,
    agent: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    let a = game.action_counts()[agent];
    match fact {
        None => {
            let mut t = Vec::with_capacity(game.n_states() * a);
            for _ in 0..game.n_states() {
                t.extend(dirichlet_row::<T>(rng, a));
            }
            t
        }
        Some(f) => {
            let rows: Vec<Vec<T>> =
                (0..f.state_counts[agent]).map(|_| dirichlet_row::<T>(rng, a)).collect();
            let mut t = Vec::with_capacity(game.n_states() * a);
            for s in 0..game.n_states() {
                t.extend(rows[f.local_state(s, agent)].iter().copied());
            }
            t
        }
    }
}

fn random_policy_tables<T: Scalar>(
    game: &TabularGame<T>,
    fact: Option<&Factorization>,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<T>> {
    (0..game.n_agents()).map(|i| random_agent_table(game, fact, i, rng)).collect()
}

/// Checks the Markov-potential-game identity on sampled unilateral
/// deviations with exact value-function evaluations.
///
/// `factorization` selects the policy class the check quantifies over.
/// With `Some`, sampled profiles and deviations are decentralized: each
/// agent's action distribution depends only on its own local state. That is
/// the class over which the structured-reward potential constructions are
/// exact — a unilateral deviation then cannot influence the other agents'
/// action processes, which is what makes their reward terms cancel. With
/// `None`, profiles range over independent per-global-state simplices; use
/// that for potentials valid over the full class (identical-interest games)
/// or to exhibit violations on counterexamples.
///
/// The samples fan out across worker threads, each with its own
/// deterministic RNG stream derived from `opts.seed`, and merge by maximum,
/// so the report does not depend on thread scheduling.
pub fn verify_mpg<T: Scalar>(
    game: &TabularGame<T>,
    phi: &StatePotential<T>,
    factorization: Option<&Factorization>,
    opts: &VerifyMpgOptions,
) -> Result<MpgReport<T>, super::ValueError> {
    if let Some(f) = factorization {
        assert_eq!(
            f.n_global(),
            game.n_states(),
            "factorization covers {} global states but the game has {}",
            f.n_global(),
            game.n_states()
        );
    }
    let results: Result<Vec<(T, T)>, super::ValueError> = (0..opts.n_deviations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(k as u64 + 1)));
            let base = DirectPolicy { tables: random_policy_tables(game, factorization, &mut rng) };
            let agent = rng.gen_range(0..game.n_agents());
            let mut deviated = base.clone();
            deviated.tables[agent] = random_agent_table(game, factorization, agent, &mut rng);

            let v_base = value_function(game, &base, game.reward_table(agent))?;
            let v_dev = value_function(game, &deviated, game.reward_table(agent))?;
            let p_base = value_function(game, &base, &phi.values)?;
            let p_dev = value_function(game, &deviated, &phi.values)?;

            let mut per_state = T::zero();
            let mut avg = T::zero();
            for s in 0..game.n_states() {
                let lhs = v_dev[s] - v_base[s];
                let rhs = p_dev[s] - p_base[s];
                per_state = per_state.max((lhs - rhs).abs());
                avg = avg + game.rho()[s] * (lhs - rhs);
            }
            Ok((per_state, avg.abs()))
        })
        .collect();
    let results = results?;
    let max_violation = results.iter().map(|r| r.0).fold(T::zero(), T::max);
    let max_violation_avg = results.iter().map(|r| r.1).fold(T::zero(), T::max);
    Ok(MpgReport {
        max_violation,
        max_violation_avg,
        n_deviations: opts.n_deviations,
        passed: to_f64(max_violation) <= opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::super::generate::{
        random_mixed_game, random_pairwise_game, random_self_reward_game,
        random_zero_sum_counterexample, RandomGameSpec,
    };
    use super::*;

    fn spec2() -> RandomGameSpec {
        RandomGameSpec { states_per_agent: vec![2, 2], actions_per_agent: vec![2, 2], gamma: 0.9 }
    }

    fn dense_transition(game: &TabularGame<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for s in 0..game.n_states() {
            for a in 0..game.n_joint_actions() {
                out.extend_from_slice(game.transition_row(s, a));
            }
        }
        out
    }

    #[test]
    fn self_potential_verifies_on_structured_game() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let compiled = random_self_reward_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let phi = build_self_potential(&compiled.game, &compiled.factorization).unwrap();
        assert_eq!(phi.values, compiled.potential.values);
        let report = verify_mpg(
            &compiled.game,
            &phi,
            Some(&compiled.factorization),
            &VerifyMpgOptions { n_deviations: 50, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed, "violation {}", report.max_violation);
        assert!(verify_transition_independence(&compiled.game, &compiled.factorization).unwrap());
    }

    #[test]
    fn self_potential_fails_over_global_policy_class() {
        // Over centralized (global-state) policies a unilateral deviation
        // changes the other agents' action processes, so the sum of self
        // rewards is no longer an exact potential. The checker must expose
        // that when asked to quantify over the global class.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let compiled = random_self_reward_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let phi = build_self_potential(&compiled.game, &compiled.factorization).unwrap();
        let report = verify_mpg(
            &compiled.game,
            &phi,
            None,
            &VerifyMpgOptions { n_deviations: 50, ..Default::default() },
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.max_violation > 1e-3, "violation only {}", report.max_violation);
    }

    #[test]
    fn pairwise_potential_verifies_on_structured_game() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let compiled = random_pairwise_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let report = verify_mpg(
            &compiled.game,
            &compiled.potential,
            Some(&compiled.factorization),
            &VerifyMpgOptions { n_deviations: 50, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed, "violation {}", report.max_violation);
    }

    #[test]
    fn mixed_potential_verifies_on_structured_game() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let compiled = random_mixed_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let report = verify_mpg(
            &compiled.game,
            &compiled.potential,
            Some(&compiled.factorization),
            &VerifyMpgOptions { n_deviations: 50, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed, "violation {}", report.max_violation);
    }

    #[test]
    fn zero_sum_counterexample_fails_loudly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (game, phi) = random_zero_sum_counterexample::<f64>(&mut rng);
        let report = verify_mpg(&game, &phi, None, &VerifyMpgOptions::default()).unwrap();
        assert!(!report.passed);
        assert!(report.max_violation > 1e-2, "violation only {}", report.max_violation);
    }

    #[test]
    fn self_extraction_rejects_coupled_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let compiled = random_self_reward_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        // Couple agent 0's reward to agent 1's action.
        let mut rewards: Vec<Vec<f64>> =
            (0..2).map(|i| compiled.game.reward_table(i).to_vec()).collect();
        let na = compiled.game.n_joint_actions();
        rewards[0][na - 1] += 0.5;
        let broken = TabularGame::new(
            compiled.game.action_counts().to_vec(),
            compiled.game.n_states(),
            compiled.game.gamma(),
            compiled.game.rho().to_vec(),
            dense_transition(&compiled.game),
            rewards,
        )
        .unwrap();
        assert!(matches!(
            build_self_potential(&broken, &compiled.factorization),
            Err(StructureError::NotSelfStructured { agent: 0, .. })
        ));
    }

    #[test]
    fn mixed_rejects_per_agent_alpha_and_asymmetric_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let game = random_mixed_game::<f64>(&spec2(), &mut rng);
        let compiled = game.compile().unwrap();
        let (alpha, selfs, betas, pairs) = match &game.rewards {
            super::super::FactoredRewards::Mixed { alpha, self_tables, betas, pair_tables } => {
                (*alpha, self_tables.clone(), betas.clone(), pair_tables.clone())
            }
            _ => unreachable!(),
        };
        let bad_alphas = vec![alpha, alpha + 0.5];
        assert!(matches!(
            build_mixed_potential(&compiled.game, &compiled.factorization, &bad_alphas, &selfs, &betas, &pairs),
            Err(StructureError::AlphaNotShared { .. })
        ));
        let mut bad_betas = betas.clone();
        bad_betas[0][1] += 0.25;
        assert!(matches!(
            build_mixed_potential(&compiled.game, &compiled.factorization, &[alpha, alpha], &selfs, &bad_betas, &pairs),
            Err(StructureError::AsymmetricBeta { .. })
        ));
    }

    #[test]
    fn verify_mpg_is_deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let compiled = random_mixed_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let opts = VerifyMpgOptions { n_deviations: 40, tol: 1e-8, seed: 123 };
        let a = verify_mpg(&compiled.game, &compiled.potential, Some(&compiled.factorization), &opts).unwrap();
        let b = verify_mpg(&compiled.game, &compiled.potential, Some(&compiled.factorization), &opts).unwrap();
        assert_eq!(a.max_violation, b.max_violation);
        assert_eq!(a.max_violation_avg, b.max_violation_avg);
    }

    #[test]
    fn identical_interest_game_is_mpg_with_phi_equal_reward() {
        // Common-reward game: Φ = shared reward, checked through the sampler.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let compiled = random_self_reward_game::<f64>(&spec2(), &mut rng).compile().unwrap();
        let shared: Vec<f64> = compiled.potential.values.clone();
        let game = TabularGame::new(
            compiled.game.action_counts().to_vec(),
            compiled.game.n_states(),
            compiled.game.gamma(),
            compiled.game.rho().to_vec(),
            dense_transition(&compiled.game),
            vec![shared.clone(), shared.clone()],
        )
        .unwrap();
        let phi = StatePotential { values: shared };
        // Identical-interest potentials are exact over the *global* class.
        let report =
            verify_mpg(&game, &phi, None, &VerifyMpgOptions { n_deviations: 50, ..Default::default() }).unwrap();
        assert!(report.passed, "violation {}", report.max_violation);
    }

    #[test]
    fn per_state_violation_bounds_average_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (game, phi) = random_zero_sum_counterexample::<f64>(&mut rng);
        let report = verify_mpg(&game, &phi, None, &VerifyMpgOptions::default()).unwrap();
        assert!(report.max_violation >= report.max_violation_avg);
    }
}

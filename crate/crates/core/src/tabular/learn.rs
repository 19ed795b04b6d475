//! Learning dynamics on tabular games: projected gradient play,
//! exploitability (distance to Nash equilibrium), Euclidean simplex
//! projection, and exhaustive enumeration of deterministic policies.

use super::value::{
    policy_gradient, policy_gradient_all, scalar_objective, total_reward, ValueError,
};
use super::{DirectPolicy, Factorization, StatePotential, TabularGame};
use crate::scalar::{real, to_f64, Scalar};

/// Errors from the learning routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("options require a potential function but none was supplied: {feature}")]
    MissingPotential { feature: &'static str },
    #[error(
        "backtracking collapsed the step below {min_step} at iteration {iter} and the \
         potential objective still decreased by {drop}"
    )]
    BacktrackingFailed { iter: usize, drop: f64, min_step: f64 },
    #[error("game has no deterministic policies to enumerate")]
    EmptyEnumeration,
    #[error(
        "decentralized play requires the initial policy of agent {agent} to be constant \
         across global states sharing local state {local_state}"
    )]
    InitNotDecentralized { agent: usize, local_state: usize },
}

/// Euclidean projection of a finite vector onto the probability simplex
/// `{p : p >= 0, sum(p) = 1}` (sort-based algorithm).
pub fn simplex_projection<T: Scalar>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = T::zero();
    let mut tau = T::zero();
    let mut support = 0usize;
    for (k, u) in sorted.iter().enumerate() {
        cumulative = cumulative + *u;
        let candidate = (cumulative - T::one()) / real::<T>((k + 1) as f64);
        if *u - candidate > T::zero() {
            tau = candidate;
            support = k + 1;
        }
    }
    debug_assert!(support > 0, "simplex projection support must be non-empty");
    v.iter().map(|x| (*x - tau).max(T::zero())).collect()
}

/// Options for [`gradient_play`].
#[derive(Debug, Clone, Copy)]
pub struct GradientPlayOptions {
    /// Base step size `η`.
    pub eta: f64,
    /// Maximum number of simultaneous update iterations.
    pub max_iters: usize,
    /// Stop when the projected-gradient norm
    /// `max |θ⁺ - θ| / η` falls to or below this value.
    pub grad_tol: f64,
    /// Halve the step until the potential objective does not decrease by
    /// more than `monotonicity_tol` (requires a potential).
    pub backtracking: bool,
    /// Allowed per-step decrease of the potential objective under
    /// backtracking.
    pub monotonicity_tol: f64,
    /// At every iterate, compare each agent's own-reward gradient against
    /// the potential-objective gradient and record the largest gap
    /// (requires a potential).
    pub check_gradient_identity: bool,
    /// Keep every `record_every`-th iterate in the trace (the final iterate
    /// is always kept). `0` disables the trace entirely.
    pub record_every: usize,
}

impl Default for GradientPlayOptions {
    fn default() -> Self {
        GradientPlayOptions {
            eta: 0.05,
            max_iters: 10_000,
            grad_tol: 1e-8,
            backtracking: false,
            monotonicity_tol: 1e-10,
            check_gradient_identity: false,
            record_every: 1,
        }
    }
}

/// One retained iterate of gradient play.
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    /// Number of updates applied to produce this iterate (0 = initial).
    pub iter: usize,
    pub policy: DirectPolicy<T>,
    /// Potential objective `Φ` at this iterate, when a potential was given.
    pub potential: Option<T>,
    /// Projected-gradient norm of the step that produced this iterate
    /// (zero for the initial record).
    pub grad_norm: T,
    /// Step size actually used (after any backtracking halvings).
    pub eta_used: T,
}

/// Result of [`gradient_play`].
#[derive(Debug, Clone)]
pub struct GradientPlayResult<T> {
    pub policy: DirectPolicy<T>,
    /// Updates applied.
    pub iterations: usize,
    /// True iff the projected-gradient norm reached `grad_tol`.
    pub converged: bool,
    pub trace: Vec<IterationRecord<T>>,
    /// Final projected-gradient norm.
    pub grad_norm: T,
    /// Largest observed `max |∇J_i - ∇_{θ_i}J_Φ|` over iterates, when the
    /// identity check was enabled.
    pub max_identity_gap: Option<T>,
}

/// Folds a per-global-state gradient table into the decentralized
/// parameterization: the broadcast policy uses one parameter row per local
/// state, so contributions from global states sharing that local state add.
fn fold_local<T: Scalar>(
    game: &TabularGame<T>,
    fact: &Factorization,
    agent: usize,
    grad: &[T],
) -> Vec<T> {
    let a = game.action_counts()[agent];
    let mut out = vec![T::zero(); fact.state_counts[agent] * a];
    for s in 0..game.n_states() {
        let l = fact.local_state(s, agent);
        for j in 0..a {
            out[l * a + j] = out[l * a + j] + grad[s * a + j];
        }
    }
    out
}

/// Largest entry-wise difference between the simplex-tangential components
/// of two gradient tables (each row has its mean removed first). Additive
/// per-row constants neither move the projected iterate nor are pinned down
/// by the potential property, so comparisons must ignore them.
fn centered_gap<T: Scalar>(a: &[T], b: &[T], width: usize) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut gap = T::zero();
    let inv = real::<T>(1.0 / width as f64);
    for row in 0..a.len() / width {
        let ra = &a[row * width..(row + 1) * width];
        let rb = &b[row * width..(row + 1) * width];
        let ma = ra.iter().copied().sum::<T>() * inv;
        let mb = rb.iter().copied().sum::<T>() * inv;
        for j in 0..width {
            gap = gap.max(((ra[j] - ma) - (rb[j] - mb)).abs());
        }
    }
    gap
}

fn projected_step<T: Scalar>(
    game: &TabularGame<T>,
    fact: Option<&Factorization>,
    pi: &DirectPolicy<T>,
    grads: &[Vec<T>],
    eta: T,
) -> DirectPolicy<T> {
    let tables = (0..game.n_agents())
        .map(|i| {
            let a = game.action_counts()[i];
            match fact {
                None => {
                    let mut table = Vec::with_capacity(game.n_states() * a);
                    for s in 0..game.n_states() {
                        let row: Vec<T> = (0..a)
                            .map(|j| pi.tables[i][s * a + j] + eta * grads[i][s * a + j])
                            .collect();
                        table.extend(simplex_projection(&row));
                    }
                    table
                }
                Some(f) => {
                    // One update per local state; write-back broadcasts the
                    // projected row to every global state in its class.
                    let folded = fold_local(game, f, i, &grads[i]);
                    let mut local_rows: Vec<Option<Vec<T>>> = vec![None; f.state_counts[i]];
                    let mut table = vec![T::zero(); game.n_states() * a];
                    for s in 0..game.n_states() {
                        let l = f.local_state(s, i);
                        if local_rows[l].is_none() {
                            let row: Vec<T> = (0..a)
                                .map(|j| pi.tables[i][s * a + j] + eta * folded[l * a + j])
                                .collect();
                            local_rows[l] = Some(simplex_projection(&row));
                        }
                        table[s * a..(s + 1) * a]
                            .copy_from_slice(local_rows[l].as_ref().expect("just filled"));
                    }
                    table
                }
            }
        })
        .collect();
    DirectPolicy { tables }
}

fn max_table_diff<T: Scalar>(a: &DirectPolicy<T>, b: &DirectPolicy<T>) -> T {
    let mut m = T::zero();
    for (ta, tb) in a.tables.iter().zip(&b.tables) {
        for (x, y) in ta.iter().zip(tb) {
            m = m.max((*x - *y).abs());
        }
    }
    m
}

/// Simultaneous projected gradient play
/// `θ_i ← Proj_simplex(θ_i + η ∇_{θ_i} J_i(θ))` with exact gradients.
///
/// `factorization` selects the parameterization. With `None`, each agent
/// owns one action distribution per global state. With `Some`, play runs in
/// the decentralized class — one distribution per *own local state*,
/// broadcast across global states — which is the class over which the
/// structured-reward potential constructions are exact; the supplied
/// initial policy must already be decentralized.
///
/// When `phi` is supplied, each retained iterate also records the potential
/// objective; with `backtracking` the step is halved until that objective
/// does not decrease beyond `monotonicity_tol`, and with
/// `check_gradient_identity` the per-agent own-reward gradients are compared
/// against the gradients of the potential objective (their simplex-tangential
/// components coincide on a Markov potential game).
pub fn gradient_play<T: Scalar>(
    game: &TabularGame<T>,
    init: Option<&DirectPolicy<T>>,
    phi: Option<&StatePotential<T>>,
    factorization: Option<&Factorization>,
    opts: &GradientPlayOptions,
) -> Result<GradientPlayResult<T>, LearnError> {
    if opts.backtracking && phi.is_none() {
        return Err(LearnError::MissingPotential { feature: "backtracking" });
    }
    if opts.check_gradient_identity && phi.is_none() {
        return Err(LearnError::MissingPotential { feature: "gradient identity check" });
    }
    let mut pi = init.cloned().unwrap_or_else(|| DirectPolicy::uniform(game));
    if let Some(f) = factorization {
        assert_eq!(
            f.n_global(),
            game.n_states(),
            "factorization covers {} global states but the game has {}",
            f.n_global(),
            game.n_states()
        );
        for i in 0..game.n_agents() {
            let a = game.action_counts()[i];
            let mut first: Vec<Option<usize>> = vec![None; f.state_counts[i]];
            for s in 0..game.n_states() {
                let l = f.local_state(s, i);
                match first[l] {
                    None => first[l] = Some(s),
                    Some(s0) => {
                        for j in 0..a {
                            if pi.tables[i][s * a + j] != pi.tables[i][s0 * a + j] {
                                return Err(LearnError::InitNotDecentralized {
                                    agent: i,
                                    local_state: l,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    let mut trace = Vec::new();
    let phi_value = |p: &DirectPolicy<T>| -> Result<Option<T>, LearnError> {
        match phi {
            Some(f) => Ok(Some(scalar_objective(game, p, &f.values)?)),
            None => Ok(None),
        }
    };
    if opts.record_every > 0 {
        trace.push(IterationRecord {
            iter: 0,
            policy: pi.clone(),
            potential: phi_value(&pi)?,
            grad_norm: T::zero(),
            eta_used: T::zero(),
        });
    }

    let min_step = 1e-18;
    let mut max_identity_gap = opts.check_gradient_identity.then(T::zero);
    let mut grad_norm = T::infinity();
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=opts.max_iters {
        let grads = policy_gradient_all(game, &pi)?;
        if let (true, Some(f)) = (opts.check_gradient_identity, phi) {
            let mut gap = T::zero();
            for i in 0..game.n_agents() {
                let gphi = policy_gradient(game, &pi, i, &f.values)?;
                let a = game.action_counts()[i];
                gap = gap.max(match factorization {
                    None => centered_gap(&grads[i], &gphi, a),
                    Some(fa) => centered_gap(
                        &fold_local(game, fa, i, &grads[i]),
                        &fold_local(game, fa, i, &gphi),
                        a,
                    ),
                });
            }
            let slot = max_identity_gap.as_mut().expect("enabled above");
            *slot = slot.max(gap);
        }

        let phi_before = phi_value(&pi)?;
        let mut eta_k = real::<T>(opts.eta);
        let next = loop {
            let candidate = projected_step(game, factorization, &pi, &grads, eta_k);
            if !opts.backtracking {
                break candidate;
            }
            let phi_after = phi_value(&candidate)?.expect("backtracking requires phi");
            let before = phi_before.expect("backtracking requires phi");
            if phi_after >= before - real::<T>(opts.monotonicity_tol) {
                break candidate;
            }
            eta_k = eta_k * real::<T>(0.5);
            if to_f64(eta_k) < min_step {
                return Err(LearnError::BacktrackingFailed {
                    iter: k,
                    drop: to_f64(before - phi_after),
                    min_step,
                });
            }
        };

        grad_norm = max_table_diff(&next, &pi) / eta_k;
        pi = next;
        iterations = k;
        let done = to_f64(grad_norm) <= opts.grad_tol;
        if opts.record_every > 0 && (k % opts.record_every == 0 || done || k == opts.max_iters) {
            trace.push(IterationRecord {
                iter: k,
                policy: pi.clone(),
                potential: phi_value(&pi)?,
                grad_norm,
                eta_used: eta_k,
            });
        }
        if done {
            converged = true;
            break;
        }
    }

    Ok(GradientPlayResult { policy: pi, iterations, converged, trace, grad_norm, max_identity_gap })
}

/// Options for [`exploitability`].
#[derive(Debug, Clone, Copy)]
pub struct ExploitabilityOptions {
    /// Iteration cap for the best-response value iteration.
    pub max_value_iterations: usize,
    /// Sup-norm convergence threshold for value iteration.
    pub value_tol: f64,
}

impl Default for ExploitabilityOptions {
    fn default() -> Self {
        ExploitabilityOptions { max_value_iterations: 100_000, value_tol: 1e-13 }
    }
}

/// Result of [`exploitability`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExploitabilityReport<T> {
    /// Per-agent best-response gain `J_i(best response, θ_{-i}) - J_i(θ)`
    /// (can be numerically slightly negative at an equilibrium).
    pub gains: Vec<T>,
    /// `max_i max(0, gains[i])`.
    pub value: T,
    /// False iff some best-response value iteration hit the iteration cap.
    pub converged: bool,
    /// Largest final sup-norm value-iteration residual across agents.
    pub residual: T,
}

/// Best-response MDP for one agent with all other agents' policies held
/// fixed: rewards and transitions averaged over `π_{-i}`.
struct InducedMdp<T> {
    n_states: usize,
    n_actions: usize,
    /// `[s][a_i]`
    reward: Vec<T>,
    /// `[s][a_i][s']`
    transition: Vec<T>,
}

fn induced_mdp<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    agent: usize,
) -> InducedMdp<T> {
    let n = game.n_states();
    let na = game.n_joint_actions();
    let a_i = game.action_counts()[agent];
    let mut reward = vec![T::zero(); n * a_i];
    let mut transition = vec![T::zero(); n * a_i * n];
    for s in 0..n {
        for a in 0..na {
            let w = pi.joint_prob_excluding(game, s, a, agent);
            if w == T::zero() {
                continue;
            }
            let ai = game.agent_action(a, agent);
            reward[s * a_i + ai] = reward[s * a_i + ai] + w * game.reward(agent, s, a);
            let row = game.transition_row(s, a);
            let base = (s * a_i + ai) * n;
            for sp in 0..n {
                transition[base + sp] = transition[base + sp] + w * row[sp];
            }
        }
    }
    InducedMdp { n_states: n, n_actions: a_i, reward, transition }
}

/// Runs value iteration on the induced MDP; returns the greedy policy
/// (ties resolved toward the smallest action index), whether the sup-norm
/// residual reached `tol`, and the final residual.
fn best_response_value_iteration<T: Scalar>(
    mdp: &InducedMdp<T>,
    gamma: T,
    opts: &ExploitabilityOptions,
) -> (Vec<usize>, bool, T) {
    let n = mdp.n_states;
    let mut v = vec![T::zero(); n];
    let tol = real::<T>(opts.value_tol);
    let mut residual = T::infinity();
    let mut converged = false;
    for _ in 0..opts.max_value_iterations {
        let mut next = vec![T::zero(); n];
        for s in 0..n {
            let mut best = T::neg_infinity();
            for a in 0..mdp.n_actions {
                let base = (s * mdp.n_actions + a) * n;
                let mut cont = T::zero();
                for sp in 0..n {
                    cont = cont + mdp.transition[base + sp] * v[sp];
                }
                best = best.max(mdp.reward[s * mdp.n_actions + a] + gamma * cont);
            }
            next[s] = best;
        }
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        v = next;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let mut greedy = vec![0usize; n];
    for s in 0..n {
        let mut best = T::neg_infinity();
        for a in 0..mdp.n_actions {
            let base = (s * mdp.n_actions + a) * n;
            let mut cont = T::zero();
            for sp in 0..n {
                cont = cont + mdp.transition[base + sp] * v[sp];
            }
            let q = mdp.reward[s * mdp.n_actions + a] + gamma * cont;
            if q > best {
                best = q;
                greedy[s] = a;
            }
        }
    }
    (greedy, converged, residual)
}

/// Distance of a policy profile from Nash equilibrium:
/// `max_i [ max_{θ_i'} J_i(θ_i', θ_{-i}) - J_i(θ) ]`, floored at zero.
///
/// Each best response is computed by value iteration on the induced
/// single-agent MDP (others' policies fixed); the greedy policy extracted
/// from the converged values is then evaluated *exactly* by a linear solve,
/// so the reported gain carries no value-iteration truncation error. If an
/// iteration cap is hit the report says so and carries the residual.
pub fn exploitability<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    opts: &ExploitabilityOptions,
) -> Result<ExploitabilityReport<T>, LearnError> {
    let mut gains = Vec::with_capacity(game.n_agents());
    let mut converged = true;
    let mut worst_residual = T::zero();
    for i in 0..game.n_agents() {
        let current = total_reward(game, pi, i)?;
        let mdp = induced_mdp(game, pi, i);
        let (greedy, ok, residual) = best_response_value_iteration(&mdp, game.gamma(), opts);
        converged &= ok;
        worst_residual = worst_residual.max(residual);
        let mut responded = pi.clone();
        let a_i = game.action_counts()[i];
        let mut table = vec![T::zero(); game.n_states() * a_i];
        for (s, &a) in greedy.iter().enumerate() {
            table[s * a_i + a] = T::one();
        }
        responded.tables[i] = table;
        let best = total_reward(game, &responded, i)?;
        gains.push(best - current);
    }
    let value = gains.iter().fold(T::zero(), |m, g| m.max(*g));
    Ok(ExploitabilityReport { gains, value, converged, residual: worst_residual })
}

/// All joint deterministic policies of the game, in lexicographic order of
/// `(agent, state) -> action` choices. The count is
/// `prod_i A_i^{n_states}` — use only on small games.
pub fn enumerate_deterministic_policies<T: Scalar>(game: &TabularGame<T>) -> Vec<DirectPolicy<T>> {
    let n_states = game.n_states();
    let mut slots: Vec<usize> = Vec::new(); // action count per (agent, state) slot
    for &a in game.action_counts() {
        slots.extend(std::iter::repeat(a).take(n_states));
    }
    let mut current = vec![0usize; slots.len()];
    let mut out = Vec::new();
    loop {
        let choices: Vec<Vec<usize>> = (0..game.n_agents())
            .map(|i| current[i * n_states..(i + 1) * n_states].to_vec())
            .collect();
        out.push(DirectPolicy::deterministic(game, &choices));
        // odometer increment
        let mut pos = slots.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < slots[pos] {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// Exhaustively maximizes the scalar objective of `reward_table` over all
/// joint deterministic policies; returns the best policy and its value.
pub fn best_deterministic_policy<T: Scalar>(
    game: &TabularGame<T>,
    reward_table: &[T],
) -> Result<(DirectPolicy<T>, T), LearnError> {
    let mut best: Option<(DirectPolicy<T>, T)> = None;
    for pi in enumerate_deterministic_policies(game) {
        let value = scalar_objective(game, &pi, reward_table)?;
        if best.as_ref().map_or(true, |(_, b)| value > *b) {
            best = Some((pi, value));
        }
    }
    best.ok_or(LearnError::EmptyEnumeration)
}

// Re-export used by the induced-MDP exactness test below.
#[cfg(test)]
use super::value::visitation_measure;

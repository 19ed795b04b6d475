//! Exact policy evaluation for tabular games: value functions by direct
//! linear solve, discounted visitation measures, averaged Q-tables, and the
//! exact policy gradient for directly parameterized policies.

use super::{DirectPolicy, TabularGame};
use crate::linalg::{self, Matrix};
use crate::scalar::{real, to_f64, Scalar};

/// Errors from the exact evaluation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("linear solve failed: {0}")]
    Solve(#[from] linalg::LinalgError),
    #[error("linear solve residual {residual} exceeds the exactness contract {tol}")]
    ResidualTooLarge { residual: f64, tol: f64 },
}

/// Residual ceiling for the direct solves, scaled to the scalar's precision.
fn residual_tol<T: Scalar>(scale: T) -> T {
    (real::<T>(1e-10) + T::epsilon() * real::<T>(1e3)) * scale.max(T::one())
}

/// State transition matrix under a joint policy: `P_π[s][s'] = Σ_a π(a|s) P(s'|s,a)`.
pub fn transition_under_policy<T: Scalar>(game: &TabularGame<T>, pi: &DirectPolicy<T>) -> Matrix<T> {
    let n = game.n_states();
    let mut m = Matrix::zeros(n, n);
    for s in 0..n {
        for a in 0..game.n_joint_actions() {
            let w = pi.joint_prob(game, s, a);
            if w == T::zero() {
                continue;
            }
            let row = game.transition_row(s, a);
            for sp in 0..n {
                *m.at_mut(s, sp) = m.at(s, sp) + w * row[sp];
            }
        }
    }
    m
}

/// Expected one-step value of an arbitrary `[s][a_joint]` table under a policy.
fn table_under_policy<T: Scalar>(game: &TabularGame<T>, pi: &DirectPolicy<T>, table: &[T]) -> Vec<T> {
    let n = game.n_states();
    let na = game.n_joint_actions();
    (0..n)
        .map(|s| (0..na).map(|a| pi.joint_prob(game, s, a) * table[s * na + a]).sum())
        .collect()
}

/// Value function of an arbitrary reward table under a joint policy, by the
/// direct linear solve `(I - γ P_π) V = r^π`. The residual is checked against
/// the exactness contract.
pub fn value_function<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    reward_table: &[T],
) -> Result<Vec<T>, ValueError> {
    let n = game.n_states();
    let p_pi = transition_under_policy(game, pi);
    let r_pi = table_under_policy(game, pi, reward_table);
    let mut a = Matrix::identity(n);
    for s in 0..n {
        for sp in 0..n {
            *a.at_mut(s, sp) = a.at(s, sp) - game.gamma() * p_pi.at(s, sp);
        }
    }
    let v = linalg::solve(a.clone(), r_pi.clone())?;
    let scale = r_pi.iter().map(|r| r.abs()).fold(T::zero(), T::max);
    let res = linalg::residual_inf(&a, &v, &r_pi);
    let tol = residual_tol::<T>(scale);
    if res > tol {
        return Err(ValueError::ResidualTooLarge { residual: to_f64(res), tol: to_f64(tol) });
    }
    Ok(v)
}

/// Per-agent value functions `V_i(s)` under a joint policy.
pub fn exact_value_functions<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
) -> Result<Vec<Vec<T>>, ValueError> {
    (0..game.n_agents()).map(|i| value_function(game, pi, game.reward_table(i))).collect()
}

/// Scalar objective `ρᵀ V` for an arbitrary reward table.
pub fn scalar_objective<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    reward_table: &[T],
) -> Result<T, ValueError> {
    let v = value_function(game, pi, reward_table)?;
    Ok(v.iter().zip(game.rho()).map(|(vi, p)| *vi * *p).sum())
}

/// Total discounted reward of one agent: `J_i = Σ_s ρ(s) V_i(s)`.
pub fn total_reward<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    agent: usize,
) -> Result<T, ValueError> {
    scalar_objective(game, pi, game.reward_table(agent))
}

/// Discounted state visitation measure
/// `d_θ = (1-γ) ρᵀ (I - γ P_π)^{-1}`, computed by solving the transposed
/// system; sums to 1.
pub fn visitation_measure<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
) -> Result<Vec<T>, ValueError> {
    let n = game.n_states();
    let p_pi = transition_under_policy(game, pi);
    // (I - γ P_π)ᵀ d = (1-γ) ρ
    let mut a = Matrix::identity(n);
    for s in 0..n {
        for sp in 0..n {
            *a.at_mut(s, sp) = a.at(s, sp) - game.gamma() * p_pi.at(sp, s);
        }
    }
    let b: Vec<T> = game.rho().iter().map(|p| (T::one() - game.gamma()) * *p).collect();
    let d = linalg::solve(a.clone(), b.clone())?;
    let res = linalg::residual_inf(&a, &d, &b);
    let tol = residual_tol::<T>(T::one());
    if res > tol {
        return Err(ValueError::ResidualTooLarge { residual: to_f64(res), tol: to_f64(tol) });
    }
    Ok(d)
}

/// State-action visitation `μ_θ(s, a) = d_θ(s) π_θ(a|s)`, row-major `[s][a]`.
pub fn state_action_visitation<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
) -> Result<Vec<T>, ValueError> {
    let d = visitation_measure(game, pi)?;
    let na = game.n_joint_actions();
    let mut mu = vec![T::zero(); game.n_states() * na];
    for s in 0..game.n_states() {
        for a in 0..na {
            mu[s * na + a] = d[s] * pi.joint_prob(game, s, a);
        }
    }
    Ok(mu)
}

/// Q-table of an arbitrary reward for agent `agent`, averaged over the other
/// agents' policies:
/// `Q̄(s, a_i) = Σ_{a_{-i}} π_{-i}(a_{-i}|s) [ r(s,a) + γ Σ_{s'} P(s'|s,a) V(s') ]`.
/// Row-major `[s][a_i]`.
pub fn averaged_q<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    agent: usize,
    reward_table: &[T],
    values: &[T],
) -> Vec<T> {
    let n = game.n_states();
    let na = game.n_joint_actions();
    let ai_count = game.action_counts()[agent];
    let mut q = vec![T::zero(); n * ai_count];
    for s in 0..n {
        for a in 0..na {
            let w = pi.joint_prob_excluding(game, s, a, agent);
            if w == T::zero() {
                continue;
            }
            let row = game.transition_row(s, a);
            let mut cont = T::zero();
            for sp in 0..n {
                cont = cont + row[sp] * values[sp];
            }
            let val = reward_table[s * na + a] + game.gamma() * cont;
            let ai = game.agent_action(a, agent);
            q[s * ai_count + ai] = q[s * ai_count + ai] + w * val;
        }
    }
    q
}

/// Exact gradient of the scalar objective for `reward_table` with respect to
/// agent `agent`'s policy table: `∂J/∂θ_i(s, a_i) = d_θ(s)/(1-γ) · Q̄(s, a_i)`.
/// Row-major `[s][a_i]`.
pub fn policy_gradient<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
    agent: usize,
    reward_table: &[T],
) -> Result<Vec<T>, ValueError> {
    let v = value_function(game, pi, reward_table)?;
    let d = visitation_measure(game, pi)?;
    let q = averaged_q(game, pi, agent, reward_table, &v);
    let ai_count = game.action_counts()[agent];
    let scale = (T::one() - game.gamma()).recip();
    let mut g = vec![T::zero(); game.n_states() * ai_count];
    for s in 0..game.n_states() {
        for a in 0..ai_count {
            g[s * ai_count + a] = d[s] * scale * q[s * ai_count + a];
        }
    }
    Ok(g)
}

/// Per-agent gradients of each agent's own total reward.
pub fn policy_gradient_all<T: Scalar>(
    game: &TabularGame<T>,
    pi: &DirectPolicy<T>,
) -> Result<Vec<Vec<T>>, ValueError> {
    (0..game.n_agents())
        .map(|i| policy_gradient(game, pi, i, game.reward_table(i)))
        .collect()
}

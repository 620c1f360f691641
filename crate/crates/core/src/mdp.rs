//! One-player specialization: pure stationary policy evaluation by direct
//! linear solve, Blackwell-optimal policy search by enumeration over a
//! discount grid, values under general stage-weight evaluations, and the
//! leavable-case excessive-majorant fixpoint.

use crate::game::{StochasticGame, ValueVector, ABSORBING_TOL, MIXED_ACTION_TOL};
use crate::linalg::solve_dense;
use crate::num::{Real, Scalar};
use rayon::prelude::*;
use thiserror::Error;

/// Hard cap on enumerable pure policies.
pub const MAX_POLICIES: u128 = 1_000_000;
/// Accepted tail mass beyond the truncation horizon.
pub const TAIL_TOL: f64 = 1e-9;
/// Accepted residual of the policy-evaluation linear solve.
pub const EVAL_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("state {state}: player 2 action set is not a singleton")]
    NotOnePlayer { state: usize },
    #[error("policy evaluation failed: {0}")]
    Eval(String),
    #[error("{count} pure policies exceed the enumeration cap {MAX_POLICIES}")]
    PolicyOverflow { count: u128 },
    #[error("policy has illegal action {action} at state {state}")]
    BadPolicy { state: usize, action: usize },
    #[error("evaluation tail mass {mass} beyond horizon exceeds {TAIL_TOL:e}")]
    TailMass { mass: String },
    #[error("state {state} has no stay-put action; problem is not leavable")]
    NotLeavable { state: usize },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("invalid evaluation: {0}")]
    BadEvaluation(String),
}

/// A one-player problem: a stochastic game whose player-2 action sets are
/// all singletons. Deterministic transition problems are encoded as
/// degenerate (Dirac-row) kernels.
#[derive(Debug, Clone)]
pub struct MDProblem<T> {
    game: StochasticGame<T>,
}

impl<T: Scalar> MDProblem<T> {
    pub fn from_game(game: StochasticGame<T>) -> Result<Self, MdpError> {
        for k in 0..game.num_states() {
            if game.actions2_len(k) != 1 {
                return Err(MdpError::NotOnePlayer { state: k });
            }
        }
        Ok(Self { game })
    }

    /// Builds a deterministic problem from per-state successor lists and
    /// action-independent state rewards; one action per listed successor.
    pub fn from_deterministic(rewards: &[T], successors: &[Vec<usize>]) -> Result<Self, MdpError> {
        let n = rewards.len();
        if successors.len() != n {
            return Err(MdpError::BadArgument(
                "rewards and successor lists disagree on the state count".into(),
            ));
        }
        let states = (0..n).map(|k| format!("z{k}")).collect();
        let actions1 = successors
            .iter()
            .map(|succ| succ.iter().map(|&t| format!("to_z{t}")).collect())
            .collect();
        let actions2 = (0..n).map(|_| vec!["·".to_string()]).collect();
        let payoff = (0..n)
            .map(|k| {
                successors[k]
                    .iter()
                    .map(|_| vec![rewards[k].clone()])
                    .collect()
            })
            .collect();
        let transition = (0..n)
            .map(|k| {
                successors[k]
                    .iter()
                    .map(|&t| {
                        let mut row = vec![T::zero(); n];
                        row[t] = T::one();
                        vec![row]
                    })
                    .collect()
            })
            .collect();
        let game = StochasticGame::new(states, actions1, actions2, payoff, transition)
            .map_err(|e| MdpError::BadArgument(e.to_string()))?;
        Self::from_game(game)
    }

    pub fn game(&self) -> &StochasticGame<T> {
        &self.game
    }

    pub fn num_states(&self) -> usize {
        self.game.num_states()
    }

    pub fn num_actions(&self, k: usize) -> usize {
        self.game.actions1_len(k)
    }

    pub fn reward(&self, k: usize, a: usize) -> T {
        self.game.payoff(k, a, 0)
    }

    pub fn transition(&self, k: usize, a: usize) -> &[T] {
        self.game.transition_row(k, a, 0)
    }
}

/// A pure stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurePolicy {
    pub choices: Vec<usize>,
}

impl PurePolicy {
    pub fn validate<T: Scalar>(&self, mdp: &MDProblem<T>) -> Result<(), MdpError> {
        if self.choices.len() != mdp.num_states() {
            return Err(MdpError::BadArgument(
                "policy length does not match state count".into(),
            ));
        }
        for (state, &action) in self.choices.iter().enumerate() {
            if action >= mdp.num_actions(state) {
                return Err(MdpError::BadPolicy { state, action });
            }
        }
        Ok(())
    }
}

/// Expected discounted reward of a pure stationary policy, solved exactly
/// as the linear system `(I - (1-lambda) A) v = lambda alpha`. The
/// residual is recomputed and must vanish (up to `EVAL_RESIDUAL_TOL`
/// times the reward scale; exactly for exact scalars).
pub fn evaluate_policy<T: Scalar>(
    mdp: &MDProblem<T>,
    policy: &PurePolicy,
    lambda: T,
) -> Result<ValueVector<T>, MdpError> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(MdpError::BadArgument("discount outside (0, 1]".into()));
    }
    policy.validate(mdp)?;
    let n = mdp.num_states();
    let one_minus = T::one() - lambda.clone();
    let mut system = vec![vec![T::zero(); n]; n];
    let mut rhs = vec![T::zero(); n];
    for k in 0..n {
        let a = policy.choices[k];
        system[k][k] = T::one();
        for (dest, p) in mdp.transition(k, a).iter().enumerate() {
            let flow = one_minus.clone() * p.clone();
            system[k][dest] = system[k][dest].clone() - flow;
        }
        rhs[k] = lambda.clone() * mdp.reward(k, a);
    }
    let v = solve_dense(system.clone(), rhs.clone()).map_err(|e| MdpError::Eval(e.to_string()))?;

    let mut scale = T::one();
    for r in &rhs {
        scale = scale.max_s(r.abs());
    }
    for k in 0..n {
        let mut acc = T::zero();
        for (dest, c) in system[k].iter().enumerate() {
            acc = acc + c.clone() * v[dest].clone();
        }
        let resid = (acc - rhs[k].clone()).abs();
        if resid > T::of(EVAL_RESIDUAL_TOL) * scale.clone() {
            return Err(MdpError::Eval(format!(
                "residual {resid:?} at state {k} exceeds tolerance"
            )));
        }
    }
    Ok(v)
}

/// Result of the grid-based Blackwell search.
#[derive(Debug, Clone)]
pub struct BlackwellResult<T> {
    pub policy: PurePolicy,
    /// Largest grid discount below which the returned policy is
    /// coordinate-wise maximal at every smaller grid point.
    pub lambda0_estimate: T,
    pub certificate: Vec<CertificateRow<T>>,
}

/// Per-grid-point winner record.
#[derive(Debug, Clone)]
pub struct CertificateRow<T> {
    pub lambda: T,
    pub winner: PurePolicy,
    pub values: ValueVector<T>,
}

fn policy_from_index<T: Scalar>(mdp: &MDProblem<T>, mut index: usize) -> PurePolicy {
    let choices = (0..mdp.num_states())
        .map(|k| {
            let m = mdp.num_actions(k);
            let c = index % m;
            index /= m;
            c
        })
        .collect();
    PurePolicy { choices }
}

/// Enumerates every pure stationary policy, evaluates each at every grid
/// discount, and returns a policy that is coordinate-wise maximal at the
/// smallest grid point, with the largest grid prefix of smaller points at
/// which it stays maximal.
pub fn blackwell_policy<T: Real + Send + Sync>(
    mdp: &MDProblem<T>,
    lambda_grid: &[T],
) -> Result<BlackwellResult<T>, MdpError> {
    if lambda_grid.is_empty() {
        return Err(MdpError::BadArgument("empty discount grid".into()));
    }
    for w in lambda_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(MdpError::BadArgument("grid must be decreasing".into()));
        }
    }
    let mut count: u128 = 1;
    for k in 0..mdp.num_states() {
        count = count.saturating_mul(mdp.num_actions(k) as u128);
        if count > MAX_POLICIES {
            return Err(MdpError::PolicyOverflow { count });
        }
    }
    let count = count as usize;

    // values[p][g] = value vector of policy p at grid point g.
    let values: Vec<Vec<ValueVector<T>>> = (0..count)
        .into_par_iter()
        .map(|p| {
            let policy = policy_from_index(mdp, p);
            lambda_grid
                .iter()
                .map(|&l| evaluate_policy(mdp, &policy, l))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = mdp.num_states();
    let (lo, hi) = mdp.game().payoff_bounds();
    let cert_tol = T::of(1e-9) * T::one().max_s(hi - lo);

    // Per grid point: the coordinate-wise max vector and the policy
    // closest to it (ties to the lowest index).
    let mut upper = vec![vec![T::neg_infinity(); n]; lambda_grid.len()];
    for per_policy in &values {
        for (g, v) in per_policy.iter().enumerate() {
            for k in 0..n {
                upper[g][k] = upper[g][k].max_s(v[k]);
            }
        }
    }
    let winner_at = |g: usize| -> usize {
        let mut best = 0;
        let mut best_slack = T::neg_infinity();
        for (p, per_policy) in values.iter().enumerate() {
            let slack = (0..n).fold(T::infinity(), |acc, k| {
                acc.min_s(per_policy[g][k] - upper[g][k])
            });
            if slack > best_slack {
                best_slack = slack;
                best = p;
            }
        }
        best
    };

    let last = lambda_grid.len() - 1;
    let chosen = winner_at(last);
    let maximal_at = |p: usize, g: usize| -> bool {
        (0..n).all(|k| values[p][g][k] >= upper[g][k] - cert_tol)
    };
    let mut lambda0 = lambda_grid[last];
    for g in (0..=last).rev() {
        if maximal_at(chosen, g) {
            lambda0 = lambda_grid[g];
        } else {
            break;
        }
    }

    let certificate = (0..lambda_grid.len())
        .map(|g| {
            let w = winner_at(g);
            CertificateRow {
                lambda: lambda_grid[g],
                winner: policy_from_index(mdp, w),
                values: values[w][g].clone(),
            }
        })
        .collect();

    Ok(BlackwellResult {
        policy: policy_from_index(mdp, chosen),
        lambda0_estimate: lambda0,
        certificate,
    })
}

/// A probability weighting over stages: finitely supported weights or a
/// geometric (discounted) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation<T> {
    FiniteSupport(Vec<T>),
    Geometric(T),
}

impl<T: Scalar> Evaluation<T> {
    pub fn finite(weights: Vec<T>) -> Result<Self, MdpError> {
        if weights.is_empty() {
            return Err(MdpError::BadEvaluation("empty support".into()));
        }
        let mut sum = T::zero();
        for w in &weights {
            if !w.is_finite_s() || *w < T::zero() {
                return Err(MdpError::BadEvaluation("negative weight".into()));
            }
            sum = sum + w.clone();
        }
        if (sum - T::one()).abs() > T::of(MIXED_ACTION_TOL) {
            return Err(MdpError::BadEvaluation("weights do not sum to 1".into()));
        }
        Ok(Self::FiniteSupport(weights))
    }

    pub fn geometric(lambda: T) -> Result<Self, MdpError> {
        if !(lambda > T::zero() && lambda <= T::one()) {
            return Err(MdpError::BadEvaluation("discount outside (0, 1]".into()));
        }
        Ok(Self::Geometric(lambda))
    }

    /// Uniform weights on stages 1..=n.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        let w = T::one() / T::of_usize(n);
        Self::FiniteSupport(vec![w; n])
    }

    /// Point mass on stage t (1-indexed).
    pub fn dirac(t: usize) -> Self {
        assert!(t >= 1);
        let mut w = vec![T::zero(); t];
        w[t - 1] = T::one();
        Self::FiniteSupport(w)
    }

    /// Weight of stage t (1-indexed).
    pub fn weight(&self, t: usize) -> T {
        match self {
            Self::FiniteSupport(w) => w.get(t - 1).cloned().unwrap_or_else(T::zero),
            Self::Geometric(l) => {
                let mut acc = l.clone();
                let q = T::one() - l.clone();
                for _ in 1..t {
                    acc = acc * q.clone();
                }
                acc
            }
        }
    }

    /// Mass beyond the first `horizon` stages.
    pub fn tail_mass(&self, horizon: usize) -> T {
        match self {
            Self::FiniteSupport(w) => w
                .iter()
                .skip(horizon)
                .fold(T::zero(), |a, x| a + x.clone()),
            Self::Geometric(l) => {
                let q = T::one() - l.clone();
                let mut acc = T::one();
                for _ in 0..horizon {
                    acc = acc * q.clone();
                }
                acc
            }
        }
    }

    /// Total variation: sum over stages of `|theta_{t+1} - theta_t|`,
    /// with the convention that weights vanish beyond the support.
    /// Closed forms: `1/n` for uniform on n stages, `lambda` (the first
    /// weight) for geometric.
    pub fn total_variation(&self) -> T {
        match self {
            Self::FiniteSupport(w) => {
                let mut tv = T::zero();
                for pair in w.windows(2) {
                    tv = tv + (pair[1].clone() - pair[0].clone()).abs();
                }
                tv + w.last().cloned().unwrap_or_else(T::zero)
            }
            Self::Geometric(l) => l.clone(),
        }
    }
}

fn effective_horizon<T: Scalar>(
    theta: &Evaluation<T>,
    truncation: usize,
) -> Result<usize, MdpError> {
    let horizon = match theta {
        Evaluation::FiniteSupport(w) => truncation.min(w.len()),
        Evaluation::Geometric(_) => truncation,
    };
    let tail = theta.tail_mass(horizon);
    if tail > T::of(TAIL_TOL) {
        return Err(MdpError::TailMass {
            mass: format!("{tail:?}"),
        });
    }
    Ok(horizon)
}

/// Backward induction over explicit per-stage weights; `weights[t]` is
/// the weight of stage t+1. Exact up to the dropped tail.
fn weighted_dp<T: Scalar>(mdp: &MDProblem<T>, weights: &[T]) -> ValueVector<T> {
    let n = mdp.num_states();
    let mut future = vec![T::zero(); n];
    for w in weights.iter().rev() {
        let mut now = Vec::with_capacity(n);
        for k in 0..n {
            let mut best: Option<T> = None;
            for a in 0..mdp.num_actions(k) {
                let mut val = w.clone() * mdp.reward(k, a);
                for (dest, p) in mdp.transition(k, a).iter().enumerate() {
                    if !p.is_zero() {
                        val = val + p.clone() * future[dest].clone();
                    }
                }
                best = Some(match best {
                    Some(b) => b.max_s(val),
                    None => val,
                });
            }
            now.push(best.expect("nonempty action set"));
        }
        future = now;
    }
    future
}

/// The theta-value: optimal expected weighted reward under evaluation
/// `theta`, computed by exact backward induction over the truncated
/// horizon. The truncation error is at most tail mass times the largest
/// absolute reward.
pub fn theta_value<T: Scalar>(
    mdp: &MDProblem<T>,
    theta: &Evaluation<T>,
    truncation: usize,
) -> Result<ValueVector<T>, MdpError> {
    let horizon = effective_horizon(theta, truncation)?;
    let weights: Vec<T> = (1..=horizon).map(|t| theta.weight(t)).collect();
    Ok(weighted_dp(mdp, &weights))
}

/// Value under the shifted evaluation: the first `m` stages carry no
/// weight but are still traversed.
pub fn shifted_value<T: Scalar>(
    mdp: &MDProblem<T>,
    theta: &Evaluation<T>,
    m: usize,
    truncation: usize,
) -> Result<ValueVector<T>, MdpError> {
    let horizon = effective_horizon(theta, truncation)?;
    let mut weights = vec![T::zero(); m];
    weights.extend((1..=horizon).map(|t| theta.weight(t)));
    Ok(weighted_dp(mdp, &weights))
}

/// Upper approximation of the patient value: min over the supplied
/// evaluation family of max over shifts `m <= m_max` of the shifted
/// value. Both the family and the shift range truncate the defining
/// infimum/supremum, so this is an approximation from above of the
/// truncated object.
pub fn v_star_upper<T: Scalar>(
    mdp: &MDProblem<T>,
    family: &[Evaluation<T>],
    m_max: usize,
    truncation: usize,
) -> Result<ValueVector<T>, MdpError> {
    if family.is_empty() {
        return Err(MdpError::BadArgument("empty evaluation family".into()));
    }
    let n = mdp.num_states();
    let mut result: Option<ValueVector<T>> = None;
    for theta in family {
        let mut sup: Option<ValueVector<T>> = None;
        for m in 0..=m_max {
            let v = shifted_value(mdp, theta, m, truncation)?;
            sup = Some(match sup {
                None => v,
                Some(s) => (0..n).map(|k| s[k].clone().max_s(v[k].clone())).collect(),
            });
        }
        let sup = sup.expect("m_max >= 0");
        result = Some(match result {
            None => sup,
            Some(r) => (0..n).map(|k| r[k].clone().min_s(sup[k].clone())).collect(),
        });
    }
    Ok(result.expect("nonempty family"))
}

/// Smallest excessive majorant of the reward for leavable problems
/// (every state has a stay-put action): the monotone fixpoint of
/// `w(z) <- max(r(z), max over one-step successors w(z'))`, which
/// converges within one sweep per state. Rewards are read as
/// `max_a r(z, a)` (action-independent in the intended encoding).
pub fn leavable_v_star<T: Scalar>(mdp: &MDProblem<T>) -> Result<ValueVector<T>, MdpError> {
    let n = mdp.num_states();
    let tol = T::of(ABSORBING_TOL);
    for k in 0..n {
        let leavable = (0..mdp.num_actions(k))
            .any(|a| (mdp.transition(k, a)[k].clone() - T::one()).abs() <= tol);
        if !leavable {
            return Err(MdpError::NotLeavable { state: k });
        }
    }
    let reward: Vec<T> = (0..n)
        .map(|k| {
            (0..mdp.num_actions(k))
                .map(|a| mdp.reward(k, a))
                .fold(None::<T>, |acc, r| {
                    Some(match acc {
                        Some(b) => b.max_s(r),
                        None => r,
                    })
                })
                .expect("nonempty action set")
        })
        .collect();
    let successors: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            (0..n)
                .filter(|&dest| {
                    (0..mdp.num_actions(k)).any(|a| mdp.transition(k, a)[dest] > T::zero())
                })
                .collect()
        })
        .collect();

    let mut w = reward.clone();
    for _sweep in 0..=n {
        let mut changed = false;
        let prev = w.clone();
        for k in 0..n {
            let mut best = reward[k].clone();
            for &dest in &successors[k] {
                best = best.max_s(prev[dest].clone());
            }
            if best != w[k] {
                changed = true;
            }
            w[k] = best;
        }
        if !changed {
            return Ok(w);
        }
    }
    Err(MdpError::Eval(
        "excessive-majorant fixpoint did not settle within |Z| sweeps".into(),
    ))
}

//! The one-shot operator of a stochastic game, n-stage and discounted
//! values with optimal strategies, and limit-value diagnostics.
//!
//! For a continuation vector `v`, the operator maps each state to the
//! matrix-game value of `g(k,i,j) + sum_k' q(k'|k,i,j) v(k')`. It is
//! non-expansive in the sup-norm; the discounted variant
//! `lambda g + (1-lambda) q.v` is a (1-lambda)-contraction whose fixed
//! point is the discounted value vector.

use crate::game::{MarkovStrategy, MixedAction, StationaryStrategy, StochasticGame, ValueVector};
use crate::linalg::solve_dense;
use crate::matgame::{self, MatGameError, MatrixGame};
use crate::num::{sup_dist, sup_norm, Real, Scalar};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    MatGame(#[from] MatGameError),
    #[error("no convergence within {iterations} iterations (achieved residual {residual})")]
    NoConvergence { iterations: usize, residual: String },
    #[error("bad argument: {0}")]
    BadArgument(String),
}

/// Iteration cap for the discounted fixed point.
pub const MAX_FIXED_POINT_ITERATIONS: usize = 10_000_000;

/// Verification tolerance handed to the inner matrix-game solver.
const LP_TOL: f64 = 1e-10;

/// A solved discounted game.
#[derive(Debug, Clone)]
pub struct DiscountedSolution<T> {
    pub lambda: T,
    /// Fixed point of the discounted operator, one entry per state.
    pub value: ValueVector<T>,
    /// Player 1 optimal stationary strategy at the converged values.
    pub x: StationaryStrategy<T>,
    /// Player 2 optimal stationary strategy.
    pub y: StationaryStrategy<T>,
    /// Independently recomputed `||v - Phi_lambda(v)||`.
    pub residual: T,
    pub iterations: usize,
    /// Successive sup-norm changes of the iteration, for diagnostics.
    pub sup_changes: Vec<T>,
}

/// Values and Markov optimal strategies of the n-stage games.
#[derive(Debug, Clone)]
pub struct NStageSolution<T> {
    pub n: usize,
    /// `values[m]` is the m-stage value vector, `values[0] = 0`.
    pub values: Vec<ValueVector<T>>,
    /// Stage-indexed optimal strategies for the n-stage game (entry `t-1`
    /// is played at stage `t`).
    pub strategies1: MarkovStrategy<T>,
    pub strategies2: MarkovStrategy<T>,
}

impl<T: Real> NStageSolution<T> {
    /// The n-stage value vector itself.
    pub fn final_values(&self) -> &ValueVector<T> {
        &self.values[self.n]
    }
}

fn stage_matrix<T: Real>(
    game: &StochasticGame<T>,
    k: usize,
    w_payoff: T,
    w_cont: T,
    v: &[T],
) -> Result<MatrixGame<T>, MatGameError> {
    let m1 = game.actions1_len(k);
    let m2 = game.actions2_len(k);
    let mut entries = vec![vec![T::zero(); m2]; m1];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let q = game.transition_row(k, i, j);
            let mut cont = T::zero();
            for (dest, p) in q.iter().enumerate() {
                if *p != T::zero() {
                    cont = cont + *p * v[dest];
                }
            }
            *e = w_payoff * game.payoff(k, i, j) + w_cont * cont;
        }
    }
    MatrixGame::new(entries)
}

fn check_dimension<T: Real>(game: &StochasticGame<T>, v: &[T]) -> Result<(), SolveError> {
    if v.len() != game.num_states() {
        return Err(SolveError::BadArgument(format!(
            "value vector has dimension {}, game has {} states",
            v.len(),
            game.num_states()
        )));
    }
    Ok(())
}

/// Applies the operator: returns the vector of matrix-game values of
/// `g + q.v`, one per state.
pub fn apply_operator<T: Real>(
    game: &StochasticGame<T>,
    v: &ValueVector<T>,
) -> Result<ValueVector<T>, SolveError> {
    check_dimension(game, v)?;
    let tol = T::of(LP_TOL);
    (0..game.num_states())
        .map(|k| {
            let m = stage_matrix(game, k, T::one(), T::one(), v)?;
            Ok(matgame::solve(&m, tol)?.value)
        })
        .collect()
}

/// One application of the discounted operator
/// `lambda g + (1-lambda) q.v`, with the per-state optimal mixed actions.
#[allow(clippy::type_complexity)]
fn apply_discounted_with_strategies<T: Real>(
    game: &StochasticGame<T>,
    lambda: T,
    v: &[T],
) -> Result<(ValueVector<T>, Vec<MixedAction<T>>, Vec<MixedAction<T>>), SolveError> {
    let tol = T::of(LP_TOL);
    let one_minus = T::one() - lambda;
    let mut out = Vec::with_capacity(v.len());
    let mut xs = Vec::with_capacity(v.len());
    let mut ys = Vec::with_capacity(v.len());
    for k in 0..game.num_states() {
        let m = stage_matrix(game, k, lambda, one_minus, v)?;
        let sol = matgame::solve(&m, tol)?;
        out.push(sol.value);
        xs.push(sol.row_strategy);
        ys.push(sol.col_strategy);
    }
    Ok((out, xs, ys))
}

/// Discounted value of an absorbing state: the matrix-game value of its
/// stage payoffs (the discounted weights sum to one and the state never
/// changes).
fn absorbing_value<T: Real>(game: &StochasticGame<T>, k: usize) -> Result<T, SolveError> {
    let m = MatrixGame::new(game.payoff_matrix(k).clone())?;
    Ok(matgame::solve(&m, T::of(LP_TOL))?.value)
}

/// Solves the discounted game by fixed-point iteration from `v0`,
/// stopping when the successive sup-norm change is at most
/// `tol * lambda / (1 - lambda)`, which bounds the true error by `tol`.
///
/// Absorbing states are solved exactly up front and pinned; the remaining
/// coordinates still contract with modulus `1 - lambda`. If the requested
/// threshold is below floating-point resolution the iteration stops at
/// the best attainable change; `residual` always reports an independent
/// recomputation of `||v - Phi_lambda(v)||`.
pub fn discounted_value_from<T: Real>(
    game: &StochasticGame<T>,
    lambda: T,
    tol: T,
    v0: &ValueVector<T>,
) -> Result<DiscountedSolution<T>, SolveError> {
    discounted_value_bounded(game, lambda, tol, v0, None)
}

/// Like [`discounted_value_from`], but the caller additionally asserts
/// `||v0 - v_lambda|| <= err0`. The a-priori contraction bound then caps
/// the iteration count at `ln(err0/tol) / -ln(1-lambda)` (zero when the
/// start is already within tolerance), which is what makes warm-started
/// oracles affordable at small discounts where the successive-change
/// criterion alone would grind.
pub fn discounted_value_bounded<T: Real>(
    game: &StochasticGame<T>,
    lambda: T,
    tol: T,
    v0: &ValueVector<T>,
    err0: Option<T>,
) -> Result<DiscountedSolution<T>, SolveError> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(SolveError::BadArgument(format!(
            "discount factor {lambda} outside (0, 1]"
        )));
    }
    if !(tol > T::zero()) {
        return Err(SolveError::BadArgument("tol must be positive".into()));
    }
    check_dimension(game, v0)?;

    let n = game.num_states();
    let mut v = v0.clone();
    for k in 0..n {
        if game.is_absorbing(k) {
            v[k] = absorbing_value(game, k)?;
        }
    }

    let threshold = if lambda < T::one() {
        tol * lambda / (T::one() - lambda)
    } else {
        T::infinity()
    };
    let one_minus = T::one() - lambda;
    let lp_tol = T::of(LP_TOL);

    // Iterations after which the a-priori bound err0 (1-lambda)^m <= tol
    // holds, when a starting-error bound was supplied.
    let sufficient = err0.map(|e0| {
        if e0 <= tol {
            0usize
        } else if lambda == T::one() {
            1
        } else {
            ((e0 / tol).ln() / -(T::one() - lambda).ln())
                .ceil()
                .to_f64()
                .map(|m| m.max(0.0) as usize)
                .unwrap_or(usize::MAX)
        }
    });

    let mut sup_changes = Vec::new();
    let mut iterations = 0;
    let mut next = v.clone();
    // Stall detection: per-sweep matrix-game solves carry rounding noise
    // somewhat above machine epsilon, so changes can plateau there when
    // the requested threshold is finer than attainable.
    let mut best_change = T::infinity();
    let mut since_best = 0usize;
    // When sufficient == Some(0) the start already meets the tolerance
    // and only the final operator application below is needed.
    while sufficient != Some(iterations) {
        iterations += 1;
        // Jacobi sweep: the whole update reads the previous iterate.
        let mut change = T::zero();
        for k in 0..n {
            if game.is_absorbing(k) {
                continue;
            }
            let m = stage_matrix(game, k, lambda, one_minus, &v)?;
            let new = matgame::solve(&m, lp_tol)?.value;
            change = change.max_s((new - v[k]).abs());
            next[k] = new;
        }
        std::mem::swap(&mut v, &mut next);
        sup_changes.push(change);

        let noise = T::epsilon() * (T::one() + sup_norm(&v));
        if change <= threshold.max_s(T::of(4.0) * noise) {
            break;
        }
        if change < best_change {
            best_change = change;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 64 && change <= T::of(256.0) * noise {
                break;
            }
        }
        if iterations >= MAX_FIXED_POINT_ITERATIONS {
            let (check, _, _) = apply_discounted_with_strategies(game, lambda, &v)?;
            let residual = sup_dist(&v, &check);
            return Err(SolveError::NoConvergence {
                iterations,
                residual: format!("{residual}"),
            });
        }
    }

    let (check, xs, ys) = apply_discounted_with_strategies(game, lambda, &v)?;
    let residual = sup_dist(&v, &check);
    Ok(DiscountedSolution {
        lambda,
        value: v,
        x: StationaryStrategy::new(xs),
        y: StationaryStrategy::new(ys),
        residual,
        iterations,
        sup_changes,
    })
}

/// Solves the discounted game from the zero vector.
pub fn discounted_value<T: Real>(
    game: &StochasticGame<T>,
    lambda: T,
    tol: T,
) -> Result<DiscountedSolution<T>, SolveError> {
    let v0 = vec![T::zero(); game.num_states()];
    discounted_value_from(game, lambda, tol, &v0)
}

/// Values `v_0..v_n` of the n-stage games together with the Markov
/// optimal strategies of the n-stage game (`n v_n` is the n-fold operator
/// applied to zero).
pub fn n_stage_values<T: Real>(
    game: &StochasticGame<T>,
    n: usize,
) -> Result<NStageSolution<T>, SolveError> {
    if n == 0 {
        return Err(SolveError::BadArgument("horizon must be at least 1".into()));
    }
    let states = game.num_states();
    let lp_tol = T::of(LP_TOL);
    let mut w = vec![T::zero(); states];
    let mut values = Vec::with_capacity(n + 1);
    values.push(w.clone());
    // per_application[m] holds the optima of the matrix games taken while
    // computing w_{m+1} from w_m; in the n-stage game they are played at
    // stage n - m.
    let mut per_application1 = Vec::with_capacity(n);
    let mut per_application2 = Vec::with_capacity(n);
    for m in 1..=n {
        let mut next = Vec::with_capacity(states);
        let mut xs = Vec::with_capacity(states);
        let mut ys = Vec::with_capacity(states);
        for k in 0..states {
            let mat = stage_matrix(game, k, T::one(), T::one(), &w)?;
            let sol = matgame::solve(&mat, lp_tol)?;
            next.push(sol.value);
            xs.push(sol.row_strategy);
            ys.push(sol.col_strategy);
        }
        per_application1.push(StationaryStrategy::new(xs));
        per_application2.push(StationaryStrategy::new(ys));
        w = next;
        let inv = T::one() / T::of_usize(m);
        values.push(w.iter().map(|&x| x * inv).collect());
    }
    per_application1.reverse();
    per_application2.reverse();
    Ok(NStageSolution {
        n,
        values,
        strategies1: MarkovStrategy {
            stages: per_application1,
        },
        strategies2: MarkovStrategy {
            stages: per_application2,
        },
    })
}

/// Discounted values across a list of discount factors. Each entry is
/// solved independently (from zero), so the output does not depend on
/// execution order; entries are computed in parallel.
pub fn lambda_sweep<T: Real + Send + Sync>(
    game: &StochasticGame<T>,
    lambdas: &[T],
    tol: T,
) -> Result<Vec<(T, ValueVector<T>)>, SolveError>
where
    SolveError: Send,
{
    lambdas
        .par_iter()
        .map(|&l| Ok((l, discounted_value(game, l, tol)?.value)))
        .collect()
}

/// Evidence for the common limit of `v_n` and `v_lambda`: their average
/// at a large horizon and small discount, plus the sup-distance.
#[derive(Debug, Clone)]
pub struct LimitEstimate<T> {
    pub estimate: ValueVector<T>,
    pub discrepancy: T,
}

pub fn estimate_limit<T: Real>(
    game: &StochasticGame<T>,
    n_big: usize,
    lambda_small: T,
    tol: T,
) -> Result<LimitEstimate<T>, SolveError> {
    let n_sol = n_stage_values(game, n_big)?;
    let v_n = n_sol.final_values();
    let v_l = discounted_value(game, lambda_small, tol)?.value;
    let half = T::of(0.5);
    let estimate = v_n
        .iter()
        .zip(&v_l)
        .map(|(&a, &b)| (a + b) * half)
        .collect();
    Ok(LimitEstimate {
        estimate,
        discrepancy: sup_dist(v_n, &v_l),
    })
}

/// Leading fractional-power correction of `v_lambda(state)` near zero.
#[derive(Debug, Clone)]
pub struct PuiseuxFit<T> {
    /// Extrapolated limit value at the state.
    pub limit: T,
    /// Fitted leading term `coefficient * lambda^exponent`; `None` when
    /// the discounted values are constant on the grid ("no correction
    /// term").
    pub correction: Option<PuiseuxCorrection<T>>,
}

#[derive(Debug, Clone)]
pub struct PuiseuxCorrection<T> {
    pub exponent: T,
    pub coefficient: T,
}

/// Two-point extrapolation of the limit under an assumed exponent.
fn richardson<T: Real>(la: T, va: T, lb: T, vb: T, theta: T) -> T {
    let pa = la.powf(theta);
    let pb = lb.powf(theta);
    (vb * pa - va * pb) / (pa - pb)
}

/// Least-squares slope and intercept of y against x.
fn line_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = T::of_usize(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Estimates the limit `v_0` and the leading exponent of
/// `v_lambda(state) - v_0` by extrapolation and a log-log fit over a
/// decreasing geometric grid in (0, 0.1] with at least 4 points.
///
/// The limit is first extrapolated with an assumed exponent 1/2 from the
/// two smallest grid points, then refined once with the fitted slope.
pub fn fit_puiseux<T: Real + Send + Sync>(
    game: &StochasticGame<T>,
    state: usize,
    lambda_grid: &[T],
) -> Result<PuiseuxFit<T>, SolveError> {
    if state >= game.num_states() {
        return Err(SolveError::BadArgument(format!("no state {state}")));
    }
    if lambda_grid.len() < 4 {
        return Err(SolveError::BadArgument(
            "grid needs at least 4 points".into(),
        ));
    }
    for w in lambda_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(SolveError::BadArgument("grid must be decreasing".into()));
        }
    }
    if !(*lambda_grid.first().unwrap() <= T::of(0.1))
        || !(*lambda_grid.last().unwrap() > T::zero())
    {
        return Err(SolveError::BadArgument("grid must lie in (0, 0.1]".into()));
    }

    let (lo, hi) = game.payoff_bounds();
    let span = (hi - lo).max_s(T::one());
    let solve_tol = T::of(1e-11) * span;
    let solutions: Vec<DiscountedSolution<T>> = lambda_grid
        .par_iter()
        .map(|&l| discounted_value(game, l, solve_tol))
        .collect::<Result<_, _>>()?;
    let vals: Vec<T> = solutions.iter().map(|s| s.value[state]).collect();
    // Achieved per-point accuracy from the recomputed residuals (the
    // requested tolerance may sit below floating-point resolution).
    let err_bound = solutions
        .iter()
        .fold(T::zero(), |acc, s| acc.max_s(s.residual / s.lambda));

    let spread = vals
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min_s(v), hi.max_s(v))
        });
    let degenerate = T::of(20.0) * err_bound + T::of(1e-12) * span;
    if spread.1 - spread.0 <= degenerate {
        return Ok(PuiseuxFit {
            limit: *vals.last().unwrap(),
            correction: None,
        });
    }

    let m = lambda_grid.len();
    let (la, va) = (lambda_grid[m - 2], vals[m - 2]);
    let (lb, vb) = (lambda_grid[m - 1], vals[m - 1]);
    let mut limit = richardson(la, va, lb, vb, T::of(0.5));
    let floor = (T::of(20.0) * err_bound).max_s(T::of(1e-12) * span);
    let mut exponent = T::of(0.5);
    let mut coefficient = T::zero();
    for _ in 0..2 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (&l, &v) in lambda_grid.iter().zip(&vals) {
            let gap = (v - limit).abs();
            if gap > floor {
                xs.push(l.ln());
                ys.push(gap.ln());
            }
        }
        if xs.len() < 2 {
            return Ok(PuiseuxFit {
                limit,
                correction: None,
            });
        }
        let (slope, intercept) = line_fit(&xs, &ys);
        exponent = slope.max_s(T::of(0.05)).min_s(T::of(4.0));
        coefficient = intercept.exp();
        limit = richardson(la, va, lb, vb, exponent);
    }
    Ok(PuiseuxFit {
        limit,
        correction: Some(PuiseuxCorrection {
            exponent,
            coefficient,
        }),
    })
}

/// Expected discounted payoff when both players fix stationary strategies:
/// the induced Markov reward process is solved exactly as a linear system.
pub fn evaluate_strategy_pair<T: Scalar>(
    game: &StochasticGame<T>,
    x: &StationaryStrategy<T>,
    y: &StationaryStrategy<T>,
    lambda: T,
) -> Result<ValueVector<T>, SolveError> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(SolveError::BadArgument("discount outside (0, 1]".into()));
    }
    if !x.matches_game(game, 1) || !y.matches_game(game, 2) {
        return Err(SolveError::BadArgument(
            "strategy shape does not match game".into(),
        ));
    }
    let n = game.num_states();
    let mut reward = vec![T::zero(); n];
    let mut system = vec![vec![T::zero(); n]; n];
    let one_minus = T::one() - lambda.clone();
    for k in 0..n {
        system[k][k] = T::one();
        for (i, wi) in x.action(k).weights().iter().enumerate() {
            for (j, wj) in y.action(k).weights().iter().enumerate() {
                let mass = wi.clone() * wj.clone();
                if mass.is_zero() {
                    continue;
                }
                reward[k] = reward[k].clone() + mass.clone() * game.payoff(k, i, j);
                for (dest, p) in game.transition_row(k, i, j).iter().enumerate() {
                    let flow = one_minus.clone() * mass.clone() * p.clone();
                    system[k][dest] = system[k][dest].clone() - flow;
                }
            }
        }
        reward[k] = reward[k].clone() * lambda.clone();
    }
    solve_dense(system, reward)
        .map_err(|e| SolveError::BadArgument(format!("strategy evaluation: {e}")))
}

//! The 4-state compact-action game whose discounted values oscillate and
//! have no limit as the discount vanishes.
//!
//! Player 1 picks `alpha` from the quarter-power set `{2^-2n}` in the
//! zero-payoff state; player 2 picks `beta` anywhere in `[0, 1/2]` in the
//! one-payoff state. Player 2's inner minimization is a 1-D convex
//! quadratic solved in closed form (never discretized: a grid would blur
//! the oscillation bounds). Its minimizer is `c = sqrt(lambda/(1-lambda))`
//! regardless of `alpha`, which reduces the coupled value equations, for
//! each candidate `alpha`, to
//!
//! ```text
//! x = K / (1 + K),   K = 2 c (1-lambda) alpha / ((1+2c)(lambda + (1-lambda) alpha^2)),
//! y = (x + 2c) / (1 + 2c),
//! ```
//!
//! and the game value maximizes `x` over the truncated grid. The naive
//! fixed-point iteration on `(x, y)` contracts only at rate `1 - lambda`
//! (the symmetric mode leaks mass at order `lambda`), so it is hopeless
//! at the sweep depths; the closed form is exact and the iteration is
//! still run from it as a stability polish and residual check.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathologyError {
    #[error("discount {lambda} outside the supported regime (0, 1/5]")]
    OutOfRegime { lambda: f64 },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("no convergence within {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("maximizer {alpha:e} is not a grid neighbor of the unconstrained peak {peak:e}")]
    UnimodalityViolated { alpha: f64, peak: f64 },
    #[error("converged values violate 0 < x < y < 1: x={x}, y={y}")]
    OrderViolated { x: f64, y: f64 },
}

/// Iteration cap for the cold-start reference iteration.
pub const MAX_ITERATIONS: usize = 50_000_000;

/// A converged solve at one discount factor.
#[derive(Debug, Clone)]
pub struct PathologySolution {
    pub lambda: f64,
    /// Value at the zero-payoff state.
    pub x: f64,
    /// Value at the one-payoff state.
    pub y: f64,
    /// Player 1 maximizer within the truncated action set.
    pub alpha: f64,
    /// Player 2 minimizer in [0, 1/2].
    pub beta: f64,
    /// Whether the quadratic's own minimizer lies in [0, 1/2] (the clip
    /// is inactive; at the regime boundary lambda = 1/5 it sits exactly
    /// on 1/2).
    pub beta_interior: bool,
    /// Residuals of the two value equations at the returned point.
    pub eq6_residual: f64,
    pub eq7_residual: f64,
    pub iterations: usize,
    /// Largest observed late-stage ratio of successive changes (0 when
    /// the polish converges immediately).
    pub contraction_ratio: f64,
    /// Tolerance the solve was asked for (successive change <= tol * lambda).
    pub tol: f64,
    pub n_max: usize,
}

fn alpha_grid(n_max: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(n_max);
    let mut a = 0.25f64;
    for _ in 0..n_max {
        grid.push(a);
        a *= 0.25;
    }
    grid
}

/// Player 2's closed-form minimizer of `beta (x - y) + beta^2 (1 - y)`
/// over [0, 1/2].
fn best_beta(x: f64, y: f64) -> f64 {
    let unconstrained = (y - x) / (2.0 * (1.0 - y));
    unconstrained.clamp(0.0, 0.5)
}

struct IterationOutcome {
    x: f64,
    y: f64,
    iterations: usize,
    contraction_ratio: f64,
}

/// The reference fixed-point iteration on `(x, y)` from a given start,
/// stopping when the joint sup-change is at most `max(tol*lambda, floor)`
/// with a floating-point floor. Contracts at rate `1 - Theta(lambda)`,
/// so cold starts are only feasible at moderate discounts.
fn iterate_from(
    lambda: f64,
    grid: &[f64],
    tol: f64,
    mut x: f64,
    mut y: f64,
) -> Result<IterationOutcome, PathologyError> {
    let squares: Vec<f64> = grid.iter().map(|a| a * a).collect();
    let one_minus = 1.0 - lambda;
    let threshold = (tol * lambda).max(16.0 * f64::EPSILON);
    let mut iterations = 0usize;
    let mut prev_change = f64::INFINITY;
    let mut contraction_ratio = 0.0f64;
    loop {
        iterations += 1;
        let mut best = f64::NEG_INFINITY;
        for (a, a2) in grid.iter().zip(&squares) {
            let h = x + a * (y - x) - a2 * x;
            if h > best {
                best = h;
            }
        }
        let x_next = one_minus * best;
        let beta = best_beta(x, y);
        let inner = beta * (x - y) + beta * beta * (1.0 - y);
        let y_next = lambda + one_minus * (y + inner);

        let change = (x_next - x).abs().max((y_next - y).abs());
        x = x_next;
        y = y_next;
        if change <= threshold {
            break;
        }
        // Decay diagnostic, measured away from the transient and from
        // the floating-point plateau.
        if iterations > 64 && prev_change.is_finite() && change > 1e-12 {
            contraction_ratio = contraction_ratio.max(change / prev_change);
        }
        prev_change = change;
        if iterations >= MAX_ITERATIONS {
            return Err(PathologyError::NoConvergence { iterations, change });
        }
    }
    Ok(IterationOutcome {
        x,
        y,
        iterations,
        contraction_ratio,
    })
}

fn closed_form(lambda: f64, grid: &[f64]) -> (f64, f64, f64) {
    let c = (lambda / (1.0 - lambda)).sqrt();
    let mut best_x = f64::NEG_INFINITY;
    let mut best_alpha = grid[0];
    for &a in grid {
        let k = 2.0 * c * (1.0 - lambda) * a
            / ((1.0 + 2.0 * c) * (lambda + (1.0 - lambda) * a * a));
        let x = k / (1.0 + k);
        if x > best_x {
            best_x = x;
            best_alpha = a;
        }
    }
    let y = (best_x + 2.0 * c) / (1.0 + 2.0 * c);
    (best_x, y, best_alpha)
}

fn finish(
    lambda: f64,
    grid: &[f64],
    outcome: IterationOutcome,
    tol: f64,
    n_max: usize,
) -> Result<PathologySolution, PathologyError> {
    let one_minus = 1.0 - lambda;
    let (x, y) = (outcome.x, outcome.y);
    if !(0.0 < x && x < y && y < 1.0) {
        return Err(PathologyError::OrderViolated { x, y });
    }

    let mut alpha = grid[0];
    let mut best = f64::NEG_INFINITY;
    for &a in grid {
        let h = a * (y - x) - a * a * x;
        if h > best {
            best = h;
            alpha = a;
        }
    }
    let beta = best_beta(x, y);
    let unconstrained = (y - x) / (2.0 * (1.0 - y));
    let beta_interior = unconstrained <= 0.5 + 1e-12;
    let eq6_residual = (lambda * x - one_minus * best).abs();
    let inner = beta * (x - y) + beta * beta * (1.0 - y);
    let eq7_residual = (lambda * y - lambda - one_minus * inner).abs();

    // The alpha-objective rises then falls; the maximizer must be one of
    // the grid neighbors of the unconstrained peak. Grid values are
    // exact powers of two, so equality is the right test.
    let peak = (y - x) / (2.0 * x);
    let lower = grid
        .iter()
        .copied()
        .filter(|a| *a <= peak)
        .fold(f64::NAN, f64::max);
    let upper = grid
        .iter()
        .copied()
        .filter(|a| *a >= peak)
        .fold(f64::NAN, f64::min);
    if alpha != lower && alpha != upper {
        return Err(PathologyError::UnimodalityViolated { alpha, peak });
    }

    Ok(PathologySolution {
        lambda,
        x,
        y,
        alpha,
        beta,
        beta_interior,
        eq6_residual,
        eq7_residual,
        iterations: outcome.iterations,
        contraction_ratio: outcome.contraction_ratio,
        tol,
        n_max,
    })
}

fn check_args(lambda: f64, n_max: usize, tol: f64) -> Result<usize, PathologyError> {
    if !(lambda > 0.0 && lambda <= 0.2) {
        return Err(PathologyError::OutOfRegime { lambda });
    }
    if n_max < 8 {
        return Err(PathologyError::BadArgument("n_max must be at least 8".into()));
    }
    if !(tol > 0.0) {
        return Err(PathologyError::BadArgument("tol must be positive".into()));
    }
    Ok(n_max.max(12))
}

/// Solves the coupled value equations at one discount factor: closed
/// form over the candidate grid, then the reference iteration from that
/// point as a stability polish, with independently recomputed residuals.
pub fn solve_lambda(
    lambda: f64,
    n_max: usize,
    tol: f64,
) -> Result<PathologySolution, PathologyError> {
    let n_max = check_args(lambda, n_max, tol)?;
    let grid = alpha_grid(n_max);
    let (x0, y0, _) = closed_form(lambda, &grid);
    let outcome = iterate_from(lambda, &grid, tol, x0, y0)?;
    finish(lambda, &grid, outcome, tol, n_max)
}

/// The same solve by cold-start fixed-point iteration from (0.4, 0.5).
/// Only feasible at moderate discounts; exposed for contraction
/// diagnostics and as an independent route to the fixed point.
pub fn solve_lambda_iterated(
    lambda: f64,
    n_max: usize,
    tol: f64,
) -> Result<PathologySolution, PathologyError> {
    let n_max = check_args(lambda, n_max, tol)?;
    let grid = alpha_grid(n_max);
    let outcome = iterate_from(lambda, &grid, tol, 0.4, 0.5)?;
    finish(lambda, &grid, outcome, tol, n_max)
}

/// Relation checks on a converged solution.
#[derive(Debug, Clone)]
pub struct RelationReport {
    /// `4 lambda (1-y)^2 = (1-lambda)(y-x)^2` residual (interior minimizer).
    pub balance_residual: f64,
    pub balance_ok: bool,
    /// `beta / sqrt(lambda)`, checked in [0.8, 1.25] for lambda <= 2^-10.
    pub beta_ratio: f64,
    pub beta_ratio_checked: bool,
    pub beta_ratio_ok: bool,
    /// `(y-x) / (2 sqrt(lambda) (1-y))`, checked within 10 sqrt(lambda) of 1.
    pub gap_ratio: f64,
    pub gap_ratio_ok: bool,
    pub beta_interior: bool,
}

impl RelationReport {
    pub fn all_ok(&self) -> bool {
        self.balance_ok && (!self.beta_ratio_checked || self.beta_ratio_ok) && self.gap_ratio_ok
    }
}

/// Checks the balance identity and the square-root asymptotics of a
/// converged solution.
pub fn verify_relations(sol: &PathologySolution) -> RelationReport {
    let l = sol.lambda;
    let sqrt_l = l.sqrt();
    let balance_residual = (4.0 * l * (1.0 - sol.y) * (1.0 - sol.y)
        - (1.0 - l) * (sol.y - sol.x) * (sol.y - sol.x))
        .abs();
    let balance_ok = !sol.beta_interior || balance_residual <= 10.0 * sol.tol;

    let beta_ratio = sol.beta / sqrt_l;
    let beta_ratio_checked = l <= 2f64.powi(-10);
    let beta_ratio_ok = (0.8..=1.25).contains(&beta_ratio);

    let gap_ratio = (sol.y - sol.x) / (2.0 * sqrt_l * (1.0 - sol.y));
    let gap_ratio_ok = (gap_ratio - 1.0).abs() <= 10.0 * sqrt_l;

    RelationReport {
        balance_residual,
        balance_ok,
        beta_ratio,
        beta_ratio_checked,
        beta_ratio_ok,
        gap_ratio,
        gap_ratio_ok,
        beta_interior: sol.beta_interior,
    }
}

/// Which subsequence of discounts to sweep: ones whose square root is a
/// point of the action set, or ones whose square root sits centered in a
/// gap of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// `sqrt(lambda_n) = 2^-2n` is in the action set: values approach 1/2.
    Even,
    /// `sqrt(lambda_n) = 2^-(2n+1)` is bracketed away from the action
    /// set by a factor of 2 on both sides: values fall toward 4/9.
    Odd,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub lambda: f64,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Discount of the n-th sweep point.
pub fn sweep_lambda(kind: SweepKind, n: usize) -> f64 {
    match kind {
        SweepKind::Even => 2f64.powi(-(4 * n as i32)),
        SweepKind::Odd => 2f64.powi(-(4 * n as i32 + 2)),
    }
}

/// Solves the subsequence `n_from..=n_to`; points solve concurrently.
/// For odd points the defining gap condition (no action-set point in
/// the open interval `(sqrt(lambda)/2, 2 sqrt(lambda))`) is asserted
/// arithmetically against the truncated grid.
pub fn sequence_sweep(
    kind: SweepKind,
    n_from: usize,
    n_to: usize,
    n_max: usize,
    tol: f64,
) -> Result<Vec<SweepRow>, PathologyError> {
    if n_from == 0 || n_to < n_from {
        return Err(PathologyError::BadArgument("need 1 <= n_from <= n_to".into()));
    }
    let n_max = n_max.max(12);
    let min_lambda = sweep_lambda(kind, n_to);
    if 0.25f64.powi(n_max as i32) >= min_lambda {
        return Err(PathologyError::BadArgument(format!(
            "n_max {n_max} leaves grid points above the smallest sweep discount; need 2^-2n_max < {min_lambda:e}"
        )));
    }
    if kind == SweepKind::Odd {
        let grid = alpha_grid(n_max);
        for n in n_from..=n_to {
            let sqrt_l = sweep_lambda(kind, n).sqrt();
            let (lo, hi) = (0.5 * sqrt_l, 2.0 * sqrt_l);
            if grid.iter().any(|a| lo < *a && *a < hi) {
                return Err(PathologyError::BadArgument(format!(
                    "gap condition fails at n={n}: action set intersects ({lo:e}, {hi:e})"
                )));
            }
        }
    }
    (n_from..=n_to)
        .into_par_iter()
        .map(|n| {
            let lambda = sweep_lambda(kind, n);
            let sol = solve_lambda(lambda, n_max, tol)?;
            Ok(SweepRow {
                n,
                lambda,
                x: sol.x,
                y: sol.y,
                alpha: sol.alpha,
                beta: sol.beta,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_and_argument_checks() {
        assert!(solve_lambda(0.3, 12, 1e-9).is_err());
        assert!(solve_lambda(0.0, 12, 1e-9).is_err());
        assert!(solve_lambda(0.1, 4, 1e-9).is_err());
        assert!(solve_lambda(0.1, 12, 0.0).is_err());
    }

    #[test]
    fn boundary_discount_minimizer_touches_one_half() {
        let sol = solve_lambda(0.2, 12, 1e-10).unwrap();
        assert!(sol.beta_interior, "clip should be inactive at 1/5");
        assert!((sol.beta - 0.5).abs() < 1e-9, "beta {}", sol.beta);
        assert!(sol.x > 0.0 && sol.x < sol.y && sol.y < 1.0);
    }

    #[test]
    fn closed_form_agrees_with_cold_iteration() {
        for lambda in [0.2, 0.05, 2f64.powi(-8)] {
            let tol = 1e-10;
            let direct = solve_lambda(lambda, 12, tol).unwrap();
            let iterated = solve_lambda_iterated(lambda, 12, tol).unwrap();
            assert!(
                (direct.x - iterated.x).abs() <= 20.0 * tol,
                "lambda {lambda}: x {} vs {}",
                direct.x,
                iterated.x
            );
            assert!((direct.y - iterated.y).abs() <= 20.0 * tol);
            assert_eq!(direct.alpha, iterated.alpha);
        }
    }

    #[test]
    fn balance_identity_at_interior_minimizer() {
        for lambda in [0.2, 0.05, 2f64.powi(-8), 2f64.powi(-12), 2f64.powi(-30)] {
            let sol = solve_lambda(lambda, 16, 1e-10).unwrap();
            assert!(sol.beta_interior);
            let report = verify_relations(&sol);
            assert!(
                report.balance_residual <= 10.0 * sol.tol,
                "lambda {lambda}: residual {:e}",
                report.balance_residual
            );
        }
    }

    #[test]
    fn deep_solution_satisfies_asymptotics() {
        let sol = solve_lambda(2f64.powi(-12), 14, 1e-9).unwrap();
        let report = verify_relations(&sol);
        assert!(report.all_ok(), "{report:?}");
        assert!(report.beta_ratio_checked);
    }

    #[test]
    fn matched_discount_close_to_half() {
        // sqrt(lambda) = 2^-4 is in the action set.
        let sol = solve_lambda(2f64.powi(-8), 12, 1e-10).unwrap();
        assert!((sol.x - 0.5).abs() < 0.06, "x {}", sol.x);
        assert!((sol.y - 0.5).abs() < 0.06, "y {}", sol.y);
    }

    #[test]
    fn truncation_insensitivity() {
        for lambda in [0.05, 2f64.powi(-10)] {
            let tol = 1e-9;
            let a = solve_lambda(lambda, 12, tol).unwrap();
            let b = solve_lambda(lambda, 16, tol).unwrap();
            assert!((a.x - b.x).abs() <= tol * 10.0);
            assert!((a.y - b.y).abs() <= tol * 10.0);
        }
    }

    #[test]
    fn cold_iteration_decays_geometrically() {
        for lambda in [0.1, 2f64.powi(-8)] {
            let sol = solve_lambda_iterated(lambda, 12, 1e-10).unwrap();
            assert!(
                sol.contraction_ratio <= 1.0 - lambda / 2.0,
                "lambda {lambda}: ratio {}",
                sol.contraction_ratio
            );
        }
    }

    #[test]
    fn even_sweep_approaches_one_half() {
        let rows = sequence_sweep(SweepKind::Even, 3, 8, 18, 1e-8).unwrap();
        let mut last_delta = f64::INFINITY;
        for row in &rows {
            let delta = (row.y - 0.5).abs().max((row.x - 0.5).abs());
            assert!(delta < 0.06, "n={}: x={} y={}", row.n, row.x, row.y);
            assert!(delta <= last_delta + 1e-9, "n={} not improving", row.n);
            last_delta = delta;
        }
    }

    #[test]
    fn odd_sweep_falls_to_four_ninths() {
        let rows = sequence_sweep(SweepKind::Odd, 3, 8, 18, 1e-8).unwrap();
        for row in &rows {
            assert!(
                row.y <= 4.0 / 9.0 + 0.02,
                "n={}: y={} above 4/9 + 0.02",
                row.n,
                row.y
            );
        }
    }

    #[test]
    fn even_odd_gap_certifies_oscillation() {
        let even = sequence_sweep(SweepKind::Even, 8, 8, 18, 1e-8).unwrap();
        let odd = sequence_sweep(SweepKind::Odd, 8, 8, 18, 1e-8).unwrap();
        let gap = even[0].y - odd[0].y;
        assert!(gap >= 0.04, "gap {gap}");
    }

    #[test]
    fn sweep_preconditions() {
        assert!(sequence_sweep(SweepKind::Even, 0, 3, 18, 1e-6).is_err());
        assert!(sequence_sweep(SweepKind::Even, 3, 2, 18, 1e-6).is_err());
        // Grid not deep enough for the smallest discount.
        assert!(sequence_sweep(SweepKind::Even, 3, 8, 12, 1e-6).is_err());
    }

    #[test]
    fn container_game_discretization_agrees_loosely() {
        // The bundled 4-state game discretizes player 2's interval; at a
        // discount whose optimal beta is close to a grid point the two
        // routes must agree to the discretization error.
        let lambda = 2f64.powi(-8);
        let sol = solve_lambda(lambda, 12, 1e-10).unwrap();
        let game = crate::game::builtins::pathology::<f64>(12);
        let fixed = crate::shapley::discounted_value(&game, lambda, 1e-9).unwrap();
        assert!(
            (fixed.value[0] - sol.x).abs() < 1e-4,
            "container {} vs closed form {}",
            fixed.value[0],
            sol.x
        );
        assert!((fixed.value[1] - sol.y).abs() < 1e-4);
    }
}

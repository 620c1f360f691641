//! Exact value and optimal mixed strategies of finite zero-sum matrix
//! games, solved as a small dense linear program.
//!
//! The row player maximizes. After shifting entries positive, the column
//! player's program `max 1'w  s.t.  A'w <= 1, w >= 0` starts from the
//! all-slack basis and is solved by tableau simplex with Bland's rule;
//! the row player's strategy is read off the dual. Matrices here are tiny
//! (one per state per operator application), so determinism and
//! portability matter more than pivoting sophistication.

use crate::game::MixedAction;
use crate::num::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatGameError {
    #[error("matrix game must be nonempty and rectangular with finite entries")]
    BadMatrix,
    #[error("strategy dimension {got} does not match matrix ({want})")]
    DimensionMismatch { got: usize, want: usize },
    #[error("linear program failed: {0}")]
    Numerical(String),
}

/// An m x n real matrix; the row player maximizes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame<T> {
    entries: Vec<Vec<T>>,
}

impl<T: Real> MatrixGame<T> {
    pub fn new(entries: Vec<Vec<T>>) -> Result<Self, MatGameError> {
        if entries.is_empty() || entries[0].is_empty() {
            return Err(MatGameError::BadMatrix);
        }
        let n = entries[0].len();
        for row in &entries {
            if row.len() != n || row.iter().any(|e| !e.is_finite()) {
                return Err(MatGameError::BadMatrix);
            }
        }
        Ok(Self { entries })
    }

    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries[0].len()
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.entries[i][j]
    }

    pub fn entries(&self) -> &[Vec<T>] {
        &self.entries
    }
}

/// Value and optimal mixed strategies of a matrix game.
#[derive(Debug, Clone)]
pub struct MatGameSolution<T> {
    pub value: T,
    pub row_strategy: MixedAction<T>,
    pub col_strategy: MixedAction<T>,
}

/// Default verification tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Solves the matrix game: returns the value and a pair of optimal mixed
/// strategies. The row strategy guarantees `>= value - tol` against every
/// column and the column strategy `<= value + tol` against every row;
/// both are verified before returning.
pub fn solve<T: Real>(game: &MatrixGame<T>, tol: T) -> Result<MatGameSolution<T>, MatGameError> {
    if tol <= T::zero() {
        return Err(MatGameError::Numerical("tol must be positive".into()));
    }
    let (m, n) = (game.rows(), game.cols());

    let mut lo = game.entry(0, 0);
    let mut hi = lo;
    for row in game.entries() {
        for &e in row {
            lo = lo.min_s(e);
            hi = hi.max_s(e);
        }
    }
    // Shift so every entry is at least 1: the value is then >= 1 and the
    // reciprocal objective is well conditioned.
    let shift = T::one() - lo;
    let scale = T::one().max_s(hi - lo + T::one());
    let eps = scale * (T::epsilon() * T::of(128.0)).max_s(T::of(1e-13));

    // Tableau: m constraint rows, columns = n strategy vars + m slacks + rhs.
    let width = n + m + 1;
    let mut tab = vec![T::zero(); (m + 1) * width];
    let idx = |r: usize, c: usize| r * width + c;
    for i in 0..m {
        for j in 0..n {
            tab[idx(i, j)] = game.entry(i, j) + shift;
        }
        tab[idx(i, n + i)] = T::one();
        tab[idx(i, n + m)] = T::one();
    }
    // Objective row holds z_j - c_j; maximizing sum of w_j.
    for j in 0..n {
        tab[idx(m, j)] = -T::one();
    }

    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_pivots = 50 * (m + n) + 200;
    for _ in 0..max_pivots {
        // Bland's rule: lowest-index improving column.
        let Some(e) = (0..n + m).find(|&j| tab[idx(m, j)] < -eps) else {
            return extract(game, tab, basis, m, n, shift, tol, eps);
        };
        // Ratio test, ties to the lowest row index.
        let mut pivot_row: Option<usize> = None;
        let mut best = T::infinity();
        for i in 0..m {
            let a = tab[idx(i, e)];
            if a > eps {
                let ratio = tab[idx(i, n + m)] / a;
                if ratio < best {
                    best = ratio;
                    pivot_row = Some(i);
                }
            }
        }
        let Some(r) = pivot_row else {
            return Err(MatGameError::Numerical("unbounded program".into()));
        };
        let p = tab[idx(r, e)];
        for c in 0..width {
            tab[idx(r, c)] = tab[idx(r, c)] / p;
        }
        for row in 0..=m {
            if row == r {
                continue;
            }
            let f = tab[idx(row, e)];
            if f != T::zero() {
                for c in 0..width {
                    let delta = f * tab[idx(r, c)];
                    tab[idx(row, c)] = tab[idx(row, c)] - delta;
                }
            }
        }
        basis[r] = e;
    }
    Err(MatGameError::Numerical(format!(
        "simplex did not terminate within {max_pivots} pivots"
    )))
}

#[allow(clippy::too_many_arguments)]
fn extract<T: Real>(
    game: &MatrixGame<T>,
    tab: Vec<T>,
    basis: Vec<usize>,
    m: usize,
    n: usize,
    shift: T,
    tol: T,
    eps: T,
) -> Result<MatGameSolution<T>, MatGameError> {
    let width = n + m + 1;
    let idx = |r: usize, c: usize| r * width + c;

    let mut w = vec![T::zero(); n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            w[b] = tab[idx(r, n + m)].max_s(T::zero());
        }
    }
    let w_sum: T = w.iter().fold(T::zero(), |a, &x| a + x);
    if !(w_sum > eps) {
        return Err(MatGameError::Numerical("degenerate optimum".into()));
    }
    let value = T::one() / w_sum - shift;

    let y: Vec<T> = w.iter().map(|&x| x / w_sum).collect();
    // Dual values are the reduced costs of the slack columns.
    let mut u: Vec<T> = (0..m).map(|i| tab[idx(m, n + i)].max_s(T::zero())).collect();
    let u_sum: T = u.iter().fold(T::zero(), |a, &x| a + x);
    if !(u_sum > eps) {
        return Err(MatGameError::Numerical("degenerate dual optimum".into()));
    }
    for ui in &mut u {
        *ui = *ui / u_sum;
    }

    let row_strategy =
        MixedAction::new(u).map_err(|e| MatGameError::Numerical(e.to_string()))?;
    let col_strategy =
        MixedAction::new(y).map_err(|e| MatGameError::Numerical(e.to_string()))?;

    // Never return silently approximated solutions: verify both guarantees.
    let (row_guarantee, _) = best_response_value(game, &row_strategy)?;
    let col_exposure = best_response_row(game, &col_strategy)?.0;
    if row_guarantee < value - tol || col_exposure > value + tol {
        return Err(MatGameError::Numerical(format!(
            "guarantee verification failed: value {value}, row guarantee {row_guarantee}, column exposure {col_exposure}"
        )));
    }
    Ok(MatGameSolution {
        value,
        row_strategy,
        col_strategy,
    })
}

/// Worst case over columns of the row mixture `x`: the value
/// `min_j x . A_j` and a minimizing column, ties to the lowest index.
pub fn best_response_value<T: Real>(
    game: &MatrixGame<T>,
    x: &MixedAction<T>,
) -> Result<(T, usize), MatGameError> {
    if x.len() != game.rows() {
        return Err(MatGameError::DimensionMismatch {
            got: x.len(),
            want: game.rows(),
        });
    }
    let mut best = T::infinity();
    let mut arg = 0;
    for j in 0..game.cols() {
        let mut v = T::zero();
        for i in 0..game.rows() {
            v = v + x.weights()[i] * game.entry(i, j);
        }
        if v < best {
            best = v;
            arg = j;
        }
    }
    Ok((best, arg))
}

/// Best case over rows against the column mixture `y`: `max_i A_i . y`
/// and a maximizing row, ties to the lowest index.
pub fn best_response_row<T: Real>(
    game: &MatrixGame<T>,
    y: &MixedAction<T>,
) -> Result<(T, usize), MatGameError> {
    if y.len() != game.cols() {
        return Err(MatGameError::DimensionMismatch {
            got: y.len(),
            want: game.cols(),
        });
    }
    let mut best = T::neg_infinity();
    let mut arg = 0;
    for i in 0..game.rows() {
        let mut v = T::zero();
        for j in 0..game.cols() {
            v = v + y.weights()[j] * game.entry(i, j);
        }
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok((best, arg))
}

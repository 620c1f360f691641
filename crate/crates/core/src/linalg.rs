//! Dense linear solve by Gaussian elimination with partial pivoting,
//! generic over the scalar field so it runs on floats and exact rationals.

use crate::num::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("singular linear system (pivot vanished at column {column})")]
pub struct SingularSystem {
    pub column: usize,
}

/// Solves `A x = b` for square `A`, consuming both. Pivots on the largest
/// absolute entry per column; with exact scalars the result is exact.
pub fn solve_dense<T: Scalar>(
    mut a: Vec<Vec<T>>,
    mut b: Vec<T>,
) -> Result<Vec<T>, SingularSystem> {
    let n = a.len();
    assert!(a.iter().all(|r| r.len() == n) && b.len() == n, "shape");
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| {
                a[r][col]
                    .abs()
                    .partial_cmp(&a[s][col].abs())
                    .expect("comparable pivots")
            })
            .expect("nonempty column");
        if a[pivot][col].is_zero() {
            return Err(SingularSystem { column: col });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let f = a[row][col].clone() / a[col][col].clone();
            for k in col..n {
                let delta = f.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - delta;
            }
            let delta = f * b[col].clone();
            b[row] = b[row].clone() - delta;
        }
    }
    let mut x = vec![T::zero(); n];
    for col in (0..n).rev() {
        let mut acc = b[col].clone();
        for k in col + 1..n {
            acc = acc - a[col][k].clone() * x[k].clone();
        }
        x[col] = acc / a[col][col].clone();
    }
    Ok(x)
}

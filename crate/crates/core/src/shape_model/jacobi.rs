//! Cyclic Jacobi eigendecomposition for dense symmetric matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Column-major `n × n`; column `j` pairs with `values[j]`.
    pub vectors: Vec<T>,
    pub sweeps: usize,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> &[T] {
        let n = self.dim();
        &self.vectors[j * n..(j + 1) * n]
    }
}

fn off_diagonal_norm<T: Scalar>(a: &[T], n: usize) -> T {
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Diagonalizes the symmetric row-major `n × n` matrix `matrix`.
///
/// Sweeps over all `(p, q)` pairs in cyclic order until the off-diagonal Frobenius norm
/// drops below `tolerance` (raised to the working precision floor for `f32`). Eigenvector
/// columns are sign-normalized so that their largest-magnitude entry is positive, with ties
/// going to the lowest index.
pub fn symmetric_eigen<T: Scalar>(
    matrix: &[T],
    n: usize,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<SymmetricEigen<T>> {
    crate::error::check_len("symmetric_eigen matrix", n * n, matrix.len())?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigensolver input".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (matrix[i * n + j], matrix[j * n + i]);
            let scale = T::one().max(a.abs()).max(b.abs());
            if (a - b).abs() > T::lit(1e-10) * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = matrix.to_vec();
    // Row-major accumulation of rotations; transposed into columns at the end.
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let frob = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let floor = T::epsilon() * T::from_count(n.max(1)) * frob;
    let tol = T::lit(tolerance).max(floor);

    let mut sweeps = 0;
    let mut residual = off_diagonal_norm(&a, n);
    while residual >= tol {
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                residual: residual.as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        residual = off_diagonal_norm(&a, n);
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps index order among equal eigenvalues.
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        values.push(a[j * n + j]);
        let mut col: Vec<T> = (0..n).map(|i| v[i * n + j]).collect();
        normalize_sign(&mut col);
        vectors.extend(col);
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Flips `col` so that its largest-magnitude entry (lowest index on ties) is positive.
pub fn normalize_sign<T: Scalar>(col: &mut [T]) {
    let mut best = 0;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    if col.get(best).is_some_and(|&x| x < T::zero()) {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

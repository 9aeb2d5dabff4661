use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Solution of a dense system together with the pivot-ratio condition
/// estimate of the factorization.
#[derive(Clone, Debug)]
pub struct LuSolution<S = f64> {
    pub x: Vec<S>,
    /// `max |pivot| / min |pivot|` of the LU factorization.
    pub condition: f64,
}

/// Solves `A x = b` by LU decomposition with partial pivoting. `a` is
/// row-major `n x n`.
pub fn lu_solve<S: Scalar>(a: &[S], b: &[S]) -> Result<LuSolution<S>> {
    let n = b.len();
    if a.len() != n * n || n == 0 {
        return Err(Error::shape(format!("matrix with {} entries for a system of size {n}", a.len())));
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        let p = m[col * n + col];
        let pa = p.abs().as_f64();
        pmax = pmax.max(pa);
        pmin = pmin.min(pa);
        if !(pa > 0.0) {
            return Err(Error::Numeric(format!("matrix is singular (zero pivot in column {col}, condition estimate inf)")));
        }
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f == S::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[r * n + k] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in r + 1..n {
            s -= m[r * n + k] * x[k];
        }
        x[r] = s / m[r * n + r];
    }
    Ok(LuSolution { x, condition: pmax / pmin })
}

/// `w' = w - eta * H^{-1} g`, with `H^{-1} g` from a linear solve. Fails
/// with a numeric error (carrying the condition estimate) when `H` is
/// singular or too ill-conditioned for the scalar precision.
pub fn newton_step<S: Scalar>(w: &Tensor<S>, grad: &Tensor<S>, hessian: &Tensor<S>, eta: S) -> Result<Tensor<S>> {
    let n = w.len();
    w.same_shape(grad)?;
    if hessian.shape() != [n, n] {
        return Err(Error::shape(format!(
            "hessian shape {:?} does not match {n} parameters",
            hessian.shape()
        )));
    }
    let h = hessian.data();
    let scale = hessian.max_abs().as_f64().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in i + 1..n {
            if (h[i * n + j] - h[j * n + i]).abs().as_f64() > 1e-8 * scale {
                return Err(Error::invalid(format!("hessian is not symmetric at ({i}, {j})")));
            }
        }
    }
    let sol = lu_solve(h, grad.data())?;
    let limit = 1.0 / (S::epsilon().as_f64() * 1e3);
    if !(sol.condition < limit) {
        return Err(Error::Numeric(format!(
            "hessian is ill-conditioned (condition estimate {:.3e})",
            sol.condition
        )));
    }
    let mut out = w.clone();
    for (o, d) in out.data_mut().iter_mut().zip(sol.x) {
        *o -= eta * d;
    }
    Ok(out)
}

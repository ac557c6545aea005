//! Fixed-point proximity algorithm for the finite problem
//! `min |y0 - H z|_1 + rho |z|_1`.
//!
//! With `phi = rho |.|_1` and `psi = |y0 - .|_1` the iteration is
//!
//! ```text
//! z+ = prox_{beta phi}(z - beta H^T v)
//! v+ = gamma (I - prox_{psi/gamma})(v/gamma + H (2 z+ - z))
//! ```
//!
//! which converges when `beta gamma |H|_2^2 < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::norms::DenseVec;
use crate::operators::TruncatedMatrix;

pub const DEFAULT_MAX_ITER: usize = 200_000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const POWER_ITERATIONS: usize = 100;

/// Soft thresholding, the proximity operator of `t |.|_1`.
pub fn prox_scaled_l1(w: &[f64], t: f64) -> DenseVec {
    DenseVec(w.iter().map(|&v| soft(v, t)).collect())
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[inline]
fn toward(w: f64, y: f64, s: f64) -> f64 {
    if w > y + s {
        w - s
    } else if w < y - s {
        w + s
    } else {
        y
    }
}

/// Proximity operator of `s |y - .|_1`: moves each coordinate toward `y_j`
/// by at most `s`.
pub fn prox_residual_l1(w: &[f64], y: &[f64], s: f64) -> Result<DenseVec> {
    if w.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), actual: w.len() });
    }
    Ok(DenseVec(w.iter().zip(y).map(|(&wv, &yv)| toward(wv, yv, s)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FppaParams {
    beta: f64,
    gamma: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl FppaParams {
    /// Validates `beta gamma |H|_2^2 < 1` against a power-iteration estimate.
    pub fn new(h: &TruncatedMatrix, beta: f64, gamma: f64, max_iter: usize, tol: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidArgument("beta and gamma must be positive".into()));
        }
        let norm = h.spectral_norm(POWER_ITERATIONS);
        if beta * gamma * norm * norm >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "step sizes violate beta*gamma*|H|^2 < 1 (|H| = {norm:.6e})"
            )));
        }
        Ok(FppaParams { beta, gamma, max_iter, tol })
    }

    /// `beta = gamma = 0.99 / |H|_2`.
    pub fn default_for(h: &TruncatedMatrix) -> Self {
        let norm = h.spectral_norm(POWER_ITERATIONS).max(1e-300);
        let step = 0.99 / norm;
        FppaParams { beta: step, gamma: step, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FppaTrace {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

/// `|y0 - H z|_1 + rho |z|_1`.
pub fn finite_objective(h: &TruncatedMatrix, y0: &[f64], rho: f64, z: &[f64]) -> f64 {
    let hz = h.mul(z);
    let fit: f64 = hz.iter().zip(y0).map(|(a, b)| (b - a).abs()).sum();
    fit + rho * z.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn fppa_solve(
    h: &TruncatedMatrix,
    y0: &[f64],
    rho: f64,
    params: &FppaParams,
    z_init: &[f64],
    v_init: &[f64],
) -> Result<(DenseVec, FppaTrace)> {
    if y0.len() != h.rows || v_init.len() != h.rows {
        return Err(Error::DimensionMismatch { expected: h.rows, actual: y0.len().min(v_init.len()) });
    }
    if z_init.len() != h.cols {
        return Err(Error::DimensionMismatch { expected: h.cols, actual: z_init.len() });
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument("rho must be positive".into()));
    }
    let (beta, gamma) = (params.beta, params.gamma);
    let thresh = beta * rho;
    let s = 1.0 / gamma;
    let mut z = z_init.to_vec();
    let mut v = v_init.to_vec();
    let mut z_next = vec![0.0; h.cols];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iter {
        iterations = it;
        let htv = h.mul_t(&v);
        for j in 0..h.cols {
            z_next[j] = soft(z[j] - beta * htv[j], thresh);
        }
        let extrap: Vec<f64> = z_next.iter().zip(&z).map(|(a, b)| 2.0 * a - b).collect();
        let hx = h.mul(&extrap);
        let mut diff = 0.0;
        let mut size = 0.0;
        for i in 0..h.rows {
            let w = v[i] / gamma + hx[i];
            let vn = gamma * (w - toward(w, y0[i], s));
            diff += (vn - v[i]).powi(2);
            size += vn * vn;
            v[i] = vn;
        }
        for j in 0..h.cols {
            diff += (z_next[j] - z[j]).powi(2);
            size += z_next[j] * z_next[j];
        }
        std::mem::swap(&mut z, &mut z_next);
        if !diff.is_finite() {
            return Err(Error::Numerical(format!("non-finite FPPA iterate at step {it}")));
        }
        if diff.sqrt() <= params.tol * size.sqrt().max(1e-300) {
            converged = true;
            break;
        }
    }
    let final_objective = finite_objective(h, y0, rho, &z);
    Ok((DenseVec(z), FppaTrace { iterations, final_objective, converged }))
}

/// Exact solution of the finite problem as a linear program in
/// `(z, r, s)` with `r >= |y0 - Hz|` and `s >= |z|`.
pub fn finite_problem_lp(h: &TruncatedMatrix, y0: &[f64], rho: f64) -> Result<(DenseVec, f64)> {
    let (m, n) = (h.rows, h.cols);
    let nv = n + m + n;
    let mut c = vec![0.0; nv];
    for v in &mut c[n..n + m] {
        *v = -1.0;
    }
    for v in &mut c[n + m..] {
        *v = -rho;
    }
    let mut lp = LinearProgram::new(c);
    for i in 0..m {
        let mut up = vec![0.0; nv];
        let mut dn = vec![0.0; nv];
        for j in 0..n {
            up[j] = h.get(i, j);
            dn[j] = -h.get(i, j);
        }
        up[n + i] = -1.0;
        dn[n + i] = -1.0;
        lp.add_le(up, y0[i]);
        lp.add_le(dn, -y0[i]);
    }
    for j in 0..n {
        let mut up = vec![0.0; nv];
        let mut dn = vec![0.0; nv];
        up[j] = 1.0;
        dn[j] = -1.0;
        up[n + m + j] = -1.0;
        dn[n + m + j] = -1.0;
        lp.add_le(up, 0.0);
        lp.add_le(dn, 0.0);
    }
    let res = solve_lp(&lp)?;
    match res.status {
        LpStatus::Optimal => Ok((DenseVec(res.argmax[..n].to_vec()), -res.value)),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(prox_scaled_l1(&[3.0, -0.5, 0.2], 1.0).0, vec![2.0, 0.0, 0.0]);
        let w = [1.5, -2.0, 0.0, 1e-3];
        assert_eq!(prox_scaled_l1(&w, 0.0).0, w.to_vec());
    }

    #[test]
    fn residual_prox_examples() {
        let y = [0.3, -1.0, 2.0];
        assert_eq!(prox_residual_l1(&y, &y, 0.7).unwrap().0, y.to_vec());
        let w = [2.0, -0.1, -3.0];
        assert_eq!(
            prox_residual_l1(&w, &[0.0; 3], 0.5).unwrap(),
            prox_scaled_l1(&w, 0.5)
        );
        assert!(prox_residual_l1(&w, &[0.0; 2], 0.5).is_err());
    }

    #[test]
    fn scalar_problem() {
        let h = TruncatedMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
        let params = FppaParams::default_for(&h);
        let (z, trace) = fppa_solve(&h, &[1.0], 0.5, &params, &[0.0], &[0.0]).unwrap();
        // kinks at z = 0 (value 1) and z = 1 (value 0.5)
        assert!((z[0] - 1.0).abs() < 1e-8);
        assert!((trace.final_objective - 0.5).abs() < 1e-8);
        assert!(trace.converged);
    }

    #[test]
    fn huge_rho_gives_zero() {
        let h = TruncatedMatrix::from_row_major(2, 3, vec![1.0, 0.5, -0.2, 0.3, -1.0, 0.8]).unwrap();
        let params = FppaParams::default_for(&h);
        let (z, trace) = fppa_solve(&h, &[0.4, -0.7], 100.0, &params, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!(z.is_zero());
        assert!((trace.final_objective - 1.1).abs() < 1e-12);
    }

    #[test]
    fn step_condition_enforced() {
        let h = TruncatedMatrix::from_row_major(1, 1, vec![2.0]).unwrap();
        assert!(FppaParams::new(&h, 0.5, 1.0, 10, 1e-8).is_err());
        assert!(FppaParams::new(&h, 0.2, 1.0, 10, 1e-8).is_ok());
        assert!(FppaParams::new(&h, 0.0, 1.0, 10, 1e-8).is_err());
    }

    #[test]
    fn matches_exact_lp() {
        let h = TruncatedMatrix::from_row_major(
            3,
            4,
            vec![0.9, -0.2, 0.4, 0.1, 0.3, 0.8, -0.5, 0.2, -0.1, 0.4, 0.6, -0.7],
        )
        .unwrap();
        let y = [0.5, -0.3, 0.8];
        for rho in [0.05, 0.3, 1.0] {
            let params = FppaParams::default_for(&h);
            let (_, trace) = fppa_solve(&h, &y, rho, &params, &[0.0; 4], &[0.0; 3]).unwrap();
            let (_, exact) = finite_problem_lp(&h, &y, rho).unwrap();
            assert!((trace.final_objective - exact).abs() <= 1e-6 * exact, "rho {rho}");
        }
    }
}

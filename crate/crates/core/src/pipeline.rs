//! The `p = 1` duality scheme for `min |y0 - A x|_1 + rho |x|_1`:
//!
//! 1. solve the dual LP `max <y0, lambda>` over `|lambda|_inf <= 1`,
//!    `|<lambda, g_k>| <= rho` for `k <= n0`;
//! 2. if `rho |lambda|_inf > |A_* lambda|_inf` the solution is `x = 0`;
//! 3. otherwise collect the peak set `N` of `A_* lambda`;
//! 4. solve the finite problem on the columns in `N`;
//! 5. scatter the finite solution back into a sequence.
//!
//! Also contains minimum-norm interpolation `min |x|_1 s.t. A x = y` through
//! the same dual machinery, and the (unsolved) dual of the `p > 1` problem.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fppa::{finite_problem_lp, fppa_solve, FppaParams};
use crate::lp::{min_l1_solve, solve_lp, LinearProgram, LpStatus};
use crate::norms::{conjugate_exponent, DenseVec, SparseSeq};
use crate::operators::{
    apply_a, peak_set, sup_norm_certified, truncate_matrix, RowFamily, SupNormCertificate,
    DEFAULT_SUPPORT_REL_TOL, DEFAULT_SUP_REL_TOL,
};
use crate::polytope::{find_n0_by_objective, find_n0_by_vertices, EnumerationLimits, SlabSystem, OBJECTIVE_STABLE_TOL};

/// Relative tolerance under which `rho |lambda|_inf` and `|A_* lambda|_inf` tie.
pub const BRANCH_TIE_TOL: f64 = 1e-9;
/// FPPA and the exact finite LP may differ by this much (relative) before the
/// LP value is preferred.
pub const FPPA_LP_AGREEMENT: f64 = 1e-5;
/// Cutting-plane rounds allowed when the truncated dual misses a constraint.
pub const MAX_CUT_ROUNDS: usize = 50;

#[derive(Debug, Clone)]
pub struct RegularizationProblem {
    pub rows: RowFamily,
    pub y0: DenseVec,
    pub rho: f64,
    pub p: f64,
}

impl RegularizationProblem {
    pub fn new(rows: RowFamily, y0: DenseVec, rho: f64) -> Result<Self> {
        Self::with_p(rows, y0, rho, 1.0)
    }

    pub fn with_p(rows: RowFamily, y0: DenseVec, rho: f64, p: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must lie in [1, inf), got {p}")));
        }
        if y0.len() != rows.m() {
            return Err(Error::DimensionMismatch { expected: rows.m(), actual: y0.len() });
        }
        if y0.is_zero() {
            return Err(Error::InvalidArgument("data y0 must not be all zero".into()));
        }
        Ok(RegularizationProblem { rows, y0, rho, p })
    }

    fn require_p1(&self) -> Result<()> {
        if self.p != 1.0 {
            return Err(Error::InvalidArgument(format!("only p = 1 is solvable, got p = {}", self.p)));
        }
        Ok(())
    }
}

/// The dual LP with the box and the first `n0` slabs.
pub fn assemble_dual_p1(problem: &RegularizationProblem, n0: usize) -> Result<LinearProgram> {
    problem.require_p1()?;
    if n0 == 0 {
        return Err(Error::InvalidArgument("n0 must be at least 1".into()));
    }
    let slabs = SlabSystem::from_rows(&problem.rows, n0, problem.rho, true)?;
    Ok(slabs.to_lp(&problem.y0, n0))
}

/// Dual of the `p > 1` problem:
/// `max <y0, lambda>` s.t. `|lambda|_inf^{p'} + rho^{1-p'} |A_* lambda|_inf^{p'} <= 1`.
/// Only evaluation is provided.
#[derive(Debug, Clone)]
pub struct DualPGreaterOne {
    rows: RowFamily,
    y0: DenseVec,
    rho: f64,
    p_conj: f64,
}

impl DualPGreaterOne {
    pub fn conjugate_exponent(&self) -> f64 {
        self.p_conj
    }

    pub fn objective(&self, lambda: &[f64]) -> f64 {
        self.y0.dot(lambda)
    }

    pub fn constraint_value(&self, lambda: &[f64]) -> Result<f64> {
        if lambda.len() != self.rows.m() {
            return Err(Error::DimensionMismatch { expected: self.rows.m(), actual: lambda.len() });
        }
        let inf = lambda.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if inf == 0.0 {
            return Ok(0.0);
        }
        let sup = sup_norm_certified(&self.rows, lambda, DEFAULT_SUP_REL_TOL)?.value;
        let q = self.p_conj;
        Ok(inf.powf(q) + self.rho.powf(1.0 - q) * sup.powf(q))
    }

    pub fn is_feasible(&self, lambda: &[f64], tol: f64) -> Result<bool> {
        Ok(self.constraint_value(lambda)? <= 1.0 + tol)
    }
}

pub fn assemble_dual_pgt1(problem: &RegularizationProblem) -> Result<DualPGreaterOne> {
    if problem.p <= 1.0 {
        return Err(Error::InvalidArgument("the p > 1 dual needs p > 1".into()));
    }
    Ok(DualPGreaterOne {
        rows: problem.rows.clone(),
        y0: problem.y0.clone(),
        rho: problem.rho,
        p_conj: conjugate_exponent(problem.p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum N0Strategy {
    /// Stop when consecutive slab polytopes share their vertices (no box).
    Vertices,
    /// Stop when the truncated dual value repeats three times.
    Objective,
    Fixed { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// First truncation examined; `None` means `m`.
    pub n_start: Option<usize>,
    pub n_cap: usize,
    pub objective_tol: f64,
    pub sup_rel_tol: f64,
    pub support_rel_tol: f64,
    pub fppa_max_iter: usize,
    pub fppa_tol: f64,
    /// Also solve the finite problem exactly and compare with FPPA.
    pub lp_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_start: None,
            n_cap: 5000,
            objective_tol: OBJECTIVE_STABLE_TOL,
            sup_rel_tol: DEFAULT_SUP_REL_TOL,
            support_rel_tol: DEFAULT_SUPPORT_REL_TOL,
            fppa_max_iter: crate::fppa::DEFAULT_MAX_ITER,
            fppa_tol: crate::fppa::DEFAULT_TOL,
            lp_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: DenseVec,
    /// Optimal dual value.
    pub s: f64,
    /// `A_* lambda` on the certified prefix.
    pub mu_prefix: SparseSeq,
    pub mu_supnorm: f64,
    pub peak: Vec<usize>,
    pub n0: usize,
    /// Slabs beyond `n0` added because `lambda` violated them.
    pub cuts: Vec<usize>,
}

impl DualSolution {
    /// The `Z`-side dual variable `-(1/rho) A_* lambda`.
    pub fn representer_mu(&self, rho: f64) -> SparseSeq {
        let entries = self.mu_prefix.entries().iter().map(|&(k, v)| (k, -v / rho)).collect();
        SparseSeq::from_entries(entries).expect("rescaled valid sequence")
    }
}

fn n0_for(
    rows: &RowFamily,
    y: &[f64],
    rho: f64,
    with_box: bool,
    strategy: N0Strategy,
    opts: &SolverOptions,
) -> Result<usize> {
    let start = opts.n_start.unwrap_or(rows.m()).max(1);
    match strategy {
        N0Strategy::Fixed { n } => {
            if n == 0 {
                Err(Error::InvalidArgument("fixed n0 must be at least 1".into()))
            } else {
                Ok(n)
            }
        }
        N0Strategy::Vertices => {
            find_n0_by_vertices(rows, rho, start, opts.n_cap, false, &EnumerationLimits::default())
                .map(|r| r.n0)
        }
        N0Strategy::Objective => {
            find_n0_by_objective(rows, y, rho, start, opts.n_cap, opts.objective_tol, with_box).map(|r| r.n0)
        }
    }
}

/// Solves `max <y, lambda>` over the first `n0` slabs of half width `rho`
/// (and the box if asked), then adds any violated slab found by the
/// certified sup-norm scan and solves again until `lambda` is feasible for
/// the full semi-infinite system.
fn solve_slab_dual(
    rows: &RowFamily,
    y: &[f64],
    rho: f64,
    n0: usize,
    with_box: bool,
    opts: &SolverOptions,
) -> Result<(DenseVec, f64, SupNormCertificate, Vec<usize>)> {
    let slabs = SlabSystem::from_rows(rows, n0, rho, with_box)?;
    let mut lp = slabs.to_lp(y, n0);
    let mut cuts: Vec<usize> = Vec::new();
    for _ in 0..=MAX_CUT_ROUNDS {
        let res = solve_lp(&lp)?;
        match res.status {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => return Err(Error::Unbounded),
            LpStatus::Infeasible => return Err(Error::Infeasible),
        }
        let lambda = res.argmax;
        if lambda.is_zero() {
            return Err(Error::Numerical("dual solution is zero".into()));
        }
        let cert = sup_norm_certified(rows, &lambda, opts.sup_rel_tol)?;
        let limit = rho * (1.0 + opts.sup_rel_tol);
        if cert.value <= limit {
            return Ok((lambda, res.value, cert, cuts));
        }
        let violated: Vec<usize> = cert
            .prefix
            .iter()
            .enumerate()
            .filter(|(k, v)| *k >= n0 && v.abs() > limit)
            .map(|(k, _)| k + 1)
            .collect();
        if violated.is_empty() {
            return Err(Error::Numerical("violated slab not inside the certified prefix".into()));
        }
        for &k in &violated {
            lp.add_range(rows.column(k), -rho, rho);
        }
        cuts.extend(violated);
    }
    Err(Error::LimitExceeded(format!("dual still infeasible after {MAX_CUT_ROUNDS} cut rounds")))
}

pub fn solve_dual(problem: &RegularizationProblem, strategy: N0Strategy) -> Result<DualSolution> {
    solve_dual_with(problem, strategy, &SolverOptions::default())
}

pub fn solve_dual_with(
    problem: &RegularizationProblem,
    strategy: N0Strategy,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    problem.require_p1()?;
    let n0 = n0_for(&problem.rows, &problem.y0, problem.rho, true, strategy, opts)?;
    let (lambda, s, mut cert, cuts) = solve_slab_dual(&problem.rows, &problem.y0, problem.rho, n0, true, opts)?;
    let peak = peak_set(&mut cert, opts.support_rel_tol)?;
    Ok(DualSolution {
        lambda,
        s,
        mu_prefix: cert.prefix_seq(),
        mu_supnorm: cert.value,
        peak,
        n0,
        cuts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    ZeroSolution,
    FiniteSolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub x: SparseSeq,
    pub f_r: f64,
    pub branch: Branch,
    pub sparsity: usize,
    pub diagnostics: BTreeMap<String, f64>,
    pub dual: DualSolution,
}

/// `|y0 - A x|_1 + rho |x|_1` on the full problem.
pub fn regularized_objective(rows: &RowFamily, y0: &[f64], rho: f64, x: &SparseSeq) -> f64 {
    let ax = apply_a(rows, x);
    let fit: f64 = y0.iter().zip(ax.iter()).map(|(a, b)| (a - b).abs()).sum();
    fit + rho * x.l1_norm()
}

pub fn solve_regularized(problem: &RegularizationProblem, strategy: N0Strategy) -> Result<PrimalSolution> {
    solve_regularized_with(problem, strategy, &SolverOptions::default())
}

pub fn solve_regularized_with(
    problem: &RegularizationProblem,
    strategy: N0Strategy,
    opts: &SolverOptions,
) -> Result<PrimalSolution> {
    let dual = solve_dual_with(problem, strategy, opts)?;
    let rho = problem.rho;
    let lambda_inf = dual.lambda.sup_norm();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("S".to_string(), dual.s);
    diagnostics.insert("rho_lambda_inf".to_string(), rho * lambda_inf);
    diagnostics.insert("astar_lambda_inf".to_string(), dual.mu_supnorm);
    diagnostics.insert("n0".to_string(), dual.n0 as f64);
    diagnostics.insert("cuts".to_string(), dual.cuts.len() as f64);

    let lhs = rho * lambda_inf;
    let zero = lhs - dual.mu_supnorm > BRANCH_TIE_TOL * lhs.max(dual.mu_supnorm);
    let (x, branch) = if zero {
        (SparseSeq::zero(), Branch::ZeroSolution)
    } else {
        let h = truncate_matrix(&problem.rows, &dual.peak)?;
        let mut params = FppaParams::default_for(&h);
        params.max_iter = opts.fppa_max_iter;
        params.tol = opts.fppa_tol;
        let (mut z, trace) = fppa_solve(&h, &problem.y0, rho, &params, &vec![0.0; h.cols], &vec![0.0; h.rows])?;
        diagnostics.insert("fppa_objective".to_string(), trace.final_objective);
        diagnostics.insert("fppa_iterations".to_string(), trace.iterations as f64);
        diagnostics.insert("fppa_converged".to_string(), if trace.converged { 1.0 } else { 0.0 });
        if opts.lp_check {
            let (z_lp, lp_obj) = finite_problem_lp(&h, &problem.y0, rho)?;
            diagnostics.insert("lp_objective".to_string(), lp_obj);
            let gap = (trace.final_objective - lp_obj).abs();
            if gap > FPPA_LP_AGREEMENT * lp_obj.abs().max(1e-12) {
                diagnostics.insert("fppa_lp_disagreement".to_string(), gap);
                z = z_lp;
            }
        }
        (SparseSeq::scatter(&dual.peak, &z)?, Branch::FiniteSolve)
    };
    let f_r = match branch {
        Branch::ZeroSolution => problem.y0.l1_norm(),
        Branch::FiniteSolve => regularized_objective(&problem.rows, &problem.y0, rho, &x),
    };
    let residual = problem.y0.sub(&apply_a(&problem.rows, &x));
    diagnostics.insert("residual_l1".to_string(), residual.l1_norm());
    diagnostics.insert("residual_l2".to_string(), residual.l2_norm());
    Ok(PrimalSolution { sparsity: x.support_size(), x, f_r, branch, diagnostics, dual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    pub x: SparseSeq,
    pub dual_value: f64,
    pub n0: usize,
    pub peak: Vec<usize>,
    /// Peak tolerance used for the successful solve.
    pub support_rel_tol: f64,
}

/// Factor by which the peak tolerance is widened for the single retry.
pub const INTERP_RETRY_WIDEN: f64 = 100.0;

/// `min |x|_1` subject to `A x = y`.
pub fn solve_min_norm_interp(rows: &RowFamily, y: &[f64]) -> Result<Interpolant> {
    solve_min_norm_interp_with(rows, y, N0Strategy::Objective, &SolverOptions::default())
}

pub fn solve_min_norm_interp_with(
    rows: &RowFamily,
    y: &[f64],
    strategy: N0Strategy,
    opts: &SolverOptions,
) -> Result<Interpolant> {
    if y.len() != rows.m() {
        return Err(Error::DimensionMismatch { expected: rows.m(), actual: y.len() });
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("interpolation data must not be all zero".into()));
    }
    // without the box the truncated dual is bounded only once the normals span R^m
    let mut opts = *opts;
    opts.n_start = Some(opts.n_start.unwrap_or(rows.m()).max(rows.m()));
    let n0 = n0_for(rows, y, 1.0, false, strategy, &opts)?;
    let (_, value, cert, _) = solve_slab_dual(rows, y, 1.0, n0, false, &opts)?;
    let mut interp = interp_on_peak(rows, y, cert, opts.support_rel_tol)?;
    interp.dual_value = value;
    interp.n0 = n0;
    Ok(interp)
}

/// Interpolates `y` on the peak set of `A_* lambda` for a supplied dual
/// point `lambda`. Only meaningful when `lambda` solves the interpolation dual.
pub fn interp_from_dual(rows: &RowFamily, y: &[f64], lambda: &[f64], opts: &SolverOptions) -> Result<Interpolant> {
    let cert = sup_norm_certified(rows, lambda, opts.sup_rel_tol)?;
    // value of the rescaled feasible point lambda / |A_* lambda|_inf
    let value = crate::norms::dot(y, lambda) / cert.value;
    let mut interp = interp_on_peak(rows, y, cert, opts.support_rel_tol)?;
    interp.dual_value = value;
    Ok(interp)
}

/// Solves `A_N z = y` with least `|z|_1` on the peak set; on an inconsistent
/// system the peak tolerance is widened once and the solve retried.
fn interp_on_peak(rows: &RowFamily, y: &[f64], mut cert: SupNormCertificate, support_rel_tol: f64) -> Result<Interpolant> {
    let mut tol = support_rel_tol;
    for attempt in 0..2 {
        let peak = peak_set(&mut cert, tol)?;
        let h = truncate_matrix(rows, &peak)?;
        match min_l1_solve(&h, y) {
            Ok((z, _)) => {
                let x = SparseSeq::scatter(&peak, &z)?;
                return Ok(Interpolant { x, dual_value: f64::NAN, n0: 0, peak, support_rel_tol: tol });
            }
            Err(Error::Infeasible) if attempt == 0 => tol *= INTERP_RETRY_WIDEN,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{CoordinateRows, FiniteRows, TrigRows};

    fn trig_problem(rho: f64) -> RegularizationProblem {
        let rows = RowFamily::new(TrigRows::new(4).unwrap());
        RegularizationProblem::new(rows, DenseVec(vec![0.3, -0.1, 0.2, 0.05]), rho).unwrap()
    }

    #[test]
    fn validation() {
        let rows = RowFamily::new(TrigRows::new(2).unwrap());
        assert!(RegularizationProblem::new(rows.clone(), DenseVec(vec![1.0, 0.0]), 0.0).is_err());
        assert!(RegularizationProblem::new(rows.clone(), DenseVec(vec![0.0, 0.0]), 1.0).is_err());
        assert!(RegularizationProblem::new(rows, DenseVec(vec![1.0]), 1.0).is_err());
    }

    #[test]
    fn dual_p1_shape() {
        let rows = RowFamily::new(TrigRows::new(12).unwrap());
        let p = RegularizationProblem::new(rows, DenseVec(vec![0.1; 12]), 1.0).unwrap();
        let lp = assemble_dual_p1(&p, 19).unwrap();
        assert_eq!(lp.num_vars(), 12);
        assert_eq!(lp.constraints.len(), 38);
        assert!(lp.bounds.iter().all(|&b| b == (-1.0, 1.0)));
        let mut q = p.clone();
        q.rho = 2.0;
        let lp2 = assemble_dual_p1(&q, 19).unwrap();
        for (a, b) in lp.constraints.iter().zip(&lp2.constraints) {
            assert_eq!(a.row, b.row);
            assert_eq!(2.0 * a.rhs, b.rhs);
        }
    }

    #[test]
    fn dual_pgt1_evaluation() {
        let mut p = trig_problem(0.5);
        assert!(assemble_dual_pgt1(&p).is_err());
        p.p = 2.0;
        let d = assemble_dual_pgt1(&p).unwrap();
        assert_eq!(d.conjugate_exponent(), 2.0);
        assert_eq!(d.constraint_value(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(d.objective(&[0.0; 4]), 0.0);
        let lambda = [0.2, -0.1, 0.05, 0.3];
        let inf: f64 = 0.3;
        let sup = sup_norm_certified(&p.rows, &lambda, 1e-12).unwrap().value;
        let direct = inf * inf + sup * sup / 0.5;
        assert!((d.constraint_value(&lambda).unwrap() - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn zero_branch_for_large_rho() {
        let p = trig_problem(100.0);
        let sol = solve_regularized(&p, N0Strategy::Objective).unwrap();
        assert_eq!(sol.branch, Branch::ZeroSolution);
        assert_eq!(sol.f_r, p.y0.l1_norm());
        assert_eq!(sol.dual.s, p.y0.l1_norm());
        assert_eq!(sol.sparsity, 0);
    }

    #[test]
    fn strong_duality_and_support() {
        for rho in [0.05, 0.2, 0.6, 1.5] {
            let p = trig_problem(rho);
            for strategy in [N0Strategy::Objective, N0Strategy::Vertices] {
                let sol = solve_regularized(&p, strategy).unwrap();
                let gap = (sol.f_r - sol.dual.s).abs();
                assert!(gap <= 1e-6 * sol.dual.s.max(1e-6), "rho {rho}: {} vs {}", sol.f_r, sol.dual.s);
                assert!(sol.f_r >= sol.dual.s - 1e-9);
                for k in sol.x.support() {
                    assert!(sol.dual.peak.contains(&k));
                }
            }
        }
    }

    #[test]
    fn representer_mu_scales() {
        let p = trig_problem(0.2);
        let d = solve_dual(&p, N0Strategy::Objective).unwrap();
        let mu = d.representer_mu(0.2);
        let (k, v) = d.mu_prefix.entries()[0];
        assert!((mu.get(k) + v / 0.2).abs() < 1e-15);
    }

    #[test]
    fn interpolation_identity_sampling() {
        let rows = RowFamily::new(CoordinateRows::new(3).unwrap());
        let y = [0.5, -1.0, 2.0];
        let x = solve_min_norm_interp(&rows, &y).unwrap().x;
        assert_eq!(x.entries(), &[(1, 0.5), (2, -1.0), (3, 2.0)]);
    }

    #[test]
    fn interpolation_from_wrong_dual_fails_after_retry() {
        let rows = RowFamily::new(CoordinateRows::new(2).unwrap());
        let opts = SolverOptions::default();
        let err = interp_from_dual(&rows, &[1.0, 1.0], &[1.0, 0.0], &opts).unwrap_err();
        assert_eq!(err, Error::Infeasible);
        let ok = interp_from_dual(&rows, &[1.0, 1.0], &[1.0, 1.0], &opts).unwrap();
        assert_eq!(ok.x.support(), vec![1, 2]);
        assert!((ok.dual_value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_single_row() {
        // one row with a unique largest entry at k = 3
        let rows = RowFamily::new(FiniteRows::new(vec![vec![0.2], vec![-0.5], vec![0.9], vec![0.1]]).unwrap());
        let interp = solve_min_norm_interp(&rows, &[0.45]).unwrap();
        assert_eq!(interp.x.support(), vec![3]);
        assert!((interp.x.get(3) - 0.5).abs() < 1e-12);
        assert!((interp.dual_value - 0.5).abs() < 1e-12);
    }
}

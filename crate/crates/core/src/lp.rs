//! Dense linear programming: `maximize c.x` subject to `row_i . x <= rhs_i`
//! and per-variable bounds.
//!
//! The solver is a primal simplex method in vertex (active-set) form. A basis
//! is a set of `n` linearly independent tight rows; the iterate walks between
//! vertices of the feasible polyhedron and keeps the inverse of the basis
//! matrix up to date by rank-one row replacement. Variables start "pinned" at
//! a feasible point, so no slack or artificial columns are needed; an
//! auxiliary phase finds a feasible point when the origin is infeasible.
//!
//! Pricing is Dantzig's rule. After a run of degenerate pivots the solver
//! switches to Bland's smallest-index rule until progress resumes, which
//! rules out cycling. Everything is sequential, so identical inputs produce
//! bit-identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::norms::{dot, DenseVec};

/// Absolute feasibility tolerance on unit-scaled data.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const DUAL_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub row: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: DenseVec,
    pub constraints: Vec<Constraint>,
    /// `[lo, hi]` per variable; infinite values mean unbounded on that side.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program with free variables and no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective: DenseVec(objective),
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.constraints.push(Constraint { row, rhs });
    }

    /// `lo <= row . x <= hi`, added as two inequality rows.
    pub fn add_range(&mut self, row: Vec<f64>, lo: f64, hi: f64) {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        self.add_le(row, hi);
        self.add_le(neg, -lo);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_range(row, rhs, rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::InvalidArgument("program has no variables".into()));
        }
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.bounds.len() });
        }
        for c in &self.constraints {
            if c.row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: c.row.len() });
            }
            if c.rhs.is_nan() || c.row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite constraint data".into()));
            }
        }
        for &(lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!("bad bounds [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite objective".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| dot(&c.row, x) - c.rhs)
            .fold(0.0f64, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi))
            .fold(0.0f64, f64::max);
        rows.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimal point; empty unless `status == Optimal`.
    pub argmax: DenseVec,
    pub value: f64,
    /// Nonnegative multipliers, one per constraint row.
    pub row_multipliers: Vec<f64>,
    /// Multipliers of the `(lower, upper)` bound of each variable.
    pub bound_multipliers: Vec<(f64, f64)>,
    pub iterations: usize,
}

impl LpResult {
    fn not_optimal(status: LpStatus, iterations: usize) -> Self {
        LpResult {
            status,
            argmax: DenseVec::default(),
            value: if status == LpStatus::Unbounded { f64::INFINITY } else { f64::NEG_INFINITY },
            row_multipliers: Vec::new(),
            bound_multipliers: Vec::new(),
            iterations,
        }
    }

    /// Largest violation among stationarity `c = sum u_i a_i`, dual
    /// feasibility `u >= 0` and complementary slackness `u_i s_i = 0`.
    pub fn certificate_residual(&self, lp: &LinearProgram) -> f64 {
        if self.status != LpStatus::Optimal {
            return f64::INFINITY;
        }
        let n = lp.num_vars();
        let mut grad = lp.objective.0.clone();
        let mut worst = 0.0f64;
        for (c, &u) in lp.constraints.iter().zip(&self.row_multipliers) {
            for (g, a) in grad.iter_mut().zip(&c.row) {
                *g -= u * a;
            }
            worst = worst.max(-u);
            worst = worst.max((u * (c.rhs - dot(&c.row, &self.argmax))).abs());
        }
        for j in 0..n {
            let (ul, uh) = self.bound_multipliers[j];
            let (lo, hi) = lp.bounds[j];
            grad[j] -= uh - ul;
            worst = worst.max(-ul).max(-uh);
            if ul != 0.0 {
                worst = worst.max((ul * (self.argmax[j] - lo)).abs());
            }
            if uh != 0.0 {
                worst = worst.max((uh * (hi - self.argmax[j])).abs());
            }
        }
        grad.iter().fold(worst, |w, g| w.max(g.abs()))
    }
}

/// Where an internal row came from.
#[derive(Debug, Clone, Copy)]
enum Origin {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Row(usize),
    /// Coordinate pinned at its current value; `stuck` marks a lineality
    /// direction that could not be released.
    Pin { var: usize, stuck: bool },
}

struct Tableau {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    norms: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<Slot>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    updates: usize,
    iterations: usize,
    max_iter: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn new(n: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, x: Vec<f64>) -> Self {
        let rows = b.len();
        let norms = (0..rows)
            .map(|i| a[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut binv = vec![0.0; n * n];
        for i in 0..n {
            binv[i * n + i] = 1.0;
        }
        Tableau {
            n,
            a,
            b,
            norms,
            c,
            x,
            basis: (0..n).map(|var| Slot::Pin { var, stuck: false }).collect(),
            in_basis: vec![false; rows],
            binv,
            updates: 0,
            iterations: 0,
            max_iter: 50 * (rows + n) + 1000,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    fn basis_column(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.binv[i * self.n + p]).collect()
    }

    /// `u = B^{-T} c`: multipliers of the basis rows.
    fn multipliers(&self) -> Vec<f64> {
        let n = self.n;
        let mut u = vec![0.0; n];
        for (i, &ci) in self.c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let r = &self.binv[i * n..(i + 1) * n];
            for (up, &bv) in u.iter_mut().zip(r) {
                *up += ci * bv;
            }
        }
        u
    }

    /// Minimum-ratio test along `d`; returns `(row, step)` of the first
    /// blocking row.
    fn ratio_test(&self, d: &[f64], bland: bool) -> Option<(usize, f64)> {
        let dnorm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.b.len() {
            if self.in_basis[i] {
                continue;
            }
            let ai = self.row(i);
            let s = dot(ai, d);
            if s <= PIVOT_TOL * self.norms[i] * dnorm {
                continue;
            }
            let slack = (self.b[i] - dot(ai, &self.x)).max(0.0);
            let t = slack / s;
            let rel = s / self.norms[i];
            best = match best {
                None => Some((i, t, rel)),
                Some((bi, bt, brel)) => {
                    let tie = (t - bt).abs() <= 1e-12 * (1.0 + bt.abs());
                    if t < bt && !tie {
                        Some((i, t, rel))
                    } else if tie && !bland && rel > brel {
                        Some((i, t.min(bt), rel))
                    } else {
                        Some((bi, bt.min(t), brel))
                    }
                }
            };
        }
        best.map(|(i, t, _)| (i, t))
    }

    fn pivot(&mut self, p: usize, entering: usize, w: &[f64]) -> Result<()> {
        let n = self.n;
        if let Slot::Row(old) = self.basis[p] {
            self.in_basis[old] = false;
        }
        self.basis[p] = Slot::Row(entering);
        self.in_basis[entering] = true;
        self.updates += 1;
        if self.updates % REFACTOR_EVERY == 0 {
            return self.refactor();
        }
        let ai = &self.a[entering * n..(entering + 1) * n];
        let alpha = dot(ai, w);
        if alpha.abs() < 1e-14 {
            return self.refactor();
        }
        // r = a_i^T B^{-1}
        let mut r = vec![0.0; n];
        for (k, &av) in ai.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let row = &self.binv[k * n..(k + 1) * n];
            for (rv, &bv) in r.iter_mut().zip(row) {
                *rv += av * bv;
            }
        }
        r[p] -= 1.0;
        for k in 0..n {
            let f = w[k] / alpha;
            if f == 0.0 {
                continue;
            }
            let row = &mut self.binv[k * n..(k + 1) * n];
            for (bv, &rv) in row.iter_mut().zip(&r) {
                *bv -= f * rv;
            }
        }
        Ok(())
    }

    /// Rebuilds `B^{-1}` from scratch and re-solves for the vertex.
    fn refactor(&mut self) -> Result<()> {
        let n = self.n;
        let mut bmat = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (p, slot) in self.basis.iter().enumerate() {
            match *slot {
                Slot::Row(i) => {
                    bmat[p * n..(p + 1) * n].copy_from_slice(&self.a[i * n..(i + 1) * n]);
                    rhs[p] = self.b[i];
                }
                Slot::Pin { var, .. } => {
                    bmat[p * n + var] = 1.0;
                    rhs[p] = self.x[var];
                }
            }
        }
        self.binv = linalg::invert(&bmat, n, 1e-14)
            .ok_or_else(|| Error::Numerical("basis matrix became singular".into()))?;
        let mut x = vec![0.0; n];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = dot(&self.binv[i * n..(i + 1) * n], &rhs);
        }
        self.x = x;
        Ok(())
    }

    fn run(&mut self) -> Result<Outcome> {
        let n = self.n;
        let cscale = self.c.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let mut degenerate = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iter {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {} iterations",
                    self.max_iter
                )));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let u = self.multipliers();
            let tol = DUAL_TOL * cscale;

            // 1. a pin with a nonzero multiplier: release toward improvement
            // 2. a row with a negative multiplier: drop it
            // 3. a pin with zero multiplier: release in whichever direction blocks
            let mut choice: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for p in 0..n {
                if let Slot::Pin { stuck: false, .. } = self.basis[p] {
                    if u[p].abs() > tol && u[p].abs() > best {
                        best = u[p].abs();
                        choice = Some((p, u[p].signum()));
                    }
                }
            }
            if choice.is_none() {
                let mut best_key: Option<(f64, usize)> = None;
                for p in 0..n {
                    if let Slot::Row(i) = self.basis[p] {
                        if u[p] < -tol {
                            let better = match best_key {
                                None => true,
                                Some((bu, bi)) => {
                                    if bland {
                                        i < bi
                                    } else {
                                        u[p] < bu
                                    }
                                }
                            };
                            if better {
                                best_key = Some((u[p], i));
                                choice = Some((p, -1.0));
                            }
                        }
                    }
                }
            }
            let mut zero_pin = false;
            if choice.is_none() {
                if let Some(p) = (0..n).find(|&p| matches!(self.basis[p], Slot::Pin { stuck: false, .. })) {
                    choice = Some((p, -1.0));
                    zero_pin = true;
                }
            }
            let Some((p, sign)) = choice else {
                return Ok(Outcome::Optimal);
            };

            let w = self.basis_column(p);
            let mut d: Vec<f64> = w.iter().map(|v| sign * v).collect();
            let mut blocking = self.ratio_test(&d, bland);
            if blocking.is_none() {
                if zero_pin {
                    for v in d.iter_mut() {
                        *v = -*v;
                    }
                    blocking = self.ratio_test(&d, bland);
                    if blocking.is_none() {
                        if let Slot::Pin { var, .. } = self.basis[p] {
                            self.basis[p] = Slot::Pin { var, stuck: true };
                        }
                        continue;
                    }
                } else if dot(&self.c, &d) > tol {
                    return Ok(Outcome::Unbounded);
                } else {
                    if let Slot::Pin { var, .. } = self.basis[p] {
                        self.basis[p] = Slot::Pin { var, stuck: true };
                    }
                    continue;
                }
            }
            let (entering, step) = blocking.expect("checked above");
            if step > 0.0 {
                for (xi, di) in self.x.iter_mut().zip(&d) {
                    *xi += step * di;
                }
                degenerate = 0;
            } else {
                degenerate += 1;
            }
            self.pivot(p, entering, &w)?;
            if self.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite simplex iterate".into()));
            }
        }
    }
}

/// Collects constraint rows and finite bounds into one `A x <= b` system.
fn assemble(lp: &LinearProgram) -> (Vec<f64>, Vec<f64>, Vec<Origin>) {
    let n = lp.num_vars();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut origin = Vec::new();
    for (i, c) in lp.constraints.iter().enumerate() {
        a.extend_from_slice(&c.row);
        b.push(c.rhs);
        origin.push(Origin::Row(i));
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            a.extend(r);
            b.push(hi);
            origin.push(Origin::Upper(j));
        }
        if lo.is_finite() {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            a.extend(r);
            b.push(-lo);
            origin.push(Origin::Lower(j));
        }
    }
    (a, b, origin)
}

/// Finds a point with `A x <= b` by maximizing `-t` over `A x - t <= b`, `t >= 0`.
fn phase_one(n: usize, a: &[f64], b: &[f64]) -> Result<Option<(Vec<f64>, usize)>> {
    let rows = b.len();
    let n1 = n + 1;
    let mut a1 = Vec::with_capacity((rows + 1) * n1);
    let mut b1 = b.to_vec();
    for i in 0..rows {
        a1.extend_from_slice(&a[i * n..(i + 1) * n]);
        a1.push(-1.0);
    }
    let mut tpos = vec![0.0; n1];
    tpos[n] = -1.0;
    a1.extend(tpos);
    b1.push(0.0);
    let t0 = b.iter().fold(0.0f64, |s, &v| s.max(-v));
    let mut x0 = vec![0.0; n1];
    x0[n] = t0;
    let mut c = vec![0.0; n1];
    c[n] = -1.0;
    let mut tab = Tableau::new(n1, a1, b1, c, x0);
    match tab.run()? {
        Outcome::Unbounded => Err(Error::Numerical("phase one reported unbounded".into())),
        Outcome::Optimal => {
            let bscale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            if tab.x[n] > FEAS_TOL * bscale {
                Ok(None)
            } else {
                let mut x = tab.x;
                x.truncate(n);
                Ok(Some((x, tab.iterations)))
            }
        }
    }
}

/// Solves `lp`. Returns `Err` only for malformed input or numerical breakdown;
/// infeasibility and unboundedness are reported through `LpResult::status`.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult> {
    lp.validate()?;
    let n = lp.num_vars();
    let (a, b, origin) = assemble(lp);
    let bscale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut iterations = 0;
    let start = if b.iter().all(|&v| v >= -FEAS_TOL * bscale) {
        vec![0.0; n]
    } else {
        match phase_one(n, &a, &b)? {
            None => return Ok(LpResult::not_optimal(LpStatus::Infeasible, 0)),
            Some((x, it)) => {
                iterations += it;
                x
            }
        }
    };
    let mut tab = Tableau::new(n, a, b, lp.objective.0.clone(), start);
    let outcome = tab.run()?;
    iterations += tab.iterations;
    if let Outcome::Unbounded = outcome {
        return Ok(LpResult::not_optimal(LpStatus::Unbounded, iterations));
    }
    let u = tab.multipliers();
    let mut row_multipliers = vec![0.0; lp.constraints.len()];
    let mut bound_multipliers = vec![(0.0, 0.0); n];
    for (p, slot) in tab.basis.iter().enumerate() {
        if let Slot::Row(i) = *slot {
            let up = u[p].max(0.0);
            match origin[i] {
                Origin::Row(r) => row_multipliers[r] = up,
                Origin::Upper(j) => bound_multipliers[j].1 = up,
                Origin::Lower(j) => bound_multipliers[j].0 = up,
            }
        }
    }
    let value = dot(&lp.objective, &tab.x);
    Ok(LpResult {
        status: LpStatus::Optimal,
        argmax: DenseVec(tab.x),
        value,
        row_multipliers,
        bound_multipliers,
        iterations,
    })
}

/// Brute-force LP oracle: best feasible intersection point over all
/// `n`-subsets of rows and bounds. Only for tiny programs with a bounded
/// feasible region.
pub fn solve_by_vertex_enumeration(lp: &LinearProgram) -> Option<(Vec<f64>, f64)> {
    let n = lp.num_vars();
    let (a, b, _) = assemble(lp);
    let rows = b.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    if rows < n {
        return None;
    }
    loop {
        let mut mat = Vec::with_capacity(n * n);
        let mut rhs = Vec::with_capacity(n);
        for &i in &subset {
            mat.extend_from_slice(&a[i * n..(i + 1) * n]);
            rhs.push(b[i]);
        }
        if let Some(x) = linalg::solve(&mat, &rhs, n, 1e-12) {
            let feasible = (0..rows).all(|i| dot(&a[i * n..(i + 1) * n], &x) <= b[i] + 1e-9);
            if feasible {
                let v = dot(&lp.objective, &x);
                if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
                    best = Some((x, v));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < rows - n + i {
                break;
            }
        }
        subset[i] += 1;
        for k in i + 1..n {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// Minimizes `|z|_1` subject to `H z = y` through the split `z = p - q`,
/// `p, q >= 0`. Returns the minimizer and the optimal value.
pub fn min_l1_solve(h: &crate::operators::TruncatedMatrix, y: &[f64]) -> Result<(DenseVec, f64)> {
    if y.len() != h.rows {
        return Err(Error::DimensionMismatch { expected: h.rows, actual: y.len() });
    }
    let n = h.cols;
    let mut lp = LinearProgram::new(vec![-1.0; 2 * n]);
    for j in 0..2 * n {
        lp.set_bounds(j, 0.0, f64::INFINITY);
    }
    for i in 0..h.rows {
        let mut row = h.row(i).to_vec();
        row.extend(h.row(i).iter().map(|v| -v));
        lp.add_eq(row, y[i]);
    }
    let res = solve_lp(&lp)?;
    match res.status {
        LpStatus::Optimal => {
            let z: Vec<f64> = (0..n).map(|j| res.argmax[j] - res.argmax[n + j]).collect();
            Ok((DenseVec(z), -res.value))
        }
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
    }
}

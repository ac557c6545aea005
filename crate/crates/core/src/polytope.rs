//! Geometry of the dual feasible region `U = {lambda : |<lambda, g_k>| <= rho, k in N}`
//! where `g_k = (a_{1,k}, ..., a_{m,k})` is the k-th column of `A`.
//!
//! `U_n` denotes the intersection of the first `n` slabs (optionally with the
//! box `|lambda_j| <= 1`). Its vertices are enumerated either by brute force
//! over hyperplane subsets (small `m`, used as an oracle) or by the double
//! description method on the homogenized cone
//! `{(lambda, t) : <g, lambda> - rho t <= 0, t >= 0}`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::norms::{dot, DenseVec};
use crate::operators::RowFamily;

/// Euclidean tolerance under which two vertices are the same point.
pub const VERTEX_MATCH_TOL: f64 = 1e-7;
/// Relative tolerance for `S(l) = S(l+1)`.
pub const OBJECTIVE_STABLE_TOL: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSystem {
    pub normals: Vec<Vec<f64>>,
    pub half_width: f64,
    pub with_box: bool,
}

impl SlabSystem {
    pub fn new(normals: Vec<Vec<f64>>, half_width: f64, with_box: bool) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidArgument("slab half width must be positive".into()));
        }
        let m = normals.first().map(|g| g.len()).unwrap_or(0);
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one nonempty normal".into()));
        }
        if let Some(g) = normals.iter().find(|g| g.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, actual: g.len() });
        }
        Ok(SlabSystem { normals, half_width, with_box })
    }

    /// The first `n` column normals of a row family.
    pub fn from_rows(rows: &RowFamily, n: usize, rho: f64, with_box: bool) -> Result<Self> {
        Self::new((1..=n).map(|k| rows.column(k)).collect(), rho, with_box)
    }

    pub fn dim(&self) -> usize {
        self.normals[0].len()
    }

    /// Inequalities `a . lambda <= b` of `U_n`: box rows first (if any), then
    /// `+g_k`, `-g_k` for `k = 1..=n`.
    fn inequalities(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        let m = self.dim();
        let mut out = Vec::new();
        if self.with_box {
            for j in 0..m {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                out.push((e.clone(), 1.0));
                e[j] = -1.0;
                out.push((e, 1.0));
            }
        }
        for g in self.normals.iter().take(n) {
            out.push((g.clone(), self.half_width));
            out.push((g.iter().map(|v| -v).collect(), self.half_width));
        }
        out
    }

    /// `U_n` is bounded iff its normals (with the box) span `R^m`.
    pub fn is_bounded(&self, n: usize) -> bool {
        if self.with_box {
            return true;
        }
        let m = self.dim();
        let k = n.min(self.normals.len());
        if k < m {
            return false;
        }
        let flat: Vec<f64> = self.normals[..k].iter().flatten().copied().collect();
        linalg::rank(&flat, k, m, 1e-12) == m
    }

    /// `max <objective, lambda>` over `U_n`.
    pub fn to_lp(&self, objective: &[f64], n: usize) -> LinearProgram {
        let m = self.dim();
        let mut lp = LinearProgram::new(objective.to_vec());
        if self.with_box {
            for j in 0..m {
                lp.set_bounds(j, -1.0, 1.0);
            }
        }
        for g in self.normals.iter().take(n) {
            lp.add_range(g.clone(), -self.half_width, self.half_width);
        }
        lp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    /// Sorted lexicographically.
    pub vertices: Vec<DenseVec>,
    /// `false` means a recession direction exists and no vertices are reported.
    pub bounded: bool,
}

impl VertexSet {
    fn unbounded() -> Self {
        VertexSet { vertices: Vec::new(), bounded: false }
    }

    fn from_points(mut pts: Vec<Vec<f64>>) -> Self {
        pts.sort_by(|a, b| lex_cmp(a, b));
        VertexSet { vertices: pts.into_iter().map(DenseVec).collect(), bounded: true }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Same vertices up to `tol` in Euclidean distance.
    pub fn same_as(&self, other: &VertexSet, tol: f64) -> bool {
        if self.bounded != other.bounded || self.len() != other.len() {
            return false;
        }
        // sorted by first coordinate; search a window around each point
        let key = |v: &DenseVec| v.first().copied().unwrap_or(0.0);
        self.vertices.iter().all(|v| {
            let lo = other.vertices.partition_point(|w| key(w) < key(v) - tol);
            other.vertices[lo..]
                .iter()
                .take_while(|w| key(w) <= key(v) + tol)
                .any(|w| dist(v, w) <= tol)
        })
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// All `m`-subsets of the bounding hyperplanes.
    BruteForce,
    /// Incremental double description.
    DoubleDescription,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_dim_brute: usize,
    pub max_dim_dd: usize,
    pub max_rays: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits { max_dim_brute: 3, max_dim_dd: 16, max_rays: 20_000_000 }
    }
}

/// Vertices of `U_n`.
pub fn vertex_enumerate(slabs: &SlabSystem, n: usize) -> Result<VertexSet> {
    vertex_enumerate_with(slabs, n, Backend::DoubleDescription, &EnumerationLimits::default())
}

pub fn vertex_enumerate_with(
    slabs: &SlabSystem,
    n: usize,
    backend: Backend,
    limits: &EnumerationLimits,
) -> Result<VertexSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if n > slabs.normals.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} slabs but only {} normals are available",
            slabs.normals.len()
        )));
    }
    if !slabs.is_bounded(n) {
        return Ok(VertexSet::unbounded());
    }
    match backend {
        Backend::BruteForce => {
            if slabs.dim() > limits.max_dim_brute {
                return Err(Error::LimitExceeded(format!(
                    "brute-force enumeration supports m <= {}, got {}",
                    limits.max_dim_brute,
                    slabs.dim()
                )));
            }
            Ok(brute_force_vertices(&slabs.inequalities(n), slabs.dim()))
        }
        Backend::DoubleDescription => {
            let mut dd = DoubleDescription::new(slabs, n, limits)?;
            let mut last = None;
            dd.run(|k, verts| {
                if k == n {
                    last = Some(verts);
                }
                true
            })?;
            Ok(last.expect("snapshot for the final slab"))
        }
    }
}

/// Vertex sets of `U_n` for every `n` in `ns`, from one incremental run.
/// Entries are `None` when `U_n` is unbounded.
pub fn vertex_sweep(
    slabs: &SlabSystem,
    ns: &[usize],
    limits: &EnumerationLimits,
) -> Result<Vec<(usize, Option<usize>)>> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    if n_max == 0 {
        return Ok(Vec::new());
    }
    let mut counts: Vec<(usize, Option<usize>)> = ns.iter().map(|&n| (n, None)).collect();
    if !slabs.is_bounded(n_max) {
        return Ok(counts);
    }
    let mut dd = DoubleDescription::new(slabs, n_max, limits)?;
    dd.run(|k, verts| {
        for c in counts.iter_mut() {
            if c.0 == k {
                c.1 = Some(verts.len());
            }
        }
        true
    })?;
    for c in counts.iter_mut() {
        if !slabs.is_bounded(c.0) {
            c.1 = None;
        }
    }
    Ok(counts)
}

fn brute_force_vertices(ineqs: &[(Vec<f64>, f64)], m: usize) -> VertexSet {
    let r = ineqs.len();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    if r < m {
        return VertexSet::from_points(pts);
    }
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let mut mat = Vec::with_capacity(m * m);
        let mut rhs = Vec::with_capacity(m);
        for &i in &subset {
            mat.extend_from_slice(&ineqs[i].0);
            rhs.push(ineqs[i].1);
        }
        if let Some(x) = linalg::solve(&mat, &rhs, m, 1e-12) {
            let feasible = ineqs.iter().all(|(a, b)| dot(a, &x) <= b + ZERO_TOL);
            if feasible && !pts.iter().any(|p| dist(p, &x) <= VERTEX_MATCH_TOL) {
                pts.push(x);
            }
        }
        let mut i = m;
        loop {
            if i == 0 {
                return VertexSet::from_points(pts);
            }
            i -= 1;
            if subset[i] < r - m + i {
                break;
            }
        }
        subset[i] += 1;
        for k in i + 1..m {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// Fixed-width bitset over constraint indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(width: usize) -> Self {
        Bits(vec![0; width.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }
    fn and_count(&self, o: &Bits) -> usize {
        self.0.iter().zip(&o.0).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b)
        })
    }
}

struct Ray {
    v: Vec<f64>,
    zeros: Bits,
}

/// Incremental double description of the homogenized cone of `U_n`.
struct DoubleDescription {
    d: usize,
    /// Homogenized rows `h . (lambda, t) <= 0`; row 0 is `-t <= 0`.
    rows: Vec<Vec<f64>>,
    /// Number of rows belonging to each prefix: `slab_end[k]` rows cover slabs `1..=k`.
    slab_end: Vec<usize>,
    first_bounded: usize,
    max_rays: usize,
}

impl DoubleDescription {
    fn new(slabs: &SlabSystem, n: usize, limits: &EnumerationLimits) -> Result<Self> {
        let m = slabs.dim();
        if m > limits.max_dim_dd {
            return Err(Error::LimitExceeded(format!(
                "double description configured for m <= {}, got {m}",
                limits.max_dim_dd
            )));
        }
        let d = m + 1;
        let mut rows = Vec::new();
        let mut t = vec![0.0; d];
        t[m] = -1.0;
        rows.push(t);
        let box_rows = if slabs.with_box { 2 * m } else { 0 };
        for (a, b) in slabs.inequalities(n) {
            let mut h = a;
            h.push(-b);
            rows.push(h);
        }
        let slab_end = (0..=n).map(|k| 1 + box_rows + 2 * k).collect();
        let first_bounded = (1..=n).find(|&k| slabs.is_bounded(k)).unwrap_or(n);
        Ok(DoubleDescription { d, rows, slab_end, first_bounded, max_rays: limits.max_rays })
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Processes the rows in order, calling `snapshot(k, vertices)` after
    /// the rows of slab `k` for every `k >= first_bounded`. Stops early when
    /// `snapshot` returns `false`.
    fn run<F: FnMut(usize, VertexSet) -> bool>(&mut self, mut snapshot: F) -> Result<()> {
        let d = self.d;
        let total = self.rows.len();
        // greedy initial basis in row order
        let mut init: Vec<usize> = Vec::new();
        let mut flat: Vec<f64> = Vec::new();
        for (i, h) in self.rows.iter().enumerate() {
            let mut trial = flat.clone();
            trial.extend_from_slice(h);
            if linalg::rank(&trial, init.len() + 1, d, 1e-12) == init.len() + 1 {
                init.push(i);
                flat = trial;
                if init.len() == d {
                    break;
                }
            }
        }
        if init.len() < d {
            return Err(Error::Numerical("homogenized constraints are rank deficient".into()));
        }
        let last_init = *init.last().unwrap();
        let first_snapshot = self
            .slab_end
            .iter()
            .position(|&e| e > last_init)
            .unwrap_or(self.slab_end.len() - 1)
            .max(self.first_bounded);

        // rays of the simplicial cone {y : R y <= 0} are the columns of -R^{-1}
        let inv = linalg::invert(&flat, d, 1e-14)
            .ok_or_else(|| Error::Numerical("initial basis is singular".into()))?;
        let mut rays: Vec<Ray> = Vec::with_capacity(d);
        for c in 0..d {
            let mut v: Vec<f64> = (0..d).map(|r| -inv[r * d + c]).collect();
            let s = Self::norm(&v);
            v.iter_mut().for_each(|x| *x /= s);
            let mut zeros = Bits::new(total);
            for (p, &row) in init.iter().enumerate() {
                if p != c {
                    zeros.set(row);
                }
            }
            rays.push(Ray { v, zeros });
        }
        let in_init: Vec<bool> = (0..total).map(|i| init.contains(&i)).collect();

        for i in 0..total {
            if !in_init[i] {
                rays = self.add_row(rays, i)?;
                if rays.len() > self.max_rays {
                    return Err(Error::LimitExceeded(format!(
                        "double description exceeded {} rays",
                        self.max_rays
                    )));
                }
            }
            // snapshot when row i closes slab k
            if let Some(k) = self.slab_end.iter().position(|&e| e == i + 1) {
                if k >= first_snapshot && k >= 1 && !snapshot(k, self.vertices(&rays)) {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn vertices(&self, rays: &[Ray]) -> VertexSet {
        let m = self.d - 1;
        let mut pts = Vec::with_capacity(rays.len());
        for r in rays {
            let t = r.v[m];
            if t <= ZERO_TOL {
                return VertexSet::unbounded();
            }
            pts.push(r.v[..m].iter().map(|x| x / t).collect());
        }
        VertexSet::from_points(pts)
    }

    fn add_row(&self, rays: Vec<Ray>, i: usize) -> Result<Vec<Ray>> {
        let d = self.d;
        let h = &self.rows[i];
        let hn = Self::norm(h);
        let vals: Vec<f64> = rays.iter().map(|r| dot(h, &r.v)).collect();
        let class: Vec<i8> = vals
            .iter()
            .map(|&v| {
                if v > ZERO_TOL * hn {
                    1
                } else if v < -ZERO_TOL * hn {
                    -1
                } else {
                    0
                }
            })
            .collect();
        if class.iter().all(|&c| c <= 0) {
            // redundant row: keep everything, mark the tight rays
            let mut out = rays;
            for (r, &c) in out.iter_mut().zip(&class) {
                if c == 0 {
                    r.zeros.set(i);
                }
            }
            return Ok(out);
        }
        let pos: Vec<usize> = (0..rays.len()).filter(|&r| class[r] > 0).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&r| class[r] < 0).collect();

        let pairs = self.adjacent_pairs(&rays, &pos, &neg);

        let mut out: Vec<Ray> = Vec::with_capacity(rays.len() + pairs.len());
        for &(p, q) in &pairs {
            let (vp, vq) = (vals[p], vals[q]);
            let mut v: Vec<f64> = (0..d).map(|c| vp * rays[q].v[c] - vq * rays[p].v[c]).collect();
            let s = Self::norm(&v);
            if s == 0.0 {
                return Err(Error::Numerical("degenerate ray combination".into()));
            }
            v.iter_mut().for_each(|x| *x /= s);
            let mut zeros = rays[p].zeros.and(&rays[q].zeros);
            zeros.set(i);
            out.push(Ray { v, zeros });
        }
        for (idx, mut r) in rays.into_iter().enumerate() {
            match class[idx] {
                1 => continue,
                0 => {
                    r.zeros.set(i);
                    out.push(r);
                }
                _ => out.push(r),
            }
        }
        Ok(out)
    }

    /// Adjacent (positive, negative) ray pairs: their common zero set has
    /// rank `d - 2`. Rays with exactly `d - 1` zeros are matched through
    /// shared `(d-2)`-subsets; rays with more zeros are checked pairwise.
    fn adjacent_pairs(&self, rays: &[Ray], pos: &[usize], neg: &[usize]) -> Vec<(usize, usize)> {
        let d = self.d;
        let simple = |r: usize| rays[r].zeros.count() == d - 1;
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        let mut faces: HashMap<Bits, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for (list, is_pos) in [(pos, true), (neg, false)] {
            for &r in list.iter().filter(|&&r| simple(r)) {
                for e in rays[r].zeros.ones() {
                    let mut key = rays[r].zeros.clone();
                    key.clear(e);
                    let entry = faces.entry(key).or_default();
                    if is_pos {
                        entry.0.push(r);
                    } else {
                        entry.1.push(r);
                    }
                }
            }
        }
        for (p_list, n_list) in faces.values() {
            for &p in p_list {
                for &q in n_list {
                    pairs.push((p, q));
                }
            }
        }

        let degenerate_pos: Vec<usize> = pos.iter().copied().filter(|&r| !simple(r)).collect();
        let degenerate_neg: Vec<usize> = neg.iter().copied().filter(|&r| !simple(r)).collect();
        for &p in &degenerate_pos {
            for &q in neg {
                if self.adjacent(rays, p, q) {
                    pairs.push((p, q));
                }
            }
        }
        for &q in &degenerate_neg {
            for &p in pos.iter().filter(|&&p| simple(p)) {
                if self.adjacent(rays, p, q) {
                    pairs.push((p, q));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    fn adjacent(&self, rays: &[Ray], p: usize, q: usize) -> bool {
        let d = self.d;
        if rays[p].zeros.and_count(&rays[q].zeros) < d - 2 {
            return false;
        }
        let common = rays[p].zeros.and(&rays[q].zeros);
        let idx: Vec<usize> = common.ones().collect();
        let flat: Vec<f64> = idx.iter().flat_map(|&i| self.rows[i].iter().copied()).collect();
        linalg::rank(&flat, idx.len(), d, 1e-9) == d - 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexStabilization {
    pub n0: usize,
    pub final_count: usize,
    /// `(n, vertex count or None if unbounded)` for each `n` examined.
    pub counts: Vec<(usize, Option<usize>)>,
}

/// Smallest `n >= n_start` with `U_n` and `U_{n+1}` having the same vertices.
pub fn find_n0_by_vertices(
    rows: &RowFamily,
    rho: f64,
    n_start: usize,
    n_cap: usize,
    with_box: bool,
    limits: &EnumerationLimits,
) -> Result<VertexStabilization> {
    if n_start == 0 || n_cap <= n_start {
        return Err(Error::InvalidArgument("need 1 <= n_start < n_cap".into()));
    }
    let slabs = SlabSystem::from_rows(rows, n_cap, rho, with_box)?;
    let mut dd = DoubleDescription::new(&slabs, n_cap, limits)?;
    let mut counts: Vec<(usize, Option<usize>)> = Vec::new();
    let mut prev: Option<(usize, VertexSet)> = None;
    let mut found: Option<(usize, usize)> = None;
    dd.run(|k, verts| {
        if k < n_start {
            return true;
        }
        counts.push((k, verts.bounded.then(|| verts.len())));
        if let Some((pk, pv)) = &prev {
            if pv.bounded && verts.bounded && pv.same_as(&verts, VERTEX_MATCH_TOL) {
                found = Some((*pk, pv.len()));
                return false;
            }
        }
        prev = Some((k, verts));
        true
    })?;
    match found {
        Some((n0, final_count)) => Ok(VertexStabilization { n0, final_count, counts }),
        None => Err(Error::NotStabilized { what: "vertex set", cap: n_cap }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveStabilization {
    pub n0: usize,
    /// `(l, S(l))` for every `l` evaluated.
    pub sweep: Vec<(usize, f64)>,
}

/// `S(l) = max <y0, lambda>` over the box and the first `l` slabs.
pub fn objective_at(rows: &RowFamily, y0: &[f64], rho: f64, l: usize, with_box: bool) -> Result<f64> {
    let slabs = SlabSystem::from_rows(rows, l, rho, with_box)?;
    let res = solve_lp(&slabs.to_lp(y0, l))?;
    match res.status {
        LpStatus::Optimal => Ok(res.value),
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::Infeasible => Err(Error::Infeasible),
    }
}

/// Smallest `l >= l_start` with `S(l) = S(l+1) = S(l+2)` to relative `tol`.
pub fn find_n0_by_objective(
    rows: &RowFamily,
    y0: &[f64],
    rho: f64,
    l_start: usize,
    l_cap: usize,
    tol: f64,
    with_box: bool,
) -> Result<ObjectiveStabilization> {
    if l_start == 0 {
        return Err(Error::InvalidArgument("l_start must be at least 1".into()));
    }
    if y0.len() != rows.m() {
        return Err(Error::DimensionMismatch { expected: rows.m(), actual: y0.len() });
    }
    let same = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let mut sweep: Vec<(usize, f64)> = Vec::new();
    let mut l = l_start;
    while l <= l_cap {
        let s = objective_at(rows, y0, rho, l, with_box)?;
        sweep.push((l, s));
        let k = sweep.len();
        if k >= 3 && same(sweep[k - 3].1, sweep[k - 2].1) && same(sweep[k - 2].1, sweep[k - 1].1) {
            return Ok(ObjectiveStabilization { n0: sweep[k - 3].0, sweep });
        }
        l += 1;
    }
    Err(Error::NotStabilized { what: "dual objective S(l)", cap: l_cap })
}

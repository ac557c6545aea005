//! Vector types for `R^m` and finitely supported sequences in `l1(N)`, the
//! `l1`/`l2`/`l_inf` norms on them, direct-sum norms and norming functionals.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for norming checks on unit-scale quantities.
pub const NORMING_TOL: f64 = 1e-10;

/// A dense real vector of fixed length (data, multipliers, finite iterates).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVec(pub Vec<f64>);

impl DenseVec {
    pub fn new(values: Vec<f64>) -> Self {
        DenseVec(values)
    }

    pub fn zeros(len: usize) -> Self {
        DenseVec(vec![0.0; len])
    }

    /// Unit coordinate vector; `index` is zero-based.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        DenseVec(v)
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L1 => self.l1_norm(),
            NormKind::L2 => self.l2_norm(),
            NormKind::LInf => self.sup_norm(),
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn scaled(&self, c: f64) -> DenseVec {
        DenseVec(self.0.iter().map(|v| c * v).collect())
    }

    pub fn sub(&self, other: &[f64]) -> DenseVec {
        DenseVec(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVec {
    fn from(v: Vec<f64>) -> Self {
        DenseVec(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finitely supported real sequence indexed from 1.
///
/// Indices are strictly increasing and no stored value is exactly zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseSeq {
    entries: Vec<(usize, f64)>,
}

impl SparseSeq {
    pub fn zero() -> Self {
        SparseSeq { entries: Vec::new() }
    }

    /// Builds a sequence from `(index, value)` pairs in any order. Exact zeros
    /// are dropped; index 0 and repeated indices are rejected.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(k, _)| k);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!("repeated index {}", w[0].0)));
            }
        }
        if entries.first().is_some_and(|&(k, _)| k == 0) {
            return Err(Error::InvalidArgument("sequence indices start at 1".into()));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry".into()));
        }
        Ok(SparseSeq { entries })
    }

    /// Sequence whose first `values.len()` terms are `values`.
    pub fn from_prefix(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i + 1, v))
            .collect();
        SparseSeq { entries }
    }

    /// Places `values[j]` at `indices[j]`; `indices` must be strictly increasing.
    pub fn scatter(indices: &[usize], values: &[f64]) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                actual: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.first() == Some(&0) {
            return Err(Error::InvalidArgument(
                "scatter indices must be positive and strictly increasing".into(),
            ));
        }
        let entries = indices
            .iter()
            .zip(values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&k, &v)| (k, v))
            .collect();
        Ok(SparseSeq { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(k, _)| k).collect()
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(k, _)| k) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.abs()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, (_, v)| acc.max(v.abs()))
    }

    /// Drops entries with magnitude at or below `threshold`.
    pub fn pruned(&self, threshold: f64) -> SparseSeq {
        SparseSeq {
            entries: self.entries.iter().copied().filter(|(_, v)| v.abs() > threshold).collect(),
        }
    }

    /// `l2` distance between two finitely supported sequences.
    pub fn l2_distance(&self, other: &SparseSeq) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut acc = 0.0;
        loop {
            let d = match (a.get(i), b.get(j)) {
                (Some(&(ka, va)), Some(&(kb, vb))) => {
                    if ka == kb {
                        i += 1;
                        j += 1;
                        va - vb
                    } else if ka < kb {
                        i += 1;
                        va
                    } else {
                        j += 1;
                        vb
                    }
                }
                (Some(&(_, va)), None) => {
                    i += 1;
                    va
                }
                (None, Some(&(_, vb))) => {
                    j += 1;
                    vb
                }
                (None, None) => break,
            };
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Pairing `<x, c>` against a sequence given by its values at arbitrary indices.
    pub fn pair_with<F: Fn(usize) -> f64>(&self, c: F) -> f64 {
        self.entries.iter().map(|&(k, v)| v * c(k)).sum()
    }
}

/// Norms that may equip a component of a direct sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    LInf,
}

impl NormKind {
    pub fn dual(self) -> NormKind {
        match self {
            NormKind::L1 => NormKind::LInf,
            NormKind::L2 => NormKind::L2,
            NormKind::LInf => NormKind::L1,
        }
    }

    /// Unit-norm functional `phi` in the dual norm with `<v, phi> = |v|`.
    /// Returns the zero vector for `v = 0`.
    pub fn norming_functional(self, v: &[f64]) -> DenseVec {
        let mut out = vec![0.0; v.len()];
        match self {
            NormKind::L1 => {
                for (o, &x) in out.iter_mut().zip(v) {
                    if x != 0.0 {
                        *o = x.signum();
                    }
                }
            }
            NormKind::L2 => {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    for (o, &x) in out.iter_mut().zip(v) {
                        *o = x / n;
                    }
                }
            }
            NormKind::LInf => {
                let mut best: Option<(usize, f64)> = None;
                for (i, &x) in v.iter().enumerate() {
                    if x != 0.0 && best.map_or(true, |(_, b)| x.abs() > b) {
                        best = Some((i, x.abs()));
                    }
                }
                if let Some((i, _)) = best {
                    out[i] = v[i].signum();
                }
            }
        }
        DenseVec(out)
    }
}

/// Hölder conjugate exponent `p'` with `1/p + 1/p' = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("direct-sum exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// `(a^p + b^p)^(1/p)` for finite `p`, `max(a, b)` for `p = inf`.
///
/// `a_val` and `b_val` are already-computed component norms.
pub fn directsum_norm(a_val: f64, b_val: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(a_val.max(b_val));
    }
    if p == 1.0 {
        return Ok(a_val + b_val);
    }
    let scale = a_val.max(b_val);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // scaled to avoid overflow for large p
    let s = (a_val / scale).powf(p) + (b_val / scale).powf(p);
    Ok(scale * s.powf(1.0 / p))
}

/// Norm on a direct sum `A (+)_p B` of two finite-dimensional normed spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectSumNorm {
    p: f64,
    pub left: NormKind,
    pub right: NormKind,
}

impl DirectSumNorm {
    pub fn new(p: f64, left: NormKind, right: NormKind) -> Result<Self> {
        check_exponent(p)?;
        Ok(DirectSumNorm { p, left, right })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn conjugate(&self) -> f64 {
        conjugate_exponent(self.p)
    }

    /// The dual space norm `A* (+)_p' B*`.
    pub fn dual(&self) -> DirectSumNorm {
        DirectSumNorm {
            p: self.conjugate(),
            left: self.left.dual(),
            right: self.right.dual(),
        }
    }

    pub fn norm(&self, a: &[f64], b: &[f64]) -> f64 {
        let a_val = DenseVec(a.to_vec()).norm(self.left);
        let b_val = DenseVec(b.to_vec()).norm(self.right);
        directsum_norm(a_val, b_val, self.p).expect("exponent validated at construction")
    }

    /// A norming functional `(lambda, mu)` in the dual direct sum for `(a, b) != 0`.
    ///
    /// For `1 < p < inf` the components are the unit norming functionals of
    /// `a` and `b` scaled by `(1 + |b|^p/|a|^p)^(-1/p')` and
    /// `(1 + |a|^p/|b|^p)^(-1/p')` respectively. For `p = inf` the mass goes to
    /// the strictly larger component (split evenly on a tie); for `p = 1`
    /// both nonzero components receive a unit functional.
    pub fn norming_functional(&self, a: &[f64], b: &[f64]) -> Result<(DenseVec, DenseVec)> {
        let a_val = DenseVec(a.to_vec()).norm(self.left);
        let b_val = DenseVec(b.to_vec()).norm(self.right);
        if a_val == 0.0 && b_val == 0.0 {
            return Err(Error::InvalidArgument(
                "(0, 0) has no norming functional".into(),
            ));
        }
        let phi_a = self.left.norming_functional(a);
        let phi_b = self.right.norming_functional(b);
        let (sa, sb) = if self.p.is_infinite() {
            if a_val > b_val {
                (1.0, 0.0)
            } else if a_val < b_val {
                (0.0, 1.0)
            } else {
                (0.5, 0.5)
            }
        } else if self.p == 1.0 {
            (
                if a_val > 0.0 { 1.0 } else { 0.0 },
                if b_val > 0.0 { 1.0 } else { 0.0 },
            )
        } else {
            let q = self.conjugate();
            let scale = |own: f64, other: f64| {
                if own == 0.0 {
                    0.0
                } else {
                    (1.0 + (other / own).powf(self.p)).powf(-1.0 / q)
                }
            };
            (scale(a_val, b_val), scale(b_val, a_val))
        };
        Ok((phi_a.scaled(sa), phi_b.scaled(sb)))
    }
}

/// Convenience wrapper: norming functional for `(a, b)` in `l1 (+)_p l1`.
pub fn norming_functional_directsum(a: &DenseVec, b: &DenseVec, p: f64) -> Result<(DenseVec, DenseVec)> {
    DirectSumNorm::new(p, NormKind::L1, NormKind::L1)?.norming_functional(a, b)
}

/// Sign sequence norming a nonzero `x` in `l1`: `sign(x_k)` on `supp(x)`.
pub fn l1_norming_sign(x: &SparseSeq) -> SparseSeq {
    SparseSeq {
        entries: x.entries().iter().map(|&(k, v)| (k, v.signum())).collect(),
    }
}

//! The semi-infinite measurement operator `A: l1(N) -> R^m`, given by `m`
//! closed-form rows in `c0(N)`, and its pre-adjoint `A_* : R^m -> c0(N)`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{DenseVec, SparseSeq};

pub const DEFAULT_SUP_REL_TOL: f64 = 1e-9;
pub const DEFAULT_SUPPORT_REL_TOL: f64 = 1e-6;
pub const DEFAULT_K_MAX: usize = 10_000_000;

/// Source of row entries `a_{j,k}` (both indices 1-based) together with a
/// nonincreasing envelope `e(k) -> 0` such that `|a_{j,k}| <= e(k)`.
pub trait RowSource: Send + Sync {
    fn m(&self) -> usize;
    fn eval(&self, j: usize, k: usize) -> f64;
    fn envelope(&self, k: usize) -> f64;
    fn name(&self) -> String;
}

/// The `m` rows of a semi-infinite matrix. Cheap to clone.
#[derive(Clone)]
pub struct RowFamily {
    source: Arc<dyn RowSource>,
}

impl fmt::Debug for RowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RowFamily")
            .field("source", &self.source.name())
            .field("m", &self.m())
            .finish()
    }
}

impl RowFamily {
    pub fn new<S: RowSource + 'static>(source: S) -> Self {
        RowFamily { source: Arc::new(source) }
    }

    pub fn m(&self) -> usize {
        self.source.m()
    }

    #[inline]
    pub fn eval(&self, j: usize, k: usize) -> f64 {
        self.source.eval(j, k)
    }

    pub fn envelope(&self, k: usize) -> f64 {
        self.source.envelope(k)
    }

    pub fn name(&self) -> String {
        self.source.name()
    }

    /// Column `k` of the matrix, i.e. the slab normal `g_k = (a_{j,k})_j`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (1..=self.m()).map(|j| self.eval(j, k)).collect()
    }

    /// `(A_* lambda)_k`.
    #[inline]
    pub fn adjoint_entry(&self, lambda: &[f64], k: usize) -> f64 {
        lambda
            .iter()
            .enumerate()
            .map(|(j, &l)| if l == 0.0 { 0.0 } else { l * self.eval(j + 1, k) })
            .sum()
    }
}

/// Rows `a_{j,k} = cos(jk)/k` and `a_{j+m/2,k} = sin(jk)/k`, `j <= m/2`.
#[derive(Debug, Clone, Copy)]
pub struct TrigRows {
    m: usize,
}

impl TrigRows {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "trig rows need a positive even m, got {m}"
            )));
        }
        Ok(TrigRows { m })
    }
}

impl RowSource for TrigRows {
    fn m(&self) -> usize {
        self.m
    }

    #[inline]
    fn eval(&self, j: usize, k: usize) -> f64 {
        let half = self.m / 2;
        let kf = k as f64;
        if j <= half {
            ((j * k) as f64).cos() / kf
        } else {
            (((j - half) * k) as f64).sin() / kf
        }
    }

    fn envelope(&self, k: usize) -> f64 {
        1.0 / k as f64
    }

    fn name(&self) -> String {
        format!("trig(m={})", self.m)
    }
}

/// Coordinate sampling rows `a_j = e_j`.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateRows {
    m: usize,
}

impl CoordinateRows {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        Ok(CoordinateRows { m })
    }
}

impl RowSource for CoordinateRows {
    fn m(&self) -> usize {
        self.m
    }

    fn eval(&self, j: usize, k: usize) -> f64 {
        if j == k {
            1.0
        } else {
            0.0
        }
    }

    fn envelope(&self, k: usize) -> f64 {
        if k <= self.m {
            1.0
        } else {
            0.0
        }
    }

    fn name(&self) -> String {
        format!("coordinate(m={})", self.m)
    }
}

/// Rows given by an explicit finite prefix of columns, zero beyond it.
#[derive(Debug, Clone)]
pub struct FiniteRows {
    columns: Vec<Vec<f64>>,
    suffix_max: Vec<f64>,
    m: usize,
}

impl FiniteRows {
    /// `columns[k-1]` is column `k`; every column has length `m`.
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.first().map(|c| c.len()).unwrap_or(0);
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one nonempty column".into()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, actual: c.len() });
        }
        let mut suffix_max = vec![0.0f64; columns.len() + 1];
        for k in (0..columns.len()).rev() {
            let col_max = columns[k].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            suffix_max[k] = suffix_max[k + 1].max(col_max);
        }
        Ok(FiniteRows { columns, suffix_max, m })
    }
}

impl RowSource for FiniteRows {
    fn m(&self) -> usize {
        self.m
    }

    fn eval(&self, j: usize, k: usize) -> f64 {
        self.columns.get(k - 1).map_or(0.0, |c| c[j - 1])
    }

    fn envelope(&self, k: usize) -> f64 {
        self.suffix_max.get(k - 1).copied().unwrap_or(0.0)
    }

    fn name(&self) -> String {
        format!("finite(m={}, n={})", self.m, self.columns.len())
    }
}

/// Row family named by a built-in generator plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum RowSpec {
    Trig { m: usize },
    Coordinate { m: usize },
}

impl RowSpec {
    pub fn m(&self) -> usize {
        match *self {
            RowSpec::Trig { m } | RowSpec::Coordinate { m } => m,
        }
    }

    pub fn build(&self) -> Result<RowFamily> {
        Ok(match *self {
            RowSpec::Trig { m } => RowFamily::new(TrigRows::new(m)?),
            RowSpec::Coordinate { m } => RowFamily::new(CoordinateRows::new(m)?),
        })
    }
}

/// `A x` for finitely supported `x`.
pub fn apply_a(rows: &RowFamily, x: &SparseSeq) -> DenseVec {
    let m = rows.m();
    let mut out = vec![0.0; m];
    for &(k, v) in x.entries() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += rows.eval(j + 1, k) * v;
        }
    }
    DenseVec(out)
}

/// First `k_len` entries of `A_* lambda = sum_j lambda_j a_j`.
pub fn apply_astar_prefix(rows: &RowFamily, lambda: &[f64], k_len: usize) -> Result<DenseVec> {
    check_len(rows, lambda)?;
    Ok(DenseVec(
        (1..=k_len).map(|k| rows.adjoint_entry(lambda, k)).collect(),
    ))
}

fn check_len(rows: &RowFamily, lambda: &[f64]) -> Result<()> {
    if lambda.len() != rows.m() {
        return Err(Error::DimensionMismatch { expected: rows.m(), actual: lambda.len() });
    }
    Ok(())
}

/// Certified evaluation of `|A_* lambda|_inf`.
#[derive(Debug, Clone)]
pub struct SupNormCertificate {
    pub value: f64,
    /// Indices `k <= k_cert` with `|mu_k| >= value (1 - rel_tol)`.
    pub argmax: Vec<usize>,
    pub k_cert: usize,
    pub rel_tol: f64,
    /// `mu_k` for `k = 1..=k_cert`.
    pub prefix: Vec<f64>,
    lambda: Vec<f64>,
    lambda_l1: f64,
    rows: RowFamily,
    k_max: usize,
}

impl SupNormCertificate {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `mu = A_* lambda` as a sequence truncated at `k_cert`.
    pub fn prefix_seq(&self) -> SparseSeq {
        SparseSeq::from_prefix(&self.prefix)
    }

    fn certified_at(&self, k: usize, threshold: f64) -> bool {
        self.lambda_l1 * self.rows.envelope(k + 1) < threshold
    }

    /// Scans further until no index beyond the prefix can reach `threshold`.
    fn extend_until(&mut self, threshold_factor: f64) -> Result<()> {
        let mut k = self.prefix.len();
        while !self.certified_at(k, self.value * threshold_factor) {
            if k >= self.k_max {
                return Err(Error::CertificationFailed { k_max: self.k_max });
            }
            let block = (k.max(64)).min(self.k_max - k);
            let vals = scan_block(&self.rows, &self.lambda, k + 1, block);
            for v in vals {
                k += 1;
                self.prefix.push(v);
                if v.abs() > self.value {
                    self.value = v.abs();
                }
                if self.certified_at(k, self.value * threshold_factor) {
                    break;
                }
            }
        }
        self.k_cert = self.k_cert.max(self.prefix.len());
        Ok(())
    }
}

fn scan_block(rows: &RowFamily, lambda: &[f64], first: usize, len: usize) -> Vec<f64> {
    const PAR_MIN: usize = 4096;
    if len * rows.m() < PAR_MIN {
        (first..first + len).map(|k| rows.adjoint_entry(lambda, k)).collect()
    } else {
        (first..first + len)
            .into_par_iter()
            .map(|k| rows.adjoint_entry(lambda, k))
            .collect()
    }
}

/// Computes `|A_* lambda|_inf` to relative accuracy `rel_tol`, scanning
/// prefixes until `|lambda|_1 e(K+1) < value (1 - rel_tol)`, which certifies
/// that no later index can exceed the reported maximum.
pub fn sup_norm_certified(rows: &RowFamily, lambda: &[f64], rel_tol: f64) -> Result<SupNormCertificate> {
    sup_norm_certified_with_cap(rows, lambda, rel_tol, DEFAULT_K_MAX)
}

pub fn sup_norm_certified_with_cap(
    rows: &RowFamily,
    lambda: &[f64],
    rel_tol: f64,
    k_max: usize,
) -> Result<SupNormCertificate> {
    check_len(rows, lambda)?;
    if !(0.0..1.0).contains(&rel_tol) {
        return Err(Error::InvalidArgument(format!("rel_tol must lie in [0, 1), got {rel_tol}")));
    }
    let lambda_l1: f64 = lambda.iter().map(|v| v.abs()).sum();
    if lambda_l1 == 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonzero".into()));
    }
    let mut cert = SupNormCertificate {
        value: 0.0,
        argmax: Vec::new(),
        k_cert: 0,
        rel_tol,
        prefix: Vec::new(),
        lambda: lambda.to_vec(),
        lambda_l1,
        rows: rows.clone(),
        k_max,
    };
    // value == 0 never certifies, so the scan always covers at least one index
    cert.extend_until(1.0 - rel_tol)?;
    cert.k_cert = cert.prefix.len();
    cert.argmax = indices_at_least(&cert.prefix, cert.value * (1.0 - rel_tol));
    Ok(cert)
}

fn indices_at_least(prefix: &[f64], threshold: f64) -> Vec<usize> {
    prefix
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Peak set `N(mu) = {k : |mu_k| >= |mu|_inf (1 - rel_tol_support)}`, ascending.
///
/// The scan is extended when the looser tolerance needs a longer certified
/// prefix than the sup-norm itself did.
pub fn peak_set(cert: &mut SupNormCertificate, rel_tol_support: f64) -> Result<Vec<usize>> {
    if cert.value <= 0.0 {
        return Err(Error::InvalidArgument("peak set of the zero sequence".into()));
    }
    let tol = rel_tol_support.max(cert.rel_tol);
    cert.extend_until(1.0 - tol)?;
    Ok(indices_at_least(&cert.prefix, cert.value * (1.0 - tol)))
}

/// Dense `m x n` truncation `h_{ij} = a_{i, k_j}` on a column index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMatrix {
    pub columns_index: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl TruncatedMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(TruncatedMatrix {
            columns_index: (1..=cols).collect(),
            rows,
            cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `H z`.
    pub fn mul(&self, z: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `H^T v`.
    pub fn mul_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// Spectral norm estimate by `steps` power iterations on `H^T H` from the
    /// normalized all-ones vector.
    pub fn spectral_norm(&self, steps: usize) -> f64 {
        if self.cols == 0 {
            return 0.0;
        }
        let mut x = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..steps {
            let y = self.mul_t(&self.mul(&x));
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            sigma = n.sqrt();
            x = y.into_iter().map(|v| v / n).collect();
        }
        // one final Rayleigh evaluation |Hx| for the converged direction
        let hx = self.mul(&x);
        sigma.max(hx.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// `A_c`: the columns of `A` on the (ascending, nonempty) index set `n_set`.
pub fn truncate_matrix(rows: &RowFamily, n_set: &[usize]) -> Result<TruncatedMatrix> {
    if n_set.is_empty() {
        return Err(Error::InvalidArgument("truncation index set is empty".into()));
    }
    if n_set.windows(2).any(|w| w[0] >= w[1]) || n_set[0] == 0 {
        return Err(Error::InvalidArgument(
            "truncation indices must be positive and ascending".into(),
        ));
    }
    let (m, n) = (rows.m(), n_set.len());
    let mut data = Vec::with_capacity(m * n);
    for j in 1..=m {
        data.extend(n_set.iter().map(|&k| rows.eval(j, k)));
    }
    Ok(TruncatedMatrix { columns_index: n_set.to_vec(), rows: m, cols: n, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(m: usize) -> RowFamily {
        RowFamily::new(TrigRows::new(m).unwrap())
    }

    #[test]
    fn apply_a_examples() {
        let rows = trig(2);
        assert!(apply_a(&rows, &SparseSeq::zero()).is_zero());
        let e1 = SparseSeq::from_entries(vec![(1, 1.0)]).unwrap();
        let y = apply_a(&rows, &e1);
        assert_eq!(y.0, vec![1f64.cos(), 1f64.sin()]);
        let x = SparseSeq::from_entries(vec![(1, 1.0), (2, 1.0)]).unwrap();
        let y = apply_a(&rows, &x);
        let oracle = [1f64.cos() + 2f64.cos() / 2.0, 1f64.sin() + 2f64.sin() / 2.0];
        assert!((y[0] - oracle[0]).abs() < 1e-15 && (y[1] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn astar_examples() {
        let rows = trig(4);
        assert!(apply_astar_prefix(&rows, &[0.0; 4], 10).unwrap().is_zero());
        let p = apply_astar_prefix(&rows, &[1.0, 0.0, 0.0, 0.0], 20).unwrap();
        for k in 1..=20 {
            let kf = k as f64;
            assert!((p[k - 1] - kf.cos() / kf).abs() < 1e-15);
        }
        let p = apply_astar_prefix(&rows, &[1.0, 0.0, 1.0, 0.0], 20).unwrap();
        for k in 1..=20 {
            let kf = k as f64;
            assert!((p[k - 1] - (kf.cos() + kf.sin()) / kf).abs() < 1e-15);
        }
        assert!(apply_astar_prefix(&rows, &[1.0], 3).is_err());
    }

    #[test]
    fn sup_norm_first_row() {
        let rows = trig(2);
        let cert = sup_norm_certified(&rows, &[1.0, 0.0], 1e-9).unwrap();
        // scan oracle over k <= 10^4
        let oracle = (1..=10_000).map(|k| ((k as f64).cos() / k as f64).abs()).fold(0.0, f64::max);
        assert_eq!(cert.value, oracle);
        assert!((cert.value - 0.540_302_305_9).abs() < 1e-9);
        assert_eq!(cert.argmax, vec![1]);
        assert_eq!(cert.k_cert, 1);

        let cert2 = sup_norm_certified(&rows, &[2.0, 0.0], 1e-9).unwrap();
        assert_eq!(cert2.value, 2.0 * cert.value);
        assert_eq!(cert2.argmax, cert.argmax);
    }

    #[test]
    fn sup_norm_rejects_zero() {
        assert!(sup_norm_certified(&trig(2), &[0.0, 0.0], 1e-9).is_err());
    }

    #[test]
    fn bad_envelope_fails_certification() {
        struct Flat;
        impl RowSource for Flat {
            fn m(&self) -> usize {
                1
            }
            fn eval(&self, _: usize, k: usize) -> f64 {
                1.0 / (k as f64 + 1.0)
            }
            fn envelope(&self, _: usize) -> f64 {
                1.0
            }
            fn name(&self) -> String {
                "flat".into()
            }
        }
        let rows = RowFamily::new(Flat);
        let err = sup_norm_certified_with_cap(&rows, &[1.0], 1e-9, 1000).unwrap_err();
        assert_eq!(err, Error::CertificationFailed { k_max: 1000 });
    }

    #[test]
    fn symmetric_two_peaks() {
        // mu = (1, 0, -1, 0): two peaks of equal magnitude
        let rows = RowFamily::new(
            FiniteRows::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0], vec![0.1, 0.1]]).unwrap(),
        );
        let mut cert = sup_norm_certified(&rows, &[1.0, -1.0], 1e-9).unwrap();
        let peaks = peak_set(&mut cert, 1e-6).unwrap();
        assert_eq!(peaks, vec![1, 3]);
        let mut single = sup_norm_certified(&rows, &[1.0, 0.5], 1e-9).unwrap();
        assert_eq!(peak_set(&mut single, 1e-6).unwrap(), vec![1]);
    }

    #[test]
    fn trig_symmetric_peaks() {
        // mu_k = (cos k + sin k)/k = sqrt(2) sin(k + pi/4)/k; compare with scan oracle
        let rows = trig(2);
        let mut cert = sup_norm_certified(&rows, &[1.0, 1.0], 1e-9).unwrap();
        let peaks = peak_set(&mut cert, 1e-6).unwrap();
        let scan: Vec<f64> = (1..=100_000).map(|k| {
            let kf = k as f64;
            ((kf.cos() + kf.sin()) / kf).abs()
        }).collect();
        let max = scan.iter().cloned().fold(0.0, f64::max);
        let oracle: Vec<usize> = scan.iter().enumerate().filter(|(_, v)| **v >= max * (1.0 - 1e-6)).map(|(i, _)| i + 1).collect();
        assert!((cert.value - max).abs() < 1e-15);
        assert_eq!(peaks, oracle);
    }

    #[test]
    fn truncation_examples() {
        let rows = trig(2);
        let t = truncate_matrix(&rows, &[1]).unwrap();
        assert_eq!(t.column(0), vec![1f64.cos(), 1f64.sin()]);
        let k = 37;
        let t = truncate_matrix(&rows, &[k]).unwrap();
        let n = t.column(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= (2f64).sqrt() * rows.envelope(k));
        let rows = trig(6);
        let t = truncate_matrix(&rows, &[1, 2, 3]).unwrap();
        for (j, k) in [1usize, 2, 3].iter().enumerate() {
            let e = SparseSeq::from_entries(vec![(*k, 1.0)]).unwrap();
            assert_eq!(t.column(j), apply_a(&rows, &e).0);
        }
        assert!(truncate_matrix(&rows, &[]).is_err());
        assert!(truncate_matrix(&rows, &[3, 1]).is_err());
    }

    #[test]
    fn trig_rejects_odd() {
        assert!(TrigRows::new(3).is_err());
    }

    #[test]
    fn spectral_norm_diagonal() {
        let t = TruncatedMatrix::from_row_major(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((t.spectral_norm(100) - 3.0).abs() < 1e-12);
    }
}

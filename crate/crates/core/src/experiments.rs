//! Synthetic experiments with trigonometric rows `cos(jk)/k`, `sin(jk)/k`,
//! ground truth `x0_k = 1/(10 k^2)` and Gaussian noise, plus the table runner.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{DenseVec, SparseSeq};
use crate::operators::{apply_a, RowFamily, TrigRows};
use crate::pipeline::{
    solve_min_norm_interp_with, solve_regularized_with, Branch, N0Strategy, RegularizationProblem,
    SolverOptions,
};

pub const DEFAULT_NOISE_FACTOR: f64 = 1e-3;
/// Target bound on the neglected tail of `y = A x0`.
pub const SERIES_TAIL_TOL: f64 = 1e-12;

pub fn gen_rows_trig(m: usize) -> Result<RowFamily> {
    Ok(RowFamily::new(TrigRows::new(m)?))
}

/// `x0_k = scale / k^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scale: f64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth { scale: 0.1 }
    }
}

impl GroundTruth {
    pub fn value(&self, k: usize) -> f64 {
        self.scale / (k as f64).powi(2)
    }

    pub fn prefix(&self, n: usize) -> SparseSeq {
        let vals: Vec<f64> = (1..=n).map(|k| self.value(k)).collect();
        SparseSeq::from_prefix(&vals)
    }

    /// With `|a_{j,k}| <= 1/k`, the tail beyond `K` is at most
    /// `scale * sum_{k>K} k^{-3} <= scale / (2 K^2)`.
    pub fn tail_bound(&self, terms: usize) -> f64 {
        self.scale / (2.0 * (terms as f64).powi(2))
    }

    pub fn terms_for(&self, tol: f64) -> usize {
        ((self.scale / (2.0 * tol)).sqrt().ceil() as usize).max(1) + 1
    }
}

/// `y = A x0` by direct summation, truncated where the tail bound drops
/// below `SERIES_TAIL_TOL`. Requires `envelope(k) <= 1/k`.
pub fn gen_truth_and_data(rows: &RowFamily) -> Result<(GroundTruth, DenseVec)> {
    let truth = GroundTruth::default();
    for k in [1usize, 2, 10, 1000] {
        if rows.envelope(k) > 1.0 / k as f64 + 1e-15 {
            return Err(Error::InvalidArgument(format!(
                "row family {} lacks the 1/k envelope the tail bound needs",
                rows.name()
            )));
        }
    }
    let terms = truth.terms_for(SERIES_TAIL_TOL);
    let y: Vec<f64> = (1..=rows.m())
        .into_par_iter()
        .map(|j| {
            // smallest terms first
            (1..=terms).rev().map(|k| rows.eval(j, k) * truth.value(k)).sum()
        })
        .collect();
    Ok((truth, DenseVec(y)))
}

/// `y + eta` with `eta_j ~ N(0, sigma^2)`, `sigma = noise_factor (max y - min y)`.
pub fn add_noise(y: &[f64], noise_factor: f64, seed: u64) -> Result<DenseVec> {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if y.is_empty() || max == min {
        return Err(Error::InvalidArgument("noise level needs nonconstant data".into()));
    }
    if !(noise_factor >= 0.0) {
        return Err(Error::InvalidArgument("noise factor must be nonnegative".into()));
    }
    let sigma = noise_factor * (max - min);
    if sigma == 0.0 {
        return Ok(DenseVec(y.to_vec()));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DenseVec(y.iter().map(|v| v + normal.sample(&mut rng)).collect()))
}

/// Data that the interpolation baseline `x_dagger` is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrBaseline {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub rho_list: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_factor: f64,
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default = "default_strategy")]
    pub n0_strategy: N0Strategy,
    #[serde(default = "default_baseline")]
    pub err_baseline: ErrBaseline,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_FACTOR
}
fn default_generator() -> String {
    "trig".to_string()
}
fn default_strategy() -> N0Strategy {
    N0Strategy::Objective
}
fn default_baseline() -> ErrBaseline {
    ErrBaseline::Clean
}

impl ExperimentConfig {
    pub fn new(m: usize, rho_list: Vec<f64>, seed: u64) -> Self {
        ExperimentConfig {
            m,
            rho_list,
            seed,
            noise_factor: DEFAULT_NOISE_FACTOR,
            generator: default_generator(),
            n0_strategy: default_strategy(),
            err_baseline: default_baseline(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m % 2 != 0 {
            return Err(Error::InvalidArgument(format!("m must be even and positive, got {}", self.m)));
        }
        if self.rho_list.is_empty() {
            return Err(Error::InvalidArgument("rho_list must not be empty".into()));
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho values must be positive, got {r}")));
        }
        if self.generator != "trig" {
            return Err(Error::InvalidArgument(format!("unknown generator {:?}", self.generator)));
        }
        if !(self.noise_factor >= 0.0) {
            return Err(Error::InvalidArgument("noise_factor must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Rows, clean data and noisy data of an experiment.
#[derive(Debug, Clone)]
pub struct Instance {
    pub rows: RowFamily,
    pub truth: GroundTruth,
    pub y: DenseVec,
    pub y0: DenseVec,
}

pub fn build_instance(config: &ExperimentConfig) -> Result<Instance> {
    config.validate()?;
    let rows = gen_rows_trig(config.m)?;
    let (truth, y) = gen_truth_and_data(&rows)?;
    let y0 = add_noise(&y, config.noise_factor, config.seed)?;
    Ok(Instance { rows, truth, y, y0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rho: f64,
    pub rho_lambda_inf: f64,
    pub astar_lambda_inf: f64,
    pub s: f64,
    pub f_r: f64,
    pub sl: usize,
    pub err: f64,
    /// `|y - A x|_2` against clean data.
    pub residual_clean_l2: f64,
    /// `|y0 - A x|_2` against the noisy data.
    pub residual_noisy_l2: f64,
    pub n0: usize,
    pub branch: Option<Branch>,
    pub x: SparseSeq,
    pub error: Option<String>,
}

impl TableRow {
    fn failed(rho: f64, e: &Error) -> Self {
        TableRow {
            rho,
            rho_lambda_inf: f64::NAN,
            astar_lambda_inf: f64::NAN,
            s: f64::NAN,
            f_r: f64::NAN,
            sl: 0,
            err: f64::NAN,
            residual_clean_l2: f64::NAN,
            residual_noisy_l2: f64::NAN,
            n0: 0,
            branch: None,
            x: SparseSeq::zero(),
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub config: ExperimentConfig,
    pub y0_l1: f64,
    pub interpolant: Option<SparseSeq>,
    pub interpolant_error: Option<String>,
    pub rows: Vec<TableRow>,
}

fn solve_row(inst: &Instance, rho: f64, config: &ExperimentConfig, baseline: Option<&SparseSeq>) -> Result<TableRow> {
    let problem = RegularizationProblem::new(inst.rows.clone(), inst.y0.clone(), rho)?;
    let sol = solve_regularized_with(&problem, config.n0_strategy, &config.solver)?;
    let ax = apply_a(&inst.rows, &sol.x);
    Ok(TableRow {
        rho,
        rho_lambda_inf: rho * sol.dual.lambda.sup_norm(),
        astar_lambda_inf: sol.dual.mu_supnorm,
        s: sol.dual.s,
        f_r: sol.f_r,
        sl: sol.sparsity,
        err: baseline.map_or(f64::NAN, |b| sol.x.l2_distance(b)),
        residual_clean_l2: inst.y.sub(&ax).l2_norm(),
        residual_noisy_l2: inst.y0.sub(&ax).l2_norm(),
        n0: sol.dual.n0,
        branch: Some(sol.branch),
        x: sol.x,
        error: None,
    })
}

/// One row per `rho`, in `rho_list` order. Row failures are recorded in the
/// row. With `jobs > 1` rows are solved on a thread pool; results do not
/// depend on it.
pub fn run_table(config: &ExperimentConfig, jobs: usize) -> Result<Table> {
    let inst = build_instance(config)?;
    let data = match config.err_baseline {
        ErrBaseline::Clean => &inst.y,
        ErrBaseline::Noisy => &inst.y0,
    };
    let (interpolant, interpolant_error) =
        match solve_min_norm_interp_with(&inst.rows, data, N0Strategy::Objective, &config.solver) {
            Ok(i) => (Some(i.x), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let row = |&rho: &f64| {
        solve_row(&inst, rho, config, interpolant.as_ref()).unwrap_or_else(|e| TableRow::failed(rho, &e))
    };
    let rows: Vec<TableRow> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| config.rho_list.par_iter().map(row).collect())
    } else {
        config.rho_list.iter().map(row).collect()
    };
    Ok(Table { config: config.clone(), y0_l1: inst.y0.l1_norm(), interpolant, interpolant_error, rows })
}

/// Four decimals, or a four-decimal mantissa for magnitudes below `1e-3`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == 0.0 || v.abs() >= 1e-3 {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

pub const CSV_HEADER: &str =
    "rho,rho_lambda_inf,astar_lambda_inf,S,f_r,SL,ERR,residual_clean_l2,residual_noisy_l2,n0,branch,error";

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let branch = match r.branch {
                Some(Branch::ZeroSolution) => "zero",
                Some(Branch::FiniteSolve) => "finite",
                None => "",
            };
            let error = r.error.as_deref().map(csv_quote).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                format_value(r.rho),
                format_value(r.rho_lambda_inf),
                format_value(r.astar_lambda_inf),
                format_value(r.s),
                format_value(r.f_r),
                r.sl,
                format_value(r.err),
                format_value(r.residual_clean_l2),
                format_value(r.residual_noisy_l2),
                r.n0,
                branch,
                error
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

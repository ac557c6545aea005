use std::path::{Path, PathBuf};

use l1dual::experiments::{add_noise, gen_truth_and_data, ErrBaseline, ExperimentConfig, DEFAULT_NOISE_FACTOR};
use l1dual::operators::{CoordinateRows, RowFamily, TrigRows};
use l1dual::pipeline::{N0Strategy, SolverOptions};
use l1dual::{DenseVec, Error, Result};
use serde::{Deserialize, Serialize};

/// Problem description read from a JSON or TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub m: usize,
    #[serde(default)]
    pub rho_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_factor: f64,
    /// `trig` or `coordinate`.
    #[serde(default = "default_generator")]
    pub generator: String,
    /// Clean data; replaces the generated `A x0` when present.
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub n0_strategy: Option<N0Strategy>,
    #[serde(default)]
    pub err_baseline: Option<ErrBaseline>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: u8,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_FACTOR
}

fn default_generator() -> String {
    "trig".to_string()
}

pub struct Data {
    pub rows: RowFamily,
    pub y: DenseVec,
    pub y0: DenseVec,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read manifest {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let manifest: Manifest = if is_toml {
            toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("invalid manifest: {e}")))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("invalid manifest: {e}")))?
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        match self.generator.as_str() {
            "trig" if self.m % 2 != 0 => {
                return Err(Error::InvalidArgument(format!("trig rows need even m, got {}", self.m)))
            }
            "trig" => {}
            "coordinate" if self.y.is_none() => {
                return Err(Error::InvalidArgument("coordinate rows need explicit data y".into()))
            }
            "coordinate" => {}
            g => return Err(Error::InvalidArgument(format!("unknown generator {g:?}"))),
        }
        if let Some(y) = &self.y {
            if y.len() != self.m {
                return Err(Error::DimensionMismatch { expected: self.m, actual: y.len() });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("data y must be finite".into()));
            }
        }
        if !(self.noise_factor >= 0.0) {
            return Err(Error::InvalidArgument("noise_factor must be nonnegative".into()));
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho values must be positive, got {r}")));
        }
        Ok(())
    }

    pub fn rows(&self) -> Result<RowFamily> {
        Ok(match self.generator.as_str() {
            "coordinate" => RowFamily::new(CoordinateRows::new(self.m)?),
            _ => RowFamily::new(TrigRows::new(self.m)?),
        })
    }

    pub fn data(&self) -> Result<Data> {
        let rows = self.rows()?;
        let y = match &self.y {
            Some(y) => DenseVec(y.clone()),
            None => gen_truth_and_data(&rows)?.1,
        };
        let y0 = if self.noise_factor == 0.0 { y.clone() } else { add_noise(&y, self.noise_factor, self.seed)? };
        Ok(Data { rows, y, y0 })
    }

    pub fn strategy(&self) -> N0Strategy {
        self.n0_strategy.unwrap_or(N0Strategy::Objective)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        if self.generator != "trig" || self.y.is_some() {
            return Err(Error::InvalidArgument("tables need the trig generator without explicit data".into()));
        }
        let mut cfg = ExperimentConfig::new(self.m, self.rho_list.clone(), self.seed);
        cfg.noise_factor = self.noise_factor;
        cfg.n0_strategy = self.strategy();
        cfg.err_baseline = self.err_baseline.unwrap_or(ErrBaseline::Clean);
        cfg.solver = self.solver;
        cfg.validate()?;
        Ok(cfg)
    }
}

//! Run configuration as read from JSON, and its validated form.

use std::path::{Path, PathBuf};

use gidag::modelprior::PriorHyper;
use gidag::score::Hyperparams;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_matrix_csv;

/// Wishart degrees of freedom: a number, or `"q"` for the vertex count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WishartDf {
    Value(f64),
    Symbol(String),
}

impl Default for WishartDf {
    fn default() -> Self {
        WishartDf::Symbol("q".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub wishart_a: WishartDf,
    /// `"identity"` or the path of a headerless `q x q` CSV file.
    #[serde(rename = "wishart_U")]
    pub wishart_u: String,
    pub priors: PriorHyper,
    /// Sweeps per chain including burn-in; `3000 q` when absent.
    pub iterations: Option<u64>,
    /// `1000 q` when absent.
    pub burn_in: Option<u64>,
    pub thin: u64,
    pub chains: usize,
    pub seed: u64,
    pub record_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            wishart_a: WishartDf::default(),
            wishart_u: "identity".into(),
            priors: PriorHyper::default(),
            iterations: None,
            burn_in: None,
            thin: 0,
            chains: 1,
            seed: 0,
            record_states: false,
        }
    }
}

/// Configuration with every default filled in for a given `q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub wishart_a: f64,
    #[serde(rename = "wishart_U")]
    pub wishart_u: String,
    pub priors: PriorHyper,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub chains: usize,
    pub seed: u64,
    pub record_states: bool,
    #[serde(skip)]
    pub hyper: Hyperparams,
    #[serde(skip)]
    pub wishart_u_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Fills defaults for `q` vertices and validates every field.
    pub fn resolve(&self, q: usize) -> Result<Resolved> {
        let a = match &self.wishart_a {
            WishartDf::Value(a) => *a,
            WishartDf::Symbol(s) if s == "q" => q as f64,
            WishartDf::Symbol(s) => {
                return Err(CliError::Usage(format!(
                    "wishart_a must be a number or \"q\", got \"{s}\""
                )))
            }
        };
        let (u, u_path) = if self.wishart_u == "identity" {
            (DMatrix::identity(q, q), None)
        } else {
            let p = PathBuf::from(&self.wishart_u);
            (read_matrix_csv(&p)?, Some(p))
        };
        if u.nrows() != q || u.ncols() != q {
            return Err(CliError::Usage(format!(
                "wishart_U is {}x{}, data has q = {q}",
                u.nrows(),
                u.ncols()
            )));
        }
        let hyper = Hyperparams::new(a, u).map_err(|e| CliError::Usage(e.to_string()))?;
        self.priors.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let q64 = q as u64;
        let iterations = self.iterations.unwrap_or(3000 * q64);
        let burn_in = self.burn_in.unwrap_or(1000 * q64);
        if iterations <= burn_in {
            return Err(CliError::Usage(format!(
                "iterations ({iterations}) must exceed burn_in ({burn_in})"
            )));
        }
        if self.chains == 0 {
            return Err(CliError::Usage("chains must be at least 1".into()));
        }
        Ok(Resolved {
            wishart_a: a,
            wishart_u: self.wishart_u.clone(),
            priors: self.priors,
            iterations,
            burn_in,
            thin: self.thin,
            chains: self.chains,
            seed: self.seed,
            record_states: self.record_states,
            hyper,
            wishart_u_path: u_path,
        })
    }
}

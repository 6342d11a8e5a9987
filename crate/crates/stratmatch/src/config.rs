//! TOML run configuration. Precedence is command-line flags, then the file,
//! then built-in defaults.
//!
//! ```toml
//! treatment = "t"
//! outcome = "y"
//! delimiter = ","
//! method = "m5c-mf"
//! seed = 7
//! threads = 4
//! out_dir = "out"
//!
//! [pipeline]
//! lambda = 0.1
//! psi = 20
//! m2 = 1e6
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stratmatch_core::att::Method;
use stratmatch_core::PipelineConfig;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub treatment: Option<String>,
    pub outcome: Option<String>,
    pub delimiter: Option<String>,
    pub categorical: Option<Vec<String>>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

pub fn read_config(path: &Path) -> AppResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> AppResult<FileConfig> {
    let cfg: FileConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
        AppError::Config {
            path: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.pipeline.validate().map_err(|e| AppError::Config {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    if let Some(m) = &cfg.method {
        parse_method(m)?;
    }
    Ok(cfg)
}

pub fn parse_method(s: &str) -> AppResult<Method> {
    Method::parse(s).ok_or_else(|| {
        let all: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        AppError::Usage(format!("unknown method `{s}`; expected one of {}", all.join(", ")))
    })
}

/// Pipeline parameters that can be set on the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct PipelineOverrides {
    /// Penalty for children below the minimum size
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Minimum child size (default max(30, 2p))
    #[arg(long, global = true)]
    pub theta: Option<usize>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    /// Candidate controls per treated unit
    #[arg(long, global = true)]
    pub psi: Option<usize>,
    #[arg(long, global = true)]
    pub m1: Option<f64>,
    #[arg(long, global = true)]
    pub m2: Option<f64>,
    /// Search-node cap per match; unlimited when absent
    #[arg(long, global = true)]
    pub node_budget: Option<u64>,
    /// Histogram bins for the overlap coefficient
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// global or leaf
    #[arg(long, global = true)]
    pub weight_scope: Option<String>,
    /// leaf or global
    #[arg(long, global = true)]
    pub candidate_scope: Option<String>,
    /// big-m or lexicographic
    #[arg(long, global = true)]
    pub solver: Option<String>,
}

fn enum_value<T: for<'de> Deserialize<'de>>(flag: &str, v: &str) -> AppResult<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| AppError::Usage(format!("invalid value `{v}` for --{flag}")))
}

impl PipelineOverrides {
    pub fn apply(&self, base: &PipelineConfig) -> AppResult<PipelineConfig> {
        let mut c = base.clone();
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if self.theta.is_some() {
            c.theta = self.theta;
        }
        if let Some(v) = self.max_depth {
            c.max_depth = v;
        }
        if let Some(v) = self.psi {
            c.psi = v;
        }
        if let Some(v) = self.m1 {
            c.m1 = v;
        }
        if let Some(v) = self.m2 {
            c.m2 = v;
        }
        if self.node_budget.is_some() {
            c.node_budget = self.node_budget;
        }
        if let Some(v) = self.bins {
            c.bins = v;
        }
        if let Some(v) = &self.weight_scope {
            c.weight_scope = enum_value("weight-scope", v)?;
        }
        if let Some(v) = &self.candidate_scope {
            c.candidate_scope = enum_value("candidate-scope", v)?;
        }
        if let Some(v) = &self.solver {
            c.solver = enum_value("solver", v)?;
        }
        c.validate().map_err(|e| AppError::Usage(e.to_string()))?;
        Ok(c)
    }
}

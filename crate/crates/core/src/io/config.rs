//! Run configuration, read from TOML.
//!
//! ```toml
//! output_dir = "out"
//! seed = 1
//! branches = ["trivial", "semitrivial_u", "semitrivial_v", "coexistence", "segregation2", "segregation3"]
//!
//! [model]
//! alpha = 20.0
//! b1 = 3.0
//! b2 = 2.0
//! c1 = 2.0
//! c2 = 1.0
//! ell = 0.5
//!
//! [grid]
//! n = 400
//!
//! [continuation]
//! lambda_start = 1.0
//! lambda_max = 120.0
//! m = 8
//! ```
//!
//! Every key is optional; missing keys take the values above. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continuation::{StepControls, SwitchSettings};
use crate::error::{Result, SktError};
use crate::model::{Grid, ModelParams};
use crate::solvers::newton::NewtonSettings;

/// Branch families traced by the diagram runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Trivial,
    SemitrivialU,
    SemitrivialV,
    Coexistence,
    /// Both orientations of the segregation branch from the second crossing
    /// on the coexistence branch.
    Segregation2,
    /// Same for the third crossing.
    Segregation3,
}

impl BranchKind {
    pub const ALL: [BranchKind; 6] = [
        BranchKind::Trivial,
        BranchKind::SemitrivialU,
        BranchKind::SemitrivialV,
        BranchKind::Coexistence,
        BranchKind::Segregation2,
        BranchKind::Segregation3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BranchKind::Trivial => "trivial",
            BranchKind::SemitrivialU => "semitrivial_u",
            BranchKind::SemitrivialV => "semitrivial_v",
            BranchKind::Coexistence => "coexistence",
            BranchKind::Segregation2 => "segregation2",
            BranchKind::Segregation3 => "segregation3",
        }
    }

    /// Mode number of a segregation family.
    pub fn mode(&self) -> Option<usize> {
        match self {
            BranchKind::Segregation2 => Some(2),
            BranchKind::Segregation3 => Some(3),
            _ => None,
        }
    }
}

impl FromStr for BranchKind {
    type Err = SktError;

    fn from_str(s: &str) -> Result<Self> {
        BranchKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| SktError::Config(format!("unknown branch '{s}'")))
    }
}

/// Parse a comma-separated branch list such as `trivial,coexistence`.
pub fn parse_branch_list(list: &str) -> Result<Vec<BranchKind>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub alpha: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub ell: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = ModelParams::benchmark(0.0);
        Self {
            alpha: p.alpha,
            b1: p.b1,
            b2: p.b2,
            c1: p.c1,
            c2: p.c2,
            ell: p.ell,
        }
    }
}

impl ModelConfig {
    pub fn params(&self, lambda: f64) -> Result<ModelParams> {
        ModelParams::new(
            lambda, self.alpha, self.b1, self.b2, self.c1, self.c2, self.ell,
        )
        .map_err(|e| SktError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    /// Start of the trivial branch and lower λ limit of every branch.
    pub lambda_start: f64,
    pub lambda_max: f64,
    /// Eigenvalues tracked per point.
    pub m: usize,
    pub ds_initial: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub newton: NewtonSettings,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        let c = StepControls::default();
        Self {
            lambda_start: 1.0,
            lambda_max: 120.0,
            m: c.m,
            ds_initial: c.ds_initial,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            max_points: 2000,
            newton: c.newton,
        }
    }
}

impl ContinuationConfig {
    pub fn controls(&self) -> StepControls {
        StepControls {
            ds_initial: self.ds_initial,
            ds_min: self.ds_min,
            ds_max: self.ds_max,
            m: self.m,
            newton: self.newton,
            ..StepControls::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub continuation: ContinuationConfig,
    pub switching: SwitchSettings,
    pub branches: Vec<BranchKind>,
    pub output_dir: PathBuf,
    /// Seed for randomized perturbations; recorded in every run record.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            continuation: ContinuationConfig::default(),
            switching: SwitchSettings::default(),
            branches: BranchKind::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| SktError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SktError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SktError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.params(self.continuation.lambda_start)?;
        self.grid()?;
        let c = &self.continuation;
        if !(c.lambda_start.is_finite()
            && c.lambda_max.is_finite()
            && c.lambda_max > c.lambda_start)
        {
            return Err(SktError::Config(format!(
                "need finite lambda_start < lambda_max, got {} and {}",
                c.lambda_start, c.lambda_max
            )));
        }
        if c.max_points < 2 {
            return Err(SktError::Config("max_points must be at least 2".into()));
        }
        c.controls()
            .validate()
            .map_err(|e| SktError::Config(e.to_string()))?;
        self.switching
            .newton
            .validate()
            .map_err(|e| SktError::Config(e.to_string()))?;
        if !(self.switching.relative_amplitude > 0.0 && self.switching.min_separation >= 0.0) {
            return Err(SktError::Config(
                "switching amplitude must be > 0 and separation >= 0".into(),
            ));
        }
        if self.branches.is_empty() {
            return Err(SktError::Config("no branches selected".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.model.ell).map_err(|e| SktError::Config(e.to_string()))
    }
}

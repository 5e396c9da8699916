use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::BoostError;
use crate::tree::{SplitCriterion, DEFAULT_DAMPING};

/// The five boosting variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Gradient boosting on the negative log-likelihood; first-order splits.
    #[serde(rename = "mart")]
    Mart,
    /// Newton boosting with working responses clamped to `z_max`.
    #[serde(rename = "logit-classic")]
    LogitClassic,
    /// Newton boosting with second-order splits and no response clamping.
    #[serde(rename = "logit")]
    Logit,
    /// Adaptive base class with first-order splits.
    #[serde(rename = "abc-mart")]
    AbcMart,
    /// Adaptive base class with second-order splits.
    #[serde(rename = "abc-logit")]
    AbcLogit,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Mart,
        Algorithm::LogitClassic,
        Algorithm::Logit,
        Algorithm::AbcMart,
        Algorithm::AbcLogit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mart => "mart",
            Algorithm::LogitClassic => "logit-classic",
            Algorithm::Logit => "logit",
            Algorithm::AbcMart => "abc-mart",
            Algorithm::AbcLogit => "abc-logit",
        }
    }

    pub fn is_abc(self) -> bool {
        matches!(self, Algorithm::AbcMart | Algorithm::AbcLogit)
    }

    /// Split criterion used unless overridden.
    pub fn default_criterion(self) -> SplitCriterion {
        match self {
            Algorithm::Mart | Algorithm::AbcMart => SplitCriterion::FirstOrder,
            Algorithm::LogitClassic | Algorithm::Logit | Algorithm::AbcLogit => {
                SplitCriterion::SecondOrder
            }
        }
    }

    /// The abc variant built on this algorithm's split criterion, if any.
    pub fn abc_counterpart(self) -> Option<Algorithm> {
        match self {
            Algorithm::Mart => Some(Algorithm::AbcMart),
            Algorithm::Logit => Some(Algorithm::AbcLogit),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BoostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                BoostError::Config(format!(
                    "unknown algorithm {s:?} (expected mart, logit, logit-classic, abc-mart or abc-logit)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub algorithm: Algorithm,
    /// J, the leaf budget per tree.
    pub max_leaves: usize,
    /// The shrinkage ν.
    pub shrinkage: f64,
    /// M, the iteration budget.
    pub max_iterations: usize,
    /// Clamp on the working response of the classic Newton variant.
    pub z_max: f64,
    /// Training stops once the loss is at or below this; `None` means `1e-14 * N`.
    pub loss_epsilon: Option<f64>,
    pub min_leaf: usize,
    pub damping: f64,
    /// Replaces the algorithm's own split criterion.
    pub split_override: Option<SplitCriterion>,
}

impl BoostConfig {
    pub fn new(algorithm: Algorithm, max_leaves: usize, shrinkage: f64, max_iterations: usize) -> Self {
        BoostConfig {
            algorithm,
            max_leaves,
            shrinkage,
            max_iterations,
            z_max: 4.0,
            loss_epsilon: None,
            min_leaf: 1,
            damping: DEFAULT_DAMPING,
            split_override: None,
        }
    }

    pub fn criterion(&self) -> SplitCriterion {
        self.split_override
            .unwrap_or_else(|| self.algorithm.default_criterion())
    }

    pub fn epsilon_for(&self, n_samples: usize) -> f64 {
        self.loss_epsilon.unwrap_or(1e-14 * n_samples as f64)
    }

    pub fn validate(&self) -> Result<(), BoostError> {
        let err = |m: String| Err(BoostError::Config(m));
        if self.max_leaves < 2 {
            return err(format!("J must be at least 2, got {}", self.max_leaves));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return err(format!("nu must lie in (0, 1], got {}", self.shrinkage));
        }
        if self.max_iterations < 1 {
            return err("M must be at least 1".to_string());
        }
        if !(2.0..=4.0).contains(&self.z_max) {
            return err(format!("z_max must lie in [2, 4], got {}", self.z_max));
        }
        if self.min_leaf < 1 {
            return err("min_leaf must be at least 1".to_string());
        }
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return err(format!("damping must be positive, got {}", self.damping));
        }
        if let Some(eps) = self.loss_epsilon {
            if !(eps.is_finite() && eps >= 0.0) {
                return err(format!("loss epsilon must be non-negative, got {eps}"));
            }
        }
        Ok(())
    }
}

//! Multi-class boosted trees with adaptive base classes.
//!
//! Five trainers share one tree learner: gradient boosting (`mart`), two Newton
//! variants (`logit`, `logit-classic`) and their adaptive-base-class
//! counterparts (`abc-mart`, `abc-logit`). The abc trainers fit K-1 trees per
//! iteration, picking the base class whose constrained update lowers the
//! training loss the most.

pub mod boost;
pub mod dataset;
pub mod error;
pub mod model;
pub mod tree;

pub use boost::{
    train, train_with_observer, Algorithm, BoostConfig, FitState, IterationRecord, IterationView,
    StopReason, Trace, TrainOptions, TrainOutput,
};
pub use dataset::{load_csv, load_libsvm, write_libsvm, Dataset, LabelScheme, LoadOptions, Role};
pub use error::{BoostError, DataError, ModelError};
pub use model::{Ensemble, ModelMeta, Stage};
pub use tree::{RegressionTree, SplitCriterion};

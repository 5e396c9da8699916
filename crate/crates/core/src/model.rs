//! Trained ensembles: staged scoring, truncated evaluation and the JSON model
//! file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::loss::{argmax, softmax};
use crate::boost::Algorithm;
use crate::dataset::{Dataset, LabelScheme};
use crate::error::ModelError;
use crate::tree::{RegressionTree, SplitCriterion};

pub const FORMAT_VERSION: u32 = 1;

/// The trees fitted in one boosting iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// One tree per class, in class order.
    Plain { trees: Vec<RegressionTree> },
    /// One tree per non-base class, in ascending class order. The base class
    /// score moves by minus the sum of the other increments.
    Abc {
        base_class: usize,
        trees: Vec<RegressionTree>,
    },
}

impl Stage {
    pub fn trees(&self) -> &[RegressionTree] {
        match self {
            Stage::Plain { trees } | Stage::Abc { trees, .. } => trees,
        }
    }

    pub fn base_class(&self) -> Option<usize> {
        match self {
            Stage::Plain { .. } => None,
            Stage::Abc { base_class, .. } => Some(*base_class),
        }
    }

    /// Class whose score the `j`-th tree moves.
    pub fn class_of(&self, j: usize) -> usize {
        match self {
            Stage::Plain { .. } => j,
            Stage::Abc { base_class, .. } => {
                if j < *base_class {
                    j
                } else {
                    j + 1
                }
            }
        }
    }
}

/// Free-form facts about how a model was trained. Not used for scoring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_leaves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_criterion: Option<SplitCriterion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    /// Label convention of the training file, for mapping predictions back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_scheme: Option<LabelScheme>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    algorithm: Algorithm,
    n_classes: usize,
    n_features: usize,
    shrinkage: f64,
    stages: Vec<Stage>,
    pub meta: ModelMeta,
}

/// `scores += nu (K-1)/K (f - mean(f))`, the centered update of the classic
/// Newton variant.
pub(crate) fn centered_update(scores: &mut [f64], f: &[f64], shrinkage: f64) {
    let k = f.len() as f64;
    let mean = f.iter().sum::<f64>() / k;
    let c = shrinkage * (k - 1.0) / k;
    for (s, &v) in scores.iter_mut().zip(f) {
        *s += c * (v - mean);
    }
}

impl Ensemble {
    pub fn new(
        algorithm: Algorithm,
        n_classes: usize,
        n_features: usize,
        shrinkage: f64,
    ) -> Result<Self, ModelError> {
        if n_classes < 3 {
            return Err(ModelError::Invalid(format!("need at least 3 classes, got {n_classes}")));
        }
        if !(shrinkage > 0.0 && shrinkage <= 1.0) {
            return Err(ModelError::Invalid(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
        }
        Ok(Ensemble {
            algorithm,
            n_classes,
            n_features,
            shrinkage,
            stages: Vec::new(),
            meta: ModelMeta::default(),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn push_stage(&mut self, stage: Stage) -> Result<(), ModelError> {
        self.check_stage(self.stages.len(), &stage)?;
        self.stages.push(stage);
        Ok(())
    }

    fn check_stage(&self, idx: usize, stage: &Stage) -> Result<(), ModelError> {
        let shape = |message: String| Err(ModelError::Shape { stage: idx, message });
        let k = self.n_classes;
        match (stage, self.algorithm.is_abc()) {
            (Stage::Plain { trees }, false) => {
                if trees.len() != k {
                    return shape(format!("expected {k} trees, found {}", trees.len()));
                }
            }
            (Stage::Abc { base_class, trees }, true) => {
                if *base_class >= k {
                    return shape(format!("base class {base_class} is outside [0, {k})"));
                }
                if trees.len() != k - 1 {
                    return shape(format!("expected {} trees, found {}", k - 1, trees.len()));
                }
            }
            (Stage::Plain { .. }, true) => {
                return shape(format!("{} stages need a base class", self.algorithm))
            }
            (Stage::Abc { .. }, false) => {
                return shape(format!("{} stages cannot have a base class", self.algorithm))
            }
        }
        for (j, t) in stage.trees().iter().enumerate() {
            if let Some(f) = t.max_feature() {
                if f >= self.n_features {
                    return shape(format!(
                        "tree {j} splits on feature {f} but the model has {} features",
                        self.n_features
                    ));
                }
            }
        }
        Ok(())
    }

    /// Add stage `idx`'s contribution for `sample` to `scores`.
    pub fn apply_stage(&self, idx: usize, sample: &[f64], scores: &mut [f64]) {
        let nu = self.shrinkage;
        match &self.stages[idx] {
            Stage::Plain { trees } if self.algorithm == Algorithm::LogitClassic => {
                let f: Vec<f64> = trees.iter().map(|t| t.predict(sample)).collect();
                centered_update(scores, &f, nu);
            }
            Stage::Plain { trees } => {
                for (s, t) in scores.iter_mut().zip(trees) {
                    *s += nu * t.predict(sample);
                }
            }
            stage @ Stage::Abc { base_class, trees } => {
                let mut total = 0.0;
                for (j, t) in trees.iter().enumerate() {
                    let inc = nu * t.predict(sample);
                    scores[stage.class_of(j)] += inc;
                    total += inc;
                }
                scores[*base_class] -= total;
            }
        }
    }

    fn check_query(&self, sample: &[f64], upto: Option<usize>) -> Result<usize, ModelError> {
        if sample.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                found: sample.len(),
            });
        }
        let m = upto.unwrap_or(self.stages.len());
        if m > self.stages.len() {
            return Err(ModelError::StageOutOfRange {
                requested: m,
                available: self.stages.len(),
            });
        }
        Ok(m)
    }

    /// Class scores after the first `upto` stages (all stages when `None`).
    pub fn predict_scores(&self, sample: &[f64], upto: Option<usize>) -> Result<Vec<f64>, ModelError> {
        let m = self.check_query(sample, upto)?;
        let mut scores = vec![0.0; self.n_classes];
        for idx in 0..m {
            self.apply_stage(idx, sample, &mut scores);
        }
        Ok(scores)
    }

    pub fn predict_proba(&self, sample: &[f64], upto: Option<usize>) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.predict_scores(sample, upto)?))
    }

    /// Predicted class; ties go to the smallest class id.
    pub fn predict_class(&self, sample: &[f64], upto: Option<usize>) -> Result<usize, ModelError> {
        Ok(argmax(&self.predict_scores(sample, upto)?))
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<(), ModelError> {
        if ds.n_features() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                found: ds.n_features(),
            });
        }
        if ds.n_classes() > self.n_classes {
            return Err(ModelError::Invalid(format!(
                "dataset has {} classes, model has {}",
                ds.n_classes(),
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Misclassified samples of `ds` after the first `upto` stages.
    pub fn count_errors(&self, ds: &Dataset, upto: Option<usize>) -> Result<usize, ModelError> {
        self.check_dataset(ds)?;
        let mut errors = 0;
        for i in 0..ds.n_samples() {
            if self.predict_class(ds.row(i), upto)? != ds.label(i) {
                errors += 1;
            }
        }
        Ok(errors)
    }

    /// Misclassified samples after every prefix `0..=upto` of stages.
    pub fn error_curve(&self, ds: &Dataset, upto: Option<usize>) -> Result<Vec<usize>, ModelError> {
        self.check_dataset(ds)?;
        let m = upto.unwrap_or(self.stages.len());
        if m > self.stages.len() {
            return Err(ModelError::StageOutOfRange {
                requested: m,
                available: self.stages.len(),
            });
        }
        let k = self.n_classes;
        let mut scores = vec![0.0; ds.n_samples() * k];
        let mut curve = Vec::with_capacity(m + 1);
        let count = |scores: &[f64]| {
            scores
                .chunks_exact(k)
                .zip(ds.labels())
                .filter(|(row, &y)| argmax(row) != y)
                .count()
        };
        curve.push(count(&scores));
        for idx in 0..m {
            for (i, row) in scores.chunks_exact_mut(k).enumerate() {
                self.apply_stage(idx, ds.row(i), row);
            }
            curve.push(count(&scores));
        }
        Ok(curve)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(ModelError::Version {
                found: probe.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        Ensemble::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let io_err = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.to_file())?;
        out.write_all(b"\n").map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ensemble::from_json(&text)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            algorithm: self.algorithm,
            n_classes: self.n_classes,
            n_features: self.n_features,
            shrinkage: self.shrinkage,
            metadata: self.meta.clone(),
            stages: self
                .stages
                .iter()
                .map(|s| StageFile {
                    base_class: s.base_class(),
                    trees: s
                        .trees()
                        .iter()
                        .enumerate()
                        .map(|(j, t)| ClassTree {
                            class: s.class_of(j),
                            tree: t.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn from_file(file: ModelFile) -> Result<Self, ModelError> {
        let mut model = Ensemble::new(file.algorithm, file.n_classes, file.n_features, file.shrinkage)?;
        model.meta = file.metadata;
        for (idx, sf) in file.stages.into_iter().enumerate() {
            let classes: Vec<usize> = sf.trees.iter().map(|t| t.class).collect();
            let trees: Vec<RegressionTree> = sf.trees.into_iter().map(|t| t.tree).collect();
            let stage = match sf.base_class {
                None => Stage::Plain { trees },
                Some(base_class) => Stage::Abc { base_class, trees },
            };
            model.check_stage(idx, &stage)?;
            let expected: Vec<usize> = (0..stage.trees().len()).map(|j| stage.class_of(j)).collect();
            if classes != expected {
                return Err(ModelError::Shape {
                    stage: idx,
                    message: format!("tree classes {classes:?}, expected {expected:?}"),
                });
            }
            model.stages.push(stage);
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    algorithm: Algorithm,
    n_classes: usize,
    n_features: usize,
    shrinkage: f64,
    #[serde(default)]
    metadata: ModelMeta,
    stages: Vec<StageFile>,
}

#[derive(Serialize, Deserialize)]
struct StageFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_class: Option<usize>,
    trees: Vec<ClassTree>,
}

#[derive(Serialize, Deserialize)]
struct ClassTree {
    class: usize,
    tree: RegressionTree,
}

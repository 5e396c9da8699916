//! Boosting trainers for the five algorithm variants.
//!
//! Scores `F` and probabilities `p` are row-major `N x K` matrices. Every
//! iteration appends one [`Stage`] to the ensemble; test-set tracking replays
//! stages through [`Ensemble::apply_stage`], so the recorded test errors are
//! exactly what a saved model reproduces.

pub mod config;
pub mod loss;
pub mod trace;

use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rayon::prelude::*;

pub use config::{Algorithm, BoostConfig};
pub use trace::{IterationRecord, Trace};

use crate::dataset::{Dataset, FeatureRanks};
use crate::error::BoostError;
use crate::model::{centered_update, Ensemble, Stage};
use crate::tree::{fit_tree, FittedTree, TreeParams};
use loss::{count_errors, nll_loss, softmax_rows};

/// Scores, probabilities and loss history of a run in progress.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    n_classes: usize,
    scores: Vec<f64>,
    probs: Vec<f64>,
    loss_history: Vec<f64>,
}

impl FitState {
    fn initial(labels: &[usize], k: usize) -> Self {
        let n = labels.len();
        let probs = vec![1.0 / k as f64; n * k];
        let loss = nll_loss(labels, &probs, k);
        FitState {
            n_classes: k,
            scores: vec![0.0; n * k],
            probs,
            loss_history: vec![loss],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn score_row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    /// Loss before any tree, then after each iteration.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn loss(&self) -> f64 {
        *self.loss_history.last().expect("history starts with the initial loss")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    /// The training loss fell to the configured epsilon.
    MachineZero,
    TimeBudget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max-iterations",
            StopReason::MachineZero => "machine-zero",
            StopReason::TimeBudget => "time-budget",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions<'a> {
    /// Scored after every iteration when present.
    pub test: Option<&'a Dataset>,
    /// Stop after the first iteration that ends past this budget.
    pub time_budget: Option<Duration>,
}

/// What the observer sees after each committed iteration.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub state: &'a FitState,
    pub stage: &'a Stage,
    pub record: &'a IterationRecord,
    /// Training loss of every base-class candidate (abc variants only).
    pub candidate_losses: Option<&'a [f64]>,
    /// Leaf count of each tree in `stage`, in the same order.
    pub leaf_counts: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Ensemble,
    pub trace: Trace,
    pub state: FitState,
    pub stop: StopReason,
}

pub fn train(ds: &Dataset, cfg: &BoostConfig, opts: TrainOptions<'_>) -> Result<TrainOutput, BoostError> {
    train_with_observer(ds, cfg, opts, |_| {})
}

pub fn train_with_observer<F>(
    ds: &Dataset,
    cfg: &BoostConfig,
    opts: TrainOptions<'_>,
    mut observer: F,
) -> Result<TrainOutput, BoostError>
where
    F: FnMut(&IterationView<'_>),
{
    cfg.validate()?;
    ds.require_all_classes()?;
    if let Some(test) = opts.test {
        if test.n_features() != ds.n_features() {
            return Err(BoostError::FeatureMismatch {
                expected: ds.n_features(),
                found: test.n_features(),
            });
        }
        if test.n_classes() != ds.n_classes() {
            return Err(BoostError::Config(format!(
                "test set has {} classes, training set has {}",
                test.n_classes(),
                ds.n_classes()
            )));
        }
    }

    let start = Instant::now();
    let k = ds.n_classes();
    let n = ds.n_samples();
    let ranks = FeatureRanks::from_dataset(ds);
    let ctx = Ctx {
        ds,
        ranks: &ranks,
        samples: (0..n as u32).collect(),
        params: TreeParams {
            max_leaves: cfg.max_leaves,
            criterion: cfg.criterion(),
            min_leaf: cfg.min_leaf,
            leaf_scale: 1.0,
            damping: cfg.damping,
        },
        cfg,
    };

    let mut model = Ensemble::new(cfg.algorithm, k, ds.n_features(), cfg.shrinkage)
        .map_err(|e| BoostError::Config(e.to_string()))?;
    model.meta.max_leaves = Some(cfg.max_leaves);
    model.meta.split_criterion = Some(cfg.criterion());
    model.meta.label_scheme = Some(ds.label_scheme());
    if cfg.algorithm == Algorithm::LogitClassic {
        model.meta.z_max = Some(cfg.z_max);
    }

    let mut state = FitState::initial(ds.labels(), k);
    let mut test_scores = opts.test.map(|t| vec![0.0; t.n_samples() * k]);
    let test_errors = |scores: &Option<Vec<f64>>| {
        scores
            .as_ref()
            .zip(opts.test)
            .map(|(s, t)| count_errors(s, t.labels(), k))
    };
    let mut trace = Trace::default();
    trace.records.push(IterationRecord {
        iteration: 0,
        train_loss: state.loss(),
        train_errors: count_errors(&state.scores, ds.labels(), k),
        test_errors: test_errors(&test_scores),
        base_class: None,
    });

    let epsilon = cfg.epsilon_for(n);
    let mut stop = StopReason::MaxIterations;
    let mut saturated_total = 0usize;
    for iteration in 1..=cfg.max_iterations {
        let step = if cfg.algorithm.is_abc() {
            ctx.abc_step(&mut state)
        } else {
            ctx.plain_step(&mut state)
        };
        let loss = state.loss();
        if !loss.is_finite() {
            return Err(BoostError::NonFiniteLoss { iteration });
        }
        if step.saturated > 0 {
            debug!("iteration {iteration}: {} leaves had a vanishing weight sum", step.saturated);
            saturated_total += step.saturated;
        }
        let base_class = step.stage.base_class();
        model
            .push_stage(step.stage)
            .expect("trainer emits well-formed stages");
        let idx = model.n_stages() - 1;
        if let (Some(scores), Some(test)) = (test_scores.as_mut(), opts.test) {
            for (i, row) in scores.chunks_exact_mut(k).enumerate() {
                model.apply_stage(idx, test.row(i), row);
            }
        }
        let record = IterationRecord {
            iteration,
            train_loss: loss,
            train_errors: count_errors(&state.scores, ds.labels(), k),
            test_errors: test_errors(&test_scores),
            base_class,
        };
        debug!(
            "iteration {iteration}: loss {loss:e}, train errors {}, test errors {:?}",
            record.train_errors, record.test_errors
        );
        observer(&IterationView {
            iteration,
            state: &state,
            stage: &model.stages()[idx],
            record: &record,
            candidate_losses: step.candidate_losses.as_deref(),
            leaf_counts: &step.leaf_counts,
        });
        trace.records.push(record);

        if loss <= epsilon {
            info!("training loss {loss:e} reached machine zero at iteration {iteration}");
            stop = StopReason::MachineZero;
            break;
        }
        if opts.time_budget.is_some_and(|b| start.elapsed() >= b) {
            info!("time budget exhausted after iteration {iteration}");
            stop = StopReason::TimeBudget;
            break;
        }
    }

    if saturated_total > 0 {
        warn!("{saturated_total} leaves had a weight sum below the damping term; their values were damped");
    }
    model.meta.final_train_loss = Some(state.loss());
    model.meta.stop_reason = Some(stop.as_str().to_string());
    Ok(TrainOutput {
        model,
        trace,
        state,
        stop,
    })
}

struct Step {
    stage: Stage,
    leaf_counts: Vec<usize>,
    saturated: usize,
    candidate_losses: Option<Vec<f64>>,
}

struct Ctx<'a> {
    ds: &'a Dataset,
    ranks: &'a FeatureRanks,
    samples: Vec<u32>,
    params: TreeParams,
    cfg: &'a BoostConfig,
}

impl Ctx<'_> {
    fn fit(&self, residuals: &[f64], weights: &[f64], leaf_scale: f64) -> FittedTree {
        let params = TreeParams {
            leaf_scale,
            ..self.params
        };
        fit_tree(residuals, weights, self.ranks, &self.samples, &params)
    }

    /// One tree per class, fitted independently, then the scores move.
    fn plain_step(&self, state: &mut FitState) -> Step {
        let k = state.n_classes;
        let n = self.ds.n_samples();
        let kf = k as f64;
        let classic = self.cfg.algorithm == Algorithm::LogitClassic;
        let z_max = self.cfg.z_max;
        let labels = self.ds.labels();
        let probs = &state.probs;

        let fits: Vec<FittedTree> = (0..k)
            .into_par_iter()
            .map(|c| {
                let mut res = vec![0.0; n];
                let mut w = vec![0.0; n];
                for i in 0..n {
                    let p = probs[i * k + c];
                    let r = if labels[i] == c { 1.0 } else { 0.0 };
                    let h = p * (1.0 - p);
                    w[i] = h;
                    res[i] = if classic {
                        let z = if r == 1.0 { 1.0 / p } else { -1.0 / (1.0 - p) };
                        z.clamp(-z_max, z_max) * h
                    } else {
                        r - p
                    };
                }
                let scale = if classic { 1.0 } else { (kf - 1.0) / kf };
                self.fit(&res, &w, scale)
            })
            .collect();

        let nu = self.cfg.shrinkage;
        if classic {
            let mut f = vec![0.0; k];
            for (i, row) in state.scores.chunks_exact_mut(k).enumerate() {
                for (c, fit) in fits.iter().enumerate() {
                    f[c] = fit.output(i);
                }
                centered_update(row, &f, nu);
            }
        } else {
            for (i, row) in state.scores.chunks_exact_mut(k).enumerate() {
                for (s, fit) in row.iter_mut().zip(&fits) {
                    *s += nu * fit.output(i);
                }
            }
        }
        softmax_rows(&state.scores, k, &mut state.probs);
        state.loss_history.push(nll_loss(labels, &state.probs, k));

        Step {
            leaf_counts: fits.iter().map(|f| f.tree.n_leaves()).collect(),
            saturated: fits.iter().map(|f| f.saturated_leaves).sum(),
            stage: Stage::Plain {
                trees: fits.into_iter().map(|f| f.tree).collect(),
            },
            candidate_losses: None,
        }
    }

    /// Try every base class, keep the one with the smallest training loss.
    fn abc_step(&self, state: &mut FitState) -> Step {
        let k = state.n_classes;
        let n = self.ds.n_samples();
        let labels = self.ds.labels();
        let nu = self.cfg.shrinkage;

        // r - p and p, per sample and class, shared by all candidates
        let mut resid = vec![0.0; n * k];
        for i in 0..n {
            for c in 0..k {
                let r = if labels[i] == c { 1.0 } else { 0.0 };
                resid[i * k + c] = r - state.probs[i * k + c];
            }
        }
        let probs = &state.probs;
        let scores = &state.scores;

        let candidates: Vec<Candidate> = (0..k)
            .into_par_iter()
            .map(|b| {
                let mut g = scores.clone();
                let mut trees = Vec::with_capacity(k - 1);
                let mut leaf_counts = Vec::with_capacity(k - 1);
                let mut saturated = 0;
                let mut res = vec![0.0; n];
                let mut w = vec![0.0; n];
                for c in (0..k).filter(|&c| c != b) {
                    for i in 0..n {
                        let (pb, pc) = (probs[i * k + b], probs[i * k + c]);
                        res[i] = resid[i * k + c] - resid[i * k + b];
                        w[i] = pb * (1.0 - pb) + pc * (1.0 - pc) + 2.0 * pb * pc;
                    }
                    let fit = self.fit(&res, &w, 1.0);
                    for i in 0..n {
                        g[i * k + c] += nu * fit.output(i);
                    }
                    leaf_counts.push(fit.tree.n_leaves());
                    saturated += fit.saturated_leaves;
                    trees.push(fit.tree);
                }
                for row in g.chunks_exact_mut(k) {
                    let others: f64 = row
                        .iter()
                        .enumerate()
                        .filter(|&(c, _)| c != b)
                        .map(|(_, v)| v)
                        .sum();
                    row[b] = -others;
                }
                let mut q = vec![0.0; n * k];
                softmax_rows(&g, k, &mut q);
                let loss = nll_loss(labels, &q, k);
                Candidate {
                    trees,
                    leaf_counts,
                    saturated,
                    scores: g,
                    probs: q,
                    loss,
                }
            })
            .collect();

        let losses: Vec<f64> = candidates.iter().map(|c| c.loss).collect();
        let mut best = 0;
        for (b, &l) in losses.iter().enumerate() {
            if l < losses[best] || losses[best].is_nan() {
                best = b;
            }
        }
        let chosen = candidates.into_iter().nth(best).expect("K >= 3 candidates");
        state.scores = chosen.scores;
        state.probs = chosen.probs;
        state.loss_history.push(chosen.loss);

        Step {
            stage: Stage::Abc {
                base_class: best,
                trees: chosen.trees,
            },
            leaf_counts: chosen.leaf_counts,
            saturated: chosen.saturated,
            candidate_losses: Some(losses),
        }
    }
}

struct Candidate {
    trees: Vec<crate::tree::RegressionTree>,
    leaf_counts: Vec<usize>,
    saturated: usize,
    scores: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
}

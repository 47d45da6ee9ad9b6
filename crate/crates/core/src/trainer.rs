//! Mini-batch SGD with momentum, projected onto the stability constraints
//! after every step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment, prepare_eval, AugmentConfig, Dataset, SkeletonSequence, Split};
use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::layer::SignalSequence;
use crate::model::{argmax, forward_deep, loss_grads_probs, DeepStgc, ModelConfig};

/// Every knob of a training run. Serialized as the `--config` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Stability margin kept by the projection.
    pub epsilon: f64,
    pub seed: u64,
    pub segments: usize,
    pub jitter: bool,
    pub aug_copies: usize,
    /// Evaluate on the test split every this many epochs (0 disables).
    pub eval_every: usize,
    /// Stop once test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Rescale the batch gradient to at most this Euclidean norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let aug = AugmentConfig::default();
        Self {
            model: ModelConfig::default(),
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            epsilon: crate::layer::DEFAULT_EPSILON,
            seed: 0,
            segments: aug.segments,
            jitter: aug.jitter,
            aug_copies: aug.aug_copies,
            eval_every: 1,
            target_accuracy: None,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            segments: self.segments,
            jitter: self.jitter,
            aug_copies: self.aug_copies,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.segments == 0 || self.aug_copies == 0 {
            return bad("segments and aug_copies must be positive");
        }
        if matches!(self.grad_clip, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        if self.model.k1 == 0 || self.model.k2 == 0 || self.model.widths.is_empty() {
            return bad("model needs K1, K2 ≥ 1 and at least one layer");
        }
        Ok(())
    }
}

/// Classification quality over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Per class; 0 when the class is never predicted.
    pub precision: Vec<f64>,
    /// Per class; 0 when the class never occurs.
    pub recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let precision = (0..n_classes)
            .map(|c| ratio(confusion[c][c], (0..n_classes).map(|t| confusion[t][c]).sum()))
            .collect();
        let recall = (0..n_classes)
            .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
            .collect();
        Self {
            accuracy: ratio(correct, labels.len()),
            precision,
            recall,
            confusion,
        }
    }
}

/// Per-epoch record, including the constraint audit taken after every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub steps: usize,
    /// Steps after which some layer violated the constraints.
    pub violations: usize,
    /// Largest `Σ_k ‖W_k‖_∞` seen after any step this epoch.
    pub max_w_norm_sum: f64,
    /// Smallest diagonal entry of any `W_k` seen after any step this epoch.
    pub min_w_diagonal: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: DeepStgc<f64>,
    pub graph: StaticGraph<f64>,
    pub history: Vec<EpochStats>,
}

/// The skeleton shared by every sequence of the dataset.
pub fn shared_graph(dataset: &Dataset) -> Result<StaticGraph<f64>> {
    let first = dataset
        .sequences
        .first()
        .ok_or_else(|| Error::Invalid("dataset is empty".into()))?;
    if let Some(s) = dataset
        .sequences
        .iter()
        .find(|s| s.n_joints() != first.n_joints() || s.bones() != first.bones())
    {
        return Err(Error::Graph(format!(
            "sequences disagree on the skeleton ({} vs {} joints or different bones)",
            s.n_joints(),
            first.n_joints()
        )));
    }
    first.graph()
}

fn audit(net: &DeepStgc<f64>) -> (f64, f64) {
    let mut max_sum = 0.0f64;
    let mut min_diag = f64::INFINITY;
    for bank in net.layers() {
        max_sum = max_sum.max(bank.w_norm_sum());
        for w in bank.w() {
            let diag = match bank.mode() {
                crate::layer::Mode::Dependent => w.diag(),
                crate::layer::Mode::Independent => w.as_slice().to_vec(),
            };
            min_diag = diag.into_iter().fold(min_diag, f64::min);
        }
    }
    (max_sum, min_diag)
}

/// Predicts every sequence after the evaluation-time preprocessing.
pub fn predict_all(
    net: &DeepStgc<f64>,
    graph: &StaticGraph<f64>,
    seqs: &[&SkeletonSequence],
    segments: usize,
) -> Result<Vec<usize>> {
    seqs.par_iter()
        .map(|s| {
            let x = prepare_eval(s, segments)?.to_signal();
            Ok(argmax(&forward_deep(graph, net, &x)?))
        })
        .collect()
}

pub fn evaluate(
    net: &DeepStgc<f64>,
    graph: &StaticGraph<f64>,
    seqs: &[&SkeletonSequence],
    segments: usize,
) -> Result<Metrics> {
    let predicted = predict_all(net, graph, seqs, segments)?;
    let labels: Vec<usize> = seqs.iter().map(|s| s.label).collect();
    Ok(Metrics::from_predictions(&labels, &predicted, net.n_classes()))
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, cfg, |_| {})
}

/// Trains on the `train` split, calling `on_epoch` after each epoch.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = shared_graph(dataset)?;
    let train_set = dataset.part(Split::Train);
    let test_set = dataset.part(Split::Test);
    if train_set.is_empty() {
        return Err(Error::Invalid("dataset has no training sequences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = DeepStgc::init(
        &cfg.model,
        graph.n_nodes(),
        dataset.n_classes(),
        cfg.epsilon,
        &mut rng,
    )?;
    let mut velocity = net.zeros_like();
    let aug = cfg.augment();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut batch: Vec<(SignalSequence<f64>, usize)> =
            Vec::with_capacity(train_set.len() * aug.aug_copies);
        for s in &train_set {
            for _ in 0..aug.aug_copies {
                batch.push((augment(s, &aug, &mut rng)?.to_signal(), s.label));
            }
        }
        batch.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut stats = EpochStats {
            epoch,
            mean_loss: 0.0,
            train_accuracy: 0.0,
            test_accuracy: None,
            steps: 0,
            violations: 0,
            max_w_norm_sum: 0.0,
            min_w_diagonal: f64::INFINITY,
        };
        for chunk in batch.chunks(cfg.batch_size) {
            let results: Vec<(f64, bool, DeepStgc<f64>)> = chunk
                .par_iter()
                .map(|(x, label)| {
                    let (loss, g, probs) = loss_grads_probs(&net, &graph, x, *label)?;
                    let hit = argmax(&probs) == *label;
                    Ok((loss, hit, g))
                })
                .collect::<Result<_>>()?;
            let mut grad = net.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for (loss, hit, g) in &results {
                loss_sum += loss;
                correct += usize::from(*hit);
                grad.axpy(scale, g);
            }
            let batch_loss: f64 = results.iter().map(|r| r.0).sum::<f64>() * scale;
            if !batch_loss.is_finite() || !grad.params().all(|p| p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: stats.steps,
                    loss: batch_loss,
                });
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grad.params().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.scale_params(clip / norm);
                }
            }
            velocity.scale_params(cfg.momentum);
            velocity.axpy(1.0, &grad);
            net.axpy(-cfg.learning_rate, &velocity);
            net.project_stable(cfg.epsilon);

            stats.steps += 1;
            if !net.satisfies_constraints(cfg.epsilon) {
                stats.violations += 1;
            }
            let (s, d) = audit(&net);
            stats.max_w_norm_sum = stats.max_w_norm_sum.max(s);
            stats.min_w_diagonal = stats.min_w_diagonal.min(d);
        }
        stats.mean_loss = loss_sum / batch.len() as f64;
        stats.train_accuracy = correct as f64 / batch.len() as f64;
        let last = epoch + 1 == cfg.epochs;
        if !test_set.is_empty() && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last) {
            stats.test_accuracy = Some(evaluate(&net, &graph, &test_set, cfg.segments)?.accuracy);
        }
        on_epoch(&stats);
        let reached = matches!(
            (cfg.target_accuracy, stats.test_accuracy),
            (Some(target), Some(acc)) if acc >= target
        );
        history.push(stats);
        if reached {
            break;
        }
    }
    Ok(TrainOutcome {
        net,
        graph,
        history,
    })
}

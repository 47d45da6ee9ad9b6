//! Stacked STGC layers with a softmax classification head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::layer::{self, FilterBank, LayerTrace, Mode, SignalSequence};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Which output states feed the classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// Final output state `O_T`, flattened row-major.
    #[default]
    Last,
    /// `(1/T) Σ_t O_t`, flattened row-major.
    MeanOverT,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mode: Mode,
    pub k1: usize,
    pub k2: usize,
    /// Output width of each layer, bottom to top.
    pub widths: Vec<usize>,
    pub head_input: HeadInput,
    /// Channels of the raw input signal (3 for joint coordinates).
    pub input_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Dependent,
            k1: 2,
            k2: 6,
            widths: vec![32, 64],
            head_input: HeadInput::Last,
            input_dim: 3,
        }
    }
}

/// Deep STGC network. Also used as the gradient container for itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepStgc<T> {
    layers: Vec<FilterBank<T>>,
    /// `(n_nodes · d_last) × n_classes`.
    head_w: Matrix<T>,
    head_b: Vec<T>,
    head_input: HeadInput,
    n_nodes: usize,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub traces: Vec<LayerTrace<T>>,
    pub features: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> DeepStgc<T> {
    pub fn new(
        layers: Vec<FilterBank<T>>,
        head_w: Matrix<T>,
        head_b: Vec<T>,
        head_input: HeadInput,
        n_nodes: usize,
    ) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Invalid("network needs at least one layer".into()))?;
        for pair in layers.windows(2) {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(Error::Dimension(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].d_out(),
                    pair[1].d_in()
                )));
            }
        }
        if head_w.rows() != n_nodes * last.d_out() || head_w.cols() != head_b.len() {
            return Err(Error::Dimension(format!(
                "head must be {}x{}, got {:?} with {} biases",
                n_nodes * last.d_out(),
                head_b.len(),
                head_w.shape(),
                head_b.len()
            )));
        }
        if head_b.is_empty() {
            return Err(Error::Invalid("need at least one class".into()));
        }
        Ok(Self {
            layers,
            head_w,
            head_b,
            head_input,
            n_nodes,
        })
    }

    /// Random initialization: stable filter banks and a uniform head in
    /// `±1/√features` with zero bias.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        n_nodes: usize,
        n_classes: usize,
        epsilon: T,
        rng: &mut R,
    ) -> Result<Self> {
        if config.widths.is_empty() {
            return Err(Error::Invalid("widths must not be empty".into()));
        }
        let mut layers = Vec::with_capacity(config.widths.len());
        let mut d_in = config.input_dim;
        for &d_out in &config.widths {
            layers.push(FilterBank::init(
                config.mode,
                config.k1,
                config.k2,
                d_in,
                d_out,
                epsilon,
                rng,
            )?);
            d_in = d_out;
        }
        let features = n_nodes * d_in;
        let s = 1.0 / (features as f64).sqrt();
        let head_w = Matrix::from_fn(features, n_classes, |_, _| T::of(rng.gen_range(-s..=s)));
        Self::new(
            layers,
            head_w,
            vec![T::zero(); n_classes],
            config.head_input,
            n_nodes,
        )
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(FilterBank::zeros_like).collect(),
            head_w: Matrix::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: vec![T::zero(); self.head_b.len()],
            head_input: self.head_input,
            n_nodes: self.n_nodes,
        }
    }

    pub fn layers(&self) -> &[FilterBank<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FilterBank<T>] {
        &mut self.layers
    }

    pub fn head_w(&self) -> &Matrix<T> {
        &self.head_w
    }

    pub fn head_b(&self) -> &[T] {
        &self.head_b
    }

    pub fn head_input(&self) -> HeadInput {
        self.head_input
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_classes(&self) -> usize {
        self.head_b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn n_params(&self) -> usize {
        self.params().count()
    }

    /// Every parameter: layer banks bottom to top, then head weights, then bias.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|b| b.params())
            .chain(self.head_w.as_slice())
            .chain(&self.head_b)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .chain(self.head_w.as_mut_slice())
            .chain(self.head_b.iter_mut())
    }

    /// `self += alpha · other` over all parameters.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (p, &g) in self.params_mut().zip(other.params()) {
            *p += alpha * g;
        }
    }

    pub fn scale_params(&mut self, alpha: T) {
        for p in self.params_mut() {
            *p *= alpha;
        }
    }

    /// Applies the stability projection to every layer.
    pub fn project_stable(&mut self, epsilon: T) {
        for layer in &mut self.layers {
            *layer = layer.project_stable(epsilon);
        }
    }

    pub fn satisfies_constraints(&self, epsilon: T) -> bool {
        self.layers.iter().all(|l| l.satisfies_constraints(epsilon))
    }

    fn check_input(&self, graph: &StaticGraph<T>, xseq: &SignalSequence<T>) -> Result<()> {
        if graph.n_nodes() != self.n_nodes || xseq.n_nodes() != self.n_nodes {
            return Err(Error::Dimension(format!(
                "network built for {} nodes, got graph with {} and sequence with {}",
                self.n_nodes,
                graph.n_nodes(),
                xseq.n_nodes()
            )));
        }
        if xseq.channels() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} input channels, got {}",
                self.input_dim(),
                xseq.channels()
            )));
        }
        Ok(())
    }

    /// Runs all layers and the head, keeping what backward needs.
    pub fn forward_cached(
        &self,
        graph: &StaticGraph<T>,
        xseq: &SignalSequence<T>,
    ) -> Result<ForwardCache<T>> {
        self.check_input(graph, xseq)?;
        let mut traces: Vec<LayerTrace<T>> = Vec::with_capacity(self.layers.len());
        for (i, bank) in self.layers.iter().enumerate() {
            let trace = if i == 0 {
                layer::forward(graph, bank, xseq)?
            } else {
                let prev = &traces[i - 1];
                let relu = prev
                    .outputs
                    .iter()
                    .map(|o| o.map(|x| x.max(T::zero())))
                    .collect();
                layer::forward(graph, bank, &SignalSequence::new(relu)?)?
            };
            traces.push(trace);
        }
        let top = traces.last().expect("at least one layer");
        let features = match self.head_input {
            HeadInput::Last => top.last_output().as_slice().to_vec(),
            HeadInput::MeanOverT => {
                let mut acc = Matrix::zeros(top.outputs[0].rows(), top.outputs[0].cols());
                let inv = T::one() / T::of(top.outputs.len() as f64);
                for o in &top.outputs {
                    acc.axpy(inv, o);
                }
                acc.into_vec()
            }
        };
        let mut logits = self.head_b.clone();
        for (f, &x) in features.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (l, &w) in logits.iter_mut().zip(self.head_w.row(f)) {
                *l += x * w;
            }
        }
        let probs = softmax(&logits);
        Ok(ForwardCache {
            traces,
            features,
            logits,
            probs,
        })
    }

    /// Head input: the flattened (or time-averaged) top-layer output.
    pub fn features(&self, graph: &StaticGraph<T>, xseq: &SignalSequence<T>) -> Result<Vec<T>> {
        Ok(self.forward_cached(graph, xseq)?.features)
    }

    pub fn predict(&self, graph: &StaticGraph<T>, xseq: &SignalSequence<T>) -> Result<usize> {
        Ok(argmax(&forward_deep(graph, self, xseq)?))
    }
}

/// Class probabilities for one sequence.
pub fn forward_deep<T: Scalar>(
    graph: &StaticGraph<T>,
    net: &DeepStgc<T>,
    xseq: &SignalSequence<T>,
) -> Result<Vec<T>> {
    Ok(net.forward_cached(graph, xseq)?.probs)
}

/// Cross-entropy `−log p_label` and its exact gradient for every parameter.
pub fn loss_and_grads<T: Scalar>(
    net: &DeepStgc<T>,
    graph: &StaticGraph<T>,
    xseq: &SignalSequence<T>,
    label: usize,
) -> Result<(T, DeepStgc<T>)> {
    let (loss, grads, _) = loss_grads_probs(net, graph, xseq, label)?;
    Ok((loss, grads))
}

/// [`loss_and_grads`] that also hands back the class probabilities.
pub fn loss_grads_probs<T: Scalar>(
    net: &DeepStgc<T>,
    graph: &StaticGraph<T>,
    xseq: &SignalSequence<T>,
    label: usize,
) -> Result<(T, DeepStgc<T>, Vec<T>)> {
    if label >= net.n_classes() {
        return Err(Error::Label {
            label,
            n_classes: net.n_classes(),
        });
    }
    let cache = net.forward_cached(graph, xseq)?;
    let loss = cross_entropy(&cache.logits, label);
    let mut grads = net.zeros_like();

    let mut dlogits = cache.probs.clone();
    dlogits[label] -= T::one();
    grads.head_b.copy_from_slice(&dlogits);
    let mut dfeat = vec![T::zero(); cache.features.len()];
    for (f, &x) in cache.features.iter().enumerate() {
        let row = grads.head_w.row_mut(f);
        for (g, &dl) in row.iter_mut().zip(&dlogits) {
            *g = x * dl;
        }
        dfeat[f] = net.head_w.row(f).iter().zip(&dlogits).map(|(&w, &dl)| w * dl).sum();
    }

    let top = cache.traces.last().expect("at least one layer");
    let (rows, cols) = top.outputs[0].shape();
    let steps = top.outputs.len();
    let dfeat = Matrix::from_vec(rows, cols, dfeat)?;
    let mut dout: Vec<Matrix<T>> = match net.head_input {
        HeadInput::Last => {
            let mut v = vec![Matrix::zeros(rows, cols); steps];
            v[steps - 1] = dfeat;
            v
        }
        HeadInput::MeanOverT => vec![dfeat.scale(T::one() / T::of(steps as f64)); steps],
    };

    for i in (0..net.layers.len()).rev() {
        let lg = layer::backward(&cache.traces[i], &net.layers[i], &dout)?;
        grads.layers[i] = lg.bank;
        if i > 0 {
            let below = &cache.traces[i - 1].outputs;
            dout = lg
                .inputs
                .into_iter()
                .zip(below)
                .map(|(dx, o)| {
                    Matrix::from_fn(dx.rows(), dx.cols(), |r, c| {
                        if o[(r, c)] > T::zero() {
                            dx[(r, c)]
                        } else {
                            T::zero()
                        }
                    })
                })
                .collect();
        }
    }
    Ok((loss, grads, cache.probs))
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    lse - logits[label]
}

pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(head_input: HeadInput) -> (StaticGraph<f64>, DeepStgc<f64>, SignalSequence<f64>) {
        let g = StaticGraph::from_bones(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ModelConfig {
            k1: 2,
            k2: 3,
            widths: vec![3, 2],
            head_input,
            ..ModelConfig::default()
        };
        let net = DeepStgc::init(&cfg, 4, 3, 1e-3, &mut rng).unwrap();
        let frames = (0..4)
            .map(|t| Matrix::from_fn(4, 3, |i, j| ((t * 7 + i * 3 + j) % 5) as f64 * 0.3 - 0.6))
            .collect();
        (g, net, SignalSequence::new(frames).unwrap())
    }

    #[test]
    fn probabilities_are_a_distribution() {
        let (g, net, x) = small_net(HeadInput::Last);
        let p = forward_deep(&g, &net, &x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn zero_input_gives_uniform() {
        let (g, net, _) = small_net(HeadInput::MeanOverT);
        let x = SignalSequence::new(vec![Matrix::zeros(4, 3); 3]).unwrap();
        let p = forward_deep(&g, &net, &x).unwrap();
        for q in p {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_extremes() {
        let p = softmax(&[50.0, -50.0, 0.0, 49.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((cross_entropy(&[0.0, 0.0, 0.0], 1) - 3f64.ln()).abs() < 1e-15);
        assert!(cross_entropy(&[800.0f64, 0.0], 0).abs() < 1e-15);
    }

    #[test]
    fn invalid_label_and_widths() {
        let (g, net, x) = small_net(HeadInput::Last);
        assert!(matches!(
            loss_and_grads(&net, &g, &x, 3),
            Err(Error::Label { label: 3, n_classes: 3 })
        ));
        let a = FilterBank::<f64>::zeros(Mode::Dependent, 1, 1, 3, 4).unwrap();
        let b = FilterBank::<f64>::zeros(Mode::Dependent, 1, 1, 5, 2).unwrap();
        assert!(DeepStgc::new(vec![a, b], Matrix::zeros(8, 2), vec![0.0; 2], HeadInput::Last, 4).is_err());
    }
}

//! One spatio-temporal graph convolution layer.
//!
//! The layer runs the recursion
//!
//! ```text
//! Y_{t+1} = Σ_{k<K1} ψ_k(L) Y_t W_k + X_t V_0
//! O_{t+1} = Y_{t+1} + Σ_{1≤k<K2} ψ_k(L) X_t V_k
//! ```
//!
//! with `Y_0 = 0`, in either the dependent form (full channel mixing) or the
//! independent form (`W_k`, `V_k` diagonal, one filter per channel), and
//! differentiates it exactly by backpropagation through time.

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Stability margin applied by [`FilterBank::project_stable`] by default.
pub const DEFAULT_EPSILON: f64 = 1e-3;

const BANK_MAGIC: &[u8; 4] = b"STGC";
const BANK_VERSION: u32 = 1;
/// Size of the fixed header preceding the parameter payload.
pub const BANK_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dependent,
    Independent,
}

impl Mode {
    fn code(self) -> u8 {
        match self {
            Mode::Dependent => 0,
            Mode::Independent => 1,
        }
    }
}

/// Learnable mappings `W_0..W_{K1-1}` (temporal) and `V_0..V_{K2-1}` (spatial).
///
/// In dependent mode `W_k` is `d_out × d_out` and `V_k` is `d_in × d_out`.
/// In independent mode `d_in == d_out == d` and each mapping is stored as a
/// `1 × d` row holding its diagonal.
///
/// The same type doubles as the container for parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    mode: Mode,
    d_in: usize,
    d_out: usize,
    w: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> FilterBank<T> {
    pub fn dependent(w: Vec<Matrix<T>>, v: Vec<Matrix<T>>) -> Result<Self> {
        let first = v
            .first()
            .ok_or_else(|| Error::Invalid("K2 must be at least 1".into()))?;
        let (d_in, d_out) = first.shape();
        if w.is_empty() {
            return Err(Error::Invalid("K1 must be at least 1".into()));
        }
        if let Some(bad) = w.iter().find(|m| m.shape() != (d_out, d_out)) {
            return Err(Error::Dimension(format!(
                "W_k must be {d_out}x{d_out}, got {:?}",
                bad.shape()
            )));
        }
        if let Some(bad) = v.iter().find(|m| m.shape() != (d_in, d_out)) {
            return Err(Error::Dimension(format!(
                "V_k must be {d_in}x{d_out}, got {:?}",
                bad.shape()
            )));
        }
        Ok(Self {
            mode: Mode::Dependent,
            d_in,
            d_out,
            w,
            v,
        })
    }

    pub fn independent(w: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Invalid("K1 must be at least 1".into()));
        }
        if v.is_empty() {
            return Err(Error::Invalid("K2 must be at least 1".into()));
        }
        let d = v[0].len();
        if w.iter().chain(&v).any(|x| x.len() != d) {
            return Err(Error::Dimension(format!(
                "every w_k and v_k must have length {d}"
            )));
        }
        let row = |x: Vec<T>| Matrix::from_vec(1, d, x).expect("length checked");
        Ok(Self {
            mode: Mode::Independent,
            d_in: d,
            d_out: d,
            w: w.into_iter().map(row).collect(),
            v: v.into_iter().map(row).collect(),
        })
    }

    pub fn zeros(mode: Mode, k1: usize, k2: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if k1 == 0 || k2 == 0 {
            return Err(Error::Invalid("K1 and K2 must be at least 1".into()));
        }
        match mode {
            Mode::Dependent => Self::dependent(
                vec![Matrix::zeros(d_out, d_out); k1],
                vec![Matrix::zeros(d_in, d_out); k2],
            ),
            Mode::Independent => {
                if d_in != d_out {
                    return Err(Error::Dimension(
                        "independent mode requires d_in == d_out".into(),
                    ));
                }
                Self::independent(vec![vec![T::zero(); d_in]; k1], vec![vec![T::zero(); d_in]; k2])
            }
        }
    }

    /// Uniform initialization in `[-1/(K1·d_out), 1/(K1·d_out)]` for `W` and
    /// `[-1/(K2·max(d_in, d_out)), …]` for `V`, followed by projection onto
    /// the stability region.
    pub fn init<R: Rng + ?Sized>(
        mode: Mode,
        k1: usize,
        k2: usize,
        d_in: usize,
        d_out: usize,
        epsilon: T,
        rng: &mut R,
    ) -> Result<Self> {
        let mut bank = Self::zeros(mode, k1, k2, d_in, d_out)?;
        let sw = 1.0 / (k1 * d_out) as f64;
        let sv = 1.0 / (k2 * d_in.max(d_out)) as f64;
        for m in &mut bank.w {
            for x in m.as_mut_slice() {
                *x = T::of(rng.gen_range(-sw..=sw));
            }
        }
        for m in &mut bank.v {
            for x in m.as_mut_slice() {
                *x = T::of(rng.gen_range(-sv..=sv));
            }
        }
        Ok(bank.project_stable(epsilon))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mode: self.mode,
            d_in: self.d_in,
            d_out: self.d_out,
            w: self.w.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
            v: self.v.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }

    #[inline]
    pub fn mode(&self) -> Mode {
        self.mode
    }

    #[inline]
    pub fn k1(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn k2(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn d_in(&self) -> usize {
        self.d_in
    }

    #[inline]
    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Raw storage of `W_k` (a `1 × d` diagonal row in independent mode).
    pub fn w(&self) -> &[Matrix<T>] {
        &self.w
    }

    pub fn v(&self) -> &[Matrix<T>] {
        &self.v
    }

    pub fn w_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.w
    }

    pub fn v_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.v
    }

    /// `W_k` as a full matrix.
    pub fn w_dense(&self, k: usize) -> Cow<'_, Matrix<T>> {
        match self.mode {
            Mode::Dependent => Cow::Borrowed(&self.w[k]),
            Mode::Independent => Cow::Owned(Matrix::from_diag(self.w[k].as_slice())),
        }
    }

    /// `V_k` as a full matrix.
    pub fn v_dense(&self, k: usize) -> Cow<'_, Matrix<T>> {
        match self.mode {
            Mode::Dependent => Cow::Borrowed(&self.v[k]),
            Mode::Independent => Cow::Owned(Matrix::from_diag(self.v[k].as_slice())),
        }
    }

    /// Materializes an independent bank as the equivalent dependent one.
    pub fn to_dependent(&self) -> Self {
        match self.mode {
            Mode::Dependent => self.clone(),
            Mode::Independent => Self {
                mode: Mode::Dependent,
                d_in: self.d_in,
                d_out: self.d_out,
                w: (0..self.k1()).map(|k| self.w_dense(k).into_owned()).collect(),
                v: (0..self.k2()).map(|k| self.v_dense(k).into_owned()).collect(),
            },
        }
    }

    pub fn n_params(&self) -> usize {
        self.w.iter().chain(&self.v).map(|m| m.as_slice().len()).sum()
    }

    /// All parameters, `W` blocks first, each block row-major.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.w.iter().chain(&self.v).flat_map(|m| m.as_slice())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w
            .iter_mut()
            .chain(self.v.iter_mut())
            .flat_map(|m| m.as_mut_slice())
    }

    /// `Σ_k ‖W_k‖_∞`.
    pub fn w_norm_sum(&self) -> T {
        self.w
            .iter()
            .map(|m| match self.mode {
                Mode::Dependent => m.inf_norm(),
                Mode::Independent => m.max_abs(),
            })
            .sum()
    }

    fn w_diagonal_entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.w.iter().enumerate().flat_map(move |(k, m)| {
            let diag = match self.mode {
                Mode::Dependent => m.diag(),
                Mode::Independent => m.as_slice().to_vec(),
            };
            diag.into_iter().enumerate().map(move |(i, x)| (k, i, x))
        })
    }

    /// Whether `W_{k,ii} ≥ 0` for all `k, i` and `Σ_k ‖W_k‖_∞ ≤ 1 − ε`.
    pub fn satisfies_constraints(&self, epsilon: T) -> bool {
        self.w_diagonal_entries().all(|(_, _, x)| x >= T::zero())
            && self.w_norm_sum() <= T::one() - epsilon
    }

    /// Clips negative diagonals of every `W_k` to zero, then rescales all
    /// `W_k` jointly so that `Σ_k ‖W_k‖_∞ ≤ 1 − ε`. `V` is untouched.
    /// A bank that already satisfies both constraints is returned unchanged.
    pub fn project_stable(&self, epsilon: T) -> Self {
        assert!(
            epsilon > T::zero() && epsilon < T::one(),
            "stability margin must lie in (0, 1)"
        );
        let mut out = self.clone();
        let mode = out.mode;
        for m in &mut out.w {
            match mode {
                Mode::Dependent => {
                    for i in 0..m.rows() {
                        if m[(i, i)] < T::zero() {
                            m[(i, i)] = T::zero();
                        }
                    }
                }
                Mode::Independent => {
                    for x in m.as_mut_slice() {
                        if *x < T::zero() {
                            *x = T::zero();
                        }
                    }
                }
            }
        }
        let target = T::one() - epsilon;
        let sum = out.w_norm_sum();
        if sum > target {
            let mut factor = target / sum;
            loop {
                for m in &mut out.w {
                    m.scale_in_place(factor);
                }
                // rounding in the row sums can leave us an ulp above target
                if out.w_norm_sum() <= target {
                    break;
                }
                factor = T::one() - T::of(4.0) * T::epsilon();
            }
        }
        out
    }

    /// Binary blob: 24-byte header (`STGC`, version u32, mode u8, pad u8,
    /// K1, K2, d_in, d_out as u16, 6 pad bytes) followed by little-endian
    /// f64 values of every `W_k` then every `V_k`, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BANK_HEADER_LEN + 8 * self.n_params());
        out.extend_from_slice(BANK_MAGIC);
        out.extend_from_slice(&BANK_VERSION.to_le_bytes());
        out.push(self.mode.code());
        out.push(0);
        for x in [self.k1(), self.k2(), self.d_in, self.d_out] {
            out.extend_from_slice(&(x as u16).to_le_bytes());
        }
        out.extend_from_slice(&[0u8; 6]);
        for &x in self.params() {
            out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
        }
        out
    }

    /// Parses a blob written by [`FilterBank::to_bytes`]; returns the bank
    /// and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let perr = |offset: usize, msg: &str| Error::Parse {
            offset,
            line: None,
            msg: msg.to_string(),
        };
        if bytes.len() < BANK_HEADER_LEN {
            return Err(perr(bytes.len(), "truncated filter bank header"));
        }
        if &bytes[0..4] != BANK_MAGIC {
            return Err(perr(0, "bad filter bank magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != BANK_VERSION {
            return Err(Error::Version {
                found: version,
                expected: BANK_VERSION,
            });
        }
        let mode = match bytes[8] {
            0 => Mode::Dependent,
            1 => Mode::Independent,
            _ => return Err(perr(8, "unknown filter bank mode")),
        };
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
        let (k1, k2, d_in, d_out) = (u16_at(10), u16_at(12), u16_at(14), u16_at(16));
        let mut bank = Self::zeros(mode, k1, k2, d_in, d_out)
            .map_err(|e| perr(10, &format!("bad filter bank header: {e}")))?;
        let need = BANK_HEADER_LEN + 8 * bank.n_params();
        if bytes.len() < need {
            return Err(perr(bytes.len(), "truncated filter bank payload"));
        }
        for (i, p) in bank.params_mut().enumerate() {
            let o = BANK_HEADER_LEN + 8 * i;
            *p = T::of(f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()));
        }
        Ok((bank, need))
    }
}

/// Time-ordered node signals `X_0 .. X_{T-1}`, each `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence<T> {
    frames: Vec<Matrix<T>>,
}

impl<T: Scalar> SignalSequence<T> {
    pub fn new(frames: Vec<Matrix<T>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Invalid("sequence must have at least one frame".into()))?;
        let shape = first.shape();
        if frames.iter().any(|f| f.shape() != shape) {
            return Err(Error::Dimension("frames differ in shape".into()));
        }
        Ok(Self { frames })
    }

    /// `len` copies of the same frame.
    pub fn constant(frame: Matrix<T>, len: usize) -> Result<Self> {
        Self::new(vec![frame; len])
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn frames(&self) -> &[Matrix<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Matrix<T>> {
        self.frames
    }
}

/// Everything a forward pass produced and needs for replay in [`backward`].
#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    /// `Y_0 ..= Y_T` (`Y_0 = 0`).
    pub hidden: Vec<Matrix<T>>,
    /// `O_1 ..= O_T`, stored at index `t - 1`.
    pub outputs: Vec<Matrix<T>>,
    /// `X_0 .. X_{T-1}`.
    pub inputs: Vec<Matrix<T>>,
    /// `ψ_0 .. ψ_{max(K1, K2) - 1}`.
    pub fields: Vec<Matrix<T>>,
    mode: Mode,
}

impl<T: Scalar> LayerTrace<T> {
    pub fn last_output(&self) -> &Matrix<T> {
        self.outputs.last().expect("trace has at least one step")
    }
}

/// Exact gradients of a scalar loss through one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    /// `∂ℓ/∂W_k` and `∂ℓ/∂V_k`, shaped like the bank.
    pub bank: FilterBank<T>,
    /// `∂ℓ/∂X_t` for `t = 0 .. T-1`.
    pub inputs: Vec<Matrix<T>>,
}

#[inline]
fn apply<T: Scalar>(x: &Matrix<T>, p: &Matrix<T>, mode: Mode) -> Matrix<T> {
    match mode {
        Mode::Dependent => x.matmul(p),
        Mode::Independent => x.scale_columns(p.as_slice()),
    }
}

#[inline]
fn add_apply<T: Scalar>(acc: &mut Matrix<T>, x: &Matrix<T>, p: &Matrix<T>, mode: Mode) {
    match mode {
        Mode::Dependent => acc.add_matmul(x, p),
        Mode::Independent => acc.axpy(T::one(), &x.scale_columns(p.as_slice())),
    }
}

#[inline]
fn apply_transposed<T: Scalar>(g: &Matrix<T>, p: &Matrix<T>, mode: Mode) -> Matrix<T> {
    match mode {
        Mode::Dependent => g.matmul_t(p),
        Mode::Independent => g.scale_columns(p.as_slice()),
    }
}

/// `dp += ∂/∂P ⟨g, x·P⟩`.
fn accumulate_param_grad<T: Scalar>(dp: &mut Matrix<T>, x: &Matrix<T>, g: &Matrix<T>, mode: Mode) {
    match mode {
        Mode::Dependent => dp.axpy(T::one(), &x.t_matmul(g)),
        Mode::Independent => {
            let d = dp.as_mut_slice();
            for i in 0..x.rows() {
                for ((acc, &a), &b) in d.iter_mut().zip(x.row(i)).zip(g.row(i)) {
                    *acc += a * b;
                }
            }
        }
    }
}

#[inline]
fn left_field<T: Scalar>(fields: &[Matrix<T>], k: usize, x: &Matrix<T>) -> Matrix<T> {
    if k == 0 {
        x.clone()
    } else {
        fields[k].matmul(x)
    }
}

/// Static multi-scale graph convolution `Σ_k ψ_k(L) X V_k`.
pub fn multiscale_conv<T: Scalar>(
    graph: &StaticGraph<T>,
    x: &Matrix<T>,
    v: &[Matrix<T>],
) -> Result<Matrix<T>> {
    let first = v
        .first()
        .ok_or_else(|| Error::Invalid("need at least one spatial mapping".into()))?;
    if x.rows() != graph.n_nodes() {
        return Err(Error::Dimension(format!(
            "signal has {} rows, graph has {} nodes",
            x.rows(),
            graph.n_nodes()
        )));
    }
    let (d_in, d_out) = first.shape();
    if x.cols() != d_in || v.iter().any(|m| m.shape() != (d_in, d_out)) {
        return Err(Error::Dimension(format!(
            "signal width {} incompatible with {d_in}x{d_out} mappings",
            x.cols()
        )));
    }
    let fields = graph.fields(v.len());
    let mut out = Matrix::zeros(x.rows(), d_out);
    for (k, vk) in v.iter().enumerate() {
        out.add_matmul(&left_field(&fields, k, x), vk);
    }
    Ok(out)
}

/// One step of the recursion: `(Y_{t+1}, O_{t+1})` from `Y_t` and `X_t`.
/// `fields` must hold at least `max(K1, K2)` receptive fields.
pub(crate) fn step<T: Scalar>(
    fields: &[Matrix<T>],
    bank: &FilterBank<T>,
    y: &Matrix<T>,
    x: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>) {
    let mode = bank.mode();
    let mut next = apply(x, &bank.v[0], mode);
    for (k, wk) in bank.w.iter().enumerate() {
        add_apply(&mut next, &left_field(fields, k, y), wk, mode);
    }
    let mut o = next.clone();
    for (k, vk) in bank.v.iter().enumerate().skip(1) {
        add_apply(&mut o, &fields[k].matmul(x), vk, mode);
    }
    (next, o)
}

fn check_inputs<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
    xseq: &SignalSequence<T>,
) -> Result<()> {
    if xseq.n_nodes() != graph.n_nodes() {
        return Err(Error::Dimension(format!(
            "sequence has {} nodes, graph has {}",
            xseq.n_nodes(),
            graph.n_nodes()
        )));
    }
    if xseq.channels() != bank.d_in() {
        return Err(Error::Dimension(format!(
            "sequence has {} channels, bank expects {}",
            xseq.channels(),
            bank.d_in()
        )));
    }
    Ok(())
}

/// Runs the recursion in whichever mode the bank is in.
pub fn forward<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
    xseq: &SignalSequence<T>,
) -> Result<LayerTrace<T>> {
    check_inputs(graph, bank, xseq)?;
    let mode = bank.mode();
    let n = graph.n_nodes();
    let fields = graph.fields(bank.k1().max(bank.k2())).into_owned();
    let mut hidden = Vec::with_capacity(xseq.len() + 1);
    let mut outputs = Vec::with_capacity(xseq.len());
    hidden.push(Matrix::zeros(n, bank.d_out()));
    for x in xseq.frames() {
        let (next, o) = step(&fields, bank, hidden.last().unwrap(), x);
        hidden.push(next);
        outputs.push(o);
    }
    Ok(LayerTrace {
        hidden,
        outputs,
        inputs: xseq.frames().to_vec(),
        fields,
        mode,
    })
}

/// Dependent-signal recursion (full `W_k`, `V_k`).
pub fn forward_dep<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
    xseq: &SignalSequence<T>,
) -> Result<LayerTrace<T>> {
    if bank.mode() != Mode::Dependent {
        return Err(Error::Mode("forward_dep needs a dependent bank".into()));
    }
    forward(graph, bank, xseq)
}

/// Independent-signal recursion (diagonal `W_k`, `V_k`).
pub fn forward_indep<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
    xseq: &SignalSequence<T>,
) -> Result<LayerTrace<T>> {
    if bank.mode() != Mode::Independent {
        return Err(Error::Mode("forward_indep needs an independent bank".into()));
    }
    forward(graph, bank, xseq)
}

/// Reverse-mode gradients of the recursion given `∂ℓ/∂O_t` for `t = 1..=T`.
pub fn backward<T: Scalar>(
    trace: &LayerTrace<T>,
    bank: &FilterBank<T>,
    grad_outputs: &[Matrix<T>],
) -> Result<LayerGrads<T>> {
    let steps = trace.inputs.len();
    if trace.mode != bank.mode()
        || trace.fields.len() < bank.k1().max(bank.k2())
        || trace.hidden.len() != steps + 1
        || trace.hidden[0].cols() != bank.d_out()
        || trace.inputs.first().map(|x| x.cols()) != Some(bank.d_in())
    {
        return Err(Error::Dimension("trace does not belong to this filter bank".into()));
    }
    if grad_outputs.len() != steps
        || grad_outputs
            .iter()
            .any(|g| g.shape() != trace.outputs[0].shape())
    {
        return Err(Error::Dimension(format!(
            "expected {steps} output gradients of shape {:?}",
            trace.outputs[0].shape()
        )));
    }
    let mode = bank.mode();
    let fields = &trace.fields;
    let mut grads = bank.zeros_like();
    let mut dx = vec![Matrix::zeros(0, 0); steps];
    let n = trace.hidden[0].rows();
    let mut carry = Matrix::zeros(n, bank.d_out());
    for t in (0..steps).rev() {
        let g = &grad_outputs[t];
        let x = &trace.inputs[t];
        let y = &trace.hidden[t];
        // dY_{t+1} = dO_{t+1} + contribution flowing back from Y_{t+2}
        let mut dy = g.clone();
        dy.axpy(T::one(), &carry);

        let mut next_carry = Matrix::zeros(n, bank.d_out());
        for k in 0..bank.k1() {
            accumulate_param_grad(&mut grads.w[k], &left_field(fields, k, y), &dy, mode);
            let back = apply_transposed(&dy, &bank.w[k], mode);
            next_carry.axpy(T::one(), &left_field_t(fields, k, &back));
        }
        carry = next_carry;

        accumulate_param_grad(&mut grads.v[0], x, &dy, mode);
        let mut dxt = apply_transposed(&dy, &bank.v[0], mode);
        for k in 1..bank.k2() {
            accumulate_param_grad(&mut grads.v[k], &fields[k].matmul(x), g, mode);
            let back = apply_transposed(g, &bank.v[k], mode);
            dxt.axpy(T::one(), &fields[k].t_matmul(&back));
        }
        dx[t] = dxt;
    }
    Ok(LayerGrads {
        bank: grads,
        inputs: dx,
    })
}

#[inline]
fn left_field_t<T: Scalar>(fields: &[Matrix<T>], k: usize, x: &Matrix<T>) -> Matrix<T> {
    if k == 0 {
        x.clone()
    } else {
        fields[k].t_matmul(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = Matrix<f64>;

    fn path2() -> StaticGraph<f64> {
        StaticGraph::from_bones(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn conv_identity_and_hand_example() {
        let g = path2();
        let x = M::from_rows(&[[1.0], [-1.0]]);
        assert_eq!(multiscale_conv(&g, &x, &[M::identity(1)]).unwrap(), x);
        let v = vec![M::from_rows(&[[1.0]]), M::from_rows(&[[1.0]])];
        let out = multiscale_conv(&g, &x, &v).unwrap();
        assert_eq!(out, M::from_rows(&[[2.0], [-2.0]]));
        assert!(multiscale_conv(&g, &M::zeros(3, 1), &v).is_err());
        assert!(multiscale_conv(&g, &M::zeros(2, 2), &v).is_err());
    }

    #[test]
    fn first_step_has_no_temporal_term() {
        let g = path2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = FilterBank::<f64>::init(Mode::Dependent, 2, 3, 2, 3, 1e-3, &mut rng).unwrap();
        let x = M::from_rows(&[[0.3, -1.0], [2.0, 0.5]]);
        let trace = forward_dep(&g, &bank, &SignalSequence::new(vec![x.clone()]).unwrap()).unwrap();
        let mut expect = x.matmul(&bank.v()[0]);
        for k in 1..3 {
            expect = expect.add(&g.receptive_field(k).matrix.matmul(&x).matmul(&bank.v()[k]));
        }
        assert!(trace.outputs[0].max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn single_node_is_scalar_arma() {
        let g = StaticGraph::<f64>::from_bones(1, &[]).unwrap();
        let bank = FilterBank::dependent(
            vec![M::from_rows(&[[0.4]]), M::from_rows(&[[0.3]])],
            vec![M::from_rows(&[[1.5]]), M::from_rows(&[[-2.0]])],
        )
        .unwrap();
        let xs = [1.0, -0.5, 2.0, 0.0, 0.25];
        let frames = xs.iter().map(|&x| M::from_rows(&[[x]])).collect();
        let trace = forward(&g, &bank, &SignalSequence::new(frames).unwrap()).unwrap();
        let mut y = 0.0;
        for (t, &x) in xs.iter().enumerate() {
            y = y * 0.4 + x * 1.5;
            assert!((trace.outputs[t][(0, 0)] - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mode_checks() {
        let g = path2();
        let dep = FilterBank::<f64>::zeros(Mode::Dependent, 1, 1, 1, 1).unwrap();
        let ind = FilterBank::<f64>::zeros(Mode::Independent, 1, 1, 1, 1).unwrap();
        let seq = SignalSequence::new(vec![M::zeros(2, 1)]).unwrap();
        assert!(forward_dep(&g, &ind, &seq).is_err());
        assert!(forward_indep(&g, &dep, &seq).is_err());
        assert!(FilterBank::<f64>::zeros(Mode::Independent, 1, 1, 2, 3).is_err());
        assert!(FilterBank::<f64>::zeros(Mode::Dependent, 1, 0, 2, 3).is_err());
    }

    #[test]
    fn zero_gradients_in_zero_out() {
        let g = path2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bank = FilterBank::<f64>::init(Mode::Dependent, 2, 2, 1, 2, 1e-3, &mut rng).unwrap();
        let seq = SignalSequence::new(vec![M::from_rows(&[[1.0], [2.0]]); 3]).unwrap();
        let trace = forward(&g, &bank, &seq).unwrap();
        let grads = backward(&trace, &bank, &vec![M::zeros(2, 2); 3]).unwrap();
        assert!(grads.bank.params().all(|&x| x == 0.0));
        assert!(grads.inputs.iter().all(|m| m.max_abs() == 0.0));
        assert!(backward(&trace, &bank, &vec![M::zeros(2, 2); 2]).is_err());
    }

    #[test]
    fn projection_hand_example() {
        let bank = FilterBank::dependent(
            vec![M::from_rows(&[[-0.5, 2.0], [0.0, 0.1]])],
            vec![M::identity(2)],
        )
        .unwrap();
        let p = bank.project_stable(1e-3);
        let w = &p.w()[0];
        assert_eq!(w[(0, 0)], 0.0);
        assert_eq!(w[(0, 1)], 0.999);
        assert_eq!(w[(1, 0)], 0.0);
        assert!((w[(1, 1)] - 0.04995).abs() < 1e-15);
        assert_eq!(p.v(), bank.v());
        assert!(p.satisfies_constraints(1e-3));
        assert_eq!(p.project_stable(1e-3), p);
    }

    #[test]
    fn projection_leaves_feasible_bank() {
        let bank = FilterBank::dependent(
            vec![
                M::from_rows(&[[0.2, -0.3], [0.1, 0.4]]),
                M::from_rows(&[[0.1, 0.1], [-0.2, 0.2]]),
            ],
            vec![M::identity(2)],
        )
        .unwrap();
        assert!((bank.w_norm_sum() - 0.9).abs() < 1e-15);
        assert_eq!(bank.project_stable(1e-3), bank);
    }

    #[test]
    fn bank_blob_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for mode in [Mode::Dependent, Mode::Independent] {
            let bank = FilterBank::<f64>::init(mode, 2, 3, 4, 4, 1e-3, &mut rng).unwrap();
            let bytes = bank.to_bytes();
            assert_eq!(&bytes[..4], b"STGC");
            assert_eq!(bytes.len(), BANK_HEADER_LEN + 8 * bank.n_params());
            let (back, used) = FilterBank::<f64>::from_bytes(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back, bank);
            assert!(FilterBank::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
        let mut bad = FilterBank::<f64>::zeros(Mode::Dependent, 1, 1, 1, 1).unwrap().to_bytes();
        bad[4] = 7;
        assert!(matches!(
            FilterBank::<f64>::from_bytes(&bad),
            Err(Error::Version { found: 7, .. })
        ));
    }
}

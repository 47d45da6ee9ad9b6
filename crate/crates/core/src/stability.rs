//! Closed-form limit of the recursion under constant input, its analytic
//! bound, and the checks that guard them.
//!
//! In the graph frequency domain the hidden state obeys
//! `vec(Ŷ_{t+1}) = Γ_0^{K1}(W,Λ) vec(Ŷ_t) + Γ_0^1(V,Λ) vec(X̂_t)` with
//! `Γ_a^b(W,Λ) = Σ_{a≤k<b} W_kᵀ ⊗ ψ_k(Λ)` (column-stacking `vec`). When the
//! temporal part is a contraction the output converges to `𝒯 vec(X̂)` with
//! `𝒯 = (I − Γ_0^{K1}(W,Λ))^{-1} Γ_0^1(V,Λ) + Γ_1^{K2}(V,Λ)`.

use crate::error::{Error, Result, StabilityViolation};
use crate::graph::StaticGraph;
use crate::layer::{self, FilterBank, Mode};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::spectral::{graph_spectrum, spectral_norm, SpectralDecomposition};

/// Tolerance of the internal eigendecompositions.
const EIG_TOL: f64 = 1e-10;
/// Slack allowed on `‖ψ_k(L)‖₂ ≤ 1` for rounding in the eigenvalues.
const FIELD_NORM_SLACK: f64 = 1e-12;

/// Default relative tolerance of [`empirical_converge`].
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-6;
/// Default step budget of [`empirical_converge`].
pub const DEFAULT_MAX_STEPS: usize = 500;

/// The limit map `𝒯` together with its norm and analytic bound.
#[derive(Debug, Clone)]
pub struct LimitOperator<T> {
    pub mode: Mode,
    /// Dependent: dense `(n·d_out) × (n·d_in)` acting on `vec(X̂)`.
    /// Independent: `n × d` elementwise multiplier of `X̂`.
    pub matrix: Matrix<T>,
    pub upper_bound: T,
    /// `‖𝒯‖₂` (for the elementwise form, the largest `|𝒯_ij|`).
    pub spectral_norm: T,
}

impl<T: Scalar> LimitOperator<T> {
    /// Limit of the frequency-domain output for constant input `X̂`.
    pub fn apply(&self, xhat: &Matrix<T>) -> Result<Matrix<T>> {
        match self.mode {
            Mode::Dependent => {
                let n_in = xhat.rows() * xhat.cols();
                if n_in != self.matrix.cols() {
                    return Err(Error::Dimension(format!(
                        "limit operator takes {} inputs, got {n_in}",
                        self.matrix.cols()
                    )));
                }
                let out = self.matrix.mul_vec(&xhat.vectorize());
                Ok(Matrix::unvectorize(
                    xhat.rows(),
                    self.matrix.rows() / xhat.rows(),
                    &out,
                ))
            }
            Mode::Independent => {
                if xhat.shape() != self.matrix.shape() {
                    return Err(Error::Dimension("signal shape differs from 𝒯".into()));
                }
                Ok(self.matrix.hadamard(xhat))
            }
        }
    }

    /// `‖𝒯‖ < bound`. An all-zero `V` gives `0 = 0`, which is reported as
    /// not strict.
    pub fn within_bound(&self) -> bool {
        self.spectral_norm < self.upper_bound
    }
}

/// `Γ_a^b = Σ_{a≤k<b} P_kᵀ ⊗ diag(ψ_k(λ))` for full mappings `P_k`.
pub fn gamma<T: Scalar>(
    params: &[Matrix<T>],
    decomp: &SpectralDecomposition<T>,
    a: usize,
    b: usize,
) -> Result<Matrix<T>> {
    if a > b || b > params.len() {
        return Err(Error::Invalid(format!(
            "Γ range [{a}, {b}) outside 0..={}",
            params.len()
        )));
    }
    let n = decomp.n();
    let (rows, cols) = params
        .first()
        .map(|p| (p.cols() * n, p.rows() * n))
        .unwrap_or((0, 0));
    let mut out = Matrix::zeros(rows, cols);
    for (k, p) in params.iter().enumerate().take(b).skip(a) {
        let psi = Matrix::from_diag(&decomp.psi(k));
        out.axpy(T::one(), &p.transpose().kron(&psi));
    }
    Ok(out)
}

/// The bound `‖V_0‖_∞ / (1 − Σ_k ‖W_k‖_∞) + Σ_{1≤k<K2} ‖V_k‖_∞`.
///
/// Only the `V_k` that exist enter the second sum. For an independent bank
/// the norms are those of the diagonal matrices, i.e. `max_j |·|`, and the
/// denominator uses `‖Σ_k w_k‖_∞`.
pub fn operator_bound<T: Scalar>(bank: &FilterBank<T>) -> T {
    let norm = |m: &Matrix<T>| match bank.mode() {
        Mode::Dependent => m.inf_norm(),
        Mode::Independent => m.max_abs(),
    };
    let w_term = match bank.mode() {
        Mode::Dependent => bank.w_norm_sum(),
        Mode::Independent => {
            let mut sum = Matrix::zeros(1, bank.d_out());
            for w in bank.w() {
                sum.axpy(T::one(), w);
            }
            sum.max_abs()
        }
    };
    norm(&bank.v()[0]) / (T::one() - w_term) + bank.v().iter().skip(1).map(norm).sum()
}

fn check_fields<T: Scalar>(decomp: &SpectralDecomposition<T>, orders: usize) -> Result<()> {
    let radius = decomp.eigenvalues.iter().fold(T::zero(), |m, l| m.max(l.abs()));
    for k in 1..orders {
        let norm = radius.powi(k as i32);
        if norm > T::one() + T::of(FIELD_NORM_SLACK) {
            return Err(StabilityViolation::FieldNorm {
                k,
                norm: norm.to_f64_lossy(),
            }
            .into());
        }
    }
    Ok(())
}

/// Verifies the contraction preconditions of the dependent recursion.
pub fn check_preconditions<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    bank: &FilterBank<T>,
) -> Result<()> {
    for (k, w) in bank.w().iter().enumerate() {
        let diag = match bank.mode() {
            Mode::Dependent => w.diag(),
            Mode::Independent => w.as_slice().to_vec(),
        };
        if let Some((index, &value)) = diag.iter().enumerate().find(|(_, &x)| x < T::zero()) {
            return Err(StabilityViolation::NegativeDiagonal {
                k,
                index,
                value: value.to_f64_lossy(),
            }
            .into());
        }
    }
    let sum = bank.w_norm_sum();
    if sum >= T::one() {
        return Err(StabilityViolation::RowSumTooLarge {
            sum: sum.to_f64_lossy(),
        }
        .into());
    }
    check_fields(decomp, bank.k1().max(bank.k2()))
}

/// Dense limit operator `𝒯` of the dependent recursion.
pub fn limit_operator<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
) -> Result<LimitOperator<T>> {
    let decomp = graph_spectrum(graph, T::of(EIG_TOL))?;
    limit_operator_with(&decomp, bank)
}

/// [`limit_operator`] on a precomputed spectrum of the scaled Laplacian.
/// Independent banks are materialized as diagonal matrices.
pub fn limit_operator_with<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    bank: &FilterBank<T>,
) -> Result<LimitOperator<T>> {
    check_preconditions(decomp, bank)?;
    let dense = bank.to_dependent();
    let n = decomp.n();
    let temporal = gamma(dense.w(), decomp, 0, dense.k1())?;
    let system = Matrix::identity(n * dense.d_out()).sub(&temporal);
    let drive = gamma(dense.v(), decomp, 0, 1)?;
    let mut t = system.solve(&drive)?;
    t.axpy(T::one(), &gamma(dense.v(), decomp, 1, dense.k2())?);
    let norm = spectral_norm(&t)?;
    Ok(LimitOperator {
        mode: Mode::Dependent,
        matrix: t,
        upper_bound: operator_bound(bank),
        spectral_norm: norm,
    })
}

/// Elementwise limit of the independent recursion:
/// `𝒯_ij = v_0j / (1 − Σ_k w_kj ψ_k(λ_i)) + Σ_{1≤k<K2} v_kj ψ_k(λ_i)`.
pub fn limit_operator_indep<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
) -> Result<LimitOperator<T>> {
    let decomp = graph_spectrum(graph, T::of(EIG_TOL))?;
    limit_operator_indep_with(&decomp, bank)
}

pub fn limit_operator_indep_with<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    bank: &FilterBank<T>,
) -> Result<LimitOperator<T>> {
    if bank.mode() != Mode::Independent {
        return Err(Error::Mode("elementwise limit needs an independent bank".into()));
    }
    let n = decomp.n();
    let d = bank.d_out();
    let psis: Vec<Vec<T>> = (0..bank.k1().max(bank.k2())).map(|k| decomp.psi(k)).collect();
    for (k, w) in bank.w().iter().enumerate() {
        if let Some((index, &value)) = w.as_slice().iter().enumerate().find(|(_, &x)| x < T::zero())
        {
            return Err(StabilityViolation::NegativeDiagonal {
                k,
                index,
                value: value.to_f64_lossy(),
            }
            .into());
        }
    }
    let mut t = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let ar: T = bank
                .w()
                .iter()
                .enumerate()
                .map(|(k, w)| w.as_slice()[j] * psis[k][i])
                .sum();
            if ar.abs() >= T::one() {
                return Err(StabilityViolation::ChannelResponse {
                    channel: j,
                    node: i,
                    value: ar.abs().to_f64_lossy(),
                }
                .into());
            }
            let ma: T = bank
                .v()
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, v)| v.as_slice()[j] * psis[k][i])
                .sum();
            t[(i, j)] = bank.v()[0].as_slice()[j] / (T::one() - ar) + ma;
        }
    }
    Ok(LimitOperator {
        mode: Mode::Independent,
        spectral_norm: t.max_abs(),
        matrix: t,
        upper_bound: operator_bound(bank),
    })
}

/// Outcome of the block diagonal dominance test on `I − Γ_0^{K1}(W,Λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbddReport<T> {
    pub holds: bool,
    /// Per block row `i`:
    /// `‖(I − A_ii)^{-1}‖_∞^{-1} − Σ_{j≠i} ‖A_ij‖_∞` with
    /// `A_ij = Σ_k W_k[i][j] ψ_k(Λ)`.
    pub margins: Vec<T>,
}

/// Strict block diagonal dominance of `I − Γ_0^{K1}(W,Λ)`. Reports rather
/// than asserts: banks outside the stability region may fail.
pub fn check_sbdd<T: Scalar>(graph: &StaticGraph<T>, bank: &FilterBank<T>) -> Result<SbddReport<T>> {
    let decomp = graph_spectrum(graph, T::of(EIG_TOL))?;
    Ok(check_sbdd_with(&decomp, bank))
}

pub fn check_sbdd_with<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    bank: &FilterBank<T>,
) -> SbddReport<T> {
    let dense = bank.to_dependent();
    let psis: Vec<Vec<T>> = (0..dense.k1()).map(|k| decomp.psi(k)).collect();
    let d = dense.d_out();
    let block = |i: usize, j: usize| -> Vec<T> {
        (0..decomp.n())
            .map(|l| {
                dense
                    .w()
                    .iter()
                    .zip(&psis)
                    .map(|(w, p)| w[(i, j)] * p[l])
                    .sum()
            })
            .collect()
    };
    let margins: Vec<T> = (0..d)
        .map(|i| {
            let diag_gap = block(i, i)
                .into_iter()
                .map(|a| (T::one() - a).abs())
                .fold(T::infinity(), T::min);
            let off: T = (0..d)
                .filter(|&j| j != i)
                .map(|j| block(i, j).into_iter().fold(T::zero(), |m, a| m.max(a.abs())))
                .sum();
            diag_gap - off
        })
        .collect();
    SbddReport {
        holds: margins.iter().all(|&m| m > T::zero()),
        margins,
    }
}

/// Result of [`empirical_converge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence<T> {
    /// First step `t` at which the criterion was met.
    pub steps: usize,
    pub residual: T,
}

/// Runs the recursion on the constant input `X_t ≡ x` and returns the first
/// `t` with `‖vec(Ô_t) − 𝒯 vec(X̂)‖ ≤ tol · max(1, ‖𝒯 vec(X̂)‖)`.
pub fn empirical_converge<T: Scalar>(
    graph: &StaticGraph<T>,
    bank: &FilterBank<T>,
    x: &Matrix<T>,
    tol: T,
    t_max: usize,
) -> Result<Convergence<T>> {
    let decomp = graph_spectrum(graph, T::of(EIG_TOL))?;
    let limit = match bank.mode() {
        Mode::Dependent => limit_operator_with(&decomp, bank)?,
        Mode::Independent => limit_operator_indep_with(&decomp, bank)?,
    };
    empirical_converge_with(graph, &decomp, &limit, bank, x, tol, t_max)
}

/// [`empirical_converge`] against an already computed limit operator.
pub fn empirical_converge_with<T: Scalar>(
    graph: &StaticGraph<T>,
    decomp: &SpectralDecomposition<T>,
    limit: &LimitOperator<T>,
    bank: &FilterBank<T>,
    x: &Matrix<T>,
    tol: T,
    t_max: usize,
) -> Result<Convergence<T>> {
    if x.rows() != graph.n_nodes() || x.cols() != bank.d_in() {
        return Err(Error::Dimension(format!(
            "input must be {}x{}",
            graph.n_nodes(),
            bank.d_in()
        )));
    }
    let target = limit.apply(&decomp.gft(x)?)?;
    let scale = T::one().max(target.frobenius_norm());
    let fields = graph.fields(bank.k1().max(bank.k2()));
    let mut y = Matrix::zeros(graph.n_nodes(), bank.d_out());
    let mut residual = T::infinity();
    for t in 1..=t_max {
        let (next, o) = layer::step(&fields, bank, &y, x);
        y = next;
        residual = decomp.gft(&o)?.sub(&target).frobenius_norm();
        if residual <= tol * scale {
            return Ok(Convergence { steps: t, residual });
        }
    }
    Err(Error::NoConvergence {
        iterations: t_max,
        residual: residual.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    fn single_node() -> StaticGraph<f64> {
        StaticGraph::from_bones(1, &[]).unwrap()
    }

    #[test]
    fn scalar_limit() {
        let g = single_node();
        let bank = FilterBank::dependent(vec![M::from_rows(&[[0.5]])], vec![M::from_rows(&[[1.0]])])
            .unwrap();
        let lim = limit_operator(&g, &bank).unwrap();
        assert!((lim.matrix[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((lim.upper_bound - 2.0).abs() < 1e-15);
        let conv = empirical_converge(&g, &bank, &M::from_rows(&[[1.0]]), 1e-6, 500).unwrap();
        // residual 2·0.5^t ≤ 2e-6 first holds at t = 20
        assert_eq!(conv.steps, 20);
    }

    #[test]
    fn zero_v_limit() {
        let g = StaticGraph::<f64>::from_bones(3, &[(0, 1), (1, 2)]).unwrap();
        let bank = FilterBank::dependent(
            vec![M::from_rows(&[[0.3, 0.1], [0.0, 0.2]])],
            vec![M::zeros(2, 2), M::zeros(2, 2)],
        )
        .unwrap();
        let lim = limit_operator(&g, &bank).unwrap();
        assert_eq!(lim.matrix.max_abs(), 0.0);
        assert_eq!(lim.upper_bound, 0.0);
        assert!(!lim.within_bound());
        let x = M::from_rows(&[[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]]);
        let conv = empirical_converge(&g, &bank, &x, 1e-6, 500).unwrap();
        assert_eq!(conv.steps, 1);
        assert_eq!(conv.residual, 0.0);
    }

    #[test]
    fn gamma_base_case() {
        let g = StaticGraph::<f64>::from_bones(3, &[(0, 1), (1, 2)]).unwrap();
        let d = graph_spectrum(&g, 1e-10).unwrap();
        let w0 = M::from_rows(&[[0.1, 0.2], [0.3, 0.4]]);
        let w1 = M::from_rows(&[[0.5, 0.0], [0.0, 0.5]]);
        let got = gamma(&[w0.clone(), w1], &d, 0, 1).unwrap();
        assert_eq!(got, w0.transpose().kron(&M::identity(3)));
        assert!(gamma(&[w0], &d, 1, 2).is_err());
    }

    #[test]
    fn rejects_unstable_banks() {
        let g = single_node();
        let neg = FilterBank::dependent(vec![M::from_rows(&[[-0.1]])], vec![M::identity(1)]).unwrap();
        assert!(matches!(
            limit_operator(&g, &neg),
            Err(Error::Stability(StabilityViolation::NegativeDiagonal { .. }))
        ));
        let big = FilterBank::dependent(vec![M::from_rows(&[[1.0]])], vec![M::identity(1)]).unwrap();
        assert!(matches!(
            limit_operator(&g, &big),
            Err(Error::Stability(StabilityViolation::RowSumTooLarge { .. }))
        ));
        // the unscaled Laplacian has ‖L‖₂ = 2
        let raw = StaticGraph::from_bones(2, &[(0, 1)]).unwrap();
        let d = crate::spectral::eigendecompose(raw.laplacian_norm(), 1e-10).unwrap();
        let ok = FilterBank::dependent(vec![M::from_rows(&[[0.1]]); 2], vec![M::identity(1)]).unwrap();
        assert!(matches!(
            limit_operator_with(&d, &ok),
            Err(Error::Stability(StabilityViolation::FieldNorm { k: 1, .. }))
        ));
    }

    #[test]
    fn sbdd_near_boundary() {
        let g = StaticGraph::<f64>::from_bones(3, &[(0, 1), (1, 2)]).unwrap();
        let bank = FilterBank::dependent(vec![M::identity(2).scale(0.999)], vec![M::identity(2)])
            .unwrap();
        let r = check_sbdd(&g, &bank).unwrap();
        assert!(r.holds);
        for m in r.margins {
            assert!((m - 1e-3).abs() < 1e-12);
        }
        let wild = FilterBank::dependent(
            vec![M::from_rows(&[[0.2, 1.3], [1.3, 0.2]])],
            vec![M::identity(2)],
        )
        .unwrap();
        assert!(!check_sbdd(&g, &wild).unwrap().holds);
    }

    #[test]
    fn moving_average_only() {
        let g = StaticGraph::<f64>::from_bones(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let bank = FilterBank::independent(
            vec![vec![0.0, 0.0]],
            vec![vec![1.0, -2.0], vec![0.5, 0.25], vec![-1.0, 3.0]],
        )
        .unwrap();
        let lim = limit_operator_indep(&g, &bank).unwrap();
        let d = graph_spectrum(&g, 1e-10).unwrap();
        for i in 0..4 {
            let l = d.eigenvalues[i];
            for j in 0..2 {
                let v = bank.v();
                let expect = v[0].as_slice()[j] + l * v[1].as_slice()[j] + l * l * v[2].as_slice()[j];
                assert!((lim.matrix[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }
}

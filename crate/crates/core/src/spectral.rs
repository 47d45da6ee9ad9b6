//! Symmetric eigendecomposition, the graph Fourier transform, and the
//! frequency-domain form of the multi-scale graph filters.
//!
//! All frequency-domain routines assume the decomposition is of the *scaled*
//! Laplacian, the matrix the receptive fields are polynomials of, so that
//! `ψ_k(λ) = λ^k`.

use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::layer::{FilterBank, Mode};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Largest matrix order accepted by [`eigendecompose`].
pub const EIGEN_CAP: usize = 256;
/// Sweep limit of the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm (relative to `max(1, ‖A‖_F)`) at which the
/// Jacobi iteration stops.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// `L = Φ Λ Φᵀ` with eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: Matrix<T>,
    /// `‖Φ Λ Φᵀ − L‖_F`.
    pub reconstruction_error: T,
}

/// Cyclic Jacobi eigensolver for real symmetric matrices.
///
/// `tol` bounds both `‖ΦᵀΦ − I‖_F` and the reconstruction error relative to
/// `max(1, ‖L‖_F)`; it is also the symmetry tolerance applied to the input.
/// Identical input bits always produce identical output bits.
pub fn eigendecompose<T: Scalar>(l: &Matrix<T>, tol: T) -> Result<SpectralDecomposition<T>> {
    if !l.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            l.shape()
        )));
    }
    let n = l.rows();
    if n > EIGEN_CAP {
        return Err(Error::TooLarge { n, cap: EIGEN_CAP });
    }
    if !l.all_finite() {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    let norm = l.frobenius_norm();
    let scale = T::one().max(norm);
    if !l.is_symmetric(tol * T::one().max(l.max_abs())) {
        return Err(Error::NotSymmetric);
    }
    let mut a = l.clone();
    a.symmetrize();
    let mut v = Matrix::identity(n);
    let threshold = T::of(OFF_DIAGONAL_TOL).max(T::of(8.0) * T::epsilon()) * scale;

    let mut converged = false;
    let mut off = off_diagonal_norm(&a);
    for _ in 0..MAX_SWEEPS {
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        off = off_diagonal_norm(&a);
    }
    if !converged && off > threshold {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            residual: off.to_f64_lossy(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    // sign convention: first non-negligible component positive
    for c in 0..n {
        let lead = (0..n)
            .map(|r| eigenvectors[(r, c)])
            .find(|x| x.abs() > T::of(1e-8).max(T::epsilon()));
        if matches!(lead, Some(x) if x < T::zero()) {
            for r in 0..n {
                eigenvectors[(r, c)] = -eigenvectors[(r, c)];
            }
        }
    }

    let decomp = SpectralDecomposition {
        reconstruction_error: T::zero(),
        eigenvalues,
        eigenvectors,
    };
    let recon = decomp.reconstruct().sub(l).frobenius_norm();
    let ortho = decomp
        .eigenvectors
        .t_matmul(&decomp.eigenvectors)
        .sub(&Matrix::identity(n))
        .frobenius_norm();
    if recon > tol * scale || ortho > tol {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            residual: recon.max(ortho).to_f64_lossy(),
        });
    }
    Ok(SpectralDecomposition {
        reconstruction_error: recon,
        ..decomp
    })
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn rotate<T: Scalar>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == T::zero() {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (T::of(2.0) * apq);
    let t = if theta.abs() > T::one() / T::epsilon() {
        T::one() / (T::of(2.0) * theta)
    } else {
        let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
    for r in 0..n {
        if r != p && r != q {
            let arp = a[(r, p)];
            let arq = a[(r, q)];
            let np = c * arp - s * arq;
            let nq = s * arp + c * arq;
            a[(r, p)] = np;
            a[(p, r)] = np;
            a[(r, q)] = nq;
            a[(q, r)] = nq;
        }
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = c * vrp - s * vrq;
        v[(r, q)] = s * vrp + c * vrq;
    }
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Φ Λ Φᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.eigenvectors
            .scale_columns(&self.eigenvalues)
            .matmul_t(&self.eigenvectors)
    }

    /// `ψ_k(λ_i) = λ_i^k` for every eigenvalue; `ψ_0 ≡ 1`.
    pub fn psi(&self, k: usize) -> Vec<T> {
        self.eigenvalues.iter().map(|&l| l.powi(k as i32)).collect()
    }

    /// Graph Fourier transform `Φᵀ X`.
    pub fn gft(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rows(x)?;
        Ok(self.eigenvectors.t_matmul(x))
    }

    /// Inverse transform `Φ X̂`.
    pub fn igft(&self, xhat: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rows(xhat)?;
        Ok(self.eigenvectors.matmul(xhat))
    }

    fn check_rows(&self, x: &Matrix<T>) -> Result<()> {
        if x.rows() != self.n() {
            return Err(Error::Dimension(format!(
                "signal has {} rows, spectrum has {} eigenvalues",
                x.rows(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of the graph's scaled Laplacian.
pub fn graph_spectrum<T: Scalar>(graph: &StaticGraph<T>, tol: T) -> Result<SpectralDecomposition<T>> {
    eigendecompose(graph.laplacian_scaled(), tol)
}

/// Largest singular value, computed as the square root of the top eigenvalue
/// of the smaller Gram matrix.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    if m.as_slice().is_empty() {
        return Ok(T::zero());
    }
    let gram = if m.rows() < m.cols() {
        m.matmul_t(m)
    } else {
        m.t_matmul(m)
    };
    let d = eigendecompose(&gram, T::of(1e-9).max(T::of(64.0) * T::epsilon()))?;
    Ok(d.eigenvalues.last().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
}

/// `Σ_k diag(ψ_k(λ)) X̂ V_k` for full mappings `V_k`.
pub fn frequency_response_dense<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    v: &[Matrix<T>],
    xhat: &Matrix<T>,
) -> Result<Matrix<T>> {
    decomp.check_rows(xhat)?;
    let first = v
        .first()
        .ok_or_else(|| Error::Invalid("need at least one mapping".into()))?;
    if v.iter().any(|m| m.rows() != xhat.cols() || m.cols() != first.cols()) {
        return Err(Error::Dimension(format!(
            "{} input channels incompatible with mappings",
            xhat.cols()
        )));
    }
    let mut out = Matrix::zeros(xhat.rows(), first.cols());
    for (k, vk) in v.iter().enumerate() {
        let psi = decomp.psi(k);
        let scaled = Matrix::from_fn(xhat.rows(), xhat.cols(), |i, j| psi[i] * xhat[(i, j)]);
        out.add_matmul(&scaled, vk);
    }
    Ok(out)
}

/// `Σ_k (ψ_k(λ) v_kᵀ) ⊙ X̂`, i.e. `Ẑ_ij = Σ_k v_kj ψ_k(λ_i) X̂_ij`.
pub fn frequency_response_diag<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    v: &[Vec<T>],
    xhat: &Matrix<T>,
) -> Result<Matrix<T>> {
    decomp.check_rows(xhat)?;
    if v.is_empty() || v.iter().any(|vk| vk.len() != xhat.cols()) {
        return Err(Error::Dimension(format!(
            "diagonal mappings must have length {}",
            xhat.cols()
        )));
    }
    let psis: Vec<Vec<T>> = (0..v.len()).map(|k| decomp.psi(k)).collect();
    Ok(Matrix::from_fn(xhat.rows(), xhat.cols(), |i, j| {
        let h: T = v.iter().zip(&psis).map(|(vk, p)| vk[j] * p[i]).sum();
        h * xhat[(i, j)]
    }))
}

/// Frequency-domain form of the bank's spatial filter `Σ_k ψ_k(L) X V_k`.
pub fn frequency_response<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    bank: &FilterBank<T>,
    xhat: &Matrix<T>,
) -> Result<Matrix<T>> {
    match bank.mode() {
        Mode::Dependent => frequency_response_dense(decomp, bank.v(), xhat),
        Mode::Independent => {
            let v: Vec<Vec<T>> = bank.v().iter().map(|m| m.as_slice().to_vec()).collect();
            frequency_response_diag(decomp, &v, xhat)
        }
    }
}

/// Splits `V = diag(α) · Ṽ`.
///
/// `α_i` is the smallest power of two not below `‖row_i(V)‖_∞` (1 for a zero
/// row), which makes the factorization exact in floating point.
pub fn decompose_vk<T: Scalar>(v: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let two = T::of(2.0);
    let alpha: Vec<T> = (0..v.rows())
        .map(|i| {
            let m = v.row(i).iter().fold(T::zero(), |m, x| m.max(x.abs()));
            if m == T::zero() || !m.is_finite() {
                return T::one();
            }
            let mut a = two.powi(m.log2().ceil().to_i32().unwrap_or(0));
            while a < m {
                a *= two;
            }
            while a / two >= m {
                a /= two;
            }
            a
        })
        .collect();
    let vt = Matrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] / alpha[i]);
    (alpha, vt)
}

/// Per-channel polynomial response `H_j(λ_i) = Σ_k c_kj ψ_k(λ_i)`.
///
/// For an independent bank `c_k = v_k`; for a dependent bank `c_k` is the
/// diagonal factor `α_k` of [`decompose_vk`], the part of `V_k` that acts on
/// each input channel before channels are mixed. Rows are
/// `(λ_i, channel j, H_j(λ_i))`, eigenvalue-major.
pub fn channel_responses<T: Scalar>(eigenvalues: &[T], bank: &FilterBank<T>) -> Vec<(T, usize, T)> {
    let coeffs: Vec<Vec<T>> = match bank.mode() {
        Mode::Independent => bank.v().iter().map(|m| m.as_slice().to_vec()).collect(),
        Mode::Dependent => bank.v().iter().map(|m| decompose_vk(m).0).collect(),
    };
    let mut rows = Vec::with_capacity(eigenvalues.len() * bank.d_in());
    for &lambda in eigenvalues {
        for j in 0..bank.d_in() {
            let h = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c[j] * lambda.powi(k as i32))
                .sum();
            rows.push((lambda, j, h));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = Matrix<f64>;

    #[test]
    fn two_by_two() {
        let l = M::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        let d = eigendecompose(&l, 1e-10).unwrap();
        assert!(d.eigenvalues[0].abs() < 1e-14);
        assert!((d.eigenvalues[1] - 2.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d.eigenvectors[(0, 0)] - s).abs() < 1e-14);
        assert!((d.eigenvectors[(1, 0)] - s).abs() < 1e-14);
        assert!((d.eigenvectors[(0, 1)].abs() - s).abs() < 1e-14);
        assert!((d.eigenvectors[(0, 1)] + d.eigenvectors[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn identity_and_errors() {
        let d = eigendecompose(&M::identity(4), 1e-12).unwrap();
        assert!(d.eigenvalues.iter().all(|&x| x == 1.0));
        assert_eq!(d.reconstruct(), M::identity(4));
        let asym = M::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(eigendecompose(&asym, 1e-10), Err(Error::NotSymmetric)));
        assert!(matches!(
            eigendecompose(&M::zeros(EIGEN_CAP + 1, EIGEN_CAP + 1), 1e-10),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut a = M::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
            a = a.add(&a.transpose());
            let d = eigendecompose(&a, 1e-10).unwrap();
            assert!(d.reconstruction_error <= 1e-8 * a.frobenius_norm().max(1.0));
            assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let again = eigendecompose(&a, 1e-10).unwrap();
            assert_eq!(d, again);
        }
    }

    #[test]
    fn gft_round_trip() {
        let g = StaticGraph::<f64>::from_bones(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let d = graph_spectrum(&g, 1e-10).unwrap();
        let phi1 = M::from_fn(5, 1, |i, _| d.eigenvectors[(i, 0)]);
        let e1 = d.gft(&phi1).unwrap();
        assert!((e1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((1..5).all(|i| e1[(i, 0)].abs() < 1e-12));
        assert_eq!(d.gft(&M::zeros(5, 2)).unwrap(), M::zeros(5, 2));
        let x = M::from_fn(5, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 0.5));
        let back = d.igft(&d.gft(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10);
        assert!(d.gft(&M::zeros(4, 1)).is_err());
    }

    #[test]
    fn identity_filter_response() {
        let g = StaticGraph::<f64>::from_bones(3, &[(0, 1), (1, 2)]).unwrap();
        let d = graph_spectrum(&g, 1e-10).unwrap();
        let xhat = M::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]]);
        let out = frequency_response_dense(&d, &[M::identity(2)], &xhat).unwrap();
        assert_eq!(out, xhat);
    }

    #[test]
    fn decompose_vk_examples() {
        let (a, vt) = decompose_vk(&M::identity(3).scale(2.0));
        assert_eq!(a, vec![2.0; 3]);
        assert_eq!(vt, M::identity(3));
        let (a, vt) = decompose_vk(&M::zeros(2, 3));
        assert_eq!(a, vec![1.0; 2]);
        assert_eq!(vt, M::zeros(2, 3));
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let m = M::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]]);
        let exact = spectral_norm(&m).unwrap();
        let approx = m.power_iteration_norm(1e-15, 10_000);
        assert!((exact - approx).abs() < 1e-9);
    }
}

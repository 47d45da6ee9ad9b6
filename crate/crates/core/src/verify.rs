//! Randomized self-checks of the numerical core, grouped into suites.
//!
//! Each check draws its instances from a seeded generator and reports the
//! worst residual it saw next to the tolerance it was held to.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::layer::{self, FilterBank, Mode, SignalSequence};
use crate::matrix::Matrix;
use crate::model::{loss_and_grads, DeepStgc, ModelConfig};
use crate::spectral::{frequency_response, graph_spectrum, spectral_norm};
use crate::stability::{
    check_sbdd_with, empirical_converge_with, gamma, limit_operator_indep_with, limit_operator_with,
    DEFAULT_CONVERGENCE_TOL, DEFAULT_MAX_STEPS,
};

/// Step of the central differences used by the gradient suite.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the elementwise relative error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Spectral,
    Stability,
    Gradients,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Suite::Spectral),
            "stability" => Ok(Suite::Stability),
            "gradients" => Ok(Suite::Gradients),
            "all" => Ok(Suite::All),
            other => Err(Error::Invalid(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub instances: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn below(suite: &'static str, name: &'static str, instances: usize, residual: f64, tolerance: f64) -> Self {
        Self {
            suite,
            name,
            instances,
            residual,
            tolerance,
            passed: residual.is_finite() && residual <= tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<10} {:<28} n={:<3} residual={:.3e} tol={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.instances,
            self.residual,
            self.tolerance
        )
    }
}

/// Weighted random graph: each pair joined with probability `p`, weights
/// uniform in `[0.5, 1.5]`.
pub fn random_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> StaticGraph<f64> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j, rng.gen_range(0.5..1.5)));
            }
        }
    }
    StaticGraph::from_edges(n, &edges).expect("generated edges are valid")
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale))
}

/// Bank with `W` uniform in `[-w_scale, w_scale]` and `V` in
/// `[-v_scale, v_scale]`, projected onto the stability region.
#[allow(clippy::too_many_arguments)]
pub fn random_bank<R: Rng + ?Sized>(
    mode: Mode,
    k1: usize,
    k2: usize,
    d_in: usize,
    d_out: usize,
    w_scale: f64,
    v_scale: f64,
    rng: &mut R,
) -> FilterBank<f64> {
    let mut bank = FilterBank::zeros(mode, k1, k2, d_in, d_out).expect("valid bank shape");
    for m in bank.w_mut() {
        for x in m.as_mut_slice() {
            *x = rng.gen_range(-w_scale..=w_scale);
        }
    }
    for m in bank.v_mut() {
        for x in m.as_mut_slice() {
            *x = rng.gen_range(-v_scale..=v_scale);
        }
    }
    bank.project_stable(crate::layer::DEFAULT_EPSILON)
}

pub fn random_sequence<R: Rng + ?Sized>(n: usize, d: usize, len: usize, rng: &mut R) -> SignalSequence<f64> {
    SignalSequence::new((0..len).map(|_| random_matrix(n, d, 1.0, rng)).collect())
        .expect("non-empty sequence")
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Worst elementwise relative error between analytic gradients and central
/// differences of `loss` over every parameter reachable through `param`.
pub fn fd_max_rel_error<P: Clone>(
    point: &P,
    analytic: &[f64],
    mut param: impl FnMut(&mut P, usize) -> &mut f64,
    mut loss: impl FnMut(&P) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut p = point.clone();
    for (i, &g) in analytic.iter().enumerate() {
        let orig = *param(&mut p, i);
        *param(&mut p, i) = orig + FD_STEP;
        let up = loss(&p);
        *param(&mut p, i) = orig - FD_STEP;
        let down = loss(&p);
        *param(&mut p, i) = orig;
        worst = worst.max(relative_error(g, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn spectral_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut conv = 0.0f64;
    let mut recon = 0.0f64;
    let mut semigroup = 0.0f64;
    let mut field_norm = 0.0f64;
    let instances = 20;
    for i in 0..instances {
        let n = [4, 8, 16][i % 3];
        let d = [1, 3][i % 2];
        let k = [1, 2, 4][i % 3];
        let graph = random_graph(n, 0.4, rng);
        let decomp = graph_spectrum(&graph, 1e-12)?;
        recon = recon.max(decomp.reconstruction_error);
        let bank = random_bank(Mode::Dependent, 1, k, d, 4, 0.2, 1.0, rng);
        let x = random_matrix(n, d, 1.0, rng);
        let spatial = layer::multiscale_conv(&graph, &x, bank.v())?;
        let spectral = decomp.igft(&frequency_response(&decomp, &bank, &decomp.gft(&x)?)?)?;
        conv = conv.max(spatial.max_abs_diff(&spectral) / spatial.max_abs().max(1.0));
        let fields = graph.fields(6);
        for a in 0..3 {
            for b in 0..3 {
                let lhs = fields[a].matmul(&fields[b]);
                semigroup = semigroup.max(lhs.max_abs_diff(&fields[a + b]));
            }
        }
        for f in fields.iter() {
            field_norm = field_norm.max(spectral_norm(f)? - 1.0);
        }
    }
    Ok(vec![
        Check::below("spectral", "conv_vs_spectral", instances, conv, 1e-8),
        Check::below("spectral", "eigen_reconstruction", instances, recon, 1e-10),
        Check::below("spectral", "field_semigroup", instances, semigroup, 1e-10),
        Check::below("spectral", "field_norm_minus_one", instances, field_norm.max(0.0), 1e-8),
    ])
}

fn stability_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let instances = 10;
    let mut conv = 0.0f64;
    let mut bound_gap = f64::NEG_INFINITY;
    let mut sbdd = f64::INFINITY;
    let mut gamma_norm = 0.0f64;
    let mut indep_agree = 0.0f64;
    for i in 0..instances {
        let n = 3 + i % 6;
        // a single channel with K1 = K2 = 1 meets the bound with equality
        let d = 2 + i % 2;
        let (k1, k2) = (1 + i % 3, 2 + (i + 1) % 3);
        let graph = random_graph(n, 0.5, rng);
        let decomp = graph_spectrum(&graph, 1e-12)?;
        let bank = random_bank(Mode::Dependent, k1, k2, d, d, 0.4, 1.0, rng);
        let limit = limit_operator_with(&decomp, &bank)?;
        bound_gap = bound_gap.max(limit.spectral_norm - limit.upper_bound);
        sbdd = sbdd.min(
            check_sbdd_with(&decomp, &bank)
                .margins
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        );
        gamma_norm = gamma_norm.max(spectral_norm(&gamma(bank.w(), &decomp, 0, k1)?)?);
        let x = random_matrix(n, d, 1.0, rng);
        let c = empirical_converge_with(&graph, &decomp, &limit, &bank, &x, DEFAULT_CONVERGENCE_TOL, DEFAULT_MAX_STEPS)?;
        conv = conv.max(c.steps as f64);

        let ind = random_bank(Mode::Independent, k1, k2, d, d, 0.4, 1.0, rng);
        let elementwise = limit_operator_indep_with(&decomp, &ind)?;
        let dense = limit_operator_with(&decomp, &ind)?;
        let xhat = decomp.gft(&x)?;
        indep_agree = indep_agree.max(elementwise.apply(&xhat)?.max_abs_diff(&dense.apply(&xhat)?));
    }
    Ok(vec![
        Check::below("stability", "steps_to_converge", instances, conv, DEFAULT_MAX_STEPS as f64),
        Check {
            suite: "stability",
            name: "norm_minus_bound",
            instances,
            residual: bound_gap,
            tolerance: 0.0,
            passed: bound_gap < 0.0,
        },
        Check {
            suite: "stability",
            name: "sbdd_min_margin",
            instances,
            residual: sbdd,
            tolerance: 0.0,
            passed: sbdd > 0.0,
        },
        Check {
            suite: "stability",
            name: "gamma_spectral_norm",
            instances,
            residual: gamma_norm,
            tolerance: 1.0,
            passed: gamma_norm < 1.0,
        },
        Check::below("stability", "indep_vs_dense_limit", instances, indep_agree, 1e-10),
    ])
}

fn gradient_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let instances = 5;
    let mut layer_err = 0.0f64;
    let mut input_err = 0.0f64;
    let mut net_err = 0.0f64;
    for i in 0..instances {
        let mode = if i % 2 == 0 { Mode::Dependent } else { Mode::Independent };
        let n = 3 + i;
        let d = 2 + i % 2;
        let d_out = if mode == Mode::Dependent { 3 } else { d };
        let graph = random_graph(n, 0.5, rng);
        let bank = random_bank(mode, 2, 3, d, d_out, 0.2, 0.2, rng);
        let xseq = random_sequence(n, d, 4, rng);
        let probe: Vec<Matrix<f64>> = (0..4).map(|_| random_matrix(n, d_out, 1.0, rng)).collect();
        let linear = |b: &FilterBank<f64>, xs: &SignalSequence<f64>| -> f64 {
            let trace = layer::forward(&graph, b, xs).expect("shapes fixed");
            trace
                .outputs
                .iter()
                .zip(&probe)
                .map(|(o, r)| o.hadamard(r).sum())
                .sum()
        };
        let trace = layer::forward(&graph, &bank, &xseq)?;
        let grads = layer::backward(&trace, &bank, &probe)?;
        let analytic: Vec<f64> = grads.bank.params().copied().collect();
        layer_err = layer_err.max(fd_max_rel_error(
            &bank,
            &analytic,
            |b, i| b.params_mut().nth(i).unwrap(),
            |b| linear(b, &xseq),
        ));
        let dx: Vec<f64> = grads.inputs.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let frames = xseq.frames().to_vec();
        input_err = input_err.max(fd_max_rel_error(
            &frames,
            &dx,
            |f, i| {
                let per = n * d;
                &mut f[i / per].as_mut_slice()[i % per]
            },
            |f| linear(&bank, &SignalSequence::new(f.clone()).unwrap()),
        ));

        let cfg = ModelConfig {
            mode,
            k1: 2,
            k2: 3,
            widths: vec![3, 3],
            input_dim: d,
            ..ModelConfig::default()
        };
        let mut net = DeepStgc::init(&cfg, n, 3, 1e-3, rng)?;
        for p in net.params_mut() {
            *p = rng.gen_range(-0.2..=0.2);
        }
        net.project_stable(1e-3);
        let label = i % 3;
        let (_, g) = loss_and_grads(&net, &graph, &xseq, label)?;
        let analytic: Vec<f64> = g.params().copied().collect();
        net_err = net_err.max(fd_max_rel_error(
            &net,
            &analytic,
            |m, i| m.params_mut().nth(i).unwrap(),
            |m| loss_and_grads(m, &graph, &xseq, label).unwrap().0,
        ));
    }
    Ok(vec![
        Check::below("gradients", "layer_params_fd", instances, layer_err, 1e-4),
        Check::below("gradients", "layer_inputs_fd", instances, input_err, 1e-4),
        Check::below("gradients", "network_params_fd", instances, net_err, 1e-4),
    ])
}

/// Runs the requested suite(s) with instances drawn from `seed`.
pub fn run(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if matches!(suite, Suite::Spectral | Suite::All) {
        out.extend(spectral_suite(&mut rng)?);
    }
    if matches!(suite, Suite::Stability | Suite::All) {
        out.extend(stability_suite(&mut rng)?);
    }
    if matches!(suite, Suite::Gradients | Suite::All) {
        out.extend(gradient_suite(&mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_default_seed() {
        for check in run(Suite::All, 0).unwrap() {
            assert!(check.passed, "{check}");
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("bogus".parse::<Suite>().is_err());
    }
}

//! Central finite-difference verification of reverse-mode gradients.
//!
//! Only forward evaluations feed the numeric estimate, so the check stays
//! independent of every backward closure it validates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::{is_fusion_param, MbaNet};
use crate::nn::{fnv1a, Bound, ParamStore};
use crate::tensor::{Graph, Tensor, Var};
use crate::training::{seg_loss, LossWeights};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Largest accepted relative error.
    pub tol: f64,
    /// Denominator floor for the relative error, so that two near-zero
    /// gradients compare by absolute difference. A central difference on an
    /// O(1) loss resolves about `ulp(1) / 2·eps ≈ 1.1e-11`; the floor keeps
    /// that resolution below `tol` relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, tol: 1e-4, floor: 1e-6 }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// One compared coordinate (or direction).
#[derive(Clone, Debug)]
pub struct Probe {
    pub input: usize,
    pub index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.probes.iter().all(|p| p.rel_err < tol)
    }
}

fn eval_loss<F>(inputs: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let graph = Graph::inference();
    let vars: Vec<_> = inputs.iter().map(|t| graph.constant(t.clone())).collect();
    Ok(f(&graph, &vars)?.value().item())
}

/// Analytic gradients of a scalar function of `inputs`.
pub fn analytic_gradients<F>(inputs: &[Tensor<f64>], f: &F) -> Result<Vec<Tensor<f64>>>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let graph = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let loss = f(&graph, &vars)?;
    let grads = graph.backward(loss)?;
    Ok(vars.iter().map(|&v| grads.get(v)).collect())
}

/// Compare every coordinate of every input against central differences.
pub fn check_all<F>(inputs: &[Tensor<f64>], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let analytic = analytic_gradients(inputs, &f)?;
    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..work[k].numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + opts.eps;
            let plus = eval_loss(&work, &f)?;
            work[k].data_mut()[i] = orig - opts.eps;
            let minus = eval_loss(&work, &f)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = grad.data()[i];
            report.probes.push(Probe {
                input: k,
                index: Some(i),
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric, opts.floor),
            });
        }
    }
    Ok(report)
}

/// Settings for [`check_model`].
#[derive(Clone, Copy, Debug)]
pub struct ModelCheckOptions {
    pub grad: GradCheckOptions,
    /// Random unit directions per tensor; the step along each is `eps`.
    pub directions: usize,
    /// Single coordinates per tensor (largest-gradient first, then random).
    /// `usize::MAX` checks every coordinate.
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for ModelCheckOptions {
    fn default() -> Self {
        Self { grad: GradCheckOptions::default(), directions: 3, coords_per_tensor: 3, seed: 0 }
    }
}

/// Result for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub numel: usize,
    /// Directional probes (`index == None`) followed by coordinate probes.
    pub probes: Vec<Probe>,
    /// `‖a − n‖ / max(‖a‖, ‖n‖, floor)` over all probes of the tensor.
    pub rel_err: f64,
}

impl ParamCheck {
    fn new(name: String, numel: usize, probes: Vec<Probe>, floor: f64) -> Self {
        let norm = |f: &dyn Fn(&Probe) -> f64| probes.iter().map(|p| f(p).powi(2)).sum::<f64>().sqrt();
        let diff = norm(&|p| p.analytic - p.numeric);
        let denom = norm(&|p| p.analytic).max(norm(&|p| p.numeric)).max(floor);
        Self { name, numel, rel_err: diff / denom, probes }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModelCheckReport {
    pub params: Vec<ParamCheck>,
}

impl ModelCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    /// Fraction of tensors with relative error below `tol`.
    pub fn pass_fraction(&self, tol: f64) -> f64 {
        if self.params.is_empty() {
            return 0.0;
        }
        self.params.iter().filter(|p| p.rel_err < tol).count() as f64 / self.params.len() as f64
    }

    pub fn probe_count(&self) -> usize {
        self.params.iter().map(|p| p.probes.len()).sum()
    }
}

/// Fixed inputs and parameters for checking the full network at f64.
///
/// The check runs at a generic point rather than at initialisation: every
/// parameter gets Gaussian jitter of std [`JITTER`] and fusion norm scales
/// are redrawn from U(0.5, 1.5). At initialisation the fusion scales are
/// zero (no gradient reaches the fusion projections), zero biases put the
/// SE squeeze exactly on the LeakyReLU kink, and the small attention
/// weights give query/key gradients below the resolution of a central
/// difference on an O(1) loss.
pub struct ModelProblem {
    pub model: MbaNet,
    pub store: ParamStore<f64>,
    pub high: Tensor<f64>,
    pub low: Tensor<f64>,
    pub target: Tensor<f64>,
}

pub const JITTER: f64 = 0.1;

impl ModelProblem {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let (model, mut store) = MbaNet::init::<f64>(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, "gradcheck/inputs"));
        let jitter = Normal::new(0.0, JITTER).expect("positive std");
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let fusion_gamma = {
                let name = store.name(id);
                is_fusion_param(name) && name.ends_with(".norm.gamma")
            };
            for v in store.get_mut(id).data_mut() {
                *v = if fusion_gamma { rng.gen_range(0.5..1.5) } else { *v + jitter.sample(&mut rng) };
            }
        }
        let (s, c) = (config.x_s, config.x_c);
        let low = Tensor::from_fn([1, 1, c, c], |_| rng.gen_range(0.0..1.0));
        let high = Tensor::from_fn([1, 1, s, s], |_| rng.gen_range(0.0..1.0));
        let target = Tensor::from_fn([1, 1, c, c], |i| {
            let (y, x) = ((i / c) as f64 + 0.5 - c as f64 / 2.0, (i % c) as f64 + 0.5 - c as f64 / 2.0);
            if x.hypot(y) < c as f64 / 4.0 {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self { model, store, high, low, target })
    }

    fn loss_on<'g>(&self, graph: &'g Graph<f64>, store: &ParamStore<f64>) -> Result<(Var<'g, f64>, Bound<'g, f64>)> {
        let p = store.bind(graph);
        let logits = self.model.forward(&p, graph.constant(self.high.clone()), graph.constant(self.low.clone()))?;
        Ok((seg_loss(logits, &self.target, LossWeights::default())?, p))
    }

    pub fn loss(&self, store: &ParamStore<f64>) -> Result<f64> {
        let graph = Graph::inference();
        Ok(self.loss_on(&graph, store)?.0.value().item())
    }

    /// Analytic gradient of the loss for every parameter tensor.
    pub fn gradients(&self) -> Result<Vec<Tensor<f64>>> {
        let graph = Graph::new();
        let (loss, p) = self.loss_on(&graph, &self.store)?;
        Ok(p.grads(&graph.backward(loss)?))
    }
}

/// Check every parameter tensor of the network against central
/// differences along random directions and single coordinates.
pub fn check_model(
    problem: &ModelProblem,
    opts: ModelCheckOptions,
    mut on_param: impl FnMut(&ParamCheck),
) -> Result<ModelCheckReport> {
    let analytic = problem.gradients()?;
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(opts.seed, "gradcheck/directions"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut work = problem.store.clone();
    let eps = opts.grad.eps;
    let mut report = ModelCheckReport::default();
    let ids: Vec<_> = problem.store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let grad = analytic[k].data();
        let orig = problem.store.get(id).clone();
        let n = orig.numel();
        let mut central = |delta: &dyn Fn(usize) -> f64| -> Result<f64> {
            let mut side = |sign: f64| {
                for (i, v) in work.get_mut(id).data_mut().iter_mut().enumerate() {
                    *v = orig.data()[i] + sign * eps * delta(i);
                }
                problem.loss(&work)
            };
            let (plus, minus) = (side(1.0)?, side(-1.0)?);
            work.get_mut(id).data_mut().copy_from_slice(orig.data());
            Ok((plus - minus) / (2.0 * eps))
        };
        let probe = |index, analytic: f64, numeric: f64| Probe {
            input: k,
            index,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric, opts.grad.floor),
        };
        let mut probes = Vec::new();
        for _ in 0..opts.directions {
            let mut dir: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|v| *v /= len);
            let numeric = central(&|i| dir[i])?;
            let a = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            probes.push(probe(None, a, numeric));
        }
        let coords: Vec<usize> = if opts.coords_per_tensor >= n {
            (0..n).collect()
        } else {
            let top = (0..n).max_by(|&i, &j| grad[i].abs().total_cmp(&grad[j].abs())).unwrap_or(0);
            let mut picked = vec![top];
            while picked.len() < opts.coords_per_tensor {
                let i = rng.gen_range(0..n);
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            picked.truncate(opts.coords_per_tensor);
            picked
        };
        for i in coords {
            let numeric = central(&|j| if j == i { 1.0 } else { 0.0 })?;
            probes.push(probe(Some(i), grad[i], numeric));
        }
        let check = ParamCheck::new(problem.store.name(id).to_string(), n, probes, opts.grad.floor);
        on_param(&check);
        report.params.push(check);
    }
    Ok(report)
}

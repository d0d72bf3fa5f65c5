//! Maximization of the cross-validated log-likelihood.
//!
//! All parameters live in log-space (bandwidths, `alpha`) or are logits. The
//! solver is a projected L-BFGS: box bounds are enforced by clamping, and the
//! minimum-bandwidth constraint of the adaptive kernel is enforced by raising
//! `log alpha`. Every Abramson bandwidth is proportional to `alpha` while the
//! pilot does not depend on it, so that projection is exact: the feasible set
//! is `log alpha >= log h_min + max_{folds, j} log pilot_j(h0) / 2`.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;

use crate::crossval::{make_fold_plan, FoldPlan, Scheme};
use crate::data::{DatasetBundle, FixationTable, ImageRecord};
use crate::error::{Error, Result};
use crate::kde::KernelParams;
use crate::likelihood::ImageProblem;
use crate::mixture::{Component, ComponentMask, ComponentSet, MixtureParams};
use crate::util::rng_stream;

pub use crate::likelihood::KernelKind;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Minimum effective bandwidth in pixels.
    pub h_min: f64,
    pub log_bandwidth_bounds: (f64, f64),
    pub log_alpha_bounds: (f64, f64),
    pub logit_bounds: (f64, f64),
    pub f_tol: f64,
    pub g_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            seed: 0,
            h_min: 0.5,
            log_bandwidth_bounds: (0.5f64.ln(), 500f64.ln()),
            log_alpha_bounds: (-20.0, 20.0),
            logit_bounds: (-20.0, 20.0),
            f_tol: 1e-8,
            g_tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a < b;
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if !(self.h_min.is_finite() && self.h_min > 0.0) {
            return Err(Error::invalid("h_min must be > 0"));
        }
        if !(ordered(self.log_bandwidth_bounds) && ordered(self.log_alpha_bounds) && ordered(self.logit_bounds)) {
            return Err(Error::invalid("parameter bounds must be finite and ordered"));
        }
        if self.h_min.ln() >= self.log_bandwidth_bounds.1 {
            return Err(Error::invalid("h_min exceeds the bandwidth upper bound"));
        }
        Ok(())
    }
}

/// Kernel family and active components of the model being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: KernelKind,
    pub mask: ComponentMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub kernel: KernelParams,
    pub mixture: MixtureParams,
    /// Best mean held-out log-likelihood (nats per fixation).
    pub objective: f64,
    /// Log-space parameter vector of the best restart.
    pub theta: Vec<f64>,
    /// Final objective of every restart; `None` where a restart failed.
    pub restart_objectives: Vec<Option<f64>>,
    pub iterations: Vec<usize>,
    /// Whether the minimum-bandwidth constraint binds at the optimum.
    pub constraint_active: bool,
    /// Smallest bandwidth over all folds and sources at the optimum.
    pub min_bandwidth: f64,
}

/// Mean held-out log-likelihood of one image as a function of the log-space
/// parameter vector (see [`KernelKind::encode`]).
pub struct ImageObjective {
    problem: ImageProblem,
}

impl ImageObjective {
    pub fn new(
        image: &ImageRecord,
        table: &FixationTable,
        plan: &FoldPlan,
        model: ModelSpec,
        components: &ComponentSet,
    ) -> Result<Self> {
        Ok(Self {
            problem: ImageProblem::new(image, table, plan, model.kind, model.mask, components)?,
        })
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            kind: self.problem.kind(),
            mask: self.problem.mask(),
        }
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.problem.evaluate(theta, false)?.value)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.problem.evaluate(theta, true)?;
        Ok((e.value, e.grad))
    }

    /// Smallest KDE bandwidth over all folds at `theta`.
    pub fn min_bandwidth(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.problem.evaluate(theta, false)?.min_bandwidth)
    }
}

/// Mean held-out log-likelihood and its exact gradient with respect to the
/// log-space parameter vector.
pub fn objective_and_gradient(
    image: &ImageRecord,
    table: &FixationTable,
    kernel: &KernelParams,
    mixture: &MixtureParams,
    plan: &FoldPlan,
    components: &ComponentSet,
) -> Result<(f64, Vec<f64>)> {
    let kind = KernelKind::of(kernel);
    let obj = ImageObjective::new(image, table, plan, ModelSpec { kind, mask: mixture.mask() }, components)?;
    obj.value_and_gradient(&kind.encode(kernel, mixture)?)
}

/// A set of images sharing one parameter vector; the objective is the mean of
/// per-image objectives.
struct Target<'a> {
    problems: Vec<ImageProblem>,
    model: ModelSpec,
    config: &'a OptimConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> Target<'a> {
    fn new(problems: Vec<ImageProblem>, model: ModelSpec, config: &'a OptimConfig) -> Self {
        let kind = model.kind;
        let (blo, bhi) = config.log_bandwidth_bounds;
        let mut lower = Vec::with_capacity(kind.param_len());
        let mut upper = Vec::with_capacity(kind.param_len());
        match kind {
            KernelKind::Fixed => {
                lower.push(blo.max(config.h_min.ln()));
                upper.push(bhi);
            }
            KernelKind::Adaptive => {
                lower.extend([blo, config.log_alpha_bounds.0]);
                upper.extend([bhi, config.log_alpha_bounds.1]);
            }
        }
        for _ in 0..3 {
            lower.push(config.logit_bounds.0);
            upper.push(config.logit_bounds.1);
        }
        Self {
            problems,
            model,
            config,
            lower,
            upper,
        }
    }

    fn constrained(&self) -> bool {
        self.model.kind == KernelKind::Adaptive && self.model.mask.contains(Component::Kde)
    }

    fn eval(&self, theta: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>, f64)> {
        let k = self.problems.len() as f64;
        let mut value = 0.0;
        let mut grad = if want_grad { vec![0.0; theta.len()] } else { Vec::new() };
        let mut min_h = f64::INFINITY;
        for p in &self.problems {
            let e = p.evaluate(theta, want_grad)?;
            value += e.value / k;
            for (g, eg) in grad.iter_mut().zip(&e.grad) {
                *g += eg / k;
            }
            min_h = min_h.min(e.min_bandwidth);
        }
        Ok((value, grad, min_h))
    }

    fn alpha_floor(&self, log_h0: f64) -> f64 {
        let max_lp = self
            .problems
            .iter()
            .map(|p| p.max_log_pilot(log_h0))
            .fold(f64::NEG_INFINITY, f64::max);
        self.config.h_min.ln() + 0.5 * max_lp + 1e-12
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
        if self.constrained() {
            let floor = self.alpha_floor(x[0]);
            x[1] = x[1].max(floor).min(self.upper[1]);
        }
    }

    fn initial_point(&self, rng: &mut impl Rng) -> Vec<f64> {
        let kind = self.model.kind;
        let mut x = vec![0.0; kind.param_len()];
        let init_lo = 2f64.ln();
        let init_hi = 100f64.ln();
        x[0] = rng.gen_range(init_lo..init_hi);
        if kind == KernelKind::Adaptive {
            // alpha such that the median initial bandwidth equals h0
            let h0 = x[0].exp();
            let mut pilots: Vec<f64> = self.problems.iter().flat_map(|p| p.pooled_pilot(h0)).collect();
            pilots.sort_by(f64::total_cmp);
            let median = pilots[pilots.len() / 2];
            x[1] = (h0 * median.sqrt()).ln();
        }
        for c in [Component::CenterBias, Component::Uniform, Component::Saliency] {
            let i = kind.logit_index(c).unwrap();
            x[i] = if self.model.mask.contains(c) {
                rng.gen_range(-3.0..3.0)
            } else {
                0.0
            };
        }
        self.project(&mut x);
        x
    }
}

struct Minimum {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const LBFGS_MEMORY: usize = 10;

/// Projected L-BFGS maximization of `target` from `x0`.
fn maximize(target: &Target, x0: Vec<f64>) -> Result<Minimum> {
    let cfg = target.config;
    let neg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g, _) = target.eval(x, true)?;
        Ok((-v, g.into_iter().map(|v| -v).collect()))
    };
    let mut x = x0;
    target.project(&mut x);
    let (mut f, mut g) = neg(&x)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        target.project(&mut probe);
        let pg: Vec<f64> = probe.iter().zip(&x).map(|(a, b)| a - b).collect();
        if norm(&pg) < cfg.g_tol {
            break;
        }

        let mut d = two_loop(&g, &memory);
        let restrict = |d: &mut [f64]| {
            for i in 0..d.len() {
                let at_lo = x[i] <= target.lower[i] + 1e-12 && d[i] < 0.0;
                let at_hi = x[i] >= target.upper[i] - 1e-12 && d[i] > 0.0;
                if at_lo || at_hi {
                    d[i] = 0.0;
                }
            }
        };
        restrict(&mut d);
        if dot(&g, &d) >= 0.0 || !d.iter().all(|v| v.is_finite()) {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
            restrict(&mut d);
        }
        let mut t = if memory.is_empty() {
            (1.0 / norm(&d).max(1e-12)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            target.project(&mut xn);
            if xn == x {
                break;
            }
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if let Ok((fn_, gn)) = neg(&xn) {
                if fn_ < f && fn_ <= f + 1e-4 * dot(&g, &step).min(0.0) {
                    accepted = Some((xn, fn_, gn, step));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > LBFGS_MEMORY {
                memory.pop_front();
            }
        }
        let improvement = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        if improvement < cfg.f_tol && !memory.is_empty() {
            break;
        }
    }
    Ok(Minimum {
        x,
        value: -f,
        iterations,
    })
}

/// L-BFGS two-loop recursion; returns the descent direction `-H g`.
fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn run_restarts(target: &Target, stream_label: &str) -> Result<OptimResult> {
    let cfg = target.config;
    cfg.validate()?;
    let outcomes: Vec<Option<Minimum>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(cfg.seed, &[stream_label.as_bytes(), &(r as u64).to_le_bytes()]);
            let x0 = target.initial_point(&mut rng);
            match maximize(target, x0) {
                Ok(m) if m.value.is_finite() => Some(m),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("{stream_label}: restart {r} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let mut best: Option<&Minimum> = None;
    for m in outcomes.iter().flatten() {
        if best.is_none_or(|b| m.value > b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Numerical(format!("{stream_label}: every restart failed to reach a finite objective"))
    })?;

    let mut theta = best.x.clone();
    let (mut value, _, mut min_h) = target.eval(&theta, false)?;
    let constrained = target.constrained();
    if constrained && min_h < cfg.h_min {
        theta[1] += (cfg.h_min / min_h).ln() + 1e-12;
        let (v, _, m) = target.eval(&theta, false)?;
        value = v;
        min_h = m;
    }
    let feasible = match target.model.kind {
        KernelKind::Fixed => theta[0].exp() >= cfg.h_min * (1.0 - 1e-12),
        KernelKind::Adaptive => !constrained || min_h >= cfg.h_min * (1.0 - 1e-12),
    };
    if !feasible {
        return Err(Error::Numerical(format!(
            "{stream_label}: could not restore the minimum-bandwidth constraint"
        )));
    }
    let constraint_active = target.model.mask.contains(Component::Kde) && min_h <= cfg.h_min * (1.0 + 1e-6);
    let (kernel, mixture) = target.model.kind.decode(&theta, target.model.mask);
    Ok(OptimResult {
        kernel,
        mixture,
        objective: value,
        theta,
        restart_objectives: outcomes.iter().map(|o| o.as_ref().map(|m| m.value)).collect(),
        iterations: outcomes.iter().map(|o| o.as_ref().map_or(0, |m| m.iterations)).collect(),
        constraint_active,
        min_bandwidth: min_h,
    })
}

/// Fits one image's parameters by multi-restart maximization of its held-out
/// log-likelihood under `plan`.
pub fn optimize_image(
    image: &ImageRecord,
    table: &FixationTable,
    model: ModelSpec,
    plan: &FoldPlan,
    components: &ComponentSet,
    config: &OptimConfig,
) -> Result<OptimResult> {
    let problem = ImageProblem::new(image, table, plan, model.kind, model.mask, components)?;
    run_restarts(&Target::new(vec![problem], model, config), &image.image_id)
}

/// Fits one parameter vector shared by every crossvalidatable image,
/// maximizing the mean over images of per-image held-out log-likelihood.
pub fn optimize_global(
    dataset: &DatasetBundle,
    components: &BTreeMap<String, ComponentSet>,
    model: ModelSpec,
    scheme: Scheme,
    config: &OptimConfig,
) -> Result<OptimResult> {
    let mut problems = Vec::new();
    for image in &dataset.images {
        let table = &dataset.fixations[&image.image_id];
        let Ok(plan) = make_fold_plan(table, scheme) else {
            continue;
        };
        let empty = ComponentSet::default();
        let comps = components.get(&image.image_id).unwrap_or(&empty);
        problems.push(ImageProblem::new(image, table, &plan, model.kind, model.mask, comps)?);
    }
    if problems.is_empty() {
        return Err(Error::invalid("no crossvalidatable image for global optimization"));
    }
    run_restarts(&Target::new(problems, model, config), "\u{0}global")
}

//! Held-out mixture log-likelihood of one image under a fold plan, with exact
//! gradients in log-space parameters.
//!
//! Parameter vector layout: kernel parameters first (`log h`, or `log h0,
//! log alpha`), then the center-bias, uniform and saliency logits. The KDE
//! logit is pinned at zero.

use crate::crossval::FoldPlan;
use crate::data::{FixationTable, Geometry, ImageRecord, Point};
use crate::error::{Error, Result};
use crate::kde::{self, KernelNorm, KernelParams};
use crate::mixture::{self, Component, ComponentLogDensities, ComponentMask, ComponentSet, MixtureParams};
use crate::util::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Fixed,
    Adaptive,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(KernelKind::Fixed),
            "adaptive" => Ok(KernelKind::Adaptive),
            other => Err(Error::invalid(format!("unknown kernel `{other}`"))),
        }
    }
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Fixed => "fixed",
            KernelKind::Adaptive => "adaptive",
        }
    }

    pub fn of(params: &KernelParams) -> Self {
        match params {
            KernelParams::Fixed(_) => KernelKind::Fixed,
            KernelParams::Adaptive(_) => KernelKind::Adaptive,
        }
    }

    /// Number of kernel entries at the front of a parameter vector.
    pub fn kernel_len(self) -> usize {
        match self {
            KernelKind::Fixed => 1,
            KernelKind::Adaptive => 2,
        }
    }

    pub fn param_len(self) -> usize {
        self.kernel_len() + 3
    }

    /// Position of a non-KDE component's logit in the parameter vector.
    pub fn logit_index(self, c: Component) -> Option<usize> {
        match c {
            Component::Kde => None,
            c => Some(self.kernel_len() + c.index() - 1),
        }
    }

    pub fn encode(self, kernel: &KernelParams, mixture: &MixtureParams) -> Result<Vec<f64>> {
        kernel.validate()?;
        let mut v = match (self, *kernel) {
            (KernelKind::Fixed, KernelParams::Fixed(p)) => vec![p.h.ln()],
            (KernelKind::Adaptive, KernelParams::Adaptive(p)) => vec![p.h0.ln(), p.alpha.ln()],
            _ => return Err(Error::invalid("kernel parameters do not match kernel kind")),
        };
        for c in [Component::CenterBias, Component::Uniform, Component::Saliency] {
            v.push(mixture.logit(c));
        }
        Ok(v)
    }

    pub fn decode(self, theta: &[f64], mask: ComponentMask) -> (KernelParams, MixtureParams) {
        let kernel = match self {
            KernelKind::Fixed => KernelParams::fixed(theta[0].exp()),
            KernelKind::Adaptive => KernelParams::adaptive(theta[0].exp(), theta[1].exp()),
        };
        let mut mixture = MixtureParams::new(mask);
        for c in [Component::CenterBias, Component::Uniform, Component::Saliency] {
            mixture.set_logit(c, theta[self.logit_index(c).unwrap()]);
        }
        (kernel, mixture)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    /// Mean held-out log-likelihood in nats.
    pub value: f64,
    /// Gradient of `value`; empty when not requested.
    pub grad: Vec<f64>,
    /// Held-out log density of every fixation, in table row order.
    pub per_fixation: Vec<f64>,
    /// Smallest KDE bandwidth used in any fold (`inf` without a KDE).
    pub min_bandwidth: f64,
}

pub(crate) struct ImageProblem {
    pub image_id: String,
    geom: Geometry,
    points: Vec<Point>,
    d2: Vec<f64>,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
    kind: KernelKind,
    mask: ComponentMask,
    statics: ComponentLogDensities,
}

/// KDE log density at one held-out fixation plus its kernel-parameter gradient.
struct KdeTerm {
    fold: usize,
    index: usize,
    value: f64,
    grad: [f64; 2],
}

impl ImageProblem {
    pub fn new(
        image: &ImageRecord,
        table: &FixationTable,
        plan: &FoldPlan,
        kind: KernelKind,
        mask: ComponentMask,
        components: &ComponentSet,
    ) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::invalid("all mixture components are disabled"));
        }
        let points = table.points();
        let m = points.len();
        let mut tested = vec![false; m];
        for (f, fold) in plan.folds.iter().enumerate() {
            if fold.train.is_empty() {
                return Err(Error::invalid(format!(
                    "image {}: fold {} ({}) has no training fixations",
                    image.image_id, f, fold.label
                )));
            }
            for &i in fold.train.iter().chain(&fold.test) {
                if i >= m {
                    return Err(Error::invalid(format!("fold {f} references fixation {i} of {m}")));
                }
            }
            for &i in &fold.test {
                if std::mem::replace(&mut tested[i], true) {
                    return Err(Error::invalid(format!("fixation {i} is tested twice")));
                }
            }
        }
        if tested.iter().any(|t| !t) {
            return Err(Error::invalid("fold plan leaves fixations untested"));
        }
        let statics = mixture::static_logdensities(image, mask, components, &points)?;
        let mut d2 = vec![0.0; m * m];
        for (i, p) in points.iter().enumerate() {
            for (j, q) in points.iter().enumerate() {
                d2[i * m + j] = p.dist2(*q);
            }
        }
        Ok(Self {
            image_id: image.image_id.clone(),
            geom: image.geometry(),
            points,
            d2,
            folds: plan
                .folds
                .iter()
                .map(|f| (f.train.clone(), f.test.clone()))
                .collect(),
            kind,
            mask,
            statics,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn mask(&self) -> ComponentMask {
        self.mask
    }

    /// Pooled pilot density at every fixation; used to initialize `alpha`.
    pub fn pooled_pilot(&self, h0: f64) -> Vec<f64> {
        let all: Vec<usize> = (0..self.points.len()).collect();
        let (k0, _) = self.pilot_kernels(h0, false);
        let (lp, _) = self.fold_pilot(&k0, &[], &all);
        lp.into_iter().map(f64::exp).collect()
    }

    /// Largest log pilot density over every fold and training fixation. The
    /// bandwidth constraint `min h_j >= h_min` is `log alpha >= log h_min + max / 2`.
    pub fn max_log_pilot(&self, log_h0: f64) -> f64 {
        let (k0, _) = self.pilot_kernels(log_h0.exp(), false);
        self.folds
            .iter()
            .map(|(train, _)| {
                self.fold_pilot(&k0, &[], train)
                    .0
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pilot kernel values `K0[j * m + i]` (kernel at source `i` evaluated at
    /// `j`) and, optionally, their `log h0` derivatives times the value.
    fn pilot_kernels(&self, h0: f64, want_grad: bool) -> (Vec<f64>, Vec<f64>) {
        let m = self.points.len();
        let log_h0 = h0.ln();
        let norms: Vec<KernelNorm> = self
            .points
            .iter()
            .map(|p| kde::kernel_norm(*p, h0, self.geom))
            .collect();
        let mut k0 = vec![0.0; m * m];
        let mut g0 = if want_grad { vec![0.0; m * m] } else { Vec::new() };
        for j in 0..m {
            for i in 0..m {
                let (lk, g) = kde::log_kernel(self.d2[j * m + i], h0, log_h0, norms[i]);
                let k = lk.exp();
                k0[j * m + i] = k;
                if want_grad {
                    g0[j * m + i] = k * g;
                }
            }
        }
        (k0, g0)
    }

    /// Log pilot density at each training fixation of a fold and its
    /// derivative in `log h0`. Each sum contains the fixation's own kernel, so
    /// it is safe to accumulate in linear space.
    fn fold_pilot(&self, k0: &[f64], g0: &[f64], train: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let m = self.points.len();
        let log_n = (train.len() as f64).ln();
        let mut lp = Vec::with_capacity(train.len());
        let mut dlp = Vec::with_capacity(train.len());
        for &j in train {
            let row = &k0[j * m..(j + 1) * m];
            let s: f64 = train.iter().map(|&i| row[i]).sum();
            lp.push(s.ln() - log_n);
            if !g0.is_empty() {
                let grow = &g0[j * m..(j + 1) * m];
                let sg: f64 = train.iter().map(|&i| grow[i]).sum();
                dlp.push(sg / s);
            }
        }
        (lp, dlp)
    }

    fn kde_terms(&self, theta: &[f64], want_grad: bool) -> (Vec<KdeTerm>, f64) {
        match self.kind {
            KernelKind::Fixed => (self.fixed_terms(theta[0]), theta[0].exp()),
            KernelKind::Adaptive => self.adaptive_terms(theta[0], theta[1], want_grad),
        }
    }

    fn fixed_terms(&self, log_h: f64) -> Vec<KdeTerm> {
        let m = self.points.len();
        let h = log_h.exp();
        let norms: Vec<KernelNorm> = self
            .points
            .iter()
            .map(|p| kde::kernel_norm(*p, h, self.geom))
            .collect();
        let mut out = Vec::with_capacity(m);
        let mut a = Vec::new();
        let mut g = Vec::new();
        for (f, (train, test)) in self.folds.iter().enumerate() {
            let log_n = (train.len() as f64).ln();
            for &q in test {
                a.clear();
                g.clear();
                for &j in train {
                    let (v, d) = kde::log_kernel(self.d2[q * m + j], h, log_h, norms[j]);
                    a.push(v);
                    g.push(d);
                }
                let lse = log_sum_exp(&a);
                let grad: f64 = a.iter().zip(&g).map(|(v, d)| (v - lse).exp() * d).sum();
                out.push(KdeTerm {
                    fold: f,
                    index: q,
                    value: lse - log_n,
                    grad: [grad, 0.0],
                });
            }
        }
        out
    }

    fn adaptive_terms(&self, log_h0: f64, log_alpha: f64, want_grad: bool) -> (Vec<KdeTerm>, f64) {
        let m = self.points.len();
        let (k0, g0) = self.pilot_kernels(log_h0.exp(), want_grad);
        let mut out = Vec::with_capacity(m);
        let mut min_h = f64::INFINITY;
        let mut a = Vec::new();
        let mut g = Vec::new();
        for (f, (train, test)) in self.folds.iter().enumerate() {
            let (lp, dlp) = self.fold_pilot(&k0, &g0, train);
            let bws: Vec<(f64, f64, KernelNorm)> = train
                .iter()
                .zip(&lp)
                .map(|(&j, &l)| {
                    let log_h = log_alpha - 0.5 * l;
                    let h = log_h.exp();
                    (h, log_h, kde::kernel_norm(self.points[j], h, self.geom))
                })
                .collect();
            min_h = bws.iter().map(|b| b.0).fold(min_h, f64::min);
            let log_n = (train.len() as f64).ln();
            for &q in test {
                a.clear();
                g.clear();
                for (&j, &(h, log_h, norm)) in train.iter().zip(&bws) {
                    let (v, d) = kde::log_kernel(self.d2[q * m + j], h, log_h, norm);
                    a.push(v);
                    g.push(d);
                }
                let lse = log_sum_exp(&a);
                let mut d_h0 = 0.0;
                let mut d_alpha = 0.0;
                if want_grad {
                    for (k, (v, d)) in a.iter().zip(&g).enumerate() {
                        let rd = (v - lse).exp() * d;
                        d_alpha += rd;
                        d_h0 += rd * (-0.5 * dlp[k]);
                    }
                }
                out.push(KdeTerm {
                    fold: f,
                    index: q,
                    value: lse - log_n,
                    grad: [d_h0, d_alpha],
                });
            }
        }
        (out, min_h)
    }

    pub fn evaluate(&self, theta: &[f64], want_grad: bool) -> Result<Evaluation> {
        let kind = self.kind;
        if theta.len() != kind.param_len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                kind.param_len(),
                theta.len()
            )));
        }
        if let Some(i) = theta[..kind.kernel_len()].iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite kernel parameter {i}")));
        }
        let (_, mixture) = kind.decode(theta, self.mask);
        let lw = mixture.log_weights()?;
        let weights = lw.map(f64::exp);

        let n = self.points.len();
        let mut per_fixation = vec![f64::NAN; n];
        let mut grad = if want_grad { vec![0.0; kind.param_len()] } else { Vec::new() };
        let mut min_bandwidth = f64::INFINITY;

        let kde_terms: Vec<KdeTerm> = if self.mask.contains(Component::Kde) {
            let (terms, min_h) = self.kde_terms(theta, want_grad);
            min_bandwidth = min_h;
            terms
        } else {
            self.folds
                .iter()
                .enumerate()
                .flat_map(|(f, (_, test))| {
                    test.iter().map(move |&q| KdeTerm { fold: f, index: q, value: 0.0, grad: [0.0; 2] })
                })
                .collect()
        };

        let active: Vec<Component> = self.mask.active().collect();
        let mut t = vec![0.0; active.len()];
        for term in &kde_terms {
            for (slot, &c) in t.iter_mut().zip(&active) {
                let l = match c {
                    Component::Kde => term.value,
                    other => self.statics.get(other).expect("static component present")[term.index],
                };
                *slot = lw[c.index()] + l;
            }
            let lp = log_sum_exp(&t);
            if !lp.is_finite() {
                return Err(Error::Numerical(format!(
                    "image {}: fold {} fixation {}: log density {lp}",
                    self.image_id, term.fold, term.index
                )));
            }
            per_fixation[term.index] = lp;
            if want_grad {
                for (&slot, &c) in t.iter().zip(&active) {
                    let resp = (slot - lp).exp();
                    match c {
                        Component::Kde => {
                            for (k, g) in term.grad.iter().take(kind.kernel_len()).enumerate() {
                                grad[k] += resp * g;
                            }
                        }
                        other => {
                            grad[kind.logit_index(other).unwrap()] += resp - weights[other.index()];
                        }
                    }
                }
            }
        }
        let value = per_fixation.iter().sum::<f64>() / n as f64;
        grad.iter_mut().for_each(|g| *g /= n as f64);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "image {}: non-finite objective or gradient",
                self.image_id
            )));
        }
        Ok(Evaluation {
            value,
            grad,
            per_fixation,
            min_bandwidth,
        })
    }
}

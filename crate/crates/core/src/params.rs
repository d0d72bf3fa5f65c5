//! JSON formats for fitted parameters and evaluation results.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossval::Scheme;
use crate::error::{Error, Result};
use crate::kde::KernelParams;
use crate::mixture::{Component, ComponentMask, MixtureParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Fixed { h: f64 },
    Adaptive { h0: f64, alpha: f64 },
}

/// Fitted parameters of one image: `{image_id, kernel, logits, objective_nats}`.
/// The keys of `logits` are the active components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    pub image_id: String,
    pub kernel: KernelSpec,
    pub logits: BTreeMap<String, f64>,
    pub objective_nats: Option<f64>,
}

impl ImageParams {
    pub fn from_model(
        image_id: &str,
        kernel: &KernelParams,
        mixture: &MixtureParams,
        objective_nats: Option<f64>,
    ) -> Self {
        let kernel = match *kernel {
            KernelParams::Fixed(p) => KernelSpec::Fixed { h: p.h },
            KernelParams::Adaptive(p) => KernelSpec::Adaptive {
                h0: p.h0,
                alpha: p.alpha,
            },
        };
        let logits = mixture
            .mask()
            .active()
            .map(|c| (c.name().to_string(), mixture.logit(c)))
            .collect();
        Self {
            image_id: image_id.to_string(),
            kernel,
            logits,
            objective_nats,
        }
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        let k = match self.kernel {
            KernelSpec::Fixed { h } => KernelParams::fixed(h),
            KernelSpec::Adaptive { h0, alpha } => KernelParams::adaptive(h0, alpha),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn mixture_params(&self) -> Result<MixtureParams> {
        let comps = self
            .logits
            .keys()
            .map(|k| k.parse::<Component>())
            .collect::<Result<Vec<_>>>()?;
        let mut m = MixtureParams::new(ComponentMask::only(&comps));
        if m.mask().is_empty() {
            return Err(Error::invalid(format!("image {}: no active components", self.image_id)));
        }
        for (k, &z) in &self.logits {
            if z.is_nan() {
                return Err(Error::invalid(format!("image {}: logit {k} is NaN", self.image_id)));
            }
            m.set_logit(k.parse()?, z);
        }
        // Validates that some active logit is finite.
        m.log_weights()?;
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.kernel_params()?;
        p.mixture_params()?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// One line of evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: String,
    pub scheme: Scheme,
    pub mean_ll_nats: f64,
    pub ig_bits: f64,
    pub n_fixations: usize,
    pub params: ImageParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

pub fn records_to_jsonl(records: &[ResultRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_results_jsonl(text: &str) -> Result<Vec<ResultRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                source_name: "results".into(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

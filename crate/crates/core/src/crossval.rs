//! Fold construction and held-out likelihood evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FixationTable, ImageRecord};
use crate::error::{Error, Result};
use crate::kde::KernelParams;
use crate::likelihood::{ImageProblem, KernelKind};
use crate::mixture::{ComponentSet, MixtureParams};
use crate::params::{ImageParams, ResultRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Leave one subject out.
    Loso,
    /// Leave one fixation out.
    Lofo,
    /// Train and test on all fixations. Not a cross-validation.
    Pooled,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Loso => "loso",
            Scheme::Lofo => "lofo",
            Scheme::Pooled => "pooled",
        }
    }

    pub fn is_crossvalidated(self) -> bool {
        !matches!(self, Scheme::Pooled)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loso" => Ok(Scheme::Loso),
            "lofo" => Ok(Scheme::Lofo),
            "pooled" => Ok(Scheme::Pooled),
            other => Err(Error::invalid(format!("unknown plan `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    /// Subject id (LOSO), row index (LOFO) or `all` (pooled).
    pub label: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
}

/// Builds the fold plan for one image. Folds are ordered by subject id (LOSO)
/// or row index (LOFO); index lists are ascending.
pub fn make_fold_plan(table: &FixationTable, scheme: Scheme) -> Result<FoldPlan> {
    let n = table.len();
    let folds = match scheme {
        Scheme::Loso => {
            let subjects = table.subjects();
            if subjects.len() < 2 {
                return Err(Error::invalid(format!(
                    "image {}: LOSO needs at least 2 subjects, found {}",
                    table.image_id,
                    subjects.len()
                )));
            }
            subjects
                .into_iter()
                .map(|s| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..n).partition(|&i| table.rows[i].subject_id == s);
                    Fold {
                        label: s.to_string(),
                        train,
                        test,
                    }
                })
                .collect()
        }
        Scheme::Lofo => {
            if n < 2 {
                return Err(Error::invalid(format!(
                    "image {}: LOFO needs at least 2 fixations",
                    table.image_id
                )));
            }
            (0..n)
                .map(|i| Fold {
                    label: i.to_string(),
                    train: (0..n).filter(|&j| j != i).collect(),
                    test: vec![i],
                })
                .collect()
        }
        Scheme::Pooled => {
            if n == 0 {
                return Err(Error::invalid(format!("image {} has no fixations", table.image_id)));
            }
            vec![Fold {
                label: "all".into(),
                train: (0..n).collect(),
                test: (0..n).collect(),
            }]
        }
    };
    Ok(FoldPlan { scheme, folds })
}

/// Held-out log densities of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEval {
    pub scheme: Scheme,
    /// Natural-log density of each fixation under the model that did not see
    /// it (all fixations for pooled), in table row order.
    pub per_fixation: Vec<f64>,
    pub mean_ll: f64,
    pub n: usize,
}

/// Evaluates the mixture at held-out fixations. For every fold the KDE
/// (including the adaptive pilot) is rebuilt from that fold's training
/// fixations; the other components are shared across folds.
pub fn evaluate_image(
    image: &ImageRecord,
    table: &FixationTable,
    kernel: &KernelParams,
    mixture: &MixtureParams,
    components: &ComponentSet,
    plan: &FoldPlan,
) -> Result<FoldEval> {
    let kind = KernelKind::of(kernel);
    let problem = ImageProblem::new(image, table, plan, kind, mixture.mask(), components)?;
    let eval = problem.evaluate(&kind.encode(kernel, mixture)?, false)?;
    Ok(FoldEval {
        scheme: plan.scheme,
        n: eval.per_fixation.len(),
        mean_ll: eval.value,
        per_fixation: eval.per_fixation,
    })
}

/// Information gain in bits per fixation of a mean natural-log likelihood
/// over the uniform density of the image.
pub fn ig_bits(mean_ll_nats: f64, image: &ImageRecord) -> f64 {
    (mean_ll_nats - image.log_uniform()) / std::f64::consts::LN_2
}

/// Everything needed to evaluate one image.
#[derive(Debug, Clone)]
pub struct ImageModel {
    pub kernel: KernelParams,
    pub mixture: MixtureParams,
    pub components: ComponentSet,
}

#[derive(Debug, Clone)]
pub struct IocSummary {
    pub scheme: Scheme,
    pub records: Vec<ResultRecord>,
    /// Unweighted mean over images.
    pub mean_ig_bits: f64,
    pub mean_ll_nats: f64,
    /// Mean over all fixations of all images.
    pub fixation_weighted_ig_bits: f64,
}

/// Per-image and dataset-level consistency under `scheme`. Images that cannot
/// be split under the scheme are skipped with a warning.
pub fn ioc_summary(
    dataset: &DatasetBundle,
    models: &BTreeMap<String, ImageModel>,
    scheme: Scheme,
) -> Result<IocSummary> {
    let mut records = Vec::new();
    let mut weighted = 0.0;
    let mut total_n = 0usize;
    for image in &dataset.images {
        let table = &dataset.fixations[&image.image_id];
        let plan = match make_fold_plan(table, scheme) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping image {}: {e}", image.image_id);
                continue;
            }
        };
        let model = models
            .get(&image.image_id)
            .ok_or_else(|| Error::invalid(format!("missing params for image {}", image.image_id)))?;
        let eval = evaluate_image(image, table, &model.kernel, &model.mixture, &model.components, &plan)?;
        let ig = ig_bits(eval.mean_ll, image);
        weighted += ig * eval.n as f64;
        total_n += eval.n;
        records.push(ResultRecord {
            image_id: image.image_id.clone(),
            scheme,
            mean_ll_nats: eval.mean_ll,
            ig_bits: ig,
            n_fixations: eval.n,
            params: ImageParams::from_model(&image.image_id, &model.kernel, &model.mixture, None),
            auc: None,
        });
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("no image can be evaluated under {scheme}")));
    }
    let k = records.len() as f64;
    Ok(IocSummary {
        scheme,
        mean_ig_bits: records.iter().map(|r| r.ig_bits).sum::<f64>() / k,
        mean_ll_nats: records.iter().map(|r| r.mean_ll_nats).sum::<f64>() / k,
        fixation_weighted_ig_bits: weighted / total_n as f64,
        records,
    })
}

impl IocSummary {
    /// One JSON object per line, images in id order.
    pub fn to_jsonl(&self) -> Result<String> {
        crate::params::records_to_jsonl(&self.records)
    }
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use fixdens::crossval::{ioc_summary, Scheme};
use fixdens::export::{loso_density, pooled_density, LosoDensityConfig};
use fixdens::metrics::{auc_uniform, bootstrap_ci, BootstrapConfig, ConfidenceInterval};
use fixdens::params::records_to_jsonl;
use fixdens::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::common::{build_components, create_dir, file_stems, to_json, write_text, DataArgs, FitOutput};
use crate::config::{pick, require, switch, FileConfig};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit output directory; repeat to compare several models.
    #[arg(long = "params", required = true)]
    pub params: Vec<PathBuf>,
    /// Evaluation plan: loso, lofo or pooled.
    #[arg(long)]
    pub plan: Option<Scheme>,
    /// Resamples of the image bootstrap (used with two or more models).
    #[arg(long)]
    pub bootstrap_iterations: Option<usize>,
    /// Skip the AUC, which needs a full density map per image.
    #[arg(long)]
    pub no_auc: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    label: String,
    params_dir: String,
    n_images: usize,
    mean_ig_bits: f64,
    mean_ll_nats: f64,
    fixation_weighted_ig_bits: f64,
    mean_auc: Option<f64>,
    ig_ci: Option<ConfidenceInterval>,
}

#[derive(Debug, Serialize)]
struct Summary {
    plan: Scheme,
    crossvalidated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    seed: u64,
    bootstrap_iterations: usize,
    /// Images scored by every model; the bootstrap runs over these.
    common_images: usize,
    models: Vec<ModelSummary>,
}

pub fn run(args: &EvaluateArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let e = &cfg.evaluate;
    let plan = match (args.plan, &e.plan) {
        (Some(p), _) => p,
        (None, Some(s)) => s.parse()?,
        (None, None) => Scheme::Loso,
    };
    let iterations = pick(args.bootstrap_iterations, e.bootstrap_iterations, 10_000);
    if iterations == 0 {
        return Err(Error::invalid("--bootstrap-iterations must be >= 1"));
    }
    let with_auc = !switch(args.no_auc, e.no_auc);
    let out = require(args.out.clone().or(e.out.clone()), "--out")?;
    let fits = args
        .params
        .iter()
        .map(|d| FitOutput::load(d))
        .collect::<Result<Vec<_>>>()?;
    let warning = (!plan.is_crossvalidated()).then(|| {
        let w = "pooled scores include each fixation's own kernel and overestimate consistency".to_string();
        log::warn!("{w}");
        w
    });

    let dataset = args.data.load(cfg)?;
    let labels = file_stems(fits.iter().map(|f| {
        f.dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("model")
    }));
    create_dir(&out)?;

    let mut summaries = Vec::new();
    let mut per_model: Vec<BTreeMap<String, f64>> = Vec::new();
    for fit in &fits {
        let label = &labels[fit.dir.file_name().and_then(|n| n.to_str()).unwrap_or("model")];
        let components = build_components(&dataset, fit.mask()?, fit.manifest.center_bias)?;
        let models = fit.models(&dataset, &components)?;
        let mut scored = dataset.clone();
        scored.images.retain(|i| models.contains_key(&i.image_id));
        let mut summary = ioc_summary(&scored, &models, plan)?;
        for r in &mut summary.records {
            r.params = fit.params[&r.image_id].clone();
        }
        let mut mean_auc = None;
        if with_auc && plan != Scheme::Lofo {
            let aucs: Vec<f64> = summary
                .records
                .par_iter()
                .map(|r| {
                    let image = dataset.image(&r.image_id).expect("scored images exist");
                    let table = &dataset.fixations[&r.image_id];
                    let m = &models[&r.image_id];
                    let grid = match plan {
                        Scheme::Pooled => pooled_density(image, table, &m.kernel, &m.mixture, &m.components)?,
                        _ => {
                            loso_density(image, table, &m.kernel, &m.mixture, &m.components, &LosoDensityConfig::default())?
                                .grid
                        }
                    };
                    auc_uniform(&grid, &table.points())
                })
                .collect::<Result<_>>()?;
            for (r, a) in summary.records.iter_mut().zip(&aucs) {
                r.auc = Some(*a);
            }
            mean_auc = Some(aucs.iter().sum::<f64>() / aucs.len() as f64);
        }
        write_text(&out.join(format!("{label}.results.jsonl")), &records_to_jsonl(&summary.records)?)?;
        per_model.push(summary.records.iter().map(|r| (r.image_id.clone(), r.ig_bits)).collect());
        println!(
            "{label}: {} image(s), IG {:.4} bits/fix ({plan})",
            summary.records.len(),
            summary.mean_ig_bits
        );
        summaries.push(ModelSummary {
            label: label.clone(),
            params_dir: fit.dir.display().to_string(),
            n_images: summary.records.len(),
            mean_ig_bits: summary.mean_ig_bits,
            mean_ll_nats: summary.mean_ll_nats,
            fixation_weighted_ig_bits: summary.fixation_weighted_ig_bits,
            mean_auc,
            ig_ci: None,
        });
    }

    let common: Vec<&String> = per_model[0]
        .keys()
        .filter(|id| per_model.iter().all(|m| m.contains_key(*id)))
        .collect();
    if fits.len() >= 2 {
        if common.len() >= 2 {
            let values: Vec<Vec<f64>> = per_model
                .iter()
                .map(|m| common.iter().map(|id| m[*id]).collect())
                .collect();
            let cis = bootstrap_ci(
                &values,
                &BootstrapConfig {
                    iterations,
                    seed,
                    ..BootstrapConfig::default()
                },
            )?;
            for (s, ci) in summaries.iter_mut().zip(cis) {
                s.ig_ci = Some(ci);
            }
        } else {
            log::warn!("fewer than two images are scored by every model; no confidence intervals");
        }
    }
    let summary = Summary {
        plan,
        crossvalidated: plan.is_crossvalidated(),
        warning,
        seed,
        bootstrap_iterations: iterations,
        common_images: common.len(),
        models: summaries,
    };
    write_text(&out.join("summary.json"), &to_json(&summary)?)
}

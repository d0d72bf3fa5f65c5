use std::path::PathBuf;

use clap::Args;
use fixdens::crossval::{evaluate_image, make_fold_plan, Scheme};
use fixdens::optimize::{optimize_global, optimize_image, KernelKind, ModelSpec, OptimConfig};
use fixdens::params::ImageParams;
use fixdens::{Component, ComponentMask, Error, KernelParams, MixtureParams, Result};
use rayon::prelude::*;

use crate::common::{
    build_components, create_dir, file_stems, to_json, write_text, CenterBiasMode, DataArgs, FitManifest,
    ManifestEntry, MANIFEST,
};
use crate::config::{pick, require, switch, FileConfig};

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Kernel family: fixed or adaptive.
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Comma-separated active components out of kde, cb, uniform, saliency.
    #[arg(long)]
    pub components: Option<String>,
    /// Optimize each image separately (default).
    #[arg(long, conflicts_with = "global")]
    pub per_image: bool,
    /// Optimize one parameter vector shared by all images.
    #[arg(long)]
    pub global: bool,
    /// Use the given parameters instead of optimizing.
    #[arg(long)]
    pub no_optimize: bool,
    /// Fixed bandwidth in pixels (with --no-optimize).
    #[arg(long, conflicts_with = "h_deg")]
    pub h: Option<f64>,
    /// Fixed bandwidth in degrees of visual angle (with --no-optimize).
    #[arg(long)]
    pub h_deg: Option<f64>,
    /// Pilot bandwidth in pixels (adaptive, with --no-optimize).
    #[arg(long)]
    pub h0: Option<f64>,
    /// Abramson scale (adaptive, with --no-optimize).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Mixture logit NAME=VALUE (with --no-optimize; default 0).
    #[arg(long = "logit", value_name = "NAME=VALUE")]
    pub logits: Vec<String>,
    /// Fold plan of the objective: loso, lofo or pooled.
    #[arg(long)]
    pub plan: Option<Scheme>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Minimum effective bandwidth in pixels.
    #[arg(long)]
    pub h_min: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Use one center bias fitted on all images (not crossvalidated).
    #[arg(long)]
    pub cb_shared: bool,
    /// Output directory for parameter files and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum FixedKernel {
    Pixels(f64),
    Degrees(f64),
}

pub fn run(args: &FitArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let f = &cfg.fit;
    let kind = match (args.kernel, &f.kernel) {
        (Some(k), _) => k,
        (None, Some(s)) => s.parse()?,
        (None, None) => KernelKind::Adaptive,
    };
    let components = pick(args.components.clone(), f.components.clone(), "kde,cb,uniform".to_string());
    let mask = ComponentMask::parse_list(&components)?;
    let global = if args.global || args.per_image {
        args.global
    } else {
        match f.mode.as_deref() {
            None | Some("per-image") => false,
            Some("global") => true,
            Some(other) => return Err(Error::invalid(format!("unknown fit mode `{other}`"))),
        }
    };
    let plan_scheme = match (args.plan, &f.plan) {
        (Some(p), _) => p,
        (None, Some(s)) => s.parse()?,
        (None, None) => Scheme::Loso,
    };
    let optim = OptimConfig {
        restarts: pick(args.restarts, f.restarts, 50),
        seed,
        h_min: pick(args.h_min, f.h_min, 0.5),
        max_iter: pick(args.max_iter, f.max_iter, 500),
        ..OptimConfig::default()
    };
    optim.validate()?;
    let cb_mode = mask
        .contains(Component::CenterBias)
        .then(|| if switch(args.cb_shared, f.cb_shared) { CenterBiasMode::Shared } else { CenterBiasMode::Loio });
    let out = require(args.out.clone().or(f.out.clone()), "--out")?;

    // Flag consistency before any heavy work.
    let fixed_params = if args.no_optimize {
        Some(fixed_parameters(args, kind, mask)?)
    } else {
        if args.h.is_some() || args.h_deg.is_some() || args.h0.is_some() || args.alpha.is_some() || !args.logits.is_empty() {
            return Err(Error::invalid("--h, --h-deg, --h0, --alpha and --logit require --no-optimize"));
        }
        None
    };
    if plan_scheme == Scheme::Pooled {
        log::warn!("fitting against the pooled plan: the objective includes each fixation's own kernel and overfits");
    }

    let dataset = args.data.load(cfg)?;
    if let Some((FixedKernel::Degrees(_), _)) = &fixed_params {
        for img in &dataset.images {
            if dataset.table(&img.image_id).is_some_and(|t| !t.is_empty()) {
                img.degrees_to_pixels(1.0)?;
            }
        }
    }
    let components = build_components(&dataset, mask, cb_mode)?;
    let model = ModelSpec { kind, mask };

    let tables: Vec<_> = dataset.fixations.values().filter(|t| !t.is_empty()).collect();
    let stems = file_stems(tables.iter().map(|t| t.image_id.as_str()));
    let params_dir = out.join("params");
    create_dir(&params_dir)?;

    let mut global_objective = None;
    let global_fit = if global && fixed_params.is_none() {
        let r = optimize_global(&dataset, &components, model, plan_scheme, &optim)?;
        log::info!("global objective {:.6} nats/fixation", r.objective);
        global_objective = Some(r.objective);
        Some(r)
    } else {
        None
    };

    type Fitted = Option<(ImageParams, Option<bool>)>;
    let fitted: Vec<Fitted> = tables
        .par_iter()
        .map(|table| -> Result<Fitted> {
            let id = &table.image_id;
            let image = dataset.image(id).expect("tables belong to images");
            let comps = components.get(id).cloned().unwrap_or_default();
            let plan = make_fold_plan(table, plan_scheme).ok();
            let (kernel, mixture, objective, active) = if let Some((fk, mix)) = &fixed_params {
                let kernel = match (kind, fk) {
                    (KernelKind::Fixed, FixedKernel::Pixels(h)) => KernelParams::fixed(*h),
                    (KernelKind::Fixed, FixedKernel::Degrees(d)) => KernelParams::fixed(image.degrees_to_pixels(*d)?),
                    (KernelKind::Adaptive, FixedKernel::Pixels(_)) => {
                        KernelParams::adaptive(args.h0.expect("checked"), args.alpha.expect("checked"))
                    }
                    (KernelKind::Adaptive, FixedKernel::Degrees(_)) => unreachable!(),
                };
                let objective = match &plan {
                    Some(p) => Some(evaluate_image(image, table, &kernel, mix, &comps, p)?.mean_ll),
                    None => None,
                };
                (kernel, *mix, objective, None)
            } else if let Some(g) = &global_fit {
                let objective = match &plan {
                    Some(p) => Some(evaluate_image(image, table, &g.kernel, &g.mixture, &comps, p)?.mean_ll),
                    None => None,
                };
                (g.kernel, g.mixture, objective, None)
            } else {
                let Some(plan) = &plan else {
                    log::warn!("skipping image {id}: cannot be split under {plan_scheme}");
                    return Ok(None);
                };
                let r = optimize_image(image, table, model, plan, &comps, &optim)
                    .map_err(|e| Error::Numerical(format!("image {id}: {e}")))?;
                log::info!("image {id}: objective {:.6} nats/fixation", r.objective);
                (r.kernel, r.mixture, Some(r.objective), Some(r.constraint_active))
            };
            let params = ImageParams::from_model(id, &kernel, &mixture, objective);
            let file = params_dir.join(format!("{}.json", stems[id]));
            write_text(&file, &params.to_json()?)?;
            Ok(Some((params, active)))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (table, f) in tables.iter().zip(fitted) {
        match f {
            Some((p, active)) => entries.push(ManifestEntry {
                file: format!("params/{}.json", stems[&table.image_id]),
                image_id: p.image_id,
                objective_nats: p.objective_nats,
                constraint_active: active,
            }),
            None => skipped.push(table.image_id.clone()),
        }
    }
    if entries.is_empty() {
        return Err(Error::invalid(format!("no image could be fitted under {plan_scheme}")));
    }
    let manifest = FitManifest {
        kernel: kind.name().to_string(),
        components: mask.to_list(),
        mode: if fixed_params.is_some() { "fixed" } else if global { "global" } else { "per-image" }.to_string(),
        plan: plan_scheme,
        center_bias: cb_mode,
        seed,
        restarts: fixed_params.is_none().then_some(optim.restarts),
        h_min: fixed_params.is_none().then_some(optim.h_min),
        global_objective_nats: global_objective,
        images: entries,
        skipped,
    };
    write_text(&out.join(MANIFEST), &to_json(&manifest)?)?;
    println!(
        "fitted {} image(s) ({} skipped) -> {}",
        manifest.images.len(),
        manifest.skipped.len(),
        out.display()
    );
    Ok(())
}

fn fixed_parameters(args: &FitArgs, kind: KernelKind, mask: ComponentMask) -> Result<(FixedKernel, MixtureParams)> {
    let positive = |v: f64, name: &str| -> Result<f64> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::invalid(format!("{name} must be > 0")))
        }
    };
    let kernel = match kind {
        KernelKind::Fixed => {
            if args.h0.is_some() || args.alpha.is_some() {
                return Err(Error::invalid("--h0/--alpha apply to the adaptive kernel"));
            }
            match (args.h, args.h_deg) {
                (Some(h), None) => FixedKernel::Pixels(positive(h, "--h")?),
                (None, Some(d)) => FixedKernel::Degrees(positive(d, "--h-deg")?),
                _ if !mask.contains(Component::Kde) => FixedKernel::Pixels(1.0),
                _ => return Err(Error::invalid("--no-optimize with a fixed kernel needs --h or --h-deg")),
            }
        }
        KernelKind::Adaptive => {
            if args.h.is_some() || args.h_deg.is_some() {
                return Err(Error::invalid("--h/--h-deg apply to the fixed kernel"));
            }
            match (args.h0, args.alpha) {
                (Some(h0), Some(a)) => {
                    positive(h0, "--h0")?;
                    positive(a, "--alpha")?;
                    FixedKernel::Pixels(h0)
                }
                _ => return Err(Error::invalid("--no-optimize with an adaptive kernel needs --h0 and --alpha")),
            }
        }
    };
    let mut mixture = MixtureParams::new(mask);
    for spec in &args.logits {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--logit expects NAME=VALUE, got `{spec}`")))?;
        let c: Component = name.trim().parse()?;
        if !mask.contains(c) {
            return Err(Error::invalid(format!("--logit for inactive component {c}")));
        }
        if c == Component::Kde {
            return Err(Error::invalid("the kde logit is fixed at 0"));
        }
        let z: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad logit value `{value}`")))?;
        if !z.is_finite() {
            return Err(Error::invalid("logits must be finite"));
        }
        mixture.set_logit(c, z);
    }
    Ok((kernel, mixture))
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use fixdens::metrics::{improvement_quantiles, parameter_extremes, MetricRecord, DEFAULT_QUANTILES};
use fixdens::params::{parse_results_jsonl, ResultRecord};
use fixdens::{Error, Result};

use crate::common::create_dir;
use crate::config::{pick, require, FileConfig};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Baseline results (`*.results.jsonl`), one per dataset.
    #[arg(long = "baseline", required = true)]
    pub baselines: Vec<PathBuf>,
    /// Improved-model results, paired with --baseline by position.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Dataset names, paired by position (default: the model file stem).
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    /// Comma-separated quantiles in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Images listed per parameter and end in extremes.csv.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results_jsonl(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::invalid(format!("{}: {e}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(args: &ReportArgs, cfg: &FileConfig) -> Result<()> {
    let r = &cfg.report;
    if args.baselines.len() != args.models.len() {
        return Err(Error::invalid("--baseline and --model must be given the same number of times"));
    }
    if !args.datasets.is_empty() && args.datasets.len() != args.models.len() {
        return Err(Error::invalid("--dataset must be given once per --model or not at all"));
    }
    let quantiles = pick(args.quantiles.clone(), r.quantiles.clone(), DEFAULT_QUANTILES.to_vec());
    if quantiles.is_empty() {
        return Err(Error::invalid("no quantiles requested"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
    }
    let k = pick(args.k, r.k, 5);
    let out = require(args.out.clone().or(r.out.clone()), "--out")?;

    let names: Vec<String> = if args.datasets.is_empty() {
        args.models
            .iter()
            .map(|p| {
                let s = p.file_name().and_then(|n| n.to_str()).unwrap_or("dataset");
                s.strip_suffix(".results.jsonl").unwrap_or(s).to_string()
            })
            .collect()
    } else {
        args.datasets.clone()
    };

    create_dir(&out)?;
    let qpath = out.join("quantiles.csv");
    let epath = out.join("extremes.csv");
    let mut qcsv = csv::Writer::from_writer(Vec::new());
    qcsv.write_record([
        "dataset",
        "quantile",
        "delta_ll_bits",
        "delta_ll_rel",
        "delta_auc",
        "n_images",
        "rel_excluded",
    ])
    .map_err(|e| csv_error(&qpath, e))?;
    let mut ecsv = csv::Writer::from_writer(Vec::new());
    ecsv.write_record(["dataset", "parameter", "end", "rank", "image_id", "value"])
        .map_err(|e| csv_error(&epath, e))?;

    for ((base_path, model_path), name) in args.baselines.iter().zip(&args.models).zip(&names) {
        let base = read_results(base_path)?;
        let model = read_results(model_path)?;
        let ids_a: BTreeSet<&str> = base.iter().map(|r| r.image_id.as_str()).collect();
        let ids_b: BTreeSet<&str> = model.iter().map(|r| r.image_id.as_str()).collect();
        let common: BTreeSet<&str> = ids_a.intersection(&ids_b).copied().collect();
        if common.len() < ids_a.len().max(ids_b.len()) {
            log::warn!(
                "{name}: comparing the {} image(s) present in both result sets ({} baseline, {} model)",
                common.len(),
                ids_a.len(),
                ids_b.len()
            );
        }
        let pick_common = |rs: &[ResultRecord]| -> Vec<MetricRecord> {
            rs.iter()
                .filter(|r| common.contains(r.image_id.as_str()))
                .map(MetricRecord::from)
                .collect()
        };
        let table = improvement_quantiles(&pick_common(&base), &pick_common(&model), &quantiles)
            .map_err(|e| Error::invalid(format!("{name}: {e}")))?;
        for row in &table.rows {
            qcsv.write_record([
                name.clone(),
                row.quantile.to_string(),
                row.delta_ll_bits.to_string(),
                fmt_opt(row.delta_ll_rel),
                fmt_opt(row.delta_auc),
                table.n_images.to_string(),
                table.rel_excluded.to_string(),
            ])
            .map_err(|e| csv_error(&qpath, e))?;
        }
        let params: Vec<_> = model
            .iter()
            .filter(|r| common.contains(r.image_id.as_str()))
            .map(|r| r.params.clone())
            .collect();
        for row in parameter_extremes(&params, k)? {
            ecsv.write_record([
                name.clone(),
                row.parameter,
                row.end.to_string(),
                row.rank.to_string(),
                row.image_id,
                row.value.to_string(),
            ])
            .map_err(|e| csv_error(&epath, e))?;
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>, path: &Path| -> Result<()> {
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        fixdens::write_atomic(path, &bytes)
    };
    finish(qcsv, &qpath)?;
    finish(ecsv, &epath)?;
    println!("wrote {} and {}", qpath.display(), epath.display());
    Ok(())
}

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use vesselx::metrics::{accuracy, confusion, dsc, mcc, mean_std, ConfusionCounts};
use vesselx::raster::{load_mask, write_bytes_atomic};

use crate::files::{images_by_stem, match_stems};

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted masks, file or directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth masks matched by stem.
    #[arg(long)]
    truth: PathBuf,
    /// Masks restricting the pixels scored (e.g. field of view).
    #[arg(long)]
    region: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Row {
    stem: String,
    counts: ConfusionCounts,
    acc: Option<f64>,
    dsc: Option<f64>,
    mcc: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn summary(rows: &[Row], pick: impl Fn(&Row) -> Option<f64>) -> String {
    let vals: Vec<f64> = rows.iter().filter_map(pick).collect();
    match mean_std(&vals) {
        Some((m, s)) => format!("{m:.4} ± {s:.4}"),
        None => String::new(),
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let preds = images_by_stem(&args.pred).context("predictions")?;
    let truths = images_by_stem(&args.truth).context("ground truth")?;
    let pairs = match_stems("predictions", &preds, "ground truth", &truths)?;
    let regions = match &args.region {
        Some(r) => Some(images_by_stem(r).context("regions")?),
        None => None,
    };
    if let Some(r) = &regions {
        match_stems("predictions", &preds, "regions", r)?;
    }

    let mut rows = Vec::new();
    for (stem, p, t) in pairs {
        let pred = load_mask(&p)?;
        let truth = load_mask(&t)?;
        let region = match &regions {
            Some(r) => Some(load_mask(r.get(&stem).or_else(|| r.values().next()).expect("matched"))?),
            None => None,
        };
        let counts = confusion(&pred, &truth, region.as_ref()).with_context(|| format!("scoring {stem}"))?;
        rows.push(Row {
            stem,
            acc: accuracy(&counts).ok(),
            dsc: dsc(&counts).ok(),
            mcc: mcc(&counts).ok(),
            counts,
        });
    }
    if rows.is_empty() {
        bail!("nothing to evaluate");
    }

    let mut out = Vec::new();
    writeln!(out, "# per-image segmentation scores; mean ± population standard deviation in the last row")?;
    writeln!(out, "# accuracy = (tp + tn) / n; dsc = 2 tp / (2 tp + fp + fn)")?;
    writeln!(out, "# mcc = (tp/n - s p) / sqrt(p s (1 - s) (1 - p)), s = (tp + fn)/n, p = (tp + fp)/n")?;
    writeln!(out, "# empty cells are undefined for that image and excluded from the summary")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["image", "accuracy", "dsc", "mcc", "tp", "tn", "fp", "fn"])?;
        for r in &rows {
            let c = r.counts;
            w.write_record([
                r.stem.clone(),
                cell(r.acc),
                cell(r.dsc),
                cell(r.mcc),
                c.tp.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
            ])?;
        }
        w.write_record([
            "mean ± std".to_string(),
            summary(&rows, |r| r.acc),
            summary(&rows, |r| r.dsc),
            summary(&rows, |r| r.mcc),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        w.flush()?;
    }
    match &args.out {
        Some(path) => write_bytes_atomic(path, &out)?,
        None => std::io::stdout().write_all(&out)?,
    }
    Ok(())
}

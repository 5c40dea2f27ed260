use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use vesselx::raster::{load_mask, save_mask_png, write_bytes_atomic};
use vesselx::tortuosity::{
    analyze_mask, remove_branch_points, skeletonize, subject_means, ReportWriter, TortuosityIndex,
    TortuosityReport,
};

use crate::files::images_by_stem;
use crate::{job_pool, ConfigSource};

#[derive(Args)]
pub struct TortuosityArgs {
    /// Vessel mask, or a directory of masks.
    #[arg(long)]
    masks: PathBuf,
    /// Per-segment report.
    #[arg(long)]
    out: PathBuf,
    /// `image,subject` lines; enables the per-subject report.
    #[arg(long)]
    subject_map: Option<PathBuf>,
    /// Per-subject report; defaults to `<out stem>_subjects.csv`.
    #[arg(long, requires = "subject_map")]
    subjects_out: Option<PathBuf>,
    /// Write the traced centerlines (step J) next to the report.
    #[arg(long)]
    debug: bool,
    /// Masks processed at once.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    config: ConfigSource,
}

/// Reads `image,subject` pairs; `#` lines and a header row are skipped.
pub fn read_subject_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading subject map {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: line {}: expected image,subject", path.display(), i + 1);
        }
        if i == 0 && &rec[0] == "image" {
            continue;
        }
        let image = Path::new(&rec[0]).file_stem().map_or(rec[0].to_string(), |s| s.to_string_lossy().into_owned());
        out.insert(image, rec[1].to_string());
    }
    Ok(out)
}

fn subject_report(
    reports: &[(String, TortuosityReport)],
    subject_of: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let means = subject_means(reports.iter().map(|(s, r)| (s.as_str(), &r.aggregate)), subject_of);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (stem, _) in reports {
        *counts.entry(subject_of.get(stem).cloned().unwrap_or_else(|| stem.clone())).or_default() += 1;
    }
    let mut out = Vec::new();
    writeln!(out, "# per-subject tortuosity: unweighted mean of the image aggregates of each subject")?;
    writeln!(out, "# images without an entry in the subject map form their own subject")?;
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec!["subject", "images"];
    header.extend(TortuosityIndex::ALL.iter().map(|i| i.id()));
    w.write_record(&header)?;
    for (subject, vals) in &means {
        let mut row = vec![subject.clone(), counts[subject].to_string()];
        row.extend(vals.iter().map(|(_, v)| v.map(|x| format!("{x:.6}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

pub fn run(args: &TortuosityArgs) -> Result<()> {
    let params = args.config.resolve()?.tortuosity();
    let masks = images_by_stem(&args.masks).context("mask input")?;
    let subject_of = match &args.subject_map {
        Some(p) => Some(read_subject_map(p)?),
        None => None,
    };
    let debug_dir = args.debug.then(|| {
        let parent = args.out.parent().unwrap_or(Path::new("."));
        parent.join("stages")
    });

    let entries: Vec<(&String, &PathBuf)> = masks.iter().collect();
    let results: Vec<Result<(String, TortuosityReport)>> = job_pool(args.jobs)?.install(|| {
        entries
            .par_iter()
            .map(|(stem, path)| {
                let m = load_mask(path).with_context(|| format!("mask {stem}"))?;
                if let Some(dir) = &debug_dir {
                    let centerlines = remove_branch_points(&skeletonize(&m)).into_mask();
                    save_mask_png(&centerlines, &dir.join(stem.as_str()).join("J_segments.png"))?;
                }
                Ok(((*stem).clone(), analyze_mask(&m, &params)))
            })
            .collect()
    });
    let reports: Vec<(String, TortuosityReport)> = results.into_iter().collect::<Result<_>>()?;

    let mut w = ReportWriter::new(Vec::new())?;
    for (stem, rep) in &reports {
        w.write_image(stem, rep)?;
    }
    write_bytes_atomic(&args.out, &w.finish()?)?;

    if let Some(map) = &subject_of {
        if let Some(unknown) = map.keys().find(|k| !masks.contains_key(*k)) {
            eprintln!("warning: subject map lists {unknown}, which is not among the masks");
        }
        let path = args.subjects_out.clone().unwrap_or_else(|| {
            let stem = crate::files::stem(&args.out);
            args.out.with_file_name(format!("{stem}_subjects.csv"))
        });
        write_bytes_atomic(&path, &subject_report(&reports, map)?)?;
    }
    Ok(())
}

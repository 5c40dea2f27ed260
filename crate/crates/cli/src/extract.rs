use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use vesselx::config::ExtractionConfig;
use vesselx::pipeline::{run_extraction, StageData};
use vesselx::raster::{load_field, load_image, load_mask, save_field_png8, save_mask_png};

use crate::files::{images_by_stem, match_stems, output_path};
use crate::{job_pool, ConfigSource};

#[derive(Args)]
pub struct ExtractArgs {
    /// Color image, or a directory of them.
    #[arg(long)]
    image: PathBuf,
    /// Vessel probability map (8/16-bit gray), or a directory matched by stem.
    #[arg(long)]
    prob: PathBuf,
    /// Region-of-interest mask such as a sclera mask, or a directory.
    #[arg(long)]
    region: Option<PathBuf>,
    /// Output mask file, or directory for batch input.
    #[arg(long)]
    out: PathBuf,
    /// Write per-stage PNGs to `<out dir>/stages/<stem>/`.
    #[arg(long)]
    debug: bool,
    /// Images processed at once.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    config: ConfigSource,
}

struct Job {
    stem: String,
    image: PathBuf,
    prob: PathBuf,
    region: Option<PathBuf>,
}

fn extract_one(job: &Job, cfg: &ExtractionConfig, out: &Path, stages: Option<&Path>) -> Result<Option<String>> {
    let image = load_image(&job.image)?;
    let prob = load_field(&job.prob)?;
    let region = job.region.as_deref().map(load_mask).transpose()?;
    let ex = run_extraction(&image, &prob, region.as_ref(), cfg, stages.is_some())?;
    save_mask_png(&ex.mask_at_source()?, out)?;
    if let Some(dir) = stages {
        let dir = dir.join(&job.stem);
        for s in &ex.stages {
            let path = dir.join(format!("{}.png", s.name));
            match &s.data {
                StageData::Field(f) => save_field_png8(&f.clamped_unit(), &path)?,
                StageData::Mask(m) => save_mask_png(m, &path)?,
            }
        }
    }
    Ok(ex.degenerate)
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let images = images_by_stem(&args.image).context("image input")?;
    let probs = images_by_stem(&args.prob).context("probability map input")?;
    let pairs = match_stems("images", &images, "probability maps", &probs)?;
    let regions = match &args.region {
        Some(r) => {
            let regions = images_by_stem(r).context("region input")?;
            let matched = match_stems("images", &images, "regions", &regions)?;
            Some(matched.into_iter().map(|(s, _, r)| (s, r)).collect::<std::collections::BTreeMap<_, _>>())
        }
        None => None,
    };
    let single = pairs.len() == 1 && args.image.is_file();
    let jobs: Vec<Job> = pairs
        .into_iter()
        .map(|(stem, image, prob)| Job {
            region: regions.as_ref().map(|r| r.values().next().filter(|_| r.len() == 1).unwrap_or_else(|| &r[&stem]).clone()),
            // a single named output also names its stage folder
            stem: if single && args.out.extension().is_some() { crate::files::stem(&args.out) } else { stem },
            image,
            prob,
        })
        .collect();
    let out_dir = if single && args.out.extension().is_some() {
        args.out.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        args.out.clone()
    };
    let stage_dir = args.debug.then(|| out_dir.join("stages"));

    let results: Vec<(String, Result<Option<String>>)> = job_pool(args.jobs)?.install(|| {
        jobs.par_iter()
            .map(|j| {
                let out = output_path(&args.out, &j.stem, single);
                (j.stem.clone(), extract_one(j, &cfg, &out, stage_dir.as_deref()))
            })
            .collect()
    });

    let mut failed = 0;
    for (stem, r) in results {
        match r {
            Ok(None) => {}
            Ok(Some(why)) => eprintln!("warning: {stem}: empty mask, {why}"),
            Err(e) => {
                failed += 1;
                eprintln!("error: {stem}: {e:#}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} images failed", jobs.len());
    }
    Ok(())
}

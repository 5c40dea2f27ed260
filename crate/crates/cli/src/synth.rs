use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use vesselx::phantom::{render, thickness_suite, PhantomSpec};
use vesselx::raster::{save_field_png16, save_image_png8, save_mask_png, write_bytes_atomic};

#[derive(Args)]
pub struct SynthArgs {
    /// Phantom description (`key = value` lines with [[tube]] tables).
    #[arg(long, conflicts_with = "suite")]
    spec: Option<PathBuf>,
    /// Render the built-in thickness suite into `phantom_<n>/` folders.
    #[arg(long)]
    suite: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn write_phantom(spec: &PhantomSpec, dir: &Path) -> Result<()> {
    let p = render(spec)?;
    save_image_png8(&p.image, &dir.join("image.png"))?;
    save_field_png16(&p.probability, &dir.join("probability.png"))?;
    save_mask_png(&p.truth, &dir.join("truth_all.png"))?;
    for (w, m) in &p.truth_by_width {
        save_mask_png(m, &dir.join(format!("truth_w{w}.png")))?;
    }
    write_bytes_atomic(&dir.join("spec.toml"), spec.to_text().as_bytes())?;
    Ok(())
}

pub fn run(args: &SynthArgs) -> Result<()> {
    match (&args.spec, args.suite) {
        (Some(path), false) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = PhantomSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
            write_phantom(&spec, &args.out)
        }
        (None, true) => {
            for (k, spec) in thickness_suite().iter().enumerate() {
                write_phantom(spec, &args.out.join(format!("phantom_{}", k + 1)))?;
            }
            Ok(())
        }
        _ => bail!("give either --spec or --suite"),
    }
}

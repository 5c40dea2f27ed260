//! End-to-end extraction of vessels of specified thicknesses.

use rayon::prelude::*;

use crate::config::{ExtractionConfig, MapSource};
use crate::error::{Result, VesselError};
use crate::field::{BinaryMask, ScalarField};
use crate::maskops::{connected_components, morph_cleanup, otsu_binarize, remove_thick_traces, size_filter};
use crate::raster::{redness_input, resize_field, resize_mask, resize_preserve_aspect, RasterImage, ResizeTransform};
use crate::scalespace::WidthSet;
use crate::vesselmaps::{combined_map, fuse_over_widths, redness_map, structural_map};

/// Intermediate result kept for debug dumps, named after the step letter.
#[derive(Clone, Debug, PartialEq)]
pub enum StageData {
    Field(ScalarField),
    Mask(BinaryMask),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageDump {
    /// File stem such as `C_ig` or `E_redness_w7`.
    pub name: String,
    pub data: StageData,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    /// Final mask on the working canvas.
    pub mask: BinaryMask,
    pub transform: ResizeTransform,
    /// Pixels considered for thresholding: image content and region mask.
    pub region: BinaryMask,
    /// Set when binarization found no usable contrast and returned an empty mask.
    pub degenerate: Option<String>,
    pub stages: Vec<StageDump>,
}

impl Extraction {
    /// Final mask resampled onto the source image grid.
    pub fn mask_at_source(&self) -> Result<BinaryMask> {
        self.transform.map_mask_back(&self.mask)
    }
}

struct WidthMaps {
    width: u32,
    redness: ScalarField,
    structural: ScalarField,
    combined: ScalarField,
}

struct Prepared {
    transform: ResizeTransform,
    i_g: ScalarField,
    p_n: ScalarField,
    region: BinaryMask,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Step C: resize onto the working canvas, equalize and invert the green
/// channel. The probability map may be given at source or canvas size.
fn prepare(
    image: &RasterImage,
    p_n: &ScalarField,
    region: Option<&BinaryMask>,
    cfg: &ExtractionConfig,
) -> Result<Prepared> {
    let (resized, transform) = resize_preserve_aspect(image, cfg.resize_target)?;
    let i_g = redness_input(&resized, cfg.clahe())?;
    let canvas = (transform.target, transform.target);
    let p_n = if p_n.dims() == image.dims() {
        resize_field(p_n, &transform)?
    } else if p_n.dims() == canvas {
        p_n.clone()
    } else {
        return Err(VesselError::DimensionMismatch {
            expected: image.dims(),
            actual: p_n.dims(),
        });
    };
    let mut roi = transform.content_mask();
    if let Some(r) = region {
        let r = if r.dims() == image.dims() {
            resize_mask(r, &transform)?
        } else if r.dims() == canvas {
            r.clone()
        } else {
            return Err(VesselError::DimensionMismatch {
                expected: image.dims(),
                actual: r.dims(),
            });
        };
        roi = roi.and(&r)?;
    }
    // vessels outside the region are not of interest
    let i_g = i_g.zip_map(&roi.to_field(), |v, m| v * m)?;
    let p_n = p_n.clamped_unit().zip_map(&roi.to_field(), |v, m| v * m)?;
    Ok(Prepared {
        transform,
        i_g,
        p_n,
        region: roi,
    })
}

fn width_maps(prep: &Prepared, widths: &WidthSet, cfg: &ExtractionConfig) -> Result<Vec<WidthMaps>> {
    let frangi = cfg.frangi();
    let gamma = cfg.gamma()?;
    widths
        .widths()
        .par_iter()
        .map(|&w| {
            let structural = stage("D", structural_map(&prep.p_n, w, &frangi, gamma.gamma_s))?;
            let redness = stage("E", redness_map(&prep.i_g, w, &frangi, gamma.gamma_r))?;
            let combined = stage("F", combined_map(&redness, &structural, gamma.gamma_c))?;
            Ok(WidthMaps {
                width: w,
                redness,
                structural,
                combined,
            })
        })
        .collect()
}

fn select_fused(maps: &[WidthMaps], source: MapSource) -> Result<ScalarField> {
    fn pick(m: &WidthMaps, source: MapSource) -> &ScalarField {
        match source {
            MapSource::Combined => &m.combined,
            MapSource::Redness => &m.redness,
            MapSource::Structural => &m.structural,
        }
    }
    fuse_over_widths(maps.iter().map(|m| pick(m, source)))
}

/// Steps H and I on a fused map. `None` when Otsu finds no contrast.
fn binarize_and_clean(
    fused: &ScalarField,
    region: &BinaryMask,
    cfg: &ExtractionConfig,
) -> Result<(Option<BinaryMask>, BinaryMask)> {
    let raw = match otsu_binarize(fused, Some(region)) {
        Ok(m) => m,
        Err(VesselError::Degenerate(_)) => {
            let empty = BinaryMask::new(fused.width(), fused.height());
            return Ok((None, empty));
        }
        Err(e) => return Err(e.in_stage("H")),
    };
    let cleaned = morph_cleanup(&raw);
    let cs = connected_components(&cleaned);
    let kept = if cs.is_empty() {
        cleaned
    } else {
        stage("I", size_filter(&cs, cfg.t, cfg.strict_t))?
    };
    Ok((Some(raw), kept))
}

/// Runs steps C to I. With `debug` set, intermediate maps are kept in
/// `stages`.
pub fn run_extraction(
    image: &RasterImage,
    p_n: &ScalarField,
    region: Option<&BinaryMask>,
    cfg: &ExtractionConfig,
    debug: bool,
) -> Result<Extraction> {
    stage("config", cfg.validate())?;
    let prep = stage("C", prepare(image, p_n, region, cfg))?;
    let maps = width_maps(&prep, &cfg.widths, cfg)?;
    let fused = stage("G", select_fused(&maps, cfg.map_source))?;
    let (raw, mut mask) = binarize_and_clean(&fused, &prep.region, cfg)?;
    let degenerate = raw.is_none().then(|| "fused map has no contrast inside the region".to_string());

    if let (Some(guard), false) = (&cfg.guard_widths, mask.is_empty()) {
        let guard_maps = width_maps(&prep, guard, cfg)?;
        let guard_fused = stage("G", select_fused(&guard_maps, cfg.map_source))?;
        let (_, thick) = binarize_and_clean(&guard_fused, &prep.region, cfg)?;
        mask = stage("I", remove_thick_traces(&mask, &thick))?;
    }

    let mut stages = Vec::new();
    if debug {
        let field = |name: String, f: &ScalarField| StageDump {
            name,
            data: StageData::Field(f.clone()),
        };
        stages.push(field("C_ig".into(), &prep.i_g));
        stages.push(field("B_probability".into(), &prep.p_n));
        for m in &maps {
            stages.push(field(format!("D_structural_w{}", m.width), &m.structural));
            stages.push(field(format!("E_redness_w{}", m.width), &m.redness));
            stages.push(field(format!("F_combined_w{}", m.width), &m.combined));
        }
        stages.push(field("G_fused".into(), &fused));
        if let Some(raw) = raw {
            stages.push(StageDump {
                name: "H_otsu".into(),
                data: StageData::Mask(raw),
            });
        }
        stages.push(StageDump {
            name: "I_vessels".into(),
            data: StageData::Mask(mask.clone()),
        });
    }

    Ok(Extraction {
        mask,
        transform: prep.transform,
        region: prep.region,
        degenerate,
        stages,
    })
}

/// Final vessel mask on the working canvas.
pub fn extract_vessels(image: &RasterImage, p_n: &ScalarField, cfg: &ExtractionConfig) -> Result<BinaryMask> {
    Ok(run_extraction(image, p_n, None, cfg, false)?.mask)
}

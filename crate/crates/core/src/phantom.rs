//! Synthetic vessel phantoms with exact per-width ground truth.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ImageKind;
use crate::error::{Result, VesselError};
use crate::field::{BinaryMask, ScalarField};
use crate::raster::RasterImage;
use crate::scalespace::{convolve_separable, gaussian_kernels};

/// Straight or sinusoidal tube between two end points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Diameter in pixels.
    pub width: u32,
    /// Sinusoid amplitude perpendicular to the axis, px.
    #[serde(default)]
    pub amplitude: f64,
    /// Sinusoid wavelength along the axis, px; 0 keeps the tube straight.
    #[serde(default)]
    pub wavelength: f64,
    /// Image contrast in [0, 1].
    #[serde(default = "one")]
    pub contrast: f64,
    /// Peak value in the probability map, [0, 1].
    #[serde(default = "one")]
    pub probability: f64,
    /// False for artifacts drawn like a tube but absent from the truth.
    #[serde(default = "yes")]
    pub vessel: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistractorTarget {
    Image,
    Probability,
}

/// A round blob that is not a vessel, drawn into one of the two inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distractor {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub target: DistractorTarget,
    #[serde(default = "one")]
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub mode: ImageKind,
    /// Standard deviation of Gaussian noise added to each image channel.
    #[serde(default)]
    pub noise: f64,
    /// Standard deviation of Gaussian noise added to the probability map.
    #[serde(default)]
    pub prob_noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "tube")]
    pub tubes: Vec<TubeSpec>,
    #[serde(default, rename = "distractor")]
    pub distractors: Vec<Distractor>,
}

pub struct Phantom {
    pub image: RasterImage,
    pub probability: ScalarField,
    pub truth: BinaryMask,
    /// Vessel pixels by tube width. Where tubes overlap, the earlier tube
    /// in the spec owns the pixel, so the masks are disjoint.
    pub truth_by_width: BTreeMap<u32, BinaryMask>,
}

impl Phantom {
    /// Union of the truth masks whose width lies in `[lo, hi]`.
    pub fn truth_for(&self, lo: u32, hi: u32) -> BinaryMask {
        let mut out = BinaryMask::new(self.truth.width(), self.truth.height());
        for (_, m) in self.truth_by_width.range(lo..=hi) {
            out = out.or(m).expect("same canvas");
        }
        out
    }
}

impl PhantomSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| VesselError::Config {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0),
            reason: e.message().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("phantom spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(VesselError::EmptyImage);
        }
        if !(self.noise >= 0.0 && self.prob_noise >= 0.0) {
            return Err(VesselError::param("noise", "must be >= 0"));
        }
        for t in &self.tubes {
            if t.width == 0 {
                return Err(VesselError::param("tube.width", "must be at least 1"));
            }
            if !(0.0..=1.0).contains(&t.contrast) || !(0.0..=1.0).contains(&t.probability) {
                return Err(VesselError::param("tube", "contrast and probability lie in [0, 1]"));
            }
            if (t.x1 - t.x0).hypot(t.y1 - t.y0) < 1.0 {
                return Err(VesselError::param("tube", "end points coincide"));
            }
            if t.wavelength < 0.0 {
                return Err(VesselError::param("tube.wavelength", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Dense centerline polyline, roughly 0.25 px between samples.
fn centerline(t: &TubeSpec) -> Vec<(f64, f64)> {
    let (dx, dy) = (t.x1 - t.x0, t.y1 - t.y0);
    let len = dx.hypot(dy);
    let (ux, uy) = (dx / len, dy / len);
    let (nx, ny) = (-uy, ux);
    let steps = (len * 4.0).ceil() as usize;
    (0..=steps)
        .map(|i| {
            let s = len * i as f64 / steps as f64;
            let off = if t.wavelength > 0.0 {
                t.amplitude * (2.0 * std::f64::consts::PI * s / t.wavelength).sin()
            } else {
                0.0
            };
            (t.x0 + ux * s + nx * off, t.y0 + uy * s + ny * off)
        })
        .collect()
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let l2 = vx * vx + vy * vy;
    let t = if l2 > 0.0 {
        (((px - a.0) * vx + (py - a.1) * vy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (px - a.0 - t * vx).hypot(py - a.1 - t * vy)
}

/// Distance from each pixel center to the tube centerline, limited to
/// `reach` pixels (farther pixels hold infinity).
fn distance_field(t: &TubeSpec, w: usize, h: usize, reach: f64) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; w * h];
    let line = centerline(t);
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x_lo = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
        let y_lo = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
        let x_hi = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(w.saturating_sub(1));
        let y_hi = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(h.saturating_sub(1));
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let v = segment_distance(x as f64, y as f64, a, b);
                let slot = &mut d[y * w + x];
                if v < *slot {
                    *slot = v;
                }
            }
        }
    }
    d
}

fn blend(a: [f64; 3], b: [f64; 3], k: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * k,
        a[1] + (b[1] - a[1]) * k,
        a[2] + (b[2] - a[2]) * k,
    ]
}

/// Renders the color image, probability map and truth masks.
///
/// A pixel belongs to a tube when its center is strictly closer than
/// `width / 2` to the centerline. The image uses an anti-aliased profile,
/// the probability map is the tube indicator smoothed by a unit Gaussian
/// and rescaled so its maximum is the tube's `probability`.
pub fn render(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (background, vessel) = match spec.mode {
        ImageKind::Scleral => ([0.93, 0.86, 0.84], [0.72, 0.22, 0.22]),
        ImageKind::Retinal => ([0.78, 0.40, 0.18], [0.55, 0.16, 0.08]),
    };
    let mut truth = BinaryMask::new(w, h);
    let mut by_width: BTreeMap<u32, BinaryMask> = BTreeMap::new();
    let mut shade = vec![0.0f64; w * h];
    let mut prob = vec![0.0f64; w * h];
    let (g, _, _) = gaussian_kernels(1.0);
    for t in &spec.tubes {
        let half = t.width as f64 / 2.0;
        let d = distance_field(t, w, h, half + 1.0);
        let mut ind = ScalarField::new(w, h);
        let mut scratch = BinaryMask::new(w, h);
        let class = if t.vessel {
            by_width.entry(t.width).or_insert_with(|| BinaryMask::new(w, h))
        } else {
            &mut scratch
        };
        for (i, &di) in d.iter().enumerate() {
            let (x, y) = (i % w, i / w);
            if di < half {
                ind.as_mut_slice()[i] = 1.0;
                if t.vessel && !truth.get(x, y) {
                    truth.set(x, y, true);
                    class.set(x, y, true);
                }
            }
            let cover = (half - di + 0.5).clamp(0.0, 1.0) * t.contrast;
            shade[i] = shade[i].max(cover);
        }
        let smooth = convolve_separable(&ind, &g, &g);
        let peak = smooth.min_max().1;
        if peak > 0.0 {
            for (p, s) in prob.iter_mut().zip(smooth.as_slice()) {
                *p = p.max(s / peak * t.probability);
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut dark = vec![0.0f64; w * h];
    for dspec in &spec.distractors {
        let target = match dspec.target {
            DistractorTarget::Image => &mut dark,
            DistractorTarget::Probability => &mut prob,
        };
        for (i, v) in target.iter_mut().enumerate() {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let r = (x - dspec.x).hypot(y - dspec.y);
            let k = (-(r * r) / (2.0 * dspec.radius * dspec.radius)).exp() * dspec.strength;
            *v = v.max(k);
        }
    }

    let img_noise = Normal::new(0.0, spec.noise.max(1e-300)).map_err(|e| VesselError::param("noise", e.to_string()))?;
    let mut samples = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        // a distractor darkens all channels: a pigment spot, not a vessel
        let px = blend(blend(background, vessel, shade[i]), [0.25, 0.15, 0.12], dark[i]);
        for c in px {
            let n = if spec.noise > 0.0 { img_noise.sample(&mut rng) } else { 0.0 };
            samples.push((c + n).clamp(0.0, 1.0));
        }
    }
    let image = RasterImage::new(w, h, 3, samples)?;

    let prob_noise = Normal::new(0.0, spec.prob_noise.max(1e-300))
        .map_err(|e| VesselError::param("prob_noise", e.to_string()))?;
    if spec.prob_noise > 0.0 {
        for p in prob.iter_mut() {
            *p += prob_noise.sample(&mut rng);
        }
    }
    let probability = ScalarField::from_vec(w, h, prob)?.clamped_unit();

    Ok(Phantom {
        image,
        probability,
        truth,
        truth_by_width: by_width,
    })
}

fn tube(x0: f64, y0: f64, x1: f64, y1: f64, width: u32) -> TubeSpec {
    TubeSpec {
        x0,
        y0,
        x1,
        y1,
        width,
        amplitude: 0.0,
        wavelength: 0.0,
        contrast: 0.8,
        probability: 1.0,
        vessel: true,
    }
}

/// Four 512 px phantoms for thickness selectivity. Each has a connected
/// tree of 6-8 px vessels, separate 2-3 px vessels, one image-only and one
/// probability-only tubular artifact, and two blob distractors.
pub fn thickness_suite() -> Vec<PhantomSpec> {
    let mut out = Vec::new();
    for (k, mode) in [ImageKind::Scleral, ImageKind::Retinal, ImageKind::Scleral, ImageKind::Retinal]
        .into_iter()
        .enumerate()
    {
        let kf = k as f64;
        let wave = |j: usize| [(0.0, 0.0), (10.0, 150.0), (16.0, 210.0)][(j + k) % 3];
        let mut tubes = vec![tube(60.0 + 4.0 * kf, 40.0, 60.0 - 4.0 * kf, 470.0, 8)];
        for (j, (y, w)) in [(100.0, 7u32), (230.0, 6), (360.0, 8)].into_iter().enumerate() {
            let (amplitude, wavelength) = wave(j);
            tubes.push(TubeSpec {
                amplitude,
                wavelength,
                ..tube(60.0, y + 3.0 * kf, 470.0, y + 8.0 * (kf - 1.5), w)
            });
        }
        for (j, (y, w)) in [(165.0, 2u32), (295.0, 3)].into_iter().enumerate() {
            tubes.push(TubeSpec {
                amplitude: if (j + k) % 2 == 0 { 5.0 } else { 0.0 },
                wavelength: 110.0,
                contrast: 0.6,
                probability: 0.8,
                ..tube(120.0, y + 2.0 * kf, 450.0, y - 6.0 + 2.0 * kf, w)
            });
        }
        // artifacts touch the tree, as an eyelash or a hallucinated branch would
        tubes.push(TubeSpec {
            probability: 0.0,
            vessel: false,
            ..tube(60.0, 432.0, 280.0, 428.0 - 3.0 * kf, 7)
        });
        tubes.push(TubeSpec {
            contrast: 0.0,
            vessel: false,
            ..tube(400.0 - 10.0 * kf, 350.0, 405.0, 500.0, 6)
        });
        let distractors = vec![
            Distractor {
                x: 200.0 + 20.0 * kf,
                y: 480.0,
                radius: 5.0,
                target: DistractorTarget::Image,
                strength: 0.9,
            },
            Distractor {
                x: 488.0,
                y: 300.0 + 10.0 * kf,
                radius: 4.0,
                target: DistractorTarget::Probability,
                strength: 0.9,
            },
        ];
        out.push(PhantomSpec {
            width: 512,
            height: 512,
            mode,
            noise: 0.02,
            prob_noise: 0.03,
            seed: 7 + k as u64,
            tubes,
            distractors,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(width: u32, y: f64) -> TubeSpec {
        TubeSpec {
            x0: 10.0,
            y0: y,
            x1: 90.0,
            y1: y,
            width,
            amplitude: 0.0,
            wavelength: 0.0,
            contrast: 1.0,
            probability: 1.0,
            vessel: true,
        }
    }

    fn spec(tubes: Vec<TubeSpec>) -> PhantomSpec {
        PhantomSpec {
            width: 100,
            height: 60,
            mode: ImageKind::Scleral,
            noise: 0.0,
            prob_noise: 0.0,
            seed: 1,
            tubes,
            distractors: vec![],
        }
    }

    #[test]
    fn straight_tube_area() {
        let p = render(&spec(vec![straight(5, 30.0)])).unwrap();
        // rows 28..=32 over x = 10..=90 plus rounded caps
        let area = p.truth.count();
        assert!((405..=405 + 2 * 10).contains(&area), "area {area}");
        assert_eq!(p.truth_by_width[&5], p.truth);
        let pmax = p.probability.min_max().1;
        assert_eq!(pmax, 1.0);
        assert_eq!(p.probability.get(50, 30), 1.0);
    }

    #[test]
    fn width_classes_partition_truth() {
        let p = render(&spec(vec![straight(3, 15.0), straight(8, 40.0)])).unwrap();
        let (a, b) = (&p.truth_by_width[&3], &p.truth_by_width[&8]);
        assert!(a.and(b).unwrap().is_empty());
        assert_eq!(a.or(b).unwrap(), p.truth);
        assert_eq!(p.truth_for(6, 9), *b);
    }

    #[test]
    fn modes_and_noise() {
        let mut s = spec(vec![straight(6, 30.0)]);
        let bright = render(&s).unwrap();
        assert!(bright.image.get(50, 5, 1) > bright.image.get(50, 30, 1));
        assert!(bright.image.get(50, 30, 0) > bright.image.get(50, 30, 1));
        s.mode = ImageKind::Retinal;
        let dark = render(&s).unwrap();
        assert!(dark.image.get(50, 5, 1) > dark.image.get(50, 30, 1));
        assert!(dark.image.get(50, 5, 1) < bright.image.get(50, 5, 1));
        s.noise = 0.05;
        s.prob_noise = 0.05;
        let a = render(&s).unwrap();
        let b = render(&s).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.probability, b.probability);
        assert_ne!(a.image, dark.image);
    }

    #[test]
    fn spec_text_round_trip() {
        let mut s = spec(vec![straight(4, 20.0)]);
        s.distractors.push(Distractor {
            x: 5.0,
            y: 5.0,
            radius: 2.0,
            target: DistractorTarget::Probability,
            strength: 0.5,
        });
        assert_eq!(PhantomSpec::parse(&s.to_text()).unwrap(), s);
        let short = "width = 40\nheight = 30\nmode = \"retinal\"\n[[tube]]\nx0 = 2\ny0 = 15\nx1 = 38\ny1 = 15\nwidth = 3\n";
        let p = PhantomSpec::parse(short).unwrap();
        assert_eq!(p.tubes[0].contrast, 1.0);
        assert!(PhantomSpec::parse("width = 40\nheight = 30\nmode = \"lunar\"").is_err());
        assert!(PhantomSpec::parse("width = 0\nheight = 30\nmode = \"retinal\"").is_err());
    }

    #[test]
    fn suite_is_well_formed() {
        for s in thickness_suite() {
            s.validate().unwrap();
            let p = render(&s).unwrap();
            assert!(p.truth_for(6, 8).count() > 5000);
            assert!(p.truth_for(2, 3).count() > 800);
            // artifacts are not vessels
            assert!(!p.truth.get(200, 430) && !p.truth.get(403, 470));
        }
    }
}

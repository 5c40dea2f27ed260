//! Image I/O, aspect-preserving resize and the green-channel / CLAHE /
//! inversion preprocessing that produces the redness input `I_g`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ExtendedColorType, ImageFormat};

use crate::error::{Result, VesselError};
use crate::field::{ensure_same_dims, BinaryMask, ScalarField};

/// Multi-channel image with samples normalized to `[0, 1]`, interleaved,
/// row-major. Channel count is 1 (grayscale) or 3 (RGB).
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(VesselError::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(VesselError::param("channels", format!("{channels} (want 1 or 3)")));
        }
        if samples.len() != width * height * channels {
            return Err(VesselError::param(
                "samples",
                format!("{} samples for {width}x{height}x{channels}", samples.len()),
            ));
        }
        if samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VesselError::param("samples", "values outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn from_rgb_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                samples.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, 3, samples)
    }

    pub fn from_field(field: &ScalarField) -> Result<Self> {
        Self::new(
            field.width(),
            field.height(),
            1,
            field.as_slice().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    /// Extracts one channel as a field.
    pub fn channel(&self, c: usize) -> Result<ScalarField> {
        if c >= self.channels {
            return Err(VesselError::ChannelCount {
                expected: c + 1,
                actual: self.channels,
            });
        }
        Ok(ScalarField::from_fn(self.width, self.height, |x, y| {
            self.get(x, y, c)
        }))
    }

    /// Mean over channels; a grayscale view of any image.
    pub fn luminance(&self) -> ScalarField {
        let n = self.channels as f64;
        ScalarField::from_fn(self.width, self.height, |x, y| {
            (0..self.channels).map(|c| self.get(x, y, c)).sum::<f64>() / n
        })
    }

    fn from_planes(width: usize, height: usize, planes: &[ScalarField]) -> Result<Self> {
        let channels = planes.len();
        let mut samples = Vec::with_capacity(width * height * channels);
        for i in 0..width * height {
            for p in planes {
                samples.push(p.as_slice()[i].clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, channels, samples)
    }

    fn planes(&self) -> Vec<ScalarField> {
        (0..self.channels)
            .map(|c| self.channel(c).expect("channel index in range"))
            .collect()
    }
}

/// Loads an 8- or 16-bit PNG/TIFF/JPEG, normalizing samples to `[0, 1]`.
///
/// Gray (with or without alpha) becomes one channel, anything else three.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    if !path.exists() {
        return Err(VesselError::MissingFile(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|e| VesselError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<RasterImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(VesselError::EmptyImage);
    }
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let samples: Vec<f64> = match (gray, wide) {
        (true, false) => img.into_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        (true, true) => img
            .into_luma16()
            .into_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        (false, false) => img.into_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        (false, true) => img
            .into_rgb16()
            .into_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
    };
    RasterImage::new(w, h, if gray { 1 } else { 3 }, samples)
}

/// Loads a binary mask; any sample above one half is foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = load_image(path)?;
    let lum = img.luminance();
    BinaryMask::from_vec(
        img.width(),
        img.height(),
        lum.as_slice().iter().map(|&v| v > 0.5).collect(),
    )
}

/// Loads a grayscale map (8- or 16-bit) as a field in `[0, 1]`.
pub fn load_field(path: &Path) -> Result<ScalarField> {
    Ok(load_image(path)?.luminance())
}

/// Writes through a temporary sibling file that is renamed over `path`, so
/// readers never observe a partial file. Parent directories are created.
pub fn write_atomic<E: std::fmt::Display>(
    path: &Path,
    write_fn: impl FnOnce(&Path) -> std::result::Result<(), E>,
) -> Result<()> {
    let err = |reason: String| VesselError::Write {
        path: path.to_path_buf(),
        reason,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| err("path has no file name".into()))?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    if let Err(e) = write_fn(&tmp) {
        let _ = fs::remove_file(&tmp);
        return Err(err(e.to_string()));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e.to_string())
    })
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |tmp| fs::write(tmp, bytes))
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes a field as a 16-bit grayscale PNG.
pub fn save_field_png16(field: &ScalarField, path: &Path) -> Result<()> {
    let buf: Vec<u8> = field
        .as_slice()
        .iter()
        .flat_map(|&v| quantize16(v).to_ne_bytes())
        .collect();
    write_atomic(path, |tmp| {
        image::save_buffer_with_format(
            tmp,
            &buf,
            field.width() as u32,
            field.height() as u32,
            ExtendedColorType::L16,
            ImageFormat::Png,
        )
    })
}

/// Writes a field as an 8-bit grayscale PNG.
pub fn save_field_png8(field: &ScalarField, path: &Path) -> Result<()> {
    let buf: Vec<u8> = field.as_slice().iter().map(|&v| quantize8(v)).collect();
    write_atomic(path, |tmp| {
        image::save_buffer_with_format(
            tmp,
            &buf,
            field.width() as u32,
            field.height() as u32,
            ExtendedColorType::L8,
            ImageFormat::Png,
        )
    })
}

/// Writes a mask as an 8-bit PNG with values {0, 255}.
pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let buf: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_atomic(path, |tmp| {
        image::save_buffer_with_format(
            tmp,
            &buf,
            mask.width() as u32,
            mask.height() as u32,
            ExtendedColorType::L8,
            ImageFormat::Png,
        )
    })
}

/// Writes an image as an 8-bit PNG (gray or RGB).
pub fn save_image_png8(img: &RasterImage, path: &Path) -> Result<()> {
    let buf: Vec<u8> = img.samples().iter().map(|&v| quantize8(v)).collect();
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    write_atomic(path, |tmp| {
        image::save_buffer_with_format(
            tmp,
            &buf,
            img.width() as u32,
            img.height() as u32,
            color,
            ImageFormat::Png,
        )
    })
}

/// Placement of a source image inside a square, zero-padded working frame.
///
/// Working coordinates relate to source coordinates (pixel centers at
/// integers) by `u = (x + 0.5) * scale - 0.5 + pad_left`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResizeTransform {
    pub scale: f64,
    pub pad_left: usize,
    pub pad_top: usize,
    pub content_width: usize,
    pub content_height: usize,
    pub source_width: usize,
    pub source_height: usize,
    pub target: usize,
}

impl ResizeTransform {
    pub fn for_source(width: usize, height: usize, target: usize) -> Result<Self> {
        if target == 0 {
            return Err(VesselError::param("target", "must be at least 1"));
        }
        if width == 0 || height == 0 {
            return Err(VesselError::EmptyImage);
        }
        let scale = target as f64 / width.max(height) as f64;
        let content_width = ((width as f64 * scale).round() as usize).clamp(1, target);
        let content_height = ((height as f64 * scale).round() as usize).clamp(1, target);
        Ok(Self {
            scale,
            pad_left: (target - content_width) / 2,
            pad_top: (target - content_height) / 2,
            content_width,
            content_height,
            source_width: width,
            source_height: height,
            target,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.pad_left == 0 && self.pad_top == 0
    }

    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x + 0.5) * self.scale - 0.5 + self.pad_left as f64,
            (y + 0.5) * self.scale - 0.5 + self.pad_top as f64,
        )
    }

    pub fn inverse(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u - self.pad_left as f64 + 0.5) / self.scale - 0.5,
            (v - self.pad_top as f64 + 0.5) / self.scale - 0.5,
        )
    }

    /// Foreground exactly over the non-padded content area of the frame.
    pub fn content_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.target, self.target, |x, y| {
            x >= self.pad_left
                && x < self.pad_left + self.content_width
                && y >= self.pad_top
                && y < self.pad_top + self.content_height
        })
    }

    fn resample(&self, src: &ScalarField) -> ScalarField {
        let mut out = ScalarField::new(self.target, self.target);
        for v in self.pad_top..self.pad_top + self.content_height {
            for u in self.pad_left..self.pad_left + self.content_width {
                let (x, y) = self.inverse(u as f64, v as f64);
                out.set(u, v, bilinear(src, x, y));
            }
        }
        out
    }

    /// Maps a working-frame mask back onto the source grid.
    pub fn map_mask_back(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        ensure_same_dims((self.target, self.target), mask.dims())?;
        let field = mask.to_field();
        Ok(BinaryMask::from_fn(
            self.source_width,
            self.source_height,
            |x, y| {
                let (u, v) = self.forward(x as f64, y as f64);
                bilinear(&field, u, v) >= 0.5
            },
        ))
    }
}

fn bilinear(src: &ScalarField, x: f64, y: f64) -> f64 {
    let (w, h) = src.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
    let bottom = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Scales the longest side to `target` with bilinear interpolation and
/// centers the result in a zero-padded `target x target` frame.
pub fn resize_preserve_aspect(
    img: &RasterImage,
    target: usize,
) -> Result<(RasterImage, ResizeTransform)> {
    let t = ResizeTransform::for_source(img.width(), img.height(), target)?;
    if t.is_identity() {
        return Ok((img.clone(), t));
    }
    let planes: Vec<ScalarField> = img.planes().iter().map(|p| t.resample(p)).collect();
    Ok((RasterImage::from_planes(target, target, &planes)?, t))
}

/// Applies an existing transform to a single-channel field.
pub fn resize_field(field: &ScalarField, t: &ResizeTransform) -> Result<ScalarField> {
    ensure_same_dims((t.source_width, t.source_height), field.dims())?;
    if t.is_identity() {
        return Ok(field.clone());
    }
    Ok(t.resample(field))
}

/// Applies an existing transform to a mask (bilinear, then threshold at 0.5).
pub fn resize_mask(mask: &BinaryMask, t: &ResizeTransform) -> Result<BinaryMask> {
    let f = resize_field(&mask.to_field(), t)?;
    BinaryMask::from_vec(
        t.target,
        t.target,
        f.as_slice().iter().map(|&v| v >= 0.5).collect(),
    )
}

/// Channel 1 of an RGB image.
pub fn green_channel(img: &RasterImage) -> Result<ScalarField> {
    if img.channels() != 3 {
        return Err(VesselError::ChannelCount {
            expected: 3,
            actual: img.channels(),
        });
    }
    img.channel(1)
}

/// Pointwise `1 - f`.
pub fn invert(f: &ScalarField) -> ScalarField {
    f.map(|v| 1.0 - v)
}

/// Zeroes every pixel outside the mask.
pub fn apply_mask(img: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    ensure_same_dims(img.dims(), mask.dims())?;
    let c = img.channels();
    let samples = img
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask.as_slice()[i / c] { v } else { 0.0 })
        .collect();
    RasterImage::new(img.width(), img.height(), c, samples)
}

/// Contrast-limited adaptive histogram equalization settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheParams {
    /// Tiles per axis.
    pub tiles: usize,
    /// Clip limit as a multiple of the uniform bin height; `f64::INFINITY`
    /// disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles: 8,
            clip_limit: 2.0,
        }
    }
}

pub const CLAHE_BINS: usize = 256;

#[inline]
fn bin_of(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * CLAHE_BINS as f64) as usize).min(CLAHE_BINS - 1)
}

/// Per-tile mapping; `None` marks a single-valued tile, mapped by identity.
fn tile_lut(values: impl Iterator<Item = f64>, clip_limit: f64) -> Option<Vec<f64>> {
    let mut hist = vec![0.0f64; CLAHE_BINS];
    let mut n = 0usize;
    for v in values {
        hist[bin_of(v)] += 1.0;
        n += 1;
    }
    if n == 0 || hist.iter().filter(|&&h| h > 0.0).count() <= 1 {
        return None;
    }
    if clip_limit.is_finite() {
        let limit = clip_limit * n as f64 / CLAHE_BINS as f64;
        let mut excess = 0.0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let share = excess / CLAHE_BINS as f64;
        hist.iter_mut().for_each(|h| *h += share);
    }
    let mut acc = 0.0;
    Some(
        hist.iter()
            .map(|h| {
                acc += h;
                (acc / n as f64).clamp(0.0, 1.0)
            })
            .collect(),
    )
}

/// CLAHE with bilinear blending between the mappings of neighboring tiles.
pub fn clahe(f: &ScalarField, params: ClaheParams) -> Result<ScalarField> {
    let ClaheParams { tiles, clip_limit } = params;
    if tiles == 0 {
        return Err(VesselError::param("tiles", "must be at least 1"));
    }
    if clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(VesselError::param("clip_limit", "must be positive"));
    }
    let (w, h) = f.dims();
    if w < tiles || h < tiles {
        return Err(VesselError::param(
            "tiles",
            format!("{w}x{h} field is smaller than a {tiles}x{tiles} tile grid"),
        ));
    }
    let xb: Vec<usize> = (0..=tiles).map(|i| i * w / tiles).collect();
    let yb: Vec<usize> = (0..=tiles).map(|i| i * h / tiles).collect();
    let mut luts = Vec::with_capacity(tiles * tiles);
    for ty in 0..tiles {
        for tx in 0..tiles {
            let vals = (yb[ty]..yb[ty + 1])
                .flat_map(|y| (xb[tx]..xb[tx + 1]).map(move |x| (x, y)))
                .map(|(x, y)| f.get(x, y));
            luts.push(tile_lut(vals, clip_limit));
        }
    }
    let centers = |b: &[usize]| -> Vec<f64> {
        b.windows(2).map(|p| (p[0] + p[1]) as f64 / 2.0 - 0.5).collect()
    };
    let cx = centers(&xb);
    let cy = centers(&yb);
    // Index of the lower neighboring tile center and the blend weight.
    let locate = |c: &[f64], p: f64| -> (usize, usize, f64) {
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.partition_point(|&v| v <= p) - 1;
        (i, i + 1, (p - c[i]) / (c[i + 1] - c[i]))
    };
    let map = |lut: &Option<Vec<f64>>, v: f64| match lut {
        Some(l) => l[bin_of(v)],
        None => v,
    };
    let mut out = ScalarField::new(w, h);
    for y in 0..h {
        let (y0, y1, fy) = locate(&cy, y as f64);
        for x in 0..w {
            let (x0, x1, fx) = locate(&cx, x as f64);
            let v = f.get(x, y);
            let top = map(&luts[y0 * tiles + x0], v) * (1.0 - fx) + map(&luts[y0 * tiles + x1], v) * fx;
            let bot = map(&luts[y1 * tiles + x0], v) * (1.0 - fx) + map(&luts[y1 * tiles + x1], v) * fx;
            out.set(x, y, (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Green channel, CLAHE, inversion: vessels become bright on dark.
pub fn redness_input(img: &RasterImage, params: ClaheParams) -> Result<ScalarField> {
    Ok(invert(&clahe(&green_channel(img)?, params)?))
}

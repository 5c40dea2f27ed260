//! Binarization and cleanup of the fused vessel map.

use crate::error::{Result, VesselError};
use crate::field::{ensure_same_dims, BinaryMask, ScalarField};

pub const OTSU_BINS: usize = 256;

/// Result of an Otsu split on a 256-bin histogram spanning `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtsuThreshold {
    /// Histogram range of the pixels considered.
    pub lo: f64,
    pub hi: f64,
    /// Last bin of the background class; bins above it are foreground.
    pub split_bin: usize,
}

impl OtsuThreshold {
    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        otsu_bin(v, self.lo, self.hi)
    }

    /// Upper edge of the background class.
    pub fn value(&self) -> f64 {
        self.lo + (self.hi - self.lo) * (self.split_bin + 1) as f64 / OTSU_BINS as f64
    }

    #[inline]
    pub fn is_foreground(&self, v: f64) -> bool {
        self.bin_of(v) > self.split_bin
    }
}

#[inline]
pub fn otsu_bin(v: f64, lo: f64, hi: f64) -> usize {
    (((v - lo) / (hi - lo) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Histogram of the values selected by `region`, over their own range.
pub fn otsu_histogram(f: &ScalarField, region: Option<&BinaryMask>) -> Result<(Vec<u64>, f64, f64)> {
    if let Some(m) = region {
        ensure_same_dims(f.dims(), m.dims())?;
    }
    let inside = |i: usize| region.is_none_or(|m| m.as_slice()[i]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &v) in f.as_slice().iter().enumerate() {
        if inside(i) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi > lo) {
        return Err(VesselError::Degenerate(
            "Otsu needs at least two distinct values inside the region".into(),
        ));
    }
    let mut hist = vec![0u64; OTSU_BINS];
    for (i, &v) in f.as_slice().iter().enumerate() {
        if inside(i) {
            hist[otsu_bin(v, lo, hi)] += 1;
        }
    }
    Ok((hist, lo, hi))
}

/// Split maximizing the between-class variance, using bin centers as the
/// class values. Ties resolve to the lowest split.
pub fn otsu_split(hist: &[u64]) -> usize {
    let total: f64 = hist.iter().sum::<u64>() as f64;
    let center = |b: usize| b as f64 + 0.5;
    let sum_all: f64 = hist.iter().enumerate().map(|(b, &n)| n as f64 * center(b)).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..hist.len() - 1 {
        w0 += hist[k] as f64;
        sum0 += hist[k] as f64 * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best.1 {
            best = (k, between);
        }
    }
    best.0
}

/// Global Otsu threshold over the pixels in `region` (all pixels if `None`).
pub fn otsu_threshold(f: &ScalarField, region: Option<&BinaryMask>) -> Result<OtsuThreshold> {
    let (hist, lo, hi) = otsu_histogram(f, region)?;
    Ok(OtsuThreshold {
        lo,
        hi,
        split_bin: otsu_split(&hist),
    })
}

/// Foreground = region pixels above the Otsu threshold.
pub fn otsu_binarize(f: &ScalarField, region: Option<&BinaryMask>) -> Result<BinaryMask> {
    let t = otsu_threshold(f, region)?;
    Ok(BinaryMask::from_fn(f.width(), f.height(), |x, y| {
        region.is_none_or(|m| m.get(x, y)) && t.is_foreground(f.get(x, y))
    }))
}

const CROSS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Erosion by the 3x3 cross. Out-of-frame neighbors are ignored.
pub fn erode_cross(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        m.get(x, y)
            && CROSS.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                let outside = nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize;
                outside || m.get(nx as usize, ny as usize)
            })
    })
}

/// Dilation by the 3x3 cross.
pub fn dilate_cross(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        m.get(x, y)
            || CROSS
                .iter()
                .any(|&(dx, dy)| m.get_signed(x as isize + dx, y as isize + dy))
    })
}

/// Fills background regions not 4-connected to the frame border.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dims();
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    let seed = |x: usize, y: usize, stack: &mut Vec<(usize, usize)>, outside: &mut Vec<bool>| {
        let i = y * w + x;
        if !m.get(x, y) && !outside[i] {
            outside[i] = true;
            stack.push((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut stack, &mut outside);
        seed(x, h - 1, &mut stack, &mut outside);
    }
    for y in 0..h {
        seed(0, y, &mut stack, &mut outside);
        seed(w - 1, y, &mut stack, &mut outside);
    }
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in CROSS {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                seed(nx as usize, ny as usize, &mut stack, &mut outside);
            }
        }
    }
    BinaryMask::from_fn(w, h, |x, y| m.get(x, y) || !outside[y * w + x])
}

/// Opening with the 3x3 cross (removes isolated spots), then hole filling.
pub fn morph_cleanup(m: &BinaryMask) -> BinaryMask {
    fill_holes(&dilate_cross(&erode_cross(m)))
}

/// 8-connected components of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet {
    width: usize,
    height: usize,
    /// Per-pixel label, 0 for background, `k + 1` for component `k`.
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl ComponentSet {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Median component size; `None` for an empty set.
    pub fn median_size(&self) -> Option<f64> {
        crate::metrics::median(&self.sizes.iter().map(|&s| s as f64).collect::<Vec<_>>())
    }

    /// Mask of the components whose index satisfies `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> BinaryMask {
        let kept: Vec<bool> = (0..self.sizes.len()).map(keep).collect();
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.labels
                .iter()
                .map(|&l| l > 0 && kept[l as usize - 1])
                .collect(),
        )
        .expect("label grid matches dims")
    }
}

pub(crate) const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Labels 8-connected components with an explicit-stack flood fill.
/// Components are numbered in raster order of their first pixel.
pub fn connected_components(m: &BinaryMask) -> ComponentSet {
    let (w, h) = m.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.as_slice()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.as_slice()[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentSet {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Normalized size deviation `d_k = (N_k - M) / max_k |N_k - M|`; all zeros
/// when every component has the median size.
pub fn size_deviations(cs: &ComponentSet) -> Result<Vec<f64>> {
    let m = cs
        .median_size()
        .ok_or_else(|| VesselError::Degenerate("no connected components".into()))?;
    let denom = cs
        .sizes()
        .iter()
        .map(|&n| (n as f64 - m).abs())
        .fold(0.0f64, f64::max);
    Ok(cs
        .sizes()
        .iter()
        .map(|&n| if denom == 0.0 { 0.0 } else { (n as f64 - m) / denom })
        .collect())
}

/// Keeps components with `d_k >= t` (or `d_k > t` when `strict`). When all
/// components share one size every component is kept.
pub fn size_filter(cs: &ComponentSet, t: f64, strict: bool) -> Result<BinaryMask> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(VesselError::param("t", format!("{t} not in (0, 1]")));
    }
    let d = size_deviations(cs)?;
    let uniform = d.iter().all(|&v| v == 0.0);
    Ok(cs.select(|k| uniform || if strict { d[k] > t } else { d[k] >= t }))
}

/// `V(W) <- V(W) and not V(U)`.
pub fn remove_thick_traces(v_w: &BinaryMask, v_u: &BinaryMask) -> Result<BinaryMask> {
    v_w.and_not(v_u)
}

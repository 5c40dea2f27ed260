//! Centerline extraction, sub-vessel tracing and tortuosity indices.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Result, VesselError};
use crate::field::BinaryMask;

/// Ring order P2..P9 used by Zhang-Suen: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Unit-width centerline mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    mask: BinaryMask,
}

impl Skeleton {
    /// Wraps a mask that is already thin (for example a hand-drawn path).
    pub fn from_thin_mask(mask: BinaryMask) -> Self {
        Self { mask }
    }

    pub fn as_mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }

    /// Number of 8-neighbors in the skeleton.
    pub fn degree(&self, x: usize, y: usize) -> usize {
        degree(&self.mask, x, y)
    }

    pub fn max_degree(&self) -> usize {
        self.mask
            .points()
            .map(|(x, y)| self.degree(x, y))
            .max()
            .unwrap_or(0)
    }

    pub fn has_2x2_block(&self) -> bool {
        let m = &self.mask;
        (1..m.height()).any(|y| {
            (1..m.width()).any(|x| m.get(x, y) && m.get(x - 1, y) && m.get(x, y - 1) && m.get(x - 1, y - 1))
        })
    }
}

fn ring_bits(m: &BinaryMask, x: usize, y: usize) -> [bool; 8] {
    let mut out = [false; 8];
    for (o, (dx, dy)) in out.iter_mut().zip(RING) {
        *o = m.get_signed(x as isize + dx, y as isize + dy);
    }
    out
}

fn degree(m: &BinaryMask, x: usize, y: usize) -> usize {
    ring_bits(m, x, y).iter().filter(|&&b| b).count()
}

/// Number of connected groups among the selected ring positions.
fn ring_components(sel: [bool; 8], four_connected: bool) -> Vec<Vec<usize>> {
    let adjacent = |a: usize, b: usize| {
        let (ax, ay) = RING[a];
        let (bx, by) = RING[b];
        let (dx, dy) = ((ax - bx).abs(), (ay - by).abs());
        if four_connected {
            dx + dy == 1
        } else {
            dx <= 1 && dy <= 1
        }
    };
    let mut seen = [false; 8];
    let mut comps = Vec::new();
    for s in 0..8 {
        if !sel[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            let a = comp[i];
            for b in 0..8 {
                if sel[b] && !seen[b] && adjacent(a, b) {
                    seen[b] = true;
                    comp.push(b);
                }
            }
            i += 1;
        }
        comps.push(comp);
    }
    comps
}

/// Whether deleting `(x, y)` preserves 8-topology of the foreground and
/// 4-topology of the background.
fn is_simple(m: &BinaryMask, x: usize, y: usize) -> bool {
    let fg = ring_bits(m, x, y);
    if ring_components(fg, false).len() != 1 {
        return false;
    }
    let bg = fg.map(|b| !b);
    let axial = |i: usize| i.is_multiple_of(2);
    ring_components(bg, true)
        .iter()
        .filter(|c| c.iter().any(|&i| axial(i)))
        .count()
        == 1
}

fn zhang_suen_candidate(p: [bool; 8], first: bool) -> bool {
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    // p[0]=P2 north, p[2]=P4 east, p[4]=P6 south, p[6]=P8 west
    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
    if first {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Zhang-Suen thinning followed by removal of redundant staircase pixels.
///
/// Candidates of each sub-iteration are re-checked in raster order against
/// the partially thinned image, so components never vanish (plain parallel
/// Zhang-Suen erases 2x2 squares).
pub fn skeletonize(m: &BinaryMask) -> Skeleton {
    let mut s = m.clone();
    loop {
        let mut changed = false;
        for first in [true, false] {
            let candidates: Vec<(usize, usize)> = s
                .points()
                .filter(|&(x, y)| zhang_suen_candidate(ring_bits(&s, x, y), first))
                .collect();
            for (x, y) in candidates {
                if zhang_suen_candidate(ring_bits(&s, x, y), first) {
                    s.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        let pts: Vec<(usize, usize)> = s.points().collect();
        for (x, y) in pts {
            if degree(&s, x, y) >= 2 && is_simple(&s, x, y) {
                s.set(x, y, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    break_blocks(&mut s);
    Skeleton { mask: s }
}

/// Deletes one pixel of every remaining 2x2 block.
///
/// A block survives thinning only when each of its pixels carries an arm
/// that no other block pixel touches, as at a diagonal crossing. The pixel
/// with the fewest outside neighbors is dropped; branch-point removal would
/// delete the whole block anyway.
fn break_blocks(s: &mut BinaryMask) {
    let (w, h) = s.dims();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            if !block.iter().all(|&(bx, by)| s.get(bx, by)) {
                continue;
            }
            let outside = |&(bx, by): &(usize, usize)| degree(s, bx, by) - 3;
            let (dx, dy) = *block.iter().min_by_key(|p| outside(p)).expect("four pixels");
            s.set(dx, dy, false);
        }
    }
}

/// Deletes every pixel with more than two 8-neighbors, all at once.
pub fn remove_branch_points(s: &Skeleton) -> Skeleton {
    let mut out = s.mask.clone();
    for (x, y) in s.mask.points() {
        if s.degree(x, y) > 2 {
            out.set(x, y, false);
        }
    }
    Skeleton { mask: out }
}

/// Ordered 8-connected centerline of one sub-vessel.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselSegment {
    pub points: Vec<(usize, usize)>,
    /// Unit per axial step, sqrt(2) per diagonal step.
    pub arc_length: f64,
}

impl VesselSegment {
    pub fn from_points(points: Vec<(usize, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(VesselError::param("points", "segment has no points"));
        }
        let mut arc_length = 0.0;
        for w in points.windows(2) {
            let dx = w[0].0.abs_diff(w[1].0);
            let dy = w[0].1.abs_diff(w[1].1);
            arc_length += match (dx, dy) {
                (1, 0) | (0, 1) => 1.0,
                (1, 1) => std::f64::consts::SQRT_2,
                _ => {
                    return Err(VesselError::param(
                        "points",
                        format!("{:?} and {:?} are not 8-adjacent", w[0], w[1]),
                    ))
                }
            };
        }
        Ok(Self { points, arc_length })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Straight-line distance between the end points.
    pub fn chord(&self) -> f64 {
        let (a, b) = (self.points[0], self.points[self.points.len() - 1]);
        let dx = a.0 as f64 - b.0 as f64;
        let dy = a.1 as f64 - b.1 as f64;
        dx.hypot(dy)
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|&(x, y)| [x as f64, y as f64]).collect()
    }
}

/// Splits a skeleton of maximum degree 2 into ordered polylines.
///
/// Open paths start at their raster-first end point, cycles are cut at their
/// topmost-leftmost pixel. Segments with fewer than `min_len` points are
/// dropped.
pub fn trace_segments(s: &Skeleton, min_len: usize) -> Vec<VesselSegment> {
    let m = &s.mask;
    let mut visited = BinaryMask::new(m.width(), m.height());
    let mut out = Vec::new();
    let walk = |start: (usize, usize), visited: &mut BinaryMask| {
        let mut path = vec![start];
        visited.set(start.0, start.1, true);
        let mut cur = start;
        loop {
            let next = RING.iter().find_map(|&(dx, dy)| {
                let (nx, ny) = (cur.0 as isize + dx, cur.1 as isize + dy);
                (m.get_signed(nx, ny) && !visited.get_signed(nx, ny)).then_some((nx as usize, ny as usize))
            });
            match next {
                Some(p) => {
                    visited.set(p.0, p.1, true);
                    path.push(p);
                    cur = p;
                }
                None => break path,
            }
        }
    };
    let keep = |path: Vec<(usize, usize)>, out: &mut Vec<VesselSegment>| {
        if path.len() >= min_len.max(1) {
            if let Ok(seg) = VesselSegment::from_points(path) {
                out.push(seg);
            }
        }
    };
    // open paths first so a cycle scan never starts inside one
    for (x, y) in m.points() {
        if !visited.get(x, y) && degree(m, x, y) <= 1 {
            let path = walk((x, y), &mut visited);
            keep(path, &mut out);
        }
    }
    for (x, y) in m.points() {
        if !visited.get(x, y) {
            let path = walk((x, y), &mut visited);
            keep(path, &mut out);
        }
    }
    out
}

/// Centered moving average with the window shrunk symmetrically at the ends.
fn smooth(points: &[[f64; 2]], window: usize) -> Vec<[f64; 2]> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &points[i - h..=i + h];
            let k = span.len() as f64;
            [
                span.iter().map(|p| p[0]).sum::<f64>() / k,
                span.iter().map(|p| p[1]).sum::<f64>() / k,
            ]
        })
        .collect()
}

/// Signed curvature and local step length at the samples where the full
/// smoothing window and difference stencil fit inside the curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    pub kappa: Vec<f64>,
    pub ds: Vec<f64>,
    /// Length of the smoothed polyline, end to end.
    pub length: f64,
}

impl CurvatureProfile {
    pub fn abs(&self) -> Vec<f64> {
        self.kappa.iter().map(|k| k.abs()).collect()
    }

    /// Length covered by the curvature samples.
    pub fn sampled_length(&self) -> f64 {
        self.ds.iter().sum()
    }

    /// Mean of `f(kappa)` per unit length over the sampled part.
    fn rate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let l = self.sampled_length();
        if l <= 0.0 {
            return 0.0;
        }
        self.kappa.iter().zip(&self.ds).map(|(&k, d)| f(k) * d).sum::<f64>() / l
    }
}

pub const MIN_CURVATURE_POINTS: usize = 5;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Curvature of a sampled planar curve after smoothing.
///
/// Derivatives are central differences with spacing `ceil(window / 2)`.
/// Samples closer to the ends than the smoothing half-width plus that
/// spacing are skipped; they only see a truncated window.
pub fn signed_curvature(points: &[[f64; 2]], smooth_window: usize) -> Result<CurvatureProfile> {
    let n = points.len();
    if n < MIN_CURVATURE_POINTS {
        return Err(VesselError::Degenerate(format!(
            "curvature needs at least {MIN_CURVATURE_POINTS} points, got {n}"
        )));
    }
    let window = smooth_window.max(1);
    let p = smooth(points, window);
    let half = (n - 1) / 2;
    let k = window.div_ceil(2).clamp(1, half);
    let margin = (window / 2 + k).min(half).max(k);
    let mut kappa = Vec::new();
    let mut ds = Vec::new();
    for i in margin..n - margin {
        let (a, b, c) = (p[i - k], p[i], p[i + k]);
        let kf = k as f64;
        let x1 = (c[0] - a[0]) / (2.0 * kf);
        let y1 = (c[1] - a[1]) / (2.0 * kf);
        let x2 = (c[0] - 2.0 * b[0] + a[0]) / (kf * kf);
        let y2 = (c[1] - 2.0 * b[1] + a[1]) / (kf * kf);
        let speed2 = x1 * x1 + y1 * y1;
        kappa.push(if speed2 > 0.0 { (x1 * y2 - y1 * x2) / speed2.powf(1.5) } else { 0.0 });
        ds.push(dist(p[i + 1], p[i - 1]) / 2.0);
    }
    let length = p.windows(2).map(|w| dist(w[0], w[1])).sum();
    Ok(CurvatureProfile { kappa, ds, length })
}

/// Unsigned curvature at the sampled points, 1/pixels.
pub fn curvature_profile(seg: &VesselSegment, smooth_window: usize) -> Result<Vec<f64>> {
    Ok(signed_curvature(&seg.coords(), smooth_window)?.abs())
}

/// Curvature sign changes, ignoring samples below a quarter of the peak
/// magnitude so that digitization ripple near zero is not counted.
pub fn inflection_count(profile: &CurvatureProfile) -> usize {
    let peak = profile.kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if peak <= 1e-9 {
        return 0;
    }
    let band = 0.25 * peak;
    let mut last = 0.0f64;
    let mut count = 0;
    for &k in &profile.kappa {
        if k.abs() < band {
            continue;
        }
        if last != 0.0 && k.signum() != last {
            count += 1;
        }
        last = k.signum();
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TortuosityIndex {
    ArcChord,
    TotalCurvature,
    Tcal,
    TotalSquaredCurvature,
    Tscal,
    InflectionCount,
    Eti,
}

impl TortuosityIndex {
    pub const ALL: [TortuosityIndex; 7] = [
        Self::ArcChord,
        Self::TotalCurvature,
        Self::Tcal,
        Self::TotalSquaredCurvature,
        Self::Tscal,
        Self::InflectionCount,
        Self::Eti,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::ArcChord => "dm",
            Self::TotalCurvature => "tc",
            Self::Tcal => "tcal",
            Self::TotalSquaredCurvature => "tsc",
            Self::Tscal => "tscal",
            Self::InflectionCount => "icm",
            Self::Eti => "eti",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Self::ArcChord => "L/chord - 1",
            Self::TotalCurvature => "tcal * L",
            Self::Tcal => "sum |k| ds / sum ds",
            Self::TotalSquaredCurvature => "tscal * L",
            Self::Tscal => "sum k^2 ds / sum ds",
            Self::InflectionCount => "inflections * L/chord",
            Self::Eti => "1 - sqrt(1 - l_minor/l_major) of the point covariance (reconstructed)",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            Self::ArcChord | Self::TotalCurvature | Self::InflectionCount | Self::Eti => "1",
            Self::Tcal | Self::TotalSquaredCurvature => "1/px",
            Self::Tscal => "1/px^2",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.id().eq_ignore_ascii_case(id))
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Identifiers held for indices outside the implemented set.
pub const RESERVED_INDEX_IDS: [&str; 5] = ["soam", "dm_inflection", "density", "grisan", "mean_angle"];

/// One value per index; `None` where the index is undefined for the segment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IndexValues([Option<f64>; 7]);

impl IndexValues {
    pub fn get(&self, idx: TortuosityIndex) -> Option<f64> {
        self.0[idx.slot()]
    }

    pub fn set(&mut self, idx: TortuosityIndex, v: Option<f64>) {
        self.0[idx.slot()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (TortuosityIndex, Option<f64>)> + '_ {
        TortuosityIndex::ALL.into_iter().map(|i| (i, self.get(i)))
    }
}

/// TCAL of one segment: mean absolute curvature per unit length.
pub fn index_tcal(seg: &VesselSegment, smooth_window: usize) -> Result<f64> {
    if seg.arc_length <= 0.0 {
        return Err(VesselError::Degenerate("zero-length segment".into()));
    }
    Ok(signed_curvature(&seg.coords(), smooth_window)?.rate(f64::abs))
}

/// Eccentricity index of a point cloud: 0 for collinear points, 1 for an
/// isotropic spread.
pub fn eti_of_points(points: &[[f64; 2]]) -> Result<f64> {
    if points.len() < MIN_CURVATURE_POINTS {
        return Err(VesselError::Degenerate("too few points for moments".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let major = half_tr + disc;
    if major <= 0.0 {
        return Err(VesselError::Degenerate("point spread is zero".into()));
    }
    let minor = (half_tr - disc).max(0.0);
    Ok(1.0 - (1.0 - minor / major).max(0.0).sqrt())
}

pub fn index_eti(seg: &VesselSegment) -> Result<f64> {
    eti_of_points(&seg.coords())
}

/// All implemented indices for one segment. Degenerate indices are `None`.
///
/// Lengths come from the smoothed curve, which removes the staircase excess
/// of the 8-connected step length.
pub fn index_suite(seg: &VesselSegment, smooth_window: usize) -> IndexValues {
    let mut v = IndexValues::default();
    let chord = seg.chord();
    if let Ok(prof) = signed_curvature(&seg.coords(), smooth_window) {
        let l = prof.length;
        let ratio = (chord > 0.0).then(|| (l / chord).max(1.0));
        let tcal = prof.rate(f64::abs);
        let tscal = prof.rate(|k| k * k);
        v.set(TortuosityIndex::ArcChord, ratio.map(|r| r - 1.0));
        v.set(TortuosityIndex::TotalCurvature, Some(tcal * l));
        v.set(TortuosityIndex::Tcal, Some(tcal));
        v.set(TortuosityIndex::TotalSquaredCurvature, Some(tscal * l));
        v.set(TortuosityIndex::Tscal, Some(tscal));
        v.set(
            TortuosityIndex::InflectionCount,
            ratio.map(|r| inflection_count(&prof) as f64 * r),
        );
    } else if chord > 0.0 {
        v.set(TortuosityIndex::ArcChord, Some((seg.arc_length / chord - 1.0).max(0.0)));
    }
    v.set(TortuosityIndex::Eti, index_eti(seg).ok());
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRecord {
    pub points: usize,
    pub arc_length: f64,
    pub chord: f64,
    pub values: IndexValues,
}

impl SegmentRecord {
    pub fn new(seg: &VesselSegment, smooth_window: usize) -> Self {
        Self {
            points: seg.len(),
            arc_length: seg.arc_length,
            chord: seg.chord(),
            values: index_suite(seg, smooth_window),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TortuosityReport {
    pub segments: Vec<SegmentRecord>,
    /// Arc-length-weighted mean of each index over the segments defining it.
    pub aggregate: IndexValues,
    pub total_length: f64,
}

impl TortuosityReport {
    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
            aggregate: IndexValues::default(),
            total_length: 0.0,
        }
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }
}

pub fn aggregate_image(segments: Vec<SegmentRecord>) -> Result<TortuosityReport> {
    if segments.is_empty() {
        return Err(VesselError::Degenerate("no segments to aggregate".into()));
    }
    let mut aggregate = IndexValues::default();
    for idx in TortuosityIndex::ALL {
        let (mut num, mut den) = (0.0, 0.0);
        for s in &segments {
            if let Some(v) = s.values.get(idx) {
                num += s.arc_length * v;
                den += s.arc_length;
            }
        }
        aggregate.set(idx, (den > 0.0).then(|| num / den));
    }
    let total_length = segments.iter().map(|s| s.arc_length).sum();
    Ok(TortuosityReport {
        segments,
        aggregate,
        total_length,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TortuosityParams {
    pub min_segment_length: usize,
    pub smooth_window: usize,
}

impl Default for TortuosityParams {
    fn default() -> Self {
        Self {
            min_segment_length: 10,
            smooth_window: 5,
        }
    }
}

/// Skeleton, branch removal, tracing and indices for a vessel mask.
/// A mask without usable segments gives an empty report.
pub fn analyze_mask(m: &BinaryMask, params: &TortuosityParams) -> TortuosityReport {
    let skel = remove_branch_points(&skeletonize(m));
    let records: Vec<SegmentRecord> = trace_segments(&skel, params.min_segment_length)
        .iter()
        .map(|s| SegmentRecord::new(s, params.smooth_window))
        .collect();
    aggregate_image(records).unwrap_or_else(|_| TortuosityReport::empty())
}

/// Unweighted mean of image aggregates per subject. Images missing from
/// `subject_of` are their own subject.
pub fn subject_means<'a>(
    images: impl IntoIterator<Item = (&'a str, &'a IndexValues)>,
    subject_of: &BTreeMap<String, String>,
) -> BTreeMap<String, IndexValues> {
    let mut acc: BTreeMap<String, [(f64, usize); 7]> = BTreeMap::new();
    for (name, vals) in images {
        let subject = subject_of.get(name).cloned().unwrap_or_else(|| name.to_string());
        let slot = acc.entry(subject).or_insert([(0.0, 0); 7]);
        for (idx, v) in vals.iter() {
            if let Some(v) = v {
                slot[idx.slot()].0 += v;
                slot[idx.slot()].1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(k, sums)| {
            let mut v = IndexValues::default();
            for idx in TortuosityIndex::ALL {
                let (s, n) = sums[idx.slot()];
                v.set(idx, (n > 0).then(|| s / n as f64));
            }
            (k, v)
        })
        .collect()
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Comma-delimited tortuosity report, one row per segment and one `ALL`
/// row per image, preceded by a `#` header describing every column.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(mut w: W) -> std::io::Result<Self> {
        writeln!(w, "# vessel tortuosity report")?;
        writeln!(w, "# arc_length: px, 1 per axial step and sqrt(2) per diagonal step")?;
        writeln!(w, "# L: px, length of the centerline after moving-average smoothing")?;
        writeln!(w, "# k: curvature in 1/px at interior samples, ds: local step of the smoothed curve")?;
        for idx in TortuosityIndex::ALL {
            writeln!(w, "# {}: {} [{}]", idx.id(), idx.formula(), idx.units())?;
        }
        writeln!(w, "# reserved ids: {}", RESERVED_INDEX_IDS.join(" "))?;
        writeln!(w, "# segment = ALL rows hold the arc-length-weighted image mean; empty cells are undefined")?;
        let mut inner = csv::WriterBuilder::new().from_writer(w);
        let mut header = vec!["image", "segment", "points", "arc_length", "chord"];
        header.extend(TortuosityIndex::ALL.iter().map(|i| i.id()));
        inner.write_record(&header).map_err(std::io::Error::other)?;
        Ok(Self { inner })
    }

    pub fn write_image(&mut self, image: &str, report: &TortuosityReport) -> std::io::Result<()> {
        for (i, s) in report.segments.iter().enumerate() {
            let mut row = vec![
                image.to_string(),
                i.to_string(),
                s.points.to_string(),
                format!("{:.6}", s.arc_length),
                format!("{:.6}", s.chord),
            ];
            row.extend(s.values.iter().map(|(_, v)| fmt_value(v)));
            self.inner.write_record(&row).map_err(std::io::Error::other)?;
        }
        let mut row = vec![
            image.to_string(),
            "ALL".to_string(),
            report.segment_count().to_string(),
            format!("{:.6}", report.total_length),
            String::new(),
        ];
        row.extend(report.aggregate.iter().map(|(_, v)| fmt_value(v)));
        self.inner.write_record(&row).map_err(std::io::Error::other)
    }

    pub fn finish(self) -> std::io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn seg(points: &[(usize, usize)]) -> VesselSegment {
        VesselSegment::from_points(points.to_vec()).unwrap()
    }

    /// Minimal 8-connected digitization of a parametric curve.
    fn digitize(f: impl Fn(f64) -> (f64, f64), t0: f64, t1: f64) -> Vec<(usize, usize)> {
        let steps = 20_000;
        let mut pts: Vec<(usize, usize)> = Vec::new();
        for i in 0..=steps {
            let (x, y) = f(t0 + (t1 - t0) * i as f64 / steps as f64);
            let p = (x.round() as usize, y.round() as usize);
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        // drop corner pixels whose neighbors already touch
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (i, &p) in pts.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (out.last(), pts.get(i + 1)) {
                if a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 {
                    continue;
                }
            }
            out.push(p);
        }
        out
    }

    fn arc(r: f64, a0: f64, a1: f64) -> VesselSegment {
        let c = r + 5.0;
        seg(&digitize(|t| (c + r * t.cos(), c + r * t.sin()), a0, a1))
    }

    #[test]
    fn thin_line_unchanged() {
        let m = BinaryMask::from_ascii(&["..........", ".########.", ".........."]);
        assert_eq!(skeletonize(&m).into_mask(), m);
    }

    #[test]
    fn square_thins_to_one_component() {
        let m = BinaryMask::from_fn(11, 11, |x, y| (2..9).contains(&x) && (2..9).contains(&y));
        let s = skeletonize(&m);
        assert!(!s.has_2x2_block());
        assert!(s.as_mask().count() >= 1);
        let cs = crate::maskops::connected_components(s.as_mask());
        assert_eq!(cs.sizes().len(), 1);
        let tiny = BinaryMask::from_ascii(&["....", ".##.", ".##.", "...."]);
        let cross = BinaryMask::from_ascii(&["#..#", ".##.", ".##.", "#..#"]);
        let s = skeletonize(&cross);
        assert!(!s.has_2x2_block());
        assert_eq!(s.as_mask().count(), 7);
        assert_eq!(skeletonize(&tiny).as_mask().count(), 2);
    }

    #[test]
    fn wide_bar_thins_to_center() {
        // rows 3..8 hold the bar, so its medial axis is row 5
        let m = BinaryMask::from_fn(40, 11, |x, y| (3..37).contains(&x) && (3..8).contains(&y));
        let s = skeletonize(&m);
        assert!(!s.has_2x2_block());
        for (x, y) in s.as_mask().points() {
            if (8..32).contains(&x) {
                assert!(y.abs_diff(5) <= 1, "({x},{y})");
            }
        }
        let cols = (8..32).filter(|&x| (0..11).any(|y| s.as_mask().get(x, y))).count();
        assert_eq!(cols, 24);
    }

    #[test]
    fn ring_keeps_its_hole() {
        let m = BinaryMask::from_fn(20, 20, |x, y| {
            let d = ((x as f64 - 9.5).powi(2) + (y as f64 - 9.5).powi(2)).sqrt();
            (4.0..8.0).contains(&d)
        });
        let s = skeletonize(&m);
        assert!(!s.has_2x2_block());
        assert!(!s.as_mask().get(9, 9));
        let filled = crate::maskops::fill_holes(s.as_mask());
        assert!(filled.get(9, 9) && filled.get(10, 10));
    }

    #[test]
    fn branch_points() {
        let plus = Skeleton::from_thin_mask(BinaryMask::from_ascii(&[
            "...#...", "...#...", "...#...", "#######", "...#...", "...#...", "...#...",
        ]));
        let cut = remove_branch_points(&plus);
        // the four pixels around the center also touch three others
        assert!(!cut.as_mask().get(3, 3));
        assert_eq!(cut.as_mask().count(), 8);
        assert_eq!(trace_segments(&cut, 1).len(), 4);

        let tee = Skeleton::from_thin_mask(BinaryMask::from_ascii(&["#######", "...#...", "...#...", "...#..."]));
        let cut = remove_branch_points(&tee);
        assert!(!cut.as_mask().get(3, 0));
        assert_eq!(trace_segments(&cut, 1).len(), 3);

        let path = Skeleton::from_thin_mask(BinaryMask::from_ascii(&["#....", ".#...", "..##.", "....#"]));
        assert_eq!(remove_branch_points(&path), path);
    }

    #[test]
    fn tracing_examples() {
        let h = Skeleton::from_thin_mask(BinaryMask::from_fn(12, 3, |x, y| y == 1 && (1..11).contains(&x)));
        let segs = trace_segments(&h, 2);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].arc_length, 9.0);
        assert_eq!(segs[0].points[0], (1, 1));

        let d = Skeleton::from_thin_mask(BinaryMask::from_fn(12, 12, |x, y| x == y && x < 10));
        assert!((trace_segments(&d, 2)[0].arc_length - 9.0 * SQRT_2).abs() < 1e-12);

        let ring = Skeleton::from_thin_mask(BinaryMask::from_ascii(&[".....", ".###.", ".#.#.", ".###.", "....."]));
        let segs = trace_segments(&ring, 1);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 8);
        assert_eq!(segs[0].points[0], (1, 1));
        assert_eq!(segs[0].arc_length, 7.0);

        assert!(trace_segments(&h, 11).is_empty());
    }

    #[test]
    fn segment_rejects_gaps() {
        assert!(VesselSegment::from_points(vec![(0, 0), (2, 0)]).is_err());
        assert!(VesselSegment::from_points(vec![]).is_err());
    }

    #[test]
    fn straight_lines_score_zero() {
        let lines = [
            (0..30).map(|x| (x + 2, 4)).collect::<Vec<_>>(),
            (0..30).map(|y| (3, y + 1)).collect(),
            (0..30).map(|i| (i + 1, i + 2)).collect(),
        ];
        for pts in lines {
            let v = index_suite(&seg(&pts), 5);
            for (idx, val) in v.iter() {
                assert!(val.unwrap().abs() <= 1e-6, "{idx:?} = {val:?}");
            }
        }
    }

    #[test]
    fn circle_curvature() {
        let full = arc(20.0, 0.0, 2.0 * PI * 0.999);
        let k = curvature_profile(&full, 5).unwrap();
        // single samples carry the staircase ripple; the average does not
        let mean = k.iter().sum::<f64>() / k.len() as f64;
        assert!((mean - 0.05).abs() / 0.05 < 0.05, "mean curvature {mean}");
        let mut dev: Vec<f64> = curvature_profile(&full, 11)
            .unwrap()
            .iter()
            .map(|v| (v - 0.05).abs() / 0.05)
            .collect();
        dev.sort_by(f64::total_cmp);
        assert!(dev[dev.len() / 2] < 0.15, "median deviation {}", dev[dev.len() / 2]);
        let pts: Vec<[f64; 2]> = full.coords().iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
        let k2 = signed_curvature(&pts, 5).unwrap().abs();
        for (a, b) in k.iter().zip(&k2) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
        assert!(curvature_profile(&seg(&[(0, 0), (1, 0), (2, 0)]), 5).is_err());
        assert_eq!(curvature_profile(&seg(&[(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)]), 5).unwrap().len(), 1);
    }

    #[test]
    fn tcal_on_arcs() {
        for r in [10.0, 20.0, 40.0] {
            for rot in [0.0, 0.5, 1.0] {
                let t = index_tcal(&arc(r, rot, rot + PI), 5).unwrap();
                assert!((t * r - 1.0).abs() < 0.15, "r={r} rot={rot} tcal*r={}", t * r);
            }
        }
        for r in [20.0, 40.0] {
            let base = index_tcal(&arc(r, 0.0, PI), 5).unwrap();
            for rot in [0.3, 0.5, 1.0, 1.3] {
                let t = index_tcal(&arc(r, rot, rot + PI), 5).unwrap();
                assert!((t - base).abs() / base < 0.05, "r={r} rot={rot}");
            }
        }
        let semi = index_suite(&arc(30.0, 0.0, PI), 5);
        let tc = semi.get(TortuosityIndex::TotalCurvature).unwrap();
        assert!((tc - PI).abs() / PI < 0.1, "tc={tc}");
    }

    #[test]
    fn semicircle_arc_chord() {
        let target = FRAC_PI_2 - 1.0;
        for r in [20.0, 40.0] {
            let v = index_suite(&arc(r, 0.0, PI), 5);
            let dm = v.get(TortuosityIndex::ArcChord).unwrap();
            assert!((dm - target).abs() / target < 0.02, "r={r} dm={dm}");
        }
    }

    #[test]
    fn eti_ordering() {
        let straight = seg(&(0..40).map(|x| (x + 2, 5)).collect::<Vec<_>>());
        let semi = arc(20.0, 0.0, PI);
        assert!(index_eti(&straight).unwrap().abs() < 1e-12);
        assert!(index_eti(&semi).unwrap() > 0.05);
        let blob: Vec<[f64; 2]> = (0..16).map(|i| {
            let a = i as f64 * PI / 8.0;
            [a.cos(), a.sin()]
        }).collect();
        assert!((eti_of_points(&blob).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn s_curve_has_one_inflection() {
        let pts = digitize(|t| (5.0 + t, 30.0 + 20.0 * ((t - 40.0) / 40.0).powi(3)), 0.0, 80.0);
        let prof = signed_curvature(&seg(&pts).coords(), 5).unwrap();
        assert_eq!(inflection_count(&prof), 1);
        let c = digitize(|t| (5.0 + t, 5.0 + 0.02 * (t - 30.0).powi(2)), 0.0, 60.0);
        assert_eq!(inflection_count(&signed_curvature(&seg(&c).coords(), 5).unwrap()), 0);
    }

    #[test]
    fn aggregation() {
        let mk = |l: f64, v: f64| {
            let mut values = IndexValues::default();
            values.set(TortuosityIndex::Tcal, Some(v));
            SegmentRecord { points: 2, arc_length: l, chord: 1.0, values }
        };
        let one = aggregate_image(vec![mk(5.0, 0.7)]).unwrap();
        assert_eq!(one.aggregate.get(TortuosityIndex::Tcal), Some(0.7));
        let two = aggregate_image(vec![mk(2.0, 0.2), mk(2.0, 0.4)]).unwrap();
        assert!((two.aggregate.get(TortuosityIndex::Tcal).unwrap() - 0.3).abs() < 1e-15);
        let w = aggregate_image(vec![mk(1.0, 0.0), mk(3.0, 4.0)]).unwrap();
        assert_eq!(w.aggregate.get(TortuosityIndex::Tcal), Some(3.0));
        assert_eq!(w.aggregate.get(TortuosityIndex::Eti), None);
        assert!(aggregate_image(vec![]).is_err());
    }

    #[test]
    fn subject_averaging() {
        let mut a = IndexValues::default();
        a.set(TortuosityIndex::Tcal, Some(0.02));
        let mut b = IndexValues::default();
        b.set(TortuosityIndex::Tcal, Some(0.04));
        let map: BTreeMap<String, String> =
            [("l.png", "s1"), ("r.png", "s1")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let out = subject_means([("l.png", &a), ("r.png", &b)], &map);
        assert!((out["s1"].get(TortuosityIndex::Tcal).unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn report_layout() {
        let m = BinaryMask::from_fn(60, 20, |x, y| (10..13).contains(&y) && (5..55).contains(&x));
        let rep = analyze_mask(&m, &TortuosityParams::default());
        assert_eq!(rep.segment_count(), 1);
        let mut w = ReportWriter::new(Vec::new()).unwrap();
        w.write_image("bar", &rep).unwrap();
        w.write_image("blank", &analyze_mask(&BinaryMask::new(8, 8), &TortuosityParams::default())).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert!(text.lines().filter(|l| l.starts_with('#')).count() >= 9);
        assert!(text.contains("image,segment,points,arc_length,chord,dm,tc,tcal,tsc,tscal,icm,eti"));
        assert!(text.contains("bar,ALL,1,"));
        assert!(text.contains("blank,ALL,0,"));
    }
}


//! Protrusion-tip quantification from instance masks.
//!
//! Per cell: the body centroid is the maximum of the Euclidean distance
//! transform, candidate tips are skeleton endpoints, and each tip is kept only
//! if its geodesic distance from the centroid (inside the cell) reaches the
//! minimum protrusion length.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::par::{self, Execution};
use crate::raster::{connected_components, BinaryMask, Connectivity, Grid, LabelMask, Pixel, Rect};
use crate::{Error, Result};

pub const DEFAULT_MIN_PROTRUSION_UM: f64 = 20.0;

/// What a [`DistanceField`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    /// Distance to the nearest background pixel; the image border counts as background.
    EuclideanToBackground,
    /// Shortest 8-connected path inside the foreground from a seed.
    GeodesicFromSeed(Pixel),
}

/// Per-pixel distances in pixels. Unreachable pixels hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub metric: DistanceMetric,
    values: Grid<f64>,
}

impl DistanceField {
    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn get(&self, p: Pixel) -> f64 {
        *self.values.get(p)
    }
}

/// Formats a distance, writing the unreachable sentinel as `inf`.
pub fn format_distance(v: f64, precision: usize) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.precision$}")
    }
}

/// Exact rational `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Ratio {
    num: i64,
    den: i64,
}

impl Ratio {
    const NEG_INF: Ratio = Ratio { num: -1, den: 0 };
    const POS_INF: Ratio = Ratio { num: 1, den: 0 };

    fn le(self, other: Ratio) -> bool {
        // Cross-multiplication is exact; `den == 0` encodes the infinities.
        (self.num as i128) * (other.den as i128) <= (other.num as i128) * (self.den as i128)
    }
}

/// Exact 1D squared distance transform (lower envelope of parabolas).
fn envelope_1d(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<Ratio>) {
    let n = f.len();
    v.clear();
    z.clear();
    v.push(0);
    z.push(Ratio::NEG_INF);
    z.push(Ratio::POS_INF);
    for q in 1..n {
        loop {
            let p = *v.last().expect("envelope never empty");
            let s = Ratio {
                num: (f[q] + (q * q) as i64) - (f[p] + (p * p) as i64),
                den: 2 * (q - p) as i64,
            };
            let k = v.len() - 1;
            if s.le(z[k]) && k > 0 {
                v.pop();
                z.pop();
            } else {
                // Replace the +inf sentinel with the new boundary.
                z[k + 1] = s;
                v.push(q);
                z.push(Ratio::POS_INF);
                break;
            }
        }
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        let qr = Ratio { num: q as i64, den: 1 };
        while !qr.le(z[k + 1]) {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *slot = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest
/// background pixel, with the image border treated as background.
pub fn squared_edt(mask: &BinaryMask) -> Grid<u64> {
    squared_edt_with(mask, Execution::default())
}

pub fn squared_edt_with(mask: &BinaryMask, exec: Execution) -> Grid<u64> {
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.as_slice();
    // Column pass: vertical distance to background, virtual rows -1 and h.
    let mut col = vec![0i64; w * h];
    for c in 0..w {
        let mut d = 0i64;
        for r in 0..h {
            d = if fg[r * w + c] { d + 1 } else { 0 };
            col[r * w + c] = d;
        }
        let mut d = 0i64;
        for r in (0..h).rev() {
            d = if fg[r * w + c] { d + 1 } else { 0 };
            let v = &mut col[r * w + c];
            *v = (*v).min(d);
        }
    }
    for v in col.iter_mut() {
        *v *= *v;
    }
    // Row pass with virtual background columns -1 and w, both at squared
    // height 0, appended to each row.
    let mut out = vec![0u64; w * h];
    par::for_each_chunk_mut(exec, &mut out, w, |r, row_out| {
        let mut f = Vec::with_capacity(w + 2);
        f.push(0);
        f.extend_from_slice(&col[r * w..(r + 1) * w]);
        f.push(0);
        let mut d = vec![0i64; w + 2];
        let (mut v, mut z) = (Vec::new(), Vec::new());
        envelope_1d(&f, &mut d, &mut v, &mut z);
        for (o, &x) in row_out.iter_mut().zip(&d[1..=w]) {
            *o = x as u64;
        }
    });
    Grid::from_vec(w, h, out).expect("shape preserved")
}

/// Exact Euclidean distance transform, in pixels.
pub fn euclidean_distance_transform(mask: &BinaryMask) -> DistanceField {
    DistanceField {
        metric: DistanceMetric::EuclideanToBackground,
        values: squared_edt(mask).map(|&d| (d as f64).sqrt()),
    }
}

/// Location of the EDT maximum; ties go to the smallest `(row, col)`.
pub fn body_centroid(mask: &BinaryMask) -> Result<Pixel> {
    let edt = squared_edt(mask);
    let (mut best, mut best_val) = (None, 0u64);
    for (i, &v) in edt.as_slice().iter().enumerate() {
        if v > best_val {
            best = Some(i);
            best_val = v;
        }
    }
    best.map(|i| edt.pixel_at(i))
        .ok_or_else(|| Error::InvalidInput("centroid of an empty mask".into()))
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distance inside the foreground from `seed`, 8-connected with
/// axis steps of 1 and diagonal steps of √2.
pub fn geodesic_distance(mask: &BinaryMask, seed: Pixel) -> Result<DistanceField> {
    let (w, h) = (mask.width(), mask.height());
    if seed.row >= h || seed.col >= w || !*mask.get(seed) {
        return Err(Error::InvalidArgument(format!(
            "geodesic seed {seed:?} is not a foreground pixel"
        )));
    }
    let fg = mask.as_slice();
    let mut dist = vec![f64::INFINITY; w * h];
    let start = mask.index_of(seed);
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Candidate {
        dist: 0.0,
        index: start,
    });
    while let Some(Candidate { dist: d, index }) = heap.pop() {
        if d > dist[index] {
            continue;
        }
        let (r, c) = ((index / w) as isize, (index % w) as isize);
        for &(dr, dc) in Connectivity::Eight.offsets() {
            let (nr, nc) = (r + dr, c + dc);
            if !mask.in_bounds(nr, nc) {
                continue;
            }
            let j = nr as usize * w + nc as usize;
            if !fg[j] {
                continue;
            }
            let step = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let nd = d + step;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Candidate { dist: nd, index: j });
            }
        }
    }
    Ok(DistanceField {
        metric: DistanceMetric::GeodesicFromSeed(seed),
        values: Grid::from_vec(w, h, dist).expect("shape preserved"),
    })
}

/// A thinned mask with its endpoints and branch points.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    pub skeleton: BinaryMask,
    /// Skeleton pixels with at most one skeleton 8-neighbor, raster order.
    pub endpoints: Vec<Pixel>,
    /// Skeleton pixels with three or more skeleton 8-neighbors, raster order.
    pub branch_points: Vec<Pixel>,
}

/// Clockwise from north: P2..P9 in the usual thinning notation.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn ring(img: &[bool], w: usize, h: usize, i: usize) -> [bool; 8] {
    let (r, c) = ((i / w) as isize, (i % w) as isize);
    let mut out = [false; 8];
    for (k, &(dr, dc)) in RING.iter().enumerate() {
        let (nr, nc) = (r + dr, c + dc);
        out[k] = nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w && img[nr as usize * w + nc as usize];
    }
    out
}

fn deletable(p: &[bool; 8], first_pass: bool) -> bool {
    let b = p.iter().filter(|&&x| x).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let transitions = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
    if transitions != 1 {
        return false;
    }
    let [n, _, e, _, s, _, w, _] = *p;
    if first_pass {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Two-subiteration parallel thinning until stable.
///
/// A component whose every pixel is marked in one subiteration (e.g. a 2x2
/// block) keeps its first pixel in raster order, so no component vanishes.
pub fn skeletonize(mask: &BinaryMask) -> SkeletonGraph {
    let (w, h) = (mask.width(), mask.height());
    let mut img = mask.as_slice().to_vec();
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for first_pass in [true, false] {
            marked.clear();
            marked.extend((0..img.len()).filter(|&i| img[i] && deletable(&ring(&img, w, h, i), first_pass)));
            if marked.is_empty() {
                continue;
            }
            keep_one_per_vanishing_component(&img, w, h, &mut marked);
            for &i in &marked {
                img[i] = false;
            }
            changed |= !marked.is_empty();
        }
        if !changed {
            break;
        }
    }
    let skeleton = Grid::from_vec(w, h, img).expect("shape preserved");
    let (endpoints, branch_points) = classify_skeleton(&skeleton);
    SkeletonGraph {
        skeleton,
        endpoints,
        branch_points,
    }
}

fn keep_one_per_vanishing_component(img: &[bool], w: usize, h: usize, marked: &mut Vec<usize>) {
    let current = Grid::from_vec(w, h, img.to_vec()).expect("shape preserved");
    let labels = connected_components(&current, Connectivity::Eight);
    let n = labels.labels().len();
    let mut survivors = vec![0usize; n + 1];
    let mut is_marked = vec![false; img.len()];
    for &i in marked.iter() {
        is_marked[i] = true;
    }
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l > 0 && !is_marked[i] {
            survivors[l as usize] += 1;
        }
    }
    let mut spared = vec![false; n + 1];
    marked.retain(|&i| {
        let l = labels.as_slice()[i] as usize;
        if survivors[l] == 0 && !spared[l] {
            // `marked` is ascending, so this is the component's first pixel.
            spared[l] = true;
            false
        } else {
            true
        }
    });
}

/// Endpoints (≤ 1 neighbor) and branch points (≥ 3 neighbors) of a thin mask.
pub fn classify_skeleton(skeleton: &BinaryMask) -> (Vec<Pixel>, Vec<Pixel>) {
    let (w, h) = (skeleton.width(), skeleton.height());
    let img = skeleton.as_slice();
    let mut endpoints = Vec::new();
    let mut branches = Vec::new();
    for i in (0..img.len()).filter(|&i| img[i]) {
        let degree = ring(img, w, h, i).iter().filter(|&&x| x).count();
        match degree {
            0 | 1 => endpoints.push(skeleton.pixel_at(i)),
            d if d >= 3 => branches.push(skeleton.pixel_at(i)),
            _ => {}
        }
    }
    (endpoints, branches)
}

/// One detected protrusion tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtrusionTip {
    pub pixel: Pixel,
    /// Geodesic distance from the body centroid, in µm.
    pub length_um: f64,
}

/// Protrusion tips of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtrusionReport {
    pub label: u32,
    pub centroid: Pixel,
    pub tips: Vec<ProtrusionTip>,
    pub pixel_size: f64,
}

/// Bounding box of the pixels equal to `label`.
fn bounding_box(mask: &LabelMask, label: u32) -> Option<Rect> {
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for (i, &l) in mask.as_slice().iter().enumerate() {
        if l == label {
            let p = mask.pixel_at(i);
            top = top.min(p.row);
            bottom = bottom.max(p.row);
            left = left.min(p.col);
            right = right.max(p.col);
        }
    }
    (top != usize::MAX).then(|| Rect {
        top,
        left,
        height: bottom - top + 1,
        width: right - left + 1,
    })
}

/// Tips of a single cell given as a binary mask. Coordinates are relative to `cell`.
pub fn cell_protrusions(cell: &BinaryMask, pixel_size: f64, min_length_um: f64) -> Result<(Pixel, Vec<ProtrusionTip>)> {
    let centroid = body_centroid(cell)?;
    let geodesic = geodesic_distance(cell, centroid)?;
    let skeleton = skeletonize(cell);
    let tips = skeleton
        .endpoints
        .iter()
        .filter_map(|&p| {
            let d = geodesic.get(p);
            // Endpoints cut off from the body are not protrusions of it.
            if !d.is_finite() {
                return None;
            }
            let length_um = d * pixel_size;
            (length_um >= min_length_um).then_some(ProtrusionTip { pixel: p, length_um })
        })
        .collect();
    Ok((centroid, tips))
}

fn check_protrusion_args(pixel_size: f64, min_length_um: f64) -> Result<()> {
    if !(pixel_size.is_finite() && pixel_size > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pixel size must be positive, got {pixel_size}"
        )));
    }
    if !(min_length_um.is_finite() && min_length_um >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "minimum protrusion length must be non-negative, got {min_length_um}"
        )));
    }
    Ok(())
}

pub fn detect_protrusions(mask: &LabelMask, pixel_size: f64, min_length_um: f64) -> Result<Vec<ProtrusionReport>> {
    detect_protrusions_with(mask, pixel_size, min_length_um, Execution::default())
}

/// Per positive label, in ascending label order.
pub fn detect_protrusions_with(
    mask: &LabelMask,
    pixel_size: f64,
    min_length_um: f64,
    exec: Execution,
) -> Result<Vec<ProtrusionReport>> {
    check_protrusion_args(pixel_size, min_length_um)?;
    let labels: Vec<u32> = mask.labels().into_iter().collect();
    let reports = par::map(exec, &labels, |&label| -> Result<Option<ProtrusionReport>> {
        let Some(bbox) = bounding_box(mask, label) else {
            return Ok(None);
        };
        let cell = mask.crop(bbox)?.select(label);
        let (centroid, tips) = cell_protrusions(&cell, pixel_size, min_length_um)?;
        let shift = |p: Pixel| Pixel::new(p.row + bbox.top, p.col + bbox.left);
        Ok(Some(ProtrusionReport {
            label,
            centroid: shift(centroid),
            tips: tips
                .into_iter()
                .map(|t| ProtrusionTip {
                    pixel: shift(t.pixel),
                    ..t
                })
                .collect(),
            pixel_size,
        }))
    });
    reports.into_iter().filter_map(|r| r.transpose()).collect()
}

pub fn detect_protrusions_video(
    masks: &[LabelMask],
    pixel_size: f64,
    min_length_um: f64,
    exec: Execution,
) -> Result<Vec<Vec<ProtrusionReport>>> {
    check_protrusion_args(pixel_size, min_length_um)?;
    // Frames carry the parallelism; labels within a frame run sequentially.
    let inner = if masks.len() > 1 { Execution::Sequential } else { exec };
    par::map(exec, masks, |m| detect_protrusions_with(m, pixel_size, min_length_um, inner))
        .into_iter()
        .collect()
}

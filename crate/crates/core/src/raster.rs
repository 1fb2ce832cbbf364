//! Raster containers, percentile normalization and component labeling.

use std::collections::BTreeSet;

use crate::{Error, Result, DEFAULT_PIXEL_SIZE_UM};

/// A pixel position, `row` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Straight-line distance in pixels.
    pub fn euclidean(self, other: Pixel) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr.hypot(dc)
    }
}

/// Axis-aligned rectangle; `top`/`left` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn bottom(&self) -> usize {
        self.top + self.height - 1
    }

    pub fn right(&self) -> usize {
        self.left + self.width - 1
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row >= self.top && p.row <= self.bottom() && p.col >= self.left && p.col <= self.right()
    }
}

/// Row-major 2D grid. The concrete raster types in this crate are all grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel instance labels; 0 is background.
pub type LabelMask = Grid<u32>;
/// Foreground/background bits.
pub type BinaryMask = Grid<bool>;
/// Intensities rescaled to `[0, 1]`.
pub type NormalizedFrame = Grid<f64>;

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} grid needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, p: Pixel) -> usize {
        p.row * self.width + p.col
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> Pixel {
        Pixel::new(index / self.width, index % self.width)
    }

    #[inline]
    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: format!("{}x{}", self.width, self.height),
                right: format!("{}x{}", other.width, other.height),
            })
        }
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.width)
    }

    pub fn map<U, F: FnMut(&T) -> U>(&self, f: F) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid must be at least 1x1");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, p: Pixel) -> &T {
        &self.data[p.row * self.width + p.col]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, p: Pixel, value: T) {
        let i = self.index_of(p);
        self.data[i] = value;
    }

    /// Copies a rectangle that must lie fully inside the grid.
    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if rect.width == 0
            || rect.height == 0
            || rect.top + rect.height > self.height
            || rect.left + rect.width > self.width
        {
            return Err(Error::InvalidArgument(format!(
                "crop {rect:?} exceeds {}x{} grid",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(rect.width * rect.height);
        for row in rect.top..rect.top + rect.height {
            let start = row * self.width + rect.left;
            data.extend_from_slice(&self.data[start..start + rect.width]);
        }
        Ok(Self {
            width: rect.width,
            height: rect.height,
            data,
        })
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        Self { data, ..*self }
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let data = self.rows().rev().flatten().cloned().collect();
        Self { data, ..*self }
    }

    /// Quarter turn clockwise; width and height swap.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..w {
            for c in 0..h {
                data.push(self.data[(h - 1 - c) * w + r].clone());
            }
        }
        Self {
            width: h,
            height: w,
            data,
        }
    }
}

/// Sample depth of a [`GrayFrame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            8 => Some(BitDepth::Eight),
            16 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }
}

/// Single-channel intensity image with its spatial calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    grid: Grid<u16>,
    bit_depth: BitDepth,
    pixel_size: f64,
}

impl GrayFrame {
    pub fn new(grid: Grid<u16>, bit_depth: BitDepth) -> Result<Self> {
        Self::with_pixel_size(grid, bit_depth, DEFAULT_PIXEL_SIZE_UM)
    }

    pub fn with_pixel_size(grid: Grid<u16>, bit_depth: BitDepth, pixel_size: f64) -> Result<Self> {
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        let max = bit_depth.max_value();
        if let Some(i) = grid.as_slice().iter().position(|&v| v > max) {
            return Err(Error::InvalidInput(format!(
                "intensity {} at {:?} exceeds {}-bit range",
                grid.as_slice()[i],
                grid.pixel_at(i),
                bit_depth.bits()
            )));
        }
        Ok(Self {
            grid,
            bit_depth,
            pixel_size,
        })
    }

    pub fn from_vec(width: usize, height: usize, bit_depth: BitDepth, data: Vec<u16>) -> Result<Self> {
        Self::new(Grid::from_vec(width, height, data)?, bit_depth)
    }

    /// Quantizes a normalized frame to the full range of `bit_depth`.
    pub fn from_normalized(frame: &NormalizedFrame, bit_depth: BitDepth, pixel_size: f64) -> Result<Self> {
        let max = bit_depth.max_value() as f64;
        let grid = frame.map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16);
        Self::with_pixel_size(grid, bit_depth, pixel_size)
    }

    pub fn grid(&self) -> &Grid<u16> {
        &self.grid
    }

    pub fn into_grid(self) -> Grid<u16> {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    /// µm per pixel.
    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn set_pixel_size(&mut self, pixel_size: f64) -> Result<()> {
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        self.pixel_size = pixel_size;
        Ok(())
    }

    pub fn intensities(&self) -> &[u16] {
        self.grid.as_slice()
    }

    pub fn crop(&self, rect: Rect) -> Result<Self> {
        Ok(Self {
            grid: self.grid.crop(rect)?,
            ..*self
        })
    }
}

fn check_percentiles(p_lo: f64, p_hi: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got ({p_lo}, {p_hi})"
        )));
    }
    Ok(())
}

/// 1-based nearest rank of percentile `p` among `n` sorted samples.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n)
}

fn rescale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Percentile-based contrast stretch to `[0, 1]`.
///
/// Percentiles use the nearest-rank convention. A frame whose two
/// percentiles coincide maps to all zeros.
pub fn normalize_percentile(frame: &GrayFrame, p_lo: f64, p_hi: f64) -> Result<NormalizedFrame> {
    check_percentiles(p_lo, p_hi)?;
    let values = frame.intensities();
    // Counting pass; cheaper than sorting for 16-bit data.
    let mut hist = vec![0usize; frame.bit_depth().max_value() as usize + 1];
    for &v in values {
        hist[v as usize] += 1;
    }
    let n = values.len();
    let value_at_rank = |rank: usize| {
        let mut seen = 0;
        for (v, &count) in hist.iter().enumerate() {
            seen += count;
            if seen >= rank {
                return v as f64;
            }
        }
        unreachable!("rank {rank} beyond {n} samples")
    };
    let lo = value_at_rank(nearest_rank(p_lo, n));
    let hi = value_at_rank(nearest_rank(p_hi, n));
    Ok(frame.grid().map(|&v| rescale(v as f64, lo, hi)))
}

/// [`normalize_percentile`] for real-valued frames.
pub fn renormalize_percentile(frame: &NormalizedFrame, p_lo: f64, p_hi: f64) -> Result<NormalizedFrame> {
    check_percentiles(p_lo, p_hi)?;
    if frame.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in frame".into()));
    }
    let mut scratch = frame.as_slice().to_vec();
    let n = scratch.len();
    let mut select = |rank: usize| *scratch.select_nth_unstable_by(rank - 1, f64::total_cmp).1;
    let lo = select(nearest_rank(p_lo, n));
    let hi = select(nearest_rank(p_hi, n));
    Ok(frame.map(|&v| rescale(v, lo, hi)))
}

/// Pixel adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

/// Labels maximal connected foreground sets 1, 2, ... in raster order of
/// their first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMask {
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.as_slice();
    let mut labels = vec![0u32; fg.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if fg[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    Grid {
        width: w,
        height: h,
        data: labels,
    }
}

impl Grid<u32> {
    /// `label > 0` per pixel.
    pub fn foreground(&self) -> BinaryMask {
        self.map(|&l| l > 0)
    }

    /// Distinct positive labels, ascending.
    pub fn labels(&self) -> BTreeSet<u32> {
        self.as_slice().iter().copied().filter(|&l| l > 0).collect()
    }

    /// Every pixel carrying `label`, in raster order.
    pub fn region_pixels(&self, label: u32) -> Result<Vec<Pixel>> {
        region_pixels(self, label)
    }

    /// Binary mask of one label.
    pub fn select(&self, label: u32) -> BinaryMask {
        self.map(|&l| l == label)
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.as_slice().iter().filter(|&&b| b).count()
    }
}

/// Pixels carrying `label`; empty when the label is absent.
pub fn region_pixels(mask: &LabelMask, label: u32) -> Result<Vec<Pixel>> {
    if label == 0 {
        return Err(Error::InvalidArgument(
            "label 0 is background, not a region".into(),
        ));
    }
    Ok(mask
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
        .map(|(i, _)| mask.pixel_at(i))
        .collect())
}

//! Shared data model: points, masks, score maps and the scatter-region grid.
//!
//! Coordinates follow the pixel-center convention: pixel `(r, c)` has its
//! center at real coordinates `(r, c)`. `x` is the row axis and `y` the
//! column axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Manhattan distance.
    pub fn l1(&self, other: &Point) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub point: Point,
    pub score: f64,
}

impl ScoredPoint {
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Self {
            point: Point::new(x, y),
            score,
        }
    }
}

/// Row-major `height x width` grid of `{0, 1}` values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Parameter(format!("mask value {v} is not binary")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a mask from rows of `0`/`1`; convenient for fixtures.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::Dimension("ragged mask rows".into()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c] != 0
    }

    /// Out-of-image reads are background.
    pub fn get_signed(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.height
            && (c as usize) < self.width
            && self.get(r as usize, c as usize)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.width + c] = v as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "mask shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// Pixelwise intersection count.
    pub fn overlap(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count()
    }
}

/// Row-major `height x width` grid of scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScoreMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "score map data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("score {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    /// Zero outside the image.
    pub fn get_padded(&self, r: isize, c: isize) -> f64 {
        if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
            self.data[r as usize * self.width + c as usize]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.data[r * self.width + c] = v;
    }
}

impl From<&BinaryMask> for ScoreMap {
    fn from(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height,
            width: mask.width,
            data: mask.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionIndex {
    pub row: usize,
    pub col: usize,
}

impl RegionIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Partition of an image into `downsample x downsample` scatter regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGrid {
    image_height: usize,
    image_width: usize,
    downsample: usize,
    grid_height: usize,
    grid_width: usize,
}

impl RegionGrid {
    pub fn new(image_height: usize, image_width: usize, downsample: usize) -> Result<Self> {
        if downsample == 0 {
            return Err(Error::Dimension("downsample must be at least 1".into()));
        }
        if image_height == 0 || image_width == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {image_height}x{image_width}"
            )));
        }
        if !image_height.is_multiple_of(downsample) || !image_width.is_multiple_of(downsample) {
            return Err(Error::Dimension(format!(
                "image {image_height}x{image_width} is not divisible by downsample {downsample}"
            )));
        }
        Ok(Self {
            image_height,
            image_width,
            downsample,
            grid_height: image_height / downsample,
            grid_width: image_width / downsample,
        })
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn downsample(&self) -> usize {
        self.downsample
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn num_regions(&self) -> usize {
        self.grid_height * self.grid_width
    }

    /// Row-major linear index of a region.
    pub fn linear(&self, idx: RegionIndex) -> usize {
        idx.row * self.grid_width + idx.col
    }

    pub fn from_linear(&self, i: usize) -> RegionIndex {
        RegionIndex::new(i / self.grid_width, i % self.grid_width)
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionIndex> + '_ {
        (0..self.num_regions()).map(|i| self.from_linear(i))
    }

    pub fn region_of(&self, p: Point) -> Result<RegionIndex> {
        let in_bounds = p.x >= 0.0
            && p.y >= 0.0
            && p.x < self.image_height as f64
            && p.y < self.image_width as f64;
        if !in_bounds {
            return Err(Error::Bounds(format!(
                "point ({}, {}) outside {}x{} image",
                p.x, p.y, self.image_height, self.image_width
            )));
        }
        let d = self.downsample as f64;
        Ok(RegionIndex::new(
            (p.x / d).floor() as usize,
            (p.y / d).floor() as usize,
        ))
    }

    pub fn region_center(&self, idx: RegionIndex) -> Result<Point> {
        if idx.row >= self.grid_height || idx.col >= self.grid_width {
            return Err(Error::Bounds(format!(
                "region ({}, {}) outside {}x{} grid",
                idx.row, idx.col, self.grid_height, self.grid_width
            )));
        }
        let d = self.downsample as f64;
        let half = (d - 1.0) / 2.0;
        Ok(Point::new(
            d * idx.row as f64 + half,
            d * idx.col as f64 + half,
        ))
    }
}

/// Builds the region grid for an image, requiring exact divisibility.
pub fn make_grid(image_height: usize, image_width: usize, downsample: usize) -> Result<RegionGrid> {
    RegionGrid::new(image_height, image_width, downsample)
}

//! Deterministic synthetic tubular images.
//!
//! Each sample is a small tree of smooth random-walk tubes. The generator
//! draws from `ChaCha8Rng` seeded with `seed_from_u64(seed)` and converts
//! 64-bit outputs to reals as `(u >> 11) * 2^-53`. Geometry uses only
//! `+ - * / sqrt` (rotations are parameterized by the half-angle tangent),
//! so the output is bit-identical on every IEEE-754 platform.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::skeletonize;
use crate::types::{BinaryMask, RegionGrid, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    /// Sizes must be divisible by this.
    pub downsample: usize,
    pub n_branches: usize,
    /// Inclusive range of tube widths in pixels.
    pub width_range: (usize, usize),
    /// Amplitude of the additive uniform noise, in `[0, 1)`.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            height: 48,
            width: 48,
            downsample: 4,
            n_branches: 3,
            width_range: (2, 4),
            noise: 0.1,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        RegionGrid::new(self.height, self.width, self.downsample)?;
        let (lo, hi) = self.width_range;
        // a stroke wider than a region could exceed D^2 points per region
        if lo < 1 || lo > hi || hi > self.downsample.max(1) {
            return Err(Error::Parameter(format!(
                "width range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= {}",
                self.downsample
            )));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Parameter(format!(
                "noise {} outside [0, 1)",
                self.noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// Grayscale intensities; tubes are bright.
    pub image: ScoreMap,
    pub mask: BinaryMask,
    /// One-pixel-wide skeleton of `mask`.
    pub centerline: BinaryMask,
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `lo..=hi`.
    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.unit() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }
}

/// Rotates `(dx, dy)` by the angle whose half-angle tangent is `t`.
fn rotate(d: (f64, f64), t: f64) -> (f64, f64) {
    let denom = 1.0 + t * t;
    let cos = (1.0 - t * t) / denom;
    let sin = 2.0 * t / denom;
    (d.0 * cos - d.1 * sin, d.0 * sin + d.1 * cos)
}

fn normalize(d: (f64, f64)) -> (f64, f64) {
    let len = (d.0 * d.0 + d.1 * d.1).sqrt();
    (d.0 / len, d.1 / len)
}

const STEP: f64 = 0.5;
/// Largest change of the turn rate per step, and the turn-rate bound.
const TURN_JITTER: f64 = 0.004;
const MAX_TURN: f64 = 0.012;

/// Walks from `start` along `dir` until leaving the canvas or `max_len`.
fn walk(
    rng: &mut Rng,
    start: (f64, f64),
    dir: (f64, f64),
    max_len: f64,
    h: f64,
    w: f64,
) -> Vec<(f64, f64)> {
    let mut path = vec![start];
    let (mut p, mut d) = (start, dir);
    let mut turn = rng.range(-MAX_TURN, MAX_TURN);
    let steps = (max_len / STEP) as usize;
    for _ in 0..steps {
        turn = (turn + rng.range(-TURN_JITTER, TURN_JITTER)).clamp(-MAX_TURN, MAX_TURN);
        d = normalize(rotate(d, turn));
        p = (p.0 + STEP * d.0, p.1 + STEP * d.1);
        if p.0 < -0.5 || p.1 < -0.5 || p.0 >= h - 0.5 || p.1 >= w - 0.5 {
            break;
        }
        path.push(p);
    }
    path
}

fn stroke(mask: &mut BinaryMask, path: &[(f64, f64)], tube_width: usize) {
    let radius = tube_width as f64 / 2.0;
    let r2 = radius * radius;
    let reach = radius.ceil() as isize + 1;
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    for &(x, y) in path {
        let (cr, cc) = ((x + 0.5).floor() as isize, (y + 0.5).floor() as isize);
        for r in (cr - reach).max(0)..=(cr + reach).min(h - 1) {
            for c in (cc - reach).max(0)..=(cc + reach).min(w - 1) {
                let (dr, dc) = (r as f64 - x, c as f64 - y);
                if dr * dr + dc * dc <= r2 {
                    mask.set(r as usize, c as usize, true);
                }
            }
        }
    }
}

/// Separable `[1, 2, 1] / 4` blur with zero padding.
fn blur(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    let src: Vec<f64> = mask.data().iter().map(|&v| v as f64).collect();
    let at = |v: &[f64], r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            v[r as usize * w + c as usize]
        }
    };
    let mut tmp = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            tmp[r as usize * w + c as usize] =
                (at(&src, r, c - 1) + 2.0 * at(&src, r, c) + at(&src, r, c + 1)) / 4.0;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            out[r as usize * w + c as usize] =
                (at(&tmp, r - 1, c) + 2.0 * at(&tmp, r, c) + at(&tmp, r + 1, c)) / 4.0;
        }
    }
    out
}

/// A walked centerline and its final heading.
type Walk = (Vec<(f64, f64)>, (f64, f64));

/// Draws the tube mask from the generator state.
fn draw_mask(rng: &mut Rng, params: &SynthParams) -> BinaryMask {
    let (h, w) = (params.height as f64, params.width as f64);
    let mut mask = BinaryMask::zeros(params.height, params.width);
    let mut paths: Vec<Walk> = Vec::new();

    for b in 0..params.n_branches {
        let (start, dir, max_len) = if b == 0 {
            // trunk: enter from a random border point towards a random
            // interior target
            let side = rng.int(0, 3);
            let along = rng.unit();
            let start = match side {
                0 => (0.0, along * (w - 1.0)),
                1 => (h - 1.0, along * (w - 1.0)),
                2 => (along * (h - 1.0), 0.0),
                _ => (along * (h - 1.0), w - 1.0),
            };
            let target = (rng.range(0.3, 0.7) * h, rng.range(0.3, 0.7) * w);
            let dir = normalize((target.0 - start.0, target.1 - start.1));
            (start, dir, 2.0 * (h + w))
        } else {
            // branch off a random interior point of an earlier tube
            let parent = rng.int(0, paths.len() - 1);
            let (path, _) = &paths[parent];
            let at = rng.int(path.len() / 5, (path.len() * 4 / 5).max(path.len() / 5));
            let start = path[at.min(path.len() - 1)];
            let prev = path[at.saturating_sub(1)];
            let heading = if at == 0 {
                paths[parent].1
            } else {
                normalize((start.0 - prev.0, start.1 - prev.1))
            };
            let t = rng.range(0.35, 0.75);
            let t = if rng.unit() < 0.5 { -t } else { t };
            let len = rng.range(0.25, 0.6) * (h + w);
            (start, normalize(rotate(heading, t)), len)
        };
        let path = walk(rng, start, dir, max_len, h, w);
        let tube_width = rng.int(params.width_range.0, params.width_range.1);
        stroke(&mut mask, &path, tube_width);
        paths.push((path, dir));
    }
    mask
}

/// Only the tube mask of [`generate_sample`], without rendering or
/// skeletonization.
pub fn generate_mask(seed: u64, params: &SynthParams) -> Result<BinaryMask> {
    params.validate()?;
    Ok(draw_mask(&mut Rng::new(seed), params))
}

pub fn generate_sample(seed: u64, params: &SynthParams) -> Result<SyntheticSample> {
    params.validate()?;
    let mut rng = Rng::new(seed);
    let mask = draw_mask(&mut rng, params);
    let blurred = blur(&mask);
    let data = blurred
        .iter()
        .map(|&v| {
            let n = params.noise * (2.0 * rng.unit() - 1.0);
            (v + n).clamp(0.0, 1.0)
        })
        .collect();
    let image = ScoreMap::from_vec(params.height, params.width, data)?;
    let centerline = skeletonize(&mask);
    Ok(SyntheticSample {
        image,
        mask,
        centerline,
    })
}

/// `count` samples seeded `seed, seed + 1, ...`.
pub fn generate_dataset(
    seed: u64,
    count: usize,
    params: &SynthParams,
) -> Result<Vec<SyntheticSample>> {
    (0..count as u64)
        .map(|k| generate_sample(seed.wrapping_add(k), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::{group_by_region, mask_to_points};
    use crate::metrics::betti_numbers;

    #[test]
    fn noise_free_image_is_blurred_mask() {
        let params = SynthParams {
            noise: 0.0,
            ..SynthParams::default()
        };
        let s = generate_sample(7, &params).unwrap();
        assert!(!s.mask.is_empty());
        assert_eq!(s.image.data(), &blur(&s.mask)[..]);
        assert!(betti_numbers(&s.centerline).0 <= params.n_branches);
    }

    #[test]
    fn no_branches_gives_empty_sample() {
        let params = SynthParams {
            n_branches: 0,
            ..SynthParams::default()
        };
        let s = generate_sample(1, &params).unwrap();
        assert!(s.mask.is_empty());
        assert!(s.centerline.is_empty());
    }

    #[test]
    fn deterministic() {
        let p = SynthParams::default();
        assert_eq!(
            generate_sample(42, &p).unwrap(),
            generate_sample(42, &p).unwrap()
        );
        assert_ne!(
            generate_sample(42, &p).unwrap(),
            generate_sample(43, &p).unwrap()
        );
        assert!(generate_dataset(3, 0, &p).unwrap().is_empty());
        assert_eq!(
            generate_mask(42, &p).unwrap(),
            generate_sample(42, &p).unwrap().mask
        );
        assert_eq!(
            generate_dataset(3, 10, &p).unwrap(),
            generate_dataset(3, 10, &p).unwrap()
        );
        assert_eq!(
            generate_dataset(3, 2, &p).unwrap()[1],
            generate_sample(4, &p).unwrap()
        );
    }

    #[test]
    fn invalid_parameters() {
        let p = SynthParams {
            height: 50,
            ..SynthParams::default()
        };
        assert!(matches!(generate_sample(0, &p), Err(Error::Dimension(_))));
        let p = SynthParams {
            width_range: (3, 2),
            ..SynthParams::default()
        };
        assert!(matches!(generate_sample(0, &p), Err(Error::Parameter(_))));
        let p = SynthParams {
            noise: 1.0,
            ..SynthParams::default()
        };
        assert!(generate_sample(0, &p).is_err());
    }

    #[test]
    fn foreground_is_thin_and_regions_fit() {
        let p = SynthParams::default();
        let grid = RegionGrid::new(p.height, p.width, p.downsample).unwrap();
        for seed in 0..100 {
            let s = generate_sample(seed, &p).unwrap();
            let frac = s.mask.count_ones() as f64 / (p.height * p.width) as f64;
            assert!(
                frac > 0.0 && frac < 0.5,
                "seed {seed}: foreground fraction {frac}"
            );
            assert_eq!(s.centerline.overlap(&s.mask), s.centerline.count_ones());
            assert_eq!(s.centerline, skeletonize(&s.mask));
            let k = group_by_region(&mask_to_points(&s.mask), &grid)
                .unwrap()
                .max_count();
            assert!(k <= p.downsample * p.downsample);
            assert_eq!(betti_numbers(&s.centerline).0, betti_numbers(&s.mask).0);
        }
    }
}

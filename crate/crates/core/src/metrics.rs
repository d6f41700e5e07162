//! Evaluation metrics: volumetric overlap scores, rank AUC, skeleton-based
//! clDice, Betti numbers and Euler characteristic, and tolerance-region
//! centerline scores.
//!
//! Foreground uses 8-connectivity and background 4-connectivity; the image
//! is treated as embedded in an infinite background.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::convert::threshold_map;
use crate::error::{Error, Result};
use crate::types::{BinaryMask, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion> {
    pred.check_shape(gt)?;
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `num / den`, where `0 / 0` is `if_empty`.
fn ratio(num: usize, den: usize, if_empty: f64) -> f64 {
    if den == 0 {
        if_empty
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion_counts(pred, gt)?;
    Ok(ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, 1.0))
}

pub fn accuracy(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion_counts(pred, gt)?;
    Ok(ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_, 1.0))
}

pub fn precision(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion_counts(pred, gt)?;
    let both_empty = c.tp + c.fp + c.fn_ == 0;
    Ok(ratio(c.tp, c.tp + c.fp, if both_empty { 1.0 } else { 0.0 }))
}

pub fn recall(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion_counts(pred, gt)?;
    let both_empty = c.tp + c.fp + c.fn_ == 0;
    Ok(ratio(
        c.tp,
        c.tp + c.fn_,
        if both_empty { 1.0 } else { 0.0 },
    ))
}

/// Rank-statistic AUC: the probability that a random positive pixel scores
/// above a random negative one, ties counting one half.
pub fn auc(map: &ScoreMap, gt: &BinaryMask) -> Result<f64> {
    if map.height() != gt.height() || map.width() != gt.width() {
        return Err(Error::Dimension(format!(
            "score map {}x{} vs mask {}x{}",
            map.height(),
            map.width(),
            gt.height(),
            gt.width()
        )));
    }
    let pos = gt.count_ones();
    let neg = gt.data().len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative pixels".into(),
        ));
    }
    let mut order: Vec<(f64, bool)> = map
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&s, &g)| (s, g != 0))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // midranks, 1-based
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].0 == order[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|e| e.1).count();
        pos_rank_sum += mid * positives as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Neighbours of `(r, c)` clockwise from north: N, NE, E, SE, S, SW, W, NW.
fn ring(mask: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    let (r, c) = (r as isize, c as isize);
    [
        mask.get_signed(r - 1, c),
        mask.get_signed(r - 1, c + 1),
        mask.get_signed(r, c + 1),
        mask.get_signed(r + 1, c + 1),
        mask.get_signed(r + 1, c),
        mask.get_signed(r + 1, c - 1),
        mask.get_signed(r, c - 1),
        mask.get_signed(r - 1, c - 1),
    ]
}

/// Whether removing a foreground pixel with this neighbourhood leaves the
/// 8/4 topology unchanged: its foreground neighbours form one 8-connected
/// group and exactly one 4-connected background group touches it.
fn is_simple(n: &[bool; 8]) -> bool {
    // Yokoi connectivity number for 8-connectivity, computed on the
    // complemented neighbourhood: sum over the 4-neighbours k of
    // ~x_k - ~x_k * ~x_{k+1} * ~x_{k+2}.
    let b = |i: usize| !n[i % 8] as i32;
    let yokoi: i32 = [0, 2, 4, 6]
        .iter()
        .map(|&k| b(k) - b(k) * b(k + 1) * b(k + 2))
        .sum();
    yokoi == 1
}

/// Thins the foreground to a one-pixel-wide skeleton.
///
/// Two alternating subiterations mark boundary pixels by the Zhang-Suen
/// neighbourhood conditions (south-east boundary first, then north-west).
/// Marked pixels are then removed one at a time, each only if it is still a
/// simple non-end pixel, so components and holes survive thinning.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    let (h, w) = (mask.height(), mask.width());
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            marked.clear();
            for r in 0..h {
                for c in 0..w {
                    if !out.get(r, c) {
                        continue;
                    }
                    let n = ring(&out, r, c);
                    let count = n.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&count) {
                        continue;
                    }
                    let transitions = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    if transitions != 1 {
                        continue;
                    }
                    let (north, east, south, west) = (n[0], n[2], n[4], n[6]);
                    let keep = if pass == 0 {
                        (north && east && south) || (east && south && west)
                    } else {
                        (north && east && west) || (north && south && west)
                    };
                    if !keep {
                        marked.push((r, c));
                    }
                }
            }
            for &(r, c) in &marked {
                let n = ring(&out, r, c);
                let count = n.iter().filter(|&&v| v).count();
                if count >= 2 && is_simple(&n) {
                    out.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// clDice: harmonic mean of skeleton precision and skeleton sensitivity.
pub fn cl_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.check_shape(gt)?;
    let skel_pred = skeletonize(pred);
    let skel_gt = skeletonize(gt);
    let (np, ng) = (skel_pred.count_ones(), skel_gt.count_ones());
    match (np, ng) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let tprec = skel_pred.overlap(gt) as f64 / np as f64;
    let tsens = skel_gt.overlap(pred) as f64 / ng as f64;
    Ok(harmonic(tprec, tsens))
}

/// Connected-component count by breadth-first flood fill over the pixels
/// where `inside` holds. `padded` surrounds the image with a one-pixel
/// frame of such pixels.
fn count_components(mask: &BinaryMask, want: bool, eight: bool, padded: bool) -> usize {
    let pad = padded as usize;
    let (h, w) = (mask.height() + 2 * pad, mask.width() + 2 * pad);
    let value = |r: usize, c: usize| -> bool {
        if padded && (r == 0 || c == 0 || r == h - 1 || c == w - 1) {
            true
        } else {
            mask.get(r - pad, c - pad) == want
        }
    };
    const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const N8: [(isize, isize); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    let offsets: &[(isize, isize)] = if eight { &N8 } else { &N4 };
    let mut seen = vec![false; h * w];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..h * w {
        if seen[start] || !value(start / w, start % w) {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !seen[j] && value(nr as usize, nc as usize) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    components
}

/// `(beta0, beta1)`: 8-connected foreground components and holes.
pub fn betti_numbers(mask: &BinaryMask) -> (usize, usize) {
    let beta0 = count_components(mask, true, true, false);
    // the frame joins all border-touching background into the outer component
    let background = count_components(mask, false, false, true);
    (beta0, background - 1)
}

pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let (b0, b1) = betti_numbers(mask);
    b0 as i64 - b1 as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TopologyErrors {
    pub betti0_error: f64,
    pub betti1_error: f64,
    pub euler_error: f64,
}

/// Per-pair absolute differences of `(beta0, beta1, chi)`.
pub fn topology_error(pred: &BinaryMask, gt: &BinaryMask) -> Result<TopologyErrors> {
    pred.check_shape(gt)?;
    let (p0, p1) = betti_numbers(pred);
    let (g0, g1) = betti_numbers(gt);
    let chi_p = p0 as i64 - p1 as i64;
    let chi_g = g0 as i64 - g1 as i64;
    Ok(TopologyErrors {
        betti0_error: p0.abs_diff(g0) as f64,
        betti1_error: p1.abs_diff(g1) as f64,
        euler_error: chi_p.abs_diff(chi_g) as f64,
    })
}

/// Mean topology errors over paired masks.
pub fn topology_errors(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<TopologyErrors> {
    if preds.len() != gts.len() {
        return Err(Error::Pairing(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    let mut sum = TopologyErrors::default();
    for (p, g) in preds.iter().zip(gts) {
        let e = topology_error(p, g)?;
        sum.betti0_error += e.betti0_error;
        sum.betti1_error += e.betti1_error;
        sum.euler_error += e.euler_error;
    }
    let n = preds.len().max(1) as f64;
    Ok(TopologyErrors {
        betti0_error: sum.betti0_error / n,
        betti1_error: sum.betti1_error / n,
        euler_error: sum.euler_error / n,
    })
}

/// Adds every pixel within Euclidean distance `radius` of the foreground.
pub fn dilate(mask: &BinaryMask, radius: f64) -> Result<BinaryMask> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::Parameter(format!("radius {radius} must be >= 0")));
    }
    let reach = radius.floor() as isize;
    let r2 = radius * radius;
    let offsets: Vec<(isize, isize)> = (-reach..=reach)
        .flat_map(|dr| (-reach..=reach).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64) <= r2)
        .collect();
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let mut out = mask.clone();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r as usize, c as usize) {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr >= 0 && nc >= 0 && nr < h && nc < w {
                    out.set(nr as usize, nc as usize, true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerantScores {
    pub precision: f64,
    pub recall: f64,
    pub dice: f64,
}

/// Centerline precision/recall where a pixel counts as correct when it lies
/// within `radius` of the other mask.
pub fn tolerant_centerline_scores(
    pred: &BinaryMask,
    gt_centerline: &BinaryMask,
    radius: f64,
) -> Result<TolerantScores> {
    pred.check_shape(gt_centerline)?;
    let (np, ng) = (pred.count_ones(), gt_centerline.count_ones());
    if np == 0 && ng == 0 {
        return Ok(TolerantScores {
            precision: 1.0,
            recall: 1.0,
            dice: 1.0,
        });
    }
    let precision = ratio(pred.overlap(&dilate(gt_centerline, radius)?), np, 0.0);
    let recall = ratio(gt_centerline.overlap(&dilate(pred, radius)?), ng, 0.0);
    Ok(TolerantScores {
        precision,
        recall,
        dice: harmonic(precision, recall),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumetricScores {
    /// `None` when the GT mask has a single class.
    pub auc: Option<f64>,
    pub dice: f64,
    pub cl_dice: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Scores a predicted score map against a GT mask: AUC on the raw map, the
/// rest on the map thresholded at `threshold`.
pub fn volumetric_scores(
    map: &ScoreMap,
    gt: &BinaryMask,
    threshold: f64,
) -> Result<VolumetricScores> {
    let pred = threshold_map(map, threshold);
    let auc = match auc(map, gt) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(VolumetricScores {
        auc,
        dice: dice(&pred, gt)?,
        cl_dice: cl_dice(&pred, gt)?,
        accuracy: accuracy(&pred, gt)?,
        precision: precision(&pred, gt)?,
        recall: recall(&pred, gt)?,
    })
}

//! Training objective: focal objectness loss over every prediction slot plus
//! L1 regression on matched slots, normalized by the number of GT points.
//!
//! The assignment is recomputed from the current predictions on every call
//! and treated as a constant when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{batched_greedy_packed, CostBatch, MatchResult};
use crate::types::Point;

/// Hyperparameters of the matching cost and the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub eta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            eta: 0.8,
            lambda: 10.0,
            alpha: 0.6,
            gamma: 2.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Parameter(format!("eta {} outside [0, 1]", self.eta)));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Parameter(format!(
                "lambda {} is negative",
                self.lambda
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::Parameter(format!(
                "gamma {} is negative",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Sum of focal losses over all slots.
    pub objectness: f64,
    /// Sum of L1 distances over matched slots.
    pub regression: f64,
    /// `(objectness + lambda * regression) / max(1, gt_count)`.
    pub total: f64,
    pub gt_count: usize,
}

/// Raw network outputs for one scatter region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPrediction {
    pub logits: Vec<f64>,
    pub points: Vec<Point>,
}

impl RegionPrediction {
    pub fn slots(&self) -> usize {
        self.logits.len()
    }
}

/// Gradient of the total loss with respect to one region's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrad {
    pub logits: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl RegionGrad {
    pub fn zeros(slots: usize) -> Self {
        Self {
            logits: vec![0.0; slots],
            points: vec![[0.0; 2]; slots],
        }
    }
}

/// Slot targets of one region after matching.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignedTargets {
    /// `(slot, gt point)` pairs with class target 1.
    pub positives: Vec<(usize, Point)>,
    /// Slots labelled "no point" (class target 0).
    pub negatives: Vec<usize>,
}

impl AssignedTargets {
    pub fn from_match(gts: &[Point], m: &MatchResult) -> Self {
        Self {
            positives: m
                .assignment
                .iter()
                .zip(gts)
                .map(|(&slot, &g)| (slot, g))
                .collect(),
            negatives: m.unmatched.clone(),
        }
    }
}

/// Loss, its gradients, and the assignment that produced them.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub grads: Vec<RegionGrad>,
    pub targets: Vec<AssignedTargets>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Focal loss of one logit and its derivative with respect to the logit.
///
/// `alpha` weights the positive term and `1 - alpha` the negative one. The
/// logs are taken through softplus, so saturated logits never hit `ln(0)`.
pub fn focal_loss(logit: f64, target: bool, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let q = sigmoid(-logit);
    if target {
        // -ln p = softplus(-z)
        let nll = softplus(-logit);
        let w = q.powf(gamma);
        let loss = alpha * w * nll;
        let grad = -alpha * w * (gamma * p * nll + q);
        (loss, grad)
    } else {
        let nll = softplus(logit);
        let w = p.powf(gamma);
        let loss = (1.0 - alpha) * w * nll;
        let grad = (1.0 - alpha) * w * (gamma * q * nll + p);
        (loss, grad)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// L1 distance and its subgradient with respect to `pred`; `sign(0) = 0`.
pub fn regression_loss(pred: Point, target: Point) -> (f64, [f64; 2]) {
    let dx = pred.x - target.x;
    let dy = pred.y - target.y;
    (dx.abs() + dy.abs(), [sign(dx), sign(dy)])
}

/// Combined loss for fixed targets. Regions in `preds` and `targets` are
/// aligned; any number of images may be concatenated, and the result is
/// normalized by the GT points of all of them together.
pub fn total_loss(
    preds: &[RegionPrediction],
    targets: &[AssignedTargets],
    params: &LossParams,
) -> Result<(LossBreakdown, Vec<RegionGrad>)> {
    params.validate()?;
    if preds.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} prediction regions but {} target regions",
            preds.len(),
            targets.len()
        )));
    }
    let gt_count: usize = targets.iter().map(|t| t.positives.len()).sum();
    let denom = gt_count.max(1) as f64;

    let mut objectness = 0.0;
    let mut regression = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (pred, tgt) in preds.iter().zip(targets) {
        let slots = pred.slots();
        if pred.points.len() != slots {
            return Err(Error::Dimension("logit and point counts differ".into()));
        }
        if tgt.positives.len() + tgt.negatives.len() != slots {
            return Err(Error::Contract(format!(
                "targets cover {} slots, region has {slots}",
                tgt.positives.len() + tgt.negatives.len()
            )));
        }
        let mut g = RegionGrad::zeros(slots);
        for &(slot, gt) in &tgt.positives {
            let (l, dl) = focal_loss(pred.logits[slot], true, params.alpha, params.gamma);
            objectness += l;
            g.logits[slot] = dl / denom;
            let (r, dr) = regression_loss(pred.points[slot], gt);
            regression += r;
            g.points[slot] = [params.lambda * dr[0] / denom, params.lambda * dr[1] / denom];
        }
        for &slot in &tgt.negatives {
            let (l, dl) = focal_loss(pred.logits[slot], false, params.alpha, params.gamma);
            objectness += l;
            g.logits[slot] = dl / denom;
        }
        grads.push(g);
    }
    let breakdown = LossBreakdown {
        objectness,
        regression,
        total: (objectness + params.lambda * regression) / denom,
        gt_count,
    };
    Ok((breakdown, grads))
}

/// Matches every region with greedy assignment and evaluates the loss.
///
/// `gts[b]` are the GT points of region `b`, `preds[b]` its predictions.
/// Costs use the current scores `sigmoid(logit)` and point positions.
pub fn assign_and_loss(
    gts: &[Vec<Point>],
    preds: &[RegionPrediction],
    params: &LossParams,
) -> Result<LossOutput> {
    params.validate()?;
    if gts.len() != preds.len() {
        return Err(Error::Dimension(format!(
            "{} GT regions but {} prediction regions",
            gts.len(),
            preds.len()
        )));
    }
    let n = preds.first().map_or(0, RegionPrediction::slots);
    let mut batch = CostBatch::new(n);
    let mut rows = Vec::new();
    for (b, (gt, pred)) in gts.iter().zip(preds).enumerate() {
        if pred.slots() != n || pred.points.len() != n {
            return Err(Error::Dimension(format!(
                "region {b} has {} slots, expected {n}",
                pred.slots()
            )));
        }
        if gt.len() > n {
            return Err(Error::Capacity(format!(
                "region {b} has {} ground-truth points but only {n} slots",
                gt.len()
            )));
        }
        rows.clear();
        let scores: Vec<f64> = pred.logits.iter().map(|&z| sigmoid(z)).collect();
        for g in gt {
            for (p, &s) in pred.points.iter().zip(&scores) {
                let c = g.l1(p).powf(params.eta) * (1.0 - s).powf(1.0 - params.eta);
                if !c.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite matching cost in region {b}"
                    )));
                }
                rows.push(c);
            }
        }
        batch.push_rows(gt.len(), &rows);
    }
    let matches = batched_greedy_packed(&batch);
    let targets: Vec<AssignedTargets> = gts
        .iter()
        .zip(&matches)
        .map(|(g, m)| AssignedTargets::from_match(g, m))
        .collect();
    let (breakdown, grads) = total_loss(preds, &targets, params)?;
    Ok(LossOutput {
        breakdown,
        grads,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{cost_matrix, greedy_match};
    use crate::types::ScoredPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Naive focal loss written straight from the definition.
    fn focal_naive(z: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
        let p = 1.0 / (1.0 + (-z).exp());
        if target {
            -alpha * (1.0 - p).powf(gamma) * p.ln()
        } else {
            -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
        }
    }

    #[test]
    fn focal_values() {
        let (l, _) = focal_loss(0.0, true, 0.6, 2.0);
        assert!((l - 0.6 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.10397).abs() < 1e-5);
        let (l, g) = focal_loss(800.0, true, 0.6, 2.0);
        assert_eq!(l, 0.0);
        assert_eq!(g, 0.0);
        let (l, g) = focal_loss(-800.0, false, 0.6, 2.0);
        assert_eq!((l, g), (0.0, 0.0));
        // saturated the wrong way: finite, large
        let (l, g) = focal_loss(-800.0, true, 0.6, 2.0);
        assert!((l - 0.6 * 800.0).abs() < 1e-9);
        assert!((g + 0.6).abs() < 1e-9);
    }

    #[test]
    fn focal_matches_naive_form() {
        for &z in &[-6.0, -1.3, 0.0, 0.4, 2.5, 7.0] {
            for &t in &[true, false] {
                for &(a, gm) in &[(0.6, 2.0), (0.7, 0.0), (0.25, 1.5)] {
                    let (l, _) = focal_loss(z, t, a, gm);
                    assert!((l - focal_naive(z, t, a, gm)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-6;
        for _ in 0..500 {
            let z = rng.gen_range(-8.0..8.0);
            let t = rng.gen::<bool>();
            let a = rng.gen_range(0.05..0.95);
            let gm = rng.gen_range(0.0..4.0);
            let (_, g) = focal_loss(z, t, a, gm);
            let fd = (focal_naive(z + h, t, a, gm) - focal_naive(z - h, t, a, gm)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "z={z} t={t} a={a} gamma={gm}: {g} vs {fd}");
        }
    }

    #[test]
    fn regression_values() {
        let p = Point::new(1.0, 2.0);
        assert_eq!(regression_loss(p, p), (0.0, [0.0, 0.0]));
        assert_eq!(
            regression_loss(Point::new(4.0, 4.0), Point::new(2.0, 3.0)),
            (3.0, [1.0, 1.0])
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..200 {
            let p = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let t = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            if (p.x - t.x).abs() < 1e-3 || (p.y - t.y).abs() < 1e-3 {
                continue;
            }
            let (_, g) = regression_loss(p, t);
            let fx =
                (Point::new(p.x + h, p.y).l1(&t) - Point::new(p.x - h, p.y).l1(&t)) / (2.0 * h);
            let fy =
                (Point::new(p.x, p.y + h).l1(&t) - Point::new(p.x, p.y - h).l1(&t)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
        }
    }

    #[test]
    fn single_region_total() {
        let preds = [RegionPrediction {
            logits: vec![0.0],
            points: vec![Point::new(4.0, 4.0)],
        }];
        let targets = [AssignedTargets {
            positives: vec![(0, Point::new(2.0, 3.0))],
            negatives: vec![],
        }];
        let (b, _) = total_loss(&preds, &targets, &LossParams::default()).unwrap();
        let focal = 0.6 * 0.25 * 2f64.ln();
        assert!((b.total - (focal + 30.0)).abs() < 1e-12);
        assert!((b.total - 30.104).abs() < 1e-3);
        assert_eq!(b.gt_count, 1);
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let gt = Point::new(1.0, 1.0);
        let preds = [RegionPrediction {
            logits: vec![800.0, -800.0],
            points: vec![gt, Point::new(0.0, 0.0)],
        }];
        let targets = [AssignedTargets {
            positives: vec![(0, gt)],
            negatives: vec![1],
        }];
        let (b, g) = total_loss(&preds, &targets, &LossParams::default()).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(g[0].logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gt_uses_unit_denominator() {
        let preds = vec![RegionPrediction {
            logits: vec![0.3, -1.0],
            points: vec![Point::new(0.0, 0.0); 2],
        }];
        let out = assign_and_loss(&[vec![]], &preds, &LossParams::default()).unwrap();
        let expect = focal_loss(0.3, false, 0.6, 2.0).0 + focal_loss(-1.0, false, 0.6, 2.0).0;
        assert_eq!(out.breakdown.gt_count, 0);
        assert_eq!(out.breakdown.regression, 0.0);
        assert!((out.breakdown.total - expect).abs() < 1e-15);
        assert!(out.grads[0].points.iter().all(|g| *g == [0.0, 0.0]));
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let params = LossParams {
            lambda: -1.0,
            ..LossParams::default()
        };
        assert!(matches!(
            total_loss(&[], &[], &params),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn capacity_is_checked() {
        let preds = vec![RegionPrediction {
            logits: vec![0.0],
            points: vec![Point::new(0.0, 0.0)],
        }];
        let gts = vec![vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]];
        assert!(matches!(
            assign_and_loss(&gts, &preds, &LossParams::default()),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn assignment_follows_greedy_on_current_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = LossParams::default();
        for _ in 0..50 {
            let n = 6;
            let k = rng.gen_range(0..=n);
            let gts: Vec<Point> = (0..k)
                .map(|_| Point::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)))
                .collect();
            let pred = RegionPrediction {
                logits: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                points: (0..n)
                    .map(|_| Point::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)))
                    .collect(),
            };
            let scored: Vec<ScoredPoint> = pred
                .points
                .iter()
                .zip(&pred.logits)
                .map(|(p, &z)| ScoredPoint {
                    point: *p,
                    score: sigmoid(z),
                })
                .collect();
            let expect = greedy_match(&cost_matrix(&gts, &scored, params.eta).unwrap());
            let out = assign_and_loss(std::slice::from_ref(&gts), &[pred], &params).unwrap();
            assert_eq!(out.targets[0], AssignedTargets::from_match(&gts, &expect));
        }
    }

    #[test]
    fn score_change_can_flip_the_assignment() {
        // Two slots at equal distance from a single GT: the higher score wins.
        let gts = vec![vec![Point::new(0.0, 0.0)]];
        let make = |z0: f64, z1: f64| RegionPrediction {
            logits: vec![z0, z1],
            points: vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
        };
        let params = LossParams::default();
        let a = assign_and_loss(&gts, &[make(0.0, 0.0)], &params).unwrap();
        assert_eq!(a.targets[0].positives[0].0, 0);
        let b = assign_and_loss(&gts, &[make(0.0, 0.1)], &params).unwrap();
        assert_eq!(b.targets[0].positives[0].0, 1);
    }

    #[test]
    fn normalization_is_invariant_to_replication() {
        let gts = vec![vec![Point::new(0.0, 0.0), Point::new(1.0, 2.0)]];
        let pred = RegionPrediction {
            logits: vec![0.5, -0.2, 1.0],
            points: vec![
                Point::new(0.3, 0.1),
                Point::new(2.0, 2.0),
                Point::new(1.0, 1.5),
            ],
        };
        let params = LossParams::default();
        let one = assign_and_loss(&gts, std::slice::from_ref(&pred), &params)
            .unwrap()
            .breakdown;
        for m in 2..5 {
            let many = assign_and_loss(&vec![gts[0].clone(); m], &vec![pred.clone(); m], &params)
                .unwrap()
                .breakdown;
            assert!((many.objectness - m as f64 * one.objectness).abs() < 1e-12);
            assert!((many.regression - m as f64 * one.regression).abs() < 1e-12);
            assert!((many.total - one.total).abs() < 1e-12);
        }
    }

    /// Total loss at a frozen assignment, for finite differences.
    fn frozen_total(preds: &[RegionPrediction], targets: &[AssignedTargets]) -> f64 {
        total_loss(preds, targets, &LossParams::default())
            .unwrap()
            .0
            .total
    }

    #[test]
    fn pipeline_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        let gts = vec![vec![Point::new(1.0, 2.0), Point::new(3.0, 0.0)], vec![]];
        let preds: Vec<RegionPrediction> = (0..2)
            .map(|_| RegionPrediction {
                logits: (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                points: (0..4)
                    .map(|_| {
                        Point::new(
                            rng.gen_range(0.0..4.0) + 0.01,
                            rng.gen_range(0.0..4.0) + 0.01,
                        )
                    })
                    .collect(),
            })
            .collect();
        let out = assign_and_loss(&gts, &preds, &LossParams::default()).unwrap();
        for b in 0..2 {
            for s in 0..4 {
                let mut plus = preds.clone();
                let mut minus = preds.clone();
                plus[b].logits[s] += h;
                minus[b].logits[s] -= h;
                let fd = (frozen_total(&plus, &out.targets) - frozen_total(&minus, &out.targets))
                    / (2.0 * h);
                let g = out.grads[b].logits[s];
                assert!((g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()).max(1e-8));
                for axis in 0..2 {
                    let mut plus = preds.clone();
                    let mut minus = preds.clone();
                    if axis == 0 {
                        plus[b].points[s].x += h;
                        minus[b].points[s].x -= h;
                    } else {
                        plus[b].points[s].y += h;
                        minus[b].points[s].y -= h;
                    }
                    let fd = (frozen_total(&plus, &out.targets)
                        - frozen_total(&minus, &out.targets))
                        / (2.0 * h);
                    let g = out.grads[b].points[s][axis];
                    assert!((g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()).max(1e-8));
                }
            }
        }
        // unmatched slots get no offset gradient
        for t in &out.targets[0].negatives {
            assert_eq!(out.grads[0].points[*t], [0.0, 0.0]);
        }
        assert!(out.grads[1].points.iter().all(|g| *g == [0.0, 0.0]));
    }
}

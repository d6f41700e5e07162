//! Matching benchmark: batched greedy against per-region Hungarian on cost
//! matrices shaped like training data.
//!
//! Ground truth comes from synthetic tube masks at the benchmark size, so the
//! per-region point counts follow the training distribution. Each region
//! gets `n` predictions at uniform offsets within one region width of its
//! center, with uniform scores.

use std::time::Instant;

use pointscatter::convert::{group_by_region, mask_to_points};
use pointscatter::matching::{
    batched_greedy_threaded, cost_matrix, hungarian_match, CostBatch, CostMatrix, MatchResult,
};
use pointscatter::synth::{generate_mask, SynthParams};
use pointscatter::{RegionGrid, ScoredPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub image_sizes: Vec<usize>,
    pub downsample: usize,
    pub n: usize,
    pub batch: usize,
    pub repeats: usize,
    pub eta: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            image_sizes: vec![384, 768, 1024],
            downsample: 4,
            n: 16,
            batch: 4,
            repeats: 3,
            eta: 0.8,
            seed: 0,
            threads: 1,
        }
    }
}

/// Layout parameters used to synthesize the benchmark GT, recorded in the
/// manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchDistribution {
    pub branches_per_48px: f64,
    pub width_range: (usize, usize),
    pub prediction_offset_range: f64,
    pub score_distribution: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub method: String,
    pub seconds: f64,
    /// Hungarian time over this method's time.
    pub speedup: f64,
    pub total_cost: f64,
    /// Relative excess of this method's total cost over the optimum.
    pub optimality_gap: f64,
    pub regions: usize,
    pub gt_points: usize,
}

pub fn distribution(cfg: &BenchConfig) -> BenchDistribution {
    BenchDistribution {
        branches_per_48px: 3.0,
        width_range: (2, 4.min(cfg.downsample)),
        prediction_offset_range: cfg.downsample as f64,
        score_distribution: "uniform[0,1)".into(),
    }
}

/// Cost matrices of every region of `batch` synthetic images.
pub fn build_costs(cfg: &BenchConfig, size: usize) -> CliResult<Vec<CostMatrix>> {
    let grid = RegionGrid::new(size, size, cfg.downsample)?;
    let dist = distribution(cfg);
    let params = SynthParams {
        height: size,
        width: size,
        downsample: cfg.downsample,
        n_branches: ((size as f64 / 48.0) * dist.branches_per_48px)
            .round()
            .max(1.0) as usize,
        width_range: dist.width_range,
        noise: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ size as u64);
    let reach = dist.prediction_offset_range;
    let mut costs = Vec::with_capacity(cfg.batch * grid.num_regions());
    for b in 0..cfg.batch {
        let mask = generate_mask(cfg.seed.wrapping_add(b as u64), &params)?;
        let sets = group_by_region(&mask_to_points(&mask), &grid)?;
        for (idx, gts) in grid.regions().zip(sets.regions()) {
            let c = grid.region_center(idx)?;
            let preds: Vec<ScoredPoint> = (0..cfg.n)
                .map(|_| {
                    ScoredPoint::new(
                        c.x + rng.gen_range(-reach..reach),
                        c.y + rng.gen_range(-reach..reach),
                        rng.gen::<f64>(),
                    )
                })
                .collect();
            costs.push(cost_matrix(gts, &preds, cfg.eta)?);
        }
    }
    Ok(costs)
}

fn total(costs: &[CostMatrix], results: &[MatchResult]) -> f64 {
    costs
        .iter()
        .zip(results)
        .map(|(c, r)| r.total_cost(c))
        .sum()
}

/// Times both solvers at one image size; the best of `repeats` runs counts.
pub fn bench_size(cfg: &BenchConfig, size: usize) -> CliResult<Vec<BenchRow>> {
    let costs = build_costs(cfg, size)?;
    let batch = CostBatch::from_matrices(&costs)?;
    let gt_points: usize = costs.iter().map(CostMatrix::k).sum();
    let repeats = cfg.repeats.max(1);

    let mut greedy_best = f64::INFINITY;
    let mut assignment = None;
    for _ in 0..repeats {
        let t = Instant::now();
        let solved = batched_greedy_threaded(&batch, cfg.threads);
        greedy_best = greedy_best.min(t.elapsed().as_secs_f64());
        assignment = Some(solved);
    }
    let greedy = assignment.map(|a| a.into_results()).unwrap_or_default();

    let mut hungarian_best = f64::INFINITY;
    let mut hungarian = Vec::new();
    for _ in 0..repeats {
        let t = Instant::now();
        hungarian = costs.iter().map(hungarian_match).collect::<Vec<_>>();
        hungarian_best = hungarian_best.min(t.elapsed().as_secs_f64());
    }

    let greedy_cost = total(&costs, &greedy);
    let optimal = total(&costs, &hungarian);
    let gap = |c: f64| {
        if optimal > 0.0 {
            c / optimal - 1.0
        } else {
            0.0
        }
    };
    Ok(vec![
        BenchRow {
            size,
            method: "greedy".into(),
            seconds: greedy_best,
            speedup: hungarian_best / greedy_best,
            total_cost: greedy_cost,
            optimality_gap: gap(greedy_cost),
            regions: costs.len(),
            gt_points,
        },
        BenchRow {
            size,
            method: "hungarian".into(),
            seconds: hungarian_best,
            speedup: 1.0,
            total_cost: optimal,
            optimality_gap: 0.0,
            regions: costs.len(),
            gt_points,
        },
    ])
}

pub fn run(cfg: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &size in &cfg.image_sizes {
        rows.extend(bench_size(cfg, size)?);
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "size,method,seconds,speedup,total_cost,optimality_gap,regions,gt_points";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.2},{:.6},{:.6},{},{}\n",
            r.size,
            r.method,
            r.seconds,
            r.speedup,
            r.total_cost,
            r.optimality_gap,
            r.regions,
            r.gt_points
        ));
    }
    out
}

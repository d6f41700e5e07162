//! Region-wise point-set prediction for thin tubular structures.
//!
//! An image is tiled into `D x D` scatter regions. Each region predicts a
//! fixed number of points (an offset from the region center plus an
//! objectness score). Training matches ground-truth pixels to prediction
//! slots per region with greedy bipartite matching and optimizes a focal
//! objectness loss plus an L1 regression loss. At inference, low-scoring
//! points are dropped and the rest are rasterized back into a score map for
//! mask-style evaluation.
//!
//! Modules:
//! - [`types`]: points, masks, score maps and the region grid.
//! - [`convert`]: mask/point conversions and rasterization.
//! - [`matching`]: assignment costs, greedy, batched greedy, Hungarian.
//! - [`losses`]: focal and L1 losses with exact gradients.
//! - [`metrics`]: Dice, clDice, AUC, Betti/Euler errors, tolerant scores.
//! - [`synth`]: deterministic synthetic tubular images.
//! - [`model`]: the patch-wise predictor and its training loop.

pub mod convert;
pub mod error;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{make_grid, BinaryMask, Point, RegionGrid, RegionIndex, ScoreMap, ScoredPoint};

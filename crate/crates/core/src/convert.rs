//! Conversions between the mask and point-set representations.

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Point, RegionGrid, RegionIndex, ScoreMap, ScoredPoint};

/// Points bucketed by scatter region, stored in row-major region order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPointSets<P> {
    grid: RegionGrid,
    per_region: Vec<Vec<P>>,
}

impl<P> RegionPointSets<P> {
    pub fn empty(grid: RegionGrid) -> Self {
        let per_region = (0..grid.num_regions()).map(|_| Vec::new()).collect();
        Self { grid, per_region }
    }

    pub fn from_regions(grid: RegionGrid, per_region: Vec<Vec<P>>) -> Result<Self> {
        if per_region.len() != grid.num_regions() {
            return Err(Error::Dimension(format!(
                "{} region lists for a grid of {} regions",
                per_region.len(),
                grid.num_regions()
            )));
        }
        Ok(Self { grid, per_region })
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn get(&self, idx: RegionIndex) -> &[P] {
        &self.per_region[self.grid.linear(idx)]
    }

    /// Region lists in row-major order.
    pub fn regions(&self) -> &[Vec<P>] {
        &self.per_region
    }

    pub fn total(&self) -> usize {
        self.per_region.iter().map(Vec::len).sum()
    }

    pub fn max_count(&self) -> usize {
        self.per_region.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// One point per foreground pixel, at the pixel's integer coordinates, in
/// row-major order.
pub fn mask_to_points(mask: &BinaryMask) -> Vec<Point> {
    let mut out = Vec::with_capacity(mask.count_ones());
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                out.push(Point::new(r as f64, c as f64));
            }
        }
    }
    out
}

/// Partitions points by the region containing them. Input order is kept
/// within each region.
pub fn group_by_region(points: &[Point], grid: &RegionGrid) -> Result<RegionPointSets<Point>> {
    let mut sets = RegionPointSets::empty(*grid);
    for &p in points {
        let idx = grid.region_of(p)?;
        sets.per_region[grid.linear(idx)].push(p);
    }
    Ok(sets)
}

/// Keeps points whose score is at least `threshold`, in order.
pub fn filter_by_score(points: &[ScoredPoint], threshold: f64) -> Vec<ScoredPoint> {
    points
        .iter()
        .filter(|p| p.score >= threshold)
        .copied()
        .collect()
}

/// The pixel bin a real coordinate falls into: the pixel whose center is
/// nearest, halves rounding up.
pub fn bin_of(v: f64) -> Option<isize> {
    let b = (v + 0.5).floor();
    if b.is_finite() && b >= isize::MIN as f64 && b <= isize::MAX as f64 {
        Some(b as isize)
    } else {
        None
    }
}

/// Writes scored points onto an empty score map. Points sharing a bin keep
/// the maximum score; points outside the image are dropped.
pub fn rasterize(points: &[ScoredPoint], height: usize, width: usize) -> ScoreMap {
    let mut map = ScoreMap::zeros(height, width);
    for p in points {
        let (Some(r), Some(c)) = (bin_of(p.point.x), bin_of(p.point.y)) else {
            continue;
        };
        if r < 0 || c < 0 || r as usize >= height || c as usize >= width {
            continue;
        }
        let (r, c) = (r as usize, c as usize);
        let s = p.score.clamp(0.0, 1.0);
        if s > map.get(r, c) {
            map.set(r, c, s);
        }
    }
    map
}

pub fn threshold_map(map: &ScoreMap, t: f64) -> BinaryMask {
    let data = map.data().iter().map(|&v| (v >= t) as u8).collect();
    BinaryMask::from_vec(map.height(), map.width(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::make_grid;
    use proptest::prelude::*;

    #[test]
    fn mask_points() {
        let m = BinaryMask::from_rows(&[[0, 1], [0, 0]]).unwrap();
        assert_eq!(mask_to_points(&m), vec![Point::new(0.0, 1.0)]);
        assert!(mask_to_points(&BinaryMask::zeros(3, 3)).is_empty());
        let full = BinaryMask::from_rows(&[[1, 1], [1, 1]]).unwrap();
        assert_eq!(
            mask_to_points(&full),
            vec![
                Point::new(0.0, 0.0),
                Point::new(0.0, 1.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0)
            ]
        );
    }

    #[test]
    fn grouping() {
        let full = BinaryMask::from_rows(&[[1, 1], [1, 1]]).unwrap();
        let g = make_grid(2, 2, 2).unwrap();
        let sets = group_by_region(&mask_to_points(&full), &g).unwrap();
        assert_eq!(sets.get(RegionIndex::new(0, 0)).len(), 4);

        let g = make_grid(8, 8, 4).unwrap();
        let pts = [Point::new(0.0, 0.0), Point::new(4.0, 4.0)];
        let sets = group_by_region(&pts, &g).unwrap();
        assert_eq!(sets.get(RegionIndex::new(0, 0)), &pts[..1]);
        assert_eq!(sets.get(RegionIndex::new(1, 1)), &pts[1..]);
        assert_eq!(sets.get(RegionIndex::new(0, 1)).len(), 0);

        let sets = group_by_region(&[], &g).unwrap();
        assert_eq!(sets.total(), 0);
        assert!(matches!(
            group_by_region(&[Point::new(8.0, 0.0)], &g),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn score_filter() {
        let pts: Vec<_> = [0.05, 0.1, 0.9]
            .iter()
            .map(|&s| ScoredPoint::new(0.0, 0.0, s))
            .collect();
        let kept: Vec<f64> = filter_by_score(&pts, 0.1).iter().map(|p| p.score).collect();
        assert_eq!(kept, vec![0.1, 0.9]);
        assert_eq!(filter_by_score(&pts, 0.0), pts);
        assert!(filter_by_score(&[], 0.5).is_empty());
    }

    #[test]
    fn rasterize_single_point() {
        let map = rasterize(&[ScoredPoint::new(1.2, 2.4, 0.7)], 4, 4);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if (r, c) == (1, 2) { 0.7 } else { 0.0 };
                assert_eq!(map.get(r, c), expect);
            }
        }
        // 2.7 is nearer to pixel center 3 than to 2
        let map = rasterize(&[ScoredPoint::new(1.2, 2.7, 0.7)], 4, 4);
        assert_eq!(map.get(1, 3), 0.7);
    }

    #[test]
    fn rasterize_combines_by_max() {
        let scores = [0.3, 0.8];
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let oracle = *sorted.last().unwrap();
        let pts: Vec<_> = scores
            .iter()
            .map(|&s| ScoredPoint::new(0.1, -0.2, s))
            .collect();
        assert_eq!(rasterize(&pts, 2, 2).get(0, 0), oracle);
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        assert_eq!(rasterize(&rev, 2, 2).get(0, 0), oracle);
    }

    #[test]
    fn rasterize_drops_out_of_bounds() {
        let pts = [
            ScoredPoint::new(-0.6, 0.0, 1.0),
            ScoredPoint::new(0.0, 3.5, 1.0),
            ScoredPoint::new(f64::NAN, 0.0, 1.0),
        ];
        assert!(rasterize(&pts, 3, 3).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thresholding() {
        let map = ScoreMap::from_vec(1, 2, vec![0.4, 0.5]).unwrap();
        assert_eq!(threshold_map(&map, 0.5).data(), &[0, 1]);
        let map = ScoreMap::from_vec(1, 3, vec![0.0, 0.2, 1.0]).unwrap();
        assert_eq!(threshold_map(&map, 0.0).data(), &[1, 1, 1]);
        let map = ScoreMap::from_vec(2, 2, vec![0.49; 4]).unwrap();
        assert!(threshold_map(&map, 0.5).is_empty());
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(0u8..2, h * w)
                .prop_map(move |d| BinaryMask::from_vec(h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(m in arb_mask()) {
            let pts: Vec<_> = mask_to_points(&m)
                .into_iter()
                .map(|p| ScoredPoint { point: p, score: 1.0 })
                .collect();
            let back = threshold_map(&rasterize(&pts, m.height(), m.width()), 0.5);
            prop_assert_eq!(back, m);
        }

        #[test]
        fn grouping_preserves_points(m in arb_mask()) {
            let (h, w) = (m.height(), m.width());
            let grid = make_grid(h, w, 1).unwrap();
            let pts = mask_to_points(&m);
            let sets = group_by_region(&pts, &grid).unwrap();
            prop_assert_eq!(sets.total(), pts.len());
            let mut flat: Vec<Point> = sets.regions().iter().flatten().copied().collect();
            flat.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            prop_assert_eq!(flat, pts);
        }

        #[test]
        fn rasterize_is_order_independent(
            raw in proptest::collection::vec((-1.0f64..6.0, -1.0f64..6.0, 0.0f64..=1.0), 0..30),
            seed in any::<u64>(),
        ) {
            let pts: Vec<_> = raw.iter().map(|&(x, y, s)| ScoredPoint::new(x, y, s)).collect();
            let mut shuffled = pts.clone();
            // deterministic rotation + reversal as the permutation
            if !shuffled.is_empty() {
                let k = (seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            prop_assert_eq!(rasterize(&pts, 5, 5), rasterize(&shuffled, 5, 5));
        }
    }
}

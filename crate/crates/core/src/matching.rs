//! Label assignment between ground-truth points and prediction slots.
//!
//! The cost of assigning GT point `g` to prediction `p` with score `s` is
//! `L1(g, p)^eta * |s - 1|^(1 - eta)`. Greedy matching walks the GT rows in
//! order and takes the cheapest unused column for each; the Hungarian solver
//! gives the optimal injection and is used as the reference.

use crate::error::{Error, Result};
use crate::types::{Point, ScoredPoint};

/// Row-major `k x n` matrix of non-negative finite costs with `k <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    k: usize,
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(k: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * n {
            return Err(Error::Dimension(format!(
                "cost data length {} does not match {k}x{n}",
                data.len()
            )));
        }
        if k > n {
            return Err(Error::Capacity(format!(
                "{k} ground-truth points exceed {n} prediction slots"
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Parameter(format!("invalid cost entry {v}")));
        }
        Ok(Self { k, n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>], n: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged cost rows".into()));
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Injective GT-row to prediction-column assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// `assignment[i]` is the column matched to GT row `i`.
    pub assignment: Vec<usize>,
    /// Columns labelled "no point", ascending.
    pub unmatched: Vec<usize>,
}

impl MatchResult {
    fn from_assignment(assignment: Vec<usize>, n: usize) -> Self {
        let mut used = vec![false; n];
        for &j in &assignment {
            used[j] = true;
        }
        let unmatched = (0..n).filter(|&j| !used[j]).collect();
        Self {
            assignment,
            unmatched,
        }
    }

    pub fn total_cost(&self, c: &CostMatrix) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| c.get(i, j))
            .sum()
    }

    pub fn is_injective(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        self.assignment
            .iter()
            .all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("eta {eta} outside [0, 1]")))
    }
}

#[inline]
fn cost_unchecked(g: Point, p: Point, s: f64, eta: f64) -> f64 {
    // powf(0, 0) == 1, which gives the degenerate exponents their meaning
    g.l1(&p).powf(eta) * (1.0 - s).abs().powf(1.0 - eta)
}

/// Positive-branch assignment cost of GT `g` to prediction `p` with score `s`.
pub fn match_cost(g: Point, p: Point, s: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Parameter(format!("score {s} outside [0, 1]")));
    }
    Ok(cost_unchecked(g, p, s, eta))
}

pub fn cost_matrix(gts: &[Point], preds: &[ScoredPoint], eta: f64) -> Result<CostMatrix> {
    check_eta(eta)?;
    let (k, n) = (gts.len(), preds.len());
    if k > n {
        return Err(Error::Capacity(format!(
            "{k} ground-truth points exceed {n} prediction slots"
        )));
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(&p.score)) {
        return Err(Error::Parameter(format!(
            "score {} outside [0, 1]",
            p.score
        )));
    }
    let mut data = Vec::with_capacity(k * n);
    for g in gts {
        for p in preds {
            data.push(cost_unchecked(*g, p.point, p.score, eta));
        }
    }
    CostMatrix::new(k, n, data)
}

/// Index of the smallest unmasked entry; first index wins ties.
#[inline]
fn masked_argmin(row: &[f64], masked: &[bool]) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::INFINITY;
    for (j, (&v, &m)) in row.iter().zip(masked).enumerate() {
        if !m && (v < best_v || best == usize::MAX) {
            best = j;
            best_v = v;
        }
    }
    best
}

/// Sequential greedy matching over the GT rows in input order.
pub fn greedy_match(c: &CostMatrix) -> MatchResult {
    let mut masked = vec![false; c.n];
    let mut assignment = Vec::with_capacity(c.k);
    for i in 0..c.k {
        let j = masked_argmin(c.row(i), &masked);
        masked[j] = true;
        assignment.push(j);
    }
    MatchResult::from_assignment(assignment, c.n)
}

/// A batch of cost matrices sharing the column count, packed back to back.
/// Region `b` owns `ks[b]` rows starting at row `row_start[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBatch {
    n: usize,
    ks: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl CostBatch {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ks: Vec::new(),
            row_start: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn from_matrices(costs: &[CostMatrix]) -> Result<Self> {
        let n = costs.first().map_or(0, |c| c.n);
        let mut batch = Self::new(n);
        for c in costs {
            batch.push(c)?;
        }
        Ok(batch)
    }

    pub fn push(&mut self, c: &CostMatrix) -> Result<()> {
        if c.n != self.n {
            return Err(Error::Dimension(format!(
                "batch column count {} does not match matrix with {} columns",
                self.n, c.n
            )));
        }
        self.push_rows(c.k, &c.data);
        Ok(())
    }

    /// Appends a region from raw rows; the caller guarantees the matrix
    /// invariants.
    pub(crate) fn push_rows(&mut self, k: usize, rows: &[f64]) {
        debug_assert_eq!(rows.len(), k * self.n);
        debug_assert!(k <= self.n);
        self.row_start.push(self.data.len() / self.n.max(1));
        self.ks.push(k);
        self.data.extend_from_slice(rows);
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn matrix(&self, b: usize) -> CostMatrix {
        let start = self.row_start[b] * self.n;
        let end = start + self.ks[b] * self.n;
        CostMatrix {
            k: self.ks[b],
            n: self.n,
            data: self.data[start..end].to_vec(),
        }
    }
}

/// Flat output of the batched kernel: the column chosen for every GT row of
/// every region, in the packed row order of the [`CostBatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchAssignment {
    n: usize,
    ks: Vec<usize>,
    row_start: Vec<usize>,
    columns: Vec<u32>,
}

impl BatchAssignment {
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    /// Columns matched to the GT rows of region `b`.
    pub fn columns(&self, b: usize) -> &[u32] {
        &self.columns[self.row_start[b]..self.row_start[b] + self.ks[b]]
    }

    pub fn result(&self, b: usize) -> MatchResult {
        MatchResult::from_assignment(
            self.columns(b).iter().map(|&j| j as usize).collect(),
            self.n,
        )
    }

    pub fn into_results(self) -> Vec<MatchResult> {
        (0..self.len()).map(|b| self.result(b)).collect()
    }
}

/// Greedy matching for a whole batch at once: step `i` takes the argmin of
/// row `i` in every region that still has GT rows left, then masks the
/// chosen columns. Regions run out of rows at different steps; their later
/// steps are no-ops.
pub fn batched_greedy_assign(batch: &CostBatch) -> BatchAssignment {
    let n = batch.n;
    let regions = batch.len();
    let mut columns = vec![0u32; batch.data.len() / n.max(1)];
    if n <= 64 {
        // Regions are independent, so each one is run through all of its
        // steps before moving on; this reads the packed rows in memory order
        // and gives the same columns as stepping all regions together.
        for b in 0..regions {
            let rows = batch.row_start[b]..batch.row_start[b] + batch.ks[b];
            let mut mask = 0u64;
            let data = batch.data[rows.start * n..rows.end * n].chunks_exact(n);
            for (row, column) in data.zip(&mut columns[rows]) {
                let mut best = 0usize;
                let mut best_v = f64::INFINITY;
                for (j, &v) in row.iter().enumerate() {
                    if mask & (1u64 << j) == 0 && v < best_v {
                        best = j;
                        best_v = v;
                    }
                }
                debug_assert!(best_v.is_finite());
                mask |= 1u64 << best;
                *column = best as u32;
            }
        }
    } else {
        let mut active: Vec<usize> = (0..regions).filter(|&b| batch.ks[b] > 0).collect();
        let mut step = 0;
        let mut masked = vec![false; regions * n];
        while !active.is_empty() {
            for &b in &active {
                let row_index = batch.row_start[b] + step;
                let row = &batch.data[row_index * n..(row_index + 1) * n];
                let mask = &mut masked[b * n..(b + 1) * n];
                let j = masked_argmin(row, mask);
                mask[j] = true;
                columns[row_index] = j as u32;
            }
            step += 1;
            active.retain(|&b| batch.ks[b] > step);
        }
    }
    BatchAssignment {
        n,
        ks: batch.ks.clone(),
        row_start: batch.row_start.clone(),
        columns,
    }
}

/// [`batched_greedy_assign`] expanded into one [`MatchResult`] per region.
pub fn batched_greedy_packed(batch: &CostBatch) -> Vec<MatchResult> {
    batched_greedy_assign(batch).into_results()
}

/// [`batched_greedy_assign`] with the regions split into `threads`
/// contiguous chunks solved concurrently. The output does not depend on the
/// thread count.
pub fn batched_greedy_threaded(batch: &CostBatch, threads: usize) -> BatchAssignment {
    let threads = threads.max(1).min(batch.len().max(1));
    if threads == 1 {
        return batched_greedy_assign(batch);
    }
    let chunk = batch.len().div_ceil(threads);
    let parts: Vec<CostBatch> = (0..batch.len())
        .step_by(chunk)
        .map(|start| {
            let end = (start + chunk).min(batch.len());
            let first_row = batch.row_start[start];
            let last_row = batch.row_start[end - 1] + batch.ks[end - 1];
            CostBatch {
                n: batch.n,
                ks: batch.ks[start..end].to_vec(),
                row_start: batch.row_start[start..end]
                    .iter()
                    .map(|r| r - first_row)
                    .collect(),
                data: batch.data[first_row * batch.n..last_row * batch.n].to_vec(),
            }
        })
        .collect();
    let solved: Vec<BatchAssignment> = std::thread::scope(|s| {
        let handles: Vec<_> = parts
            .iter()
            .map(|p| s.spawn(move || batched_greedy_assign(p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("matching thread panicked"))
            .collect()
    });
    BatchAssignment {
        n: batch.n,
        ks: batch.ks.clone(),
        row_start: batch.row_start.clone(),
        columns: solved.into_iter().flat_map(|a| a.columns).collect(),
    }
}

/// Batched greedy matching over independent cost matrices. Results are
/// identical to calling [`greedy_match`] on each.
pub fn batched_greedy(costs: &[CostMatrix]) -> Result<Vec<MatchResult>> {
    // Column counts may differ between matrices; group them by width.
    if costs.windows(2).all(|w| w[0].n == w[1].n) {
        return Ok(batched_greedy_packed(&CostBatch::from_matrices(costs)?));
    }
    let mut out = vec![None; costs.len()];
    let mut widths: Vec<usize> = costs.iter().map(|c| c.n).collect();
    widths.sort_unstable();
    widths.dedup();
    for w in widths {
        let idx: Vec<usize> = (0..costs.len()).filter(|&b| costs[b].n == w).collect();
        let mut batch = CostBatch::new(w);
        for &b in &idx {
            batch.push(&costs[b])?;
        }
        for (b, r) in idx.into_iter().zip(batched_greedy_packed(&batch)) {
            out[b] = Some(r);
        }
    }
    Ok(out
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect())
}

/// Optimal rectangular assignment (`k <= n`) by shortest augmenting paths
/// with row/column potentials. O(k^2 n).
pub fn hungarian_match(c: &CostMatrix) -> MatchResult {
    let (k, n) = (c.k, c.n);
    if k == 0 {
        return MatchResult::from_assignment(Vec::new(), n);
    }
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=k {
        col_row[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let row = c.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; k];
    for j in 1..=n {
        if col_row[j] != 0 {
            assignment[col_row[j] - 1] = j - 1;
        }
    }
    MatchResult::from_assignment(assignment, n)
}

/// Largest matrix side accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX_SIDE: usize = 7;

/// Exhaustive search over all injections. The lexicographically smallest
/// minimizer is returned.
pub fn brute_force_match(c: &CostMatrix) -> Result<MatchResult> {
    if c.k > BRUTE_FORCE_MAX_SIDE || c.n > BRUTE_FORCE_MAX_SIDE {
        return Err(Error::Capacity(format!(
            "brute force limited to {BRUTE_FORCE_MAX_SIDE}x{BRUTE_FORCE_MAX_SIDE}, got {}x{}",
            c.k, c.n
        )));
    }

    struct Search<'a> {
        c: &'a CostMatrix,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn run(&mut self, acc: f64) {
            let i = self.current.len();
            if i == self.c.k {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.current.clone()));
                }
                return;
            }
            for j in 0..self.c.n {
                if self.used[j] {
                    continue;
                }
                self.used[j] = true;
                self.current.push(j);
                self.run(acc + self.c.get(i, j));
                self.current.pop();
                self.used[j] = false;
            }
        }
    }

    let mut search = Search {
        c,
        used: vec![false; c.n],
        current: Vec::with_capacity(c.k),
        best: None,
    };
    search.run(0.0);
    let (_, assignment) = search.best.expect("k <= n admits an injection");
    Ok(MatchResult::from_assignment(assignment, c.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        let n = rows.first().map_or(0, |r| r.len());
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), n).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, k: usize, n: usize) -> CostMatrix {
        let data = (0..k * n).map(|_| rng.gen::<f64>() * 10.0).collect();
        CostMatrix::new(k, n, data).unwrap()
    }

    #[test]
    fn cost_values() {
        // 3^0.8 * 0.1^0.2 written out through exp/ln
        let oracle = (0.8 * 3f64.ln() + 0.2 * 0.1f64.ln()).exp();
        let c = match_cost(Point::new(2.0, 3.0), Point::new(4.0, 4.0), 0.9, 0.8).unwrap();
        assert!((c - oracle).abs() < 1e-12);
        assert!((c - 1.5195).abs() < 1e-4);
        let g = Point::new(5.0, 1.0);
        assert_eq!(match_cost(g, g, 0.3, 0.8).unwrap(), 0.0);
        assert_eq!(
            match_cost(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 1.0, 0.8).unwrap(),
            0.0
        );
        assert!(matches!(
            match_cost(g, g, 0.3, 1.2),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn degenerate_exponents() {
        let (g, p) = (Point::new(0.0, 0.0), Point::new(2.0, 1.0));
        // eta = 1: pure distance, even for a perfect score
        assert_eq!(match_cost(g, p, 1.0, 1.0).unwrap(), 3.0);
        // eta = 0: pure class error, even at zero distance
        assert_eq!(match_cost(g, g, 0.25, 0.0).unwrap(), 0.75);
    }

    #[test]
    fn cost_matrix_shapes() {
        let preds = [
            ScoredPoint::new(0.0, 0.0, 0.5),
            ScoredPoint::new(1.0, 1.0, 0.5),
        ];
        let c = cost_matrix(&[], &preds, 0.8).unwrap();
        assert_eq!((c.k(), c.n()), (0, 2));
        let c = cost_matrix(&[Point::new(0.0, 0.0)], &preds[..1], 0.8).unwrap();
        assert_eq!(c.data(), &[0.0]);
        let gts = [Point::new(2.0, 3.0), Point::new(4.0, 4.0)];
        let preds = [
            ScoredPoint::new(4.0, 4.0, 0.9),
            ScoredPoint::new(2.0, 3.0, 0.9),
        ];
        let c = cost_matrix(&gts, &preds, 0.8).unwrap();
        for (i, g) in gts.iter().enumerate() {
            for (j, p) in preds.iter().enumerate() {
                let e = match_cost(*g, p.point, p.score, 0.8).unwrap();
                assert_eq!(c.get(i, j), e);
            }
        }
        assert!((c.get(0, 0) - 1.5195).abs() < 1e-4);
        assert_eq!(c.get(0, 1), 0.0);
        assert!(matches!(
            cost_matrix(&gts, &preds[..1], 0.8),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn greedy_examples() {
        let r = greedy_match(&m(&[&[1.0, 2.0], &[1.0, 100.0]]));
        assert_eq!(r.assignment, vec![0, 1]);
        assert_eq!(r.total_cost(&m(&[&[1.0, 2.0], &[1.0, 100.0]])), 101.0);
        let r = greedy_match(&m(&[&[5.0]]));
        assert_eq!(r.assignment, vec![0]);
        assert!(r.unmatched.is_empty());
        let r = greedy_match(&m(&[&[0.0, 0.0, 0.0]]));
        assert_eq!(r.assignment, vec![0]);
        assert_eq!(r.unmatched, vec![1, 2]);
    }

    #[test]
    fn hungarian_examples() {
        let c = m(&[&[1.0, 2.0], &[1.0, 100.0]]);
        let r = hungarian_match(&c);
        assert_eq!(r.assignment, vec![1, 0]);
        assert_eq!(r.total_cost(&c), 3.0);
        assert_eq!(hungarian_match(&m(&[&[5.0]])).assignment, vec![0]);
        let empty = CostMatrix::new(0, 3, vec![]).unwrap();
        assert_eq!(hungarian_match(&empty).unmatched, vec![0, 1, 2]);
    }

    #[test]
    fn brute_force_examples() {
        let c = m(&[&[1.0, 2.0], &[1.0, 100.0]]);
        assert_eq!(brute_force_match(&c).unwrap().total_cost(&c), 3.0);
        let empty = CostMatrix::new(0, 4, vec![]).unwrap();
        let r = brute_force_match(&empty).unwrap();
        assert!(r.assignment.is_empty());
        assert_eq!(r.total_cost(&empty), 0.0);
        let diag = m(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let r = brute_force_match(&diag).unwrap();
        assert_eq!(r.assignment, vec![0, 1, 2]);
        assert_eq!(r.total_cost(&diag), 0.0);
        let big = CostMatrix::new(1, 8, vec![0.0; 8]).unwrap();
        assert!(matches!(brute_force_match(&big), Err(Error::Capacity(_))));
        // ties go to the lexicographically smallest assignment
        let flat = CostMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        assert_eq!(brute_force_match(&flat).unwrap().assignment, vec![0, 1]);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=6);
            let k = rng.gen_range(0..=n);
            let c = random_matrix(&mut rng, k, n);
            let h = hungarian_match(&c);
            let b = brute_force_match(&c).unwrap();
            assert!(h.is_injective(n));
            assert!((h.total_cost(&c) - b.total_cost(&c)).abs() < 1e-9);
            assert!(greedy_match(&c).total_cost(&c) >= b.total_cost(&c) - 1e-9);
        }
    }

    #[test]
    fn greedy_is_optimal_when_row_minima_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 200 {
            let c = random_matrix(&mut rng, 3, 6);
            let argmins: Vec<usize> = (0..3)
                .map(|i| masked_argmin(c.row(i), &[false; 6]))
                .collect();
            if argmins[0] == argmins[1] || argmins[0] == argmins[2] || argmins[1] == argmins[2] {
                continue;
            }
            checked += 1;
            let g = greedy_match(&c);
            assert_eq!(g.assignment, argmins);
            assert_eq!(g.total_cost(&c), hungarian_match(&c).total_cost(&c));
        }
    }

    #[test]
    fn greedy_masks_one_column_per_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_matrix(&mut rng, 8, 8);
        let r = greedy_match(&c);
        for i in 0..8 {
            let mut distinct = r.assignment[..=i].to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            assert_eq!(distinct.len(), i + 1);
        }
        assert!(r.unmatched.is_empty());
    }

    #[test]
    fn batched_equals_sequential() {
        let fixtures = vec![
            m(&[&[1.0, 2.0], &[1.0, 100.0]]),
            CostMatrix::new(0, 2, vec![]).unwrap(),
            CostMatrix::new(2, 2, vec![3.0, 3.0, 3.0, 3.0]).unwrap(),
            CostMatrix::new(0, 2, vec![]).unwrap(),
        ];
        let batched = batched_greedy(&fixtures).unwrap();
        for (c, r) in fixtures.iter().zip(&batched) {
            assert_eq!(*r, greedy_match(c));
        }
        assert!(batched[1].assignment.is_empty());

        let packed = CostBatch::from_matrices(&fixtures).unwrap();
        for t in 1..=5 {
            assert_eq!(batched_greedy_threaded(&packed, t).into_results(), batched);
        }

        let mixed = vec![
            m(&[&[5.0]]),
            m(&[&[0.0, 0.0, 0.0]]),
            m(&[&[1.0, 2.0], &[1.0, 100.0]]),
        ];
        let batched = batched_greedy(&mixed).unwrap();
        for (c, r) in mixed.iter().zip(&batched) {
            assert_eq!(*r, greedy_match(c));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random: Vec<_> = (0..200)
            .map(|_| {
                let k = rng.gen_range(0..=16);
                random_matrix(&mut rng, k, 16)
            })
            .collect();
        let batched = batched_greedy(&random).unwrap();
        for (c, r) in random.iter().zip(&batched) {
            assert_eq!(*r, greedy_match(c));
        }
    }

    #[test]
    fn wide_batches_use_the_general_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let wide: Vec<_> = (0..20)
            .map(|_| {
                let k = rng.gen_range(0..=70);
                random_matrix(&mut rng, k, 70)
            })
            .collect();
        let batched = batched_greedy(&wide).unwrap();
        for (c, r) in wide.iter().zip(&batched) {
            assert_eq!(*r, greedy_match(c));
        }
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            CostMatrix::new(2, 1, vec![0.0; 2]),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            CostMatrix::new(1, 1, vec![-1.0]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            CostMatrix::new(1, 1, vec![f64::NAN]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            CostMatrix::new(1, 2, vec![0.0]),
            Err(Error::Dimension(_))
        ));
    }
}

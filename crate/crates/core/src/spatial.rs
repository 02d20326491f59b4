//! Uniform grid hash over point clouds, used for ball, annulus and nearest
//! neighbour queries at a fixed scale.

use std::collections::HashMap;

/// Grid hash with cubic cells of side `cell`. Indices inside each bucket are
/// kept in ascending order so that every query visits points deterministically.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cell: f64,
    dim: usize,
    buckets: HashMap<Box<[i64]>, Vec<usize>>,
}

impl GridIndex {
    /// Index the points `coords[i*dim..(i+1)*dim]` for every `i` yielded by `ids`.
    pub fn build(coords: &[f64], dim: usize, cell: f64, ids: impl IntoIterator<Item = usize>) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<Box<[i64]>, Vec<usize>> = HashMap::new();
        let mut key = vec![0i64; dim];
        for i in ids {
            cell_of(&coords[i * dim..(i + 1) * dim], cell, &mut key);
            buckets.entry(key.clone().into_boxed_slice()).or_default().push(i);
        }
        for v in buckets.values_mut() {
            v.sort_unstable();
        }
        GridIndex { cell, dim, buckets }
    }

    /// Index every point of a flat coordinate buffer.
    pub fn build_all(coords: &[f64], dim: usize, cell: f64) -> Self {
        let n = coords.len() / dim;
        Self::build(coords, dim, cell, 0..n)
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Calls `visit(index, squared_distance)` for every indexed point within
    /// closed distance `radius` of `center`.
    pub fn for_each_within(
        &self,
        coords: &[f64],
        center: &[f64],
        radius: f64,
        mut visit: impl FnMut(usize, f64),
    ) {
        let r2 = radius * radius;
        self.for_each_candidate(center, radius, |i| {
            let d2 = dist2(&coords[i * self.dim..(i + 1) * self.dim], center);
            if d2 <= r2 {
                visit(i, d2);
            }
        });
    }

    /// Sorted indices of the points within closed distance `radius` of `center`.
    pub fn within(&self, coords: &[f64], center: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(coords, center, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Every indexed point lying in a cell that may intersect the ball; no
    /// distance filtering.
    pub fn for_each_candidate(&self, center: &[f64], radius: f64, mut visit: impl FnMut(usize)) {
        self.visit_candidates(center, radius, |i| {
            visit(i);
            true
        });
    }

    /// True when some indexed point accepted by `keep` lies within closed
    /// distance `radius`; stops at the first hit.
    pub fn any_within(
        &self,
        coords: &[f64],
        center: &[f64],
        radius: f64,
        mut keep: impl FnMut(usize) -> bool,
    ) -> bool {
        let r2 = radius * radius;
        let mut hit = false;
        self.visit_candidates(center, radius, |i| {
            if keep(i) && dist2(&coords[i * self.dim..(i + 1) * self.dim], center) <= r2 {
                hit = true;
            }
            !hit
        });
        hit
    }

    /// Incremental insertion; keeps buckets sorted.
    pub fn insert(&mut self, coords: &[f64], i: usize) {
        let mut key = vec![0i64; self.dim];
        cell_of(&coords[i * self.dim..(i + 1) * self.dim], self.cell, &mut key);
        let b = self.buckets.entry(key.into_boxed_slice()).or_default();
        let pos = b.partition_point(|&x| x < i);
        b.insert(pos, i);
    }

    /// Empty index for incremental use.
    pub fn empty(dim: usize, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        GridIndex { cell, dim, buckets: HashMap::new() }
    }

    // `visit` returns false to stop early.
    fn visit_candidates(&self, center: &[f64], radius: f64, mut visit: impl FnMut(usize) -> bool) {
        let dim = self.dim;
        let mut lo = vec![0i64; dim];
        let mut hi = vec![0i64; dim];
        for k in 0..dim {
            lo[k] = ((center[k] - radius) / self.cell).floor() as i64;
            hi[k] = ((center[k] + radius) / self.cell).floor() as i64;
        }
        let span: f64 = (0..dim).map(|k| (hi[k] - lo[k] + 1) as f64).product();
        if span > (4 * self.buckets.len() + 16) as f64 {
            // Query box covers far more cells than exist: walk the buckets instead.
            let mut keys: Vec<&Box<[i64]>> = self
                .buckets
                .keys()
                .filter(|key| (0..dim).all(|k| key[k] >= lo[k] && key[k] <= hi[k]))
                .collect();
            keys.sort_unstable();
            for key in keys {
                for &i in &self.buckets[key] {
                    if !visit(i) {
                        return;
                    }
                }
            }
            return;
        }
        let mut key = lo.clone();
        loop {
            if let Some(bucket) = self.buckets.get(&key[..]) {
                for &i in bucket {
                    if !visit(i) {
                        return;
                    }
                }
            }
            // odometer increment
            let mut k = 0;
            loop {
                if k == dim {
                    return;
                }
                key[k] += 1;
                if key[k] <= hi[k] {
                    break;
                }
                key[k] = lo[k];
                k += 1;
            }
        }
    }

    /// Nearest indexed point to `center` accepted by `keep`, searching no
    /// farther than `max_radius`. Returns `(index, distance)`; ties go to the
    /// lower index.
    pub fn nearest_where(
        &self,
        coords: &[f64],
        center: &[f64],
        max_radius: f64,
        mut keep: impl FnMut(usize) -> bool,
    ) -> Option<(usize, f64)> {
        if self.buckets.is_empty() {
            return None;
        }
        let mut radius = self.cell;
        loop {
            let r = radius.min(max_radius);
            let mut best: Option<(usize, f64)> = None;
            self.for_each_within(coords, center, r, |i, d2| {
                if !keep(i) {
                    return;
                }
                match best {
                    Some((bi, bd)) if bd < d2 || (bd == d2 && bi < i) => {}
                    _ => best = Some((i, d2)),
                }
            });
            if let Some((i, d2)) = best {
                return Some((i, d2.sqrt()));
            }
            if r >= max_radius {
                return None;
            }
            radius *= 2.0;
        }
    }

    pub fn nearest(&self, coords: &[f64], center: &[f64]) -> Option<(usize, f64)> {
        self.nearest_where(coords, center, f64::INFINITY, |_| true)
    }
}

fn cell_of(p: &[f64], cell: f64, key: &mut [i64]) {
    for (k, x) in p.iter().enumerate() {
        key[k] = (x / cell).floor() as i64;
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        dist2(p, &self.center) <= self.radius * self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(coords: &[f64], dim: usize, c: &[f64], r: f64) -> Vec<usize> {
        (0..coords.len() / dim)
            .filter(|&i| dist(&coords[i * dim..(i + 1) * dim], c) <= r)
            .collect()
    }

    #[test]
    fn ball_query_matches_brute_force() {
        let mut coords = Vec::new();
        for i in 0..40 {
            for j in 0..25 {
                coords.push(i as f64 * 0.037 - 0.4);
                coords.push((j as f64 * 0.051).sin());
            }
        }
        let idx = GridIndex::build_all(&coords, 2, 0.1);
        for (c, r) in [([0.1, 0.2], 0.05), ([0.0, 0.0], 0.3), ([-0.4, 1.0], 0.7), ([5.0, 5.0], 0.1)] {
            assert_eq!(idx.within(&coords, &c, r), brute(&coords, 2, &c, r));
        }
        // huge radius walks buckets
        assert_eq!(idx.within(&coords, &[0.0, 0.0], 1e6).len(), 1000);
    }

    #[test]
    fn nearest_prefers_lower_index_on_ties() {
        let coords = vec![1.0, 0.0, -1.0, 0.0, 0.0, 3.0];
        let idx = GridIndex::build_all(&coords, 2, 0.25);
        assert_eq!(idx.nearest(&coords, &[0.0, 0.0]), Some((0, 1.0)));
        assert_eq!(idx.nearest_where(&coords, &[0.0, 0.0], 10.0, |i| i != 0), Some((1, 1.0)));
        assert_eq!(idx.nearest_where(&coords, &[0.0, 0.0], 0.5, |_| true), None);
    }
}

//! Bounded-Lipschitz distance on a ball, flat measures `c·H^n|L` and the
//! α coefficient.

mod alpha;
pub mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::FlatError;
use crate::measures::DiscreteMeasure;
use crate::spatial::{dist, Ball};
use transport::MinCostFlow;

pub use alpha::{alpha, alpha_all, AlphaDiagnostics, AlphaOptions, AlphaRecord, InnerSearch};

/// Affine `n`-plane `base + span(frame)` with an orthonormal frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    base: Vec<f64>,
    frame: Vec<Vec<f64>>,
}

impl Plane {
    pub fn new(base: Vec<f64>, frame: Vec<Vec<f64>>) -> Result<Plane, FlatError> {
        let d = base.len();
        if frame.is_empty() || frame.len() > d || frame.iter().any(|e| e.len() != d) {
            return Err(FlatError::PlaneShape(format!("{} frame vectors in R^{d}", frame.len())));
        }
        let mut worst = 0.0f64;
        for a in 0..frame.len() {
            for b in 0..frame.len() {
                let g = dot(&frame[a], &frame[b]);
                worst = worst.max((g - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        if !(worst <= 1e-10) {
            return Err(FlatError::Frame(worst));
        }
        Ok(Plane { base, frame })
    }

    /// Gram–Schmidt on `vectors`; fails if they are (numerically) dependent.
    pub fn orthonormalize(base: Vec<f64>, vectors: &[Vec<f64>]) -> Result<Plane, FlatError> {
        let mut frame: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut w = v.clone();
            // two passes for stability
            for _ in 0..2 {
                for e in &frame {
                    let p = dot(&w, e);
                    w.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if !(norm > 1e-12) {
                return Err(FlatError::PlaneShape("dependent frame vectors".into()));
            }
            w.iter_mut().for_each(|x| *x /= norm);
            frame.push(w);
        }
        Plane::new(base, frame)
    }

    /// The coordinate plane through `base` spanned by the first `n` axes.
    pub fn coordinate(base: Vec<f64>, n: usize) -> Plane {
        let d = base.len();
        let frame = (0..n)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                e
            })
            .collect();
        Plane { base, frame }
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn frame(&self) -> &[Vec<f64>] {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// In-plane coordinates of the orthogonal projection of `x`.
    pub fn local(&self, x: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        self.frame.iter().map(|e| dot(&v, e)).collect()
    }

    pub fn at(&self, u: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        for (e, &t) in self.frame.iter().zip(u) {
            p.iter_mut().zip(e).for_each(|(x, y)| *x += t * y);
        }
        p
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.at(&self.local(x))
    }

    pub fn dist(&self, x: &[f64]) -> f64 {
        let mut v: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        for e in &self.frame {
            let p = dot(&v, e);
            v.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
        }
        dot(&v, &v).sqrt()
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn normals(&self) -> Vec<Vec<f64>> {
        let d = self.ambient_dim();
        let mut basis = self.frame.clone();
        let mut out = Vec::new();
        for k in 0..d {
            if basis.len() == d {
                break;
            }
            let mut w = vec![0.0; d];
            w[k] = 1.0;
            for _ in 0..2 {
                for e in &basis {
                    let p = dot(&w, e);
                    w.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > 1e-6 {
                w.iter_mut().for_each(|x| *x /= norm);
                basis.push(w.clone());
                out.push(w);
            }
        }
        out
    }

    /// Compact description: base followed by the flattened frame.
    pub fn flattened(&self) -> Vec<f64> {
        let mut v = self.base.clone();
        for e in &self.frame {
            v.extend_from_slice(e);
        }
        v
    }
}

/// Planes near a reference plane, parametrized by a tilt of each frame vector
/// along the normals plus a normal offset of the base. Parameters are in
/// length units; tilts are divided by `length` to become slopes.
#[derive(Clone, Debug)]
pub struct PlaneChart {
    reference: Plane,
    normals: Vec<Vec<f64>>,
    length: f64,
}

impl PlaneChart {
    pub fn new(reference: Plane, length: f64) -> Self {
        let normals = reference.normals();
        PlaneChart { reference, normals, length }
    }

    /// `(d-n)·n` tilt entries followed by `d-n` offsets.
    pub fn param_count(&self) -> usize {
        self.normals.len() * (self.reference.dim() + 1)
    }

    pub fn plane(&self, theta: &[f64]) -> Plane {
        let n = self.reference.dim();
        let k = self.normals.len();
        let mut base = self.reference.base.clone();
        for (c, nv) in self.normals.iter().enumerate() {
            let o = theta[k * n + c];
            base.iter_mut().zip(nv).for_each(|(x, y)| *x += o * y);
        }
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = self.reference.frame[i].clone();
                for (c, nv) in self.normals.iter().enumerate() {
                    let s = theta[c * n + i] / self.length;
                    e.iter_mut().zip(nv).for_each(|(x, y)| *x += s * y);
                }
                e
            })
            .collect();
        Plane::orthonormalize(base, &vectors).expect("tilted frame stays independent")
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Non-negative weighted points; unlike [`DiscreteMeasure`] zero weights are
/// allowed, so it can carry `c = 0` flat quadratures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoints {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(dim: usize) -> Self {
        WeightedPoints { dim, coords: Vec::new(), weights: Vec::new() }
    }

    pub fn push(&mut self, p: &[f64], w: f64) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, s: f64) -> WeightedPoints {
        WeightedPoints { dim: self.dim, coords: self.coords.clone(), weights: self.weights.iter().map(|w| w * s).collect() }
    }
}

impl From<&DiscreteMeasure> for WeightedPoints {
    fn from(m: &DiscreteMeasure) -> Self {
        WeightedPoints { dim: m.ambient_dim(), coords: m.coords().to_vec(), weights: m.weights().to_vec() }
    }
}

/// `c·H^n|L∩B` discretized on a node grid of step `g` centred on the foot of
/// the ball centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatMeasure {
    pub c: f64,
    pub plane: Plane,
    pub ball: Ball,
    pub g: f64,
    /// Grid nodes inside the ball.
    pub nodes: Vec<f64>,
}

impl FlatMeasure {
    pub fn len(&self) -> usize {
        self.nodes.len() / self.plane.ambient_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_weight(&self) -> f64 {
        self.c * self.g.powi(self.plane.dim() as i32)
    }

    pub fn total_mass(&self) -> f64 {
        self.node_weight() * self.len() as f64
    }

    pub fn quadrature(&self) -> WeightedPoints {
        WeightedPoints { dim: self.plane.ambient_dim(), coords: self.nodes.clone(), weights: vec![self.node_weight(); self.len()] }
    }
}

/// Cell-centred grid of step `g` on `L ∩ B`, node weight `c·g^n`.
pub fn discretize_flat(c: f64, plane: &Plane, ball: &Ball, g: f64) -> Result<FlatMeasure, FlatError> {
    if !(g > 0.0 && g <= ball.radius / 8.0 * (1.0 + 1e-12)) {
        return Err(FlatError::GridStep { g, limit: ball.radius / 8.0 });
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(FlatError::PlaneShape(format!("density {c} must be non-negative")));
    }
    let nodes = flat_nodes(plane, ball, g)?;
    Ok(FlatMeasure { c, plane: plane.clone(), ball: ball.clone(), g, nodes })
}

pub fn flat_nodes(plane: &Plane, ball: &Ball, g: f64) -> Result<Vec<f64>, FlatError> {
    let delta = plane.dist(&ball.center);
    if delta > ball.radius {
        return Err(FlatError::PlaneMissesBall);
    }
    let foot_local = plane.local(&ball.center);
    let chord = (ball.radius * ball.radius - delta * delta).max(0.0).sqrt();
    let n = plane.dim();
    let k = (chord / g).ceil() as i64 + 1;
    let mut nodes = Vec::new();
    let mut multi = vec![-k; n];
    let mut u = vec![0.0; n];
    let r2 = ball.radius * ball.radius;
    loop {
        for a in 0..n {
            u[a] = foot_local[a] + (multi[a] as f64 + 0.5) * g;
        }
        let p = plane.at(&u);
        if crate::spatial::dist2(&p, &ball.center) <= r2 {
            nodes.extend_from_slice(&p);
        }
        let mut a = 0;
        loop {
            if a == n {
                return Ok(nodes);
            }
            multi[a] += 1;
            if multi[a] < k {
                break;
            }
            multi[a] = -k;
            a += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlDistance {
    pub value: f64,
    /// Merged support (flattened coordinates), in canonical order.
    pub support: Vec<f64>,
    /// Optimal test function on the merged support.
    pub f: Vec<f64>,
    /// Points discarded for lying outside the ball.
    pub dropped: usize,
    pub pivots: usize,
}

/// `dist_B(σ, ν) = sup { ∫f dσ − ∫f dν : Lip f ≤ 1, supp f ⊂ B }`, solved
/// exactly through its min-cost-flow dual: transport between the excess
/// points at cost `|p − q|`, or into/out of `∂B` at cost `dist(p, ∂B)`.
pub fn bl_distance(
    sigma: &WeightedPoints,
    nu: &WeightedPoints,
    ball: &Ball,
    cap: usize,
) -> Result<BlDistance, FlatError> {
    let dim = ball.center.len();
    if sigma.dim != dim || nu.dim != dim {
        return Err(FlatError::PlaneShape("dimension mismatch between measures and ball".into()));
    }
    // Merge duplicates; BTreeMap keys give a role-independent order and each
    // side is summed separately so that swapping σ and ν negates the excess
    // exactly.
    let mut dropped = 0usize;
    let mut pos: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut neg: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for (pts, side) in [(sigma, &mut pos), (nu, &mut neg)] {
        for i in 0..pts.len() {
            let p = pts.point(i);
            if !ball.contains(p) {
                dropped += 1;
                continue;
            }
            let key: Vec<u64> = p.iter().map(|x| canonical_bits(*x)).collect();
            *side.entry(key).or_insert(0.0) += pts.weights[i];
        }
    }
    let mut merged: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
    for (k, w) in pos {
        merged.entry(k).or_insert((0.0, 0.0)).0 = w;
    }
    for (k, w) in neg {
        merged.entry(k).or_insert((0.0, 0.0)).1 = w;
    }
    if dropped > 0 {
        log::warn!("bl_distance: {dropped} points outside the ball dropped");
    }
    let size = merged.len();
    if size > cap {
        return Err(FlatError::SupportCap { size, cap });
    }
    let mut support = Vec::with_capacity(size * dim);
    let mut excess = Vec::with_capacity(size);
    for (key, (p, q)) in &merged {
        support.extend(key.iter().map(|b| f64::from_bits(*b)));
        excess.push(p - q);
    }
    // canonical orientation: dist_B(σ,ν) and dist_B(ν,σ) solve the same network
    let total: f64 = excess.iter().sum();
    let first_nonzero = excess.iter().find(|e| **e != 0.0).copied().unwrap_or(0.0);
    let flip = total < 0.0 || (total == 0.0 && first_nonzero < 0.0);
    if flip {
        excess.iter_mut().for_each(|e| *e = -*e);
    }
    let (value, mut f, pivots) = solve_excess(&support, &excess, dim, ball)?;
    if flip {
        f.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(BlDistance { value, support, f, dropped, pivots })
}

// +0.0 and -0.0 are the same point
fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

const NEIGHBOURS: usize = 12;

/// `max Σ f_i e_i` over 1-Lipschitz `f` with `|f_i| ≤ dist(p_i, ∂B)`.
/// Returns the value, an optimal `f` and the pivot count.
pub(crate) fn solve_excess(support: &[f64], excess: &[f64], dim: usize, ball: &Ball) -> Result<(f64, Vec<f64>, usize), FlatError> {
    let np = excess.len();
    let point = |i: usize| &support[i * dim..(i + 1) * dim];
    let b: Vec<f64> = (0..np).map(|i| (ball.radius - dist(point(i), &ball.center)).max(0.0)).collect();
    let sources: Vec<usize> = (0..np).filter(|&i| excess[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..np).filter(|&i| excess[i] < 0.0).collect();
    if sources.is_empty() && sinks.is_empty() {
        return Ok((0.0, vec![0.0; np], 0));
    }
    // Arcs worth having: the boundary detour bounds every useful direct arc.
    let nt = sinks.len();
    let mut dmat = vec![0.0; sources.len() * nt];
    for (a, &s) in sources.iter().enumerate() {
        for (k, &t) in sinks.iter().enumerate() {
            dmat[a * nt + k] = dist(point(s), point(t));
        }
    }
    let useful = |a: usize, k: usize| {
        let c = dmat[a * nt + k];
        (c <= b[sources[a]] + b[sinks[k]]).then_some(c)
    };
    // Start from nearest-neighbour arcs and add every arc the optimal
    // potentials price negatively until none is left; the answer is exact.
    let mut active: Vec<Vec<usize>> = vec![Vec::new(); sources.len()];
    {
        let mut by_source: Vec<Vec<(f64, usize)>> = vec![Vec::new(); sources.len()];
        let mut by_sink: Vec<Vec<(f64, usize)>> = vec![Vec::new(); sinks.len()];
        for a in 0..sources.len() {
            for k in 0..nt {
                if let Some(c) = useful(a, k) {
                    by_source[a].push((c, k));
                    by_sink[k].push((c, a));
                }
            }
        }
        let nearest = |v: &mut Vec<(f64, usize)>| {
            if v.len() > NEIGHBOURS {
                v.select_nth_unstable_by(NEIGHBOURS, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                v.truncate(NEIGHBOURS);
            }
        };
        for (a, v) in by_source.iter_mut().enumerate() {
            nearest(v);
            active[a].extend(v.iter().map(|x| x.1));
        }
        for (k, v) in by_sink.iter_mut().enumerate() {
            nearest(v);
            for &(_, a) in v.iter() {
                active[a].push(k);
            }
        }
        for v in &mut active {
            v.sort_unstable();
            v.dedup();
        }
    }
    let arc_count: usize = active.iter().map(Vec::len).sum();
    let mut net = MinCostFlow::with_capacity(sources.len() + sinks.len() + 1, arc_count + np);
    let mut node_of = vec![usize::MAX; np];
    for &i in sources.iter().chain(&sinks) {
        node_of[i] = net.add_node(excess[i]);
    }
    let net_excess: f64 = sources.iter().chain(&sinks).map(|&i| excess[i]).sum();
    let ground = net.add_node(-net_excess);
    net.set_hub(ground);
    for (a, &s) in sources.iter().enumerate() {
        for &k in &active[a] {
            net.add_arc(node_of[s], node_of[sinks[k]], dmat[a * nt + k]);
        }
        net.add_arc(node_of[s], ground, b[s]);
    }
    for &t in &sinks {
        net.add_arc(ground, node_of[t], b[t]);
    }
    let scale = b.iter().fold(0.0f64, |a, x| a.max(*x));
    let mut pivots = 0usize;
    let sol = loop {
        let sol = net.solve().map_err(FlatError::Solver)?;
        pivots += sol.pivots;
        let mut added = false;
        for (a, &s) in sources.iter().enumerate() {
            let ps = sol.potential[node_of[s]];
            let mut k_act = 0;
            let mut extra = Vec::new();
            for (k, &t) in sinks.iter().enumerate() {
                if k_act < active[a].len() && active[a][k_act] == k {
                    k_act += 1;
                    continue;
                }
                if let Some(c) = useful(a, k) {
                    if c + ps - sol.potential[node_of[t]] < -1e-12 * scale {
                        net.add_arc(node_of[s], node_of[t], c);
                        extra.push(k);
                    }
                }
            }
            if !extra.is_empty() {
                added = true;
                active[a].extend(extra);
                active[a].sort_unstable();
            }
        }
        if !added {
            break sol;
        }
    };
    let pg = sol.potential[ground];
    let mut y = vec![0.0; np];
    for &i in sources.iter().chain(&sinks) {
        y[i] = pg - sol.potential[node_of[i]];
    }
    // double c-transform: globally feasible and no worse than y
    let mut f = vec![0.0; np];
    for (k, &t) in sinks.iter().enumerate() {
        let mut v = -b[t];
        for (a, &s) in sources.iter().enumerate() {
            v = v.max(y[s] - dmat[a * nt + k]);
        }
        f[t] = v;
    }
    let idle: Vec<usize> = (0..np).filter(|&i| excess[i] == 0.0).collect();
    for &i in &idle {
        let mut v = -b[i];
        for &s in &sources {
            v = v.max(y[s] - dist(point(s), point(i)));
        }
        f[i] = v;
    }
    for (a, &s) in sources.iter().enumerate() {
        let mut v = b[s];
        for (k, &t) in sinks.iter().enumerate() {
            v = v.min(f[t] + dmat[a * nt + k]);
        }
        for &i in &idle {
            v = v.min(f[i] + dist(point(s), point(i)));
        }
        f[s] = v;
    }
    Ok((sol.cost, f, pivots))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(points: &[(f64, f64)], w: &[f64]) -> WeightedPoints {
        let mut out = WeightedPoints::new(2);
        for (p, &m) in points.iter().zip(w) {
            out.push(&[p.0, p.1], m);
        }
        out
    }

    #[test]
    fn trivial_cases() {
        let ball = Ball::new(vec![0.0, 0.0], 1.0);
        let a = wp(&[(0.1, 0.2), (-0.3, 0.0)], &[1.0, 2.0]);
        assert_eq!(bl_distance(&a, &a, &ball, 100).unwrap().value, 0.0);
        let d0 = wp(&[(0.0, 0.0)], &[1.0]);
        let dt = wp(&[(0.4, 0.0)], &[1.0]);
        assert!((bl_distance(&d0, &dt, &ball, 100).unwrap().value - 0.4).abs() < 1e-14);
        let d2 = wp(&[(0.0, 0.0)], &[2.0]);
        let r = bl_distance(&d0, &d2, &ball, 100).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert!((r.f[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn cap_and_drop() {
        let ball = Ball::new(vec![0.0, 0.0], 1.0);
        let a = wp(&[(0.1, 0.0), (0.2, 0.0), (5.0, 0.0)], &[1.0, 1.0, 1.0]);
        let z = WeightedPoints::new(2);
        let r = bl_distance(&a, &z, &ball, 10).unwrap();
        assert_eq!(r.dropped, 1);
        assert!((r.value - 1.7).abs() < 1e-14);
        assert!(matches!(bl_distance(&a, &z, &ball, 1), Err(FlatError::SupportCap { .. })));
    }

    #[test]
    fn chord_quadrature() {
        let plane = Plane::coordinate(vec![0.0, 0.0], 1);
        let fm = discretize_flat(1.0, &plane, &Ball::new(vec![0.0, 0.0], 1.0), 0.01).unwrap();
        assert_eq!(fm.len(), 200);
        assert!((fm.total_mass() - 2.0).abs() <= 0.01);
        for i in 0..fm.len() {
            assert!(fm.nodes[2 * i + 1].abs() < 1e-10);
        }
        assert!(matches!(
            discretize_flat(1.0, &plane, &Ball::new(vec![0.0, 2.0], 1.0), 0.01),
            Err(FlatError::PlaneMissesBall)
        ));
        assert!(matches!(
            discretize_flat(1.0, &plane, &Ball::new(vec![0.0, 0.0], 1.0), 0.2),
            Err(FlatError::GridStep { .. })
        ));
    }

    #[test]
    fn chart_round_trip() {
        let p = Plane::coordinate(vec![0.0, 0.0, 0.0], 2);
        let chart = PlaneChart::new(p.clone(), 1.0);
        assert_eq!(chart.param_count(), 3);
        let q = chart.plane(&[0.0, 0.0, 0.0]);
        assert!(q.dist(&[0.3, 0.7, 0.0]) < 1e-15);
        let q = chart.plane(&[0.0, 0.0, 0.5]);
        assert!((q.dist(&[0.3, 0.7, 0.0]) - 0.5).abs() < 1e-15);
        let q = chart.plane(&[1.0, 0.0, 0.0]);
        // frame vector e1 tilted by slope 1 along e3
        assert!(q.dist(&[1.0, 0.0, 1.0]) < 1e-12);
    }
}

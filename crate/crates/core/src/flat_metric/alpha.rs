//! `α(Q) = ℓ(Q)^{-n-1} inf_{c ≥ 0, L} dist_{B_Q}(μ, c·H^n|L)`.
//!
//! The infimum over planes is a local heuristic (upper bound); the inner
//! problem in `c` is convex and piecewise linear, solved by cutting planes
//! from the LP subgradient.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{flat_nodes, solve_excess, Plane, PlaneChart, WeightedPoints};
use crate::coefficients::beta2_plane;
use crate::error::FlatError;
use crate::lattice::{BallConvention, Lattice};
use crate::search::coordinate_search;
use crate::spatial::{dist, Ball};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSearch {
    /// Cutting planes on the convex piecewise-linear `c ↦ dist`.
    #[default]
    CuttingPlane,
    GoldenSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaOptions {
    /// Cap on representatives of `μ|B_Q` after aggregation.
    pub max_support: usize,
    /// Flat grid step is `ℓ(Q)/grid_divisor`.
    pub grid_divisor: f64,
    /// Up to this many halvings of the flat grid step while the LP value moves by more than 10%.
    pub max_refinements: u32,
    pub multistarts: usize,
    pub ball: BallConvention,
    /// Skip the inner search and use this `c`.
    pub fixed_c: Option<f64>,
    pub inner: InnerSearch,
    /// Relative tolerance of the inner search.
    pub c_tolerance: f64,
    pub seed: u64,
    /// Hard limit on the LP support after aggregation.
    pub lp_cap: usize,
    /// Budget of plane evaluations per start.
    pub max_plane_evals: usize,
    /// A perturbed start is descended only if its value is within this
    /// factor of the best value found so far.
    pub screen_ratio: f64,
    /// Relative decrease an outer step must achieve to be accepted.
    pub min_gain: f64,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            max_support: 256,
            grid_divisor: 32.0,
            max_refinements: 3,
            multistarts: 4,
            ball: BallConvention::SideLength,
            fixed_c: None,
            inner: InnerSearch::CuttingPlane,
            c_tolerance: 1e-3,
            seed: 0,
            lp_cap: 4096,
            max_plane_evals: 200,
            screen_ratio: 1.0,
            min_gain: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaDiagnostics {
    pub lp_solves: usize,
    pub pivots: usize,
    pub plane_evaluations: usize,
    /// Start that produced the optimum (0 = the β₂ plane).
    pub multistart_index: usize,
    /// Representatives of `μ|B_Q` fed to the LP.
    pub subsample_size: usize,
    pub ball_points: usize,
    /// Aggregation cell side, if aggregation happened.
    pub cluster_cell: Option<f64>,
    /// `Σ` cluster mass × cluster radius.
    pub aggregation_error: f64,
    pub grid_step: f64,
    /// Best α after every accepted outer step, non-increasing.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub cube: usize,
    pub generation: u32,
    pub alpha: f64,
    pub c: f64,
    pub plane: Plane,
    pub lp_value: f64,
    pub diagnostics: AlphaDiagnostics,
}

/// α for every cube, in id order.
pub fn alpha_all(l: &Lattice, opts: &AlphaOptions) -> Result<Vec<AlphaRecord>, FlatError> {
    (0..l.len()).into_par_iter().map(|q| alpha(l, q, opts)).collect()
}

struct Clusters {
    anchor: Vec<f64>,
    cell: f64,
}

impl Clusters {
    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().zip(&self.anchor).map(|(x, a)| ((x - a) / self.cell).floor() as i64).collect()
    }
}

struct Problem<'a> {
    mu: WeightedPoints,
    ball: Ball,
    clusters: Option<Clusters>,
    n: usize,
    lp_cap: usize,
    solves: std::cell::Cell<usize>,
    pivots: std::cell::Cell<usize>,
    _l: std::marker::PhantomData<&'a ()>,
}

impl Problem<'_> {
    /// Unit-density flat quadrature on `L ∩ B`, aggregated like μ.
    fn flat(&self, plane: &Plane, g: f64) -> Option<WeightedPoints> {
        let nodes = flat_nodes(plane, &self.ball, g).ok()?;
        let d = plane.ambient_dim();
        let w = g.powi(self.n as i32);
        let mut out = WeightedPoints::new(d);
        match &self.clusters {
            None => {
                for p in nodes.chunks(d) {
                    out.push(p, w);
                }
            }
            Some(cl) => {
                let mut cells: BTreeMap<Vec<i64>, (usize, Vec<f64>)> = BTreeMap::new();
                for p in nodes.chunks(d) {
                    let e = cells.entry(cl.key(p)).or_insert_with(|| (0, vec![0.0; d]));
                    e.0 += 1;
                    e.1.iter_mut().zip(p).for_each(|(s, x)| *s += x);
                }
                for (_, (count, sum)) in cells {
                    let c: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
                    out.push(&c, w * count as f64);
                }
            }
        }
        Some(out)
    }

    /// LP value of `dist_B(μ, c·λ)` and its derivative in `c`.
    fn eval(&self, flat: &WeightedPoints, c: f64) -> Result<(f64, f64), FlatError> {
        let d = self.mu.dim;
        let size = self.mu.len() + flat.len();
        if size > self.lp_cap {
            return Err(FlatError::SupportCap { size, cap: self.lp_cap });
        }
        let mut support = Vec::with_capacity(size * d);
        support.extend_from_slice(&self.mu.coords);
        support.extend_from_slice(&flat.coords);
        let mut excess = self.mu.weights.clone();
        excess.extend(flat.weights.iter().map(|w| -c * w));
        let (v, f, piv) = solve_excess(&support, &excess, d, &self.ball)?;
        self.solves.set(self.solves.get() + 1);
        self.pivots.set(self.pivots.get() + piv);
        let k0 = self.mu.len();
        let slope = -flat.weights.iter().enumerate().map(|(k, w)| f[k0 + k] * w).sum::<f64>();
        Ok((v, slope))
    }
}

/// Minimizes the convex `V(c)` on `[0, c_max]` by Kelley's cutting planes.
/// `cuts` are known lines `V(c) ≥ a + s·c`; every evaluation `(V, V')` adds
/// one. The first evaluation is at `guess`. Returns `(c, V(c))`, or stops
/// early with a value `≥ cutoff` once the cuts prove the minimum cannot beat
/// `cutoff`.
fn minimize_c(
    mut eval: impl FnMut(f64) -> Result<(f64, f64), FlatError>,
    c_max: f64,
    guess: f64,
    tol: f64,
    cutoff: f64,
    mode: InnerSearch,
    mut cuts: Vec<(f64, f64)>,
) -> Result<(f64, f64), FlatError> {
    if mode == InnerSearch::GoldenSection {
        return golden(|c| eval(c).map(|r| r.0), c_max, tol);
    }
    let mut best = (f64::NAN, f64::INFINITY);
    let mut c = guess.clamp(0.0, c_max);
    for _ in 0..100 {
        let (v, g) = eval(c)?;
        if v < best.1 {
            best = (c, v);
        }
        cuts.push((v - g * c, g));
        let (next, lower) = model_min(&cuts, c_max);
        if lower >= cutoff {
            return Ok((best.0, best.1.max(cutoff)));
        }
        let gap = best.1 - lower;
        if gap <= tol * best.1.abs() || gap <= 1e-15 || (next - c).abs() <= 1e-12 * c_max {
            break;
        }
        c = next;
    }
    Ok(best)
}

/// Minimizer and minimum of `max_k (a_k + s_k c)` over `[0, c_max]`.
fn model_min(cuts: &[(f64, f64)], c_max: f64) -> (f64, f64) {
    let model = |c: f64| cuts.iter().map(|(a, s)| a + s * c).fold(f64::NEG_INFINITY, f64::max);
    let mut best = (0.0, model(0.0));
    let mut consider = |c: f64| {
        let v = model(c);
        if v < best.1 {
            best = (c, v);
        }
    };
    consider(c_max);
    for (i, &(a1, s1)) in cuts.iter().enumerate() {
        for &(a2, s2) in &cuts[i + 1..] {
            if s1 != s2 {
                let c = (a2 - a1) / (s1 - s2);
                if c > 0.0 && c < c_max {
                    consider(c);
                }
            }
        }
    }
    best
}

fn golden(mut f: impl FnMut(f64) -> Result<f64, FlatError>, c_max: f64, tol: f64) -> Result<(f64, f64), FlatError> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, c_max);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while b - a > tol * c_max.max(1e-300) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    let f0 = f(0.0)?;
    if f0 < best.1 {
        best = (0.0, f0);
    }
    Ok(best)
}

pub fn alpha(l: &Lattice, q: usize, opts: &AlphaOptions) -> Result<AlphaRecord, FlatError> {
    let cube = l.cube(q)?;
    let m = l.measure();
    let d = m.ambient_dim();
    let n = m.intrinsic_dim();
    let side = l.side(q);
    let ball = l.cube_ball(q, opts.ball);
    let ids = l.points_in_ball(&ball.center, ball.radius);
    if ids.is_empty() {
        return Err(FlatError::EmptyBall);
    }
    let ball_mass: f64 = m.mass_of(&ids);
    let mut g = side / opts.grid_divisor;
    if opts.ball == BallConvention::Diameter {
        g = g.min(ball.radius / 8.0);
    }

    // aggregate μ|B onto at most max_support cells
    let mut diag = AlphaDiagnostics { ball_points: ids.len(), ..Default::default() };
    let anchor: Vec<f64> = ball.center.clone();
    let (mu, clusters) = if ids.len() > opts.max_support {
        let count = |cell: f64| {
            let cl = Clusters { anchor: anchor.clone(), cell };
            let mut keys: Vec<Vec<i64>> = ids.iter().map(|&i| cl.key(m.point(i))).collect();
            keys.sort_unstable();
            keys.dedup();
            keys.len()
        };
        let (mut lo, mut hi) = (0.0f64, 2.0 * ball.radius);
        while count(hi) > opts.max_support {
            hi *= 2.0;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if mid > 0.0 && count(mid) <= opts.max_support {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // commensurate with the flat grid so aligned flat cells hold equal node counts
        let mut cell = (hi / g).ceil() * g;
        while count(cell) > opts.max_support {
            cell += g;
        }
        let cl = Clusters { anchor: anchor.clone(), cell };
        let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for &i in &ids {
            groups.entry(cl.key(m.point(i))).or_default().push(i);
        }
        let mut mu = WeightedPoints::new(d);
        let mut err = 0.0;
        for members in groups.values() {
            let mass: f64 = m.mass_of(members);
            let mut cen = vec![0.0; d];
            for &i in members {
                cen.iter_mut().zip(m.point(i)).for_each(|(s, x)| *s += m.weight(i) * x);
            }
            cen.iter_mut().for_each(|s| *s /= mass);
            let rep = *members
                .iter()
                .min_by(|&&a, &&b| dist(m.point(a), &cen).total_cmp(&dist(m.point(b), &cen)).then(a.cmp(&b)))
                .unwrap();
            let radius = members.iter().map(|&i| dist(m.point(i), m.point(rep))).fold(0.0, f64::max);
            err += mass * radius;
            mu.push(m.point(rep), mass);
        }
        diag.cluster_cell = Some(cell);
        diag.aggregation_error = err;
        (mu, Some(cl))
    } else {
        let mut mu = WeightedPoints::new(d);
        for &i in &ids {
            mu.push(m.point(i), m.weight(i));
        }
        (mu, None)
    };
    diag.subsample_size = mu.len();
    let prob = Problem {
        mu,
        ball: ball.clone(),
        clusters,
        n,
        lp_cap: opts.lp_cap,
        solves: Default::default(),
        pivots: Default::default(),
        _l: Default::default(),
    };

    let init_plane = match beta2_plane(l, q).map_err(|e| FlatError::Solver(e.to_string()))? {
        Some(fit) if fit.plane.dist(&ball.center) <= ball.radius => fit.plane,
        _ => Plane::coordinate(l.center_point(q).to_vec(), n),
    };
    let c_max = 4.0 * ball_mass / side.powi(n as i32);
    let norm = side.powi(n as i32 + 1);
    let fixed = opts.fixed_c;
    let guess_for = |flat: &WeightedPoints| {
        let fm = flat.total_mass();
        if fm > 0.0 {
            prob.mu.total_mass() / fm
        } else {
            1.0
        }
    };
    let objective = |plane: &Plane, g: f64, cutoff: f64, guess: Option<f64>| -> Result<Option<(f64, f64)>, FlatError> {
        let Some(flat) = prob.flat(plane, g) else {
            return Ok(None);
        };
        if let Some(c) = fixed {
            return Ok(Some((c, prob.eval(&flat, c)?.0)));
        }
        let gs = guess.unwrap_or_else(|| guess_for(&flat));
        // the tents ±(R − |x − z|) are admissible test functions
        let tent = |p: &WeightedPoints| -> f64 {
            (0..p.len()).map(|i| p.weights[i] * (ball.radius - dist(p.point(i), &ball.center)).max(0.0)).sum()
        };
        let (bm, bl) = (tent(&prob.mu), tent(&flat));
        let cuts = vec![(bm, -bl), (-bm, bl)];
        minimize_c(|c| prob.eval(&flat, c), c_max, gs, opts.c_tolerance, cutoff, opts.inner, cuts).map(Some)
    };

    // grid refinement at the initial plane
    let (mut c0, mut v0) = objective(&init_plane, g, f64::INFINITY, None)?.expect("initial plane meets the ball");
    for _ in 0..opts.max_refinements {
        if prob.flat(&init_plane, g / 2.0).is_none_or(|f| f.len() > opts.max_support) {
            break;
        }
        let (c1, v1) = objective(&init_plane, g / 2.0, f64::INFINITY, Some(c0))?.expect("same plane");
        if (v1 - v0).abs() <= 0.1 * v0.abs().max(1e-300) {
            break;
        }
        g /= 2.0;
        c0 = c1;
        v0 = v1;
    }
    diag.grid_step = g;

    let chart = PlaneChart::new(init_plane.clone(), side);
    let k = chart.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (q as u64).wrapping_mul(0x9E3779B97F4A7C15));
    let mut best = (v0, c0, init_plane.clone(), 0usize);
    let mut trace = vec![v0 / norm];
    let mut evals = 0usize;
    let mut failure: Option<FlatError> = None;
    for start in 0..opts.multistarts.max(1) {
        let theta0: Vec<f64> = if start == 0 {
            vec![0.0; k]
        } else {
            (0..k).map(|_| rng.random_range(-0.25..0.25) * side).collect()
        };
        let (f0, c_start) = if start == 0 {
            (v0, c0)
        } else {
            let cutoff = best.0 * opts.screen_ratio;
            match objective(&chart.plane(&theta0), g, cutoff, Some(best.1))? {
                Some((c, v)) if v < cutoff => (v, c),
                _ => continue,
            }
        };
        let mut c_last = c_start;
        let mut c_at_best = c_start;
        let res = coordinate_search(theta0, f0, side / 8.0, side / 256.0, opts.max_plane_evals, opts.min_gain, |theta, incumbent| {
            if failure.is_some() {
                return f64::INFINITY;
            }
            match objective(&chart.plane(theta), g, incumbent, Some(c_last)) {
                Ok(Some((c, v))) => {
                    c_last = c;
                    if v < incumbent {
                        c_at_best = c;
                    }
                    v
                }
                Ok(None) => f64::INFINITY,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        evals += res.evaluations;
        if res.value < best.0 {
            best = (res.value, c_at_best, chart.plane(&res.x), start);
        }
        for v in res.trace {
            let a = v / norm;
            if a < *trace.last().unwrap() {
                trace.push(a);
            }
        }
    }
    diag.lp_solves = prob.solves.get();
    diag.pivots = prob.pivots.get();
    diag.plane_evaluations = evals;
    diag.multistart_index = best.3;
    diag.trace = trace;
    Ok(AlphaRecord {
        cube: q,
        generation: cube.generation,
        alpha: best.0 / norm,
        c: best.1,
        plane: best.2,
        lp_value: best.0,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutting_plane_on_piecewise_linear() {
        // V(c) = |c - 0.7| + 0.2, slope ±1
        let f = |c: f64| Ok(((c - 0.7f64).abs() + 0.2, if c < 0.7 { -1.0 } else { 1.0 }));
        let (c, v) = minimize_c(f, 4.0, 0.1, 1e-3, f64::INFINITY, InnerSearch::CuttingPlane, vec![]).unwrap();
        assert!((v - 0.2).abs() < 1e-3 && (c - 0.7).abs() < 1e-2, "{c} {v}");
        let (c, v) = minimize_c(f, 4.0, 0.1, 1e-3, f64::INFINITY, InnerSearch::GoldenSection, vec![]).unwrap();
        assert!((v - 0.2).abs() < 1e-2 && (c - 0.7).abs() < 1e-2, "{c} {v}");
        // monotone increasing: minimum at 0
        let (c, _) = minimize_c(|c| Ok((c, 1.0)), 4.0, 1.0, 1e-3, f64::INFINITY, InnerSearch::CuttingPlane, vec![]).unwrap();
        assert_eq!(c, 0.0);
        // cutoff below the minimum aborts with a value ≥ cutoff
        let (_, v) = minimize_c(f, 4.0, 0.1, 1e-3, 0.1, InnerSearch::CuttingPlane, vec![]).unwrap();
        assert!(v >= 0.1);
    }
}

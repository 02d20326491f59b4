//! Jones β numbers, the bilateral β₁, Carleson sums and `A²(Q)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CoefficientError;
use crate::flat_metric::{flat_nodes, Plane, PlaneChart};
use crate::lattice::Lattice;
use crate::measures::DiscreteMeasure;
use crate::search::coordinate_search;
use crate::spatial::Ball;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaExponent {
    One,
    Two,
    Infinity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRecord {
    pub cube: usize,
    pub generation: u32,
    pub p: BetaExponent,
    pub value: f64,
    pub plane: Option<Plane>,
    /// Second (plane-to-support) term of the bilateral β₁, normalized.
    pub bilateral_term: Option<f64>,
    /// Fewer than `n+1` points in `2Q`: value forced to 0.
    pub degenerate: bool,
}

/// All β-type coefficients of one cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeBetas {
    pub beta1: BetaRecord,
    pub beta2: BetaRecord,
    pub beta_inf: BetaRecord,
    pub bilateral1: BetaRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaFit {
    pub plane: Plane,
    /// Eigenvalues of the unnormalized weighted covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub mass: f64,
}

impl PcaFit {
    /// `Σ w·dist(y, L)²` for the fitted plane.
    pub fn residual(&self) -> f64 {
        self.eigenvalues[self.plane.dim()..].iter().map(|v| v.max(0.0)).sum()
    }
}

/// Least-squares `n`-plane of the weighted points `ids`: through the weighted
/// mean, spanned by the top `n` eigenvectors of the weighted covariance.
/// `None` when fewer than `n+1` points are given.
pub fn weighted_pca(m: &DiscreteMeasure, ids: &[usize], n: usize) -> Option<PcaFit> {
    if ids.len() < n + 1 {
        return None;
    }
    let d = m.ambient_dim();
    let mass: f64 = ids.iter().map(|&i| m.weight(i)).sum();
    let mut mean = vec![0.0; d];
    for &i in ids {
        for k in 0..d {
            mean[k] += m.weight(i) * m.point(i)[k];
        }
    }
    mean.iter_mut().for_each(|x| *x /= mass);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for &i in ids {
        let w = m.weight(i);
        let p = m.point(i);
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let frame: Vec<Vec<f64>> = order[..n]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // deterministic orientation
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    let plane = Plane::orthonormalize(mean, &frame).ok()?;
    Some(PcaFit { plane, eigenvalues, mass })
}

/// Weighted PCA plane over `2Q`, or `None` for degenerate cubes.
pub fn beta2_plane(l: &Lattice, q: usize) -> Result<Option<PcaFit>, CoefficientError> {
    let ids = l.dilate(q, 2.0)?;
    Ok(weighted_pca(l.measure(), &ids, l.measure().intrinsic_dim()))
}

struct CubeGeometry<'a> {
    m: &'a DiscreteMeasure,
    ids: Vec<usize>,
    side: f64,
    n: i32,
}

impl CubeGeometry<'_> {
    fn beta1(&self, plane: &Plane) -> f64 {
        let s: f64 = self.ids.iter().map(|&i| self.m.weight(i) * plane.dist(self.m.point(i))).sum();
        s / self.side.powi(self.n + 1)
    }

    fn beta_inf(&self, plane: &Plane) -> f64 {
        self.ids.iter().map(|&i| plane.dist(self.m.point(i))).fold(0.0, f64::max) / self.side
    }
}

/// Plane-to-support term of the bilateral β₁:
/// `ℓ^{-n-1} ∫_{L∩B(z_Q, 2d(Q))} dist(x, E) dH^n`, by quadrature.
pub fn bilateral_term(l: &Lattice, q: usize, plane: &Plane) -> f64 {
    let cube = &l.cubes()[q];
    let side = l.side(q);
    let n = l.measure().intrinsic_dim() as i32;
    let radius = 2.0 * cube.diameter;
    if radius <= 0.0 {
        return 0.0;
    }
    let ball = Ball::new(l.center_point(q).to_vec(), radius);
    let g = (side / 32.0).min(radius / 8.0);
    let Ok(nodes) = flat_nodes(plane, &ball, g) else {
        return 0.0;
    };
    let d = plane.ambient_dim();
    let s: f64 = nodes.chunks(d).map(|x| l.nearest_support(x).1).sum();
    s * g.powi(n) / side.powi(n + 1)
}

fn plane_search(
    chart: &PlaneChart,
    side: f64,
    f0: f64,
    mut obj: impl FnMut(&Plane) -> f64,
) -> (Plane, f64) {
    let k = chart.param_count();
    let r = coordinate_search(vec![0.0; k], f0, side / 8.0, side / 256.0, 400, 0.0, |theta, _| obj(&chart.plane(theta)));
    (chart.plane(&r.x), r.value)
}

/// β₁, β₂, β_∞ and the bilateral β₁ of cube `q`. β₂ is exact (PCA); the
/// others are upper bounds refined from the β₂ plane. β₁ is minimized over
/// every plane visited, including the bilateral optimum, so `β₁ ≤ bβ₁` holds
/// exactly.
pub fn cube_betas(l: &Lattice, q: usize) -> Result<CubeBetas, CoefficientError> {
    let cube = l.cube(q)?;
    let generation = cube.generation;
    let m = l.measure();
    let n = m.intrinsic_dim();
    let side = l.side(q);
    let ids = l.dilate(q, 2.0)?;
    let rec = |p, value, plane: Option<Plane>, bt, degenerate| BetaRecord {
        cube: q,
        generation,
        p,
        value,
        plane,
        bilateral_term: bt,
        degenerate,
    };
    let Some(fit) = weighted_pca(m, &ids, n) else {
        return Ok(CubeBetas {
            beta1: rec(BetaExponent::One, 0.0, None, None, true),
            beta2: rec(BetaExponent::Two, 0.0, None, None, true),
            beta_inf: rec(BetaExponent::Infinity, 0.0, None, None, true),
            bilateral1: rec(BetaExponent::One, 0.0, None, Some(0.0), true),
        });
    };
    let geo = CubeGeometry { m, ids, side, n: n as i32 };
    let b2 = (fit.residual() / side.powi(n as i32 + 2)).sqrt();
    let chart = PlaneChart::new(fit.plane.clone(), side);

    let (p1, v1) = plane_search(&chart, side, geo.beta1(&fit.plane), |p| geo.beta1(p));
    let (pinf, vinf) = plane_search(&chart, side, geo.beta_inf(&fit.plane), |p| geo.beta_inf(p));
    let joint = |p: &Plane| geo.beta1(p) + bilateral_term(l, q, p);
    let start = joint(&fit.plane);
    let (pb, vb) = plane_search(&chart, side, start, joint);
    let t1 = geo.beta1(&pb);
    let t2 = bilateral_term(l, q, &pb);
    let _ = vb;
    let (beta1_plane, beta1) = if t1 < v1 { (pb.clone(), t1) } else { (p1, v1) };
    Ok(CubeBetas {
        beta1: rec(BetaExponent::One, beta1, Some(beta1_plane), None, false),
        beta2: rec(BetaExponent::Two, b2, Some(fit.plane), None, false),
        beta_inf: rec(BetaExponent::Infinity, vinf, Some(pinf), None, false),
        bilateral1: rec(BetaExponent::One, t1 + t2, Some(pb), Some(t2), false),
    })
}

/// Single β record (`p = 1` is the one-sided β₁).
pub fn beta(l: &Lattice, q: usize, p: BetaExponent) -> Result<BetaRecord, CoefficientError> {
    let all = cube_betas(l, q)?;
    Ok(match p {
        BetaExponent::One => all.beta1,
        BetaExponent::Two => all.beta2,
        BetaExponent::Infinity => all.beta_inf,
    })
}

/// Bilateral β₁ for a given plane, or the refined optimum when `plane` is None.
pub fn bilateral_beta1(l: &Lattice, q: usize, plane: Option<&Plane>) -> Result<BetaRecord, CoefficientError> {
    match plane {
        None => Ok(cube_betas(l, q)?.bilateral1),
        Some(p) => {
            let cube = l.cube(q)?;
            let m = l.measure();
            let ids = l.dilate(q, 2.0)?;
            let degenerate = ids.len() < m.intrinsic_dim() + 1;
            let geo = CubeGeometry { m, ids, side: l.side(q), n: m.intrinsic_dim() as i32 };
            let t2 = bilateral_term(l, q, p);
            Ok(BetaRecord {
                cube: q,
                generation: cube.generation,
                p: BetaExponent::One,
                value: if degenerate { 0.0 } else { geo.beta1(p) + t2 },
                plane: Some(p.clone()),
                bilateral_term: Some(t2),
                degenerate,
            })
        }
    }
}

/// β records for every cube, in id order.
pub fn betas_all(l: &Lattice) -> Result<Vec<CubeBetas>, CoefficientError> {
    (0..l.len()).into_par_iter().map(|q| cube_betas(l, q)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Alpha,
    Beta1,
    Beta2,
    BetaInf,
    BilateralBeta1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `μ(R)`
    Mass,
    /// `ℓ(R)^n`, physical
    SideLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub root: usize,
    pub kind: CoefficientKind,
    pub sum: f64,
    pub normalizer_kind: Normalizer,
    pub normalizer: f64,
    pub ratio: f64,
    /// Partial sums by generation, starting at the root's generation.
    pub per_generation: Vec<f64>,
    pub depth: u32,
}

/// `Σ_{Q ⊆ R} coef(Q)² μ(Q)` with per-generation partials. `values[id]` is
/// the coefficient of cube `id`.
pub fn carleson_sum(
    l: &Lattice,
    root: usize,
    kind: CoefficientKind,
    normalizer: Normalizer,
    values: &[Option<f64>],
) -> Result<CarlesonReport, CoefficientError> {
    let r = l.cube(root)?;
    let desc = l.descendants(root);
    let missing: Vec<usize> = desc.iter().copied().filter(|&q| values.get(q).copied().flatten().is_none()).collect();
    if !missing.is_empty() {
        return Err(CoefficientError::MissingRecords(missing));
    }
    let j0 = r.generation;
    let mut per_generation = vec![0.0; (l.depth() - j0 + 1) as usize];
    for &q in &desc {
        let c = &l.cubes()[q];
        let v = values[q].unwrap();
        per_generation[(c.generation - j0) as usize] += v * v * c.mass;
    }
    let sum: f64 = per_generation.iter().sum();
    let norm = match normalizer {
        Normalizer::Mass => r.mass,
        Normalizer::SideLength => l.side(root).powi(l.measure().intrinsic_dim() as i32),
    };
    Ok(CarlesonReport {
        root,
        kind,
        sum,
        normalizer_kind: normalizer,
        normalizer: norm,
        ratio: sum / norm,
        per_generation,
        depth: l.depth(),
    })
}

/// `A²(Q) = μ(Q)^{-1} Σ_{P ⊆ Q} α(P)² (ℓ(P)/ℓ(Q)) μ(P)`.
#[allow(non_snake_case)]
pub fn calA_sq(l: &Lattice, q: usize, alpha: &[Option<f64>]) -> Result<f64, CoefficientError> {
    let cube = l.cube(q)?;
    let desc = l.descendants(q);
    let missing: Vec<usize> = desc.iter().copied().filter(|&p| alpha.get(p).copied().flatten().is_none()).collect();
    if !missing.is_empty() {
        return Err(CoefficientError::MissingRecords(missing));
    }
    let lq = l.ell(q);
    let s: f64 = desc
        .iter()
        .map(|&p| {
            let a = alpha[p].unwrap();
            a * a * (l.ell(p) / lq) * l.cubes()[p].mass
        })
        .sum();
    Ok(s / cube.mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::measures::flat_patch;

    #[test]
    fn collinear_pca_is_exact() {
        let m = flat_patch(1, 2, &[0.0, 0.5], &[vec![0.6, 0.8]], 1.0, 50, 1.0).unwrap();
        let ids: Vec<usize> = (0..m.len()).collect();
        let fit = weighted_pca(&m, &ids, 1).unwrap();
        assert!(fit.residual() < 1e-24);
        assert!(fit.plane.dist(&[0.0, 0.5]) < 1e-12);
        assert!(fit.plane.dist(&[0.6, 1.3]) < 1e-12);
    }

    #[test]
    fn two_parallel_lines() {
        let s = 0.1;
        let mut coords = Vec::new();
        for i in 0..100 {
            let x = (i as f64 + 0.5) / 100.0;
            coords.extend_from_slice(&[x, 0.0, x, s]);
        }
        let m = DiscreteMeasure::new(2, 1, coords, vec![0.005; 200], 0.01, "lines").unwrap();
        let ids: Vec<usize> = (0..m.len()).collect();
        let fit = weighted_pca(&m, &ids, 1).unwrap();
        assert!((fit.plane.base()[1] - s / 2.0).abs() < 1e-12);
        // Σ w (s/2)² = μ·(s/2)²
        assert!((fit.residual() - m.total_mass() * (s / 2.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cal_a_single_term_and_zero() {
        let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 256, 1.0).unwrap();
        let l = build_lattice(&m, 3).unwrap();
        let zero = vec![Some(0.0); l.len()];
        assert_eq!(calA_sq(&l, 0, &zero).unwrap(), 0.0);
        let mut one = zero.clone();
        one[0] = Some(0.3);
        assert!((calA_sq(&l, 0, &one).unwrap() - 0.09).abs() < 1e-15);
        let mut missing = zero.clone();
        missing[5] = None;
        assert!(matches!(calA_sq(&l, 0, &missing), Err(CoefficientError::MissingRecords(v)) if v == vec![5]));
        let rep = carleson_sum(&l, 0, CoefficientKind::Alpha, Normalizer::Mass, &zero).unwrap();
        assert_eq!(rep.sum, 0.0);
        assert_eq!(rep.ratio, 0.0);
        assert_eq!(rep.per_generation.len(), 4);
    }
}

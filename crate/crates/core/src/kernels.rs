//! Odd Calderón–Zygmund kernels, smooth annular layers and the fields they
//! produce on a discrete measure.
//!
//! Two layer conventions are offered and never mixed:
//! * `CzoRadial`: `φ_j(x) = ψ(2^{j+3}|x|/s) − ψ(2^{j+4}|x|/s)`, supported in
//!   `[2^{-j-5}, 2^{-j-2}]·s`;
//! * `RieszSquared`: `φ_m(x) = ψ(2^{2m}|x|²/s²) − ψ(2^{2m+2}|x|²/s²)`,
//!   supported in `[2^{-m-2}, 2^{-m+1}]·s`;
//!
//! where `s` is the length unit of the layering (the lattice scale).

use std::ops::RangeInclusive;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::flat_metric::WeightedPoints;
use crate::lattice::Lattice;
use crate::measures::DiscreteMeasure;
use crate::spatial::{dist, GridIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    CzoRadial,
    RieszSquared,
}

/// Non-increasing `ψ` equal to 1 up to `lower`, 0 from `upper`, joined by the
/// quintic smoothstep (C²).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub kind: BumpKind,
    pub lower: f64,
    pub upper: f64,
    pub max_psi: f64,
    pub max_dpsi: f64,
    pub max_d2psi: f64,
    /// `min |ψ'|` over `[1/3, 3]` (squared profile only).
    pub derivative_floor: Option<f64>,
    /// `1 / derivative_floor`.
    pub c5: Option<f64>,
}

fn smoothstep(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    let s = u2 * u * (10.0 - 15.0 * u + 6.0 * u2);
    let ds = 30.0 * u2 * (1.0 - u) * (1.0 - u);
    let d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
    (s, ds, d2s)
}

impl BumpProfile {
    fn raw(kind: BumpKind) -> Self {
        let (lower, upper) = match kind {
            BumpKind::CzoRadial => (0.5, 2.0),
            BumpKind::RieszSquared => (0.25, 4.0),
        };
        BumpProfile { kind, lower, upper, max_psi: 0.0, max_dpsi: 0.0, max_d2psi: 0.0, derivative_floor: None, c5: None }
    }

    /// `(ψ, ψ', ψ'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.lower {
            return (1.0, 0.0, 0.0);
        }
        if t >= self.upper {
            return (0.0, 0.0, 0.0);
        }
        let w = self.upper - self.lower;
        let (s, ds, d2s) = smoothstep((t - self.lower) / w);
        (1.0 - s, -ds / w, -d2s / (w * w))
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    /// `φ_j` at normalized distance `r = |x|/s`.
    pub fn layer_weight(&self, j: i32, r: f64) -> f64 {
        match self.kind {
            BumpKind::CzoRadial => {
                let a = 2f64.powi(j + 3) * r;
                self.psi(a) - self.psi(2.0 * a)
            }
            BumpKind::RieszSquared => {
                let a = 4f64.powi(j) * r * r;
                self.psi(a) - self.psi(4.0 * a)
            }
        }
    }

    /// Normalized support `[inner, outer]` of `φ_j`.
    pub fn annulus(&self, j: i32) -> (f64, f64) {
        match self.kind {
            BumpKind::CzoRadial => (2f64.powi(-j - 5), 2f64.powi(-j - 2)),
            BumpKind::RieszSquared => (2f64.powi(-j - 2), 2f64.powi(-j + 1)),
        }
    }

    /// Coarsest layer whose `ψ` factor is identically 1 on distances up to `s`,
    /// so that partial sums from it telescope to a full truncation.
    pub fn coarsest(&self) -> i32 {
        match self.kind {
            BumpKind::CzoRadial => -4,
            BumpKind::RieszSquared => -1,
        }
    }
}

/// Builds `ψ` and validates it on a dense grid.
pub fn make_bump(kind: BumpKind) -> Result<BumpProfile, KernelError> {
    let mut b = BumpProfile::raw(kind);
    let samples = 10_000;
    let hi = 1.25 * b.upper;
    let mut prev = f64::INFINITY;
    for k in 0..=samples {
        let t = hi * k as f64 / samples as f64;
        let (p, dp, d2p) = b.eval(t);
        if t <= b.lower && p != 1.0 {
            return Err(KernelError::Bump(format!("ψ({t}) = {p} below the plateau")));
        }
        if t >= b.upper && p != 0.0 {
            return Err(KernelError::Bump(format!("ψ({t}) = {p} beyond the support")));
        }
        if !(0.0..=1.0).contains(&p) || p > prev {
            return Err(KernelError::Bump(format!("ψ not monotone in [0, 1] at {t}")));
        }
        prev = p;
        b.max_psi = b.max_psi.max(p.abs());
        b.max_dpsi = b.max_dpsi.max(dp.abs());
        b.max_d2psi = b.max_d2psi.max(d2p.abs());
    }
    // C² junctions: one-sided derivatives vanish at both ends
    for t in [b.lower, b.upper] {
        let (_, dp, d2p) = b.eval(t + 1e-9);
        let (_, dm, d2m) = b.eval(t - 1e-9);
        if dp.abs().max(dm.abs()) > 1e-6 || d2p.abs().max(d2m.abs()) > 1e-3 {
            return Err(KernelError::Bump(format!("not C² at {t}")));
        }
    }
    if kind == BumpKind::RieszSquared {
        let mut floor = f64::INFINITY;
        for k in 0..=samples {
            let t = 1.0 / 3.0 + (3.0 - 1.0 / 3.0) * k as f64 / samples as f64;
            floor = floor.min(b.eval(t).1.abs());
        }
        if !(floor > 0.0) {
            return Err(KernelError::Bump("ψ' vanishes on [1/3, 3]".into()));
        }
        b.derivative_floor = Some(floor);
        b.c5 = Some(1.0 / floor);
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelKind {
    /// `x_i / |x|^{n+1}`, `component` counted from 1.
    Riesz { component: usize },
    /// `Π x_k^{a_k} / |x|^{n+|a|}` with `|a|` odd.
    CustomOdd { exponents: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub n: usize,
}

/// Sampled bounds of `|∇^j K(x)|·|x|^{n+j}` on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub samples: usize,
}

impl KernelSpec {
    pub fn riesz(component: usize, n: usize) -> Self {
        KernelSpec { kind: KernelKind::Riesz { component }, n }
    }

    pub fn validate(&self, d: usize) -> Result<(), KernelError> {
        if self.n == 0 || self.n > d {
            return Err(KernelError::Kernel(format!("homogeneity n = {} in R^{d}", self.n)));
        }
        match &self.kind {
            KernelKind::Riesz { component } => {
                if *component == 0 || *component > d {
                    return Err(KernelError::Component { component: *component, dim: d });
                }
            }
            KernelKind::CustomOdd { exponents } => {
                if exponents.len() != d {
                    return Err(KernelError::Kernel(format!("{} exponents in R^{d}", exponents.len())));
                }
                if exponents.iter().sum::<u32>() % 2 == 0 {
                    return Err(KernelError::Kernel("exponent sum must be odd".into()));
                }
            }
        }
        Ok(())
    }

    /// `K(x)`; odd by construction. `x ≠ 0`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        match &self.kind {
            KernelKind::Riesz { component } => x[component - 1] / r.powi(self.n as i32 + 1),
            KernelKind::CustomOdd { exponents } => {
                let mut num = 1.0;
                let mut deg = 0;
                for (v, &a) in x.iter().zip(exponents) {
                    num *= v.powi(a as i32);
                    deg += a as i32;
                }
                num / r.powi(self.n as i32 + deg)
            }
        }
    }

    /// Finite-difference certificate of the standard size/smoothness bounds.
    pub fn certificate(&self, d: usize, samples: usize, seed: u64) -> SmoothnessCertificate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-4;
        let (mut c0, mut c1, mut c2) = (0.0f64, 0.0f64, 0.0f64);
        let mut x = vec![0.0; d];
        for _ in 0..samples {
            loop {
                x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 0.1 && r <= 1.0 {
                    x.iter_mut().for_each(|v| *v /= r);
                    break;
                }
            }
            let k0 = self.eval(&x);
            c0 = c0.max(k0.abs());
            let mut grad2 = 0.0;
            let mut hess2 = 0.0;
            let shifted = |da: &[(usize, f64)]| {
                let mut y = x.clone();
                for &(a, t) in da {
                    y[a] += t;
                }
                self.eval(&y)
            };
            for a in 0..d {
                let g = (shifted(&[(a, h)]) - shifted(&[(a, -h)])) / (2.0 * h);
                grad2 += g * g;
                for b in 0..d {
                    let hab = if a == b {
                        (shifted(&[(a, h)]) - 2.0 * k0 + shifted(&[(a, -h)])) / (h * h)
                    } else {
                        (shifted(&[(a, h), (b, h)]) - shifted(&[(a, h), (b, -h)]) - shifted(&[(a, -h), (b, h)])
                            + shifted(&[(a, -h), (b, -h)]))
                            / (4.0 * h * h)
                    };
                    hess2 += hab * hab;
                }
            }
            c1 = c1.max(grad2.sqrt());
            c2 = c2.max(hess2.sqrt());
        }
        SmoothnessCertificate { c0, c1, c2, samples }
    }
}

/// A bump profile together with the physical length unit of its layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layering {
    pub bump: BumpProfile,
    pub scale: f64,
}

impl Layering {
    pub fn new(kind: BumpKind, scale: f64) -> Result<Self, KernelError> {
        Ok(Layering { bump: make_bump(kind)?, scale })
    }

    pub fn for_lattice(l: &Lattice, kind: BumpKind) -> Result<Self, KernelError> {
        Self::new(kind, l.scale_unit())
    }

    /// Physical support `[inner, outer]` of layer `j`.
    pub fn annulus(&self, j: i32) -> (f64, f64) {
        let (a, b) = self.bump.annulus(j);
        (a * self.scale, b * self.scale)
    }

    /// Layers from the coarsest telescoping one down to `finest`, keeping
    /// those whose annulus reaches `4h` and starts within the diameter.
    pub fn range(&self, m: &DiscreteMeasure, finest: i32) -> RangeInclusive<i32> {
        let h = m.resolution();
        let diam = m.diameter();
        let lo = self.bump.coarsest();
        let mut hi = finest;
        while hi >= lo && self.annulus(hi).1 < 4.0 * h {
            hi -= 1;
        }
        let mut lo = lo;
        while lo <= hi && self.annulus(lo).0 > diam {
            lo += 1;
        }
        lo..=hi
    }

    pub fn check(&self, m: &DiscreteMeasure, j: i32) -> Result<(), KernelError> {
        let (inner, outer) = self.annulus(j);
        if outer < 4.0 * m.resolution() || inner > m.diameter() {
            let r = self.range(m, j.max(64));
            return Err(KernelError::Layer { j, lo: *r.start(), hi: *r.end() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum FieldDescriptor {
    Layer { bump: BumpKind, j: i32 },
    Truncated { eps: f64 },
    Maximal { eps: Vec<f64> },
    PartialSum { bump: BumpKind, from: i32, to: i32 },
    Cube { cube: usize, bump: BumpKind, j: i32 },
    /// Layer of the measure restricted to a cube dilation.
    RestrictedLayer { bump: BumpKind, j: i32, cube: usize, dilation: f64 },
}

/// One value per support point of the carrier measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub values: Vec<f64>,
    pub carrier: u64,
    pub descriptor: FieldDescriptor,
    pub kernel: KernelSpec,
}

/// `Σ_y φ_j(x−y) K(x−y) w_y` at each target, summing sources in index order.
pub fn layer_at(
    sources: &WeightedPoints,
    targets: &[f64],
    kernel: &KernelSpec,
    layering: &Layering,
    j: i32,
) -> Vec<f64> {
    layer_at_many(sources, targets, std::slice::from_ref(kernel), layering, j).remove(0)
}

/// [`layer_at`] for several kernels sharing one neighbour search.
pub fn layer_at_many(
    sources: &WeightedPoints,
    targets: &[f64],
    kernels: &[KernelSpec],
    layering: &Layering,
    j: i32,
) -> Vec<Vec<f64>> {
    let d = sources.dim;
    let nt = targets.len() / d;
    let nk = kernels.len();
    let (inner, outer) = layering.annulus(j);
    if sources.is_empty() {
        return vec![vec![0.0; nt]; nk];
    }
    let index = GridIndex::build_all(&sources.coords, d, outer);
    let inner2 = inner * inner;
    let inv = 1.0 / layering.scale;
    let flat: Vec<Vec<f64>> = targets
        .par_chunks(d)
        .map(|x| {
            let mut diff = vec![0.0; d];
            let mut acc = vec![0.0; nk];
            index.for_each_within(&sources.coords, x, outer, |i, d2| {
                if d2 <= inner2 {
                    return;
                }
                let w = layering.bump.layer_weight(j, d2.sqrt() * inv);
                if w == 0.0 {
                    return;
                }
                let y = sources.point(i);
                for k in 0..d {
                    diff[k] = x[k] - y[k];
                }
                let ww = w * sources.weights[i];
                for (a, kernel) in acc.iter_mut().zip(kernels) {
                    *a += ww * kernel.eval(&diff);
                }
            });
            acc
        })
        .collect();
    (0..nk).map(|k| flat.iter().map(|v| v[k]).collect()).collect()
}

fn check_kernel(m: &DiscreteMeasure, kernel: &KernelSpec) -> Result<(), KernelError> {
    kernel.validate(m.ambient_dim())
}

/// `T_j μ` (or `R_m μ`) on the support of `μ`.
pub fn layer_field(m: &DiscreteMeasure, kernel: &KernelSpec, layering: &Layering, j: i32) -> Result<Field, KernelError> {
    check_kernel(m, kernel)?;
    layering.check(m, j)?;
    let values = layer_at(&WeightedPoints::from(m), m.coords(), kernel, layering, j);
    Ok(Field {
        values,
        carrier: m.fingerprint(),
        descriptor: FieldDescriptor::Layer { bump: layering.bump.kind, j },
        kernel: kernel.clone(),
    })
}

/// `T_ε μ` for every `ε` in `eps` (any order), from one pass over all pairs.
pub fn truncated_fields(m: &DiscreteMeasure, kernel: &KernelSpec, eps: &[f64]) -> Result<Vec<Field>, KernelError> {
    check_kernel(m, kernel)?;
    if let Some(&e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(KernelError::Truncation(e));
    }
    let d = m.ambient_dim();
    let n = m.len();
    // thresholds in decreasing order; bin b collects pairs with r in (t_b, t_{b-1}]
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let thresholds: Vec<f64> = order.iter().map(|&k| eps[k] * eps[k]).collect();
    let per_point: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = m.point(i);
            let mut bins = vec![0.0; thresholds.len()];
            let mut diff = vec![0.0; d];
            for k in 0..n {
                if k == i {
                    continue;
                }
                let y = m.point(k);
                let mut r2 = 0.0;
                for a in 0..d {
                    diff[a] = x[a] - y[a];
                    r2 += diff[a] * diff[a];
                }
                if r2 <= *thresholds.last().unwrap_or(&f64::INFINITY) {
                    continue;
                }
                // first threshold strictly below r²
                let b = thresholds.partition_point(|t| *t >= r2);
                bins[b] += kernel.eval(&diff) * m.weight(k);
            }
            let mut acc = 0.0;
            for v in bins.iter_mut() {
                acc += *v;
                *v = acc;
            }
            bins
        })
        .collect();
    let carrier = m.fingerprint();
    let mut out: Vec<Field> = eps
        .iter()
        .map(|&e| Field {
            values: vec![0.0; n],
            carrier,
            descriptor: FieldDescriptor::Truncated { eps: e },
            kernel: kernel.clone(),
        })
        .collect();
    for (i, bins) in per_point.iter().enumerate() {
        for (b, &k) in order.iter().enumerate() {
            out[k].values[i] = bins[b];
        }
    }
    Ok(out)
}

pub fn truncated_field(m: &DiscreteMeasure, kernel: &KernelSpec, eps: f64) -> Result<Field, KernelError> {
    Ok(truncated_fields(m, kernel, &[eps])?.remove(0))
}

/// `T_* μ = max_ε |T_ε μ|` over the given radii.
pub fn maximal_field(m: &DiscreteMeasure, kernel: &KernelSpec, eps: &[f64]) -> Result<Field, KernelError> {
    let fields = truncated_fields(m, kernel, eps)?;
    let mut values = vec![0.0f64; m.len()];
    for f in &fields {
        for (v, t) in values.iter_mut().zip(&f.values) {
            *v = v.max(t.abs());
        }
    }
    Ok(Field {
        values,
        carrier: m.fingerprint(),
        descriptor: FieldDescriptor::Maximal { eps: eps.to_vec() },
        kernel: kernel.clone(),
    })
}

/// Dyadic radii `2^{-k}·s ≥ 4h` for `k = 0..=finest`.
pub fn dyadic_radii(m: &DiscreteMeasure, scale: f64, finest: i32) -> Vec<f64> {
    (0..=finest).map(|k| 2f64.powi(-k) * scale).filter(|e| *e >= 4.0 * m.resolution()).collect()
}

/// `T_{(m)} μ = Σ_j T_j μ` from precomputed layers, summed in the given order.
pub fn partial_sum_field(layers: &[Field]) -> Result<Field, KernelError> {
    let first = layers.first().ok_or_else(|| KernelError::Kernel("no layers to sum".into()))?;
    let mut values = vec![0.0; first.values.len()];
    let mut js = Vec::new();
    let mut bump = BumpKind::CzoRadial;
    for f in layers {
        if f.carrier != first.carrier {
            return Err(KernelError::CarrierMismatch { expected: first.carrier, found: f.carrier });
        }
        if let FieldDescriptor::Layer { bump: b, j } = f.descriptor {
            js.push(j);
            bump = b;
        }
        values.iter_mut().zip(&f.values).for_each(|(v, x)| *v += x);
    }
    Ok(Field {
        values,
        carrier: first.carrier,
        descriptor: FieldDescriptor::PartialSum {
            bump,
            from: js.iter().copied().min().unwrap_or(0),
            to: js.iter().copied().max().unwrap_or(0),
        },
        kernel: first.kernel.clone(),
    })
}

fn check_carrier(m: &DiscreteMeasure, f: &Field) -> Result<(), KernelError> {
    let expected = m.fingerprint();
    if f.carrier != expected || f.values.len() != m.len() {
        return Err(KernelError::CarrierMismatch { expected, found: f.carrier });
    }
    Ok(())
}

/// `χ_Q · f`; with a layer field of generation `J(Q)` this is `T_Q μ`.
pub fn cube_restrict_field(l: &Lattice, f: &Field, q: usize) -> Result<Field, KernelError> {
    check_carrier(l.measure(), f)?;
    let cube = l.cube(q)?;
    let mut values = vec![0.0; f.values.len()];
    for &i in &cube.members {
        values[i] = f.values[i];
    }
    let (bump, j) = match f.descriptor {
        FieldDescriptor::Layer { bump, j } => (bump, j),
        _ => (BumpKind::CzoRadial, cube.generation as i32),
    };
    Ok(Field { values, carrier: f.carrier, descriptor: FieldDescriptor::Cube { cube: q, bump, j }, kernel: f.kernel.clone() })
}

/// `∫ f g dμ`.
pub fn field_inner(m: &DiscreteMeasure, f: &Field, g: &Field) -> Result<f64, KernelError> {
    check_carrier(m, f)?;
    check_carrier(m, g)?;
    Ok(f.values.iter().zip(&g.values).zip(m.weights()).map(|((a, b), w)| a * b * w).sum())
}

pub fn field_norm_sq(m: &DiscreteMeasure, f: &Field) -> Result<f64, KernelError> {
    field_inner(m, f, f)
}

/// `∫ |f| dμ`.
pub fn field_l1(m: &DiscreteMeasure, f: &Field) -> Result<f64, KernelError> {
    check_carrier(m, f)?;
    Ok(f.values.iter().zip(m.weights()).map(|(a, w)| a.abs() * w).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszEnergy {
    pub cube: usize,
    /// `(m, Σ_i ‖R_m^i μ|3Q‖²)` per layer.
    pub per_layer: Vec<(i32, f64)>,
    pub total: f64,
    pub cube_mass: f64,
}

/// `Σ_m ‖R_m μ|_{3Q}‖²_{L²(μ)}` summed over all Riesz components, for the
/// admissible layers up to `finest`.
pub fn riesz_energy(l: &Lattice, q: usize, layering: &Layering, finest: i32) -> Result<RieszEnergy, KernelError> {
    let layers: Vec<i32> = layering.range(l.measure(), finest).collect();
    let energies = riesz_layer_energies(l, q, layering, &layers)?;
    let per_layer: Vec<(i32, f64)> = layers.into_iter().zip(energies).collect();
    Ok(RieszEnergy {
        cube: q,
        total: per_layer.iter().map(|p| p.1).sum(),
        per_layer,
        cube_mass: l.cube(q)?.mass,
    })
}

/// `Σ_i ‖R_m^i μ|_{3Q}‖²` for each requested layer `m`.
pub fn riesz_layer_energies(l: &Lattice, q: usize, layering: &Layering, layers: &[i32]) -> Result<Vec<f64>, KernelError> {
    let m = l.measure();
    let d = m.ambient_dim();
    let n = m.intrinsic_dim();
    let ids = l.dilate(q, 3.0)?;
    let z = l.center_point(q);
    let mut sources = WeightedPoints::new(d);
    let mut reach = 0.0f64;
    for &i in &ids {
        sources.push(m.point(i), m.weight(i));
        reach = reach.max(dist(z, m.point(i)));
    }
    let kernels: Vec<KernelSpec> = (1..=d).map(|c| KernelSpec::riesz(c, n)).collect();
    let mut out = Vec::with_capacity(layers.len());
    for &j in layers {
        // the layer vanishes farther than its outer radius from every source
        let targets = l.points_in_ball(z, reach + layering.annulus(j).1);
        let mut coords = Vec::with_capacity(targets.len() * d);
        for &i in &targets {
            coords.extend_from_slice(m.point(i));
        }
        let mut e = 0.0;
        for vals in layer_at_many(&sources, &coords, &kernels, layering, j) {
            e += vals.iter().zip(&targets).map(|(v, &i)| v * v * m.weight(i)).sum::<f64>();
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::flat_patch;

    #[test]
    fn bump_plateaus_and_partition() {
        let b = make_bump(BumpKind::CzoRadial).unwrap();
        assert_eq!(b.psi(0.4), 1.0);
        assert_eq!(b.psi(2.1), 0.0);
        let r = make_bump(BumpKind::RieszSquared).unwrap();
        assert_eq!(r.psi(0.2), 1.0);
        assert_eq!(r.psi(4.5), 0.0);
        assert!(r.eval(1.0).1.abs() > 0.0);
        assert!(r.c5.unwrap() > 1.0);
        for bump in [b, r] {
            for k in 0..200 {
                let x = 2f64.powf(-4.0 + 8.0 * k as f64 / 199.0);
                let s: f64 = (-8..=8).map(|j| bump.layer_weight(j, x)).sum();
                assert!((s - 1.0).abs() < 1e-12, "{:?} at {x}: {s}", bump.kind);
            }
        }
    }

    #[test]
    fn kernel_is_odd() {
        let k = KernelSpec { kind: KernelKind::CustomOdd { exponents: vec![2, 1] }, n: 1 };
        k.validate(2).unwrap();
        let x = [0.3, -0.7];
        assert_eq!(k.eval(&x), -k.eval(&[-0.3, 0.7]));
        assert!(KernelSpec { kind: KernelKind::CustomOdd { exponents: vec![1, 1] }, n: 1 }.validate(2).is_err());
        assert!(KernelSpec::riesz(3, 1).validate(2).is_err());
        let c = KernelSpec::riesz(1, 1).certificate(2, 200, 1);
        assert!(c.c0 <= 1.0 + 1e-12 && c.c0 > 0.95 && c.c1.is_finite() && c.c2.is_finite());
    }

    #[test]
    fn two_point_antisymmetry() {
        let m = DiscreteMeasure::new(2, 1, vec![-0.5, 0.0, 0.5, 0.0], vec![1.0, 1.0], 0.01, "pair").unwrap();
        let lay = Layering::new(BumpKind::CzoRadial, 1.0).unwrap();
        let f = layer_field(&m, &KernelSpec::riesz(1, 1), &lay, -3).unwrap();
        assert!(f.values[0] != 0.0);
        assert_eq!(f.values[0], -f.values[1]);
        // layer whose annulus misses the pair
        let g = layer_field(&m, &KernelSpec::riesz(1, 1), &lay, 2).unwrap();
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn truncations_and_maximal() {
        let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 64, 1.0).unwrap();
        let k = KernelSpec::riesz(1, 1);
        let eps = [0.5, 0.25, 0.125];
        let fs = truncated_fields(&m, &k, &eps).unwrap();
        for (f, &e) in fs.iter().zip(&eps) {
            let direct = truncated_field(&m, &k, e).unwrap();
            for (a, b) in f.values.iter().zip(&direct.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let big = truncated_field(&m, &k, 2.0).unwrap();
        assert!(big.values.iter().all(|v| *v == 0.0));
        let mx = maximal_field(&m, &k, &eps).unwrap();
        for f in &fs {
            for (a, b) in mx.values.iter().zip(&f.values) {
                assert!(*a >= b.abs());
            }
        }
    }
}

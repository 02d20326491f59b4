//! Weighted point clouds standing in for AD-regular measures, their
//! generators, the text file format and empirical regularity probes.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MeasureError;
use crate::spatial::{dist, GridIndex};

/// A finite measure `Σ w_i δ_{x_i}` in `R^d` that models an `n`-dimensional
/// measure sampled at spacing `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    ambient_dim: usize,
    intrinsic_dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    resolution: f64,
    pub label: String,
}

impl DiscreteMeasure {
    pub fn new(
        ambient_dim: usize,
        intrinsic_dim: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        resolution: f64,
        label: impl Into<String>,
    ) -> Result<Self, MeasureError> {
        if ambient_dim == 0 || intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(MeasureError::Dimensions { intrinsic: intrinsic_dim, ambient: ambient_dim });
        }
        if !coords.len().is_multiple_of(ambient_dim) {
            return Err(MeasureError::Shape { len: coords.len(), dim: ambient_dim });
        }
        let n = coords.len() / ambient_dim;
        if n == 0 {
            return Err(MeasureError::NoPoints);
        }
        if weights.len() != n {
            return Err(MeasureError::WeightCount { weights: weights.len(), points: n });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(MeasureError::Weight { index: i, value: w });
            }
        }
        for i in 0..n {
            if coords[i * ambient_dim..(i + 1) * ambient_dim].iter().any(|x| !x.is_finite()) {
                return Err(MeasureError::NonFiniteCoordinate { index: i });
            }
        }
        let m = DiscreteMeasure {
            ambient_dim,
            intrinsic_dim,
            coords,
            weights,
            resolution,
            label: label.into(),
        };
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MeasureError::Resolution { h: resolution, diameter: f64::NAN });
        }
        if n >= 2 {
            // Bounding-box diagonal bounds the diameter within sqrt(d); a cheap
            // necessary test. The exact check would be quadratic.
            let diag = m.bounding_box_diagonal();
            if resolution > diag * (1.0 + 1e-12) {
                return Err(MeasureError::Resolution { h: resolution, diameter: diag });
            }
        }
        Ok(m)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass_of(&self, ids: &[usize]) -> f64 {
        ids.iter().map(|&i| self.weights[i]).sum()
    }

    /// Exact diameter of the support; quadratic in the number of points.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            let p = self.point(i);
            for j in i + 1..n {
                best = best.max(crate::spatial::dist2(p, self.point(j)));
            }
        }
        best.sqrt()
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.ambient_dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.len() {
            for (k, &x) in self.point(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        (lo, hi)
    }

    fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(&lo, &hi)
    }

    /// Weighted centroid of the support.
    pub fn centroid(&self) -> Vec<f64> {
        let d = self.ambient_dim;
        let mut c = vec![0.0; d];
        for i in 0..self.len() {
            for k in 0..d {
                c[k] += self.weights[i] * self.coords[i * d + k];
            }
        }
        let m = self.total_mass();
        c.iter_mut().for_each(|x| *x /= m);
        c
    }

    /// Stable 64-bit content hash of dimensions, coordinates and weights.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.ambient_dim as u64);
        eat(self.intrinsic_dim as u64);
        for x in &self.coords {
            eat(x.to_bits());
        }
        for w in &self.weights {
            eat(w.to_bits());
        }
        h
    }

    /// Keeps the points in `region` with unchanged weights.
    pub fn restrict(&self, region: &Region) -> Result<DiscreteMeasure, MeasureError> {
        let ids: Vec<usize> = match region {
            Region::Ball { center, radius } => {
                let r2 = radius * radius;
                (0..self.len())
                    .filter(|&i| crate::spatial::dist2(self.point(i), center) <= r2)
                    .collect()
            }
            Region::Indices(ids) => {
                let mut v: Vec<usize> = ids.iter().copied().filter(|&i| i < self.len()).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        if ids.is_empty() {
            return Err(MeasureError::EmptyMeasure { region: region.describe() });
        }
        Ok(self.select(&ids, &format!("{}|{}", self.label, region.describe())))
    }

    /// Sub-measure on the given (sorted, valid) indices.
    pub fn select(&self, ids: &[usize], label: &str) -> DiscreteMeasure {
        let d = self.ambient_dim;
        let mut coords = Vec::with_capacity(ids.len() * d);
        let mut weights = Vec::with_capacity(ids.len());
        for &i in ids {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        DiscreteMeasure {
            ambient_dim: d,
            intrinsic_dim: self.intrinsic_dim,
            coords,
            weights,
            resolution: self.resolution,
            label: label.to_string(),
        }
    }

    /// Same support, weights multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> DiscreteMeasure {
        let mut m = self.clone();
        m.weights.iter_mut().for_each(|w| *w *= s);
        m
    }
}

/// Region accepted by [`DiscreteMeasure::restrict`]: a closed ball or an
/// explicit index set (e.g. the union of some lattice cubes).
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Indices(Vec<usize>),
}

impl Region {
    fn describe(&self) -> String {
        match self {
            Region::Ball { center, radius } => format!("ball({center:?},{radius})"),
            Region::Indices(ids) => format!("cubes[{} pts]", ids.len()),
        }
    }
}

// ---------------------------------------------------------------- generators

/// Built-in graph maps `A: R^n -> R^{d-n}`. Only the first normal component
/// is non-zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphFamily {
    Zero,
    Constant { value: f64 },
    Linear { slope: Vec<f64> },
    /// `t · Σ_k sin(2π f x_k)`
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
}

impl GraphFamily {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            GraphFamily::Zero => 0.0,
            GraphFamily::Constant { value } => *value,
            GraphFamily::Linear { slope } => slope.iter().zip(x).map(|(a, b)| a * b).sum(),
            GraphFamily::Sine { amplitude, frequency } => {
                amplitude * x.iter().map(|&t| (2.0 * std::f64::consts::PI * frequency * t).sin()).sum::<f64>()
            }
        }
    }

    fn tag(&self) -> String {
        match self {
            GraphFamily::Zero => "zero".into(),
            GraphFamily::Constant { value } => format!("const{value}"),
            GraphFamily::Linear { slope } => format!("linear{slope:?}"),
            GraphFamily::Sine { amplitude, frequency } => format!("sine(t={amplitude},f={frequency})"),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_n() -> usize {
    1
}
fn default_d() -> usize {
    2
}

/// Declarative measure description, as found in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    LipschitzGraph {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "one")]
        side: f64,
        grid: usize,
        family: GraphFamily,
        #[serde(default = "one")]
        density: f64,
    },
    FlatPatch {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "one")]
        side: f64,
        resolution: usize,
        #[serde(default = "one")]
        density: f64,
        #[serde(default)]
        base: Option<Vec<f64>>,
        #[serde(default)]
        frame: Option<Vec<Vec<f64>>>,
    },
    Cantor4 {
        generation: u32,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "one")]
        total_mass: f64,
    },
    File { path: PathBuf },
}

impl MeasureSpec {
    /// `‖∇A‖₂²` for graph specs, `None` otherwise.
    pub fn gradient_energy(&self) -> Option<f64> {
        match self {
            MeasureSpec::LipschitzGraph { n, side, grid, family, .. } => Some(gradient_energy(*n, *side, *grid, family)),
            _ => None,
        }
    }
}

pub fn generate_measure(spec: &MeasureSpec) -> Result<DiscreteMeasure, MeasureError> {
    match spec {
        MeasureSpec::LipschitzGraph { n, d, side, grid, family, density } => {
            let rho = *density;
            let label = format!("graph[{}]n{n}d{d}g{grid}", family.tag());
            lipschitz_graph(*n, *d, *side, *grid, |x, out| {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[0] = family.eval(x);
            }, |_| rho, label)
        }
        MeasureSpec::FlatPatch { n, d, side, resolution, density, base, frame } => {
            let base = base.clone().unwrap_or_else(|| vec![0.0; *d]);
            let frame = match frame {
                Some(f) => f.clone(),
                None => (0..*n)
                    .map(|k| {
                        let mut e = vec![0.0; *d];
                        if k < *d {
                            e[k] = 1.0;
                        }
                        e
                    })
                    .collect(),
            };
            flat_patch(*n, *d, &base, &frame, *side, *resolution, *density)
        }
        MeasureSpec::Cantor4 { generation, d, total_mass } => cantor4(*generation, *d, *total_mass),
        MeasureSpec::File { path } => load_measure(path),
    }
}

/// Samples the graph `x ↦ (x, A(x))` over the cell-centred grid of
/// `[0, side]^n` with `grid` cells per axis. `a` writes the `d-n` graph
/// values, `rho` is the density evaluated on the graph point.
pub fn lipschitz_graph(
    n: usize,
    d: usize,
    side: f64,
    grid: usize,
    a: impl Fn(&[f64], &mut [f64]),
    rho: impl Fn(&[f64]) -> f64,
    label: impl Into<String>,
) -> Result<DiscreteMeasure, MeasureError> {
    if n == 0 || n >= d {
        return Err(MeasureError::Dimensions { intrinsic: n, ambient: d });
    }
    if grid < 2 {
        return Err(MeasureError::GridTooCoarse { grid });
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(MeasureError::Parameter(format!("side must be positive, got {side}")));
    }
    let codim = d - n;
    let step = side / grid as f64;
    let total = grid.checked_pow(n as u32).ok_or_else(|| MeasureError::Parameter("grid too large".into()))?;
    let mut base = vec![0.0; total * n];
    let mut vals = vec![0.0; total * codim];
    let mut multi = vec![0usize; n];
    for idx in 0..total {
        unravel(idx, grid, &mut multi);
        let x = &mut base[idx * n..(idx + 1) * n];
        for k in 0..n {
            x[k] = (multi[k] as f64 + 0.5) * step;
        }
        let v = &mut vals[idx * codim..(idx + 1) * codim];
        a(x, v);
        if v.iter().any(|t| !t.is_finite()) {
            return Err(MeasureError::NonFiniteValue { what: "graph value", at: x.to_vec() });
        }
    }
    let cell = step.powi(n as i32);
    let mut coords = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut jac = DMatrix::<f64>::zeros(codim, n);
    for idx in 0..total {
        unravel(idx, grid, &mut multi);
        for k in 0..n {
            let stride = grid.pow((n - 1 - k) as u32);
            let (lo, hi, span) = if multi[k] == 0 {
                (idx, idx + stride, step)
            } else if multi[k] == grid - 1 {
                (idx - stride, idx, step)
            } else {
                (idx - stride, idx + stride, 2.0 * step)
            };
            for c in 0..codim {
                jac[(c, k)] = (vals[hi * codim + c] - vals[lo * codim + c]) / span;
            }
        }
        let g = DMatrix::<f64>::identity(n, n) + jac.transpose() * &jac;
        let jdet = g.determinant().sqrt();
        let start = coords.len();
        coords.extend_from_slice(&base[idx * n..(idx + 1) * n]);
        coords.extend_from_slice(&vals[idx * codim..(idx + 1) * codim]);
        let r = rho(&coords[start..]);
        if !r.is_finite() {
            return Err(MeasureError::NonFiniteValue { what: "density", at: coords[start..].to_vec() });
        }
        weights.push(r * jdet * cell);
    }
    DiscreteMeasure::new(d, n, coords, weights, step, label)
}

/// `‖∇A‖₂²` of a built-in graph family by the same finite differences and
/// grid quadrature as the generator.
pub fn gradient_energy(n: usize, side: f64, grid: usize, family: &GraphFamily) -> f64 {
    let step = side / grid as f64;
    let total = grid.pow(n as u32);
    let mut multi = vec![0usize; n];
    let mut x = vec![0.0; n];
    let vals: Vec<f64> = (0..total)
        .map(|idx| {
            unravel(idx, grid, &mut multi);
            for k in 0..n {
                x[k] = (multi[k] as f64 + 0.5) * step;
            }
            family.eval(&x)
        })
        .collect();
    let mut sum = 0.0;
    for idx in 0..total {
        unravel(idx, grid, &mut multi);
        for k in 0..n {
            let stride = grid.pow((n - 1 - k) as u32);
            let g = if multi[k] == 0 {
                (vals[idx + stride] - vals[idx]) / step
            } else if multi[k] == grid - 1 {
                (vals[idx] - vals[idx - stride]) / step
            } else {
                (vals[idx + stride] - vals[idx - stride]) / (2.0 * step)
            };
            sum += g * g;
        }
    }
    sum * step.powi(n as i32)
}

// row-major: last axis fastest
fn unravel(mut idx: usize, grid: usize, out: &mut [usize]) {
    for k in (0..out.len()).rev() {
        out[k] = idx % grid;
        idx /= grid;
    }
}

/// Uniform quadrature of `c·H^n` on the square patch `base + [0,side]^n`
/// spanned by `frame`, `resolution` cells per axis.
pub fn flat_patch(
    n: usize,
    d: usize,
    base: &[f64],
    frame: &[Vec<f64>],
    side: f64,
    resolution: usize,
    c: f64,
) -> Result<DiscreteMeasure, MeasureError> {
    if n == 0 || n > d {
        return Err(MeasureError::Dimensions { intrinsic: n, ambient: d });
    }
    if resolution < 2 {
        return Err(MeasureError::GridTooCoarse { grid: resolution });
    }
    if base.len() != d || frame.len() != n || frame.iter().any(|e| e.len() != d) {
        return Err(MeasureError::Parameter("base/frame shape does not match (n, d)".into()));
    }
    for a in 0..n {
        for b in 0..n {
            let g: f64 = frame[a].iter().zip(&frame[b]).map(|(x, y)| x * y).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (g - want).abs() > 1e-10 {
                return Err(MeasureError::Parameter("frame is not orthonormal".into()));
            }
        }
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(MeasureError::Parameter(format!("density must be positive, got {c}")));
    }
    let step = side / resolution as f64;
    let total = resolution.pow(n as u32);
    let w = c * step.powi(n as i32);
    let mut multi = vec![0usize; n];
    let mut coords = Vec::with_capacity(total * d);
    for idx in 0..total {
        unravel(idx, resolution, &mut multi);
        for k in 0..d {
            let mut x = base[k];
            for a in 0..n {
                x += (multi[a] as f64 + 0.5) * step * frame[a][k];
            }
            coords.push(x);
        }
    }
    DiscreteMeasure::new(d, n, coords, vec![w; total], step, format!("flat_patch n{n}d{d}r{resolution}"))
}

/// Generation-`N` four-corner Cantor set in the first coordinate 2-plane:
/// centres of the `4^N` squares of side `4^{-N}` inside `[0,1]^2`.
pub fn cantor4(generation: u32, d: usize, total_mass: f64) -> Result<DiscreteMeasure, MeasureError> {
    if d < 2 {
        return Err(MeasureError::Dimensions { intrinsic: 1, ambient: d });
    }
    if generation > 12 {
        return Err(MeasureError::Parameter(format!("generation {generation} too large")));
    }
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(MeasureError::Parameter("total mass must be positive".into()));
    }
    let mut corners = vec![(0.0f64, 0.0f64)];
    let mut s = 1.0f64;
    for _ in 0..generation {
        let t = 0.75 * s;
        corners = corners
            .iter()
            .flat_map(|&(x, y)| [(x, y), (x + t, y), (x, y + t), (x + t, y + t)])
            .collect();
        s *= 0.25;
    }
    let count = corners.len();
    let mut coords = Vec::with_capacity(count * d);
    for (x, y) in corners {
        coords.push(x + s / 2.0);
        coords.push(y + s / 2.0);
        coords.extend(std::iter::repeat_n(0.0, d - 2));
    }
    let w = total_mass / count as f64;
    // A single square has no spacing; fall back to its side.
    DiscreteMeasure::new(d, 1, coords, vec![w; count], s, format!("cantor4{{{generation}}}"))
}

// ---------------------------------------------------------------- file format

pub fn save_measure(m: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<(), MeasureError> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "RMEAS 1 d={} n={} N={} h={:.16e}",
        m.ambient_dim,
        m.intrinsic_dim,
        m.len(),
        m.resolution
    );
    if !m.label.is_empty() {
        let _ = writeln!(out, "# label: {}", m.label.replace('\n', " "));
    }
    for i in 0..m.len() {
        for x in m.point(i) {
            let _ = write!(out, "{x:.16e} ");
        }
        let _ = writeln!(out, "{:.16e}", m.weight(i));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure, MeasureError> {
    let f = std::fs::File::open(path.as_ref())?;
    let mut lines = BufReader::new(f).lines();
    let mut label = path.as_ref().display().to_string();
    let header = loop {
        match lines.next() {
            None => return Err(MeasureError::Header("empty file".into())),
            Some(l) => {
                let l = l?;
                let t = l.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    break t.to_string();
                }
            }
        }
    };
    let (d, n, count, h) = parse_header(&header)?;
    let mut coords = Vec::with_capacity(count * d);
    let mut weights = Vec::with_capacity(count);
    let mut row = 0usize;
    for l in lines {
        let l = l?;
        let t = l.trim();
        if let Some(rest) = t.strip_prefix('#') {
            if let Some(lab) = rest.trim().strip_prefix("label:") {
                label = lab.trim().to_string();
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        row += 1;
        let vals: Result<Vec<f64>, _> = t.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| MeasureError::Row { row, reason: format!("unparsable number: {e}") })?;
        if vals.len() != d + 1 {
            return Err(MeasureError::Row {
                row,
                reason: format!("expected {} coordinates and a weight, found {} fields", d, vals.len()),
            });
        }
        let w = vals[d];
        if !(w > 0.0 && w.is_finite()) {
            return Err(MeasureError::Row { row, reason: format!("weight {w} is not positive") });
        }
        if vals[..d].iter().any(|x| !x.is_finite()) {
            return Err(MeasureError::Row { row, reason: "non-finite coordinate".into() });
        }
        coords.extend_from_slice(&vals[..d]);
        weights.push(w);
    }
    if row != count {
        return Err(MeasureError::RowCount { expected: count, found: row });
    }
    DiscreteMeasure::new(d, n, coords, weights, h, label)
}

fn parse_header(line: &str) -> Result<(usize, usize, usize, f64), MeasureError> {
    let mut it = line.split_whitespace();
    if it.next() != Some("RMEAS") || it.next() != Some("1") {
        return Err(MeasureError::Header(format!("expected `RMEAS 1 ...`, got {line:?}")));
    }
    let (mut d, mut n, mut count, mut h) = (None, None, None, None);
    for kv in it {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| MeasureError::Header(format!("bad field {kv:?}")))?;
        let bad = || MeasureError::Header(format!("bad value in {kv:?}"));
        match k {
            "d" => d = Some(v.parse::<usize>().map_err(|_| bad())?),
            "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
            "N" => count = Some(v.parse::<usize>().map_err(|_| bad())?),
            "h" => h = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(MeasureError::Header(format!("unknown field {k:?}"))),
        }
    }
    match (d, n, count, h) {
        (Some(d), Some(n), Some(c), Some(h)) if d > 0 => Ok((d, n, c, h)),
        _ => Err(MeasureError::Header("header needs d, n, N and h".into())),
    }
}

// ---------------------------------------------------------------- regularity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub radii: Vec<f64>,
    pub centers: usize,
    pub seed: u64,
    /// Allowed spread of a probe's ratio around the median ratio.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub r: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub c0_lower: f64,
    pub c0_upper: f64,
    pub probed_scales: Vec<f64>,
    pub probe_count: usize,
    pub violations: Vec<Violation>,
    pub seed: u64,
}

/// Empirical AD-regularity constants: extreme values of `μ(B(x,r))/r^n`
/// over support points `x` drawn with a seeded generator.
pub fn ad_regularity_report(
    m: &DiscreteMeasure,
    probe: &RegularityProbe,
) -> Result<RegularityReport, MeasureError> {
    if probe.radii.is_empty() {
        return Err(MeasureError::NoRadii);
    }
    if m.len() >= 2 {
        let (lo, hi) = (4.0 * m.resolution, m.diameter());
        for &r in &probe.radii {
            if r < lo * (1.0 - 1e-9) || r > hi * (1.0 + 1e-9) {
                return Err(MeasureError::Radius { r, lo, hi });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let count = probe.centers.max(1);
    let centers: Vec<usize> = if count >= m.len() {
        (0..m.len()).collect()
    } else {
        (0..count).map(|_| rng.random_range(0..m.len())).collect()
    };
    let rmax = probe.radii.iter().cloned().fold(0.0, f64::max);
    let index = GridIndex::build_all(m.coords(), m.ambient_dim, rmax.max(m.resolution));
    let n = m.intrinsic_dim as i32;
    let mut probes = Vec::with_capacity(centers.len() * probe.radii.len());
    for &c in &centers {
        for &r in &probe.radii {
            let mut mass = 0.0;
            index.for_each_within(m.coords(), m.point(c), r, |i, _| mass += m.weights[i]);
            probes.push((c, r, mass / r.powi(n)));
        }
    }
    let mut ratios: Vec<f64> = probes.iter().map(|p| p.2).collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    let tol = probe.tolerance.max(1.0);
    let violations = probes
        .iter()
        .filter(|p| p.2 > median * tol || p.2 < median / tol)
        .map(|&(c, r, ratio)| Violation { x: m.point(c).to_vec(), r, ratio })
        .collect();
    Ok(RegularityReport {
        c0_lower: ratios[0],
        c0_upper: *ratios.last().unwrap(),
        probed_scales: probe.radii.clone(),
        probe_count: probes.len(),
        violations,
        seed: probe.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(res: usize) -> DiscreteMeasure {
        flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, res, 1.0).unwrap()
    }

    #[test]
    fn flat_patch_segment() {
        let m = line(100);
        assert_eq!(m.len(), 100);
        assert!(m.weights().iter().all(|&w| (w - 0.01).abs() < 1e-15));
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_weights() {
        let zero = generate_measure(&MeasureSpec::LipschitzGraph {
            n: 1, d: 2, side: 1.0, grid: 64, family: GraphFamily::Zero, density: 1.0,
        })
        .unwrap();
        assert!(zero.weights().iter().all(|&w| w == 1.0 / 64.0));
        let diag = generate_measure(&MeasureSpec::LipschitzGraph {
            n: 1, d: 2, side: 1.0, grid: 64, family: GraphFamily::Linear { slope: vec![1.0] }, density: 1.0,
        })
        .unwrap();
        for &w in diag.weights() {
            assert!((w - 2f64.sqrt() / 64.0).abs() < 1e-15);
        }
        assert!((diag.total_mass() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn graph_rejects_bad_input() {
        let e = lipschitz_graph(1, 2, 1.0, 1, |_, o| o[0] = 0.0, |_| 1.0, "x").unwrap_err();
        assert!(matches!(e, MeasureError::GridTooCoarse { grid: 1 }));
        let e = lipschitz_graph(1, 2, 1.0, 8, |x, o| o[0] = if x[0] > 0.5 { f64::NAN } else { 0.0 }, |_| 1.0, "x")
            .unwrap_err();
        match e {
            MeasureError::NonFiniteValue { at, .. } => assert!(at[0] > 0.5),
            other => panic!("{other}"),
        }
        let e = lipschitz_graph(1, 2, 1.0, 8, |_, o| o[0] = 0.0, |p| 1.0 / (p[0] - 0.0625), "x").unwrap_err();
        assert!(matches!(e, MeasureError::NonFiniteValue { what: "density", .. }));
    }

    #[test]
    fn cantor_mass_and_count() {
        let c0 = cantor4(0, 2, 1.0).unwrap();
        let c3 = cantor4(3, 2, 1.0).unwrap();
        assert_eq!(c3.len(), 64);
        assert!((c3.total_mass() - c0.total_mass()).abs() < 1e-12);
        assert_eq!(c3.resolution(), 1.0 / 64.0);
        // corner centres of the first square
        assert_eq!(c3.point(0), &[1.0 / 128.0, 1.0 / 128.0]);
    }

    #[test]
    fn restrict_cases() {
        let m = line(100);
        let all = m.restrict(&Region::Ball { center: vec![0.5, 0.0], radius: 2.0 }).unwrap();
        assert_eq!(all.coords(), m.coords());
        assert_eq!(all.weights(), m.weights());
        let none = m.restrict(&Region::Ball { center: vec![5.0, 5.0], radius: 0.1 });
        assert!(matches!(none, Err(MeasureError::EmptyMeasure { .. })));
        let half = m.restrict(&Region::Ball { center: vec![0.0, 0.0], radius: 0.5 }).unwrap();
        assert!((half.total_mass() - 0.5).abs() <= m.resolution());
    }

    #[test]
    fn regularity_single_point() {
        let m = DiscreteMeasure::new(2, 1, vec![0.0, 0.0], vec![0.3], 0.1, "pt").unwrap();
        let r = ad_regularity_report(&m, &RegularityProbe { radii: vec![0.5], centers: 3, seed: 1, tolerance: 4.0 })
            .unwrap();
        assert_eq!(r.c0_lower, 0.3 / 0.5);
        assert_eq!(r.c0_upper, 0.3 / 0.5);
        let e = ad_regularity_report(&m, &RegularityProbe { radii: vec![], centers: 3, seed: 1, tolerance: 4.0 });
        assert!(matches!(e, Err(MeasureError::NoRadii)));
    }

    #[test]
    fn invariants_enforced() {
        assert!(DiscreteMeasure::new(2, 1, vec![0.0, 0.0], vec![0.0], 0.1, "").is_err());
        assert!(DiscreteMeasure::new(2, 3, vec![0.0, 0.0], vec![1.0], 0.1, "").is_err());
        assert!(DiscreteMeasure::new(2, 1, vec![0.0, 0.0, 1.0, 0.0], vec![1.0, 1.0], 5.0, "").is_err());
        assert!(DiscreteMeasure::new(2, 1, vec![], vec![], 0.1, "").is_err());
    }
}

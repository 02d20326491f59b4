//! Numerical checks of the multiscale inequalities. Each check collects
//! `(lhs, rhs)` pairs on one measure and fits the smallest `C*` with
//! `lhs ≤ C*·rhs`; a check passes when `C*` stays below its ceiling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coefficients::{betas_all, CubeBetas};
use crate::error::VerifyError;
use crate::flat_metric::{alpha_all, AlphaOptions, AlphaRecord, Plane};
use crate::kernels::{
    dyadic_radii, layer_field, riesz_layer_energies, truncated_fields, BumpKind, Field, KernelSpec, Layering,
};
use crate::lattice::{verify_lattice_to, Lattice};
use crate::spatial::Ball;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CheckId {
    Ch1,
    Ch2,
    Ch3,
    Ch4,
    Ch5,
    Ch6,
    Ch7,
    Ch8,
    Ch9,
    Ch10,
    Ch11,
    Ch12,
    Ch13,
    Ch14,
}

impl CheckId {
    pub const ALL: [CheckId; 14] = [
        CheckId::Ch1,
        CheckId::Ch2,
        CheckId::Ch3,
        CheckId::Ch4,
        CheckId::Ch5,
        CheckId::Ch6,
        CheckId::Ch7,
        CheckId::Ch8,
        CheckId::Ch9,
        CheckId::Ch10,
        CheckId::Ch11,
        CheckId::Ch12,
        CheckId::Ch13,
        CheckId::Ch14,
    ];

    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckId::Ch1 => "lemma31a",
            CheckId::Ch2 => "beta_le_alpha",
            CheckId::Ch3 => "plane_coherence",
            CheckId::Ch4 => "graph_packing",
            CheckId::Ch5 => "grad_equiv",
            CheckId::Ch6 => "tq_l1",
            CheckId::Ch7 => "tq_l2",
            CheckId::Ch8 => "dist_sum",
            CheckId::Ch9 => "energy_sum",
            CheckId::Ch10 => "quasiorth",
            CheckId::Ch11 => "main_bound",
            CheckId::Ch12 => "riesz_beta",
            CheckId::Ch13 => "lattice_axioms",
            CheckId::Ch14 => "unif_rect_b_c",
        }
    }

    /// 10² for single-scale relations, 10³ for multiscale sums, 16 for the
    /// lattice constants.
    pub fn default_ceiling(self) -> f64 {
        match self {
            CheckId::Ch13 => 16.0,
            CheckId::Ch1 | CheckId::Ch2 | CheckId::Ch3 | CheckId::Ch5 | CheckId::Ch6 | CheckId::Ch7 | CheckId::Ch8 => {
                1e2
            }
            _ => 1e3,
        }
    }

    /// Whether the check reads α records.
    pub fn needs_alpha(self) -> bool {
        !matches!(self, CheckId::Ch12 | CheckId::Ch13)
    }

    /// Whether the check reads β records.
    pub fn needs_betas(self) -> bool {
        matches!(self, CheckId::Ch2 | CheckId::Ch12)
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CH{}", self.number())
    }
}

impl FromStr for CheckId {
    type Err = VerifyError;

    /// Accepts `CH7`, `ch7` or the check name (`tq_l2`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let by_number = t
            .get(..2)
            .filter(|p| p.eq_ignore_ascii_case("ch"))
            .and_then(|_| t[2..].parse::<usize>().ok())
            .and_then(|k| k.checked_sub(1))
            .and_then(|k| Self::ALL.get(k).copied());
        by_number
            .or_else(|| Self::ALL.iter().copied().find(|c| c.name() == t))
            .ok_or_else(|| VerifyError::UnknownCheck(s.to_string()))
    }
}

impl From<CheckId> for String {
    fn from(c: CheckId) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for CheckId {
    type Error = VerifyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl Pair {
    pub fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Pair { label: label.into(), lhs, rhs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Coefficient undefined on the cube (too few points).
    Degenerate,
    /// The plane misses the ball.
    EmptyCap,
    /// Scale outside the admissible layer range.
    LayerOutOfRange,
    BothSidesSmall,
    FloorDominated,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPair {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub reason: Exclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub log10_lo: f64,
    pub log10_hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// `max lhs/rhs` over admitted pairs; with none admitted, the largest
    /// floor-dominated ratio, else 0.
    pub c_star: f64,
    /// Maximum over admitted pairs only (0 if none); this is what ceilings
    /// are compared against.
    pub admitted_max: f64,
    pub argmax: Option<String>,
    pub admitted: usize,
    pub zero_ratios: usize,
    /// Bins of width 1/2 in `log10(lhs/rhs)` over positive admitted ratios.
    pub histogram: Vec<HistogramBin>,
    pub excluded: Vec<ExcludedPair>,
}

impl Fit {
    pub fn count(&self, reason: Exclusion) -> usize {
        self.excluded.iter().filter(|e| e.reason == reason).count()
    }
}

/// `C* = max lhs/max(rhs, floor)`. Pairs with both sides `≤ floor` are
/// set aside as both-sides-small; pairs with only `rhs ≤ floor` are
/// floor-dominated and do not count towards the admitted maximum.
pub fn fit_constant(pairs: &[Pair], rhs_floor: f64) -> Result<Fit, VerifyError> {
    if pairs.is_empty() {
        return Err(VerifyError::NoAdmittedPairs("no pairs".into()));
    }
    let mut excluded = Vec::new();
    let mut admitted = 0;
    let mut zero_ratios = 0;
    let mut best: Option<(f64, &str)> = None;
    let mut dominated = 0.0f64;
    let mut logs = Vec::new();
    for p in pairs {
        let reason = if !p.lhs.is_finite() || !p.rhs.is_finite() || p.lhs < 0.0 || p.rhs < 0.0 {
            Some(Exclusion::NonFinite)
        } else if p.rhs <= rhs_floor && p.lhs <= rhs_floor {
            Some(Exclusion::BothSidesSmall)
        } else if p.rhs <= rhs_floor {
            dominated = dominated.max(p.lhs / rhs_floor);
            Some(Exclusion::FloorDominated)
        } else {
            None
        };
        if let Some(reason) = reason {
            excluded.push(ExcludedPair { label: p.label.clone(), lhs: p.lhs, rhs: p.rhs, reason });
            continue;
        }
        admitted += 1;
        let r = p.lhs / p.rhs;
        if r > 0.0 {
            logs.push(r.log10());
        } else {
            zero_ratios += 1;
        }
        if best.is_none_or(|(b, _)| r > b) {
            best = Some((r, &p.label));
        }
    }
    if admitted == 0 && excluded.iter().all(|e| e.reason == Exclusion::NonFinite) {
        return Err(VerifyError::NoAdmittedPairs(format!("{} non-finite", excluded.len())));
    }
    let admitted_max = best.map_or(0.0, |b| b.0);
    let c_star = if admitted > 0 { admitted_max } else { dominated };
    Ok(Fit {
        c_star,
        admitted_max,
        argmax: best.map(|b| b.1.to_string()),
        admitted,
        zero_ratios,
        histogram: histogram(&logs),
        excluded,
    })
}

fn histogram(logs: &[f64]) -> Vec<HistogramBin> {
    if logs.is_empty() {
        return Vec::new();
    }
    let lo = (logs.iter().copied().fold(f64::INFINITY, f64::min) * 2.0).floor() as i64;
    let hi = (logs.iter().copied().fold(f64::NEG_INFINITY, f64::max) * 2.0).floor() as i64;
    let mut bins: Vec<HistogramBin> = (lo..=hi)
        .map(|k| HistogramBin { log10_lo: k as f64 / 2.0, log10_hi: (k + 1) as f64 / 2.0, count: 0 })
        .collect();
    for &v in logs {
        let last = bins.len() - 1;
        let k = ((v * 2.0).floor() as i64 - lo) as usize;
        bins[k.min(last)].count += 1;
    }
    bins
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: CheckId,
    pub name: String,
    pub measure: String,
    /// Finest cube generation taken into account.
    pub depth: u32,
    pub seed: u64,
    /// Admitted pairs.
    pub pairs: Vec<Pair>,
    pub excluded: Vec<ExcludedPair>,
    pub admitted: usize,
    pub c_star: f64,
    pub argmax: Option<String>,
    pub histogram: Vec<HistogramBin>,
    pub ceiling: f64,
    pub pass: bool,
    pub notes: Vec<String>,
    pub details: BTreeMap<String, Value>,
}

impl CheckReport {
    pub fn exclusion_tally(&self) -> BTreeMap<Exclusion, usize> {
        let mut t = BTreeMap::new();
        for e in &self.excluded {
            *t.entry(e.reason).or_insert(0) += 1;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub alpha: AlphaOptions,
    /// Kernels assembled into the vector field `T`; empty means every Riesz
    /// component.
    pub kernels: Vec<KernelSpec>,
    /// Per-check ceiling overrides.
    pub ceilings: BTreeMap<CheckId, f64>,
    /// The rhs floor is this factor times the natural scale of the check.
    pub rhs_floor: f64,
    /// Boundary samples per axis for plane caps.
    pub cap_samples: usize,
    /// Thresholds for the bad-cube condition.
    pub epsilons: Vec<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            alpha: AlphaOptions::default(),
            kernels: Vec::new(),
            ceilings: BTreeMap::new(),
            rhs_floor: 1e-12,
            cap_samples: 64,
            epsilons: vec![0.1, 0.2, 0.4],
        }
    }
}

impl VerifyOptions {
    pub fn ceiling(&self, id: CheckId) -> f64 {
        self.ceilings.get(&id).copied().unwrap_or_else(|| id.default_ceiling())
    }
}

/// One lattice with lazily computed, cached coefficient records and
/// fields. Checks may be restricted to a coarser depth than the lattice:
/// only cubes of generation `≤ depth` and layers `≤ depth` are used, which
/// is the same as running on the shallower lattice since generations are
/// built coarse to fine.
pub struct Workbench {
    lattice: Lattice,
    opts: VerifyOptions,
    gradient_energy: Option<f64>,
    alpha: Option<Vec<AlphaRecord>>,
    betas: Option<Vec<CubeBetas>>,
    kernels: Vec<KernelSpec>,
    czo: Layering,
    riesz: Layering,
    layers: BTreeMap<(usize, i32), Field>,
    riesz_layers: BTreeMap<(usize, i32), f64>,
    maximal: BTreeMap<u32, Vec<f64>>,
}

impl Workbench {
    pub fn new(lattice: Lattice, opts: VerifyOptions) -> Result<Self, VerifyError> {
        let m = lattice.measure();
        let (d, n) = (m.ambient_dim(), m.intrinsic_dim());
        let kernels = if opts.kernels.is_empty() {
            (1..=d).map(|c| KernelSpec::riesz(c, n)).collect()
        } else {
            opts.kernels.clone()
        };
        for k in &kernels {
            k.validate(d)?;
        }
        let czo = Layering::for_lattice(&lattice, BumpKind::CzoRadial)?;
        let riesz = Layering::for_lattice(&lattice, BumpKind::RieszSquared)?;
        Ok(Workbench {
            lattice,
            opts,
            gradient_energy: None,
            alpha: None,
            betas: None,
            kernels,
            czo,
            riesz,
            layers: BTreeMap::new(),
            riesz_layers: BTreeMap::new(),
            maximal: BTreeMap::new(),
        })
    }

    /// `‖∇A‖₂²` of the underlying graph, needed by CH5.
    pub fn with_gradient_energy(mut self, e: Option<f64>) -> Self {
        self.gradient_energy = e;
        self
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn options(&self) -> &VerifyOptions {
        &self.opts
    }

    /// Installs previously computed α records (e.g. from a cache).
    pub fn set_alpha(&mut self, records: Vec<AlphaRecord>) -> Result<(), VerifyError> {
        if records.len() != self.lattice.len() || records.iter().enumerate().any(|(i, r)| r.cube != i) {
            return Err(VerifyError::Prerequisite { check: "alpha".into(), what: "one record per cube in id order".into() });
        }
        self.alpha = Some(records);
        Ok(())
    }

    pub fn set_betas(&mut self, records: Vec<CubeBetas>) -> Result<(), VerifyError> {
        if records.len() != self.lattice.len() {
            return Err(VerifyError::Prerequisite { check: "beta".into(), what: "one record per cube".into() });
        }
        self.betas = Some(records);
        Ok(())
    }

    pub fn alpha(&mut self) -> Result<&[AlphaRecord], VerifyError> {
        self.ensure_alpha()?;
        Ok(self.alpha.as_deref().unwrap())
    }

    pub fn betas(&mut self) -> Result<&[CubeBetas], VerifyError> {
        self.ensure_betas()?;
        Ok(self.betas.as_deref().unwrap())
    }

    fn ensure_alpha(&mut self) -> Result<(), VerifyError> {
        if self.alpha.is_none() {
            self.alpha = Some(alpha_all(&self.lattice, &self.opts.alpha)?);
        }
        Ok(())
    }

    fn ensure_betas(&mut self) -> Result<(), VerifyError> {
        if self.betas.is_none() {
            self.betas = Some(betas_all(&self.lattice)?);
        }
        Ok(())
    }

    /// Admissible CZO layers up to `depth`.
    pub fn czo_layers(&self, depth: u32) -> Vec<i32> {
        self.czo.range(self.lattice.measure(), depth as i32).collect()
    }

    fn ensure_layers(&mut self, js: &[i32]) -> Result<(), VerifyError> {
        let todo: Vec<(usize, i32)> = (0..self.kernels.len())
            .flat_map(|k| js.iter().map(move |&j| (k, j)))
            .filter(|key| !self.layers.contains_key(key))
            .collect();
        let m = self.lattice.measure();
        let fields: Vec<Field> = todo
            .iter()
            .map(|&(k, j)| layer_field(m, &self.kernels[k], &self.czo, j))
            .collect::<Result<_, _>>()?;
        self.layers.extend(todo.into_iter().zip(fields));
        Ok(())
    }

    fn resolve_depth(&self, depth: Option<u32>) -> Result<u32, VerifyError> {
        let max = self.lattice.depth();
        match depth {
            None => Ok(max),
            Some(d) if d <= max => Ok(d),
            Some(d) => Err(VerifyError::Prerequisite {
                check: "depth".into(),
                what: format!("a lattice of depth ≥ {d} (have {max})"),
            }),
        }
    }

    fn cubes(&self, depth: u32) -> Vec<usize> {
        (0..=depth).flat_map(|j| self.lattice.generation(j).iter().copied()).collect()
    }

    /// Bottom-up subtree sums of `own` over cubes of generation `≤ depth`.
    fn subtree_sums(&self, depth: u32, own: impl Fn(usize) -> f64) -> Vec<f64> {
        let l = &self.lattice;
        let mut acc = vec![0.0; l.len()];
        for j in (0..=depth).rev() {
            for &q in l.generation(j) {
                let mut s = own(q);
                if j < depth {
                    s += l.cubes()[q].children.iter().map(|&c| acc[c]).sum::<f64>();
                }
                acc[q] = s;
            }
        }
        acc
    }

    fn packing(&self, depth: u32) -> Vec<f64> {
        let alpha = self.alpha.as_deref().unwrap();
        let cubes = self.lattice.cubes();
        self.subtree_sums(depth, |q| alpha[q].alpha.powi(2) * cubes[q].mass)
    }

    fn packing_total(&self, depth: u32) -> f64 {
        let acc = self.packing(depth);
        self.lattice.generation(0).iter().map(|&q| acc[q]).sum()
    }

    /// Runs one check on cubes and layers of generation `≤ depth`
    /// (default: the full lattice).
    pub fn run(&mut self, id: CheckId, depth: Option<u32>) -> Result<CheckReport, VerifyError> {
        let depth = self.resolve_depth(depth)?;
        let mass = self.lattice.measure().total_mass();
        let scale = self.lattice.scale_unit();
        let n = self.lattice.measure().intrinsic_dim() as i32;
        let mut out = Outcome::default();
        // natural scale of the rhs, for the floor
        let natural = match id {
            CheckId::Ch1 => {
                self.ensure_alpha()?;
                let alpha = self.alpha.as_deref().unwrap();
                for q in self.cubes(depth) {
                    out.pairs.push(Pair::new(format!("Q{q}"), alpha[q].alpha, 1.0));
                }
                1.0
            }
            CheckId::Ch2 => {
                self.ensure_alpha()?;
                self.ensure_betas()?;
                self.check_beta_alpha(depth, &mut out);
                1.0
            }
            CheckId::Ch3 => {
                self.ensure_alpha()?;
                self.check_coherence(depth, &mut out);
                1.0
            }
            CheckId::Ch4 => {
                self.ensure_alpha()?;
                self.check_packing(depth, &mut out);
                scale.powi(n)
            }
            CheckId::Ch5 => {
                self.ensure_alpha()?;
                let grad = self.gradient_energy.ok_or_else(|| VerifyError::Prerequisite {
                    check: id.to_string(),
                    what: "the gradient energy of a graph measure".into(),
                })?;
                let total = self.packing_total(depth);
                out.pairs.push(Pair::new("packing/gradient", total, grad));
                out.details.insert("packing".into(), json!(total));
                out.details.insert("gradient_energy".into(), json!(grad));
                out.details.insert("ratio".into(), json!(total / grad));
                out.two_sided = true;
                grad.max(total)
            }
            CheckId::Ch6 | CheckId::Ch7 => {
                self.ensure_alpha()?;
                self.check_tq(id, depth, &mut out)?;
                mass
            }
            CheckId::Ch8 => {
                self.ensure_alpha()?;
                self.check_dist_sum(depth, &mut out);
                scale
            }
            CheckId::Ch9 | CheckId::Ch10 => {
                self.ensure_alpha()?;
                self.check_energy(id, depth, &mut out)?;
                mass
            }
            CheckId::Ch11 => {
                self.ensure_alpha()?;
                self.check_main(depth, &mut out)?;
                mass
            }
            CheckId::Ch12 => {
                self.ensure_betas()?;
                self.check_riesz_beta(depth, &mut out)?;
                mass
            }
            CheckId::Ch13 => {
                self.check_lattice(depth, &mut out)?;
                1.0
            }
            CheckId::Ch14 => {
                self.ensure_alpha()?;
                self.check_unif_rect(depth, &mut out)?;
                mass
            }
        };
        let floor = self.opts.rhs_floor * natural;
        self.finish(id, depth, floor, out)
    }

    fn finish(&self, id: CheckId, depth: u32, floor: f64, out: Outcome) -> Result<CheckReport, VerifyError> {
        let mut fit = fit_constant(&out.pairs, floor)?;
        if out.two_sided {
            // bracket [1/C*, C*]: fit the reversed pairs as well
            let rev: Vec<Pair> = out.pairs.iter().map(|p| Pair::new(p.label.clone(), p.rhs, p.lhs)).collect();
            let back = fit_constant(&rev, floor)?;
            if back.admitted_max > fit.admitted_max {
                fit.admitted_max = back.admitted_max;
                fit.c_star = back.c_star;
                fit.argmax = back.argmax.map(|a| format!("{a} (reversed)"));
            }
        }
        let excluded_labels: std::collections::BTreeSet<&str> =
            fit.excluded.iter().map(|e| e.label.as_str()).collect();
        let pairs: Vec<Pair> = out.pairs.iter().filter(|p| !excluded_labels.contains(p.label.as_str())).cloned().collect();
        let mut excluded = out.excluded;
        excluded.extend(fit.excluded.iter().cloned());
        let ceiling = self.opts.ceiling(id);
        let c_star = fit.admitted_max;
        let pass = c_star <= ceiling && out.hard_failures.is_empty();
        let mut details = out.details;
        details.insert("fit_c_star".into(), json!(fit.c_star));
        details.insert("zero_ratios".into(), json!(fit.zero_ratios));
        details.insert("rhs_floor".into(), json!(floor));
        if !out.hard_failures.is_empty() {
            details.insert("hard_failures".into(), json!(out.hard_failures));
        }
        Ok(CheckReport {
            check: id,
            name: id.name().to_string(),
            measure: self.lattice.measure().label.clone(),
            depth,
            seed: self.opts.alpha.seed,
            admitted: pairs.len(),
            pairs,
            excluded,
            c_star,
            argmax: fit.argmax,
            histogram: fit.histogram,
            ceiling,
            pass,
            notes: out.notes,
            details,
        })
    }

    fn check_beta_alpha(&self, depth: u32, out: &mut Outcome) {
        let alpha = self.alpha.as_deref().unwrap();
        let betas = self.betas.as_deref().unwrap();
        let mut first_max = 0.0f64;
        let mut violations = Vec::new();
        let mut scatter = Vec::new();
        for q in self.cubes(depth) {
            let b = &betas[q];
            let (b1, bb1, a) = (b.beta1.value, b.bilateral1.value, alpha[q].alpha);
            if b.beta1.degenerate || b.bilateral1.degenerate {
                out.excluded.push(ExcludedPair { label: format!("Q{q}"), lhs: bb1, rhs: a, reason: Exclusion::Degenerate });
                continue;
            }
            if bb1 > 0.0 {
                first_max = first_max.max(b1 / bb1);
            }
            if b1 > bb1 * (1.0 + 1e-9) {
                violations.push(q);
            }
            scatter.push(json!([q, a, b1, bb1]));
            out.pairs.push(Pair::new(format!("Q{q}"), bb1, a));
        }
        out.details.insert("first_inequality_max".into(), json!(first_max));
        out.details.insert("first_inequality_violations".into(), json!(violations));
        out.details.insert("scatter_columns".into(), json!(["cube", "alpha", "beta1", "bilateral_beta1"]));
        out.details.insert("scatter".into(), Value::Array(scatter));
        if !violations.is_empty() {
            out.hard_failures.push(format!("beta1 exceeds bilateral beta1 on {} cubes", violations.len()));
        }
    }

    fn check_coherence(&self, depth: u32, out: &mut Outcome) {
        let l = &self.lattice;
        let alpha = self.alpha.as_deref().unwrap();
        let k = self.opts.cap_samples.max(2);
        let mut haus_max = 0.0f64;
        let mut c_max = 0.0f64;
        for p in self.cubes(depth) {
            let Some(q) = l.cubes()[p].parent else { continue };
            let ball = l.cube_ball(q, self.opts.alpha.ball);
            let a = alpha[q].alpha;
            let side = l.side(q);
            match (Cap::new(&alpha[p].plane, &ball), Cap::new(&alpha[q].plane, &ball)) {
                (Some(cp), Some(cq)) => {
                    let h = cp.hausdorff(&cq, k) / side;
                    if a > 0.0 {
                        haus_max = haus_max.max(h / a);
                    }
                    out.pairs.push(Pair::new(format!("hausdorff:P{p}"), h, a));
                }
                _ => out.excluded.push(ExcludedPair {
                    label: format!("hausdorff:P{p}"),
                    lhs: f64::NAN,
                    rhs: a,
                    reason: Exclusion::EmptyCap,
                }),
            }
            let dc = (alpha[p].c - alpha[q].c).abs();
            if a > 0.0 {
                c_max = c_max.max(dc / a);
            }
            out.pairs.push(Pair::new(format!("density:P{p}"), dc, a));
        }
        out.details.insert("hausdorff_max_ratio".into(), json!(haus_max));
        out.details.insert("density_max_ratio".into(), json!(c_max));
        out.notes.push("parent/child pairs only; Hausdorff distances in units of ℓ(Q)".into());
    }

    fn check_packing(&self, depth: u32, out: &mut Outcome) {
        let l = &self.lattice;
        let n = l.measure().intrinsic_dim() as i32;
        let alpha = self.alpha.as_deref().unwrap();
        let acc = self.packing(depth);
        for q in self.cubes(depth) {
            out.pairs.push(Pair::new(format!("R{q}"), acc[q], l.side(q).powi(n)));
        }
        let per_generation: Vec<f64> = (0..=depth)
            .map(|j| l.generation(j).iter().map(|&q| alpha[q].alpha.powi(2) * l.cubes()[q].mass).sum())
            .collect();
        let cumulative: Vec<f64> = per_generation
            .iter()
            .scan(0.0, |s, v| {
                *s += v;
                Some(*s)
            })
            .collect();
        let xs: Vec<f64> = (0..=depth).map(f64::from).collect();
        let (slope, intercept, r2) = linear_fit(&xs, &cumulative);
        let roots = l.generation(0);
        let root_sum: f64 = roots.iter().map(|&q| acc[q]).sum();
        let root_ratio = root_sum / l.side(roots[0]).powi(n);
        out.details.insert("root_ratio".into(), json!(root_ratio));
        out.details.insert("per_generation".into(), json!(per_generation));
        out.details.insert("cumulative".into(), json!(cumulative));
        out.details.insert("growth".into(), json!({"slope": slope, "intercept": intercept, "r2": r2}));
    }

    fn check_tq(&mut self, id: CheckId, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let js: Vec<i32> = self.czo_layers(depth).into_iter().filter(|&j| j >= 0).collect();
        self.ensure_layers(&js)?;
        let l = &self.lattice;
        let m = l.measure();
        let alpha = self.alpha.as_deref().unwrap();
        let cubes = l.cubes();
        let a_num = self.subtree_sums(depth, |q| alpha[q].alpha.powi(2) * l.ell(q) * cubes[q].mass);
        for q in self.cubes(depth) {
            let c = &cubes[q];
            let j = c.generation as i32;
            let (lhs_l1, lhs_l2) = if js.contains(&j) {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for &i in &c.members {
                    let v2: f64 = (0..self.kernels.len()).map(|k| self.layers[&(k, j)].values[i].powi(2)).sum();
                    s1 += v2.sqrt() * m.weight(i);
                    s2 += v2 * m.weight(i);
                }
                (s1, s2)
            } else {
                (f64::NAN, f64::NAN)
            };
            let (lhs, rhs) = match id {
                CheckId::Ch6 => (lhs_l1, alpha[q].alpha * c.mass),
                // A²(Q)·μ(Q) = Σ_{P⊆Q} α(P)² ℓ(P)/ℓ(Q) μ(P)
                _ => (lhs_l2, a_num[q] / l.ell(q)),
            };
            if lhs.is_nan() {
                out.excluded.push(ExcludedPair { label: format!("Q{q}"), lhs, rhs, reason: Exclusion::LayerOutOfRange });
            } else {
                out.pairs.push(Pair::new(format!("Q{q}"), lhs, rhs));
            }
        }
        out.details.insert("layers".into(), json!(js));
        Ok(())
    }

    fn check_dist_sum(&self, depth: u32, out: &mut Outcome) {
        let l = &self.lattice;
        let m = l.measure();
        let alpha = self.alpha.as_deref().unwrap();
        for i in 0..m.len() {
            let x = m.point(i);
            let chain: Vec<usize> = (0..=depth).map(|j| l.owner(j, i)).collect();
            let mut tail = 0.0;
            let mut rows = Vec::with_capacity(chain.len());
            for &q in chain.iter().rev() {
                tail += alpha[q].alpha * l.side(q);
                rows.push((q, alpha[q].plane.dist(x), tail));
            }
            for (q, lhs, rhs) in rows.into_iter().rev() {
                out.pairs.push(Pair::new(format!("x{i}/Q{q}"), lhs, rhs));
            }
        }
    }

    fn excluded_layers(&self, depth: u32) -> Vec<Value> {
        let m = self.lattice.measure();
        let range = self.czo.range(m, depth as i32);
        let mut v = Vec::new();
        for j in self.czo.bump.coarsest()..=depth as i32 {
            if range.contains(&j) {
                continue;
            }
            let (inner, outer) = self.czo.annulus(j);
            let reason = if outer < 4.0 * m.resolution() { "annulus below 4h" } else { "annulus beyond the diameter" };
            v.push(json!({"j": j, "inner": inner, "outer": outer, "reason": reason}));
        }
        v
    }

    fn check_energy(&mut self, id: CheckId, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let js = self.czo_layers(depth);
        if js.is_empty() {
            return Err(VerifyError::Prerequisite { check: id.to_string(), what: "at least one admissible layer".into() });
        }
        self.ensure_layers(&js)?;
        let m = self.lattice.measure();
        let w = m.weights();
        let nk = self.kernels.len();
        let inner = |a: &Field, b: &Field| -> f64 {
            a.values.iter().zip(&b.values).zip(w).map(|((x, y), w)| x * y * w).sum()
        };
        let mut energy = Vec::new();
        for &j in &js {
            energy.push((0..nk).map(|k| inner(&self.layers[&(k, j)], &self.layers[&(k, j)])).sum::<f64>());
        }
        let mut cross_abs = 0.0;
        let mut cross_signed = 0.0;
        for (a, &j) in js.iter().enumerate() {
            for &k in &js[a + 1..] {
                let v: f64 = (0..nk).map(|c| inner(&self.layers[&(c, j)], &self.layers[&(c, k)])).sum();
                cross_abs += 2.0 * v.abs();
                cross_signed += 2.0 * v;
            }
        }
        // ‖Σ_j T_j μ‖² against its assembly from the Gram entries
        let mut full = 0.0;
        for c in 0..nk {
            let mut s = vec![0.0; m.len()];
            for &j in &js {
                s.iter_mut().zip(&self.layers[&(c, j)].values).for_each(|(a, b)| *a += b);
            }
            full += s.iter().zip(w).map(|(v, w)| v * v * w).sum::<f64>();
        }
        let diagonal: f64 = energy.iter().sum();
        let assembled = diagonal + cross_signed;
        let parseval = (full - assembled).abs() / full.abs().max(f64::MIN_POSITIVE);
        let rhs = self.packing_total(depth);
        let lhs = if id == CheckId::Ch9 { diagonal } else { cross_abs };
        out.pairs.push(Pair::new("layers", lhs, rhs));
        out.details.insert("layers".into(), json!(js));
        out.details.insert("layer_energy".into(), json!(energy));
        out.details.insert("cross_abs".into(), json!(cross_abs));
        out.details.insert("partial_sum_energy".into(), json!(full));
        out.details.insert("parseval_relative_error".into(), json!(parseval));
        out.details.insert("excluded_layers".into(), Value::Array(self.excluded_layers(depth)));
        Ok(())
    }

    fn check_main(&mut self, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let m = self.lattice.measure();
        let eps = dyadic_radii(m, self.lattice.scale_unit(), depth as i32 + 2);
        if eps.is_empty() {
            return Err(VerifyError::Prerequisite { check: "CH11".into(), what: "a truncation radius ≥ 4h".into() });
        }
        if !self.maximal.contains_key(&depth) {
            let mut sq = vec![vec![0.0; m.len()]; eps.len()];
            for k in &self.kernels {
                for (e, f) in truncated_fields(m, k, &eps)?.iter().enumerate() {
                    sq[e].iter_mut().zip(&f.values).for_each(|(a, v)| *a += v * v);
                }
            }
            let tmax: Vec<f64> =
                (0..m.len()).map(|i| sq.iter().map(|s| s[i]).fold(0.0, f64::max).sqrt()).collect();
            self.maximal.insert(depth, tmax);
        }
        let m = self.lattice.measure();
        let tmax = &self.maximal[&depth];
        let lhs: f64 = tmax.iter().zip(m.weights()).map(|(t, w)| t * t * w).sum();
        let packing = self.packing_total(depth);
        out.pairs.push(Pair::new("maximal", lhs, packing + m.total_mass()));
        out.details.insert("radii".into(), json!(eps));
        out.details.insert("packing".into(), json!(packing));
        out.details.insert("mass".into(), json!(m.total_mass()));
        out.details.insert("excluded_layers".into(), Value::Array(self.excluded_layers(depth)));
        out.notes.push("the additive mass term is the total mass μ(E)".into());
        Ok(())
    }

    fn check_riesz_beta(&mut self, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let cubes = self.cubes(depth);
        let layers: Vec<i32> = self.riesz.range(self.lattice.measure(), depth as i32).collect();
        let todo: Vec<(usize, Vec<i32>)> = cubes
            .iter()
            .map(|&q| (q, layers.iter().copied().filter(|&j| !self.riesz_layers.contains_key(&(q, j))).collect()))
            .filter(|(_, js): &(usize, Vec<i32>)| !js.is_empty())
            .collect();
        let l = &self.lattice;
        let lay = &self.riesz;
        let computed: Vec<Vec<f64>> = todo
            .par_iter()
            .map(|(q, js)| riesz_layer_energies(l, *q, lay, js))
            .collect::<Result<_, _>>()?;
        for ((q, js), es) in todo.into_iter().zip(computed) {
            for (j, e) in js.into_iter().zip(es) {
                self.riesz_layers.insert((q, j), e);
            }
        }
        let energy = |q: usize| layers.iter().map(|&j| self.riesz_layers[&(q, j)]).sum::<f64>();
        let l = &self.lattice;
        let betas = self.betas.as_deref().unwrap();
        let acc = self.subtree_sums(depth, |q| {
            let b = &betas[q].beta2;
            if b.degenerate {
                0.0
            } else {
                b.value.powi(2) * l.cubes()[q].mass
            }
        });
        for &q in &cubes {
            let rhs = energy(q) + l.cubes()[q].mass;
            out.pairs.push(Pair::new(format!("Q{q}"), acc[q], rhs));
        }
        let root = l.generation(0)[0];
        out.details.insert("root_lhs".into(), json!(acc[root]));
        out.details.insert("root_energy".into(), json!(energy(root)));
        out.details.insert("layers".into(), json!(layers));
        Ok(())
    }

    fn check_lattice(&self, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let l = &self.lattice;
        let rep = verify_lattice_to(l, depth)?;
        let n = l.measure().intrinsic_dim() as i32;
        let nominal_mass = l.measure().total_mass() / l.scale_unit().powi(n);
        let factor = |v: f64, nominal: f64| {
            let r = v / nominal;
            if r > 0.0 {
                r.max(1.0 / r)
            } else {
                f64::MAX
            }
        };
        out.pairs.push(Pair::new("diameter_min", factor(rep.diameter_ratio[0], 1.0), 1.0));
        out.pairs.push(Pair::new("diameter_max", factor(rep.diameter_ratio[1], 1.0), 1.0));
        out.pairs.push(Pair::new("mass_min", factor(rep.mass_ratio[0], nominal_mass), 1.0));
        out.pairs.push(Pair::new("mass_max", factor(rep.mass_ratio[1], nominal_mass), 1.0));
        if rep.center_depth_ratio[1] > 0.0 {
            out.pairs.push(Pair::new("center_depth_min", factor(rep.center_depth_ratio[0], 1.0), 1.0));
        }
        out.details.insert("nominal_mass_ratio".into(), json!(nominal_mass));
        out.details.insert("report".into(), serde_json::to_value(&rep).unwrap_or(Value::Null));
        out.notes.push("pairs hold the factor max(v/nominal, nominal/v) of each extreme constant".into());
        Ok(())
    }

    fn check_unif_rect(&self, depth: u32, out: &mut Outcome) -> Result<(), VerifyError> {
        let l = &self.lattice;
        let alpha = self.alpha.as_deref().unwrap();
        let cubes = self.cubes(depth);
        let acc = self.packing(depth);
        let mut fits = BTreeMap::new();
        let mut b_pairs = Vec::new();
        for &r in &cubes {
            b_pairs.push(Pair::new(format!("b:R{r}"), acc[r], l.cubes()[r].mass));
        }
        fits.insert("b".to_string(), json!(fit_constant(&b_pairs, 0.0)?.admitted_max));
        out.pairs.extend(b_pairs);
        for &eps in &self.opts.epsilons {
            let bad = self.subtree_sums(depth, |q| if alpha[q].alpha > eps { l.cubes()[q].mass } else { 0.0 });
            let pairs: Vec<Pair> =
                cubes.iter().map(|&r| Pair::new(format!("c{eps}:R{r}"), bad[r], l.cubes()[r].mass)).collect();
            fits.insert(format!("c{eps}"), json!(fit_constant(&pairs, 0.0)?.admitted_max));
            out.pairs.extend(pairs);
        }
        out.details.insert("per_condition".into(), json!(fits));
        Ok(())
    }
}

#[derive(Default)]
struct Outcome {
    pairs: Vec<Pair>,
    excluded: Vec<ExcludedPair>,
    notes: Vec<String>,
    details: BTreeMap<String, Value>,
    hard_failures: Vec<String>,
    two_sided: bool,
}

/// `L ∩ B` as a centre and in-plane radius.
struct Cap<'a> {
    plane: &'a Plane,
    center: Vec<f64>,
    radius: f64,
}

impl<'a> Cap<'a> {
    fn new(plane: &'a Plane, ball: &Ball) -> Option<Self> {
        let h = plane.dist(&ball.center);
        if h > ball.radius {
            return None;
        }
        Some(Cap { plane, center: plane.local(&ball.center), radius: (ball.radius.powi(2) - h * h).sqrt() })
    }

    fn dist(&self, x: &[f64]) -> f64 {
        let u = self.plane.local(x);
        let r: f64 = u.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let out = (r - self.radius).max(0.0);
        (self.plane.dist(x).powi(2) + out * out).sqrt()
    }

    /// Samples of the relative boundary: `±1` for `n = 1`, otherwise the
    /// surface of a `k`-point grid cube projected to the sphere. Since the
    /// distance to a convex set is convex, the supremum over a cap is
    /// attained on its boundary.
    fn boundary(&self, k: usize) -> Vec<Vec<f64>> {
        let n = self.plane.dim();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        if n == 1 {
            dirs.push(vec![1.0]);
            dirs.push(vec![-1.0]);
        } else {
            let total = k.pow(n as u32);
            for idx in 0..total {
                let mut rem = idx;
                let mut g = vec![0usize; n];
                for v in g.iter_mut() {
                    *v = rem % k;
                    rem /= k;
                }
                if !g.iter().any(|&v| v == 0 || v == k - 1) {
                    continue;
                }
                let u: Vec<f64> = g.iter().map(|&v| -1.0 + 2.0 * v as f64 / (k - 1) as f64).collect();
                let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                dirs.push(u.iter().map(|a| a / norm).collect());
            }
        }
        dirs.into_iter()
            .map(|d| {
                let u: Vec<f64> = self.center.iter().zip(&d).map(|(c, t)| c + self.radius * t).collect();
                self.plane.at(&u)
            })
            .collect()
    }

    fn hausdorff(&self, other: &Cap, k: usize) -> f64 {
        let a = self.boundary(k).iter().map(|x| other.dist(x)).fold(0.0, f64::max);
        let b = other.boundary(k).iter().map(|x| self.dist(x)).fold(0.0, f64::max);
        a.max(b)
    }
}

/// Builds a workbench and runs a single check.
pub fn run_check(
    id: CheckId,
    lattice: Lattice,
    opts: &VerifyOptions,
    gradient_energy: Option<f64>,
    depth: Option<u32>,
) -> Result<CheckReport, VerifyError> {
    Workbench::new(lattice, opts.clone())?.with_gradient_energy(gradient_energy).run(id, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat_metric::Plane;

    #[test]
    fn fit_examples() {
        let f = fit_constant(&[Pair::new("a", 1.0, 2.0), Pair::new("b", 3.0, 3.0)], 1e-12).unwrap();
        assert_eq!(f.c_star, 1.0);
        assert_eq!(f.argmax.as_deref(), Some("b"));
        let f = fit_constant(&[Pair::new("a", 0.0, 0.0)], 1e-12).unwrap();
        assert_eq!(f.c_star, 0.0);
        assert_eq!(f.count(Exclusion::BothSidesSmall), 1);
        let f = fit_constant(&[Pair::new("a", 1.0, 0.0)], 1e-12).unwrap();
        assert!((f.c_star - 1e12).abs() < 1.0);
        assert_eq!(f.admitted_max, 0.0);
        assert_eq!(f.count(Exclusion::FloorDominated), 1);
        assert!(fit_constant(&[], 1e-12).is_err());
        assert!(fit_constant(&[Pair::new("a", f64::NAN, 1.0)], 1e-12).is_err());
    }

    #[test]
    fn check_ids_parse() {
        assert_eq!("CH7".parse::<CheckId>().unwrap(), CheckId::Ch7);
        assert_eq!("ch14".parse::<CheckId>().unwrap(), CheckId::Ch14);
        assert_eq!("tq_l2".parse::<CheckId>().unwrap(), CheckId::Ch7);
        assert!(matches!("CH99".parse::<CheckId>(), Err(VerifyError::UnknownCheck(s)) if s == "CH99"));
        assert!("CH0".parse::<CheckId>().is_err());
        let s = serde_json::to_string(&CheckId::Ch12).unwrap();
        assert_eq!(s, "\"CH12\"");
        assert_eq!(serde_json::from_str::<CheckId>(&s).unwrap(), CheckId::Ch12);
    }

    #[test]
    fn tilted_segments_hausdorff() {
        // two lines through the ball centre at angle θ: caps are diameters
        // and the Hausdorff distance is R·sin θ
        let th = 0.3f64;
        let a = Plane::coordinate(vec![0.0, 0.0], 1);
        let b = Plane::new(vec![0.0, 0.0], vec![vec![th.cos(), th.sin()]]).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 2.0);
        let ca = Cap::new(&a, &ball).unwrap();
        let cb = Cap::new(&b, &ball).unwrap();
        assert!((ca.hausdorff(&cb, 8) - 2.0 * th.sin()).abs() < 1e-12);
        // parallel shift by s: caps of radius √(R²−s²) vs R
        let c = Plane::coordinate(vec![0.0, 0.5], 1);
        let cc = Cap::new(&c, &ball).unwrap();
        let r2 = (4.0f64 - 0.25).sqrt();
        let expect = ((2.0 - r2).powi(2) + 0.25).sqrt();
        assert!((ca.hausdorff(&cc, 8) - expect).abs() < 1e-12);
        assert!(Cap::new(&Plane::coordinate(vec![0.0, 3.0], 1), &ball).is_none());
    }

    #[test]
    fn linear_fit_exact() {
        let (s, i, r2) = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}

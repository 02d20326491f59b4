//! Christ–David style dyadic cubes on the support of a discrete measure.
//!
//! Lengths come in two flavours: the normalized side `2^{-j}` (support
//! diameter 1) and the physical side `2^{-j}·scale_unit`.

use serde::{Deserialize, Serialize};

use crate::error::LatticeError;
use crate::measures::DiscreteMeasure;
use crate::spatial::{dist, dist2, Ball, GridIndex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub id: usize,
    pub generation: u32,
    /// Index of the centre point `z_Q` in the measure.
    pub center: usize,
    /// Sorted member indices.
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub mass: f64,
    /// Diameter of the member set (physical units).
    pub diameter: f64,
}

/// Radius convention for the cube ball `B_Q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallConvention {
    /// `B(z_Q, 3ℓ(Q))`
    #[default]
    SideLength,
    /// `B(z_Q, 3 d(Q))`
    Diameter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    pub depth: u32,
    /// Physical length of one normalized unit; defaults to the support diameter.
    #[serde(default)]
    pub scale_unit: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Lattice {
    measure: DiscreteMeasure,
    cubes: Vec<DyadicCube>,
    generations: Vec<Vec<usize>>,
    scale_unit: f64,
    owner: Vec<Vec<u32>>,
    index: Vec<GridIndex>,
}

pub fn build_lattice(measure: &DiscreteMeasure, depth: u32) -> Result<Lattice, LatticeError> {
    Lattice::build(measure, &LatticeOptions { depth, scale_unit: None })
}

/// Largest depth allowed by the `2^{-j}·scale ≥ 4h` floor.
pub fn max_admissible_depth(scale: f64, h: f64) -> u32 {
    let q = scale / (4.0 * h);
    if q < 1.0 {
        0
    } else {
        // guard against log2 rounding just below an integer
        let mut j = q.log2().floor() as u32;
        while 2f64.powi(j as i32 + 1) <= q * (1.0 + 1e-12) {
            j += 1;
        }
        while j > 0 && 2f64.powi(j as i32) > q * (1.0 + 1e-12) {
            j -= 1;
        }
        j
    }
}

impl Lattice {
    pub fn build(measure: &DiscreteMeasure, opts: &LatticeOptions) -> Result<Lattice, LatticeError> {
        let depth = opts.depth;
        let np = measure.len();
        let dim = measure.ambient_dim();
        let coords = measure.coords();
        let diameter = measure.diameter();
        let h = measure.resolution();
        let scale = match opts.scale_unit {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return Err(LatticeError::Axiom(format!("scale unit {s} must be positive"))),
            None if diameter > 0.0 => diameter,
            None => h,
        };
        if diameter > 0.0 && 2f64.powi(-(depth as i32)) * scale < 4.0 * h * (1.0 - 1e-12) {
            return Err(LatticeError::DepthTooFine {
                requested: depth,
                max_admissible: max_admissible_depth(scale, h),
            });
        }

        let all: Vec<usize> = (0..np).collect();
        let centroid = measure.centroid();
        let root_center = (0..np)
            .min_by(|&a, &b| dist2(measure.point(a), &centroid).total_cmp(&dist2(measure.point(b), &centroid)))
            .unwrap();
        let mut cubes = vec![DyadicCube {
            id: 0,
            generation: 0,
            center: root_center,
            members: all,
            parent: None,
            children: Vec::new(),
            mass: measure.total_mass(),
            diameter,
        }];
        let mut generations = vec![vec![0usize]];
        let mut owner = vec![vec![0u32; np]];
        let mut index = vec![GridIndex::build_all(coords, dim, scale)];

        for j in 1..=depth {
            let side = scale * 2f64.powi(-(j as i32));
            let r = side / 2.0;
            let prev = &generations[j as usize - 1];
            let prev_owner = &owner[j as usize - 1];

            // greedy net seeded with the parent centres
            let mut net: Vec<usize> = Vec::new();
            let mut is_net = vec![false; np];
            let mut net_grid = GridIndex::empty(dim, r);
            for &pid in prev {
                let c = cubes[pid].center;
                net.push(c);
                is_net[c] = true;
                net_grid.insert(coords, c);
            }
            for i in 0..np {
                if is_net[i] {
                    continue;
                }
                if !net_grid.any_within(coords, measure.point(i), r, |q| dist2(measure.point(q), measure.point(i)) < r * r)
                {
                    net.push(i);
                    is_net[i] = true;
                    net_grid.insert(coords, i);
                }
            }
            // completion: every point needs a net point of its own parent within r
            for i in 0..np {
                if is_net[i] {
                    continue;
                }
                let p = prev_owner[i];
                let covered = net_grid.any_within(coords, measure.point(i), r, |q| {
                    prev_owner[q] == p && dist2(measure.point(q), measure.point(i)) < r * r
                });
                if !covered {
                    net.push(i);
                    is_net[i] = true;
                    net_grid.insert(coords, i);
                }
            }
            let mut net_rank = vec![usize::MAX; np];
            for (k, &q) in net.iter().enumerate() {
                net_rank[q] = k;
            }

            // assignment to the nearest same-parent net point
            let mut assign = vec![0usize; np];
            for i in 0..np {
                let p = prev_owner[i];
                let mut best: Option<(f64, usize)> = None;
                net_grid.for_each_within(coords, measure.point(i), r, |q, d2| {
                    if prev_owner[q] != p {
                        return;
                    }
                    let k = net_rank[q];
                    match best {
                        Some((bd, bk)) if bd < d2 || (bd == d2 && bk < k) => {}
                        _ => best = Some((d2, k)),
                    }
                });
                assign[i] = best.expect("completion guarantees a same-parent net point").1;
            }

            let first_id = cubes.len();
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); net.len()];
            for i in 0..np {
                members[assign[i]].push(i);
            }
            let mut gen_owner = vec![0u32; np];
            let mut ids = Vec::with_capacity(net.len());
            for (k, mem) in members.into_iter().enumerate() {
                let id = first_id + k;
                for &i in &mem {
                    gen_owner[i] = id as u32;
                }
                let parent = prev_owner[net[k]] as usize;
                cubes[parent].children.push(id);
                let mass = measure.mass_of(&mem);
                cubes.push(DyadicCube {
                    id,
                    generation: j,
                    center: net[k],
                    members: mem,
                    parent: Some(parent),
                    children: Vec::new(),
                    mass,
                    diameter: 0.0,
                });
                ids.push(id);
            }

            // re-centre each cube at its deepest member
            let gen_index = GridIndex::build_all(coords, dim, side);
            let depth_of = |i: usize| -> f64 {
                let own = gen_owner[i];
                gen_index
                    .nearest_where(coords, measure.point(i), side, |q| gen_owner[q] != own)
                    .map_or(side, |(_, d)| d.min(side))
            };
            for &id in &ids {
                let net_pt = cubes[id].center;
                let mut best = (depth_of(net_pt), net_pt);
                for &i in &cubes[id].members {
                    if i == net_pt {
                        continue;
                    }
                    let dq = depth_of(i);
                    if dq > best.0 {
                        best = (dq, i);
                    }
                }
                cubes[id].center = best.1;
                cubes[id].diameter = set_diameter(measure, &cubes[id].members);
            }
            generations.push(ids);
            owner.push(gen_owner);
            index.push(gen_index);
        }
        Ok(Lattice { measure: measure.clone(), cubes, generations, scale_unit: scale, owner, index })
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn cube(&self, id: usize) -> Result<&DyadicCube, LatticeError> {
        self.cubes.get(id).ok_or(LatticeError::UnknownCube(id))
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Finest generation present.
    pub fn depth(&self) -> u32 {
        (self.generations.len() - 1) as u32
    }

    pub fn generation(&self, j: u32) -> &[usize] {
        self.generations.get(j as usize).map_or(&[], |v| v.as_slice())
    }

    pub fn scale_unit(&self) -> f64 {
        self.scale_unit
    }

    /// Normalized side `2^{-j}`.
    pub fn ell(&self, id: usize) -> f64 {
        2f64.powi(-(self.cubes[id].generation as i32))
    }

    /// Physical side `2^{-j}·scale_unit`.
    pub fn side(&self, id: usize) -> f64 {
        self.ell(id) * self.scale_unit
    }

    pub fn generation_side(&self, j: u32) -> f64 {
        2f64.powi(-(j as i32)) * self.scale_unit
    }

    /// Cube of generation `j` containing point `i`.
    pub fn owner(&self, j: u32, i: usize) -> usize {
        self.owner[j as usize][i] as usize
    }

    pub fn center_point(&self, id: usize) -> &[f64] {
        self.measure.point(self.cubes[id].center)
    }

    /// Grid index over all points with cell `2^{-j}·scale_unit`.
    pub fn grid_index(&self, j: u32) -> &GridIndex {
        &self.index[j as usize]
    }

    /// Sorted indices of support points in the closed ball.
    pub fn points_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        self.index[self.index_for(radius)].within(self.measure.coords(), center, radius)
    }

    fn index_for(&self, radius: f64) -> usize {
        let mut j = 0;
        while j + 1 < self.index.len() && self.index[j + 1].cell() >= radius {
            j += 1;
        }
        j
    }

    /// Nearest support point to `x`.
    pub fn nearest_support(&self, x: &[f64]) -> (usize, f64) {
        let idx = &self.index[self.index.len() - 1];
        idx.nearest(self.measure.coords(), x).expect("measure is non-empty")
    }

    /// `Q` together with all its descendants, in increasing id order.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut k = 0;
        while k < out.len() {
            out.extend_from_slice(&self.cubes[out[k]].children);
            k += 1;
        }
        out.sort_unstable();
        out
    }

    pub fn is_descendant(&self, p: usize, q: usize) -> bool {
        let mut cur = Some(p);
        while let Some(c) = cur {
            if c == q {
                return true;
            }
            if self.cubes[c].generation <= self.cubes[q].generation {
                return false;
            }
            cur = self.cubes[c].parent;
        }
        false
    }

    pub fn cube_ball(&self, id: usize, convention: BallConvention) -> Ball {
        let r = match convention {
            BallConvention::SideLength => 3.0 * self.side(id),
            BallConvention::Diameter => 3.0 * self.cubes[id].diameter,
        };
        Ball::new(self.center_point(id).to_vec(), r)
    }

    /// `λQ = {x ∈ E : dist(x, Q) ≤ (λ-1)ℓ(Q)}` as sorted point indices.
    pub fn dilate(&self, id: usize, lambda: f64) -> Result<Vec<usize>, LatticeError> {
        let q = self.cube(id)?;
        if !(lambda >= 1.0) {
            return Err(LatticeError::Dilation(lambda));
        }
        if lambda == 1.0 {
            return Ok(q.members.clone());
        }
        let rho = (lambda - 1.0) * self.side(id);
        let m = &self.measure;
        if rho >= self.cubes[0].diameter {
            return Ok((0..m.len()).collect());
        }
        let coords = m.coords();
        let member_index = GridIndex::build(coords, m.ambient_dim(), rho, q.members.iter().copied());
        let j = q.generation;
        let mut inside = vec![false; m.len()];
        for &i in &q.members {
            inside[i] = true;
        }
        let reach = q.diameter + rho;
        let mut out = Vec::new();
        self.index[self.index_for(reach)].for_each_within(coords, self.center_point(id), reach, |y, _| {
            if inside[y] || member_index.any_within(coords, m.point(y), rho, |_| true) {
                out.push(y);
            }
        });
        let _ = j;
        out.sort_unstable();
        Ok(out)
    }

    /// Cubes `T ≠ S` of the same generation with `dist(S, T) ≤ ℓ(S)`.
    pub fn neighbors(&self, id: usize) -> Result<Vec<usize>, LatticeError> {
        let j = self.cube(id)?.generation;
        let mut out: Vec<usize> = self.dilate(id, 2.0)?.into_iter().map(|i| self.owner(j, i)).filter(|&t| t != id).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Export without member lists unless requested.
    pub fn export(&self, with_members: bool) -> LatticeExport {
        LatticeExport {
            scale_unit: self.scale_unit,
            depth: self.depth(),
            cubes: self
                .cubes
                .iter()
                .map(|c| CubeExport {
                    id: c.id,
                    j: c.generation,
                    center: self.measure.point(c.center).to_vec(),
                    ell: self.side(c.id),
                    mass: c.mass,
                    parent_id: c.parent,
                    child_ids: c.children.clone(),
                    member_count: c.members.len(),
                    members: with_members.then(|| c.members.clone()),
                })
                .collect(),
        }
    }
}

fn set_diameter(m: &DiscreteMeasure, ids: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in ids.iter().enumerate() {
        let p = m.point(i);
        for &k in &ids[a + 1..] {
            best = best.max(dist2(p, m.point(k)));
        }
    }
    best.sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubeExport {
    pub id: usize,
    pub j: u32,
    pub center: Vec<f64>,
    pub ell: f64,
    pub mass: f64,
    pub parent_id: Option<usize>,
    pub child_ids: Vec<usize>,
    pub member_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub members: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeExport {
    pub scale_unit: f64,
    pub depth: u32,
    pub cubes: Vec<CubeExport>,
}

/// Observed constants of the size and separation axioms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    pub partition_violations: usize,
    pub nesting_violations: usize,
    /// min/max of `d(Q)/(2^{-j}·scale)` over cubes with at least two points
    pub diameter_ratio: [f64; 2],
    /// min/max of `μ(Q)/(2^{-j}·scale)^n`
    pub mass_ratio: [f64; 2],
    /// min/max of `dist(z_Q, E∖Q)/(2^{-j}·scale)` over cubes with `E∖Q ≠ ∅`
    pub center_depth_ratio: [f64; 2],
    pub cubes_per_generation: Vec<usize>,
    pub scale_unit: f64,
}

/// Axiom report; partition or nesting failures are construction bugs and
/// abort with an error.
pub fn verify_lattice(l: &Lattice) -> Result<LatticeReport, LatticeError> {
    verify_lattice_to(l, l.depth())
}

/// [`verify_lattice`] restricted to generations `≤ depth`.
pub fn verify_lattice_to(l: &Lattice, depth: u32) -> Result<LatticeReport, LatticeError> {
    let rep = lattice_report_to(l, depth);
    if rep.partition_violations > 0 || rep.nesting_violations > 0 {
        return Err(LatticeError::Axiom(format!(
            "{} partition and {} nesting violations",
            rep.partition_violations, rep.nesting_violations
        )));
    }
    Ok(rep)
}

/// Same as [`verify_lattice`] without failing on violations.
pub fn lattice_report(l: &Lattice) -> LatticeReport {
    lattice_report_to(l, l.depth())
}

/// [`lattice_report`] restricted to generations `≤ depth`.
pub fn lattice_report_to(l: &Lattice, depth: u32) -> LatticeReport {
    let gens = &l.generations[..=(depth.min(l.depth()) as usize)];
    let m = l.measure();
    let np = m.len();
    let n = m.intrinsic_dim() as i32;
    let mut partition_violations = 0;
    let mut nesting_violations = 0;
    for (j, ids) in gens.iter().enumerate() {
        let mut seen = vec![0u32; np];
        for &id in ids {
            for &i in &l.cubes[id].members {
                seen[i] += 1;
            }
        }
        partition_violations += seen.iter().filter(|&&c| c != 1).count();
        if j > 0 {
            for &id in ids {
                let p = l.cubes[id].parent.expect("non-root cube has a parent");
                let parent_gen = &l.owner[j - 1];
                nesting_violations += l.cubes[id].members.iter().filter(|&&i| parent_gen[i] as usize != p).count();
            }
        }
    }
    let mut dr = [f64::INFINITY, f64::NEG_INFINITY];
    let mut mr = [f64::INFINITY, f64::NEG_INFINITY];
    let mut cr = [f64::INFINITY, f64::NEG_INFINITY];
    let upd = |r: &mut [f64; 2], v: f64| {
        r[0] = r[0].min(v);
        r[1] = r[1].max(v);
    };
    for c in gens.iter().flatten().map(|&id| &l.cubes[id]) {
        let side = l.side(c.id);
        if c.members.len() >= 2 {
            upd(&mut dr, c.diameter / side);
        }
        upd(&mut mr, c.mass / side.powi(n));
        if c.members.len() < np {
            let j = c.generation;
            let z = m.point(c.center);
            // Nearest non-member; fall back to brute force if none nearby.
            let own = c.id;
            let d = l.grid_index(j)
                .nearest_where(m.coords(), z, f64::INFINITY, |q| l.owner(j, q) != own)
                .map(|(_, d)| d)
                .unwrap_or_else(|| {
                    (0..np).filter(|&q| l.owner(j, q) != own).map(|q| dist(z, m.point(q))).fold(f64::INFINITY, f64::min)
                });
            upd(&mut cr, d / side);
        }
    }
    let fix = |r: [f64; 2]| if r[0].is_finite() { r } else { [0.0, 0.0] };
    LatticeReport {
        partition_violations,
        nesting_violations,
        diameter_ratio: fix(dr),
        mass_ratio: fix(mr),
        center_depth_ratio: fix(cr),
        cubes_per_generation: gens.iter().map(Vec::len).collect(),
        scale_unit: l.scale_unit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cantor4, flat_patch};

    fn line(res: usize) -> DiscreteMeasure {
        flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, res, 1.0).unwrap()
    }

    #[test]
    fn single_point_chain() {
        let m = DiscreteMeasure::new(2, 1, vec![0.3, 0.4], vec![1.0], 0.01, "pt").unwrap();
        let l = build_lattice(&m, 3).unwrap();
        assert_eq!(l.len(), 4);
        for c in l.cubes() {
            assert_eq!(c.members, vec![0]);
        }
        assert!(l.neighbors(3).unwrap().is_empty());
    }

    #[test]
    fn depth_floor() {
        let m = line(64);
        // scale ≈ 63/64, h = 1/64 → floor(log2(63/4)) = 3
        match build_lattice(&m, 5) {
            Err(LatticeError::DepthTooFine { max_admissible, .. }) => assert_eq!(max_admissible, 3),
            other => panic!("{other:?}"),
        }
        assert!(build_lattice(&m, 3).is_ok());
    }

    #[test]
    fn uniform_line_masses_and_neighbors() {
        let m = line(1024);
        let l = build_lattice(&m, 5).unwrap();
        let rep = verify_lattice(&l).unwrap();
        assert_eq!(rep.partition_violations, 0);
        for c in l.cubes() {
            let expect = l.ell(c.id) * m.total_mass();
            assert!(c.mass <= 4.0 * expect && c.mass >= expect / 4.0, "cube {} mass {}", c.id, c.mass);
            assert!(c.diameter <= l.side(c.id));
        }
        assert!(rep.center_depth_ratio[0] >= 0.125, "{rep:?}");
        // cubes are about ℓ/2 long, so `dist ≤ ℓ` reaches two cubes per side
        let fine = l.generation(5);
        for &id in fine {
            let nb = l.neighbors(id).unwrap();
            assert!(nb.len() <= 6, "cube {id}: {nb:?}");
            for &t in &nb {
                assert!(l.neighbors(t).unwrap().contains(&id));
            }
            let c = l.center_point(id)[0];
            if c > 0.1 && c < 0.9 {
                assert!(nb.len() >= 2, "cube {id}");
                let d2 = l.dilate(id, 2.0).unwrap();
                let ratio = m.mass_of(&d2) / l.cubes()[id].mass;
                // an interval of length d grows to d + 2ℓ
                let q = &l.cubes()[id];
                let bound = (q.diameter + 2.0 * l.side(id) + 2.0 * m.resolution()) / q.diameter;
                assert!(ratio >= 1.0 && ratio <= bound, "{ratio} vs {bound}");
            }
        }
    }

    #[test]
    fn dilate_edge_cases() {
        let m = line(256);
        let l = build_lattice(&m, 4).unwrap();
        let q = l.generation(3)[2];
        assert_eq!(l.dilate(q, 1.0).unwrap(), l.cubes()[q].members);
        assert_eq!(l.dilate(0, 3.0).unwrap().len(), m.len());
        assert!(matches!(l.dilate(q, 0.5), Err(LatticeError::Dilation(_))));
        // brute force comparison
        let d = l.dilate(q, 1.5).unwrap();
        let rho = 0.5 * l.side(q);
        let brute: Vec<usize> = (0..m.len())
            .filter(|&y| l.cubes()[q].members.iter().any(|&x| dist(m.point(x), m.point(y)) <= rho))
            .collect();
        assert_eq!(d, brute);
    }

    #[test]
    fn deterministic() {
        let m = cantor4(4, 2, 1.0).unwrap();
        let a = build_lattice(&m, 4).unwrap();
        let b = build_lattice(&m, 4).unwrap();
        assert_eq!(a.cubes(), b.cubes());
    }
}

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use multiflat::spatial::dist;
use multiflat::{Ball, WeightedPoints};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense LP for the bounded-Lipschitz distance:
/// max Σ f_i (σ_i − ν_i) s.t. |f_i − f_k| ≤ |x_i − x_k|, |f_i| ≤ dist(x_i, ∂B).
/// Points of both measures are kept separate (duplicates get equal f by
/// the Lipschitz constraints anyway).
pub fn bl_oracle(sigma: &WeightedPoints, nu: &WeightedPoints, ball: &Ball) -> f64 {
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    for (m, s) in [(sigma, 1.0), (nu, -1.0)] {
        for i in 0..m.len() {
            let p = m.point(i);
            if ball.contains(p) {
                pts.push((p.to_vec(), s * m.weights[i]));
            }
        }
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = pts
        .iter()
        .map(|(p, w)| {
            let b = (ball.radius - dist(p, &ball.center)).max(0.0);
            lp.add_var(*w, (-b, b))
        })
        .collect();
    for i in 0..pts.len() {
        for k in i + 1..pts.len() {
            let r = dist(&pts[i].0, &pts[k].0);
            lp.add_constraint([(vars[i], 1.0), (vars[k], -1.0)], ComparisonOp::Le, r);
            lp.add_constraint([(vars[i], -1.0), (vars[k], 1.0)], ComparisonOp::Le, r);
        }
    }
    lp.solve().expect("oracle LP").objective()
}

/// `n` points uniform in the unit ball of R^d with weights in (0, 1].
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> WeightedPoints {
    let mut w = WeightedPoints::new(d);
    while w.len() < n {
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if p.iter().map(|x| x * x).sum::<f64>() < 1.0 {
            w.push(&p, rng.random_range(0.01..1.0));
        }
    }
    w
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

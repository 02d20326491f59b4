mod common;

use common::{bl_oracle, random_points, rng};
use multiflat::flat_metric::discretize_flat;
use multiflat::measures::flat_patch;
use multiflat::{alpha, bl_distance, build_lattice, AlphaOptions, Ball, Plane, WeightedPoints};
use proptest::prelude::*;

const CAP: usize = 4096;

fn unit_ball(d: usize) -> Ball {
    Ball::new(vec![0.0; d], 1.0)
}

#[test]
fn matches_dense_lp_oracle() {
    let mut r = rng(7);
    for d in [1, 2, 3] {
        for k in 0..8 {
            let a = random_points(&mut r, 5 + 3 * k, d);
            let b = random_points(&mut r, 4 + 2 * k, d);
            let got = bl_distance(&a, &b, &unit_ball(d), CAP).unwrap().value;
            let want = bl_oracle(&a, &b, &unit_ball(d));
            assert!((got - want).abs() <= 1e-7 * want.max(1.0), "d={d} k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn test_function_certifies_value() {
    let mut r = rng(11);
    let a = random_points(&mut r, 25, 2);
    let b = random_points(&mut r, 20, 2);
    let ball = unit_ball(2);
    let res = bl_distance(&a, &b, &ball, CAP).unwrap();
    let pts: Vec<&[f64]> = res.support.chunks(2).collect();
    for (i, p) in pts.iter().enumerate() {
        let bound = ball.radius - multiflat::spatial::dist(p, &ball.center);
        assert!(res.f[i].abs() <= bound + 1e-12);
        for (k, q) in pts.iter().enumerate() {
            assert!(res.f[i] - res.f[k] <= multiflat::spatial::dist(p, q) + 1e-12);
        }
    }
    // ∫ f d(σ − ν) reproduces the value
    let integral = |m: &WeightedPoints| -> f64 {
        (0..m.len())
            .map(|i| {
                let k = pts.iter().position(|p| *p == m.point(i)).unwrap();
                res.f[k] * m.weights[i]
            })
            .sum()
    };
    assert!((integral(&a) - integral(&b) - res.value).abs() < 1e-12);
}

#[test]
fn mass_far_inside_costs_its_depth() {
    // a single unit mass at the centre against nothing: sup f(0) = R
    let mut a = WeightedPoints::new(2);
    a.push(&[0.0, 0.0], 0.5);
    let v = bl_distance(&a, &WeightedPoints::new(2), &Ball::new(vec![0.0, 0.0], 2.0), CAP).unwrap().value;
    assert!((v - 1.0).abs() < 1e-14);
    // two equal masses at distance s: transport cost s·w
    let mut b = WeightedPoints::new(2);
    b.push(&[0.1, 0.0], 0.5);
    let v = bl_distance(&a, &b, &Ball::new(vec![0.0, 0.0], 2.0), CAP).unwrap().value;
    assert!((v - 0.05).abs() < 1e-14);
}

#[test]
fn distance_to_flat_is_convex_in_density() {
    let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 200, 1.0).unwrap();
    let mu = WeightedPoints::from(&m);
    let ball = Ball::new(vec![0.5, 0.0], 0.3);
    let t = 0.02f64;
    let plane = Plane::new(vec![0.5, 0.01], vec![vec![t.cos(), t.sin()]]).unwrap();
    let v = |c: f64| {
        let flat = discretize_flat(c, &plane, &ball, 0.3 / 64.0).unwrap();
        bl_distance(&mu, &flat.quadrature(), &ball, CAP).unwrap().value
    };
    let cs: Vec<f64> = (0..9).map(|k| 0.6 + 0.1 * k as f64).collect();
    let vals: Vec<f64> = cs.iter().map(|&c| v(c)).collect();
    for w in vals.windows(3) {
        assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-12, "{vals:?}");
    }
}

#[test]
fn alpha_is_linear_in_the_measure() {
    let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 256, 1.0).unwrap();
    // bend it a little so that α is not tiny
    let mut coords = m.coords().to_vec();
    for p in coords.chunks_mut(2) {
        p[1] = 0.05 * (3.0 * p[0]).sin();
    }
    let bent = multiflat::DiscreteMeasure::new(2, 1, coords, m.weights().to_vec(), m.resolution(), "bent").unwrap();
    let s = 4.0;
    let opts = AlphaOptions::default();
    let la = build_lattice(&bent, 2).unwrap();
    let lb = build_lattice(&bent.scaled(s), 2).unwrap();
    for q in [0, 1, 3] {
        let a = alpha(&la, q, &opts).unwrap().alpha;
        let b = alpha(&lb, q, &opts).unwrap().alpha;
        assert!((b - s * a).abs() <= 1e-6 * b, "cube {q}: {a} vs {b}");
    }
}

fn points_strategy(max: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-0.7f64..0.7, -0.7f64..0.7, 0.01f64..1.0), 1..max)
}

fn to_points(v: &[(f64, f64, f64)]) -> WeightedPoints {
    let mut w = WeightedPoints::new(2);
    for &(x, y, m) in v {
        w.push(&[x, y], m);
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_nonnegative(a in points_strategy(20), b in points_strategy(20)) {
        let (a, b) = (to_points(&a), to_points(&b));
        let ball = unit_ball(2);
        let ab = bl_distance(&a, &b, &ball, CAP).unwrap().value;
        let ba = bl_distance(&b, &a, &ball, CAP).unwrap().value;
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(bl_distance(&a, &a, &ball, CAP).unwrap().value, 0.0);
    }

    #[test]
    fn triangle_inequality(a in points_strategy(15), b in points_strategy(15), c in points_strategy(15)) {
        let (a, b, c) = (to_points(&a), to_points(&b), to_points(&c));
        let ball = unit_ball(2);
        let d = |x: &WeightedPoints, y: &WeightedPoints| bl_distance(x, y, &ball, CAP).unwrap().value;
        let (ac, ab, bc) = (d(&a, &c), d(&a, &b), d(&b, &c));
        prop_assert!(ac <= ab + bc + 1e-9 * (ab + bc).max(1e-12));
    }

    #[test]
    fn homogeneous_and_translation_invariant(a in points_strategy(15), b in points_strategy(15),
                                             lam in 0.1f64..10.0, sx in -2.0f64..2.0, sy in -2.0f64..2.0) {
        let (a, b) = (to_points(&a), to_points(&b));
        let ball = unit_ball(2);
        let base = bl_distance(&a, &b, &ball, CAP).unwrap().value;
        let scaled = bl_distance(&a.scaled(lam), &b.scaled(lam), &ball, CAP).unwrap().value;
        prop_assert!((scaled - lam * base).abs() <= 1e-9 * (lam * base).max(1e-12));
        let shift = |w: &WeightedPoints| {
            let mut out = WeightedPoints::new(2);
            for i in 0..w.len() {
                let p = w.point(i);
                out.push(&[p[0] + sx, p[1] + sy], w.weights[i]);
            }
            out
        };
        let moved = bl_distance(&shift(&a), &shift(&b), &Ball::new(vec![sx, sy], 1.0), CAP).unwrap().value;
        prop_assert!((moved - base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn bounded_by_mass_times_radius(a in points_strategy(15), b in points_strategy(15)) {
        let (a, b) = (to_points(&a), to_points(&b));
        let v = bl_distance(&a, &b, &unit_ball(2), CAP).unwrap().value;
        prop_assert!(v <= a.total_mass() + b.total_mass() + 1e-12);
    }
}

use multiflat::kernels::{layer_at, partial_sum_field, BumpKind, KernelSpec, Layering};
use multiflat::measures::flat_patch;
use multiflat::{layer_field, DiscreteMeasure, WeightedPoints};
use proptest::prelude::*;

fn pair(d: f64) -> WeightedPoints {
    let mut w = WeightedPoints::new(2);
    w.push(&[0.0, 0.0], 1.0);
    w.push(&[d, 0.0], 1.0);
    w
}

/// Σ_{j=lo}^{hi} T_j μ equals the single smooth truncation with weight
/// ψ(2^{lo+3}r) − ψ(2^{hi+4}r).
#[test]
fn layers_telescope() {
    let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![0.8, 0.6]], 1.0, 300, 1.0).unwrap();
    let lay = Layering::new(BumpKind::CzoRadial, 1.0).unwrap();
    let k = KernelSpec::riesz(2, 1);
    let (lo, hi) = (-2, 4);
    let layers: Vec<_> = (lo..=hi).map(|j| layer_field(&m, &k, &lay, j).unwrap()).collect();
    let sum = partial_sum_field(&layers).unwrap();
    for i in (0..m.len()).step_by(17) {
        let x = m.point(i);
        let mut direct = 0.0;
        for y in 0..m.len() {
            if y == i {
                continue;
            }
            let diff = [x[0] - m.point(y)[0], x[1] - m.point(y)[1]];
            let r = (diff[0] * diff[0] + diff[1] * diff[1]).sqrt();
            let w = lay.bump.psi(2f64.powi(lo + 3) * r) - lay.bump.psi(2f64.powi(hi + 4) * r);
            direct += w * k.eval(&diff) * m.weight(y);
        }
        assert!((sum.values[i] - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{} vs {direct}", sum.values[i]);
    }
}

#[test]
fn layer_is_linear_in_the_measure() {
    let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 128, 1.0).unwrap();
    let bent = DiscreteMeasure::new(
        2,
        1,
        m.coords().chunks(2).flat_map(|p| [p[0], 0.1 * (4.0 * p[0]).cos()]).collect(),
        m.weights().to_vec(),
        m.resolution(),
        "bent",
    )
    .unwrap();
    let lay = Layering::new(BumpKind::RieszSquared, 1.0).unwrap();
    let k = KernelSpec::riesz(1, 1);
    let a = layer_field(&bent, &k, &lay, 1).unwrap();
    let b = layer_field(&bent.scaled(3.0), &k, &lay, 1).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((3.0 * x - y).abs() <= 1e-13 * (1.0 + y.abs()));
    }
}

#[test]
fn out_of_range_layer_rejected() {
    let m = flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, 64, 1.0).unwrap();
    let lay = Layering::new(BumpKind::CzoRadial, 1.0).unwrap();
    assert!(layer_field(&m, &KernelSpec::riesz(1, 1), &lay, 12).is_err());
    assert!(layer_field(&m, &KernelSpec::riesz(1, 1), &lay, -12).is_err());
    let r = lay.range(&m, 20);
    assert!(*r.start() >= -4 && lay.annulus(*r.end()).1 >= 4.0 * m.resolution());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// A layer sees a point only inside its annulus.
    #[test]
    fn annulus_locality(d in 1e-3f64..2.0, j in -4i32..6, riesz in any::<bool>()) {
        let kind = if riesz { BumpKind::RieszSquared } else { BumpKind::CzoRadial };
        let lay = Layering::new(kind, 1.0).unwrap();
        let (inner, outer) = lay.annulus(j);
        let v = layer_at(&pair(d), &[0.0, 0.0], &KernelSpec::riesz(1, 1), &lay, j)[0];
        if d <= inner || d >= outer {
            prop_assert_eq!(v, 0.0);
        }
        // and then T_j at the origin is the kernel against the other point
        prop_assert!(v <= 0.0);
    }

    /// Two equal masses: the field at one is exactly minus the field at the other.
    #[test]
    fn two_point_antisymmetry(x in -1.0f64..1.0, y in -1.0f64..1.0, s in 0.01f64..1.0, j in -3i32..4) {
        let mut w = WeightedPoints::new(2);
        w.push(&[x + s, y], 0.7);
        w.push(&[x - s, y], 0.7);
        let lay = Layering::new(BumpKind::CzoRadial, 1.0).unwrap();
        for c in 1..=2 {
            let v = layer_at(&w, &w.coords, &KernelSpec::riesz(c, 1), &lay, j);
            prop_assert_eq!(v[0], -v[1]);
        }
    }
}

use multiflat::lattice::{lattice_report, verify_lattice};
use multiflat::measures::{cantor4, generate_measure};
use multiflat::{build_lattice, DiscreteMeasure, GraphFamily, MeasureSpec};
use proptest::prelude::*;

fn sine(grid: usize) -> DiscreteMeasure {
    generate_measure(&MeasureSpec::LipschitzGraph {
        n: 1,
        d: 2,
        side: 1.0,
        grid,
        family: GraphFamily::Sine { amplitude: 0.5, frequency: 1.0 },
        density: 1.0,
    })
    .unwrap()
}

/// A shallower lattice is the coarse part of a deeper one.
#[test]
fn depths_are_prefixes() {
    for m in [sine(512), cantor4(4, 2, 1.0).unwrap()] {
        let shallow = build_lattice(&m, 3).unwrap();
        let deep = build_lattice(&m, 5).unwrap();
        for c in shallow.cubes() {
            let d = &deep.cubes()[c.id];
            assert_eq!((c.generation, c.center, &c.members, c.parent), (d.generation, d.center, &d.members, d.parent));
            assert_eq!(c.mass, d.mass);
            if c.generation < 3 {
                assert_eq!(c.children, d.children);
            }
        }
    }
}

#[test]
fn cantor_cubes_are_the_self_similar_cells() {
    let m = cantor4(5, 2, 1.0).unwrap();
    let l = build_lattice(&m, 8).unwrap();
    let rep = verify_lattice(&l).unwrap();
    // each Cantor cell of level k splits into 4 at generation 2k or so; counts
    // must be powers of four times the number of surviving blocks
    for (j, &c) in rep.cubes_per_generation.iter().enumerate() {
        assert!(c >= 1 && c <= 4usize.pow(5));
        if j > 0 {
            assert!(c >= rep.cubes_per_generation[j - 1]);
        }
    }
    // every cube is a union of whole finest Cantor cells of its level: the
    // member count is a power of four
    for q in l.cubes() {
        assert!(q.members.len().is_power_of_two() && q.members.len().trailing_zeros() % 2 == 0, "cube {}", q.id);
    }
}

#[test]
fn size_constants_are_moderate() {
    let l = build_lattice(&sine(1024), 6).unwrap();
    let rep = lattice_report(&l);
    assert_eq!(rep.partition_violations + rep.nesting_violations, 0);
    assert!(rep.diameter_ratio[1] <= 1.0 + 1e-12, "{rep:?}");
    assert!(rep.center_depth_ratio[0] > 1.0 / 16.0, "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Partition, nesting and mass bookkeeping on jittered curves.
    #[test]
    fn random_curves_give_valid_lattices(n in 40usize..300, amp in 0.0f64..0.4, seed in 0u64..1000) {
        let mut coords = Vec::new();
        let mut s = seed;
        for i in 0..n {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let jitter = ((s >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 0.2 / n as f64;
            let x = (i as f64 + 0.5) / n as f64 + jitter;
            coords.extend_from_slice(&[x, amp * (5.0 * x).sin()]);
        }
        let m = DiscreteMeasure::new(2, 1, coords, vec![1.0 / n as f64; n], 1.0 / n as f64, "curve").unwrap();
        let depth = multiflat::lattice::max_admissible_depth(m.diameter(), m.resolution()).min(5);
        let l = build_lattice(&m, depth).unwrap();
        let rep = verify_lattice(&l).unwrap();
        prop_assert_eq!(rep.partition_violations, 0);
        for j in 0..=depth {
            let total: f64 = l.generation(j).iter().map(|&q| l.cubes()[q].mass).sum();
            prop_assert!((total - m.total_mass()).abs() < 1e-12);
        }
        for q in l.cubes() {
            prop_assert!(q.members.contains(&q.center));
            if let Some(p) = q.parent {
                prop_assert!(l.cubes()[p].children.contains(&q.id));
            }
        }
    }
}

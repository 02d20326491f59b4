//! Fixtures shared by the benchmarks.

use multiflat::measures::{flat_patch, generate_measure};
use multiflat::{Ball, DiscreteMeasure, GraphFamily, MeasureSpec, WeightedPoints};

pub fn sine_graph(grid: usize, amplitude: f64) -> DiscreteMeasure {
    generate_measure(&MeasureSpec::LipschitzGraph {
        n: 1,
        d: 2,
        side: 1.0,
        grid,
        family: GraphFamily::Sine { amplitude, frequency: 1.0 },
        density: 1.0,
    })
    .expect("valid graph spec")
}

pub fn segment(resolution: usize) -> DiscreteMeasure {
    flat_patch(1, 2, &[0.0, 0.0], &[vec![1.0, 0.0]], 1.0, resolution, 1.0).expect("valid patch")
}

/// A bent curve and a straight segment restricted to a ball of radius
/// `radius` about (1/2, 0), with about `points` support points each.
pub fn transport_pair(points: usize, radius: f64) -> (WeightedPoints, WeightedPoints, Ball) {
    let grid = ((points as f64) / (2.0 * radius)).ceil() as usize;
    let ball = Ball::new(vec![0.5, 0.0], radius);
    let keep = |m: &DiscreteMeasure| {
        let mut w = WeightedPoints::new(2);
        for i in 0..m.len() {
            if ball.contains(m.point(i)) {
                w.push(m.point(i), m.weight(i));
            }
        }
        w
    };
    (keep(&sine_graph(grid, 0.05)), keep(&segment(grid + 7)), ball)
}

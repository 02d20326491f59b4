//! Derivative-free coordinate search with halving steps.

/// Outcome of [`coordinate_search`]. `trace` holds the accepted objective
/// values, starting with the initial one; it is non-increasing.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Polls `x ± step·e_k` for every coordinate, accepting the first
/// improvement by more than `rel_gain·|best|`; a sweep without improvement
/// halves the step. Stops once the step drops below `min_step` or
/// `max_evals` is reached.
///
/// The objective receives the acceptance threshold so it may stop early and
/// return any number `≥ threshold` for hopeless candidates.
pub fn coordinate_search(
    x0: Vec<f64>,
    f0: f64,
    step0: f64,
    min_step: f64,
    max_evals: usize,
    rel_gain: f64,
    mut f: impl FnMut(&[f64], f64) -> f64,
) -> SearchResult {
    let mut x = x0;
    let mut best = f0;
    let mut trace = vec![f0];
    let mut evaluations = 0usize;
    let mut step = step0;
    let mut cand = x.clone();
    'outer: while step >= min_step {
        let mut improved = false;
        for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                if evaluations >= max_evals {
                    break 'outer;
                }
                cand.copy_from_slice(&x);
                cand[k] += sign * step;
                let threshold = best - rel_gain * best.abs();
                let v = f(&cand, threshold);
                evaluations += 1;
                if v < threshold {
                    best = v;
                    x.copy_from_slice(&cand);
                    trace.push(v);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    SearchResult { x, value: best, trace, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let r = coordinate_search(vec![1.0, -2.0], 5.0 + 4.0 * 4.0, 1.0, 1e-6, 10_000, 0.0, |x, _| {
            (x[0] - 0.3).powi(2) + 4.0 * (x[1] + 0.2).powi(2)
        });
        assert!((r.x[0] - 0.3).abs() < 1e-5 && (r.x[1] + 0.2).abs() < 1e-5);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn no_improvement_keeps_start() {
        let r = coordinate_search(vec![0.0], 0.0, 1.0, 0.25, 100, 0.0, |x, _| x[0].abs());
        assert_eq!(r.x, vec![0.0]);
        assert_eq!(r.trace, vec![0.0]);
        // 3 step levels × 2 polls
        assert_eq!(r.evaluations, 6);
    }
}

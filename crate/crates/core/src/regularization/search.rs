//! Bounded one-dimensional maximization: uniform grid, then golden-section
//! refinement inside the two cells adjacent to the best grid node.

/// `(sqrt(5) - 1) / 2`
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
}

/// Maximizes `objective` over `[center - radius, center + radius]`.
///
/// The grid has an odd number of nodes (at least `coarse_points`) and the
/// middle node is exactly `center`, so the result is never below
/// `objective(center)`.
pub fn maximize_around<F>(objective: F, center: f64, radius: f64, coarse_points: usize, refine_iters: usize) -> Maximum
where
    F: Fn(f64) -> f64,
{
    let nodes = if coarse_points % 2 == 1 { coarse_points } else { coarse_points + 1 };
    let half = (nodes - 1) / 2;
    let node = |k: usize| {
        if k == half {
            center
        } else {
            center + radius * ((k as f64 - half as f64) / half as f64)
        }
    };

    let mut best = Maximum {
        argmax: center,
        value: objective(center),
    };
    let mut best_k = half;
    for k in 0..nodes {
        if k == half {
            continue;
        }
        let v = node(k);
        let value = objective(v);
        // NaN never wins
        if value > best.value {
            best = Maximum { argmax: v, value };
            best_k = k;
        }
    }

    let mut lo = node(best_k.saturating_sub(1));
    let mut hi = node((best_k + 1).min(nodes - 1));
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = objective(c);
    let mut fd = objective(d);
    for _ in 0..refine_iters {
        for (x, fx) in [(c, fc), (d, fd)] {
            if fx > best.value {
                best = Maximum { argmax: x, value: fx };
            }
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = objective(d);
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx > best.value {
            best = Maximum { argmax: x, value: fx };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum_of_parabola() {
        let m = maximize_around(|x| -(x - 0.3).powi(2) + 2.0, 0.0, 1.0, 17, 60);
        assert!((m.argmax - 0.3).abs() < 1e-7);
        assert!((m.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn never_below_centre_value() {
        // kinked objective with its maximum exactly at the centre
        let m = maximize_around(|x: f64| 1.0 - 3.0 * (x - 0.7).abs(), 0.7, 5.0, 16, 40);
        assert_eq!(m.value, 1.0);
        assert_eq!(m.argmax, 0.7);
    }

    #[test]
    fn boundary_maximum() {
        let m = maximize_around(|x| x, 0.0, 2.0, 33, 60);
        assert_eq!(m.value, 2.0);
    }
}

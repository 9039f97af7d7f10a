//! Per-pixel membership subproblem: `min (m^T u + l)^2` over the simplex.
//!
//! `m^T u` sweeps exactly `[min m, max m]` on the simplex, so the optimal
//! value of the linear form is `t = clamp(-l, min m, max m)`. Every point of
//! the slice `{u in simplex : m^T u = t}` is optimal; the one returned is the
//! Euclidean projection of the previous row onto that slice, found by
//! enumerating supports.

/// Candidates violating `u >= 0` by more than this are rejected.
const NEG_TOL: f64 = 1e-12;

/// Solves one pixel in place. `row` holds the previous memberships on entry
/// and the new ones on exit.
pub fn solve_pixel(m: &[f64], l: f64, row: &mut [f64]) {
    debug_assert_eq!(m.len(), row.len());
    let n = m.len();
    let (lo, hi) = m
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if lo == hi {
        // m^T u == lo on the whole simplex: nothing to optimize.
        return;
    }
    let target = (-l).clamp(lo, hi);
    let scale = lo.abs().max(hi.abs());

    let mut best: Option<(f64, [f64; 16])> = None;
    let mut cand = [0.0f64; 16];
    for support in 1u32..(1 << n) {
        if !project_on_support(m, row, target, support, scale, &mut cand[..n]) {
            continue;
        }
        let dist: f64 = cand[..n]
            .iter()
            .zip(row.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, cand));
        }
    }

    match best {
        Some((_, u)) => row.copy_from_slice(&u[..n]),
        None => segment_point(m, target, lo, hi, row),
    }
}

/// Closest point to `prev` with support `support`, unit sum and
/// `m^T u = target`. Returns false when that point is infeasible.
fn project_on_support(
    m: &[f64],
    prev: &[f64],
    target: f64,
    support: u32,
    scale: f64,
    out: &mut [f64],
) -> bool {
    let n = m.len();
    let inside = |i: usize| support & (1 << i) != 0;
    let k = support.count_ones() as f64;
    let (mut s1, mut s2, mut sa, mut sma) = (0.0, 0.0, 0.0, 0.0);
    for i in (0..n).filter(|&i| inside(i)) {
        s1 += m[i];
        s2 += m[i] * m[i];
        sa += prev[i];
        sma += m[i] * prev[i];
    }
    // u_S = prev_S - alpha - beta m_S, with alpha, beta fixed by the two
    // equality constraints.
    let det = k * s2 - s1 * s1;
    let (alpha, beta) = if det > 1e-14 * k * s2.max(f64::MIN_POSITIVE) {
        let r1 = sa - 1.0;
        let r2 = sma - target;
        ((s2 * r1 - s1 * r2) / det, (k * r2 - s1 * r1) / det)
    } else {
        // m is constant on the support; the level constraint either holds
        // for every point of this face or for none.
        if (s1 / k - target).abs() > 1e-12 * scale.max(1.0) {
            return false;
        }
        ((sa - 1.0) / k, 0.0)
    };

    let mut sum = 0.0;
    for i in 0..n {
        out[i] = if inside(i) {
            let x = prev[i] - alpha - beta * m[i];
            if x < -NEG_TOL {
                return false;
            }
            x.max(0.0)
        } else {
            0.0
        };
        sum += out[i];
    }
    out.iter_mut().for_each(|x| *x /= sum);
    let level: f64 = m.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
    (level - target).abs() <= 1e-9 * scale.max(1.0)
}

/// Point on the edge between the extreme vertices with `m^T u = target`.
fn segment_point(m: &[f64], target: f64, lo: f64, hi: f64, row: &mut [f64]) {
    let imin = m.iter().position(|&x| x == lo).unwrap_or(0);
    let imax = m.iter().position(|&x| x == hi).unwrap_or(0);
    let theta = ((target - lo) / (hi - lo)).clamp(0.0, 1.0);
    row.iter_mut().for_each(|x| *x = 0.0);
    row[imin] = 1.0 - theta;
    row[imax] += theta;
}

/// Objective value of one pixel's subproblem.
#[inline]
pub fn pixel_objective(m: &[f64], l: f64, u: &[f64]) -> f64 {
    let s: f64 = m.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + l;
    s * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn on_simplex(u: &[f64]) -> bool {
        (u.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && u.iter().all(|&x| x >= 0.0)
    }

    #[test]
    fn unique_vertex_optimum() {
        let mut u = [1.0, 0.0, 0.0];
        solve_pixel(&[0.33, 0.66, 0.99], -0.99, &mut u);
        assert!((u[2] - 1.0).abs() < 1e-12 && u[0].abs() < 1e-12 && u[1].abs() < 1e-12);
    }

    #[test]
    fn constant_m_keeps_previous() {
        let mut u = [0.2, 0.5, 0.3];
        solve_pixel(&[1.0, 1.0, 1.0], 4.2, &mut u);
        assert_eq!(u, [0.2, 0.5, 0.3]);
    }

    #[test]
    fn already_optimal_row_does_not_move() {
        let m = [0.3, 0.6, 0.9];
        let mut u = [0.0, 1.0, 0.0];
        solve_pixel(&m, -0.6, &mut u);
        assert!((u[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interior_target_returns_min_movement_point() {
        // target 0.5 from vertex e1: closest point on the slice
        // {0.3u1 + 0.6u2 + 0.9u3 = 0.5}.
        let m = [0.3, 0.6, 0.9];
        let mut u = [1.0, 0.0, 0.0];
        solve_pixel(&m, -0.5, &mut u);
        assert!(on_simplex(&u));
        let level: f64 = m.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((level - 0.5).abs() < 1e-12);
        // brute-force the closest slice point on a fine grid
        let mut best = f64::INFINITY;
        let steps = 2000;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let x = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                let lvl = 0.3 * x[0] + 0.6 * x[1] + 0.9 * x[2];
                if (lvl - 0.5).abs() < 2e-4 {
                    let d = (x[0] - 1.0).powi(2) + x[1].powi(2) + x[2].powi(2);
                    best = best.min(d);
                }
            }
        }
        let d = (u[0] - 1.0).powi(2) + u[1].powi(2) + u[2].powi(2);
        assert!(d <= best + 1e-3, "{d} vs grid {best}");
    }

    #[test]
    fn negative_and_mixed_sign_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let n = rng.random_range(2..=6);
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let l = rng.random_range(-3.0..3.0);
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: f64 = u.iter().sum();
            u.iter_mut().for_each(|x| *x /= s);
            solve_pixel(&m, l, &mut u);
            assert!(on_simplex(&u));
            let (lo, hi) = m
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                    (a.min(x), b.max(x))
                });
            let t = (-l).clamp(lo, hi);
            assert!((pixel_objective(&m, l, &u) - (t + l).powi(2)).abs() < 1e-10);
        }
    }
}

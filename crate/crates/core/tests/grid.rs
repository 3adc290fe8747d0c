//! Checks over a uniform grid of 10^4 success probabilities.

use bernpois::dist::{pmf_joint_increment, pmf_zeta};

const GRID: usize = 10_000;
const KMAX: usize = 40;

fn grid() -> impl Iterator<Item = f64> {
    (1..=GRID).map(|i| i as f64 / GRID as f64)
}

#[test]
fn zeta_masses_are_non_negative() {
    for p in grid() {
        let z = pmf_zeta(p, KMAX).unwrap();
        assert!(z.mass().iter().all(|&m| m >= 0.0), "p = {p}");
        assert!(z.tail() >= 0.0);
    }
}

#[test]
fn pushforward_matches_zeta_law() {
    for p in grid() {
        let pushed = pmf_joint_increment(p, KMAX).unwrap().abs_difference();
        let closed = pmf_zeta(p, KMAX).unwrap();
        for k in 0..KMAX {
            assert!(
                (pushed.get(k) - closed.get(k)).abs() <= 1e-12,
                "p={p} k={k}"
            );
        }
    }
}

#[test]
fn zeta_tail_bound() {
    for p in grid() {
        let z = pmf_zeta(p, KMAX).unwrap();
        let mut fact = 2.0;
        for k in 2..=10usize {
            fact *= (k + 1) as f64;
            let bound = p.powi(k as i32 + 1) / fact;
            assert!(
                z.upper_sum(k) < bound,
                "p={p} k={k}: {} vs {bound}",
                z.upper_sum(k)
            );
        }
    }
}

#[test]
fn zeta_one_is_at_most_p_squared() {
    for p in grid() {
        assert!(pmf_zeta(p, KMAX).unwrap().get(1) <= p * p);
    }
}

//! Seeded Monte Carlo checks against exact laws. Seeds are fixed, so these
//! are deterministic; the tolerances are what a fresh seed would pass with
//! high probability.

#![allow(clippy::needless_range_loop)]

use bernpois::coupling::{
    estimate_tail, estimate_tails, simulate_coupled_paths, MaximalCoupling, McEstimate,
};
use bernpois::dist::{pmf_joint_increment, pmf_poisson, total_variation, ProbVector, TruncatedPmf};
use bernpois::exact::exact_exceedance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Chi-square critical value at the 1% level with 4 degrees of freedom.
const CHI2_4_99: f64 = 13.277;

#[test]
fn nu_mean_over_many_seeds() {
    let p = ProbVector::new(vec![0.5]).unwrap();
    let n = 1_000_000u64;
    let ones: u64 = (0..n)
        .map(|s| u64::from(simulate_coupled_paths(&p, s).unwrap().nu[0]))
        .sum();
    let mean = ones as f64 / n as f64;
    assert!((mean - 0.5).abs() <= 0.002, "mean = {mean}");
}

#[test]
fn joint_pairs_pass_chi_square() {
    let probs = [0.2, 0.7];
    let p = ProbVector::new(probs.to_vec()).unwrap();
    let n = 200_000u64;
    // cells (0,0), (1,0), (1,1), (1,2), (1,>=3)
    let mut counts = [[0u64; 5]; 2];
    for s in 0..n {
        let path = simulate_coupled_paths(&p, s).unwrap();
        for i in 0..2 {
            let cell = if path.nu[i] == 0 {
                0
            } else {
                1 + path.pi[i].min(3) as usize
            };
            counts[i][cell] += 1;
        }
    }
    for (i, &pi) in probs.iter().enumerate() {
        let joint = pmf_joint_increment(pi, 2).unwrap();
        let expected = [
            joint.get(0, 0),
            joint.get(1, 0),
            joint.get(1, 1),
            joint.get(1, 2),
            joint.tail(),
        ];
        let chi2: f64 = expected
            .iter()
            .zip(&counts[i])
            .map(|(&e, &c)| {
                let e = e * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(
            chi2 < CHI2_4_99,
            "index {i}: chi2 = {chi2}, counts {:?}",
            counts[i]
        );
    }
}

#[test]
fn mc_agrees_with_exact_on_the_reference_instance() {
    let p = ProbVector::constant(0.1, 10).unwrap();
    let est = estimate_tails(&p, &[0, 1], 1_000_000, 42).unwrap();
    for (z, e) in [0u64, 1].iter().zip(&est) {
        let exact = exact_exceedance(&p, *z);
        assert!(
            e.agrees_with(exact.prob_low, exact.prob_high, 3.0),
            "z={z}: {e:?} vs {exact:?}"
        );
    }
}

#[test]
fn mc_unreachable_threshold_is_zero() {
    let p = ProbVector::constant(0.2, 5).unwrap();
    let e = estimate_tail(&p, 60, 100_000, 7).unwrap();
    assert_eq!(e.successes, 0);
    assert_eq!(e.point, 0.0);
}

#[test]
fn single_sample_gives_wide_interval() {
    let e = McEstimate::from_counts(0, 1, 0);
    assert!(e.ci_high > 0.5);
    assert!(e.agrees_with(0.3, 0.3, 3.0));
}

#[test]
fn maximal_coupling_empirical_mismatch_matches_tv() {
    let a = TruncatedPmf::bernoulli(0.2).unwrap();
    let b = pmf_poisson(0.2, 30).unwrap();
    let tv = total_variation(&a, &b).value;
    let coupling = MaximalCoupling::new(&a, &b).unwrap();
    assert!((coupling.mismatch_probability() - tv).abs() <= 1e-12);

    let n = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut x_ones = 0;
    for _ in 0..n {
        let (x, y) = coupling.sample(&mut rng);
        mismatches += u64::from(x != y);
        x_ones += u64::from(x == 1);
    }
    let e = McEstimate::from_counts(mismatches, n, 11);
    assert!(e.agrees_with(tv, tv, 3.0), "{e:?} vs {tv}");
    // the first marginal stays Bernoulli(0.2)
    let m = McEstimate::from_counts(x_ones, n, 11);
    assert!(m.agrees_with(0.2, 0.2, 3.0), "{m:?}");
}

//! Change-point sampler checked against independent quadrature and
//! exhaustive partition enumeration.

mod oracle;

use orclsim_core::bcp::{bcp_detect, block_odds, extract_change_events, BcpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Composite 10-point Gauss–Legendre, 2000 panels, w = u² substitution;
// agrees with 200 and 20000 panels to 1e-13 relative.
const ODDS_W10_B0_W2_B8_B3_N20: f64 = 6.391_258_715_189_884e3;

#[test]
fn block_odds_matches_frozen_quadrature() {
    let reference = oracle::ln_block_odds(10.0, 0.0, 2.0, 8.0, 3, 20, 0.2, 0.2, 2000).exp();
    assert!((reference / ODDS_W10_B0_W2_B8_B3_N20 - 1.0).abs() < 1e-12);
    let refined = oracle::ln_block_odds(10.0, 0.0, 2.0, 8.0, 3, 20, 0.2, 0.2, 20000).exp();
    assert!((refined / ODDS_W10_B0_W2_B8_B3_N20 - 1.0).abs() < 1e-10);

    let got = block_odds(10.0, 0.0, 2.0, 8.0, 3, 20, &BcpConfig::default()).unwrap();
    assert!((got / ODDS_W10_B0_W2_B8_B3_N20 - 1.0).abs() < 1e-6, "{got}");
}

#[test]
fn block_odds_matches_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = BcpConfig::default();
    for _ in 0..40 {
        let n = rng.gen_range(3..60usize);
        let b = rng.gen_range(1..n);
        let total: f64 = rng.gen_range(0.5..100.0);
        let f0: f64 = rng.gen_range(0.05..1.0);
        let f1 = rng.gen_range(0.05f64..1.0).min(f0);
        let (w0, b0) = (total * f0, total * (1.0 - f0));
        let (w1, b1) = (total * f1, total * (1.0 - f1));
        let expected = oracle::ln_block_odds(w0, b0, w1, b1, b, n, 0.2, 0.2, 4000);
        let got = block_odds(w0, b0, w1, b1, b, n, &cfg).unwrap().ln();
        assert!((got - expected).abs() < 1e-6, "n={n} b={b}: {got} vs {expected}");
    }
}

#[test]
fn block_odds_scale_invariance() {
    let cfg = BcpConfig::default();
    let base = block_odds(10.0, 0.0, 2.0, 8.0, 3, 20, &cfg).unwrap();
    for c in [0.1f64, 3.0, 1000.0] {
        let c2 = c * c;
        let v = block_odds(10.0 * c2, 0.0, 2.0 * c2, 8.0 * c2, 3, 20, &cfg).unwrap();
        assert!((v / base - 1.0).abs() < 1e-9);
    }
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let jump = rng.gen_range(1..n);
    let delta = rng.gen_range(-3.0..3.0);
    (0..n)
        .map(|i| noise.sample(rng) + if i >= jump { delta } else { 0.0 })
        .collect()
}

#[test]
fn sampler_matches_enumeration_small_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..6u64 {
        let n = rng.gen_range(4..=10);
        let x = random_series(&mut rng, n);
        let exact = oracle::enumerate_posterior(&x, 0.2, 0.2);
        let cfg = BcpConfig {
            mcmc_iterations: 20_500,
            burn_in: 500,
            seed: case,
            ..Default::default()
        };
        let got = bcp_detect(&x, &cfg).unwrap();
        for (i, (g, e)) in got.probabilities.iter().zip(&exact).enumerate() {
            assert!((g - e).abs() <= 0.03, "case {case} pos {i}: {g} vs {e}");
        }
    }
}

#[test]
fn constant_series_enumeration_gives_prior_marginal() {
    let exact = oracle::enumerate_posterior(&[70.0; 9], 0.2, 0.2);
    for p in &exact[..8] {
        assert!((p - 0.1).abs() < 1e-9, "{p}");
    }
}

#[test]
fn zero_noise_step_is_detected() {
    let mut x = vec![60.0; 50];
    x.extend(vec![90.0; 50]);
    let r = bcp_detect(&x, &BcpConfig::default().with_seed(5)).unwrap();
    assert!(r.probabilities[49] > 0.95);
    for (i, p) in r.probabilities.iter().enumerate() {
        if i.abs_diff(49) >= 5 {
            assert!(*p < 0.10, "pos {i}: {p}");
        }
    }
    assert_eq!(extract_change_events(&r, 0.5, 5), vec![49]);
    assert!((r.posterior_means[10] - 60.0).abs() < 1e-6);
    assert!((r.posterior_means[80] - 90.0).abs() < 1e-6);
}

#[test]
fn affine_transform_keeps_probabilities_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = random_series(&mut rng, 60);
    let cfg = BcpConfig::default().with_seed(21);
    let base = bcp_detect(&x, &cfg).unwrap();
    for a in [-2.0, 0.5, 10.0] {
        for c in [-40.0, 0.0, 7.0] {
            let y: Vec<f64> = x.iter().map(|v| a * v + c).collect();
            let r = bcp_detect(&y, &cfg).unwrap();
            assert_eq!(r.probabilities, base.probabilities, "a={a} c={c}");
        }
    }
}

#[test]
fn reversal_mirrors_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_series(&mut rng, 9);
    let rev: Vec<f64> = x.iter().rev().cloned().collect();
    let fwd = oracle::enumerate_posterior(&x, 0.2, 0.2);
    let bwd = oracle::enumerate_posterior(&rev, 0.2, 0.2);
    let n = x.len();
    for j in 0..n - 1 {
        assert!((bwd[j] - fwd[n - 2 - j]).abs() < 1e-9);
    }
    let cfg = BcpConfig {
        mcmc_iterations: 20_500,
        burn_in: 500,
        seed: 1,
        ..Default::default()
    };
    let a = bcp_detect(&x, &cfg).unwrap();
    let b = bcp_detect(&rev, &cfg).unwrap();
    for j in 0..n - 1 {
        assert!((b.probabilities[j] - a.probabilities[n - 2 - j]).abs() < 0.04);
    }
}

#[test]
fn probabilities_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in 0..5 {
        let x = random_series(&mut rng, 80);
        let r = bcp_detect(&x, &BcpConfig::default().with_seed(s)).unwrap();
        assert_eq!(r.probabilities.len(), 80);
        assert_eq!(r.posterior_means.len(), 80);
        assert!(r.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

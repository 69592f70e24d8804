//! Reference computations used only by tests. Nothing here calls into the
//! library's quadrature or sampler code.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_m.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre with `panels` equal panels of order 10.
pub fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(10);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for &(x, w) in &rule {
            total += w * f(c + 0.5 * h * x);
        }
    }
    total * 0.5 * h
}

/// ln ∫₀^γ p^α (1-p)^β dp
pub fn ln_beta_integral(alpha: f64, beta: f64, gamma: f64, panels: usize) -> f64 {
    composite(|p| p.powf(alpha) * (1.0 - p).powf(beta), 0.0, gamma, panels).ln()
}

/// ln ∫₀^λ w^a (W + B w)^(-k) dw, substituting w = u² so the integrand is
/// smooth at the origin.
pub fn ln_weight_integral(a: f64, k: f64, within: f64, between: f64, lambda: f64, panels: usize) -> f64 {
    let top = lambda.sqrt();
    if within == 0.0 {
        let v = composite(|u| 2.0 * u.powf(2.0 * a + 1.0 - 2.0 * k), 0.0, top, panels);
        return -k * between.ln() + v.ln();
    }
    let r = between / within;
    let v = composite(
        |u| 2.0 * u.powf(2.0 * a + 1.0) * (1.0 + r * u * u).powf(-k),
        0.0,
        top,
        panels,
    );
    -k * within.ln() + v.ln()
}

pub fn ln_block_odds(
    w0: f64,
    b0: f64,
    w1: f64,
    b1: f64,
    blocks: usize,
    n: usize,
    gamma: f64,
    lambda: f64,
    panels: usize,
) -> f64 {
    let b = blocks as f64;
    let nf = n as f64;
    let k = (nf - 1.0) / 2.0;
    let prior = ln_beta_integral(b, nf - b - 1.0, gamma, panels)
        - ln_beta_integral(b - 1.0, nf - b, gamma, panels);
    if w0 + b0 == 0.0 && w1 + b1 == 0.0 {
        return prior;
    }
    prior + ln_weight_integral(b / 2.0, k, w1, b1, lambda, panels)
        - ln_weight_integral((b - 1.0) / 2.0, k, w0, b0, lambda, panels)
}

/// Within- and between-block sums of squares by direct two-pass definition.
pub fn block_sums(x: &[f64], starts: &[usize]) -> (f64, f64) {
    let n = x.len();
    let grand = x.iter().sum::<f64>() / n as f64;
    let mut within = 0.0;
    let mut between = 0.0;
    let mut bounds: Vec<usize> = starts.to_vec();
    bounds.push(n);
    for w in bounds.windows(2) {
        let block = &x[w[0]..w[1]];
        let m = block.iter().sum::<f64>() / block.len() as f64;
        within += block.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        between += block.len() as f64 * (m - grand) * (m - grand);
    }
    (within, between)
}

/// Exact posterior flag probabilities by enumerating all 2^(n-1) partitions.
/// Entry `i` is P(a block starts at i + 1); the last entry is 0.
pub fn enumerate_posterior(x: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = x.len();
    assert!((2..=16).contains(&n));
    let nf = n as f64;
    let k = (nf - 1.0) / 2.0;
    let grand = x.iter().sum::<f64>() / nf;
    let total: f64 = x.iter().map(|v| (v - grand) * (v - grand)).sum();
    let panels = 400;
    let mut prior_cache = vec![None; n + 1];
    let mut log_weights = Vec::with_capacity(1 << (n - 1));
    for mask in 0u32..(1 << (n - 1)) {
        let mut starts = vec![0usize];
        for i in 0..n - 1 {
            if mask & (1 << i) != 0 {
                starts.push(i + 1);
            }
        }
        let b = starts.len();
        let prior = *prior_cache[b]
            .get_or_insert_with(|| ln_beta_integral(b as f64 - 1.0, nf - b as f64, gamma, panels));
        let like = if total == 0.0 {
            0.0
        } else {
            let (w, bt) = block_sums(x, &starts);
            ln_weight_integral((b as f64 - 1.0) / 2.0, k, w, bt, lambda, panels)
        };
        log_weights.push(prior + like);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut probs = vec![0.0; n];
    for (mask, w) in weights.iter().enumerate() {
        for (i, p) in probs.iter_mut().enumerate().take(n - 1) {
            if mask & (1 << i) != 0 {
                *p += w / z;
            }
        }
    }
    probs
}

/// −Σ p log₂ p over the nonzero counts.
pub fn entropy_bits(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Two-sample-free KS statistic of `draws` against a step CDF given by
/// sorted `support` and cumulative `probs`.
pub fn ks_statistic(draws: &[f64], support: &[f64], probs: &[f64]) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    // Both CDFs are step functions on the same support; compare at each jump.
    for (v, &target) in support.iter().zip(probs) {
        let count = sorted.partition_point(|d| d <= v) as f64;
        worst = worst.max((count / n - target).abs());
    }
    worst
}

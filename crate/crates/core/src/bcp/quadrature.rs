//! Adaptive Gauss–Kronrod (7/15) quadrature plus a log-space driver for
//! unimodal integrands whose magnitude would under- or overflow in `f64`.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

fn kronrod_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (estimate, err) = kronrod_panel(f, a, b);
    if err <= tol || depth >= MAX_DEPTH || (b - a).abs() < 1e-300 {
        return estimate;
    }
    let mid = 0.5 * (a + b);
    adaptive(f, a, mid, 0.5 * tol, depth + 1) + adaptive(f, mid, b, 0.5 * tol, depth + 1)
}

/// ∫_a^b f with absolute tolerance `tol`, by recursive bisection.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adaptive(&f, a, b, tol, 0)
}

/// Absolute tolerance applied on the peak-normalized integrand.
pub const LOG_INTEGRAL_TOL: f64 = 1e-9;

// Tail cutoff relative to the peak value.
const TAIL_CUTOFF: f64 = 1e-20;

/// `ln ∫_lo^hi exp(g(s)) ds` for a concave `g` with maximum at `peak`.
///
/// `lo` may be `-inf`. The integrand is divided by `exp(g(peak))`, then
/// integrated outward from the peak over geometrically growing panels
/// until the remaining tail is negligible or the interval ends.
pub fn log_integral_concave(g: impl Fn(f64) -> f64, lo: f64, hi: f64, peak: f64) -> f64 {
    debug_assert!(lo <= peak && peak <= hi);
    let g_peak = g(peak);
    if !g_peak.is_finite() {
        return g_peak;
    }
    let f = |s: f64| {
        let v = g(s) - g_peak;
        if v.is_nan() {
            0.0
        } else {
            v.exp()
        }
    };

    // Local width from curvature at the peak, clamped.
    let h = 1e-4;
    let curvature = {
        let left = if peak - h >= lo { g(peak - h) } else { g_peak };
        let right = if peak + h <= hi { g(peak + h) } else { g_peak };
        let c = (left - 2.0 * g_peak + right) / (h * h);
        if c.is_finite() {
            -c
        } else {
            1.0
        }
    };
    let width = (1.0 / curvature.max(1e-8).sqrt()).clamp(1e-4, 4.0);

    let panel_tol = LOG_INTEGRAL_TOL * 1e-2;
    let mut total = 0.0;

    // outward to the right
    let mut x = peak;
    let mut step = width;
    while x < hi {
        let next = (x + step).min(hi);
        total += integrate(f, x, next, panel_tol);
        x = next;
        step *= 2.0;
        if f(x) < TAIL_CUTOFF {
            break;
        }
    }
    // outward to the left
    let mut x = peak;
    let mut step = width;
    while x > lo {
        let next = (x - step).max(lo);
        total += integrate(f, next, x, panel_tol);
        x = next;
        step *= 2.0;
        if f(x) < TAIL_CUTOFF {
            break;
        }
    }
    g_peak + total.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = integrate(|x| x.powi(6), -1.0, 1.0, 1e-13);
        assert!((v - 2.0 / 7.0).abs() < 1e-13);
    }

    #[test]
    fn sqrt_endpoint_singularity() {
        let v = integrate(|x| x.sqrt(), 0.0, 1.0, 1e-11);
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn log_space_gaussian() {
        // ∫ exp(-x²/2 + 1000) = sqrt(2π) e^1000
        let v = log_integral_concave(|x| -0.5 * x * x + 1000.0, f64::NEG_INFINITY, 50.0, 0.0);
        let expected = 1000.0 + (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
    }

    #[test]
    fn log_space_narrow_peak_far_from_start() {
        // very narrow spike, width ~1e-3, located at 7
        let sigma: f64 = 1e-3;
        let v = log_integral_concave(
            |x| -0.5 * ((x - 7.0) / sigma).powi(2) - 5000.0,
            f64::NEG_INFINITY,
            30.0,
            7.0,
        );
        let expected = -5000.0 + (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((v - expected).abs() < 1e-9);
    }
}

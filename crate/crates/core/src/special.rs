//! Digamma and log-gamma for positive real arguments.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_747,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_8e-4,
    -0.983_744_753_048_795_6e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_6e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];

/// `ln Γ(x)`. Uses the reflection formula below 0.5.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
///
/// Shifts the argument above 10 with the recurrence, then applies the
/// asymptotic series in `1/x²`.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli terms B_{2k}/(2k)
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 / x - series
}

/// Above this argument the differences below switch to asymptotic series.
const LARGE_ARG: f64 = 100.0;

/// Stirling remainder `ln Γ(x) - (x - ½) ln x + x - ½ ln 2π`.
fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ψ(x) - ln x + 1/(2x)`.
fn digamma_tail(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    -inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}

/// `ln Γ(x + h) - ln Γ(x)` without the cancellation of two large values.
pub fn ln_gamma_shift(x: f64, h: f64) -> f64 {
    let y = x + h;
    if x.min(y) < LARGE_ARG {
        return ln_gamma(y) - ln_gamma(x);
    }
    (x - 0.5) * (h / x).ln_1p() + h * (y.ln() - 1.0) + stirling_tail(y) - stirling_tail(x)
}

/// `ψ(x + h) - ψ(x)` without the cancellation of two large values.
pub fn digamma_shift(x: f64, h: f64) -> f64 {
    let y = x + h;
    if x.min(y) < LARGE_ARG {
        return digamma(y) - digamma(x);
    }
    (h / x).ln_1p() + h / (2.0 * x * y) + digamma_tail(y) - digamma_tail(x)
}

/// `ln B(a, b)`, accurate when one argument is much larger than the other.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    ln_gamma(small) - ln_gamma_shift(large, small)
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

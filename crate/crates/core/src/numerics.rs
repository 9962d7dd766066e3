//! Small numerical kernels shared by the model modules.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Stable `log(sum(exp(v)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of `logits`, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Table of `ln k!` for `k = 0..=n`.
pub fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    table.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of a centered normal with the given variance.
pub fn centered_normal_cdf(x: f64, variance: f64) -> f64 {
    normal_cdf(x / variance.sqrt())
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K15: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G7: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut kronrod = fc * GK_WEIGHTS_K15[7];
    let mut gauss = fc * GK_WEIGHTS_G7[3];
    for (j, &node) in GK_NODES.iter().take(7).enumerate() {
        let dx = half * node;
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += GK_WEIGHTS_K15[j] * pair;
        // Gauss nodes are the odd-indexed Kronrod nodes.
        if j % 2 == 1 {
            gauss += GK_WEIGHTS_G7[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod quadrature of `f` over `[a, b]` to an
/// absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate_rec(&f, a, b, abs_tol, 0)
}

fn integrate_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gauss_kronrod_15(f, a, b);
    if err <= tol || depth >= 50 || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return value;
    }
    let mid = 0.5 * (a + b);
    integrate_rec(f, a, mid, 0.5 * tol, depth + 1) + integrate_rec(f, mid, b, 0.5 * tol, depth + 1)
}

/// Fixed 5-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre_5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half * NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

/// Standard bivariate normal CDF `P(X <= x, Y <= y)` with correlation `rho`.
///
/// Uses the derivative identity `dΦ₂/dρ = φ₂(x, y; ρ)` integrated from 0,
/// accurate to about 1e-12 absolute for `|rho| < 1`.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return normal_cdf(y);
    }
    if y == f64::INFINITY {
        return normal_cdf(x);
    }
    let independent = normal_cdf(x) * normal_cdf(y);
    if rho == 0.0 {
        return independent;
    }
    let density = |r: f64| {
        let one_minus = 1.0 - r * r;
        (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * one_minus)).exp() / one_minus.sqrt()
    };
    let correction = integrate(density, 0.0, rho, 1e-13) / (2.0 * std::f64::consts::PI);
    (independent + correction).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn quadrature_matches_known_integrals() {
        let v = integrate(|x| x.exp(), 0.0, 1.0, 1e-14);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let gauss = integrate(|x| (-x * x / 2.0).exp(), -10.0, 10.0, 1e-13);
        assert!((gauss - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bivariate_cdf_known_values() {
        // Orthant probability 1/4 + asin(rho)/(2 pi).
        for rho in [-0.9, -0.5, 0.3, 0.8] {
            let expected = 0.25 + f64::asin(rho) / (2.0 * std::f64::consts::PI);
            assert!((bivariate_normal_cdf(0.0, 0.0, rho) - expected).abs() < 1e-11);
        }
        assert!((bivariate_normal_cdf(1.3, f64::INFINITY, -0.5) - normal_cdf(1.3)).abs() < 1e-15);
    }

    #[test]
    fn bivariate_cdf_matches_conditional_quadrature() {
        // P(X<=x, Y<=y) = ∫_{-∞}^{x} φ(s) Φ((y - ρ s)/√(1-ρ²)) ds.
        let (x, y, rho) = (0.7, -0.4, -0.5_f64);
        let c = (1.0 - rho * rho).sqrt();
        let oracle = integrate(
            |s| {
                (-s * s / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
                    * normal_cdf((y - rho * s) / c)
            },
            -12.0,
            x,
            1e-14,
        );
        assert!((bivariate_normal_cdf(x, y, rho) - oracle).abs() < 1e-11);
    }
}

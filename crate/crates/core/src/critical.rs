//! Fluctuations at the extremity of the critical line.
//!
//! Counts split as `N = n x + n^{3/4} T u + n^{1/2} V` with
//! `x = (1/2, 1/(2(q−1)), …)`, `u = (1 − q, 1, …, 1)` and `V ⊥ u`,
//! `Σ V_i = 0`. `T` has a quartic limit law, `V` a Gaussian one.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{CwpError, Result};
use crate::free_energy::{critical_line_minimizer, extremity_taylor, PhasePoint};
use crate::model::{count_marginal, CountVector, ExactLaw, ModelParams, StepCdf};
use crate::numerics::{centered_normal_cdf, gauss_legendre_5, integrate};

const CDF_TABLE_POINTS: usize = 10_000;
/// `a L⁴` at the table edge; the tail beyond carries `< e^{-40}` mass.
const TABLE_EDGE_EXPONENT: f64 = 40.0;

pub fn extremity_center(q: usize) -> Vec<f64> {
    critical_line_minimizer(q, 0.0)
}

pub fn critical_direction(q: usize) -> Vec<f64> {
    let mut u = vec![1.0; q];
    u[0] = 1.0 - q as f64;
    u
}

/// Model parameters at the extremity `(β₀, h₀)` for `q` colors.
pub fn extremity_params(q: usize, n: usize) -> Result<ModelParams> {
    let p = PhasePoint::extremity(q)?;
    ModelParams::new(q, p.beta, p.h, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalDecomposition {
    pub n: usize,
    pub t_value: f64,
    pub v: Vec<f64>,
}

impl CriticalDecomposition {
    /// `n x + n^{3/4} T u + n^{1/2} V`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let q = self.v.len();
        let n = self.n as f64;
        let x = extremity_center(q);
        let u = critical_direction(q);
        (0..q)
            .map(|i| n * x[i] + n.powf(0.75) * self.t_value * u[i] + n.sqrt() * self.v[i])
            .collect()
    }
}

pub fn decompose(nu: &CountVector) -> CriticalDecomposition {
    let q = nu.q();
    let n = nu.n();
    let nf = n as f64;
    let qm1 = q as f64 - 1.0;
    let w = nu.fluctuation(&extremity_center(q)).0;
    let t_value = (nu.get(0) as f64 - nf / 2.0) / (-qm1 * nf.powf(0.75));
    let mut v: Vec<f64> = w.iter().map(|wj| wj + w[0] / qm1).collect();
    v[0] = 0.0;
    CriticalDecomposition { n, t_value, v }
}

/// Probability law with density `∝ exp(−a t⁴)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticLaw {
    coefficient: f64,
    normalization: f64,
    fourth_moment_input: Option<f64>,
    half_width: f64,
    /// `∫_0^{t_k} exp(−a s⁴) ds` on `t_k = k L / (len − 1)`.
    table: Vec<f64>,
}

impl QuarticLaw {
    pub fn new(coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(CwpError::InvalidParameter(format!(
                "quartic coefficient must be positive, got {coefficient}"
            )));
        }
        let a = coefficient;
        let half_width = (TABLE_EDGE_EXPONENT / a).powf(0.25);
        let density = |t: f64| (-a * t.powi(4)).exp();
        let step = half_width / (CDF_TABLE_POINTS - 1) as f64;
        let mut table = Vec::with_capacity(CDF_TABLE_POINTS);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 1..CDF_TABLE_POINTS {
            acc += gauss_legendre_5(density, (k - 1) as f64 * step, k as f64 * step);
            table.push(acc);
        }
        let half = integrate(density, 0.0, half_width, 1e-13);
        Ok(Self {
            coefficient: a,
            normalization: 2.0 * half,
            fourth_moment_input: None,
            half_width,
            table,
        })
    }

    /// Law with `E[T⁴]` equal to `fourth_moment`, i.e. `a = 1/(4 E[T⁴])`.
    pub fn from_fourth_moment(fourth_moment: f64) -> Result<Self> {
        if !(fourth_moment > 0.0 && fourth_moment.is_finite()) {
            return Err(CwpError::InvalidParameter(format!(
                "fourth moment must be positive, got {fourth_moment}"
            )));
        }
        let mut law = Self::new(1.0 / (4.0 * fourth_moment))?;
        law.fourth_moment_input = Some(fourth_moment);
        Ok(law)
    }

    /// Limit law with `a = 4(q−1)⁴/3`.
    pub fn limit(q: usize) -> Result<Self> {
        Self::new(extremity_taylor(q)?.quartic_coefficient)
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `2 Γ(5/4) a^{-1/4}`.
    pub fn closed_form_normalization(&self) -> f64 {
        2.0 * gamma(1.25) * self.coefficient.powf(-0.25)
    }

    pub fn fourth_moment_input(&self) -> Option<f64> {
        self.fourth_moment_input
    }

    /// `E[T⁴] = 1/(4a)`.
    pub fn fourth_moment(&self) -> f64 {
        0.25 / self.coefficient
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn density(&self, t: f64) -> f64 {
        (-self.coefficient * t.powi(4)).exp() / self.normalization
    }

    fn half_integral(&self, t: f64) -> f64 {
        if t >= self.half_width {
            return self.normalization / 2.0;
        }
        let step = self.half_width / (CDF_TABLE_POINTS - 1) as f64;
        let k = ((t / step) as usize).min(CDF_TABLE_POINTS - 1);
        let a = self.coefficient;
        self.table[k] + gauss_legendre_5(|s| (-a * s.powi(4)).exp(), k as f64 * step, t)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        let tail = self.half_integral(t.abs()) / self.normalization;
        if t >= 0.0 {
            0.5 + tail
        } else {
            0.5 - tail
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if p < 0.5 {
            return -self.inverse_cdf(1.0 - p);
        }
        let target = (p - 0.5) * self.normalization;
        let k = self.table.partition_point(|&v| v < target);
        if k >= CDF_TABLE_POINTS {
            return self.half_width;
        }
        if k == 0 {
            return 0.0;
        }
        let step = self.half_width / (CDF_TABLE_POINTS - 1) as f64;
        let (mut lo, mut hi) = ((k - 1) as f64 * step, k as f64 * step);
        let frac = (target - self.table[k - 1]) / (self.table[k] - self.table[k - 1]);
        let mut t = lo + frac * step;
        for _ in 0..50 {
            let gap = self.half_integral(t) - target;
            if gap.abs() <= 1e-15 * self.normalization {
                break;
            }
            if gap > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - gap / (-self.coefficient * t.powi(4)).exp();
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.inverse_cdf(rng.random::<f64>())).collect()
    }
}

/// Exact law of `T` at the extremity, from the `N₁` marginal.
pub fn t_marginal_exact(q: usize, n: usize) -> Result<StepCdf> {
    let params = extremity_params(q, n)?;
    let pmf = count_marginal(&params, 0)?;
    let nf = n as f64;
    Ok(StepCdf::from_lattice_pmf(
        &pmf,
        nf / 2.0,
        (1.0 - q as f64) * nf.powf(0.75),
    ))
}

pub fn kolmogorov_t(t_law: &StepCdf, target: &QuarticLaw) -> f64 {
    t_law.kolmogorov_distance(|t| target.cdf(t))
}

pub fn kolmogorov_t_samples(samples: &[f64], target: &QuarticLaw) -> f64 {
    kolmogorov_t(&StepCdf::empirical(samples), target)
}

/// `16 (q−1)⁴ E[T⁴] / 3`, which tends to 1.
pub fn normalized_fourth_moment(q: usize, e_t4: f64) -> f64 {
    16.0 * (q as f64 - 1.0).powi(4) * e_t4 / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourthMomentRow {
    pub n: usize,
    pub e_t4: f64,
    pub normalized: f64,
    /// Monte Carlo standard error of `normalized`; `None` in exact mode.
    pub se: Option<f64>,
}

/// Exact per-`n` values of the normalized fourth moment.
pub fn fourth_moment_tracker(q: usize, ns: &[usize]) -> Result<Vec<FourthMomentRow>> {
    ns.iter()
        .map(|&n| {
            let e_t4 = t_marginal_exact(q, n)?.moment(4);
            Ok(FourthMomentRow {
                n,
                e_t4,
                normalized: normalized_fourth_moment(q, e_t4),
                se: None,
            })
        })
        .collect()
}

/// Plug-in normalized fourth moment from samples of `T`, with the naive
/// i.i.d. standard error.
pub fn fourth_moment_from_samples(q: usize, n: usize, samples: &[f64]) -> FourthMomentRow {
    let m = samples.len() as f64;
    let fourth: Vec<f64> = samples.iter().map(|t| t.powi(4)).collect();
    let mean = fourth.iter().sum::<f64>() / m;
    let var = fourth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    FourthMomentRow {
        n,
        e_t4: mean,
        normalized: normalized_fourth_moment(q, mean),
        se: Some(normalized_fourth_moment(q, (var / m).sqrt())),
    }
}

/// Exact-mode summary for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRow {
    pub n: usize,
    #[serde(rename = "E_T4")]
    pub e_t4: f64,
    pub normalized_fourth_moment: f64,
    #[serde(rename = "dK_T_vs_fqT")]
    pub dk_t_vs_fqt: f64,
    #[serde(rename = "dK_T_vs_gq")]
    pub dk_t_vs_gq: f64,
}

pub fn critical_row_exact(q: usize, n: usize) -> Result<CriticalRow> {
    let law = t_marginal_exact(q, n)?;
    let e_t4 = law.moment(4);
    let f_qt = QuarticLaw::from_fourth_moment(e_t4)?;
    let g_q = QuarticLaw::limit(q)?;
    Ok(CriticalRow {
        n,
        e_t4,
        normalized_fourth_moment: normalized_fourth_moment(q, e_t4),
        dk_t_vs_fqt: kolmogorov_t(&law, &f_qt),
        dk_t_vs_gq: kolmogorov_t(&law, &g_q),
    })
}

/// Comparison of `V` with its Gaussian limit on coordinates `2..q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VCheck {
    pub samples: usize,
    #[serde(rename = "V_cov_empirical")]
    pub cov_empirical: Vec<Vec<f64>>,
    #[serde(rename = "V_cov_target")]
    pub cov_target: Vec<Vec<f64>>,
    pub var_v2: f64,
    pub var_v2_target: f64,
    /// `None` for `q = 3` with a zero second coordinate throughout.
    pub corr_v2_v3: Option<f64>,
    #[serde(rename = "dK_V2")]
    pub dk_v2: f64,
    /// Largest `|Σ_{i≥2} V_i|` over the sample.
    pub max_constraint_violation: f64,
}

/// Second moments `E[V Vᵗ]` of weighted decompositions on coordinates
/// `2..q`, compared with the limiting covariance.
pub fn v_gaussian_check(q: usize, weighted: &[(CriticalDecomposition, f64)]) -> Result<VCheck> {
    let target = extremity_taylor(q)?.v_covariance;
    let dim = q - 1;
    let total: f64 = weighted.iter().map(|w| w.1).sum();
    if weighted.is_empty() || !(total > 0.0) {
        return Err(CwpError::InsufficientSamples {
            required: 1,
            got: 0,
        });
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut violation: f64 = 0.0;
    for (d, w) in weighted {
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += w * d.v[i + 1] * d.v[j + 1];
            }
        }
        violation = violation.max(d.v[1..].iter().sum::<f64>().abs());
    }
    cov /= total;
    let var_v2 = cov[(0, 0)];
    let corr_v2_v3 = (dim >= 2 && var_v2 > 0.0 && cov[(1, 1)] > 0.0)
        .then(|| cov[(0, 1)] / (var_v2 * cov[(1, 1)]).sqrt());
    let cdf = StepCdf::new(weighted.iter().map(|(d, w)| (d.v[1], w / total)).collect());
    let var_v2_target = target[(0, 0)];
    Ok(VCheck {
        samples: weighted.len(),
        cov_empirical: crate::free_energy::matrix_rows(&cov),
        cov_target: crate::free_energy::matrix_rows(&target),
        var_v2,
        var_v2_target,
        corr_v2_v3,
        dk_v2: cdf.kolmogorov_distance(|t| centered_normal_cdf(t, var_v2_target)),
        max_constraint_violation: violation,
    })
}

/// Every atom of an exact law, decomposed and weighted by its probability.
pub fn decompose_law(law: &ExactLaw) -> Vec<(CriticalDecomposition, f64)> {
    law.iter()
        .map(|(atom, p)| {
            let nu = CountVector::new(atom.to_vec()).expect("atoms have q ≥ 3 parts");
            (decompose(&nu), p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn cv(c: &[u32]) -> CountVector {
        CountVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let d = decompose(&cv(&[8, 4, 4]));
        assert_eq!(d.t_value, 0.0);
        assert!(d.v.iter().all(|v| v.abs() < 1e-15));

        let d = decompose(&cv(&[10, 3, 3]));
        // W₁ = 0.5 = (1 − q) n^{1/4} T with n^{1/4} = 2.
        assert!((d.t_value + 0.125).abs() < 1e-15);
        assert!(d.v.iter().all(|v| v.abs() < 1e-15));

        let d = decompose(&cv(&[8, 5, 3]));
        assert_eq!(d.t_value, 0.0);
        assert!((d.v[1] - 0.25).abs() < 1e-15 && (d.v[2] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn extremity_params_are_degenerate_point() {
        let p = extremity_params(3, 10).unwrap();
        assert!((p.beta - 8.0 / 3.0).abs() < 1e-15);
        assert!((p.h - (2f64.ln() - 2.0 / 3.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(a in 0u32..400, b in 0u32..400, c in 0u32..400, d in 0u32..50) {
            for counts in [vec![a, b, c], vec![a, b, c, d]] {
                let nu = cv(&counts);
                prop_assume!(nu.n() > 0);
                let dec = decompose(&nu);
                let back = dec.reconstruct();
                for (x, y) in back.iter().zip(&counts) {
                    prop_assert!((x - *y as f64).abs() < 1e-12 * (1.0 + nu.n() as f64));
                }
                prop_assert_eq!(dec.v[0], 0.0);
                prop_assert!(dec.v.iter().sum::<f64>().abs() < 1e-12);
                let u = critical_direction(nu.q());
                let dot: f64 = dec.v.iter().zip(&u).map(|(v, u)| v * u).sum();
                prop_assert!(dot.abs() < 1e-11);
            }
        }

        #[test]
        fn t_depends_only_on_first_count(a in 0u32..100, b in 0u32..100, c in 0u32..100, shift in 0u32..50) {
            let shift = shift.min(b);
            let first = decompose(&cv(&[a, b, c]));
            let moved = decompose(&cv(&[a, b - shift, c + shift]));
            prop_assert_eq!(first.t_value, moved.t_value);
        }

        #[test]
        fn quartic_cdf_symmetry(a in 0.05f64..50.0, t in -3.0f64..3.0) {
            let law = QuarticLaw::new(a).unwrap();
            prop_assert!((law.cdf(-t) - (1.0 - law.cdf(t))).abs() < 1e-10);
        }
    }

    #[test]
    fn quartic_normalization_matches_gamma() {
        for a in [0.1, 1.0, 64.0 / 3.0] {
            let law = QuarticLaw::new(a).unwrap();
            let rel = (law.normalization() / law.closed_form_normalization() - 1.0).abs();
            assert!(rel < 1e-8, "a = {a}: {rel}");
            assert_eq!(law.cdf(0.0), 0.5);
        }
    }

    #[test]
    fn limit_law_coefficient() {
        let law = QuarticLaw::limit(3).unwrap();
        assert!((law.coefficient() - 64.0 / 3.0).abs() < 1e-12);
        assert!((law.fourth_moment() - 3.0 / 256.0).abs() < 1e-15);
        assert!((normalized_fourth_moment(3, law.fourth_moment()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quartic_cdf_is_monotone_and_matches_quadrature() {
        let law = QuarticLaw::new(2.5).unwrap();
        let mut prev = 0.0;
        for k in 0..=400 {
            let t = -law.half_width() + 2.0 * law.half_width() * k as f64 / 400.0;
            let v = law.cdf(t);
            assert!(v >= prev);
            prev = v;
        }
        assert!(law.cdf(-law.half_width()) < 1e-12 && law.cdf(law.half_width()) > 1.0 - 1e-12);
        for t in [-1.3, -0.2, 0.45, 0.9] {
            let direct = integrate(|s| law.density(s), -law.half_width(), t, 1e-14);
            assert!((law.cdf(t) - direct).abs() < 1e-11);
        }
        let mass = integrate(|s| law.density(s), -law.half_width(), law.half_width(), 1e-14);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fourth_moment_input_roundtrip() {
        let law = QuarticLaw::from_fourth_moment(0.02).unwrap();
        let m4 = integrate(|t| t.powi(4) * law.density(t), -law.half_width(), law.half_width(), 1e-14);
        assert!((m4 - 0.02).abs() < 1e-10);
        assert_eq!(law.fourth_moment_input(), Some(0.02));
        assert!(QuarticLaw::from_fourth_moment(0.0).is_err());
        assert!(QuarticLaw::new(-1.0).is_err());
    }

    #[test]
    fn inverse_cdf_roundtrip() {
        let law = QuarticLaw::limit(3).unwrap();
        for p in [1e-9, 0.01, 0.3, 0.5, 0.77, 0.999999] {
            let t = law.inverse_cdf(p);
            assert!((law.cdf(t) - p).abs() < 1e-13, "{p}");
        }
    }

    #[test]
    fn samples_from_limit_law() {
        let law = QuarticLaw::limit(3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs = law.sample(&mut rng, 200_000);
        assert!(kolmogorov_t_samples(&xs, &law) < 5e-3);
        let row = fourth_moment_from_samples(3, 0, &xs);
        assert!((row.normalized - 1.0).abs() < 3.0 * row.se.unwrap());
    }

    #[test]
    fn tiny_n_is_far_from_quartic() {
        let law = t_marginal_exact(3, 1).unwrap();
        let d = kolmogorov_t(&law, &QuarticLaw::limit(3).unwrap());
        assert!(d > 0.4 && d <= 0.5 + 1e-12, "{d}");
    }

    #[test]
    fn exact_t_law_is_normalized() {
        let law = t_marginal_exact(3, 64).unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
        let rows = fourth_moment_tracker(3, &[16, 64]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.normalized > 0.0 && r.se.is_none()));
    }

    #[test]
    fn v_check_on_exact_law() {
        let params = extremity_params(3, 60).unwrap();
        let law = crate::model::exact_law(&params).unwrap();
        let weighted = decompose_law(&law);
        let check = v_gaussian_check(3, &weighted).unwrap();
        assert!(check.max_constraint_violation < 1e-12);
        assert!((check.var_v2_target - 0.375).abs() < 1e-15);
        assert!((check.corr_v2_v3.unwrap() + 1.0).abs() < 1e-12);
        assert!((check.cov_empirical[0][1] + check.var_v2).abs() < 1e-12);
    }
}

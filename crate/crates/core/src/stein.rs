//! Exchangeable-pair diagnostics: exact conditional moments of `W′ − W`
//! given the configuration, the regression residual, Monte Carlo bound
//! terms with jackknife errors, Kolmogorov distances and log-log fits.
//!
//! The conditional moments depend on the configuration only through its
//! counts: a site of color `c` moves to `c′` with the same probability for
//! every such site, so the sums over sites group by color.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CwpError, Result};
use crate::free_energy::RegressionMatrix;
use crate::model::{ExactLaw, FluctuationVector, ModelParams, StepCdf};
use crate::numerics::{bivariate_normal_cdf, centered_normal_cdf};
use crate::sampler::{heat_bath_probabilities, ChainState};

/// Minimum number of samples accepted by [`bound_terms`].
pub const MIN_BOUND_SAMPLES: usize = 1_000;
const JACKKNIFE_BLOCKS: usize = 20;

/// Conditional moments of `ΔW = W′ − W` given the current configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMoments {
    pub drift: Vec<f64>,
    pub second: DMatrix<f64>,
    /// `E[|ΔW_i ΔW_j ΔW_k|]`, flattened as `i·q² + j·q + k`.
    pub third_abs: Vec<f64>,
}

impl PairMoments {
    pub fn q(&self) -> usize {
        self.drift.len()
    }

    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        let q = self.q();
        self.third_abs[i * q * q + j * q + k]
    }
}

/// Exact conditional moments for a configuration with the given counts.
pub fn pair_moments_from_counts(params: &ModelParams, counts: &[u32]) -> PairMoments {
    let q = params.q;
    let n = params.n as f64;
    let sqrt_n = n.sqrt();
    let mut drift = vec![0.0; q];
    let mut second = DMatrix::zeros(q, q);
    let mut third_abs = vec![0.0; q * q * q];
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let site_weight = count as f64 / n;
        let probs = heat_bath_probabilities(params, counts, c);
        for (to, &p) in probs.iter().enumerate() {
            if to == c || p == 0.0 {
                continue;
            }
            let w = site_weight * p;
            drift[to] += w / sqrt_n;
            drift[c] -= w / sqrt_n;
            // ΔW = (e_to − e_c)/√n has entries +1, −1 at two coordinates.
            let entries = [(to, 1.0), (c, -1.0)];
            for &(i, si) in &entries {
                for &(j, sj) in &entries {
                    second[(i, j)] += w * si * sj / n;
                    for &(k, _) in &entries {
                        third_abs[i * q * q + j * q + k] += w / (n * sqrt_n);
                    }
                }
            }
        }
    }
    PairMoments {
        drift,
        second,
        third_abs,
    }
}

/// Exact conditional moments at the chain's current configuration.
pub fn pair_moments_exact(state: &ChainState) -> PairMoments {
    pair_moments_from_counts(state.params(), state.counts().as_slice())
}

/// `R = E[W′ − W | σ] + Λ W`.
pub fn regression_residual(
    moments: &PairMoments,
    w: &FluctuationVector,
    regression: &RegressionMatrix,
) -> Vec<f64> {
    let q = moments.q();
    (0..q)
        .map(|i| {
            moments.drift[i]
                + (0..q)
                    .map(|j| regression.lambda[(i, j)] * w.0[j])
                    .sum::<f64>()
        })
        .collect()
}

/// One recorded configuration: its fluctuation vector and exact moments.
#[derive(Debug, Clone)]
pub struct SteinSample {
    pub w: FluctuationVector,
    pub moments: PairMoments,
}

impl SteinSample {
    pub fn new(params: &ModelParams, counts: &[u32], center: &[f64]) -> Self {
        Self {
            w: FluctuationVector::from_counts(counts, center),
            moments: pair_moments_from_counts(params, counts),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct BoundErrors {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A3")]
    pub a3: f64,
}

/// Monte Carlo estimates of the exchangeable-pair bound terms.
///
/// Variances of conditional moments are taken across sampled
/// configurations, i.e. conditioning on `σ` rather than on `W`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTerms {
    pub n: usize,
    pub sample_size: usize,
    pub lambda_cols: Vec<f64>,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A3")]
    pub a3: f64,
    /// Block-jackknife standard errors.
    pub se: BoundErrors,
}

/// Running sums over a set of samples of every quantity the bound terms
/// depend on.
#[derive(Debug, Clone)]
struct MomentSums {
    count: f64,
    second: Vec<f64>,
    second_sq: Vec<f64>,
    third: Vec<f64>,
    residual: Vec<f64>,
    residual_sq: Vec<f64>,
}

impl MomentSums {
    fn zero(q: usize) -> Self {
        Self {
            count: 0.0,
            second: vec![0.0; q * q],
            second_sq: vec![0.0; q * q],
            third: vec![0.0; q * q * q],
            residual: vec![0.0; q],
            residual_sq: vec![0.0; q],
        }
    }

    fn add(&mut self, sample: &SteinSample, regression: &RegressionMatrix) {
        let q = sample.moments.q();
        self.count += 1.0;
        for i in 0..q {
            for j in 0..q {
                let v = sample.moments.second[(i, j)];
                self.second[i * q + j] += v;
                self.second_sq[i * q + j] += v * v;
            }
        }
        for (t, v) in self.third.iter_mut().zip(&sample.moments.third_abs) {
            *t += v;
        }
        let r = regression_residual(&sample.moments, &sample.w, regression);
        for i in 0..q {
            self.residual[i] += r[i];
            self.residual_sq[i] += r[i] * r[i];
        }
    }

    fn accumulate(&mut self, other: &Self) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        self.count += other.count;
        add(&mut self.second, &other.second);
        add(&mut self.second_sq, &other.second_sq);
        add(&mut self.third, &other.third);
        add(&mut self.residual, &other.residual);
        add(&mut self.residual_sq, &other.residual_sq);
    }

    fn minus(&self, other: &Self) -> Self {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self {
            count: self.count - other.count,
            second: sub(&self.second, &other.second),
            second_sq: sub(&self.second_sq, &other.second_sq),
            third: sub(&self.third, &other.third),
            residual: sub(&self.residual, &other.residual),
            residual_sq: sub(&self.residual_sq, &other.residual_sq),
        }
    }

    /// `(A, B, C, A2, A3)` from these sums.
    fn terms(&self, lambda: &[f64]) -> [f64; 5] {
        let q = lambda.len();
        let m = self.count;
        let variance = |s: f64, s2: f64| ((s2 - s * s / m) / (m - 1.0)).max(0.0);
        let mut a = 0.0;
        for i in 0..q {
            for j in 0..q {
                let k = i * q + j;
                a += lambda[i] * variance(self.second[k], self.second_sq[k]).sqrt();
            }
        }
        let mut b = 0.0;
        for i in 0..q {
            let row: f64 = self.third[i * q * q..(i + 1) * q * q].iter().sum();
            b += lambda[i] * row / m;
        }
        let mut c = 0.0;
        let mut a2 = 0.0;
        for i in 0..q {
            c += lambda[i] * variance(self.residual[i], self.residual_sq[i]).sqrt();
            a2 += lambda[i] * (self.residual_sq[i] / m).sqrt();
        }
        [a, b, c, a2, lambda.iter().sum()]
    }
}

pub fn bound_terms(samples: &[SteinSample], regression: &RegressionMatrix) -> Result<BoundTerms> {
    if samples.len() < MIN_BOUND_SAMPLES {
        return Err(CwpError::InsufficientSamples {
            required: MIN_BOUND_SAMPLES,
            got: samples.len(),
        });
    }
    let q = regression.lambda_cols.len();
    let lambda = &regression.lambda_cols;
    let block_len = samples.len().div_ceil(JACKKNIFE_BLOCKS);
    let blocks: Vec<MomentSums> = samples
        .chunks(block_len)
        .map(|chunk| {
            let mut sums = MomentSums::zero(q);
            for s in chunk {
                sums.add(s, regression);
            }
            sums
        })
        .collect();
    let mut total = MomentSums::zero(q);
    for b in &blocks {
        total.accumulate(b);
    }
    let full = total.terms(lambda);
    let leave_out: Vec<[f64; 5]> = blocks.iter().map(|b| total.minus(b).terms(lambda)).collect();
    let k = leave_out.len() as f64;
    let se: Vec<f64> = (0..5)
        .map(|t| {
            let mean = leave_out.iter().map(|v| v[t]).sum::<f64>() / k;
            ((k - 1.0) / k * leave_out.iter().map(|v| (v[t] - mean).powi(2)).sum::<f64>()).sqrt()
        })
        .collect();
    Ok(BoundTerms {
        n: regression.n,
        sample_size: samples.len(),
        lambda_cols: lambda.clone(),
        a: full[0],
        b: full[1],
        c: full[2],
        a1: full[0],
        a2: full[3],
        a3: full[4],
        se: BoundErrors {
            a: se[0],
            b: se[1],
            c: se[2],
            a1: se[0],
            a2: se[3],
            a3: se[4],
        },
    })
}

/// Bound terms under an exact law, with zero standard errors.
pub fn bound_terms_exact(law: &ExactLaw, center: &[f64], regression: &RegressionMatrix) -> BoundTerms {
    let params = law.params();
    let q = params.q;
    let lambda = &regression.lambda_cols;
    let mut second = vec![0.0; q * q];
    let mut second_sq = vec![0.0; q * q];
    let mut third = vec![0.0; q];
    let mut residual = vec![0.0; q];
    let mut residual_sq = vec![0.0; q];
    for (atom, p) in law.iter() {
        let m = pair_moments_from_counts(params, atom);
        let w = FluctuationVector::from_counts(atom, center);
        let r = regression_residual(&m, &w, regression);
        for i in 0..q {
            for j in 0..q {
                let v = m.second[(i, j)];
                second[i * q + j] += p * v;
                second_sq[i * q + j] += p * v * v;
            }
            third[i] += p * m.third_abs[i * q * q..(i + 1) * q * q].iter().sum::<f64>();
            residual[i] += p * r[i];
            residual_sq[i] += p * r[i] * r[i];
        }
    }
    let sd = |s: f64, s2: f64| (s2 - s * s).max(0.0).sqrt();
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    let mut a2 = 0.0;
    for i in 0..q {
        for j in 0..q {
            a += lambda[i] * sd(second[i * q + j], second_sq[i * q + j]);
        }
        b += lambda[i] * third[i];
        c += lambda[i] * sd(residual[i], residual_sq[i]);
        a2 += lambda[i] * residual_sq[i].sqrt();
    }
    BoundTerms {
        n: regression.n,
        sample_size: 0,
        lambda_cols: lambda.clone(),
        a,
        b,
        c,
        a1: a,
        a2,
        a3: lambda.iter().sum(),
        se: BoundErrors::default(),
    }
}

/// Largest value [`BoundTerms::b`] can take: `|ΔW_i| ≤ n^{-1/2}`.
pub fn third_moment_ceiling(regression: &RegressionMatrix) -> f64 {
    let q = regression.lambda_cols.len() as f64;
    let n = regression.n as f64;
    regression.lambda_cols.iter().sum::<f64>() * q * q * 2f64.powf(1.5) / n.powf(1.5)
}

/// Exact Kolmogorov distance between `W₁ = √n (L_{n,1} − center₁)` under
/// `law` and `N(0, sigma_11)`.
pub fn kolmogorov_exact_marginal(law: &ExactLaw, center: &[f64], sigma_11: f64) -> f64 {
    let n = law.params().n as f64;
    law.marginal_cdf(0, center[0], n.sqrt())
        .kolmogorov_distance(|t| centered_normal_cdf(t, sigma_11))
}

pub fn kolmogorov_sample_marginal(samples: &[f64], variance: f64) -> f64 {
    StepCdf::empirical(samples).kolmogorov_distance(|t| centered_normal_cdf(t, variance))
}

/// Evaluation points for lower-quadrant CDFs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrantGrid {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl QuadrantGrid {
    /// `points × points` grid spanning `±4` marginal standard deviations.
    pub fn covering(sigma: &[[f64; 2]; 2], points: usize) -> Self {
        let axis = |var: f64| {
            let sd = var.sqrt();
            if points == 1 {
                return vec![0.0];
            }
            (0..points)
                .map(|k| -4.0 * sd + 8.0 * sd * k as f64 / (points - 1) as f64)
                .collect()
        };
        Self {
            t1: axis(sigma[0][0]),
            t2: axis(sigma[1][1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantDistance {
    /// Max over the grid; a lower bound on the supremum over all quadrants.
    pub value: f64,
    pub lower_bound: bool,
    pub argmax: (f64, f64),
    /// Empirical CDF value at the maximizing point.
    pub cdf_at_argmax: f64,
}

/// Weighted points `(w₁, w₂, mass)` from an exact law.
pub fn law_points(law: &ExactLaw, center: &[f64]) -> Vec<(f64, f64, f64)> {
    law.iter()
        .map(|(atom, p)| {
            let w = FluctuationVector::from_counts(atom, center);
            (w.0[0], w.0[1], p)
        })
        .collect()
}

/// `max_grid |P(W₁ ≤ t₁, W₂ ≤ t₂) − Φ_Σ(t₁, t₂)|`.
pub fn kolmogorov_quadrant_grid(
    points: &[(f64, f64, f64)],
    sigma: &[[f64; 2]; 2],
    grid: &QuadrantGrid,
) -> QuadrantDistance {
    let (k1, k2) = (grid.t1.len(), grid.t2.len());
    // hist[a][b]: mass whose first grid index with t ≥ w is (a, b).
    let mut hist = vec![0.0; (k1 + 1) * (k2 + 1)];
    let mut total = 0.0;
    for &(w1, w2, m) in points {
        let a = grid.t1.partition_point(|&t| t < w1);
        let b = grid.t2.partition_point(|&t| t < w2);
        hist[a * (k2 + 1) + b] += m;
        total += m;
    }
    let mut cdf = vec![0.0; k1 * k2];
    for a in 0..k1 {
        let mut row = 0.0;
        for b in 0..k2 {
            row += hist[a * (k2 + 1) + b];
            let above = if a > 0 { cdf[(a - 1) * k2 + b] } else { 0.0 };
            cdf[a * k2 + b] = above + row;
        }
    }
    let s1 = sigma[0][0].sqrt();
    let s2 = sigma[1][1].sqrt();
    let rho = sigma[0][1] / (s1 * s2);
    let mut best = QuadrantDistance {
        value: 0.0,
        lower_bound: true,
        argmax: (grid.t1.first().copied().unwrap_or(0.0), grid.t2.first().copied().unwrap_or(0.0)),
        cdf_at_argmax: 0.0,
    };
    for a in 0..k1 {
        for b in 0..k2 {
            let empirical = cdf[a * k2 + b] / total;
            let target = bivariate_normal_cdf(grid.t1[a] / s1, grid.t2[b] / s2, rho);
            let gap = (empirical - target).abs();
            if gap > best.value {
                best.value = gap;
                best.argmax = (grid.t1[a], grid.t2[b]);
                best.cdf_at_argmax = empirical;
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(log n, log value)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(CwpError::InvalidParameter(format!(
            "a rate fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(n, v) in points {
        if !(v > 0.0) {
            return Err(CwpError::NonPositive(v));
        }
        if !(n > 0.0) {
            return Err(CwpError::NonPositive(n));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CwpError::InvalidParameter("all n values are equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_energy::{find_minimizers, regression_matrix};
    use crate::model::{exact_law, CountVector};
    use crate::numerics::normal_cdf;
    use crate::sampler::SamplingPlan;
    use rand::{Rng, SeedableRng};

    fn params(q: usize, beta: f64, h: f64, n: usize) -> ModelParams {
        ModelParams::new(q, beta, h, n).unwrap()
    }

    /// Averages over the uniform site and the new color, site by site.
    fn brute_force(params: &ModelParams, spins: &[u16]) -> PairMoments {
        let q = params.q;
        let n = spins.len();
        let nf = n as f64;
        let mut counts = vec![0u32; q];
        for &s in spins {
            counts[s as usize] += 1;
        }
        let mut drift = vec![0.0; q];
        let mut second = DMatrix::zeros(q, q);
        let mut third = vec![0.0; q * q * q];
        for &spin in spins {
            let current = spin as usize;
            // Conditional law straight from the leave-one-out fractions.
            let logits: Vec<f64> = (0..q)
                .map(|i| {
                    let m = spins.iter().filter(|&&s| s as usize == i).count() as f64
                        - if i == current { 1.0 } else { 0.0 };
                    params.beta * m / nf + if i == 0 { params.h } else { 0.0 }
                })
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for to in 0..q {
                let p = logits[to].exp() / z / nf;
                let mut d = vec![0.0; q];
                d[to] += 1.0 / nf.sqrt();
                d[current] -= 1.0 / nf.sqrt();
                for i in 0..q {
                    drift[i] += p * d[i];
                    for j in 0..q {
                        second[(i, j)] += p * d[i] * d[j];
                        for k in 0..q {
                            third[i * q * q + j * q + k] += p * (d[i] * d[j] * d[k]).abs();
                        }
                    }
                }
            }
        }
        PairMoments { drift, second, third_abs: third }
    }

    #[test]
    fn single_site_drift() {
        let p = params(3, 1.7, 0.0, 1);
        let m = pair_moments_from_counts(&p, &[0, 1, 0]);
        let third = 1.0 / 3.0;
        let expected = [third, third - 1.0, third];
        for (a, b) in m.drift.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_match_brute_force() {
        for n in 1..=3 {
            let p = params(3, 2.3, 0.4, n);
            let mut configs = vec![vec![]];
            for _ in 0..n {
                configs = configs
                    .into_iter()
                    .flat_map(|c: Vec<u16>| {
                        (0..3u16).map(move |s| {
                            let mut c = c.clone();
                            c.push(s);
                            c
                        })
                    })
                    .collect();
            }
            for spins in configs {
                let counts = crate::model::SpinConfiguration::new(3, spins.clone()).unwrap().counts();
                let fast = pair_moments_from_counts(&p, counts.as_slice());
                let slow = brute_force(&p, &spins);
                for (a, b) in fast.drift.iter().zip(&slow.drift) {
                    assert!((a - b).abs() < 1e-14);
                }
                for (a, b) in fast.second.iter().zip(slow.second.iter()) {
                    assert!((a - b).abs() < 1e-14);
                }
                for (a, b) in fast.third_abs.iter().zip(&slow.third_abs) {
                    assert!((a - b).abs() < 1e-14);
                }
                assert!(fast.drift.iter().sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn second_moment_is_psd() {
        let p = params(4, 2.0, 0.1, 17);
        let m = pair_moments_from_counts(&p, &[5, 4, 6, 2]);
        let eig = m.second.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&v| v > -1e-15));
    }

    #[test]
    fn residual_at_center_is_drift() {
        let p = params(3, 2.0, 0.0, 12);
        let pp = p.phase_point();
        let m = &find_minimizers(&pp).minimizers[0];
        let reg = regression_matrix(&pp, m, 12).unwrap();
        let counts = [4, 4, 4];
        let moments = pair_moments_from_counts(&p, &counts);
        let w = FluctuationVector::from_counts(&counts, &m.x);
        let r = regression_residual(&moments, &w, &reg);
        for (a, b) in r.iter().zip(&moments.drift) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exchangeability_identity_holds_exactly_under_the_law() {
        // E[ΔW ΔWᵗ] = −2 E[drift Wᵗ] for the stationary law.
        let p = params(3, 2.0, 0.0, 30);
        let law = exact_law(&p).unwrap();
        let center = [1.0 / 3.0; 3];
        let mut lhs = DMatrix::<f64>::zeros(3, 3);
        let mut rhs = DMatrix::<f64>::zeros(3, 3);
        let mut mean_drift = [0.0; 3];
        for (atom, pr) in law.iter() {
            let m = pair_moments_from_counts(&p, atom);
            let w = FluctuationVector::from_counts(atom, &center);
            for i in 0..3 {
                mean_drift[i] += pr * m.drift[i];
                for j in 0..3 {
                    lhs[(i, j)] += pr * m.second[(i, j)];
                    rhs[(i, j)] -= pr * (m.drift[i] * w.0[j] + m.drift[j] * w.0[i]);
                }
            }
        }
        assert!((lhs - rhs).abs().max() < 1e-14);
        assert!(mean_drift.iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn bound_terms_need_enough_samples() {
        let p = params(3, 2.0, 0.0, 10);
        let pp = p.phase_point();
        let m = &find_minimizers(&pp).minimizers[0];
        let reg = regression_matrix(&pp, m, 10).unwrap();
        let samples: Vec<SteinSample> = (0..10).map(|_| SteinSample::new(&p, &[4, 3, 3], &m.x)).collect();
        assert!(matches!(
            bound_terms(&samples, &reg),
            Err(CwpError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn bound_terms_basic_properties() {
        let p = params(3, 2.0, 0.0, 64);
        let pp = p.phase_point();
        let m = &find_minimizers(&pp).minimizers[0];
        let reg = regression_matrix(&pp, m, 64).unwrap();
        let plan = SamplingPlan { samples: 2000, burn_in: 200, thinning: 3 };
        let draws = crate::sampler::sample_counts(&p, &m.x, &plan, 1, 0).unwrap();
        let samples: Vec<SteinSample> = draws
            .iter()
            .map(|s| SteinSample::new(&p, s.counts.as_slice(), &m.x))
            .collect();
        let terms = bound_terms(&samples, &reg).unwrap();
        assert_eq!(terms.a3, reg.lambda_cols.iter().sum::<f64>());
        assert!(terms.b <= third_moment_ceiling(&reg));
        for v in [terms.a, terms.b, terms.c, terms.a1, terms.a2, terms.a3] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert!(terms.se.a > 0.0 && terms.se.a3 == 0.0);
        let json = serde_json::to_value(&terms).unwrap();
        for key in ["n", "lambda_cols", "A", "B", "C", "A1", "A2", "A3", "se"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn exact_terms_agree_with_sampled_terms() {
        let p = params(3, 2.0, 0.0, 32);
        let pp = p.phase_point();
        let m = &find_minimizers(&pp).minimizers[0];
        let reg = regression_matrix(&pp, m, 32).unwrap();
        let law = exact_law(&p).unwrap();
        let exact = bound_terms_exact(&law, &m.x, &reg);
        // I.i.d. draws from the exact law.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<SteinSample> = law
            .draw(&mut rng, 40_000)
            .into_iter()
            .map(|i| SteinSample::new(&p, law.atom(i), &m.x))
            .collect();
        let mc = bound_terms(&samples, &reg).unwrap();
        for (e, s, se) in [(exact.a, mc.a, mc.se.a), (exact.b, mc.b, mc.se.b), (exact.c, mc.c, mc.se.c), (exact.a2, mc.a2, mc.se.a2)] {
            assert!((e - s).abs() < 4.0 * se + 1e-12, "{e} {s} {se}");
        }
        assert_eq!(exact.a3, mc.a3);
    }

    /// Binomial-vs-normal Kolmogorov distance evaluated directly from the
    /// binomial pmf.
    fn binomial_oracle(n: usize, p: f64) -> f64 {
        let var = n as f64 * p * (1.0 - p);
        let mut cdf = 0.0;
        let mut sup: f64 = 0.0;
        let mut coef = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                coef *= (n - k + 1) as f64 / k as f64;
            }
            let mass = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            let t = (k as f64 - n as f64 * p) / var.sqrt();
            let phi = normal_cdf(t);
            sup = sup.max((cdf - phi).abs());
            cdf += mass;
            sup = sup.max((cdf - phi).abs());
        }
        sup
    }

    #[test]
    fn kolmogorov_marginal_binomial_surrogate() {
        let (n, h) = (40usize, 0.3);
        let law = exact_law(&params(3, 0.0, h, n)).unwrap();
        let prob = h.exp() / (h.exp() + 2.0);
        let center = [prob, (1.0 - prob) / 2.0, (1.0 - prob) / 2.0];
        let d = kolmogorov_exact_marginal(&law, &center, prob * (1.0 - prob));
        assert!((d - binomial_oracle(n, prob)).abs() < 1e-10);
    }

    #[test]
    fn sample_marginal_of_gaussian_draws_is_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                2.0 * (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            })
            .collect();
        assert!(kolmogorov_sample_marginal(&xs, 4.0) < 0.015);
        assert!(kolmogorov_sample_marginal(&xs, 1.0) > 0.1);
    }

    #[test]
    fn quadrant_grid_properties() {
        let sigma = [[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]];
        let law = exact_law(&params(3, 2.0, 0.0, 30)).unwrap();
        let pts = law_points(&law, &[1.0 / 3.0; 3]);
        let inf = QuadrantGrid { t1: vec![f64::INFINITY], t2: vec![f64::INFINITY] };
        assert!(kolmogorov_quadrant_grid(&pts, &sigma, &inf).value.abs() < 1e-12);

        let coarse = QuadrantGrid::covering(&sigma, 11);
        let fine = QuadrantGrid::covering(&sigma, 21);
        // The 21-point grid contains every 11-point node.
        let a = kolmogorov_quadrant_grid(&pts, &sigma, &coarse).value;
        let b = kolmogorov_quadrant_grid(&pts, &sigma, &fine).value;
        assert!(b >= a - 1e-15);
    }

    #[test]
    fn quadrant_cdf_matches_direct_sum() {
        let law = exact_law(&params(3, 1.5, 0.2, 12)).unwrap();
        let center = law.mean_proportions();
        let pts = law_points(&law, &center);
        let grid = QuadrantGrid { t1: vec![-0.5, 0.1, 0.7], t2: vec![-0.2, 0.4] };
        let sigma = [[1.0, 0.0], [0.0, 1.0]];
        let got = kolmogorov_quadrant_grid(&pts, &sigma, &grid);
        let mut best: f64 = 0.0;
        for &t1 in &grid.t1 {
            for &t2 in &grid.t2 {
                let f: f64 = pts.iter().filter(|p| p.0 <= t1 && p.1 <= t2).map(|p| p.2).sum();
                best = best.max((f - normal_cdf(t1) * normal_cdf(t2)).abs());
            }
        }
        assert!((got.value - best).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_examples() {
        let fit = rate_fit(&[(100.0, 0.1), (400.0, 0.05)]).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = [16.0, 64.0, 256.0, 1024.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 * n.powf(-0.25)))
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(rate_fit(&[(1.0, 1.0), (2.0, 0.0)]), Err(CwpError::NonPositive(_))));
        assert!(rate_fit(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn rate_fit_on_jittered_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0]
                .iter()
                .map(|&n: &f64| (n, 0.4 * n.powf(-0.5) * (1.0 + 0.1 * (rng.random::<f64>() - 0.5))))
                .collect();
            let fit = rate_fit(&pts).unwrap();
            assert!((fit.slope + 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn nearest_count_used_by_samples() {
        let c = CountVector::nearest(9, &[1.0 / 3.0; 3]);
        assert_eq!(c.as_slice(), &[3, 3, 3]);
    }
}

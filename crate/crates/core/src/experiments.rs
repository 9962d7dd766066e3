//! Experiment drivers shared by the command line and the acceptance suite.
//!
//! Every config rejects unknown keys and fills missing ones with defaults,
//! so a config echoed into a manifest reproduces the run.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::critical::{
    critical_row_exact, decompose, extremity_center, extremity_params, v_gaussian_check,
    CriticalDecomposition, CriticalRow, VCheck,
};
use crate::error::{CwpError, Result};
use crate::free_energy::{
    find_minimizers, matrix_rows, phase_report, regression_matrix, theoretical_sigma, Minimizer,
    PhasePoint, PhaseReport, PhaseTag,
};
use crate::hs::{
    compare_densities, convolved_exact_law, default_grid, extremity_grid, hs_density,
    log_quartic_fit, AxisSpec, DensityGap, GridSpec, QuarticFit,
};
use crate::model::{exact_law, ExactLaw, FluctuationVector, ModelParams};
use crate::sampler::{conditioned_sample, run_chains, sample_counts, ConditionedRegion, CountSample, SamplingPlan};
use crate::stein::{
    bound_terms, bound_terms_exact, kolmogorov_exact_marginal, kolmogorov_quadrant_grid, kolmogorov_sample_marginal,
    law_points, pair_moments_from_counts, rate_fit, regression_residual, BoundTerms,
    QuadrantGrid, RateFit, SteinSample,
};

fn default_q() -> usize {
    3
}

/// Inclusive evenly spaced range; `points = 0` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Span {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.min],
            k => (0..k)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (k - 1) as f64)
                .collect(),
        }
    }
}

/// Monte Carlo settings shared by sampling experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub seed: u64,
    pub chains: usize,
    /// Recorded samples per chain.
    pub samples_per_chain: usize,
    /// `None` picks the default for the phase point.
    pub burn_in: Option<u64>,
    pub thinning: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chains: 8,
            samples_per_chain: 1_250,
            burn_in: None,
            thinning: 1,
        }
    }
}

impl McConfig {
    pub fn total_samples(&self) -> usize {
        self.chains * self.samples_per_chain
    }

    /// Sampling plan for `params`, with burn-in defaulted by phase point.
    pub fn plan(&self, params: &ModelParams) -> SamplingPlan {
        let mut plan = SamplingPlan::with_defaults(params, self.samples_per_chain);
        if let Some(b) = self.burn_in {
            plan.burn_in = b;
        }
        plan.thinning = self.thinning.max(1);
        plan
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.samples_per_chain == 0 {
            return Err(CwpError::InvalidParameter(
                "chains and samples_per_chain must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pooled samples from `mc.chains` chains started at `x`, in chain order.
pub fn pooled_counts(params: &ModelParams, x: &[f64], mc: &McConfig) -> Result<Vec<CountSample>> {
    mc.validate()?;
    let plan = mc.plan(params);
    Ok(run_chains(mc.chains, |c| sample_counts(params, x, &plan, mc.seed, c))?.concat())
}

fn unique_minimizer(p: &PhasePoint) -> Result<Minimizer> {
    let c = find_minimizers(p);
    if c.tag != PhaseTag::UniqueMinimizer {
        return Err(CwpError::InvalidParameter(format!(
            "q={}, beta={}, h={} has {} global minimizers; a unique one is required",
            p.q,
            p.beta,
            p.h,
            c.minimizers.len()
        )));
    }
    Ok(c.minimizers.into_iter().next().expect("unique phase has one minimizer"))
}

fn fit_if_possible(points: &[(f64, f64)]) -> Result<Option<RateFit>> {
    if points.len() < 2 {
        Ok(None)
    } else {
        rate_fit(points).map(Some)
    }
}

// ---------------------------------------------------------------- phase

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGridConfig {
    #[serde(default = "default_q")]
    pub q: usize,
    pub beta: Span,
    pub h: Span,
}

impl Default for PhaseGridConfig {
    fn default() -> Self {
        Self {
            q: 3,
            beta: Span { min: 2.0, max: 3.2, points: 13 },
            h: Span { min: 0.0, max: 0.0, points: 1 },
        }
    }
}

pub fn phase_grid(config: &PhaseGridConfig) -> Result<Vec<PhaseReport>> {
    let mut out = Vec::new();
    for beta in config.beta.values() {
        for h in config.h.values() {
            out.push(phase_report(&PhasePoint::new(config.q, beta, h)?));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- CLT rate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltRateConfig {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub ns: Vec<usize>,
    /// Points per axis of the quadrant grid.
    pub quadrant_points: usize,
    /// Restrict to a ball around one minimizer and estimate by sampling.
    pub conditioned: bool,
    pub epsilon: f64,
    pub mc: McConfig,
}

impl Default for CltRateConfig {
    fn default() -> Self {
        Self {
            q: 3,
            beta: 2.0,
            h: 0.0,
            ns: vec![50, 100, 200, 400, 800],
            quadrant_points: 41,
            conditioned: false,
            epsilon: 0.25,
            mc: McConfig {
                chains: 8,
                samples_per_chain: 25_000,
                ..McConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltRow {
    pub n: usize,
    #[serde(rename = "dK_marginal")]
    pub dk_marginal: f64,
    /// Grid maximum; a lower bound on the quadrant distance.
    #[serde(rename = "dK_quadrant")]
    pub dk_quadrant: f64,
    /// Number of samples in Monte Carlo mode.
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltRateReport {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub conditioned: bool,
    pub center: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub rows: Vec<CltRow>,
    pub marginal_fit: Option<RateFit>,
    pub quadrant_fit: Option<RateFit>,
}

pub fn clt_rate(config: &CltRateConfig) -> Result<CltRateReport> {
    let p = PhasePoint::new(config.q, config.beta, config.h)?;
    let minimizer = if config.conditioned {
        find_minimizers(&p).minimizers.into_iter().next().expect("at least one minimizer")
    } else {
        unique_minimizer(&p)?
    };
    let sigma = theoretical_sigma(&p, &minimizer)?;
    let sigma2 = [[sigma[(0, 0)], sigma[(0, 1)]], [sigma[(1, 0)], sigma[(1, 1)]]];
    let grid = QuadrantGrid::covering(&sigma2, config.quadrant_points);
    let center = minimizer.x.clone();
    let mut rows = Vec::with_capacity(config.ns.len());
    for &n in &config.ns {
        let params = ModelParams::new(config.q, config.beta, config.h, n)?;
        let row = if config.conditioned {
            let region = ConditionedRegion::new(center.clone(), config.epsilon, &params)?;
            config.mc.validate()?;
            let plan = config.mc.plan(&params);
            let samples = run_chains(config.mc.chains, |c| {
                conditioned_sample(&params, &region, &plan, config.mc.seed, c)
            })?
            .concat();
            let ws: Vec<FluctuationVector> =
                samples.iter().map(|s| s.counts.fluctuation(&center)).collect();
            let w1: Vec<f64> = ws.iter().map(|w| w.0[0]).collect();
            let m = ws.len() as f64;
            let points: Vec<(f64, f64, f64)> = ws.iter().map(|w| (w.0[0], w.0[1], 1.0 / m)).collect();
            CltRow {
                n,
                dk_marginal: kolmogorov_sample_marginal(&w1, sigma[(0, 0)]),
                dk_quadrant: kolmogorov_quadrant_grid(&points, &sigma2, &grid).value,
                samples: Some(ws.len()),
            }
        } else {
            let law = exact_law(&params)?;
            CltRow {
                n,
                dk_marginal: kolmogorov_exact_marginal(&law, &center, sigma[(0, 0)]),
                dk_quadrant: kolmogorov_quadrant_grid(&law_points(&law, &center), &sigma2, &grid).value,
                samples: None,
            }
        };
        rows.push(row);
    }
    let marginal: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.dk_marginal)).collect();
    let quadrant: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.dk_quadrant)).collect();
    Ok(CltRateReport {
        q: config.q,
        beta: config.beta,
        h: config.h,
        conditioned: config.conditioned,
        center,
        sigma: matrix_rows(&sigma),
        marginal_fit: fit_if_possible(&marginal)?,
        quadrant_fit: fit_if_possible(&quadrant)?,
        rows,
    })
}

// ---------------------------------------------------------------- covariance

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub exact: Vec<Vec<f64>>,
    pub theoretical: Vec<Vec<f64>>,
    pub max_gap_exact_vs_theory: f64,
    pub mc: Vec<Vec<f64>>,
    /// Standard errors from between-chain variation.
    pub mc_se: Vec<Vec<f64>>,
    /// Largest `|mc − exact| / se` over entries.
    pub max_z: f64,
}

/// Exact and sampled `E[W Wᵗ]` around the unique minimizer.
pub fn covariance_check(params: &ModelParams, mc: &McConfig) -> Result<CovarianceReport> {
    let p = params.phase_point();
    let minimizer = unique_minimizer(&p)?;
    let x = &minimizer.x;
    let q = params.q;
    let exact = exact_law(params)?.second_moment_matrix(x);
    let theory = theoretical_sigma(&p, &minimizer)?;
    let plan = {
        mc.validate()?;
        mc.plan(params)
    };
    let per_chain: Vec<DMatrix<f64>> = run_chains(mc.chains, |c| {
        let samples = sample_counts(params, x, &plan, mc.seed, c)?;
        let mut acc = DMatrix::<f64>::zeros(q, q);
        for s in &samples {
            let w = s.counts.fluctuation(x);
            for i in 0..q {
                for j in 0..q {
                    acc[(i, j)] += w.0[i] * w.0[j];
                }
            }
        }
        Ok(acc / samples.len() as f64)
    })?;
    let k = per_chain.len() as f64;
    let mean = per_chain.iter().fold(DMatrix::zeros(q, q), |a, b| a + b) / k;
    let se = DMatrix::from_fn(q, q, |i, j| {
        let var = per_chain.iter().map(|m| (m[(i, j)] - mean[(i, j)]).powi(2)).sum::<f64>()
            / (k - 1.0).max(1.0);
        (var / k).sqrt()
    });
    let max_z = (0..q * q)
        .map(|t| {
            let (i, j) = (t / q, t % q);
            (mean[(i, j)] - exact[(i, j)]).abs() / se[(i, j)]
        })
        .fold(0.0, f64::max);
    Ok(CovarianceReport {
        n: params.n,
        max_gap_exact_vs_theory: (&exact - &theory).abs().max(),
        exact: matrix_rows(&exact),
        theoretical: matrix_rows(&theory),
        mc: matrix_rows(&mean),
        mc_se: matrix_rows(&se),
        max_z,
    })
}

// ---------------------------------------------------------------- Stein bounds

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteinBoundsConfig {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub ns: Vec<usize>,
    pub mc: McConfig,
    /// Sizes for the exact residual scaling; empty skips it.
    pub residual_ns: Vec<usize>,
    /// Also evaluate the terms under the exact law at every `n`.
    pub exact: bool,
}

impl Default for SteinBoundsConfig {
    fn default() -> Self {
        Self {
            q: 3,
            beta: 2.0,
            h: 0.0,
            ns: vec![64, 128, 256],
            mc: McConfig {
                chains: 8,
                samples_per_chain: 1_250,
                burn_in: None,
                thinning: 10,
                seed: 0,
            },
            residual_ns: vec![32, 64, 128, 256, 512],
            exact: true,
        }
    }
}

/// `term(n_to) / term(n_from)` for each bound term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRatios {
    pub n_from: usize,
    pub n_to: usize,
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub n: usize,
    /// `max_i (E R_i²)^{1/2}` under the exact law.
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteinBoundsReport {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub terms: Vec<BoundTerms>,
    pub ratios: Vec<BoundRatios>,
    /// Terms under the exact law, for sizes within the enumeration budget.
    pub exact_terms: Vec<BoundTerms>,
    pub exact_ratios: Vec<BoundRatios>,
    pub residual: Vec<ResidualRow>,
    pub residual_fit: Option<RateFit>,
}

/// `max_i (E R_i²)^{1/2}` under the exact law at the unique minimizer.
pub fn exact_rms_residual(params: &ModelParams) -> Result<f64> {
    let p = params.phase_point();
    let minimizer = unique_minimizer(&p)?;
    let reg = regression_matrix(&p, &minimizer, params.n)?;
    let law = exact_law(params)?;
    let mut second = vec![0.0; params.q];
    for (atom, prob) in law.iter() {
        let moments = pair_moments_from_counts(params, atom);
        let w = FluctuationVector::from_counts(atom, &minimizer.x);
        for (s, r) in second.iter_mut().zip(regression_residual(&moments, &w, &reg)) {
            *s += prob * r * r;
        }
    }
    Ok(second.iter().cloned().fold(0.0, f64::max).sqrt())
}

pub fn stein_bounds(config: &SteinBoundsConfig) -> Result<SteinBoundsReport> {
    let p = PhasePoint::new(config.q, config.beta, config.h)?;
    let minimizer = unique_minimizer(&p)?;
    let mut terms = Vec::with_capacity(config.ns.len());
    for &n in &config.ns {
        let params = ModelParams::new(config.q, config.beta, config.h, n)?;
        let reg = regression_matrix(&p, &minimizer, n)?;
        let samples: Vec<SteinSample> = pooled_counts(&params, &minimizer.x, &config.mc)?
            .iter()
            .map(|s| SteinSample::new(&params, s.counts.as_slice(), &minimizer.x))
            .collect();
        terms.push(bound_terms(&samples, &reg)?);
    }
    let mut exact_terms = Vec::new();
    if config.exact {
        for &n in &config.ns {
            let params = ModelParams::new(config.q, config.beta, config.h, n)?;
            let reg = regression_matrix(&p, &minimizer, n)?;
            exact_terms.push(bound_terms_exact(&exact_law(&params)?, &minimizer.x, &reg));
        }
    }
    let residual = config
        .residual_ns
        .iter()
        .map(|&n| {
            let params = ModelParams::new(config.q, config.beta, config.h, n)?;
            Ok(ResidualRow {
                n,
                rms_residual: exact_rms_residual(&params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = residual.iter().map(|r| (r.n as f64, r.rms_residual)).collect();
    Ok(SteinBoundsReport {
        q: config.q,
        beta: config.beta,
        h: config.h,
        ratios: ratios_of(&terms),
        exact_ratios: ratios_of(&exact_terms),
        terms,
        exact_terms,
        residual_fit: fit_if_possible(&points)?,
        residual,
    })
}

fn ratios_of(terms: &[BoundTerms]) -> Vec<BoundRatios> {
    terms
        .windows(2)
        .map(|w| BoundRatios {
            n_from: w[0].n,
            n_to: w[1].n,
            a: w[1].a / w[0].a,
            b: w[1].b / w[0].b,
            c: w[1].c / w[0].c,
            a1: w[1].a1 / w[0].a1,
            a2: w[1].a2 / w[0].a2,
            a3: w[1].a3 / w[0].a3,
        })
        .collect()
}

// ---------------------------------------------------------------- critical

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalRateConfig {
    pub q: usize,
    pub ns: Vec<usize>,
    /// Size for the Monte Carlo check of `V`; `None` skips it.
    pub v_n: Option<usize>,
    pub mc: McConfig,
}

impl Default for CriticalRateConfig {
    fn default() -> Self {
        Self {
            q: 3,
            ns: vec![256, 1024, 4096],
            v_n: Some(4096),
            mc: McConfig {
                chains: 8,
                samples_per_chain: 12_500,
                burn_in: None,
                thinning: 1,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRateReport {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub rows: Vec<CriticalRow>,
    #[serde(rename = "fit_dK_T_vs_fqT")]
    pub fit_fqt: Option<RateFit>,
    #[serde(rename = "fit_dK_T_vs_gq")]
    pub fit_gq: Option<RateFit>,
    /// `|1 − normalized fourth moment|` strictly decreases along `ns`.
    pub fourth_moment_approaches_one: bool,
    pub v_n: Option<usize>,
    pub v_check: Option<VCheck>,
}

/// Sampled decompositions at the extremity, each with weight 1.
pub fn extremity_decompositions(q: usize, n: usize, mc: &McConfig) -> Result<Vec<(CriticalDecomposition, f64)>> {
    let params = extremity_params(q, n)?;
    Ok(pooled_counts(&params, &extremity_center(q), mc)?
        .iter()
        .map(|s| (decompose(&s.counts), 1.0))
        .collect())
}

pub fn critical_rate(config: &CriticalRateConfig) -> Result<CriticalRateReport> {
    let p = PhasePoint::extremity(config.q)?;
    let rows = config
        .ns
        .iter()
        .map(|&n| critical_row_exact(config.q, n))
        .collect::<Result<Vec<_>>>()?;
    let fqt: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.dk_t_vs_fqt)).collect();
    let gq: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.dk_t_vs_gq)).collect();
    let fourth_moment_approaches_one = rows.windows(2).all(|w| {
        (1.0 - w[1].normalized_fourth_moment).abs() < (1.0 - w[0].normalized_fourth_moment).abs()
    });
    let v_check = match config.v_n {
        Some(n) => Some(v_gaussian_check(
            config.q,
            &extremity_decompositions(config.q, n, &config.mc)?,
        )?),
        None => None,
    };
    Ok(CriticalRateReport {
        q: config.q,
        beta: p.beta,
        h: p.h,
        fit_fqt: fit_if_possible(&fqt)?,
        fit_gq: fit_if_possible(&gq)?,
        rows,
        fourth_moment_approaches_one,
        v_n: config.v_n,
        v_check,
    })
}

// ---------------------------------------------------------------- HS check

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsMode {
    /// Grid density against the smoothed exact law.
    Identity,
    /// First-coordinate marginal at the extremity against a quartic shape.
    Extremity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HsCheckConfig {
    pub mode: HsMode,
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
    pub gamma: f64,
    pub points: usize,
    /// Also compare on the grid with halved spacing.
    pub refine: bool,
    /// Explicit grid; `None` uses the default for the mode.
    pub grid: Option<Vec<AxisSpec>>,
}

impl Default for HsCheckConfig {
    fn default() -> Self {
        Self {
            mode: HsMode::Identity,
            q: 3,
            beta: 2.0,
            h: 0.0,
            n: 20,
            gamma: 0.5,
            points: 61,
            refine: false,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsCheckReport {
    pub mode: HsMode,
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
    pub gamma: f64,
    pub center: Vec<f64>,
    pub grid: GridSpec,
    pub gap: Option<DensityGap>,
    pub refined_gap: Option<DensityGap>,
    /// Riemann mass of the smoothed exact law.
    pub mixture_mass: Option<f64>,
    pub quartic_fit: Option<QuarticFit>,
}

/// Grid density and the smoothed exact law on `spec`.
pub fn hs_identity_gap(law: &ExactLaw, m: &[f64], gamma: f64, spec: &GridSpec) -> Result<(DensityGap, f64)> {
    let hs = hs_density(law.params(), m, gamma, spec)?;
    let mix = convolved_exact_law(law, m, gamma, spec)?;
    Ok((compare_densities(&hs, &mix)?, mix.total_mass()))
}

pub fn hs_check(config: &HsCheckConfig) -> Result<HsCheckReport> {
    let report = match config.mode {
        HsMode::Identity => {
            if config.q != 3 {
                return Err(CwpError::InvalidParameter(
                    "full-dimensional comparison supports q = 3 only".into(),
                ));
            }
            let params = ModelParams::new(config.q, config.beta, config.h, config.n)?;
            let m = find_minimizers(&params.phase_point()).minimizers[0].x.clone();
            let mut spec = match &config.grid {
                Some(axes) => GridSpec { axes: axes.clone() },
                None => default_grid(&params, &m, config.gamma)?,
            };
            for a in &mut spec.axes {
                a.points = config.points;
            }
            let law = exact_law(&params)?;
            let (gap, mass) = hs_identity_gap(&law, &m, config.gamma, &spec)?;
            let refined_gap = if config.refine {
                Some(hs_identity_gap(&law, &m, config.gamma, &spec.refined())?.0)
            } else {
                None
            };
            HsCheckReport {
                mode: config.mode,
                q: config.q,
                beta: config.beta,
                h: config.h,
                n: config.n,
                gamma: config.gamma,
                center: m,
                grid: spec,
                gap: Some(gap),
                refined_gap,
                mixture_mass: Some(mass),
                quartic_fit: None,
            }
        }
        HsMode::Extremity => {
            let params = extremity_params(config.q, config.n)?;
            let m = extremity_center(config.q);
            let spec = match &config.grid {
                Some(axes) => GridSpec { axes: axes.clone() },
                None => extremity_grid(config.q, config.n, config.points),
            };
            let grid = hs_density(&params, &m, 0.25, &spec)?;
            let fit = log_quartic_fit(&spec.axes[0].coordinates(), &grid.marginal(0), 1e-6)?;
            HsCheckReport {
                mode: config.mode,
                q: config.q,
                beta: params.beta,
                h: params.h,
                n: config.n,
                gamma: 0.25,
                center: m,
                grid: spec,
                gap: None,
                refined_gap: None,
                mixture_mass: None,
                quartic_fit: Some(fit),
            }
        }
    };
    Ok(report)
}

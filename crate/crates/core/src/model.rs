//! Finite-n model: parameters, spin configurations, count vectors and the
//! exact law of the count vector obtained by enumerating compositions.
//!
//! Colors are indexed from 0 internally; color 0 is the one favoured by the
//! external field. File formats use 1-based column names (`nu_1`, `W_1`).
//!
//! The unnormalized weight of a count vector `ν` is
//! `multinomial(n; ν) · exp((β/2n)|ν|² + h ν₁)`. With this normalization the
//! single-site conditional is exactly `∝ exp(β m_{i,t} + h δ_{i1})` and the
//! Gaussian-smoothed law has density `∝ exp(-n G(·))`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{CwpError, Result};
use crate::free_energy::PhasePoint;
use crate::numerics::{ln_factorial, ln_factorial_table, log_sum_exp};

/// Largest number of compositions any enumeration is allowed to visit.
pub const ENUMERATION_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
}

impl ModelParams {
    pub fn new(q: usize, beta: f64, h: f64, n: usize) -> Result<Self> {
        PhasePoint::new(q, beta, h)?;
        if n < 1 {
            return Err(CwpError::InvalidParameter("n must be at least 1".into()));
        }
        if n > u32::MAX as usize {
            return Err(CwpError::InvalidParameter(format!("n = {n} is too large")));
        }
        Ok(Self { q, beta, h, n })
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint {
            q: self.q,
            beta: self.beta,
            h: self.h,
        }
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.q, self.beta, self.h, n)
    }
}

/// A configuration `σ ∈ {0..q}^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfiguration {
    q: usize,
    spins: Vec<u16>,
}

impl SpinConfiguration {
    pub fn new(q: usize, spins: Vec<u16>) -> Result<Self> {
        if spins.is_empty() {
            return Err(CwpError::InvalidParameter("empty configuration".into()));
        }
        if let Some(&bad) = spins.iter().find(|&&s| s as usize >= q) {
            return Err(CwpError::InvalidParameter(format!(
                "spin value {bad} outside 0..{q}"
            )));
        }
        Ok(Self { q, spins })
    }

    /// A configuration holding exactly `counts` spins of each color, sorted
    /// by color.
    pub fn from_counts(counts: &CountVector) -> Self {
        let mut spins = Vec::with_capacity(counts.n());
        for (color, &k) in counts.as_slice().iter().enumerate() {
            spins.extend(std::iter::repeat_n(color as u16, k as usize));
        }
        Self {
            q: counts.q(),
            spins,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[u16] {
        &self.spins
    }

    pub fn spin(&self, site: usize) -> usize {
        self.spins[site] as usize
    }

    pub(crate) fn set_spin(&mut self, site: usize, color: usize) {
        self.spins[site] = color as u16;
    }

    pub fn counts(&self) -> CountVector {
        let mut counts = vec![0u32; self.q];
        for &s in &self.spins {
            counts[s as usize] += 1;
        }
        CountVector { counts }
    }

    /// `m_i(σ)`: fraction of spins with color `i`.
    pub fn fraction(&self, color: usize) -> f64 {
        self.spins.iter().filter(|&&s| s as usize == color).count() as f64 / self.n() as f64
    }

    /// `m_{i,t}(σ)`: fraction of spins other than `site` with color `i`,
    /// still divided by `n`.
    pub fn fraction_without(&self, color: usize, site: usize) -> f64 {
        let own = usize::from(self.spin(site) == color);
        let count = self.spins.iter().filter(|&&s| s as usize == color).count() - own;
        count as f64 / self.n() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountVector {
    counts: Vec<u32>,
}

impl CountVector {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 3 {
            return Err(CwpError::InvalidParameter(format!(
                "count vector needs at least 3 colors, got {}",
                counts.len()
            )));
        }
        Ok(Self { counts })
    }

    /// Count vector of total `n` closest to `n·x` (largest-remainder rounding;
    /// ties go to the lower color index).
    pub fn nearest(n: usize, x: &[f64]) -> Self {
        let target: Vec<f64> = x.iter().map(|v| v * n as f64).collect();
        let mut counts: Vec<u32> = target.iter().map(|t| t.floor().max(0.0) as u32).collect();
        let assigned: u64 = counts.iter().map(|&c| c as u64).sum();
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = target[a] - target[a].floor();
            let rb = target[b] - target[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut missing = n as i64 - assigned as i64;
        let mut i = 0;
        while missing > 0 {
            counts[order[i % order.len()]] += 1;
            missing -= 1;
            i += 1;
        }
        while missing < 0 {
            let j = order[order.len() - 1 - (i % order.len())];
            if counts[j] > 0 {
                counts[j] -= 1;
                missing += 1;
            }
            i += 1;
        }
        Self { counts }
    }

    pub fn q(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, color: usize) -> u32 {
        self.counts[color]
    }

    pub(crate) fn increment(&mut self, color: usize) {
        self.counts[color] += 1;
    }

    pub(crate) fn decrement(&mut self, color: usize) {
        self.counts[color] -= 1;
    }

    /// `L_n = N / n`.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn fluctuation(&self, center: &[f64]) -> FluctuationVector {
        FluctuationVector::from_counts(&self.counts, center)
    }
}

/// `W = √n (L_n − x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationVector(pub Vec<f64>);

impl FluctuationVector {
    pub fn from_counts(counts: &[u32], center: &[f64]) -> Self {
        let n: f64 = counts.iter().map(|&c| c as f64).sum();
        let sqrt_n = n.sqrt();
        Self(
            counts
                .iter()
                .zip(center)
                .map(|(&c, x)| (c as f64 - n * x) / sqrt_n)
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_counts(nu: &CountVector, params: &ModelParams) -> Result<()> {
    if nu.q() != params.q {
        return Err(CwpError::InvalidParameter(format!(
            "count vector has {} colors, model has {}",
            nu.q(),
            params.q
        )));
    }
    if nu.n() != params.n {
        return Err(CwpError::CountMismatch {
            expected: params.n,
            got: nu.n(),
        });
    }
    Ok(())
}

/// Unnormalized log-weight of the count vector `nu`.
pub fn log_weight(nu: &CountVector, params: &ModelParams) -> Result<f64> {
    check_counts(nu, params)?;
    let n = params.n as u64;
    let mut value = ln_factorial(n);
    let mut square = 0.0;
    for &c in nu.as_slice() {
        value -= ln_factorial(c as u64);
        square += (c as f64) * (c as f64);
    }
    Ok(value + params.beta / (2.0 * params.n as f64) * square + params.h * nu.get(0) as f64)
}

/// Number of compositions of `n` into `q` non-negative parts, as a float.
pub fn composition_count(n: usize, q: usize) -> f64 {
    let k = q - 1;
    let mut c = 1.0;
    for i in 1..=k {
        c *= (n + i) as f64 / i as f64;
    }
    c.round()
}

/// Visits every composition of `n` whose last part equals `last`, in
/// colexicographic order with the second part varying fastest. The first
/// part is `n` minus the rest.
fn visit_compositions_with_last<F: FnMut(&[u32])>(n: u32, q: usize, last: u32, f: &mut F) {
    let remaining = n - last;
    let mut buf = vec![0u32; q];
    buf[q - 1] = last;
    let mut middle_sum = 0u32;
    loop {
        buf[0] = remaining - middle_sum;
        f(&buf);
        let mut j = 1;
        loop {
            if j == q - 1 {
                return;
            }
            if middle_sum < remaining {
                buf[j] += 1;
                middle_sum += 1;
                break;
            }
            middle_sum -= buf[j];
            buf[j] = 0;
            j += 1;
        }
    }
}

/// Visits all compositions of `n` into `q` parts in colexicographic order:
/// the last part is outermost, the second part varies fastest.
pub fn visit_compositions<F: FnMut(&[u32])>(n: usize, q: usize, mut f: F) {
    for last in 0..=n as u32 {
        visit_compositions_with_last(n as u32, q, last, &mut f);
    }
}

struct WeightKernel {
    ln_fact: Vec<f64>,
    coupling: f64,
    h: f64,
    ln_n_fact: f64,
}

impl WeightKernel {
    fn new(params: &ModelParams) -> Self {
        let ln_fact = ln_factorial_table(params.n);
        let ln_n_fact = ln_fact[params.n];
        Self {
            ln_fact,
            coupling: params.beta / (2.0 * params.n as f64),
            h: params.h,
            ln_n_fact,
        }
    }

    #[inline]
    fn eval(&self, nu: &[u32]) -> f64 {
        let mut value = self.ln_n_fact;
        let mut square = 0.0;
        for &c in nu {
            value -= self.ln_fact[c as usize];
            square += (c as f64) * (c as f64);
        }
        value + self.coupling * square + self.h * nu[0] as f64
    }
}

fn check_budget(params: &ModelParams) -> Result<()> {
    let required = composition_count(params.n, params.q);
    if required > ENUMERATION_BUDGET {
        return Err(CwpError::CapacityExceeded {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// Exact law of the count vector.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    params: ModelParams,
    counts: Vec<u32>,
    log_probs: Vec<f64>,
}

pub fn exact_law(params: &ModelParams) -> Result<ExactLaw> {
    check_budget(params)?;
    let kernel = WeightKernel::new(params);
    let (n, q) = (params.n as u32, params.q);
    let blocks: Vec<(Vec<u32>, Vec<f64>)> = (0..=n)
        .into_par_iter()
        .map(|last| {
            let mut counts = Vec::new();
            let mut weights = Vec::new();
            visit_compositions_with_last(n, q, last, &mut |nu| {
                counts.extend_from_slice(nu);
                weights.push(kernel.eval(nu));
            });
            (counts, weights)
        })
        .collect();
    let mut counts = Vec::new();
    let mut log_probs = Vec::new();
    for (c, w) in blocks {
        counts.extend(c);
        log_probs.extend(w);
    }
    let log_z = log_sum_exp(&log_probs);
    for lp in &mut log_probs {
        *lp -= log_z;
    }
    Ok(ExactLaw {
        params: *params,
        counts,
        log_probs,
    })
}

/// Probability mass function of `N_coord` over `0..=n`, accumulated while
/// enumerating so the full law is never stored.
pub fn count_marginal(params: &ModelParams, coord: usize) -> Result<Vec<f64>> {
    check_budget(params)?;
    if coord >= params.q {
        return Err(CwpError::InvalidParameter(format!("coordinate {coord} out of range")));
    }
    let kernel = WeightKernel::new(params);
    let (n, q) = (params.n as u32, params.q);
    // Fixed block boundaries keep the reduction independent of thread count.
    const BLOCK: u32 = 64;
    let block_starts: Vec<u32> = (0..=n).step_by(BLOCK as usize).collect();
    let max_weight = block_starts
        .par_iter()
        .map(|&start| {
            let mut best = f64::NEG_INFINITY;
            for last in start..=(start + BLOCK - 1).min(n) {
                visit_compositions_with_last(n, q, last, &mut |nu| {
                    best = best.max(kernel.eval(nu));
                });
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let partials: Vec<Vec<f64>> = block_starts
        .par_iter()
        .map(|&start| {
            let mut acc = vec![0.0; n as usize + 1];
            for last in start..=(start + BLOCK - 1).min(n) {
                visit_compositions_with_last(n, q, last, &mut |nu| {
                    acc[nu[coord] as usize] += (kernel.eval(nu) - max_weight).exp();
                });
            }
            acc
        })
        .collect();
    let mut pmf = vec![0.0; n as usize + 1];
    for part in partials {
        for (p, v) in pmf.iter_mut().zip(part) {
            *p += v;
        }
    }
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    Ok(pmf)
}

impl ExactLaw {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn atom(&self, index: usize) -> &[u32] {
        let q = self.params.q;
        &self.counts[index * q..(index + 1) * q]
    }

    pub fn log_prob(&self, index: usize) -> f64 {
        self.log_probs[index]
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// `(atom, probability)` pairs in enumeration order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.counts
            .chunks_exact(self.params.q)
            .zip(&self.log_probs)
            .map(|(a, lp)| (a, lp.exp()))
    }

    pub fn total_mass(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }

    pub fn probability_of(&self, nu: &[u32]) -> f64 {
        self.iter()
            .find(|(a, _)| *a == nu)
            .map(|(_, p)| p)
            .unwrap_or(0.0)
    }

    /// Step CDF of `(N_coord − n·center)/scale`.
    pub fn marginal_cdf(&self, coord: usize, center: f64, scale: f64) -> StepCdf {
        let n = self.params.n;
        let mut pmf = vec![0.0; n + 1];
        for (atom, p) in self.iter() {
            pmf[atom[coord] as usize] += p;
        }
        StepCdf::from_lattice_pmf(&pmf, n as f64 * center, scale)
    }

    /// `E[Π_i ((N_i − n·center_i)/scale)^{k_i}]`.
    pub fn moment(&self, exponents: &[u32], center: &[f64], scale: f64) -> f64 {
        let n = self.params.n as f64;
        self.iter()
            .map(|(atom, p)| {
                let mut term = p;
                for ((&c, &k), x) in atom.iter().zip(exponents).zip(center) {
                    if k > 0 {
                        term *= ((c as f64 - n * x) / scale).powi(k as i32);
                    }
                }
                term
            })
            .sum()
    }

    pub fn mean_proportions(&self) -> Vec<f64> {
        let n = self.params.n as f64;
        let mut mean = vec![0.0; self.params.q];
        for (atom, p) in self.iter() {
            for (m, &c) in mean.iter_mut().zip(atom) {
                *m += p * c as f64 / n;
            }
        }
        mean
    }

    /// `E[W Wᵗ]` for `W = √n (L_n − center)`.
    pub fn second_moment_matrix(&self, center: &[f64]) -> DMatrix<f64> {
        let q = self.params.q;
        let mut out = DMatrix::zeros(q, q);
        for (atom, p) in self.iter() {
            let w = FluctuationVector::from_counts(atom, center);
            for i in 0..q {
                for j in 0..q {
                    out[(i, j)] += p * w.0[i] * w.0[j];
                }
            }
        }
        out
    }

    /// Law conditioned on `keep`, renormalized.
    pub fn restrict<F: Fn(&[u32]) -> bool>(&self, keep: F) -> Result<ExactLaw> {
        let q = self.params.q;
        let mut counts = Vec::new();
        let mut log_probs = Vec::new();
        for (i, lp) in self.log_probs.iter().enumerate() {
            let atom = self.atom(i);
            if keep(atom) {
                counts.extend_from_slice(atom);
                log_probs.push(*lp);
            }
        }
        if log_probs.is_empty() {
            return Err(CwpError::EmptyRegion("restriction removes every atom".into()));
        }
        let log_z = log_sum_exp(&log_probs);
        for lp in &mut log_probs {
            *lp -= log_z;
        }
        debug_assert_eq!(counts.len(), q * log_probs.len());
        Ok(ExactLaw {
            params: self.params,
            counts,
            log_probs,
        })
    }

    /// Cumulative probabilities in enumeration order, for inverse-CDF draws.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.log_probs
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect()
    }

    /// Independent draws of atom indices.
    pub fn draw<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        let cumulative = self.cumulative();
        let total = *cumulative.last().unwrap_or(&1.0);
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                cumulative
                    .partition_point(|&c| c <= u)
                    .min(cumulative.len() - 1)
            })
            .collect()
    }

    /// CSV with columns `nu_1..nu_q,log_prob` in enumeration order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.params.q).map(|i| format!("nu_{i}")).collect();
        header.push("log_prob".into());
        out.write_record(&header)?;
        for (i, lp) in self.log_probs.iter().enumerate() {
            let mut row: Vec<String> = self.atom(i).iter().map(|c| c.to_string()).collect();
            row.push(format!("{lp:.17e}"));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Right-continuous step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    locations: Vec<f64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepCdf {
    /// Builds the CDF from `(location, mass)` pairs; equal locations merge.
    pub fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locations: Vec<f64> = Vec::with_capacity(points.len());
        let mut masses: Vec<f64> = Vec::with_capacity(points.len());
        for (x, m) in points {
            if m <= 0.0 {
                continue;
            }
            if locations.last() == Some(&x) {
                *masses.last_mut().unwrap() += m;
            } else {
                locations.push(x);
                masses.push(m);
            }
        }
        let mut acc = 0.0;
        let cumulative = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Self {
            locations,
            masses,
            cumulative,
        }
    }

    /// CDF of `(k − shift)/scale` where `k` has pmf `pmf[k]`.
    pub fn from_lattice_pmf(pmf: &[f64], shift: f64, scale: f64) -> Self {
        Self::new(
            pmf.iter()
                .enumerate()
                .map(|(k, &m)| ((k as f64 - shift) / scale, m))
                .collect(),
        )
    }

    /// Empirical CDF of a sample.
    pub fn empirical(samples: &[f64]) -> Self {
        let w = 1.0 / samples.len() as f64;
        Self::new(samples.iter().map(|&x| (x, w)).collect())
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.locations.partition_point(|&x| x <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `sup_t |F(t) − target(t)|` for a continuous `target`, attained at a
    /// jump (either side).
    pub fn kolmogorov_distance<F: Fn(f64) -> f64>(&self, target: F) -> f64 {
        let mut sup: f64 = 0.0;
        let mut before = 0.0;
        for (x, after) in self.locations.iter().zip(&self.cumulative) {
            let g = target(*x);
            sup = sup.max((after - g).abs()).max((before - g).abs());
            before = *after;
        }
        sup
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.locations
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| m * x.powi(k))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(q: usize, beta: f64, h: f64, n: usize) -> ModelParams {
        ModelParams::new(q, beta, h, n).unwrap()
    }

    fn cv(c: &[u32]) -> CountVector {
        CountVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ModelParams::new(2, 1.0, 0.0, 5).is_err());
        assert!(ModelParams::new(3, -1.0, 0.0, 5).is_err());
        assert!(ModelParams::new(3, 1.0, -0.1, 5).is_err());
        assert!(ModelParams::new(3, 1.0, 0.0, 0).is_err());
        assert!(ModelParams::new(3, f64::NAN, 0.0, 1).is_err());
    }

    #[test]
    fn log_weight_examples() {
        let w = log_weight(&cv(&[1, 0, 0]), &params(3, 2.0, 0.5, 1)).unwrap();
        assert!((w - 1.5).abs() < 1e-14);
        let p = params(3, 2.0, 0.0, 1);
        for nu in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            assert!((log_weight(&cv(&nu), &p).unwrap() - 1.0).abs() < 1e-14);
        }
        let w = log_weight(&cv(&[1, 1, 0]), &params(3, 2.0, 0.0, 2)).unwrap();
        assert!((w - (2f64.ln() + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn log_weight_rejects_wrong_total() {
        let err = log_weight(&cv(&[1, 1, 0]), &params(3, 2.0, 0.0, 3)).unwrap_err();
        assert!(matches!(err, CwpError::CountMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn exact_law_small_cases() {
        let law = exact_law(&params(3, 2.0, 0.0, 1)).unwrap();
        assert_eq!(law.len(), 3);
        for (_, p) in law.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        let law = exact_law(&params(3, 2.0, 1.0, 1)).unwrap();
        let e = 1f64.exp();
        assert!((law.probability_of(&[1, 0, 0]) - e / (e + 2.0)).abs() < 1e-14);

        let law = exact_law(&params(3, 2.0, 0.0, 2)).unwrap();
        let expected = e * e / (3.0 * e * e + 6.0 * e);
        assert!((law.probability_of(&[2, 0, 0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn enumeration_order_is_colexicographic() {
        let mut seen = Vec::new();
        visit_compositions(2, 3, |nu| seen.push(nu.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![2, 0, 0],
                vec![1, 1, 0],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![0, 1, 1],
                vec![0, 0, 2]
            ]
        );
        let mut total = 0usize;
        visit_compositions(7, 5, |nu| {
            assert_eq!(nu.iter().sum::<u32>(), 7);
            total += 1;
        });
        assert_eq!(total as f64, composition_count(7, 5));
    }

    #[test]
    fn budget_guard() {
        let err = exact_law(&params(5, 1.0, 0.0, 400)).unwrap_err();
        assert!(matches!(err, CwpError::CapacityExceeded { .. }));
    }

    #[test]
    fn marginal_cdf_examples() {
        let law = exact_law(&params(3, 2.0, 0.0, 1)).unwrap();
        let cdf = law.marginal_cdf(0, 1.0 / 3.0, 1.0);
        assert_eq!(cdf.locations().len(), 2);
        assert!((cdf.locations()[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((cdf.masses()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((cdf.locations()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((cdf.masses()[1] - 1.0 / 3.0).abs() < 1e-14);

        let raw = law.marginal_cdf(0, 0.0, 1.0);
        assert_eq!(raw.locations(), &[0.0, 1.0]);
        assert!((raw.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn beta_zero_marginal_is_binomial() {
        let (n, h) = (12usize, 0.7);
        let law = exact_law(&params(4, 0.0, h, n)).unwrap();
        let p = h.exp() / (h.exp() + 3.0);
        let cdf = law.marginal_cdf(0, 0.0, 1.0);
        for (k, mass) in cdf.masses().iter().enumerate() {
            // Independent binomial oracle by direct product.
            let mut binom = 1.0;
            for j in 0..k {
                binom *= (n - j) as f64 / (j + 1) as f64;
            }
            let expected = binom * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            assert!((mass - expected).abs() < 1e-12, "k={k}");
        }
        let streamed = count_marginal(&params(4, 0.0, h, n), 0).unwrap();
        for (a, b) in streamed.iter().zip(cdf.masses()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn moments_examples() {
        let law = exact_law(&params(3, 2.0, 0.0, 1)).unwrap();
        let third = [1.0 / 3.0; 3];
        assert!((law.moment(&[2, 0, 0], &third, 1.0) - 2.0 / 9.0).abs() < 1e-14);

        let law = exact_law(&params(3, 1.3, 0.2, 9)).unwrap();
        let mean = law.mean_proportions();
        let sqrt_n = 3.0;
        for i in 0..3 {
            let mut k = [0, 0, 0];
            k[i] = 1;
            assert!(law.moment(&k, &mean, sqrt_n).abs() < 1e-13);
        }
        let sigma = law.second_moment_matrix(&[0.5, 0.3, 0.2]);
        for i in 0..3 {
            assert!(sigma.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn streamed_marginal_matches_law() {
        let p = params(3, 2.5, 0.05, 40);
        let law = exact_law(&p).unwrap();
        for coord in 0..3 {
            let streamed = count_marginal(&p, coord).unwrap();
            let cdf = law.marginal_cdf(coord, 0.0, 1.0);
            for (x, m) in cdf.locations().iter().zip(cdf.masses()) {
                assert!((streamed[*x as usize] - m).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn nearest_counts_round_to_total() {
        let c = CountVector::nearest(10, &[0.55, 0.25, 0.2]);
        assert_eq!(c.n(), 10);
        assert_eq!(c.as_slice(), &[6, 2, 2]);
        let c = CountVector::nearest(7, &[1.0 / 3.0; 3]);
        assert_eq!(c.as_slice(), &[3, 2, 2]);
    }

    #[test]
    fn restrict_renormalizes() {
        let law = exact_law(&params(3, 2.0, 0.0, 4)).unwrap();
        let sub = law.restrict(|a| a[0] >= 2).unwrap();
        assert!((sub.total_mass() - 1.0).abs() < 1e-13);
        assert!(law.restrict(|_| false).is_err());
    }

    #[test]
    fn csv_export() {
        let law = exact_law(&params(3, 2.0, 0.0, 1)).unwrap();
        let mut buf = Vec::new();
        law.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "nu_1,nu_2,nu_3,log_prob");
        assert!(lines[1].starts_with("1,0,0,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn spin_configuration_fractions() {
        let s = SpinConfiguration::new(3, vec![0, 1, 1, 2]).unwrap();
        assert_eq!(s.counts().as_slice(), &[1, 2, 1]);
        assert!((s.fraction(1) - 0.5).abs() < 1e-15);
        assert!((s.fraction_without(1, 1) - 0.25).abs() < 1e-15);
        assert!((s.fraction_without(1, 0) - 0.5).abs() < 1e-15);
        assert!(SpinConfiguration::new(3, vec![0, 3]).is_err());
    }

    proptest! {
        #[test]
        fn law_is_normalized(q in 3usize..5, n in 1usize..14, beta in 0.0f64..4.0, h in 0.0f64..1.0) {
            let law = exact_law(&params(q, beta, h, n)).unwrap();
            prop_assert!((law.total_mass() - 1.0).abs() < 1e-12);
            prop_assert_eq!(law.len() as f64, composition_count(n, q));
        }

        #[test]
        fn law_is_symmetric_in_unfavoured_colors(n in 1usize..12, beta in 0.0f64..4.0, h in 0.0f64..1.0, swap in 1usize..3) {
            let law = exact_law(&params(4, beta, h, n)).unwrap();
            for (atom, p) in law.iter() {
                let mut permuted = atom.to_vec();
                permuted.swap(swap, swap + 1);
                prop_assert!((law.probability_of(&permuted) - p).abs() < 1e-13);
            }
        }

        #[test]
        fn fluctuation_sums_to_zero(counts in proptest::collection::vec(0u32..50, 3..6)) {
            prop_assume!(counts.iter().sum::<u32>() > 0);
            let q = counts.len();
            let center = vec![1.0 / q as f64; q];
            let w = FluctuationVector::from_counts(&counts, &center);
            prop_assert!(w.0.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}

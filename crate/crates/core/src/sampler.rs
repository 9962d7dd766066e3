//! Heat-bath (Gibbs) dynamics, the exchangeable-pair step and chain
//! management.
//!
//! Every chain owns a ChaCha8 generator seeded from `master_seed` with its
//! stream set to the chain index, so output never depends on scheduling or
//! on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CwpError, Result};
use crate::free_energy::{closed_form_constants, critical_line_field, find_minimizers, is_extremity};
use crate::model::{CountVector, FluctuationVector, ModelParams, SpinConfiguration};
use crate::numerics::softmax;

/// Single-site conditional law of a spin currently colored `current`, given
/// the counts of the whole configuration:
/// `P(i) ∝ exp(β (N_i − δ_{i,current})/n + h δ_{i,0})`.
pub fn heat_bath_probabilities(params: &ModelParams, counts: &[u32], current: usize) -> Vec<f64> {
    let n = params.n as f64;
    let logits: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let others = c as f64 - if i == current { 1.0 } else { 0.0 };
            params.beta * others / n + if i == 0 { params.h } else { 0.0 }
        })
        .collect();
    softmax(&logits)
}

pub fn seeded_rng(master_seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_index);
    rng
}

#[derive(Debug, Clone)]
pub struct ChainState {
    params: ModelParams,
    config: SpinConfiguration,
    counts: CountVector,
    rng: ChaCha8Rng,
    sweeps: u64,
    /// `exp(β (k − n)/n)` for `k = 0..=n`.
    coupling_table: Vec<f64>,
    /// `exp(−h)`, the relative weight of every color but the favoured one.
    field_factor: f64,
    scratch: Vec<f64>,
}

impl ChainState {
    /// Chain started from the configuration with counts nearest `n·x`.
    pub fn new(params: ModelParams, x: &[f64], master_seed: u64, chain_index: u64) -> Result<Self> {
        if x.len() != params.q {
            return Err(CwpError::InvalidParameter(format!(
                "initial point has {} coordinates, model has {}",
                x.len(),
                params.q
            )));
        }
        let counts = CountVector::nearest(params.n, x);
        let config = SpinConfiguration::from_counts(&counts);
        Self::from_config(params, config, master_seed, chain_index)
    }

    pub fn from_config(
        params: ModelParams,
        config: SpinConfiguration,
        master_seed: u64,
        chain_index: u64,
    ) -> Result<Self> {
        if config.n() != params.n || config.q() != params.q {
            return Err(CwpError::InvalidParameter(
                "configuration does not match the model size".into(),
            ));
        }
        let n = params.n as f64;
        let coupling_table = (0..=params.n)
            .map(|k| (params.beta * (k as f64 - n) / n).exp())
            .collect();
        Ok(Self {
            counts: config.counts(),
            config,
            rng: seeded_rng(master_seed, chain_index),
            sweeps: 0,
            coupling_table,
            field_factor: (-params.h).exp(),
            scratch: vec![0.0; params.q],
            params,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &SpinConfiguration {
        &self.config
    }

    pub fn counts(&self) -> &CountVector {
        &self.counts
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweeps
    }

    pub fn fluctuation(&self, center: &[f64]) -> FluctuationVector {
        self.counts.fluctuation(center)
    }

    pub fn heat_bath_probs(&self, site: usize) -> Vec<f64> {
        heat_bath_probabilities(&self.params, self.counts.as_slice(), self.config.spin(site))
    }

    /// Unnormalized conditional weights into `scratch`; returns their total.
    #[inline]
    fn fill_weights(&mut self, current: usize) -> f64 {
        let mut total = 0.0;
        for (i, w) in self.scratch.iter_mut().enumerate() {
            let k = self.counts.get(i) as usize - usize::from(i == current);
            let mut v = self.coupling_table[k];
            if i != 0 {
                v *= self.field_factor;
            }
            *w = v;
            total += v;
        }
        total
    }

    #[inline]
    fn draw_color(&mut self, current: usize) -> usize {
        let mut total = self.fill_weights(current);
        if !(total > 0.0 && total.is_finite()) {
            let p = heat_bath_probabilities(&self.params, self.counts.as_slice(), current);
            self.scratch.copy_from_slice(&p);
            total = 1.0;
        }
        let mut u = self.rng.random::<f64>() * total;
        let q = self.scratch.len();
        for i in 0..q - 1 {
            u -= self.scratch[i];
            if u < 0.0 {
                return i;
            }
        }
        q - 1
    }

    #[inline]
    fn move_spin(&mut self, site: usize, from: usize, to: usize) {
        if from != to {
            self.counts.decrement(from);
            self.counts.increment(to);
            self.config.set_spin(site, to);
        }
    }

    /// Resamples every site once, in order.
    pub fn gibbs_sweep(&mut self) {
        for site in 0..self.params.n {
            let old = self.config.spin(site);
            let new = self.draw_color(old);
            self.move_spin(site, old, new);
        }
        self.sweeps += 1;
        debug_assert_eq!(self.counts, self.config.counts());
    }

    /// Systematic sweep where any move leaving `region` is rejected.
    pub fn gibbs_sweep_within(&mut self, region: &ConditionedRegion) {
        let n = self.params.n;
        for site in 0..n {
            let old = self.config.spin(site);
            let new = self.draw_color(old);
            if new != old && region.contains_after_move(&self.counts, old, new) {
                self.move_spin(site, old, new);
            }
        }
        self.sweeps += 1;
        debug_assert_eq!(self.counts, self.config.counts());
    }

    /// Draws `(W, W′)`: a uniform site is resampled from its conditional law.
    /// The chain itself is left unchanged apart from the generator.
    pub fn exchangeable_step(&mut self, center: &[f64]) -> PairSample {
        let site = self.rng.random_range(0..self.params.n);
        let old = self.config.spin(site);
        let new = self.draw_color(old);
        let w = self.fluctuation(center);
        let mut w_prime = w.clone();
        if new != old {
            let step = 1.0 / (self.params.n as f64).sqrt();
            w_prime.0[old] -= step;
            w_prime.0[new] += step;
        }
        PairSample {
            w,
            w_prime,
            site,
            old_color: old,
            new_color: new,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub w: FluctuationVector,
    pub w_prime: FluctuationVector,
    pub site: usize,
    pub old_color: usize,
    pub new_color: usize,
}

/// Ball `{L_n : |L_n − center| < epsilon}` (Euclidean).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedRegion {
    center: Vec<f64>,
    epsilon: f64,
}

impl ConditionedRegion {
    /// Validates that the ball separates the global minimizers of `params`.
    pub fn new(center: Vec<f64>, epsilon: f64, params: &ModelParams) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CwpError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if center.len() != params.q {
            return Err(CwpError::InvalidParameter("center has the wrong length".into()));
        }
        let minimizers = find_minimizers(&params.phase_point()).minimizers;
        let mut min_gap = f64::INFINITY;
        for (i, a) in minimizers.iter().enumerate() {
            for b in &minimizers[i + 1..] {
                min_gap = min_gap.min(euclidean(&a.x, &b.x));
            }
        }
        if epsilon >= 0.5 * min_gap {
            return Err(CwpError::InvalidParameter(format!(
                "epsilon {epsilon} must be below half the minimizer separation {min_gap}"
            )));
        }
        Ok(Self { center, epsilon })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn contains(&self, counts: &[u32]) -> bool {
        let n: f64 = counts.iter().map(|&c| c as f64).sum();
        let d2: f64 = counts
            .iter()
            .zip(&self.center)
            .map(|(&c, x)| (c as f64 / n - x).powi(2))
            .sum();
        d2 < self.epsilon * self.epsilon
    }

    fn contains_after_move(&self, counts: &CountVector, from: usize, to: usize) -> bool {
        let n = counts.n() as f64;
        let mut d2 = 0.0;
        for (i, x) in self.center.iter().enumerate() {
            let mut c = counts.get(i) as f64;
            if i == from {
                c -= 1.0;
            }
            if i == to {
                c += 1.0;
            }
            d2 += (c / n - x).powi(2);
        }
        d2 < self.epsilon * self.epsilon
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SamplingPlan {
    pub samples: usize,
    pub burn_in: u64,
    /// Sweeps between consecutive recorded samples.
    pub thinning: u64,
}

impl SamplingPlan {
    /// Default burn-in: 10⁴ sweeps at the extremity or on the critical line,
    /// 10³ elsewhere; one sample per sweep.
    pub fn with_defaults(params: &ModelParams, samples: usize) -> Self {
        let p = params.phase_point();
        let mut critical = is_extremity(&p);
        if let Ok(c) = closed_form_constants(p.q) {
            let on_line = p.beta >= c.beta_0 - 1e-9
                && p.beta <= c.beta_c + 1e-9
                && (p.h - critical_line_field(p.q, p.beta)).abs() < 1e-6;
            critical |= on_line;
        }
        Self {
            samples,
            burn_in: if critical { 10_000 } else { 1_000 },
            thinning: 1,
        }
    }
}

/// A recorded chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSample {
    pub sweep: u64,
    pub counts: CountVector,
}

/// Runs one chain from `x` and records counts according to `plan`.
pub fn sample_counts(
    params: &ModelParams,
    x: &[f64],
    plan: &SamplingPlan,
    master_seed: u64,
    chain_index: u64,
) -> Result<Vec<CountSample>> {
    let mut chain = ChainState::new(*params, x, master_seed, chain_index)?;
    Ok(run_plan(&mut chain, plan, |c| c.gibbs_sweep()))
}

fn run_plan<F: FnMut(&mut ChainState)>(
    chain: &mut ChainState,
    plan: &SamplingPlan,
    mut sweep: F,
) -> Vec<CountSample> {
    for _ in 0..plan.burn_in {
        sweep(chain);
    }
    let thinning = plan.thinning.max(1);
    let mut out = Vec::with_capacity(plan.samples);
    for _ in 0..plan.samples {
        for _ in 0..thinning {
            sweep(chain);
        }
        out.push(CountSample {
            sweep: chain.sweep_count(),
            counts: chain.counts().clone(),
        });
    }
    out
}

/// Fluctuation vectors `W = √n (L_n − center)` from one chain.
pub fn sample_fluctuations(
    params: &ModelParams,
    center: &[f64],
    plan: &SamplingPlan,
    master_seed: u64,
    chain_index: u64,
) -> Result<Vec<FluctuationVector>> {
    Ok(sample_counts(params, center, plan, master_seed, chain_index)?
        .into_iter()
        .map(|s| s.counts.fluctuation(center))
        .collect())
}

/// Chain restricted to `region`, started at the count vector nearest
/// `n·center`.
pub fn conditioned_sample(
    params: &ModelParams,
    region: &ConditionedRegion,
    plan: &SamplingPlan,
    master_seed: u64,
    chain_index: u64,
) -> Result<Vec<CountSample>> {
    let start = CountVector::nearest(params.n, region.center());
    if !region.contains(start.as_slice()) {
        return Err(CwpError::EmptyRegion(format!(
            "no count vector with n = {} within {} of {:?}",
            params.n,
            region.epsilon(),
            region.center()
        )));
    }
    let mut chain = ChainState::new(*params, region.center(), master_seed, chain_index)?;
    Ok(run_plan(&mut chain, plan, |c| c.gibbs_sweep_within(region)))
}

/// Runs `chains` independent chains in parallel; results are returned in
/// chain order.
pub fn run_chains<T, F>(chains: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..chains as u64).into_par_iter().map(f).collect()
}

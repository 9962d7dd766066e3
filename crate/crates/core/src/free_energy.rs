//! Free-energy function `G(u) = (β/2)|u|² − log Σ_k exp(βu_k + hδ_{k1})`,
//! its derivatives, the rate function on the simplex, the global minimizers
//! and the phase diagram in the `(β, h)` plane.
//!
//! All global minimizers have one large coordinate and `q − 1` equal small
//! ones, so the search reduces to the scalar equation
//! `log(1 + (q−1)s) − log(1 − s) − βs − h = 0` with
//! `x_s = ((1 + (q−1)s)/q, (1 − s)/q, …)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CwpError, Result};
use crate::numerics::{log_sum_exp, softmax};

/// Points on the scan grid used by [`mean_field_roots`].
const ROOT_SCAN_POINTS: usize = 10_000;
const ROOT_TOLERANCE: f64 = 1e-12;
/// Relative tolerance for deciding that two minima of `G` are tied.
const TIE_TOLERANCE: f64 = 1e-10;
/// Distance in `(β, h)` below which a point is treated as the extremity.
pub const EXTREMITY_TOLERANCE: f64 = 1e-9;
/// Margin for the equality case of the positive-definiteness criterion.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct PhasePoint {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
}

impl PhasePoint {
    pub fn new(q: usize, beta: f64, h: f64) -> Result<Self> {
        if q < 3 {
            return Err(CwpError::InvalidParameter(format!("q must be at least 3, got {q}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(CwpError::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(h.is_finite() && h >= 0.0) {
            return Err(CwpError::InvalidParameter(format!("h must be finite and >= 0, got {h}")));
        }
        Ok(Self { q, beta, h })
    }

    /// The end point `(β₀, h₀)` of the critical line.
    pub fn extremity(q: usize) -> Result<Self> {
        let c = closed_form_constants(q)?;
        Self::new(q, c.beta_0, c.h_0)
    }

    fn logits(&self, u: &[f64]) -> Vec<f64> {
        let mut logits: Vec<f64> = u.iter().map(|v| self.beta * v).collect();
        logits[0] += self.h;
        logits
    }
}

pub fn g(u: &[f64], p: &PhasePoint) -> f64 {
    let square: f64 = u.iter().map(|v| v * v).sum();
    0.5 * p.beta * square - log_sum_exp(&p.logits(u))
}

pub fn grad_g(u: &[f64], p: &PhasePoint) -> Vec<f64> {
    let pi = softmax(&p.logits(u));
    u.iter()
        .zip(pi)
        .map(|(v, s)| p.beta * v - p.beta * s)
        .collect()
}

/// `β Id − β² (diag π − π πᵗ)` with `π = softmax(βu + h e₁)`.
pub fn hess_g(u: &[f64], p: &PhasePoint) -> DMatrix<f64> {
    let q = u.len();
    let pi = softmax(&p.logits(u));
    let b2 = p.beta * p.beta;
    DMatrix::from_fn(q, q, |i, j| {
        let cov = if i == j { pi[i] - pi[i] * pi[i] } else { -pi[i] * pi[j] };
        let diag = if i == j { p.beta } else { 0.0 };
        diag - b2 * cov
    })
}

/// `Σ x_i log(q x_i) − (β/2)|x|² − h x₁` with `0 log 0 = 0`.
pub fn rate_function(x: &[f64], p: &PhasePoint) -> f64 {
    let q = p.q as f64;
    let entropy: f64 = x
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * (q * v).ln())
        .sum();
    let square: f64 = x.iter().map(|v| v * v).sum();
    entropy - 0.5 * p.beta * square - p.h * x[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalConstants {
    pub beta_c: f64,
    pub beta_0: f64,
    pub h_0: f64,
}

pub fn closed_form_constants(q: usize) -> Result<CriticalConstants> {
    if q < 3 {
        return Err(CwpError::InvalidParameter(format!("q must be at least 3, got {q}")));
    }
    let qf = q as f64;
    let ln = (qf - 1.0).ln();
    Ok(CriticalConstants {
        beta_c: 2.0 * (qf - 1.0) / (qf - 2.0) * ln,
        beta_0: 4.0 * (qf - 1.0) / qf,
        h_0: ln - 2.0 * (qf - 2.0) / qf,
    })
}

/// Field `h_T(β) = log(q−1) − β(q−2)/(2(q−1))` of the critical line.
pub fn critical_line_field(q: usize, beta: f64) -> f64 {
    let qf = q as f64;
    (qf - 1.0).ln() - beta * (qf - 2.0) / (2.0 * (qf - 1.0))
}

/// `(β_z, h_z)` on the critical line for `z ∈ (0, 1)`.
pub fn critical_line_point(q: usize, z: f64) -> (f64, f64) {
    let qf = q as f64;
    let beta = 2.0 * (qf - 1.0) / (z * qf) * ((1.0 + z) / (1.0 - z)).ln();
    (beta, critical_line_field(q, beta))
}

/// `((1 + z)/2, (1 − z)/(2(q−1)), …)`.
pub fn critical_line_minimizer(q: usize, z: f64) -> Vec<f64> {
    let mut x = vec![(1.0 - z) / (2.0 * (q as f64 - 1.0)); q];
    x[0] = (1.0 + z) / 2.0;
    x
}

fn mean_field_equation(s: f64, p: &PhasePoint) -> f64 {
    ((p.q as f64 - 1.0) * s).ln_1p() - (-s).ln_1p() - p.beta * s - p.h
}

/// Roots in `[0, 1)` of `log(1 + (q−1)s) − log(1 − s) − βs − h`.
pub fn mean_field_roots(p: &PhasePoint) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..ROOT_SCAN_POINTS)
        .map(|k| k as f64 / ROOT_SCAN_POINTS as f64)
        .collect();
    grid.extend((5..=15).map(|j| 1.0 - 10f64.powi(-j)));

    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &s in &grid {
        let v = mean_field_equation(s, p);
        if v == 0.0 {
            roots.push(s);
            prev = None;
            continue;
        }
        if let Some((a, fa)) = prev {
            if fa.signum() != v.signum() {
                roots.push(bisect(p, a, s, fa));
            }
        }
        prev = Some((s, v));
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    roots
}

fn bisect(p: &PhasePoint, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let sign_lo = f_lo.signum();
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let v = mean_field_equation(mid, p);
        if v == 0.0 {
            return mid;
        }
        if v.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn point_from_s(q: usize, s: f64, large_slot: usize) -> Vec<f64> {
    let qf = q as f64;
    let mut x = vec![(1.0 - s) / qf; q];
    x[large_slot] = (1.0 + (qf - 1.0) * s) / qf;
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhaseTag {
    UniqueMinimizer,
    CriticalLinePair,
    LowTempQFold,
    CriticalPointQPlus1,
    Extremity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimizer {
    pub x: Vec<f64>,
    pub s: f64,
    /// Critical-line coordinate `2x_large − 1`, set on the critical line.
    pub z: Option<f64>,
    /// Slot holding the large coordinate.
    pub large_slot: usize,
}

impl Minimizer {
    pub fn large(&self) -> f64 {
        self.x[self.large_slot]
    }

    /// The repeated small coordinate.
    pub fn small(&self) -> f64 {
        let other = if self.large_slot == 0 { 1 } else { 0 };
        self.x[other]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseClassification {
    pub tag: PhaseTag,
    pub minimizers: Vec<Minimizer>,
}

pub fn is_extremity(p: &PhasePoint) -> bool {
    match closed_form_constants(p.q) {
        Ok(c) => {
            (p.beta - c.beta_0).abs() <= EXTREMITY_TOLERANCE
                && (p.h - c.h_0).abs() <= EXTREMITY_TOLERANCE
        }
        Err(_) => false,
    }
}

pub fn find_minimizers(p: &PhasePoint) -> PhaseClassification {
    let q = p.q;
    if is_extremity(p) {
        let qf = q as f64;
        return PhaseClassification {
            tag: PhaseTag::Extremity,
            minimizers: vec![Minimizer {
                x: critical_line_minimizer(q, 0.0),
                s: (qf - 2.0) / (2.0 * (qf - 1.0)),
                z: Some(0.0),
                large_slot: 0,
            }],
        };
    }

    let mut roots = mean_field_roots(p);
    if p.h == 0.0 && !roots.contains(&0.0) {
        roots.insert(0, 0.0);
    }
    let values: Vec<(f64, f64)> = roots
        .iter()
        .map(|&s| (s, g(&point_from_s(q, s, 0), p)))
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * (1.0 + best.abs());
    let mut winners: Vec<f64> = values
        .iter()
        .filter(|(_, v)| *v - best <= tol)
        .map(|(s, _)| *s)
        .collect();
    winners.sort_by(|a, b| b.total_cmp(a));
    winners.dedup_by(|a, b| (*a - *b).abs() < 1e-7);

    let mut minimizers = Vec::new();
    for &s in &winners {
        if p.h == 0.0 && s != 0.0 {
            for slot in 0..q {
                minimizers.push(Minimizer {
                    x: point_from_s(q, s, slot),
                    s,
                    z: None,
                    large_slot: slot,
                });
            }
        } else {
            minimizers.push(Minimizer {
                x: point_from_s(q, s, 0),
                s,
                z: None,
                large_slot: 0,
            });
        }
    }

    let tag = match (p.h == 0.0, minimizers.len()) {
        (_, 1) => PhaseTag::UniqueMinimizer,
        (false, 2) => PhaseTag::CriticalLinePair,
        (true, k) if k == q + 1 => PhaseTag::CriticalPointQPlus1,
        (true, k) if k == q => PhaseTag::LowTempQFold,
        // Any other count means a numerical tie outside the known phase
        // boundaries; label by the closest structural case.
        (false, _) => PhaseTag::CriticalLinePair,
        (true, _) => PhaseTag::LowTempQFold,
    };
    if tag == PhaseTag::CriticalLinePair {
        for m in &mut minimizers {
            m.z = Some(2.0 * m.large() - 1.0);
        }
    }
    PhaseClassification { tag, minimizers }
}

/// Determinant of the `q × q` matrix with first row `(a, b, …, b)`, first
/// column `(a, b, …, b)ᵗ`, diagonal `d` elsewhere and `c` off the diagonal
/// of the trailing block.
pub fn pattern_determinant(q: usize, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let k = (q - 2) as f64;
    (d - c).powi(q as i32 - 2) * (a * (d + k * c) - (q as f64 - 1.0) * b * b)
}

pub fn pattern_matrix(q: usize, a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_fn(q, q, |i, j| match (i, j) {
        (0, 0) => a,
        (0, _) | (_, 0) => b,
        _ if i == j => d,
        _ => c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianSummary {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// Closed-form determinant.
    pub det: f64,
    /// Determinant by LU factorization of `matrix`.
    pub det_lu: f64,
    #[serde(rename = "pd")]
    pub positive_definite: bool,
    pub degenerate: bool,
}

/// Hessian of `G` at a global minimizer.
pub fn hessian_summary(p: &PhasePoint, m: &Minimizer) -> HessianSummary {
    let (beta, q) = (p.beta, p.q as f64);
    let (x1, xq) = (m.large(), m.small());
    let b2 = beta * beta;
    let a = beta - b2 * (q - 1.0) * x1 * xq;
    let b = b2 * x1 * xq;
    let d = beta - b2 * (x1 * xq + (q - 2.0) * xq * xq);
    let c = b2 * xq * xq;
    let matrix = hess_g(&m.x, p);
    let det = pattern_determinant(p.q, a, b, c, d);
    let det_lu = matrix.clone().lu().determinant();
    let first = beta * xq - 1.0;
    let second = beta * q * x1 * xq - 1.0;
    let degenerate = first.abs() < DEGENERACY_TOLERANCE || second.abs() < DEGENERACY_TOLERANCE;
    HessianSummary {
        a,
        b,
        c,
        d,
        matrix,
        det,
        det_lu,
        positive_definite: !degenerate && first < 0.0 && second < 0.0,
        degenerate,
    }
}

/// The regression matrix `Λ = D²G(x₀)/(βn)` with its inverse and the
/// absolute column sums `λ^(i) = Σ_m |(Λ⁻¹)_{m,i}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMatrix {
    pub n: usize,
    pub lambda: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
    pub lambda_cols: Vec<f64>,
}

pub fn regression_matrix(p: &PhasePoint, m: &Minimizer, n: usize) -> Result<RegressionMatrix> {
    let summary = hessian_summary(p, m);
    if summary.degenerate || p.beta == 0.0 {
        return Err(CwpError::DegenerateHessian(format!(
            "q={}, beta={}, h={}",
            p.q, p.beta, p.h
        )));
    }
    let lambda = summary.matrix / (p.beta * n as f64);
    let lambda_inv = lambda
        .clone()
        .try_inverse()
        .ok_or_else(|| CwpError::DegenerateHessian("singular regression matrix".into()))?;
    let lambda_cols = (0..p.q)
        .map(|i| lambda_inv.column(i).iter().map(|v| v.abs()).sum())
        .collect();
    Ok(RegressionMatrix {
        n,
        lambda,
        lambda_inv,
        lambda_cols,
    })
}

/// Limiting covariance `[D²G(x)]⁻¹ − β⁻¹ Id` of the fluctuation vector.
pub fn theoretical_sigma(p: &PhasePoint, m: &Minimizer) -> Result<DMatrix<f64>> {
    let summary = hessian_summary(p, m);
    if !summary.positive_definite || p.beta == 0.0 {
        return Err(CwpError::DegenerateHessian(format!(
            "q={}, beta={}, h={}",
            p.q, p.beta, p.h
        )));
    }
    let inv = summary
        .matrix
        .try_inverse()
        .ok_or_else(|| CwpError::DegenerateHessian("singular Hessian".into()))?;
    let q = p.q;
    let sigma = inv - DMatrix::identity(q, q) / p.beta;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Closed-form Taylor data of `G_{β₀,h₀}` at `x = (1/2, 1/(2(q−1)), …)`.
///
/// Derivative names follow index patterns: in `r_1jk`, `j ≠ k` are distinct
/// indices from `2..q`; `r_111k` has `k ≥ 2`; and so on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremityTaylor {
    pub q: usize,
    pub center: Vec<f64>,
    pub hess_11: f64,
    pub hess_1k: f64,
    pub hess_kk: f64,
    pub hess_jk: f64,
    pub r_111: f64,
    pub r_11k: f64,
    pub r_1jj: f64,
    pub r_1jk: f64,
    pub r_1111: f64,
    pub r_111k: f64,
    pub r_11kk: f64,
    pub r_11jk: f64,
    pub r_1kkk: f64,
    pub r_1jjk: f64,
    /// Needs three distinct indices from `2..q`, so only for `q ≥ 4`.
    pub r_1jkl: Option<f64>,
    /// Coefficient of `t³` in `∂₁G(x + t u + v)`, `u = (1 − q, 1, …, 1)`.
    pub cubic_coefficient: f64,
    /// Coefficient of `Σ_{j≥2} v_j²` in the same expansion.
    pub quadratic_v_coefficient: f64,
    /// Coefficient of `t⁴` in `G(x + t u) − G(x)`.
    pub quartic_coefficient: f64,
    #[serde(skip)]
    pub reduced_hessian: DMatrix<f64>,
    pub reduced_hessian_det: f64,
    #[serde(skip)]
    pub v_covariance: DMatrix<f64>,
}

pub fn extremity_taylor(q: usize) -> Result<ExtremityTaylor> {
    closed_form_constants(q)?;
    let qf = q as f64;
    let q2 = qf * qf;
    let q3 = q2 * qf;
    let q4 = q3 * qf;
    let m1 = qf - 1.0;
    let reduced_hessian = DMatrix::from_fn(q - 1, q - 1, |i, j| {
        4.0 / q2 * (1.0 + if i == j { m1 * (qf - 2.0) } else { 0.0 })
    });
    let reduced_hessian_det =
        (4.0 / q2).powi(q as i32 - 1) * (m1 * (qf - 2.0)).powi(q as i32 - 2) * m1 * m1;
    let scale = qf / (2.0 * m1 * m1 * (qf - 2.0));
    let v_covariance = DMatrix::from_fn(q - 1, q - 1, |i, j| {
        scale * if i == j { qf - 2.0 } else { -1.0 }
    });
    Ok(ExtremityTaylor {
        q,
        center: critical_line_minimizer(q, 0.0),
        hess_11: 4.0 * m1 / q2,
        hess_1k: 4.0 * m1 / q2,
        hess_kk: 4.0 * (q2 - 3.0 * qf + 3.0) / q2,
        hess_jk: 4.0 / q2,
        r_111: 0.0,
        r_11k: 0.0,
        r_1jj: 16.0 * m1 * (qf - 2.0) / q3,
        r_1jk: -16.0 * m1 / q3,
        r_1111: 32.0 * m1.powi(4) / q4,
        r_111k: -32.0 * m1.powi(3) / q4,
        r_11kk: 32.0 * m1 * m1 / q4,
        r_11jk: 32.0 * m1 * m1 / q4,
        r_1kkk: 32.0 * m1 * (2.0 * q2 - 10.0 * qf + 11.0) / q4,
        r_1jjk: -32.0 * m1 * (2.0 * qf - 5.0) / q4,
        r_1jkl: (q >= 4).then(|| 96.0 * m1 / q4),
        cubic_coefficient: -16.0 * m1.powi(4) / (3.0 * qf),
        quadratic_v_coefficient: 8.0 * m1 * m1 / q3,
        quartic_coefficient: 4.0 * m1.powi(4) / 3.0,
        reduced_hessian,
        reduced_hessian_det,
        v_covariance,
    })
}

/// Summary of one phase-diagram point, serialized into phase reports.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub tag: PhaseTag,
    pub minimizers: Vec<Minimizer>,
    /// Hessian at the first minimizer.
    pub hessian: HessianSummary,
    /// Limiting covariance at the first minimizer; absent when the Hessian
    /// is not positive definite.
    pub sigma: Option<Vec<Vec<f64>>>,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn phase_report(p: &PhasePoint) -> PhaseReport {
    let classification = find_minimizers(p);
    let first = &classification.minimizers[0];
    let hessian = hessian_summary(p, first);
    let sigma = theoretical_sigma(p, first).ok().map(|s| matrix_rows(&s));
    PhaseReport {
        q: p.q,
        beta: p.beta,
        h: p.h,
        tag: classification.tag,
        minimizers: classification.minimizers,
        hessian,
        sigma,
    }
}

//! Gaussian smoothing of the fluctuation law.
//!
//! If `Y ~ N(0, β⁻¹ I)` is independent of `L_n`, then
//! `Y n^{γ−1/2} + n^γ (L_n − m)` has density `∝ exp(−n G(m + y/n^γ))`.
//! The right side is computed from `G` alone; the left side from the
//! enumerated law as a Gaussian mixture. Both are evaluated on the same
//! regular grid.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CwpError, Result};
use crate::free_energy::{g, hess_g, PhasePoint};
use crate::model::{ExactLaw, ModelParams};

/// Default half-width in marginal standard deviations.
pub const DEFAULT_HALF_WIDTH_SD: f64 = 6.5;
pub const DEFAULT_POINTS: usize = 61;
/// Largest mass tolerated on the outermost grid layer.
pub const BOUNDARY_MASS_TOLERANCE: f64 = 1e-8;
const MAX_GRID_POINTS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn step(&self) -> f64 {
        if self.points < 2 {
            1.0
        } else {
            (self.hi - self.lo) / (self.points - 1) as f64
        }
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.coordinate(k)).collect()
    }

    /// Same bounds, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// Regular lattice; axis 0 varies slowest in flat indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

impl GridSpec {
    pub fn uniform(dim: usize, lo: f64, hi: f64, points: usize) -> Self {
        Self {
            axes: vec![AxisSpec { lo, hi, points }; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }

    pub fn refined(&self) -> Self {
        Self {
            axes: self.axes.iter().map(|a| a.refined()).collect(),
        }
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.dim() != q {
            return Err(CwpError::InvalidParameter(format!(
                "grid has {} axes, need {q}",
                self.dim()
            )));
        }
        for a in &self.axes {
            if a.points < 2 || !(a.hi > a.lo) {
                return Err(CwpError::InvalidParameter(format!("bad axis {a:?}")));
            }
        }
        let total = self.axes.iter().map(|a| a.points as f64).product::<f64>();
        if total > MAX_GRID_POINTS as f64 {
            return Err(CwpError::CapacityExceeded {
                required: total,
                budget: MAX_GRID_POINTS as f64,
            });
        }
        Ok(())
    }

    /// Grid coordinates of a flat index.
    fn point(&self, mut index: usize, out: &mut [f64]) {
        for (axis, slot) in self.axes.iter().zip(out.iter_mut()).rev() {
            *slot = axis.coordinate(index % axis.points);
            index /= axis.points;
        }
    }

    fn is_boundary(&self, mut index: usize) -> bool {
        let mut edge = false;
        for axis in self.axes.iter().rev() {
            let k = index % axis.points;
            edge |= k == 0 || k + 1 == axis.points;
            index /= axis.points;
        }
        edge
    }
}

/// `DEFAULT_POINTS` per axis over `±6.5` marginal standard deviations of
/// `n^{2γ−1} [D²G(m)]⁻¹`.
pub fn default_grid(params: &ModelParams, m: &[f64], gamma: f64) -> Result<GridSpec> {
    let hess = hess_g(m, &params.phase_point());
    let cov = hess.try_inverse().ok_or_else(|| {
        CwpError::DegenerateHessian(format!("{m:?}; pass an explicit grid"))
    })?;
    let scale = (params.n as f64).powf(2.0 * gamma - 1.0);
    let axes = (0..params.q)
        .map(|i| {
            let var = cov[(i, i)] * scale;
            if !(var > 0.0) {
                return Err(CwpError::DegenerateHessian(format!(
                    "{m:?}: non-positive marginal variance"
                )));
            }
            let half = DEFAULT_HALF_WIDTH_SD * var.sqrt();
            Ok(AxisSpec {
                lo: -half,
                hi: half,
                points: DEFAULT_POINTS,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSpec { axes })
}

/// Grid for `γ = 1/4` at the extremity.
///
/// Along the first axis `n G ≈ (4/3) y₁⁴`, independent of `q`; the other
/// coordinates track `−y₁/(q−1)` plus a transverse Gaussian part of width
/// `O(n^{-1/4})`.
pub fn extremity_grid(q: usize, n: usize, points: usize) -> GridSpec {
    let first = 2.5;
    let transverse = 6.5 * (n as f64).powf(-0.25) * q as f64 / 2.0;
    let rest = first / (q as f64 - 1.0) + transverse.min(1.0);
    let mut axes = vec![
        AxisSpec {
            lo: -rest,
            hi: rest,
            points
        };
        q
    ];
    axes[0] = AxisSpec {
        lo: -first,
        hi: first,
        points,
    };
    GridSpec { axes }
}

/// Density values on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsGrid {
    pub gamma: f64,
    pub m: Vec<f64>,
    pub spec: GridSpec,
    #[serde(skip)]
    pub density: Vec<f64>,
}

impl HsGrid {
    /// Riemann sum of the density.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.spec.cell_volume()
    }

    /// Mass on grid points with at least one extreme index.
    pub fn boundary_mass(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .filter(|(i, _)| self.spec.is_boundary(*i))
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.spec.cell_volume()
    }

    /// Density of coordinate `axis` on its grid, by Riemann summation over
    /// the others.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let points = self.spec.axes[axis].points;
        let stride: usize = self.spec.axes[axis + 1..].iter().map(|a| a.points).product();
        let mut out = vec![0.0; points];
        for (i, d) in self.density.iter().enumerate() {
            out[(i / stride) % points] += d;
        }
        let others = self.spec.cell_volume() / self.spec.axes[axis].step();
        out.iter_mut().for_each(|v| *v *= others);
        out
    }

    /// CSV with columns `y_1..y_q, density`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let q = self.spec.dim();
        let mut header: Vec<String> = (1..=q).map(|i| format!("y_{i}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        let mut y = vec![0.0; q];
        for (i, d) in self.density.iter().enumerate() {
            self.spec.point(i, &mut y);
            let mut row: Vec<String> = y.iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{d:.17e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(spec: &GridSpec, f: F) -> Vec<f64> {
    let slab: usize = spec.axes[1..].iter().map(|a| a.points).product();
    let q = spec.dim();
    (0..spec.axes[0].points)
        .into_par_iter()
        .map(|k| {
            let mut y = vec![0.0; q];
            (k * slab..(k + 1) * slab)
                .map(|i| {
                    spec.point(i, &mut y);
                    f(&y)
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Normalized grid density `∝ exp(−n G(m + y/n^γ))`.
///
/// Fails when the outermost grid layer carries more than
/// [`BOUNDARY_MASS_TOLERANCE`], suggesting wider bounds.
pub fn hs_density(params: &ModelParams, m: &[f64], gamma: f64, spec: &GridSpec) -> Result<HsGrid> {
    spec.validate(params.q)?;
    if m.len() != params.q {
        return Err(CwpError::InvalidParameter(format!(
            "center has {} coordinates, need {}",
            m.len(),
            params.q
        )));
    }
    let p: PhasePoint = params.phase_point();
    let n = params.n as f64;
    let shrink = n.powf(-gamma);
    let g_m = g(m, &p);
    let log_density = evaluate(spec, |y| {
        let u: Vec<f64> = m.iter().zip(y).map(|(mi, yi)| mi + yi * shrink).collect();
        -n * (g(&u, &p) - g_m)
    });
    let top = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = log_density.iter().map(|l| (l - top).exp()).collect();
    let mass = density.iter().sum::<f64>() * spec.cell_volume();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(CwpError::Numerical(format!("grid mass {mass}")));
    }
    density.iter_mut().for_each(|d| *d /= mass);
    let grid = HsGrid {
        gamma,
        m: m.to_vec(),
        spec: spec.clone(),
        density,
    };
    let boundary = grid.boundary_mass();
    if boundary > BOUNDARY_MASS_TOLERANCE {
        return Err(CwpError::InsufficientCoverage {
            reason: format!("boundary layer carries mass {boundary:.3e}"),
            suggested: spec
                .axes
                .iter()
                .map(|a| {
                    let mid = 0.5 * (a.lo + a.hi);
                    let half = 0.75 * (a.hi - a.lo);
                    (mid - half, mid + half)
                })
                .collect(),
        });
    }
    Ok(grid)
}

/// Density of `Y n^{γ−1/2} + n^γ (L_n − m)` on the grid: one Gaussian
/// kernel of variance `n^{2γ−1}/β` per atom. Not renormalized.
pub fn convolved_exact_law(law: &ExactLaw, m: &[f64], gamma: f64, spec: &GridSpec) -> Result<HsGrid> {
    let params = law.params();
    let q = params.q;
    spec.validate(q)?;
    if !(params.beta > 0.0) {
        return Err(CwpError::InvalidParameter(
            "smoothing needs beta > 0".into(),
        ));
    }
    let n = params.n as f64;
    let var = n.powf(2.0 * gamma - 1.0) / params.beta;
    let norm = (2.0 * std::f64::consts::PI * var).sqrt();
    let scale = n.powf(gamma);
    // kernels[axis][count][grid index]
    let kernels: Vec<Vec<Vec<f64>>> = (0..q)
        .map(|axis| {
            let coords = spec.axes[axis].coordinates();
            (0..=params.n)
                .map(|k| {
                    let center = scale * (k as f64 / n - m[axis]);
                    coords
                        .iter()
                        .map(|y| (-(y - center).powi(2) / (2.0 * var)).exp() / norm)
                        .collect()
                })
                .collect()
        })
        .collect();
    let atoms: Vec<(&[u32], f64)> = law.iter().collect();
    let slab: usize = spec.axes[1..].iter().map(|a| a.points).product();
    let density = (0..spec.axes[0].points)
        .into_par_iter()
        .map(|k0| {
            let mut out = vec![0.0; slab];
            let mut partial = vec![0.0; slab];
            for &(atom, p) in &atoms {
                let lead = p * kernels[0][atom[0] as usize][k0];
                if lead == 0.0 {
                    continue;
                }
                // Tensor product of the remaining axes, last axis fastest.
                partial[0] = lead;
                let mut filled = 1;
                for axis in 1..q {
                    let kern = &kernels[axis][atom[axis] as usize];
                    let pts = spec.axes[axis].points;
                    for i in (0..filled).rev() {
                        let base = partial[i];
                        for (j, kv) in kern.iter().enumerate() {
                            partial[i * pts + j] = base * kv;
                        }
                    }
                    filled *= pts;
                }
                out.iter_mut().zip(&partial).for_each(|(o, v)| *o += v);
            }
            out
        })
        .collect::<Vec<_>>()
        .concat();
    Ok(HsGrid {
        gamma,
        m: m.to_vec(),
        spec: spec.clone(),
        density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityGap {
    pub tv: f64,
    pub sup: f64,
}

pub fn compare_densities(a: &HsGrid, b: &HsGrid) -> Result<DensityGap> {
    if a.spec != b.spec {
        return Err(CwpError::GridMismatch(format!("{:?} vs {:?}", a.spec, b.spec)));
    }
    let vol = a.spec.cell_volume();
    let mut l1 = 0.0;
    let mut sup: f64 = 0.0;
    for (x, y) in a.density.iter().zip(&b.density) {
        let d = (x - y).abs();
        l1 += d;
        sup = sup.max(d);
    }
    Ok(DensityGap {
        tv: 0.5 * l1 * vol,
        sup,
    })
}

/// Zero-mean Gaussian density with covariance `cov` on the grid.
pub fn gaussian_on_grid(cov: &DMatrix<f64>, spec: &GridSpec) -> Result<HsGrid> {
    let q = cov.nrows();
    spec.validate(q)?;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| CwpError::Numerical("covariance is not positive definite".into()))?;
    let inv = chol.inverse();
    let det = chol.l().diagonal().iter().map(|d| d * d).product::<f64>();
    let norm = ((2.0 * std::f64::consts::PI).powi(q as i32) * det).sqrt();
    let density = evaluate(spec, |y| {
        let mut quad = 0.0;
        for i in 0..q {
            for j in 0..q {
                quad += y[i] * inv[(i, j)] * y[j];
            }
        }
        (-0.5 * quad).exp() / norm
    });
    Ok(HsGrid {
        gamma: 0.5,
        m: vec![0.0; q],
        spec: spec.clone(),
        density,
    })
}

/// Least-squares fit `log p(y) ≈ c₀ + c₄ y⁴` over points whose density is
/// above `relative_floor · max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuarticFit {
    pub intercept: f64,
    pub quartic: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

pub fn log_quartic_fit(coords: &[f64], density: &[f64], relative_floor: f64) -> Result<QuarticFit> {
    let top = density.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = coords
        .iter()
        .zip(density)
        .filter(|(_, &d)| d > relative_floor * top && d > 0.0)
        .map(|(&y, &d)| (y.powi(4), d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(CwpError::InsufficientSamples {
            required: 3,
            got: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(QuarticFit {
        intercept: my - slope * mx,
        quartic: slope,
        r_squared: sxy * sxy / (sxx * syy),
        points_used: pts.len(),
    })
}

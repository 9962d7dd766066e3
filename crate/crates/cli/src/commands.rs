//! One runner per subcommand. Each returns the full report as JSON, its
//! main table as CSV and a few headline numbers for the manifest.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use cwp_core::experiments::{
    clt_rate, critical_rate, hs_check, phase_grid, stein_bounds, CltRateConfig, CriticalRateConfig,
    HsCheckConfig, McConfig, PhaseGridConfig, SteinBoundsConfig,
};
use cwp_core::sampler::{conditioned_sample, run_chains, sample_counts, ConditionedRegion};
use cwp_core::{exact_law, find_minimizers, ModelParams};

pub struct Output {
    pub report: Value,
    pub csv: Vec<u8>,
    pub summary: Value,
}

fn table<I>(header: &[String], rows: I) -> anyhow::Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn cells<const N: usize>(names: [&str; N]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn indexed(prefix: &str, q: usize) -> impl Iterator<Item = String> + '_ {
    (1..=q).map(move |i| format!("{prefix}_{i}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------- phase-report

pub fn phase_report(config: &PhaseGridConfig) -> anyhow::Result<Output> {
    let reports = phase_grid(config)?;
    let q = config.q;
    let mut header = cells(["beta", "h", "tag", "minimizers"]);
    header.extend(indexed("x", q));
    header.extend(cells(["det", "pd", "degenerate"]));
    let rows = reports.iter().map(|r| {
        let mut row = vec![
            r.beta.to_string(),
            r.h.to_string(),
            format!("{:?}", r.tag),
            r.minimizers.len().to_string(),
        ];
        row.extend(r.minimizers[0].x.iter().map(|x| x.to_string()));
        row.push(r.hessian.det.to_string());
        row.push(r.hessian.positive_definite.to_string());
        row.push(r.hessian.degenerate.to_string());
        row
    });
    let csv = table(&header, rows)?;
    let mut tags = serde_json::Map::new();
    for r in &reports {
        let key = format!("{:?}", r.tag);
        let count = tags.get(&key).and_then(Value::as_u64).unwrap_or(0);
        tags.insert(key, Value::from(count + 1));
    }
    Ok(Output {
        summary: json!({ "points": reports.len(), "tags": tags }),
        report: json!({ "q": q, "points": reports }),
        csv,
    })
}

// ---------------------------------------------------------------- exact-law

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactLawConfig {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
}

impl Default for ExactLawConfig {
    fn default() -> Self {
        Self { q: 3, beta: 2.0, h: 0.0, n: 50 }
    }
}

pub fn exact_law_cmd(config: &ExactLawConfig) -> anyhow::Result<Output> {
    let params = ModelParams::new(config.q, config.beta, config.h, config.n)?;
    let law = exact_law(&params)?;
    let mut csv = Vec::new();
    law.write_csv(&mut csv)?;
    let atoms: Vec<Value> = law
        .iter()
        .map(|(nu, lp)| json!({ "counts": nu, "log_prob": lp }))
        .collect();
    let mean = law.mean_proportions();
    Ok(Output {
        summary: json!({ "atoms": law.len(), "mean_proportions": mean }),
        report: json!({ "params": params, "mean_proportions": mean, "atoms": atoms }),
        csv,
    })
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub q: usize,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
    /// Centering point and chain start; `None` uses the first global
    /// minimizer.
    pub center: Option<Vec<f64>>,
    /// Restricts the chain to a ball of this radius around `center`.
    pub epsilon: Option<f64>,
    pub mc: McConfig,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            q: 3,
            beta: 2.0,
            h: 0.0,
            n: 400,
            center: None,
            epsilon: None,
            mc: McConfig::default(),
        }
    }
}

pub fn sample(config: &SampleConfig) -> anyhow::Result<Output> {
    let params = ModelParams::new(config.q, config.beta, config.h, config.n)?;
    config.mc.validate()?;
    let center = match &config.center {
        Some(c) => c.clone(),
        None => find_minimizers(&params.phase_point()).minimizers[0].x.clone(),
    };
    let plan = config.mc.plan(&params);
    let seed = config.mc.seed;
    let chains = match config.epsilon {
        Some(eps) => {
            let region = ConditionedRegion::new(center.clone(), eps, &params)?;
            run_chains(config.mc.chains, |c| conditioned_sample(&params, &region, &plan, seed, c))?
        }
        None => run_chains(config.mc.chains, |c| sample_counts(&params, &center, &plan, seed, c))?,
    };

    let q = config.q;
    let mut header = cells(["chain", "sweep"]);
    header.extend(indexed("W", q));
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut mean = vec![0.0; q];
    for (chain, samples) in chains.iter().enumerate() {
        for s in samples {
            let w = s.counts.fluctuation(&center);
            for (m, x) in mean.iter_mut().zip(w.as_slice()) {
                *m += x;
            }
            let mut row = vec![chain.to_string(), s.sweep.to_string()];
            row.extend(w.as_slice().iter().map(|x| x.to_string()));
            rows.push(row);
            records.push(json!({ "chain": chain, "sweep": s.sweep, "w": w.as_slice() }));
        }
    }
    let total = records.len();
    for m in &mut mean {
        *m /= total as f64;
    }
    Ok(Output {
        summary: json!({ "samples": total, "mean_w": mean }),
        report: json!({
            "params": params,
            "center": center,
            "plan": plan,
            "samples": records,
        }),
        csv: table(&header, rows)?,
    })
}

// ---------------------------------------------------------------- rates

pub fn clt_rate_cmd(config: &CltRateConfig) -> anyhow::Result<Output> {
    let report = clt_rate(config)?;
    let header = cells(["n", "dK_marginal", "dK_quadrant", "samples"]);
    let rows = report.rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            r.dk_marginal.to_string(),
            r.dk_quadrant.to_string(),
            r.samples.map(|s| s.to_string()).unwrap_or_default(),
        ]
    });
    let csv = table(&header, rows)?;
    Ok(Output {
        summary: json!({
            "marginal_slope": report.marginal_fit.as_ref().map(|f| f.slope),
            "quadrant_slope": report.quadrant_fit.as_ref().map(|f| f.slope),
        }),
        report: serde_json::to_value(&report)?,
        csv,
    })
}

pub fn stein_bounds_cmd(config: &SteinBoundsConfig) -> anyhow::Result<Output> {
    let report = stein_bounds(config)?;
    let header = cells([
        "mode", "n", "sample_size", "A", "B", "C", "A1", "A2", "A3", "se_A", "se_B", "se_C", "se_A2",
    ]);
    let modes = report
        .terms
        .iter()
        .map(|t| ("mc", t))
        .chain(report.exact_terms.iter().map(|t| ("exact", t)));
    let rows = modes.map(|(mode, t)| {
        let mut row = vec![mode.to_string(), t.n.to_string(), t.sample_size.to_string()];
        row.extend([t.a, t.b, t.c, t.a1, t.a2, t.a3].iter().map(|x| x.to_string()));
        row.extend([t.se.a, t.se.b, t.se.c, t.se.a2].iter().map(|x| x.to_string()));
        row
    });
    let csv = table(&header, rows)?;
    Ok(Output {
        summary: json!({
            "ratios": report.ratios,
            "exact_ratios": report.exact_ratios,
            "residual_slope": report.residual_fit.as_ref().map(|f| f.slope),
        }),
        report: serde_json::to_value(&report)?,
        csv,
    })
}

pub fn critical_rate_cmd(config: &CriticalRateConfig) -> anyhow::Result<Output> {
    let report = critical_rate(config)?;
    let header = cells(["n", "E_T4", "normalized_fourth_moment", "dK_T_vs_fqT", "dK_T_vs_gq"]);
    let rows = report.rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            r.e_t4.to_string(),
            r.normalized_fourth_moment.to_string(),
            r.dk_t_vs_fqt.to_string(),
            r.dk_t_vs_gq.to_string(),
        ]
    });
    let csv = table(&header, rows)?;
    Ok(Output {
        summary: json!({
            "slope_dK_T_vs_fqT": report.fit_fqt.as_ref().map(|f| f.slope),
            "slope_dK_T_vs_gq": report.fit_gq.as_ref().map(|f| f.slope),
            "fourth_moment_approaches_one": report.fourth_moment_approaches_one,
            "var_v2": report.v_check.as_ref().map(|v| v.var_v2),
        }),
        report: serde_json::to_value(&report)?,
        csv,
    })
}

pub fn hs_check_cmd(config: &HsCheckConfig) -> anyhow::Result<Output> {
    let report = hs_check(config)?;
    let header = cells([
        "n", "gamma", "tv", "sup", "refined_tv", "refined_sup", "mixture_mass", "quartic", "r_squared",
    ]);
    let row = vec![
        report.n.to_string(),
        report.gamma.to_string(),
        opt(report.gap.map(|g| g.tv)),
        opt(report.gap.map(|g| g.sup)),
        opt(report.refined_gap.map(|g| g.tv)),
        opt(report.refined_gap.map(|g| g.sup)),
        opt(report.mixture_mass),
        opt(report.quartic_fit.as_ref().map(|f| f.quartic)),
        opt(report.quartic_fit.as_ref().map(|f| f.r_squared)),
    ];
    let csv = table(&header, [row])?;
    Ok(Output {
        summary: json!({
            "tv": report.gap.map(|g| g.tv),
            "refined_tv": report.refined_gap.map(|g| g.tv),
            "quartic": report.quartic_fit.as_ref().map(|f| f.quartic),
        }),
        report: serde_json::to_value(&report)?,
        csv,
    })
}

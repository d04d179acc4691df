//! Cross-model analytics: fitting the fluid model's move-rate multiplier to
//! agent trajectories, strategic-vs-benchmark price-gap maps, parameter
//! sweeps and audits of the convergence guarantees.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    classify_surge, convergence_times, default_horizon, detect_inversion, movers, peak_time,
    simulate, tau_n_bounds, tau_s_bounds, BoundsReport, SurgeType, TheoryParams, Trajectory,
    DEFAULT_TOL,
};
use crate::error::SimError;
use crate::market::{simulate_market, simulate_market_fixed, AgentParams, MarketRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub k_star: f64,
    pub objective: f64,
    /// Evaluated `(k, objective)` pairs of the uniform grid.
    pub grid: Vec<(f64, f64)>,
}

/// Fluid-model counterpart of an agent market (same rates and backlogs).
pub fn theory_counterpart(params: &AgentParams, k: f64) -> TheoryParams {
    TheoryParams {
        lambda: params.lambda,
        mu: params.mu,
        d0_surge: params.d0_surge as f64,
        d0_nonsurge: params.d0_nonsurge as f64,
        k,
        horizon: params.horizon,
        tol: DEFAULT_TOL,
    }
}

/// Sum of squared differences between the fluid curves at `k` and the target
/// curves, aligned on `t`. The fluid run is zero-padded after it clears.
pub fn curve_objective(base: &TheoryParams, k: f64, surge: &[f64], nonsurge: &[f64]) -> f64 {
    let len = surge.len().max(nonsurge.len());
    let horizon = len.saturating_sub(1).max(1) as u32;
    let traj = simulate(&TheoryParams {
        k,
        horizon,
        ..*base
    });
    let at = |curve: &[f64], t: usize| curve.get(t).copied().unwrap_or(0.0);
    (0..len)
        .map(|t| {
            let state = traj.states.get(t);
            let ds = state.map_or(0.0, |s| s.d_s) - at(surge, t);
            let dn = state.map_or(0.0, |s| s.d_ns) - at(nonsurge, t);
            ds * ds + dn * dn
        })
        .sum()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid search over `k_range` followed by golden-section refinement inside
/// the neighbouring grid cells of the best grid point.
pub fn fit_curves(
    surge: &[f64],
    nonsurge: &[f64],
    base: &TheoryParams,
    k_range: (f64, f64),
    grid_size: usize,
) -> Result<FitResult, SimError> {
    let (lo, hi) = k_range;
    if !(lo >= 0.0 && hi > lo && grid_size >= 2) {
        return Err(SimError::Invalid(format!(
            "need 0 <= k_min < k_max and grid_size >= 2 (got [{lo}, {hi}], {grid_size})"
        )));
    }
    let objective = |k: f64| curve_objective(base, k, surge, nonsurge);
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..grid_size)
        .map(|i| {
            let k = if i + 1 == grid_size {
                hi
            } else {
                lo + step * i as f64
            };
            (k, objective(k))
        })
        .collect();
    let (best, &(k_grid, f_grid)) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    let left = grid[best.saturating_sub(1)].0;
    let right = grid[(best + 1).min(grid_size - 1)].0;
    let (k_gold, f_gold) = golden_section(objective, left, right, step * 1e-4);
    let (k_star, objective) = if f_gold < f_grid {
        (k_gold, f_gold)
    } else {
        (k_grid, f_grid)
    };
    Ok(FitResult {
        k_star,
        objective,
        grid,
    })
}

/// Fits `k` so the fluid model tracks a converged agent run.
pub fn fit_k(
    market: &MarketRun,
    base: &TheoryParams,
    k_range: (f64, f64),
    grid_size: usize,
) -> Result<FitResult, SimError> {
    market.convergence_time()?;
    let (surge, nonsurge) = market.demand_curves();
    fit_curves(&surge, &nonsurge, base, k_range, grid_size)
}

/// Fits each seed's run separately and returns the per-seed fits in seed order.
pub fn fit_k_seeds(
    params: &AgentParams,
    seeds: &[u64],
    k_range: (f64, f64),
    grid_size: usize,
) -> Result<Vec<FitResult>, SimError> {
    let base = theory_counterpart(params, 0.0);
    seeds
        .par_iter()
        .map(|&seed| {
            let run = simulate_market(&AgentParams { seed, ..*params });
            fit_k(&run, &base, k_range, grid_size)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub d_mean: f64,
    pub d_std: f64,
    /// Seed-averaged `100 * (gap_sa - gap_nsb) / gap_nsb` of time-averaged gaps.
    pub rel_diff_pct: f64,
    pub per_seed: Vec<f64>,
}

/// Relative difference (percent) between the time-averaged price gaps of two
/// fixed-horizon runs. Two all-zero runs compare as 0.
pub fn relative_gap_difference(strategic: &AgentParams, benchmark: &AgentParams) -> f64 {
    let sa = simulate_market_fixed(strategic).mean_gap();
    let nsb = simulate_market_fixed(benchmark).mean_gap();
    if sa == nsb {
        0.0
    } else {
        100.0 * (sa - nsb) / nsb
    }
}

/// Paired-seed SA vs NSB comparison for one cost distribution.
pub fn gap_improvement(params: &AgentParams, seeds: &[u64]) -> Vec<f64> {
    seeds
        .par_iter()
        .map(|&seed| {
            let sa = AgentParams {
                seed,
                strategic: true,
                ..*params
            };
            relative_gap_difference(&sa, &sa.non_strategic())
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One row per cost mean, one column per cost standard deviation.
pub fn heatmap(
    base: &AgentParams,
    mean_grid: &[f64],
    std_grid: &[f64],
    horizon: u32,
    seeds: &[u64],
) -> Vec<Vec<HeatmapCell>> {
    let cells: Vec<(f64, f64)> = mean_grid
        .iter()
        .flat_map(|&m| std_grid.iter().map(move |&s| (m, s)))
        .collect();
    let flat: Vec<HeatmapCell> = cells
        .par_iter()
        .map(|&(d_mean, d_std)| {
            let mut params = AgentParams { horizon, ..*base };
            params.cost_dist.mean = d_mean;
            params.cost_dist.std = d_std;
            let per_seed = gap_improvement(&params, seeds);
            HeatmapCell {
                d_mean,
                d_std,
                rel_diff_pct: mean(&per_seed),
                per_seed,
            }
        })
        .collect();
    flat.chunks(std_grid.len().max(1))
        .map(|row| row.to_vec())
        .collect()
}

/// Observed convergence quantities of a converged fluid trajectory against
/// the theoretical windows, with every broken guarantee listed.
pub fn audit_bounds(traj: &Trajectory) -> Result<BoundsReport, SimError> {
    let params = &traj.params;
    let (tau_s, tau_n) = convergence_times(traj)?;
    let peak = peak_time(traj)?;
    let s_bounds = tau_s_bounds(params);
    let n_bounds = tau_n_bounds(params);
    let surge_type = classify_surge(params);
    let mut violations = Vec::new();

    if !s_bounds.contains(tau_s) {
        violations.push(format!(
            "tau_s={tau_s} outside [{}, {}]",
            s_bounds.lower, s_bounds.upper
        ));
    }
    if !n_bounds.contains(tau_n) {
        violations.push(format!(
            "tau_n={tau_n} outside [{}, {}]",
            n_bounds.lower, n_bounds.upper
        ));
    }
    for w in traj.states.windows(2) {
        if w[1].d_s > w[0].d_s {
            violations.push(format!("surge demand rose at t={}", w[1].t));
            break;
        }
    }
    for w in traj.states.windows(2) {
        let rising = w[1].d_ns > w[0].d_ns;
        let before_peak = w[0].t < peak;
        if rising != before_peak {
            violations.push(format!(
                "non-surge demand not single-peaked at t={} (peak {peak})",
                w[1].t
            ));
            break;
        }
    }
    let clear_by = n_bounds.upper;
    if let Some(s) = traj.states.iter().find(|s| s.t == clear_by) {
        if s.total() > params.tol {
            violations.push(format!("total demand {} left at t={clear_by}", s.total()));
        }
    }
    let localized_by_peak = peak == 0;
    if localized_by_peak != (surge_type == SurgeType::Localized) {
        violations.push(format!("classified {surge_type:?} but peak at t={peak}"));
    }
    let capacity = params.excess_supply();
    if traj
        .states
        .iter()
        .take(peak as usize)
        .any(|s| movers(s, params) <= capacity)
    {
        violations.push("peak time is not the first qualifying step".to_string());
    }

    Ok(BoundsReport {
        tau_s_bounds: s_bounds,
        tau_n_bounds: n_bounds,
        tau_s_observed: tau_s,
        tau_n_observed: tau_n,
        peak_tau_observed: peak,
        surge_type,
        inversion_time: detect_inversion(traj),
        violations,
    })
}

/// A parameter that a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Mu,
    D0Surge,
    D0Nonsurge,
    K,
    CostMean,
    CostStd,
    WtpMean,
    WtpStd,
    LogitSensitivity,
    Cap,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Mu => "mu",
            SweepParam::D0Surge => "d0_surge",
            SweepParam::D0Nonsurge => "d0_nonsurge",
            SweepParam::K => "k",
            SweepParam::CostMean => "cost_mean",
            SweepParam::CostStd => "cost_std",
            SweepParam::WtpMean => "wtp_mean",
            SweepParam::WtpStd => "wtp_std",
            SweepParam::LogitSensitivity => "logit_sensitivity",
            SweepParam::Cap => "cap",
        }
    }

    const ALL: [SweepParam; 11] = [
        SweepParam::Lambda,
        SweepParam::Mu,
        SweepParam::D0Surge,
        SweepParam::D0Nonsurge,
        SweepParam::K,
        SweepParam::CostMean,
        SweepParam::CostStd,
        SweepParam::WtpMean,
        SweepParam::WtpStd,
        SweepParam::LogitSensitivity,
        SweepParam::Cap,
    ];

    /// `template` with this parameter set to `value`. The horizon is raised to
    /// the default for the new parameters when needed.
    pub fn apply_theory(
        &self,
        template: &TheoryParams,
        value: f64,
    ) -> Result<TheoryParams, String> {
        let mut p = *template;
        match self {
            SweepParam::Lambda => p.lambda = value,
            SweepParam::Mu => p.mu = value,
            SweepParam::D0Surge => p.d0_surge = value,
            SweepParam::D0Nonsurge => p.d0_nonsurge = value,
            SweepParam::K => p.k = value,
            other => {
                return Err(format!(
                    "{} does not apply to the fluid model",
                    other.name()
                ))
            }
        }
        p.validate().map_err(|e| e.to_string())?;
        p.horizon = p
            .horizon
            .max(default_horizon(p.lambda, p.mu, p.d0_surge, p.d0_nonsurge));
        Ok(p)
    }

    pub fn apply_market(&self, template: &AgentParams, value: f64) -> Result<AgentParams, String> {
        let mut p = *template;
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as u64)
            } else {
                Err(format!(
                    "{} must be a nonnegative integer (got {value})",
                    self.name()
                ))
            }
        };
        match self {
            SweepParam::Lambda => p.lambda = value,
            SweepParam::Mu => p.mu = value,
            SweepParam::D0Surge => p.d0_surge = count()?,
            SweepParam::D0Nonsurge => p.d0_nonsurge = count()?,
            SweepParam::K => return Err("k does not apply to the agent model".to_string()),
            SweepParam::CostMean => p.cost_dist.mean = value,
            SweepParam::CostStd => p.cost_dist.std = value,
            SweepParam::WtpMean => p.wtp_dist.mean = value,
            SweepParam::WtpStd => p.wtp_dist.std = value,
            SweepParam::LogitSensitivity => p.pricing.logit_sensitivity = value,
            SweepParam::Cap => p.pricing.cap = value,
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepParam::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown sweep parameter {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Result<BoundsReport, String>,
}

/// Audits the fluid model at each value. Invalid instantiations are reported
/// in place; the sweep continues.
pub fn sweep(template: &TheoryParams, param: SweepParam, values: &[f64]) -> Vec<SweepPoint> {
    values
        .par_iter()
        .map(|&value| {
            let report = param
                .apply_theory(template, value)
                .and_then(|p| audit_bounds(&simulate(&p)).map_err(|e| e.to_string()));
            SweepPoint { value, report }
        })
        .collect()
}

/// Seed-averaged summary of an SA run and its paired NSB run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSummary {
    /// Mean convergence step of the strategic runs.
    pub tau_sa: f64,
    pub tau_nsb: f64,
    pub mean_gap_sa: f64,
    pub mean_gap_nsb: f64,
    pub max_gap_sa: f64,
    pub max_gap_nsb: f64,
    /// Runs (of either kind) that hit the horizon without clearing.
    pub unconverged: usize,
}

pub fn summarize_market(params: &AgentParams, seeds: &[u64]) -> MarketSummary {
    let runs: Vec<(MarketRun, MarketRun)> = seeds
        .par_iter()
        .map(|&seed| {
            let sa = AgentParams {
                seed,
                strategic: true,
                ..*params
            };
            (simulate_market(&sa), simulate_market(&sa.non_strategic()))
        })
        .collect();
    let tau_sa: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.0.converged_at.map(f64::from))
        .collect();
    let tau_nsb: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.1.converged_at.map(f64::from))
        .collect();
    let max_gap = |run: &MarketRun| run.records.iter().map(|r| r.delta_p).fold(0.0, f64::max);
    MarketSummary {
        tau_sa: mean(&tau_sa),
        tau_nsb: mean(&tau_nsb),
        mean_gap_sa: mean(&runs.iter().map(|r| r.0.mean_gap()).collect::<Vec<_>>()),
        mean_gap_nsb: mean(&runs.iter().map(|r| r.1.mean_gap()).collect::<Vec<_>>()),
        max_gap_sa: mean(&runs.iter().map(|r| max_gap(&r.0)).collect::<Vec<_>>()),
        max_gap_nsb: mean(&runs.iter().map(|r| max_gap(&r.1)).collect::<Vec<_>>()),
        unconverged: runs
            .iter()
            .map(|(a, b)| a.converged_at.is_none() as usize + b.converged_at.is_none() as usize)
            .sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSweepPoint {
    pub value: f64,
    pub summary: Result<MarketSummary, String>,
}

pub fn sweep_market(
    template: &AgentParams,
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> Vec<MarketSweepPoint> {
    values
        .iter()
        .map(|&value| MarketSweepPoint {
            value,
            summary: param
                .apply_market(template, value)
                .map(|p| summarize_market(&p, seeds)),
        })
        .collect()
}

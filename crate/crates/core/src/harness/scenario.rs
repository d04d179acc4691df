use serde::{Deserialize, Serialize};

use crate::analysis::SweepParam;
use crate::dynamics::{default_horizon, SurgeType, TheoryParams, DEFAULT_TOL};
use crate::market::{AgentParams, PricingConfig, TruncatedNormalSpec};
use crate::stochastic::{ArrivalKind, ArrivalProcess, StochasticParams};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Theory,
    Stochastic,
    Agent,
    AgentNsb,
}

impl Model {
    fn name(&self) -> &'static str {
        match self {
            Model::Theory => "theory",
            Model::Stochastic => "stochastic",
            Model::Agent => "agent",
            Model::AgentNsb => "agent_nsb",
        }
    }

    pub fn is_agent(&self) -> bool {
        matches!(self, Model::Agent | Model::AgentNsb)
    }
}

/// Seeds used by multi-seed commands when a scenario gives none.
pub const DEFAULT_SEED_COUNT: u64 = 5;

/// One experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: Model,
    pub lambda: f64,
    pub mu: f64,
    pub d0_surge: f64,
    pub d0_nonsurge: f64,
    pub k: Option<f64>,
    pub horizon: Option<u32>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub arrivals: Option<ArrivalKind>,
    pub cost_mean: Option<f64>,
    pub cost_std: Option<f64>,
    pub wtp_mean: Option<f64>,
    pub wtp_std: Option<f64>,
    pub logit_sensitivity: Option<f64>,
    pub base_price: Option<f64>,
    pub cap: Option<f64>,
    pub expect: Option<Expect>,
    pub sweep: Option<SweepSpec>,
    pub fit: Option<FitSpec>,
    pub heatmap: Option<HeatmapSpec>,
}

/// Acceptance numbers embedded in a scenario. Each command checks the
/// entries that concern its output and ignores the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub converged: Option<bool>,
    pub tau_s: Option<u32>,
    pub tau_n: Option<u32>,
    pub peak_tau: Option<u32>,
    pub tau_s_window: Option<[u32; 2]>,
    pub tau_n_window: Option<[u32; 2]>,
    pub surge_type: Option<SurgeType>,
    pub inversion_time: Option<u32>,
    pub no_inversion: Option<bool>,
    pub no_violations: Option<bool>,
    /// Agent convergence step of the single-seed run.
    pub tau_window: Option<[u32; 2]>,
    /// Seed-averaged fitted k.
    pub k_window: Option<[f64; 2]>,
    /// Window for every heatmap cell's seed-averaged relative difference.
    pub rel_diff_window: Option<[f64; 2]>,
    /// Every seed of every cell shows a strictly negative relative difference.
    pub all_negative: Option<bool>,
    /// Relative difference non-decreasing in the cost mean for each std.
    pub improvement_decreases_with_cost_mean: Option<bool>,
    pub surge_types: Option<Vec<SurgeType>>,
    /// Direction of convergence time along the sweep values.
    pub tau_trend: Option<Trend>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "FitSpec::default_k_min")]
    pub k_min: f64,
    #[serde(default = "FitSpec::default_k_max")]
    pub k_max: f64,
    #[serde(default = "FitSpec::default_grid_size")]
    pub grid_size: usize,
}

impl FitSpec {
    fn default_k_min() -> f64 {
        1e-4
    }
    fn default_k_max() -> f64 {
        1e-2
    }
    fn default_grid_size() -> usize {
        100
    }
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            k_min: Self::default_k_min(),
            k_max: Self::default_k_max(),
            grid_size: Self::default_grid_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSpec {
    pub cost_means: Vec<f64>,
    pub cost_stds: Vec<f64>,
}

/// Parses and validates a scenario, reporting every problem found.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let scenario: Scenario = toml::from_str(text)
        .map_err(|e| HarnessError::Validation(vec![e.message().to_string()]))?;
    scenario.validate()?;
    Ok(scenario)
}

fn missing(field: &str, model: Model) -> String {
    format!(
        "missing required field `{field}` for model {}",
        model.name()
    )
}

impl Scenario {
    fn present(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("k", self.k.is_some()),
            ("tol", self.tol.is_some()),
            ("seed", self.seed.is_some()),
            ("seeds", self.seeds.is_some()),
            ("arrivals", self.arrivals.is_some()),
            ("cost_mean", self.cost_mean.is_some()),
            ("cost_std", self.cost_std.is_some()),
            ("wtp_mean", self.wtp_mean.is_some()),
            ("wtp_std", self.wtp_std.is_some()),
            ("logit_sensitivity", self.logit_sensitivity.is_some()),
            ("base_price", self.base_price.is_some()),
            ("cap", self.cap.is_some()),
            ("fit", self.fit.is_some()),
            ("heatmap", self.heatmap.is_some()),
        ]
    }

    fn inapplicable(&self) -> &'static [&'static str] {
        match self.model {
            Model::Theory => &[
                "seed",
                "seeds",
                "arrivals",
                "cost_mean",
                "cost_std",
                "wtp_mean",
                "wtp_std",
                "logit_sensitivity",
                "base_price",
                "cap",
                "fit",
                "heatmap",
            ],
            Model::Stochastic => &[
                "cost_mean",
                "cost_std",
                "wtp_mean",
                "wtp_std",
                "logit_sensitivity",
                "base_price",
                "cap",
                "fit",
                "heatmap",
            ],
            Model::Agent | Model::AgentNsb => &["k", "tol", "arrivals"],
        }
    }

    /// Every field-level problem, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .present()
            .into_iter()
            .filter(|(field, set)| *set && self.inapplicable().contains(field))
            .map(|(field, _)| {
                format!(
                    "field `{field}` does not apply to model {}",
                    self.model.name()
                )
            })
            .collect();
        if self.name.trim().is_empty() {
            out.push("requires a non-empty name".to_string());
        }
        match self.model {
            Model::Theory | Model::Stochastic => match self.theory_params() {
                Ok(_) => {}
                Err(errs) => out.extend(errs),
            },
            Model::Agent | Model::AgentNsb => match self.agent_params(self.base_seed()) {
                Ok(_) => {}
                Err(errs) => out.extend(errs),
            },
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                out.push("requires `seeds` to be non-empty".to_string());
            }
        }
        if let Some(sweep) = &self.sweep {
            if let Err(e) = sweep.param.parse::<SweepParam>() {
                out.push(e);
            }
            if sweep.values.is_empty() {
                out.push("requires sweep.values to be non-empty".to_string());
            }
        }
        if let Some(fit) = &self.fit {
            if !(fit.k_min >= 0.0 && fit.k_max > fit.k_min) {
                out.push(format!(
                    "requires 0 <= fit.k_min < fit.k_max (got {}, {})",
                    fit.k_min, fit.k_max
                ));
            }
            if fit.grid_size < 2 {
                out.push(format!(
                    "requires fit.grid_size >= 2 (got {})",
                    fit.grid_size
                ));
            }
        }
        if let Some(h) = &self.heatmap {
            if h.cost_means.is_empty() || h.cost_stds.is_empty() {
                out.push("requires non-empty heatmap.cost_means and heatmap.cost_stds".to_string());
            }
            for &m in &h.cost_means {
                if let Err(e) = TruncatedNormalSpec::new(m, 1.0) {
                    out.push(format!("heatmap.cost_means: {e}"));
                }
            }
            for &s in &h.cost_stds {
                if let Err(e) = TruncatedNormalSpec::new(0.0, s) {
                    out.push(format!("heatmap.cost_stds: {e}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(errs))
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Seeds for multi-seed commands: the explicit list, or consecutive
    /// seeds starting at the base seed.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => {
                let start = self.base_seed();
                (start..start + DEFAULT_SEED_COUNT).collect()
            }
        }
    }

    /// Replaces the base seed. An explicit seed list keeps its length but is
    /// renumbered from the new seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        if let Some(seeds) = &self.seeds {
            self.seeds = Some((seed..seed + seeds.len() as u64).collect());
        }
        self
    }

    pub fn theory_params(&self) -> Result<TheoryParams, Vec<String>> {
        let k = self.k.ok_or_else(|| vec![missing("k", self.model)])?;
        let mut p = TheoryParams {
            lambda: self.lambda,
            mu: self.mu,
            d0_surge: self.d0_surge,
            d0_nonsurge: self.d0_nonsurge,
            k,
            horizon: self.horizon.unwrap_or(1),
            tol: self.tol.unwrap_or(DEFAULT_TOL),
        };
        let errs: Vec<String> = p.violations().iter().map(|e| e.to_string()).collect();
        if !errs.is_empty() {
            return Err(errs);
        }
        if self.horizon.is_none() {
            p.horizon = default_horizon(p.lambda, p.mu, p.d0_surge, p.d0_nonsurge);
        }
        Ok(p)
    }

    pub fn stochastic_params(&self, seed: u64) -> Result<StochasticParams, Vec<String>> {
        let base = self.theory_params()?;
        let kind = self.arrivals.unwrap_or(ArrivalKind::Poisson);
        Ok(StochasticParams {
            base,
            demand: ArrivalProcess {
                kind,
                mean: base.lambda,
            },
            supply: ArrivalProcess {
                kind,
                mean: base.mu,
            },
            seed,
        })
    }

    pub fn agent_params(&self, seed: u64) -> Result<AgentParams, Vec<String>> {
        let mut errs = Vec::new();
        let mut count = |field: &str, value: f64| {
            if value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64 {
                value as u64
            } else {
                errs.push(format!(
                    "requires {field} to be a nonnegative integer for agent models (got {value})"
                ));
                0
            }
        };
        let d0_surge = count("d0_surge", self.d0_surge);
        let d0_nonsurge = count("d0_nonsurge", self.d0_nonsurge);

        let nsb = self.model == Model::AgentNsb;
        let mut required = |field: &str, value: Option<f64>, nsb_default: f64| match value {
            Some(v) => v,
            None if nsb && field.starts_with("cost") => nsb_default,
            None => {
                errs.push(missing(field, self.model));
                f64::NAN
            }
        };
        let cost_dist = TruncatedNormalSpec {
            mean: required("cost_mean", self.cost_mean, f64::INFINITY),
            std: required("cost_std", self.cost_std, 1.0),
        };
        let wtp_dist = TruncatedNormalSpec {
            mean: required("wtp_mean", self.wtp_mean, 0.0),
            std: required("wtp_std", self.wtp_std, 0.0),
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        let defaults = PricingConfig::default();
        let params = AgentParams {
            lambda: self.lambda,
            mu: self.mu,
            d0_surge,
            d0_nonsurge,
            horizon: self.horizon.unwrap_or_else(|| {
                default_horizon(self.lambda, self.mu, self.d0_surge, self.d0_nonsurge)
            }),
            seed,
            cost_dist,
            wtp_dist,
            pricing: PricingConfig {
                logit_sensitivity: self.logit_sensitivity.unwrap_or(defaults.logit_sensitivity),
                base_price: self.base_price.unwrap_or(defaults.base_price),
                cap: self.cap.unwrap_or(defaults.cap),
            },
            strategic: !nsb,
        };
        // Distribution messages only say `mean`/`std`, so they are labelled here.
        let unit = TruncatedNormalSpec {
            mean: 1.0,
            std: 1.0,
        };
        let mut errs: Vec<String> = AgentParams {
            cost_dist: unit,
            wtp_dist: unit,
            ..params
        }
        .violations()
        .iter()
        .map(|e| e.to_string())
        .collect();
        for (label, dist) in [("cost", &params.cost_dist), ("wtp", &params.wtp_dist)] {
            if let Err(e) = dist.validate() {
                errs.push(format!("{label}: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(params)
        } else {
            Err(errs)
        }
    }
}

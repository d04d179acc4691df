//! Fluid model driven by random per-step arrivals of riders and drivers.

use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, DemandState, TheoryParams, Trajectory};
use crate::error::ParamError;
use crate::sampling::{poisson, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    Deterministic,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcess {
    pub kind: ArrivalKind,
    /// Mean arrivals per step.
    pub mean: f64,
}

impl ArrivalProcess {
    pub fn poisson(mean: f64) -> Self {
        ArrivalProcess {
            kind: ArrivalKind::Poisson,
            mean,
        }
    }

    pub fn deterministic(mean: f64) -> Self {
        ArrivalProcess {
            kind: ArrivalKind::Deterministic,
            mean,
        }
    }
}

/// One step's arrival count. Deterministic processes return the rounded mean.
pub fn sample_arrivals(process: &ArrivalProcess, rng: &mut Stream) -> u64 {
    match process.kind {
        ArrivalKind::Deterministic => process.mean.round().max(0.0) as u64,
        ArrivalKind::Poisson => poisson(process.mean, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticParams {
    pub base: TheoryParams,
    pub demand: ArrivalProcess,
    pub supply: ArrivalProcess,
    pub seed: u64,
}

impl StochasticParams {
    /// Poisson demand and supply with the base model's means.
    pub fn poisson(base: TheoryParams, seed: u64) -> Self {
        StochasticParams {
            base,
            demand: ArrivalProcess::poisson(base.lambda),
            supply: ArrivalProcess::poisson(base.mu),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.base.validate()?;
        for (field, process, expected) in [
            ("demand.mean", &self.demand, self.base.lambda),
            ("supply.mean", &self.supply, self.base.mu),
        ] {
            if process.mean != expected {
                return Err(ParamError::Mismatch {
                    field,
                    expected,
                    value: process.mean,
                });
            }
        }
        Ok(())
    }
}

/// Stream ids, one per (zone, flow) pair.
const SURGE_DEMAND: u64 = 0;
const SURGE_SUPPLY: u64 = 1;
const NONSURGE_DEMAND: u64 = 2;
const NONSURGE_SUPPLY: u64 = 3;

struct ZoneStreams {
    demand: Stream,
    supply: Stream,
}

impl ZoneStreams {
    fn net(&mut self, params: &StochasticParams) -> f64 {
        let arrived = sample_arrivals(&params.demand, &mut self.demand) as f64;
        let served = sample_arrivals(&params.supply, &mut self.supply) as f64;
        arrived - served
    }
}

/// Same recursion as [`crate::dynamics::simulate`], with each zone's arrivals
/// and supply redrawn every step. The move rate still normalises by the mean
/// supply.
pub fn simulate_stochastic(params: &StochasticParams) -> Trajectory {
    let base = &params.base;
    let mut surge = ZoneStreams {
        demand: stream(params.seed, SURGE_DEMAND),
        supply: stream(params.seed, SURGE_SUPPLY),
    };
    let mut nonsurge = ZoneStreams {
        demand: stream(params.seed, NONSURGE_DEMAND),
        supply: stream(params.seed, NONSURGE_SUPPLY),
    };
    let mut states = vec![DemandState::initial(base)];
    let mut current = states[0];
    while !current.is_cleared(base.tol) && current.t < base.horizon {
        let net_s = surge.net(params);
        let net_ns = nonsurge.net(params);
        current = advance(&current, base, net_s, net_ns);
        states.push(current);
    }
    Trajectory {
        params: *base,
        converged: current.is_cleared(base.tol),
        states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{convergence_times, simulate};

    fn base(k: f64) -> TheoryParams {
        TheoryParams::new(30.0, 50.0, 1000.0, 200.0, k).unwrap()
    }

    #[test]
    fn deterministic_process_returns_rounded_mean() {
        let mut rng = stream(0, 0);
        assert_eq!(
            sample_arrivals(&ArrivalProcess::deterministic(30.0), &mut rng),
            30
        );
        assert_eq!(
            sample_arrivals(&ArrivalProcess::deterministic(29.6), &mut rng),
            30
        );
        assert_eq!(sample_arrivals(&ArrivalProcess::poisson(0.0), &mut rng), 0);
    }

    #[test]
    fn poisson_sample_mean_within_three_standard_errors() {
        let mut rng = stream(2024, 9);
        let process = ArrivalProcess::poisson(30.0);
        let n = 100_000;
        let total: u64 = (0..n).map(|_| sample_arrivals(&process, &mut rng)).sum();
        let mean = total as f64 / n as f64;
        assert!(
            (mean - 30.0).abs() <= 3.0 * (30.0f64 / n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn deterministic_processes_reduce_to_core_model() {
        for k in [0.005, 0.001, 0.05] {
            let b = base(k);
            let p = StochasticParams {
                base: b,
                demand: ArrivalProcess::deterministic(b.lambda),
                supply: ArrivalProcess::deterministic(b.mu),
                seed: 99,
            };
            assert_eq!(simulate_stochastic(&p), simulate(&b));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = StochasticParams::poisson(base(0.005), 17);
        assert_eq!(simulate_stochastic(&p), simulate_stochastic(&p));
        let q = StochasticParams { seed: 18, ..p };
        assert_ne!(
            simulate_stochastic(&p).states,
            simulate_stochastic(&q).states
        );
    }

    #[test]
    fn spillover_realisation_lands_in_window() {
        let traj = simulate_stochastic(&StochasticParams::poisson(base(0.005), 5));
        assert!(traj.converged);
        let (ts, _) = convergence_times(&traj).unwrap();
        assert!((8..=100).contains(&ts), "{ts}");
        assert!(traj.states.iter().all(|s| s.d_s >= 0.0 && s.d_ns >= 0.0));
    }

    #[test]
    fn mismatched_means_are_rejected() {
        let mut p = StochasticParams::poisson(base(0.005), 1);
        p.supply.mean = 40.0;
        assert!(matches!(
            p.validate(),
            Err(ParamError::Mismatch {
                field: "supply.mean",
                ..
            })
        ));
    }
}

//! Deterministic fluid model of unmet demand in a surge zone and its
//! surrounding non-surge zone.
//!
//! Each step, the surge zone loses `f(D_s - D_ns) * D_s` waiting riders to the
//! non-surge zone, and both zones clear `mu - lambda` riders net of new
//! arrivals. Demands are clamped at zero. The move-rate function `f` is the
//! linear form `k x / mu`, clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, ParamError, SimError};

/// Default zero-detection tolerance for fluid demands.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Parameters of the two-zone fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Rider arrivals per step, per zone.
    pub lambda: f64,
    /// Driver arrivals per step, per zone.
    pub mu: f64,
    /// Initial unmet demand in the surge zone.
    pub d0_surge: f64,
    /// Initial unmet demand in the non-surge zone.
    pub d0_nonsurge: f64,
    /// Move-rate multiplier.
    pub k: f64,
    /// Maximum number of steps simulated.
    pub horizon: u32,
    pub tol: f64,
}

impl TheoryParams {
    /// Builds validated parameters with the default horizon and tolerance.
    pub fn new(
        lambda: f64,
        mu: f64,
        d0_surge: f64,
        d0_nonsurge: f64,
        k: f64,
    ) -> Result<Self, ParamError> {
        let mut p = TheoryParams {
            lambda,
            mu,
            d0_surge,
            d0_nonsurge,
            k,
            horizon: 1,
            tol: DEFAULT_TOL,
        };
        p.validate()?;
        p.horizon = default_horizon(lambda, mu, d0_surge, d0_nonsurge);
        Ok(p)
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Net per-step clearing capacity of one zone, `mu - lambda`.
    pub fn excess_supply(&self) -> f64 {
        self.mu - self.lambda
    }

    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<ParamError> {
        let mut out = Vec::new();
        check_nonneg("lambda", self.lambda, &mut out);
        check_nonneg("mu", self.mu, &mut out);
        check_nonneg("d0_surge", self.d0_surge, &mut out);
        check_nonneg("d0_nonsurge", self.d0_nonsurge, &mut out);
        check_nonneg("k", self.k, &mut out);
        check_nonneg("tol", self.tol, &mut out);
        if self.lambda.is_finite() && self.mu.is_finite() && self.lambda >= self.mu {
            out.push(ParamError::SupplyNotAboveDemand {
                lambda: self.lambda,
                mu: self.mu,
            });
        }
        if self.d0_surge < self.d0_nonsurge {
            out.push(ParamError::SurgeBelowNonSurge {
                d0_surge: self.d0_surge,
                d0_nonsurge: self.d0_nonsurge,
            });
        }
        if self.horizon == 0 {
            out.push(ParamError::ZeroHorizon);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Ten times the step count within which all demand is guaranteed to clear.
pub fn default_horizon(lambda: f64, mu: f64, d0_surge: f64, d0_nonsurge: f64) -> u32 {
    let clear = ((d0_surge + d0_nonsurge) / (mu - lambda)).ceil();
    if clear.is_finite() && clear >= 0.0 {
        ((10.0 * clear) as u32).max(1)
    } else {
        1
    }
}

/// Unmet demands at the end of step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandState {
    pub t: u32,
    pub d_s: f64,
    pub d_ns: f64,
}

impl DemandState {
    pub fn initial(params: &TheoryParams) -> Self {
        DemandState {
            t: 0,
            d_s: params.d0_surge,
            d_ns: params.d0_nonsurge,
        }
    }

    pub fn total(&self) -> f64 {
        self.d_s + self.d_ns
    }

    pub fn is_cleared(&self, tol: f64) -> bool {
        self.d_s <= tol && self.d_ns <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: TheoryParams,
    pub states: Vec<DemandState>,
    pub converged: bool,
}

impl Trajectory {
    pub fn surge(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.d_s)
    }

    pub fn nonsurge(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.d_ns)
    }

    pub fn last(&self) -> &DemandState {
        self.states
            .last()
            .expect("trajectory always holds the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeType {
    /// Non-surge demand never rises.
    Localized,
    /// Non-surge demand rises to a single peak before draining.
    SpillOver,
}

/// Closed integer interval of step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWindow {
    pub lower: u32,
    pub upper: u32,
}

impl StepWindow {
    pub fn contains(&self, t: u32) -> bool {
        self.lower <= t && t <= self.upper
    }
}

/// Theoretical convergence windows alongside what a trajectory showed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub tau_s_bounds: StepWindow,
    pub tau_n_bounds: StepWindow,
    pub tau_s_observed: u32,
    pub tau_n_observed: u32,
    pub peak_tau_observed: u32,
    pub surge_type: SurgeType,
    pub inversion_time: Option<u32>,
    /// Human-readable descriptions of any broken guarantee; empty when all hold.
    pub violations: Vec<String>,
}

/// Fraction of waiting surge riders who move this step, given the demand
/// differential `x = D_s - D_ns`.
pub fn move_fraction(x: f64, params: &TheoryParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (params.k * x / params.mu).clamp(0.0, 1.0)
}

/// Riders moving out of the surge zone from `state`.
pub fn movers(state: &DemandState, params: &TheoryParams) -> f64 {
    move_fraction(state.d_s - state.d_ns, params) * state.d_s
}

/// One step with explicit net inflows (`arrivals - supply`) per zone.
pub(crate) fn advance(
    state: &DemandState,
    params: &TheoryParams,
    net_surge: f64,
    net_nonsurge: f64,
) -> DemandState {
    let moved = movers(state, params);
    DemandState {
        t: state.t + 1,
        d_s: (state.d_s + net_surge - moved).max(0.0),
        d_ns: (state.d_ns + net_nonsurge + moved).max(0.0),
    }
}

pub fn step(state: &DemandState, params: &TheoryParams) -> DemandState {
    let net = params.lambda - params.mu;
    advance(state, params, net, net)
}

/// Iterates [`step`] from the boundary conditions until both demands are
/// within `tol` of zero or the horizon is reached.
pub fn simulate(params: &TheoryParams) -> Trajectory {
    let mut states = vec![DemandState::initial(params)];
    let mut current = states[0];
    while !current.is_cleared(params.tol) && current.t < params.horizon {
        current = step(&current, params);
        states.push(current);
    }
    Trajectory {
        params: *params,
        converged: current.is_cleared(params.tol),
        states,
    }
}

fn first_zero(traj: &Trajectory, pick: impl Fn(&DemandState) -> f64) -> Option<u32> {
    traj.states
        .iter()
        .find(|s| pick(s) <= traj.params.tol)
        .map(|s| s.t)
}

/// First steps at which the surge and non-surge demands reach zero.
pub fn convergence_times(traj: &Trajectory) -> Result<(u32, u32), SimError> {
    let not_converged = SimError::NotConverged {
        horizon: traj.params.horizon,
    };
    if !traj.converged {
        return Err(not_converged);
    }
    match (first_zero(traj, |s| s.d_s), first_zero(traj, |s| s.d_ns)) {
        (Some(ts), Some(tn)) => Ok((ts, tn)),
        _ => Err(not_converged),
    }
}

/// First step at which the outflow of movers no longer exceeds the excess
/// supply. Non-surge demand rises strictly before it and never after.
pub fn peak_time(traj: &Trajectory) -> Result<u32, SimError> {
    let params = &traj.params;
    let capacity = params.excess_supply();
    traj.states
        .iter()
        .find(|s| movers(s, params) <= capacity)
        .map(|s| s.t)
        .ok_or(SimError::NotConverged {
            horizon: params.horizon,
        })
}

fn floor_ratio(num: f64, den: f64) -> u32 {
    if num <= 0.0 {
        0
    } else {
        (num / den).floor() as u32
    }
}

fn ceil_ratio(num: f64, den: f64) -> u32 {
    if num <= 0.0 {
        0
    } else {
        (num / den).ceil() as u32
    }
}

/// Window for the surge clearing time: no faster than the first step's
/// combined clearing rate, no slower than clearing by excess supply alone.
pub fn tau_s_bounds(params: &TheoryParams) -> StepWindow {
    let d0 = params.d0_surge;
    let g = params.excess_supply();
    let fastest = g + d0 * move_fraction(d0, params);
    StepWindow {
        lower: floor_ratio(d0, fastest),
        upper: ceil_ratio(d0, g),
    }
}

/// Window for the non-surge clearing time.
pub fn tau_n_bounds(params: &TheoryParams) -> StepWindow {
    let g = params.excess_supply();
    StepWindow {
        lower: floor_ratio(params.d0_nonsurge, g),
        upper: ceil_ratio(params.d0_surge + params.d0_nonsurge, g),
    }
}

/// Localized iff the initial outflow of movers can be absorbed by the
/// non-surge zone's excess supply.
pub fn classify_surge(params: &TheoryParams) -> SurgeType {
    let initial = params.d0_surge * move_fraction(params.d0_surge - params.d0_nonsurge, params);
    if initial <= params.excess_supply() {
        SurgeType::Localized
    } else {
        SurgeType::SpillOver
    }
}

/// First step at which non-surge demand strictly exceeds surge demand.
pub fn detect_inversion(traj: &Trajectory) -> Option<u32> {
    traj.states.iter().find(|s| s.d_ns > s.d_s).map(|s| s.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d0: f64, d0n: f64, k: f64) -> TheoryParams {
        TheoryParams::new(30.0, 50.0, d0, d0n, k).unwrap()
    }

    #[test]
    fn move_fraction_examples() {
        let p = params(1000.0, 200.0, 0.005);
        assert_eq!(move_fraction(-100.0, &p), 0.0);
        assert_eq!(move_fraction(0.0, &p), 0.0);
        assert_relative_eq!(move_fraction(800.0, &p), 0.08, max_relative = 1e-12);
        assert_eq!(move_fraction(1e9, &p), 1.0);
    }

    #[test]
    fn step_examples() {
        let p = params(1000.0, 200.0, 0.005);
        let zero = DemandState {
            t: 0,
            d_s: 0.0,
            d_ns: 0.0,
        };
        let next = step(&zero, &p);
        assert_eq!((next.t, next.d_s, next.d_ns), (1, 0.0, 0.0));

        let s = DemandState {
            t: 0,
            d_s: 1000.0,
            d_ns: 200.0,
        };
        let next = step(&s, &p);
        assert_relative_eq!(next.d_s, 900.0, max_relative = 1e-12);
        assert_relative_eq!(next.d_ns, 260.0, max_relative = 1e-12);

        let p = params(1000.0, 300.0, 0.05);
        let s = DemandState {
            t: 0,
            d_s: 1000.0,
            d_ns: 300.0,
        };
        let next = step(&s, &p);
        assert_relative_eq!(next.d_s, 280.0, max_relative = 1e-12);
        assert_relative_eq!(next.d_ns, 980.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_start_is_converged_immediately() {
        let traj = simulate(&params(0.0, 0.0, 0.005));
        assert!(traj.converged);
        assert_eq!(traj.states.len(), 1);
        assert_eq!(convergence_times(&traj).unwrap(), (0, 0));
        assert_eq!(detect_inversion(&traj), None);
        assert_eq!(
            tau_s_bounds(&traj.params),
            StepWindow { lower: 0, upper: 0 }
        );
        assert_eq!(
            tau_n_bounds(&traj.params),
            StepWindow { lower: 0, upper: 0 }
        );
    }

    #[test]
    fn short_horizon_reports_non_convergence() {
        let p = params(1000.0, 200.0, 0.005).with_horizon(5);
        let traj = simulate(&p);
        assert!(!traj.converged);
        assert_eq!(traj.states.len(), 6);
        assert!(matches!(
            convergence_times(&traj),
            Err(SimError::NotConverged { horizon: 5 })
        ));
    }

    #[test]
    fn bounds_examples() {
        let p = params(1000.0, 200.0, 0.005);
        assert_eq!(
            tau_s_bounds(&p),
            StepWindow {
                lower: 8,
                upper: 50
            }
        );
        assert_eq!(
            tau_n_bounds(&p),
            StepWindow {
                lower: 10,
                upper: 60
            }
        );
        let p = params(1000.0, 200.0, 0.0);
        assert_eq!(
            tau_s_bounds(&p),
            StepWindow {
                lower: 50,
                upper: 50
            }
        );
        let p = params(1010.0, 200.0, 0.0);
        assert_eq!(
            tau_s_bounds(&p),
            StepWindow {
                lower: 50,
                upper: 51
            }
        );
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(
            classify_surge(&params(1000.0, 200.0, 0.005)),
            SurgeType::SpillOver
        );
        assert_eq!(
            classify_surge(&params(1000.0, 200.0, 0.001)),
            SurgeType::Localized
        );
        // 100 * (0.1 * 100 / 50) = 20 = mu - lambda exactly.
        let p = params(100.0, 0.0, 0.1);
        assert_eq!(100.0 * move_fraction(100.0, &p), 20.0);
        assert_eq!(classify_surge(&p), SurgeType::Localized);
    }

    #[test]
    fn peak_time_examples() {
        let traj = simulate(&params(1000.0, 200.0, 0.001));
        assert_eq!(peak_time(&traj).unwrap(), 0);

        let traj = simulate(&params(1000.0, 300.0, 0.05));
        assert_eq!(peak_time(&traj).unwrap(), 1);
        // at t=1 the 280 remaining riders see a negative differential
        assert_eq!(movers(&traj.states[1], &traj.params), 0.0);

        let traj = simulate(&params(1000.0, 200.0, 0.005));
        let tau = peak_time(&traj).unwrap();
        let max = traj.nonsurge().fold(f64::MIN, f64::max);
        assert_eq!(traj.states[tau as usize].d_ns, max);
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(
            detect_inversion(&simulate(&params(1000.0, 300.0, 0.05))),
            Some(1)
        );
        assert_eq!(
            detect_inversion(&simulate(&params(1000.0, 200.0, 0.001))),
            None
        );
    }

    #[test]
    fn no_walking_drains_linearly() {
        let traj = simulate(&params(1000.0, 200.0, 0.0));
        assert_eq!(convergence_times(&traj).unwrap(), (50, 10));
    }

    #[test]
    fn validation_names_the_rule() {
        let err = TheoryParams::new(30.0, 30.0, 1000.0, 200.0, 0.005).unwrap_err();
        assert!(err.to_string().contains("requires lambda < mu"));
        let err = TheoryParams::new(30.0, 50.0, 100.0, 200.0, 0.005).unwrap_err();
        assert!(matches!(err, ParamError::SurgeBelowNonSurge { .. }));
        let err = TheoryParams::new(30.0, 50.0, 100.0, 20.0, -1.0).unwrap_err();
        assert!(matches!(err, ParamError::Negative { field: "k", .. }));
    }
}

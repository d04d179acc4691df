//! Agent-based two-zone market with strategic riders and logit drivers.
//!
//! Riders carry a willingness to pay and a fixed cost of walking out of the
//! surge zone. The platform sets the price gap that would equalise demand per
//! driver across zones; drivers then pick a zone by multinomial logit. With
//! `strategic = false` riders never move (the non-strategic benchmark).

mod pricing;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, ParamError, SimError};
use crate::sampling::{poisson, stream, Stream};
use rand::Rng;

pub use crate::sampling::TruncatedNormalSpec;
pub use pricing::{driver_split, price_gap, rider_moves, PricingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Surge,
    NonSurge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderAgent {
    pub id: u64,
    pub arrived_at: u32,
    /// Highest price the rider accepts.
    pub wtp: f64,
    /// Cost of walking from the surge to the non-surge zone.
    pub move_cost: f64,
    pub zone: Zone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub lambda: f64,
    pub mu: f64,
    pub d0_surge: u64,
    pub d0_nonsurge: u64,
    pub horizon: u32,
    pub seed: u64,
    pub cost_dist: TruncatedNormalSpec,
    pub wtp_dist: TruncatedNormalSpec,
    pub pricing: PricingConfig,
    /// `false` disables rider movement.
    pub strategic: bool,
}

impl AgentParams {
    pub fn violations(&self) -> Vec<ParamError> {
        let mut out = Vec::new();
        check_nonneg("lambda", self.lambda, &mut out);
        check_nonneg("mu", self.mu, &mut out);
        if self.lambda.is_finite() && self.mu.is_finite() && self.lambda >= self.mu {
            out.push(ParamError::SupplyNotAboveDemand {
                lambda: self.lambda,
                mu: self.mu,
            });
        }
        if self.d0_surge < self.d0_nonsurge {
            out.push(ParamError::SurgeBelowNonSurge {
                d0_surge: self.d0_surge as f64,
                d0_nonsurge: self.d0_nonsurge as f64,
            });
        }
        if self.horizon == 0 {
            out.push(ParamError::ZeroHorizon);
        }
        out.extend(self.cost_dist.validate().err());
        out.extend(self.wtp_dist.validate().err());
        out.extend(self.pricing.validate().err());
        out
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Drivers arriving per step across both zones.
    pub fn total_supply(&self) -> f64 {
        2.0 * self.mu
    }

    /// The same market with rider movement switched off.
    pub fn non_strategic(&self) -> Self {
        AgentParams {
            strategic: false,
            ..*self
        }
    }
}

/// Per-step outcome. Demands are at the end of the step; prices are the ones
/// quoted at its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStepRecord {
    pub t: u32,
    pub d_s: u64,
    pub d_ns: u64,
    pub p_s: f64,
    pub p_ns: f64,
    pub delta_p: f64,
    /// Drivers that went to each zone.
    pub r_s: u64,
    pub r_ns: u64,
    pub moved: u64,
    pub matched_s: u64,
    pub matched_ns: u64,
    pub arrived_s: u64,
    pub arrived_ns: u64,
}

const ARRIVALS_S: u64 = 10;
const ARRIVALS_NS: u64 = 11;
const WTP_S: u64 = 12;
const WTP_NS: u64 = 13;
const COST_S: u64 = 14;
const COST_NS: u64 = 15;
const DRIVER_COUNT: u64 = 16;
const DRIVER_CHOICE: u64 = 17;

/// The random streams of one market run. Each zone draws arrivals and rider
/// attributes from its own streams.
pub struct MarketStreams {
    arrivals: [Stream; 2],
    wtp: [Stream; 2],
    cost: [Stream; 2],
    driver_count: Stream,
    driver_choice: Stream,
}

impl MarketStreams {
    pub fn new(seed: u64) -> Self {
        MarketStreams {
            arrivals: [stream(seed, ARRIVALS_S), stream(seed, ARRIVALS_NS)],
            wtp: [stream(seed, WTP_S), stream(seed, WTP_NS)],
            cost: [stream(seed, COST_S), stream(seed, COST_NS)],
            driver_count: stream(seed, DRIVER_COUNT),
            driver_choice: stream(seed, DRIVER_CHOICE),
        }
    }
}

fn zone_index(zone: Zone) -> usize {
    match zone {
        Zone::Surge => 0,
        Zone::NonSurge => 1,
    }
}

/// Riders waiting in each zone, in FIFO order by arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub t: u32,
    pub surge: Vec<RiderAgent>,
    pub nonsurge: Vec<RiderAgent>,
    next_id: u64,
}

impl MarketState {
    /// The initial backlog: `d0_surge` and `d0_nonsurge` riders at `t = 0`.
    pub fn initial(params: &AgentParams, streams: &mut MarketStreams) -> Self {
        let mut state = MarketState {
            t: 0,
            surge: Vec::new(),
            nonsurge: Vec::new(),
            next_id: 0,
        };
        state.spawn(Zone::Surge, params.d0_surge, params, streams);
        state.spawn(Zone::NonSurge, params.d0_nonsurge, params, streams);
        state
    }

    pub fn empty() -> Self {
        MarketState {
            t: 0,
            surge: Vec::new(),
            nonsurge: Vec::new(),
            next_id: 0,
        }
    }

    pub fn d_s(&self) -> u64 {
        self.surge.len() as u64
    }

    pub fn d_ns(&self) -> u64 {
        self.nonsurge.len() as u64
    }

    fn spawn(&mut self, zone: Zone, count: u64, params: &AgentParams, streams: &mut MarketStreams) {
        let z = zone_index(zone);
        let queue = match zone {
            Zone::Surge => &mut self.surge,
            Zone::NonSurge => &mut self.nonsurge,
        };
        for _ in 0..count {
            let wtp = params.wtp_dist.sample(&mut streams.wtp[z]);
            let move_cost = params.cost_dist.sample(&mut streams.cost[z]);
            queue.push(RiderAgent {
                id: self.next_id,
                arrived_at: self.t,
                wtp,
                move_cost,
                zone,
            });
            self.next_id += 1;
        }
    }
}

/// Serves up to `drivers` riders whose willingness to pay covers `price`, in
/// queue order. Returns the number matched.
fn match_fifo(queue: &mut Vec<RiderAgent>, price: f64, drivers: u64) -> u64 {
    let mut matched = 0;
    queue.retain(|rider| {
        if matched < drivers && rider.wtp >= price {
            matched += 1;
            false
        } else {
            true
        }
    });
    matched
}

/// Advances the market one step: quote prices, let surge riders walk, admit
/// new riders, dispatch drivers, then match.
pub fn market_step(
    state: &mut MarketState,
    params: &AgentParams,
    streams: &mut MarketStreams,
) -> MarketStepRecord {
    let cfg = &params.pricing;
    let delta_p = price_gap(state.d_s(), state.d_ns(), cfg, params.total_supply());
    let (p_s, p_ns) = cfg.prices(delta_p);

    let mut moved = 0;
    if params.strategic {
        let (walkers, stayers): (Vec<_>, Vec<_>) = state
            .surge
            .drain(..)
            .partition(|r| rider_moves(r.move_cost, delta_p));
        state.surge = stayers;
        moved = walkers.len() as u64;
        if moved > 0 {
            state
                .nonsurge
                .extend(walkers.into_iter().map(|r| RiderAgent {
                    zone: Zone::NonSurge,
                    ..r
                }));
            state.nonsurge.sort_by_key(|r| (r.arrived_at, r.id));
        }
    }

    state.t += 1;
    let arrived_s = poisson(params.lambda, &mut streams.arrivals[0]);
    let arrived_ns = poisson(params.lambda, &mut streams.arrivals[1]);
    state.spawn(Zone::Surge, arrived_s, params, streams);
    state.spawn(Zone::NonSurge, arrived_ns, params, streams);

    let drivers = poisson(params.total_supply(), &mut streams.driver_count);
    let (gamma_s, _) = driver_split(p_s, p_ns, cfg.logit_sensitivity);
    let r_s = (0..drivers)
        .filter(|_| streams.driver_choice.random::<f64>() < gamma_s)
        .count() as u64;
    let r_ns = drivers - r_s;

    let matched_s = match_fifo(&mut state.surge, p_s, r_s);
    let matched_ns = match_fifo(&mut state.nonsurge, p_ns, r_ns);

    MarketStepRecord {
        t: state.t,
        d_s: state.d_s(),
        d_ns: state.d_ns(),
        p_s,
        p_ns,
        delta_p,
        r_s,
        r_ns,
        moved,
        matched_s,
        matched_ns,
        arrived_s,
        arrived_ns,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRun {
    pub params: AgentParams,
    pub records: Vec<MarketStepRecord>,
    /// First step whose total unmet demand fell below the total supply.
    pub converged_at: Option<u32>,
}

impl MarketRun {
    /// Surge and non-surge demand curves starting with the initial backlog.
    pub fn demand_curves(&self) -> (Vec<f64>, Vec<f64>) {
        let surge = std::iter::once(self.params.d0_surge as f64)
            .chain(self.records.iter().map(|r| r.d_s as f64))
            .collect();
        let nonsurge = std::iter::once(self.params.d0_nonsurge as f64)
            .chain(self.records.iter().map(|r| r.d_ns as f64))
            .collect();
        (surge, nonsurge)
    }

    /// Mean price gap over the recorded steps.
    pub fn mean_gap(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.delta_p).sum::<f64>() / self.records.len() as f64
    }

    pub fn convergence_time(&self) -> Result<u32, SimError> {
        self.converged_at.ok_or(SimError::NotConverged {
            horizon: self.params.horizon,
        })
    }
}

fn cleared(total: u64, params: &AgentParams) -> bool {
    (total as f64) < params.total_supply()
}

fn run(params: &AgentParams, stop_on_clearing: bool) -> MarketRun {
    let mut streams = MarketStreams::new(params.seed);
    let mut state = MarketState::initial(params, &mut streams);
    let mut records = Vec::new();
    let mut converged_at = cleared(state.d_s() + state.d_ns(), params).then_some(0);
    while state.t < params.horizon && !(stop_on_clearing && converged_at.is_some()) {
        let rec = market_step(&mut state, params, &mut streams);
        if converged_at.is_none() && cleared(rec.d_s + rec.d_ns, params) {
            converged_at = Some(rec.t);
        }
        records.push(rec);
    }
    MarketRun {
        params: *params,
        records,
        converged_at,
    }
}

/// Runs until total unmet demand drops below the total per-step supply, or
/// the horizon.
pub fn simulate_market(params: &AgentParams) -> MarketRun {
    run(params, true)
}

/// Runs every step up to the horizon regardless of clearing.
pub fn simulate_market_fixed(params: &AgentParams) -> MarketRun {
    run(params, false)
}

use proptest::prelude::*;
use surge_core::analysis::relative_gap_difference;
use surge_core::market::{
    driver_split, simulate_market, simulate_market_fixed, AgentParams, MarketRun, PricingConfig,
    TruncatedNormalSpec,
};

fn fig8(seed: u64) -> AgentParams {
    AgentParams {
        lambda: 30.0,
        mu: 45.0,
        d0_surge: 2000,
        d0_nonsurge: 250,
        horizon: 500,
        seed,
        cost_dist: TruncatedNormalSpec::new(8.0, 8.0).unwrap(),
        wtp_dist: TruncatedNormalSpec::new(7.0, 2.0).unwrap(),
        pricing: PricingConfig::default(),
        strategic: true,
    }
}

fn small_market() -> impl Strategy<Value = AgentParams> {
    (
        1.0f64..20.0,
        1.0f64..20.0,
        0u64..400,
        0.0f64..1.0,
        (0.0f64..20.0, 0.5f64..10.0),
        (1.0f64..10.0, 0.5f64..4.0),
        (0.0f64..1.0, 2.0f64..20.0),
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(
            |(lambda, excess, d0, frac, cost, wtp, pricing, seed, strategic)| AgentParams {
                lambda,
                mu: lambda + excess,
                d0_surge: d0,
                d0_nonsurge: (frac * d0 as f64) as u64,
                horizon: 80,
                seed,
                cost_dist: TruncatedNormalSpec::new(cost.0, cost.1).unwrap(),
                wtp_dist: TruncatedNormalSpec::new(wtp.0, wtp.1).unwrap(),
                pricing: PricingConfig {
                    logit_sensitivity: pricing.0,
                    base_price: 1.0,
                    cap: pricing.1,
                },
                strategic,
            },
        )
}

/// `(d_s, d_ns)` at the start of each recorded step.
fn starts(run: &MarketRun) -> Vec<(u64, u64)> {
    let (s, n) = run.demand_curves();
    s.iter()
        .zip(&n)
        .map(|(&a, &b)| (a as u64, b as u64))
        .collect()
}

fn check_conservation(run: &MarketRun) -> Result<(), TestCaseError> {
    for (r, (ds, dns)) in run.records.iter().zip(starts(run)) {
        prop_assert_eq!(
            ds - r.moved + r.arrived_s - r.matched_s,
            r.d_s,
            "surge zone at t={}",
            r.t
        );
        prop_assert_eq!(
            dns + r.moved + r.arrived_ns - r.matched_ns,
            r.d_ns,
            "non-surge zone at t={}",
            r.t
        );
        prop_assert!(r.matched_s <= r.r_s && r.matched_ns <= r.r_ns);
        if !run.params.strategic {
            prop_assert_eq!(r.moved, 0);
        }
    }
    Ok(())
}

/// Steps where the gap takes its closed form: total demand at least the
/// supply, surge demand above a positive non-surge demand, cap not binding.
fn check_equilibrium(run: &MarketRun) -> Result<usize, TestCaseError> {
    let cfg = &run.params.pricing;
    let mut checked = 0;
    for (r, (ds, dns)) in run.records.iter().zip(starts(run)) {
        let active = ((ds + dns) as f64) >= run.params.total_supply()
            && ds > dns
            && dns > 0
            && cfg.logit_sensitivity > 0.0
            && r.p_s < cfg.cap;
        if !active {
            continue;
        }
        let (gs, gn) = driver_split(r.p_s, r.p_ns, cfg.logit_sensitivity);
        let want = ds as f64 / dns as f64;
        let rel = (gs / gn - want).abs() / want;
        prop_assert!(
            rel <= 1e-12,
            "t={}: {} vs {} (rel {:e})",
            r.t,
            gs / gn,
            want,
            rel
        );
        checked += 1;
    }
    Ok(checked)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn riders_are_conserved(p in small_market()) {
        check_conservation(&simulate_market_fixed(&p))?;
    }

    #[test]
    fn prices_stay_in_band(p in small_market()) {
        for r in simulate_market(&p).records {
            prop_assert_eq!(r.p_ns, p.pricing.base_price);
            prop_assert!(r.p_s >= p.pricing.base_price && r.p_s <= p.pricing.cap);
            prop_assert!(r.delta_p >= 0.0 && r.delta_p <= p.pricing.max_gap());
        }
    }

    #[test]
    fn logit_split_equalises_demand_per_driver(p in small_market()) {
        check_equilibrium(&simulate_market(&p))?;
    }

    #[test]
    fn seeded_runs_repeat(p in small_market()) {
        prop_assert_eq!(simulate_market(&p), simulate_market(&p));
    }

    #[test]
    fn stopped_run_is_prefix_of_full_run(p in small_market()) {
        let stopped = simulate_market(&p);
        let full = simulate_market_fixed(&p);
        prop_assert_eq!(&full.records[..stopped.records.len()], &stopped.records[..]);
        prop_assert_eq!(stopped.converged_at, full.converged_at);
    }
}

#[test]
fn equilibrium_identity_on_reference_market() {
    let mut checked = 0;
    for seed in 0..10 {
        let run = simulate_market_fixed(&fig8(seed));
        check_conservation(&run).unwrap();
        checked += check_equilibrium(&run).unwrap();
    }
    assert!(checked > 0, "closed-form region never reached");
}

#[test]
fn unreachable_move_cost_equals_benchmark() {
    for seed in [0, 7, 123] {
        let sa = AgentParams {
            cost_dist: TruncatedNormalSpec::new(f64::INFINITY, 1.0).unwrap(),
            ..fig8(seed)
        };
        assert_eq!(
            simulate_market_fixed(&sa).records,
            simulate_market_fixed(&sa.non_strategic()).records
        );
        assert_eq!(relative_gap_difference(&sa, &sa.non_strategic()), 0.0);
    }
}

#[test]
fn indifferent_drivers_decouple_the_zones() {
    // With zero logit sensitivity drivers split evenly whatever the prices,
    // so the benchmark's non-surge zone ignores the surge backlog.
    let base = AgentParams {
        pricing: PricingConfig {
            logit_sensitivity: 0.0,
            ..PricingConfig::default()
        },
        strategic: false,
        ..fig8(3)
    };
    let a = simulate_market_fixed(&base);
    let b = simulate_market_fixed(&AgentParams {
        d0_surge: 5000,
        ..base
    });
    let ns = |run: &MarketRun| -> Vec<(u64, u64, u64)> {
        run.records
            .iter()
            .map(|r| (r.d_ns, r.r_ns, r.matched_ns))
            .collect()
    };
    assert_eq!(ns(&a), ns(&b));
    assert_ne!(
        a.records.iter().map(|r| r.d_s).collect::<Vec<_>>(),
        b.records.iter().map(|r| r.d_s).collect::<Vec<_>>()
    );
}

#[test]
fn walking_shrinks_surge_backlog_and_gap() {
    let mut sa_backlog = 0.0;
    let mut nsb_backlog = 0.0;
    for seed in 0..5 {
        let sa = simulate_market_fixed(&fig8(seed));
        let nsb = simulate_market_fixed(&fig8(seed).non_strategic());
        assert!(sa.mean_gap() <= nsb.mean_gap(), "seed {seed}");
        sa_backlog += sa.records.iter().map(|r| r.d_s as f64).sum::<f64>();
        nsb_backlog += nsb.records.iter().map(|r| r.d_s as f64).sum::<f64>();
    }
    assert!(sa_backlog <= nsb_backlog);
}

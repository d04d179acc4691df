//! Declarative scenarios, command dispatch and serialization.
//!
//! A scenario is a TOML file naming a model, its parameters and optional
//! `[expect]`, `[sweep]`, `[fit]` and `[heatmap]` tables. Commands run the
//! scenario, serialize the result and check the embedded expectations.

mod artifact;
mod scenario;

pub use artifact::{
    artifact_from_json, emit, fmt_f64, market_rows, rows_from_csv, rows_to_csv, to_json,
    trajectory_rows, Format, Metadata, Row, RunArtifact, CSV_HEADER,
};
pub use scenario::{
    parse_scenario, Expect, FitSpec, HeatmapSpec, Model, Scenario, SweepSpec, Trend,
    DEFAULT_SEED_COUNT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    audit_bounds, fit_k, heatmap, sweep, sweep_market, theory_counterpart, FitResult, HeatmapCell,
    MarketSweepPoint, SweepParam, SweepPoint,
};
use crate::dynamics::{simulate, BoundsReport, Trajectory};
use crate::error::SimError;
use crate::market::simulate_market;
use crate::stochastic::simulate_stochastic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Io(_) => 1,
            HarnessError::NotConverged(_) => 3,
        }
    }
}

impl From<Vec<String>> for HarnessError {
    fn from(errs: Vec<String>) -> Self {
        HarnessError::Validation(errs)
    }
}

fn with_context(scenario: &Scenario, err: SimError) -> HarnessError {
    match err {
        SimError::NotConverged { .. } => {
            HarnessError::NotConverged(format!("scenario {:?}: {err}", scenario.name))
        }
        other => HarnessError::Validation(vec![format!("scenario {:?}: {other}", scenario.name)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    FitK,
    Heatmap,
    Audit,
}

/// Serialized output plus whatever went wrong while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    /// Expectations that did not hold.
    pub failures: Vec<String>,
    /// Runs that hit their horizon.
    pub unconverged: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if !self.unconverged.is_empty() {
            3
        } else if !self.failures.is_empty() {
            2
        } else {
            0
        }
    }
}

fn trajectory_artifact(scenario: &Scenario, traj: Trajectory, seed: Option<u64>) -> RunArtifact {
    RunArtifact {
        scenario: scenario.clone(),
        rows: trajectory_rows(&traj),
        converged: traj.converged,
        converged_at: traj.converged.then(|| traj.last().t),
        bounds: audit_bounds(&traj).ok(),
        metadata: Metadata::now(seed),
    }
}

/// Runs the scenario's model once, with its base seed.
pub fn run(scenario: &Scenario) -> Result<RunArtifact, HarnessError> {
    scenario.validate()?;
    let seed = scenario.base_seed();
    Ok(match scenario.model {
        Model::Theory => trajectory_artifact(scenario, simulate(&scenario.theory_params()?), None),
        Model::Stochastic => {
            let params = scenario.stochastic_params(seed)?;
            trajectory_artifact(scenario, simulate_stochastic(&params), Some(seed))
        }
        Model::Agent | Model::AgentNsb => {
            let market = simulate_market(&scenario.agent_params(seed)?);
            RunArtifact {
                scenario: scenario.clone(),
                rows: market_rows(&market),
                converged: market.converged_at.is_some(),
                converged_at: market.converged_at,
                bounds: None,
                metadata: Metadata::now(Some(seed)),
            }
        }
    })
}

/// The fluid trajectory behind `audit`.
fn fluid_trajectory(scenario: &Scenario) -> Result<Trajectory, HarnessError> {
    match scenario.model {
        Model::Theory => Ok(simulate(&scenario.theory_params()?)),
        Model::Stochastic => Ok(simulate_stochastic(
            &scenario.stochastic_params(scenario.base_seed())?,
        )),
        _ => Err(HarnessError::Validation(vec![
            "audit requires model theory or stochastic".to_string(),
        ])),
    }
}

pub fn audit(scenario: &Scenario) -> Result<BoundsReport, HarnessError> {
    scenario.validate()?;
    let traj = fluid_trajectory(scenario)?;
    audit_bounds(&traj).map_err(|e| with_context(scenario, e))
}

fn sweep_spec(scenario: &Scenario) -> Result<(&SweepSpec, SweepParam), HarnessError> {
    let spec = scenario.sweep.as_ref().ok_or_else(|| {
        HarnessError::Validation(vec!["sweep requires a [sweep] table".to_string()])
    })?;
    let param = spec
        .param
        .parse()
        .map_err(|e| HarnessError::Validation(vec![e]))?;
    Ok((spec, param))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepReport {
    Theory(Vec<SweepPoint>),
    Market(Vec<MarketSweepPoint>),
}

pub fn run_sweep(scenario: &Scenario) -> Result<SweepReport, HarnessError> {
    scenario.validate()?;
    let (spec, param) = sweep_spec(scenario)?;
    match scenario.model {
        Model::Theory => Ok(SweepReport::Theory(sweep(
            &scenario.theory_params()?,
            param,
            &spec.values,
        ))),
        Model::Agent | Model::AgentNsb => {
            let template = scenario.agent_params(scenario.base_seed())?;
            Ok(SweepReport::Market(sweep_market(
                &template,
                param,
                &spec.values,
                &scenario.seed_list(),
            )))
        }
        Model::Stochastic => Err(HarnessError::Validation(vec![
            "sweep requires model theory, agent or agent_nsb".to_string(),
        ])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seeds: Vec<u64>,
    pub fits: Vec<FitResult>,
    /// Mean of the per-seed fitted k.
    pub k_mean: f64,
}

pub fn run_fit(scenario: &Scenario) -> Result<FitReport, HarnessError> {
    scenario.validate()?;
    if !scenario.model.is_agent() {
        return Err(HarnessError::Validation(vec![
            "fit-k requires model agent or agent_nsb".to_string(),
        ]));
    }
    let spec = scenario.fit.clone().unwrap_or_default();
    let seeds = scenario.seed_list();
    let template = scenario.agent_params(scenario.base_seed())?;
    let base = theory_counterpart(&template, 0.0);
    let mut fits = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let market = simulate_market(&scenario.agent_params(seed)?);
        let fit = fit_k(&market, &base, (spec.k_min, spec.k_max), spec.grid_size)
            .map_err(|e| with_context(scenario, e))?;
        fits.push(fit);
    }
    let k_mean = fits.iter().map(|f| f.k_star).sum::<f64>() / fits.len() as f64;
    Ok(FitReport {
        seeds,
        fits,
        k_mean,
    })
}

pub fn run_heatmap(scenario: &Scenario) -> Result<Vec<Vec<HeatmapCell>>, HarnessError> {
    scenario.validate()?;
    if !scenario.model.is_agent() {
        return Err(HarnessError::Validation(vec![
            "heatmap requires model agent or agent_nsb".to_string(),
        ]));
    }
    let spec = scenario.heatmap.as_ref().ok_or_else(|| {
        HarnessError::Validation(vec!["heatmap requires a [heatmap] table".to_string()])
    })?;
    let base = scenario.agent_params(scenario.base_seed())?;
    Ok(heatmap(
        &base,
        &spec.cost_means,
        &spec.cost_stds,
        base.horizon,
        &scenario.seed_list(),
    ))
}

fn expect_of(scenario: &Scenario) -> Expect {
    scenario.expect.clone().unwrap_or_default()
}

fn check_eq<T: PartialEq + std::fmt::Debug>(
    out: &mut Vec<String>,
    what: &str,
    want: Option<T>,
    got: T,
) {
    if let Some(want) = want {
        if want != got {
            out.push(format!("{what}: expected {want:?}, got {got:?}"));
        }
    }
}

fn check_window<T: PartialOrd + std::fmt::Debug>(
    out: &mut Vec<String>,
    what: &str,
    window: Option<[T; 2]>,
    got: T,
) {
    if let Some([lo, hi]) = window {
        if !(got >= lo && got <= hi) {
            out.push(format!("{what}: {got:?} outside [{lo:?}, {hi:?}]"));
        }
    }
}

fn needs_report(e: &Expect) -> bool {
    e.tau_s.is_some()
        || e.tau_n.is_some()
        || e.peak_tau.is_some()
        || e.tau_s_window.is_some()
        || e.tau_n_window.is_some()
        || e.surge_type.is_some()
        || e.inversion_time.is_some()
        || e.no_inversion.is_some()
        || e.no_violations.is_some()
}

/// Failed expectations about a bounds report.
pub fn check_report(expect: &Expect, report: &BoundsReport) -> Vec<String> {
    let mut out = Vec::new();
    check_eq(&mut out, "tau_s", expect.tau_s, report.tau_s_observed);
    check_eq(&mut out, "tau_n", expect.tau_n, report.tau_n_observed);
    check_eq(
        &mut out,
        "peak_tau",
        expect.peak_tau,
        report.peak_tau_observed,
    );
    check_window(
        &mut out,
        "tau_s",
        expect.tau_s_window,
        report.tau_s_observed,
    );
    check_window(
        &mut out,
        "tau_n",
        expect.tau_n_window,
        report.tau_n_observed,
    );
    check_eq(&mut out, "surge_type", expect.surge_type, report.surge_type);
    if expect.inversion_time.is_some() {
        check_eq(
            &mut out,
            "inversion_time",
            expect.inversion_time.map(Some),
            report.inversion_time,
        );
    }
    if expect.no_inversion == Some(true) && report.inversion_time.is_some() {
        out.push(format!(
            "inversion: expected none, got {:?}",
            report.inversion_time
        ));
    }
    if expect.no_violations == Some(true) && !report.violations.is_empty() {
        out.push(format!(
            "bound violations: {}",
            report.violations.join("; ")
        ));
    }
    out
}

/// Failed expectations about a single run.
pub fn check_run(expect: &Expect, artifact: &RunArtifact) -> Vec<String> {
    let mut out = Vec::new();
    check_eq(&mut out, "converged", expect.converged, artifact.converged);
    match &artifact.bounds {
        Some(report) => out.extend(check_report(expect, report)),
        None if needs_report(expect) && !artifact.scenario.model.is_agent() => {
            out.push("no bounds report: the run did not converge".to_string())
        }
        None => {}
    }
    if let Some(window) = expect.tau_window {
        match artifact.converged_at {
            Some(t) => check_window(&mut out, "tau", Some(window), t),
            None => out.push("tau: run did not converge".to_string()),
        }
    }
    out
}

fn check_trend(out: &mut Vec<String>, trend: Option<Trend>, taus: &[Option<f64>]) {
    let Some(trend) = trend else { return };
    let Some(taus) = taus.iter().copied().collect::<Option<Vec<f64>>>() else {
        out.push("tau_trend: some sweep cells have no convergence time".to_string());
        return;
    };
    let holds = taus.windows(2).all(|w| match trend {
        Trend::Increasing => w[1] > w[0],
        Trend::Decreasing => w[1] < w[0],
    });
    if !holds {
        out.push(format!("tau_trend: expected {trend:?}, got {taus:?}"));
    }
}

pub fn check_sweep(expect: &Expect, report: &SweepReport) -> Vec<String> {
    let mut out = Vec::new();
    match report {
        SweepReport::Theory(points) => {
            if let Some(want) = &expect.surge_types {
                let got: Vec<Option<_>> = points
                    .iter()
                    .map(|p| p.report.as_ref().ok().map(|r| r.surge_type))
                    .collect();
                let want: Vec<Option<_>> = want.iter().copied().map(Some).collect();
                check_eq(&mut out, "surge_types", Some(want), got);
            }
            let taus: Vec<Option<f64>> = points
                .iter()
                .map(|p| p.report.as_ref().ok().map(|r| f64::from(r.tau_s_observed)))
                .collect();
            check_trend(&mut out, expect.tau_trend, &taus);
            if expect.no_violations == Some(true) {
                for p in points {
                    match &p.report {
                        Ok(r) if r.violations.is_empty() => {}
                        Ok(r) => {
                            out.push(format!("value {}: {}", p.value, r.violations.join("; ")))
                        }
                        Err(e) => out.push(format!("value {}: {e}", p.value)),
                    }
                }
            }
        }
        SweepReport::Market(points) => {
            let taus: Vec<Option<f64>> = points
                .iter()
                .map(|p| p.summary.as_ref().ok().map(|s| s.tau_sa))
                .collect();
            check_trend(&mut out, expect.tau_trend, &taus);
        }
    }
    out
}

pub fn check_fit(expect: &Expect, report: &FitReport) -> Vec<String> {
    let mut out = Vec::new();
    check_window(&mut out, "k_mean", expect.k_window, report.k_mean);
    out
}

pub fn check_heatmap(expect: &Expect, cells: &[Vec<HeatmapCell>]) -> Vec<String> {
    let mut out = Vec::new();
    for cell in cells.iter().flatten() {
        let label = format!("cell (mean {}, std {})", cell.d_mean, cell.d_std);
        check_window(&mut out, &label, expect.rel_diff_window, cell.rel_diff_pct);
        if expect.all_negative == Some(true) && cell.per_seed.iter().any(|&r| r >= 0.0) {
            out.push(format!(
                "{label}: non-negative seed result in {:?}",
                cell.per_seed
            ));
        }
    }
    if expect.improvement_decreases_with_cost_mean == Some(true) {
        let cols = cells.first().map_or(0, Vec::len);
        for j in 0..cols {
            let column: Vec<f64> = cells.iter().map(|row| row[j].rel_diff_pct).collect();
            if column.windows(2).any(|w| w[1] < w[0]) {
                out.push(format!(
                    "std {}: relative difference not non-decreasing in cost mean: {column:?}",
                    cells[0][j].d_std
                ));
            }
        }
    }
    out
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn surge_name(report: &BoundsReport) -> &'static str {
    match report.surge_type {
        crate::dynamics::SurgeType::Localized => "localized",
        crate::dynamics::SurgeType::SpillOver => "spill_over",
    }
}

pub fn report_csv(report: &BoundsReport) -> String {
    let pairs = [
        ("tau_s", report.tau_s_observed.to_string()),
        ("tau_n", report.tau_n_observed.to_string()),
        ("peak_tau", report.peak_tau_observed.to_string()),
        ("surge_type", surge_name(report).to_string()),
        (
            "inversion_time",
            report
                .inversion_time
                .map(|t| t.to_string())
                .unwrap_or_default(),
        ),
        ("tau_s_lower", report.tau_s_bounds.lower.to_string()),
        ("tau_s_upper", report.tau_s_bounds.upper.to_string()),
        ("tau_n_lower", report.tau_n_bounds.lower.to_string()),
        ("tau_n_upper", report.tau_n_bounds.upper.to_string()),
        ("violations", report.violations.join("; ")),
    ];
    csv_table(
        &["field", "value"],
        pairs.into_iter().map(|(k, v)| vec![k.to_string(), v]),
    )
}

pub fn sweep_csv(report: &SweepReport) -> String {
    match report {
        SweepReport::Theory(points) => csv_table(
            &[
                "value",
                "tau_s",
                "tau_n",
                "peak_tau",
                "surge_type",
                "inversion_time",
                "violations",
                "error",
            ],
            points.iter().map(|p| match &p.report {
                Ok(r) => vec![
                    fmt_f64(p.value),
                    r.tau_s_observed.to_string(),
                    r.tau_n_observed.to_string(),
                    r.peak_tau_observed.to_string(),
                    surge_name(r).to_string(),
                    r.inversion_time.map(|t| t.to_string()).unwrap_or_default(),
                    r.violations.join("; "),
                    String::new(),
                ],
                Err(e) => {
                    let mut row = vec![fmt_f64(p.value)];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(e.clone());
                    row
                }
            }),
        ),
        SweepReport::Market(points) => csv_table(
            &[
                "value",
                "tau_sa",
                "tau_nsb",
                "mean_gap_sa",
                "mean_gap_nsb",
                "max_gap_sa",
                "max_gap_nsb",
                "unconverged",
                "error",
            ],
            points.iter().map(|p| match &p.summary {
                Ok(s) => vec![
                    fmt_f64(p.value),
                    fmt_f64(s.tau_sa),
                    fmt_f64(s.tau_nsb),
                    fmt_f64(s.mean_gap_sa),
                    fmt_f64(s.mean_gap_nsb),
                    fmt_f64(s.max_gap_sa),
                    fmt_f64(s.max_gap_nsb),
                    s.unconverged.to_string(),
                    String::new(),
                ],
                Err(e) => {
                    let mut row = vec![fmt_f64(p.value)];
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(e.clone());
                    row
                }
            }),
        ),
    }
}

pub fn fit_csv(report: &FitReport) -> String {
    csv_table(
        &["seed", "k_star", "objective"],
        report
            .seeds
            .iter()
            .zip(&report.fits)
            .map(|(seed, f)| vec![seed.to_string(), fmt_f64(f.k_star), fmt_f64(f.objective)]),
    )
}

pub fn heatmap_csv(cells: &[Vec<HeatmapCell>]) -> String {
    csv_table(
        &["d_mean", "d_std", "rel_diff_pct"],
        cells
            .iter()
            .flatten()
            .map(|c| vec![fmt_f64(c.d_mean), fmt_f64(c.d_std), fmt_f64(c.rel_diff_pct)]),
    )
}

fn render<T: Serialize>(value: &T, format: Format, csv: impl FnOnce(&T) -> String) -> String {
    match format {
        Format::Csv => csv(value),
        Format::Json => to_json(value),
    }
}

/// Runs one command on a validated scenario.
pub fn execute(
    command: Command,
    scenario: &Scenario,
    format: Format,
) -> Result<Outcome, HarnessError> {
    let expect = expect_of(scenario);
    let mut unconverged = Vec::new();
    let (text, failures) = match command {
        Command::Run => {
            let artifact = run(scenario)?;
            if !artifact.converged {
                unconverged.push(format!(
                    "scenario {:?}: run did not converge within the horizon",
                    scenario.name
                ));
            }
            (emit(&artifact, format), check_run(&expect, &artifact))
        }
        Command::Audit => {
            let report = audit(scenario)?;
            (
                render(&report, format, report_csv),
                check_report(&expect, &report),
            )
        }
        Command::Sweep => {
            let report = run_sweep(scenario)?;
            if let SweepReport::Market(points) = &report {
                for p in points {
                    if let Ok(s) = &p.summary {
                        if s.unconverged > 0 {
                            unconverged.push(format!(
                                "value {}: {} runs did not converge",
                                p.value, s.unconverged
                            ));
                        }
                    }
                }
            }
            (
                render(&report, format, sweep_csv),
                check_sweep(&expect, &report),
            )
        }
        Command::FitK => {
            let report = run_fit(scenario)?;
            (
                render(&report, format, fit_csv),
                check_fit(&expect, &report),
            )
        }
        Command::Heatmap => {
            let cells = run_heatmap(scenario)?;
            let failures = check_heatmap(&expect, &cells);
            (render(&cells, format, |c| heatmap_csv(c)), failures)
        }
    };
    Ok(Outcome {
        text,
        failures,
        unconverged,
    })
}

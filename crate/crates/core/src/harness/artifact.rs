use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundsReport, Trajectory};
use crate::market::MarketRun;

use super::scenario::Scenario;
use super::HarnessError;

pub const CSV_HEADER: [&str; 11] = [
    "t",
    "d_s",
    "d_ns",
    "p_s",
    "p_ns",
    "delta_p",
    "moved",
    "matched_s",
    "matched_ns",
    "r_s",
    "r_ns",
];

/// One output row. Market columns are empty for fluid-model runs and for
/// the initial agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: u32,
    pub d_s: f64,
    pub d_ns: f64,
    pub p_s: Option<f64>,
    pub p_ns: Option<f64>,
    pub delta_p: Option<f64>,
    pub moved: Option<u64>,
    pub matched_s: Option<u64>,
    pub matched_ns: Option<u64>,
    pub r_s: Option<u64>,
    pub r_ns: Option<u64>,
}

impl Row {
    fn demand(t: u32, d_s: f64, d_ns: f64) -> Self {
        Row {
            t,
            d_s,
            d_ns,
            p_s: None,
            p_ns: None,
            delta_p: None,
            moved: None,
            matched_s: None,
            matched_ns: None,
            r_s: None,
            r_ns: None,
        }
    }
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<Row> {
    traj.states
        .iter()
        .map(|s| Row::demand(s.t, s.d_s, s.d_ns))
        .collect()
}

pub fn market_rows(run: &MarketRun) -> Vec<Row> {
    let initial = Row::demand(0, run.params.d0_surge as f64, run.params.d0_nonsurge as f64);
    std::iter::once(initial)
        .chain(run.records.iter().map(|r| Row {
            t: r.t,
            d_s: r.d_s as f64,
            d_ns: r.d_ns as f64,
            p_s: Some(r.p_s),
            p_ns: Some(r.p_ns),
            delta_p: Some(r.delta_p),
            moved: Some(r.moved),
            matched_s: Some(r.matched_s),
            matched_ns: Some(r.matched_ns),
            r_s: Some(r.r_s),
            r_ns: Some(r.r_ns),
        }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch at creation.
    pub timestamp: u64,
}

impl Metadata {
    pub fn now(seed: Option<u64>) -> Self {
        Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub scenario: Scenario,
    pub rows: Vec<Row>,
    pub converged: bool,
    /// Convergence step: both zones cleared (fluid models) or total demand
    /// below total supply (agent models).
    pub converged_at: Option<u32>,
    pub bounds: Option<BoundsReport>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        out.write_record([
            r.t.to_string(),
            fmt_f64(r.d_s),
            fmt_f64(r.d_ns),
            opt(r.p_s.map(fmt_f64)),
            opt(r.p_ns.map(fmt_f64)),
            opt(r.delta_p.map(fmt_f64)),
            opt(r.moved),
            opt(r.matched_s),
            opt(r.matched_ns),
            opt(r.r_s),
            opt(r.r_ns),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(out.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn field<T: std::str::FromStr>(text: &str, name: &str, line: usize) -> Result<Option<T>, String> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| format!("line {line}: bad {name} value {text:?}"))
}

fn required<T: std::str::FromStr>(text: &str, name: &str, line: usize) -> Result<T, String> {
    field(text, name, line)?.ok_or_else(|| format!("line {line}: empty {name}"))
}

/// Reads rows written by [`rows_to_csv`].
pub fn rows_from_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_HEADER) {
        return Err(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rec = record.map_err(|e| e.to_string())?;
        let line = i + 2;
        let get = |j: usize| rec.get(j).unwrap_or("");
        rows.push(Row {
            t: required(get(0), "t", line)?,
            d_s: required(get(1), "d_s", line)?,
            d_ns: required(get(2), "d_ns", line)?,
            p_s: field(get(3), "p_s", line)?,
            p_ns: field(get(4), "p_ns", line)?,
            delta_p: field(get(5), "delta_p", line)?,
            moved: field(get(6), "moved", line)?,
            matched_s: field(get(7), "matched_s", line)?,
            matched_ns: field(get(8), "matched_ns", line)?,
            r_s: field(get(9), "r_s", line)?,
            r_ns: field(get(10), "r_ns", line)?,
        });
    }
    Ok(rows)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    text
}

pub fn emit(artifact: &RunArtifact, format: Format) -> String {
    match format {
        Format::Csv => rows_to_csv(&artifact.rows),
        Format::Json => to_json(artifact),
    }
}

pub fn artifact_from_json(text: &str) -> Result<RunArtifact, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Io(format!("bad artifact: {e}")))
}

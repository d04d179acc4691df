use thiserror::Error;

/// A violated parameter constraint. The message names the rule.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("requires lambda < mu (got lambda={lambda}, mu={mu})")]
    SupplyNotAboveDemand { lambda: f64, mu: f64 },
    #[error("requires {field} >= 0 (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("requires {field} to be finite (got {value})")]
    NotFinite { field: &'static str, value: f64 },
    #[error("requires d0_surge >= d0_nonsurge (got {d0_surge} < {d0_nonsurge})")]
    SurgeBelowNonSurge { d0_surge: f64, d0_nonsurge: f64 },
    #[error("requires horizon >= 1")]
    ZeroHorizon,
    #[error("requires {field} > 0 (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("requires cap >= base_price (got cap={cap}, base_price={base_price})")]
    CapBelowBase { cap: f64, base_price: f64 },
    #[error("requires {field} to equal {expected} (got {value})")]
    Mismatch {
        field: &'static str,
        expected: f64,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trajectory did not converge within horizon {horizon}; increase the horizon")]
    NotConverged { horizon: u32 },
    #[error("{0}")]
    Param(#[from] ParamError),
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn check_nonneg(field: &'static str, value: f64, out: &mut Vec<ParamError>) {
    if !value.is_finite() {
        out.push(ParamError::NotFinite { field, value });
    } else if value < 0.0 {
        out.push(ParamError::Negative { field, value });
    }
}

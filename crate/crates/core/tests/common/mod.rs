#![allow(dead_code)]

use proptest::prelude::*;
use surge_core::dynamics::TheoryParams;

/// Direct transcription of the fluid recursion, kept independent of the
/// library's implementation. Returns `(d_s, d_ns)` for `t = 0..` until both
/// are below `tol` or `horizon` steps have run.
pub fn oracle_path(p: &TheoryParams) -> Vec<(f64, f64)> {
    let (lam, mu, k) = (p.lambda, p.mu, p.k);
    let mut ds = p.d0_surge;
    let mut dn = p.d0_nonsurge;
    let mut out = vec![(ds, dn)];
    for _ in 0..p.horizon {
        if ds <= p.tol && dn <= p.tol {
            break;
        }
        let gap = ds - dn;
        let f = if gap <= 0.0 {
            0.0
        } else {
            (k * gap / mu).min(1.0)
        };
        let walk = f * ds;
        let next_s = ds + (lam - mu) - walk;
        let next_n = dn + (lam - mu) + walk;
        ds = if next_s > 0.0 { next_s } else { 0.0 };
        dn = if next_n > 0.0 { next_n } else { 0.0 };
        out.push((ds, dn));
    }
    out
}

/// First index at which the zone's demand is within `tol` of zero.
pub fn oracle_tau(path: &[(f64, f64)], tol: f64, surge: bool) -> Option<usize> {
    path.iter()
        .position(|&(s, n)| if surge { s <= tol } else { n <= tol })
}

/// Valid fluid parameters: log-uniform surge backlog in [10, 1e5], non-surge
/// backlog below it, excess supply in [1, 100] and a move rate that keeps
/// the linear move fraction inside [0, 1].
pub fn theory_params() -> impl Strategy<Value = TheoryParams> {
    (
        1.0f64..5.0,
        0.0f64..=1.0,
        0.0f64..100.0,
        1.0f64..=100.0,
        0.0f64..=1.0,
    )
        .prop_map(|(log_d0, frac, lambda, excess, k_frac)| {
            let d0 = 10f64.powf(log_d0);
            let mu = lambda + excess;
            TheoryParams::new(lambda, mu, d0, frac * d0, k_frac * mu / d0).expect("valid draw")
        })
}

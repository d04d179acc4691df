use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Platform pricing and driver zone-choice configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    /// Logit sensitivity of drivers to the price difference.
    pub logit_sensitivity: f64,
    /// Price in the non-surge zone.
    pub base_price: f64,
    /// Maximum surge-zone price.
    pub cap: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            logit_sensitivity: 0.25,
            base_price: 1.0,
            cap: 10.0,
        }
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        let beta = self.logit_sensitivity;
        if !beta.is_finite() {
            return Err(ParamError::NotFinite {
                field: "logit_sensitivity",
                value: beta,
            });
        }
        if beta < 0.0 {
            return Err(ParamError::Negative {
                field: "logit_sensitivity",
                value: beta,
            });
        }
        if !self.base_price.is_finite() || !self.cap.is_finite() {
            return Err(ParamError::NotFinite {
                field: "cap",
                value: self.cap,
            });
        }
        if self.cap < self.base_price {
            return Err(ParamError::CapBelowBase {
                cap: self.cap,
                base_price: self.base_price,
            });
        }
        Ok(())
    }

    /// Largest admissible gap, `cap - base_price`.
    pub fn max_gap(&self) -> f64 {
        self.cap - self.base_price
    }

    /// Surge and non-surge prices implied by a gap.
    pub fn prices(&self, delta_p: f64) -> (f64, f64) {
        ((self.base_price + delta_p).min(self.cap), self.base_price)
    }
}

/// Surge price premium that equalises demand-to-driver ratios across zones
/// under logit driver choice: `ln(d_s / d_ns) / beta`, clamped to
/// `[0, cap - base_price]`. Zero once total demand falls below the total
/// per-step supply.
pub fn price_gap(d_s: u64, d_ns: u64, cfg: &PricingConfig, total_supply: f64) -> f64 {
    if ((d_s + d_ns) as f64) < total_supply || d_s <= d_ns {
        return 0.0;
    }
    let max_gap = cfg.max_gap();
    if d_ns == 0 || cfg.logit_sensitivity == 0.0 {
        return max_gap;
    }
    ((d_s as f64 / d_ns as f64).ln() / cfg.logit_sensitivity).min(max_gap)
}

/// Probabilities that a driver picks the surge and non-surge zone.
pub fn driver_split(p_s: f64, p_ns: f64, beta: f64) -> (f64, f64) {
    let a = beta * p_s;
    let b = beta * p_ns;
    let top = a.max(b);
    let es = (a - top).exp();
    let en = (b - top).exp();
    let total = es + en;
    (es / total, en / total)
}

/// A surge-zone rider walks out iff their move cost does not exceed the gap.
pub fn rider_moves(move_cost: f64, delta_p: f64) -> bool {
    move_cost <= delta_p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(beta: f64) -> PricingConfig {
        PricingConfig {
            logit_sensitivity: beta,
            base_price: 1.0,
            cap: 1000.0,
        }
    }

    #[test]
    fn equal_demands_give_zero_gap() {
        assert_eq!(price_gap(500, 500, &cfg(0.25), 90.0), 0.0);
    }

    #[test]
    fn closed_form_gap() {
        let gap = price_gap(2000, 250, &cfg(0.25), 100.0);
        assert_relative_eq!(gap, 4.0 * 8.0f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(gap, 8.317766166719343, max_relative = 1e-12);
    }

    #[test]
    fn cleared_surge_has_zero_gap() {
        assert_eq!(price_gap(80, 5, &cfg(0.25), 90.0), 0.0);
        assert!(price_gap(85, 5, &cfg(0.25), 90.0) > 0.0);
    }

    #[test]
    fn gap_is_capped_and_floored() {
        let c = PricingConfig::default();
        assert_eq!(price_gap(2000, 0, &c, 90.0), c.max_gap());
        assert_eq!(price_gap(1_000_000, 1, &c, 90.0), c.max_gap());
        assert_eq!(price_gap(100, 900, &c, 90.0), 0.0);
        let (p_s, p_ns) = c.prices(c.max_gap());
        assert_eq!((p_s, p_ns), (10.0, 1.0));
    }

    #[test]
    fn split_is_symmetric_at_equal_prices() {
        assert_eq!(driver_split(3.0, 3.0, 0.25), (0.5, 0.5));
    }

    #[test]
    fn split_at_log_eight_is_eight_ninths() {
        let beta = 0.25;
        let (gs, gn) = driver_split(1.0 + 8.0f64.ln() / beta, 1.0, beta);
        assert_relative_eq!(gs, 8.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(gn, 1.0 / 9.0, max_relative = 1e-13);
        assert_relative_eq!(gs / gn, 2000.0 / 250.0, max_relative = 1e-12);
    }

    #[test]
    fn split_stays_below_one_in_cap_region() {
        let (gs, gn) = driver_split(10.0, 1.0, 0.25);
        assert!(gs < 1.0 && gn > 0.0);
        assert_relative_eq!(gs + gn, 1.0, max_relative = 1e-15);
        let (gs, gn) = driver_split(1e6, 0.0, 1.0);
        assert!(gs <= 1.0 && gn >= 0.0 && gs.is_finite());
    }

    #[test]
    fn move_threshold() {
        assert!(rider_moves(5.0, 8.3));
        assert!(rider_moves(8.3, 8.3));
        assert!(!rider_moves(8.31, 8.3));
    }
}

//! Homologous centrifugal pump actuator with head-loss degradation.
//!
//! Similarity law: available head at speed `n` and volumetric flow `V` is
//! `dP = (1/K) * dP_r * (2 (n/n_r)^2 - (V/V_r)^2)`, so a fresh pump at rated
//! speed and flow delivers rated head, head rises with speed squared and
//! droops with flow squared, and degradation divides the whole curve by the
//! loss coefficient `K >= 1` (fractional head loss `1 - 1/K`).

use serde::{Deserialize, Serialize};

use super::constants::PumpConstants;

/// Loss coefficient of a freshly commissioned pump.
pub const K_COMMISSION: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PumpActuator {
    /// Current speed [RPM].
    pub speed: f64,
    /// Rated head [Pa].
    pub rated_head: f64,
    /// Rated volumetric flow [m3/s].
    pub rated_flow: f64,
    /// Rated speed [RPM].
    pub rated_speed: f64,
    /// Degradation loss coefficient, >= 1.
    pub loss_coefficient: f64,
}

impl PumpActuator {
    pub fn new(constants: &PumpConstants, loss_coefficient: f64) -> Self {
        assert!(loss_coefficient >= K_COMMISSION);
        PumpActuator {
            speed: constants.rated_speed,
            rated_head: constants.rated_head,
            rated_flow: constants.rated_flow,
            rated_speed: constants.rated_speed,
            loss_coefficient,
        }
    }

    /// Available head [Pa] at the current speed and a given flow.
    pub fn head(&self, flow: f64) -> f64 {
        let s = self.speed / self.rated_speed;
        let v = flow / self.rated_flow;
        (self.rated_head / self.loss_coefficient) * (2.0 * s * s - v * v)
    }

    /// Operating flow [m3/s] against a quadratic loop resistance `r` [Pa s2/m6].
    ///
    /// Solves `head(V) = r V^2` for V >= 0.
    pub fn equilibrium_flow(&self, loop_resistance: f64) -> f64 {
        let s = self.speed / self.rated_speed;
        let denom = loop_resistance
            + self.rated_head / (self.loss_coefficient * self.rated_flow * self.rated_flow);
        let num = 2.0 * self.rated_head / self.loss_coefficient * s * s;
        (num / denom).max(0.0).sqrt()
    }

    /// Speed [RPM] that produces the requested flow against the loop
    /// resistance (inverse of [`equilibrium_flow`]).
    pub fn speed_for_flow(&self, flow: f64, loop_resistance: f64) -> f64 {
        let denom = loop_resistance
            + self.rated_head / (self.loss_coefficient * self.rated_flow * self.rated_flow);
        let s2 = flow * flow * denom * self.loss_coefficient / (2.0 * self.rated_head);
        self.rated_speed * s2.max(0.0).sqrt()
    }

    /// Reset the loss coefficient to its commissioning value.
    pub fn maintain(&mut self) {
        self.loss_coefficient = K_COMMISSION;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::constants::PlantConstants;

    fn fresh() -> PumpActuator {
        PumpActuator::new(&PlantConstants::default().primary_pump, 1.0)
    }

    #[test]
    fn rated_point_delivers_rated_head() {
        let p = fresh();
        assert!((p.head(p.rated_flow) - p.rated_head).abs() < 1e-9);
    }

    #[test]
    fn head_decreases_monotonically_in_k() {
        let mut p = fresh();
        let mut prev = f64::INFINITY;
        for k in [1.0, 1.2, 1.7, 2.5, 3.125] {
            p.loss_coefficient = k;
            let h = p.head(0.8 * p.rated_flow);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn equilibrium_flow_matches_loop_resistance() {
        let consts = PlantConstants::default();
        let r = consts.primary_pump.loop_resistance();
        let mut p = fresh();
        p.loss_coefficient = 1.4;
        let v = p.equilibrium_flow(r);
        assert!((p.head(v) - r * v * v).abs() < 1.0);
        // Inverting back recovers the speed.
        let n = p.speed_for_flow(v, r);
        assert!((n - p.speed).abs() < 1e-6);
    }

    #[test]
    fn fresh_pump_at_rated_speed_gives_rated_flow() {
        let consts = PlantConstants::default();
        let p = fresh();
        let v = p.equilibrium_flow(consts.primary_pump.loop_resistance());
        assert!((v - p.rated_flow).abs() / p.rated_flow < 1e-12);
    }
}

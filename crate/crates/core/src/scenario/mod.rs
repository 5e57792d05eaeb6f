//! Study inputs: customer profiles, tariff, horizon and device parameters.

mod config;
mod io;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::netmodel::{NetError, NodeId};

pub use config::{HorizonConfig, NormalizationMode, StudyConfig, WeightSpec, DEFAULT_AHP_JUDGMENTS};
pub use io::{
    load, read_config, read_network_csv, read_profiles_csv, read_tariff, write, write_network_csv,
    write_profiles_csv, write_tariff, Study, StudyInputs,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("customer {customer} references unknown node {node}")]
    UnknownNode { customer: String, node: NodeId },
    #[error("customer {customer}: negative or non-finite load/PV at t={t}")]
    NegativeLoadOrPv { customer: String, t: usize },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Network(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub node: NodeId,
    pub id: String,
    /// kW
    pub p_load: Vec<f64>,
    /// kVAR
    pub q_load: Vec<f64>,
    /// kW
    pub p_pv: Vec<f64>,
}

impl CustomerProfile {
    /// Load minus PV, kW. Positive means the customer is short of energy.
    pub fn net_position(&self, t: usize) -> f64 {
        self.p_load[t] - self.p_pv[t]
    }

    pub fn branch(&self, t: usize) -> ExchangeBranch {
        if self.net_position(t) >= 0.0 {
            ExchangeBranch::Deficit
        } else {
            ExchangeBranch::Surplus
        }
    }
}

/// Which side of the customer exchange rules applies at a step. An exact
/// balance counts as a deficit of zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeBranch {
    /// `0 ≤ p_grid ≤ net`
    Deficit,
    /// `net ≤ p_grid ≤ 0`
    Surplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    pub dt_hours: f64,
}

impl Horizon {
    pub fn new(steps: usize, dt_hours: f64) -> Result<Self, ScenarioError> {
        if !(dt_hours > 0.0 && dt_hours.is_finite()) {
            return Err(ScenarioError::InvalidParameter(format!("dt must be positive, got {dt_hours}")));
        }
        let per_day = 24.0 / dt_hours;
        if (per_day - per_day.round()).abs() > 1e-9 || per_day.round() < 1.0 {
            return Err(ScenarioError::InvalidParameter(format!("dt={dt_hours} h does not divide a day")));
        }
        let h = Horizon { steps, dt_hours };
        if steps == 0 || steps % h.steps_per_day() != 0 {
            return Err(ScenarioError::LengthMismatch(format!(
                "horizon of {steps} steps is not a whole number of days ({} steps per day)",
                h.steps_per_day()
            )));
        }
        Ok(h)
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.dt_hours).round() as usize
    }

    pub fn day_count(&self) -> usize {
        self.steps / self.steps_per_day()
    }

    /// Hour of day at the start of step `t`.
    pub fn hour_of_day(&self, t: usize) -> f64 {
        ((t % self.steps_per_day()) as f64) * self.dt_hours
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouWindow {
    pub name: String,
    pub start_hour: f64,
    pub end_hour: f64,
    /// AUD/kWh
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tariff {
    /// Explicit price per step, AUD/kWh.
    Series(Vec<f64>),
    /// Daily windows covering `[0, 24)`.
    TimeOfUse { windows: Vec<TouWindow> },
}

impl Tariff {
    /// Five-window residential scheme: off-peak overnight, shoulder through
    /// the day and late evening, peak 15:00 to 21:00.
    pub fn five_window_default() -> Self {
        let w = |name: &str, start_hour: f64, end_hour: f64, price: f64| TouWindow {
            name: name.to_string(),
            start_hour,
            end_hour,
            price,
        };
        Tariff::TimeOfUse {
            windows: vec![
                w("T1", 0.0, 7.0, 0.24871),
                w("T2", 7.0, 15.0, 0.31207),
                w("T3", 15.0, 21.0, 0.52602),
                w("T4", 21.0, 22.0, 0.31207),
                w("T5", 22.0, 24.0, 0.24871),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            Tariff::Series(p) => {
                if let Some(t) = p.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(ScenarioError::InvalidParameter(format!("tariff price at t={t} must be positive")));
                }
            }
            Tariff::TimeOfUse { windows } => {
                let mut w: Vec<&TouWindow> = windows.iter().collect();
                w.sort_by(|a, b| a.start_hour.total_cmp(&b.start_hour));
                let mut at = 0.0;
                for win in &w {
                    if win.start_hour != at || win.end_hour <= win.start_hour {
                        return Err(ScenarioError::InvalidParameter(format!(
                            "ToU windows must tile [0, 24) without gaps or overlaps (window {} at {}..{})",
                            win.name, win.start_hour, win.end_hour
                        )));
                    }
                    if !(win.price > 0.0 && win.price.is_finite()) {
                        return Err(ScenarioError::InvalidParameter(format!("window {} price must be positive", win.name)));
                    }
                    at = win.end_hour;
                }
                if at != 24.0 {
                    return Err(ScenarioError::InvalidParameter("ToU windows must end at hour 24".into()));
                }
            }
        }
        Ok(())
    }

    /// Price of the window containing `hour` in `[0, 24)`.
    pub fn price_at_hour(&self, hour: f64) -> Result<f64, ScenarioError> {
        let Tariff::TimeOfUse { windows } = self else {
            return Err(ScenarioError::OutOfRange("explicit price series has no hour-of-day lookup".into()));
        };
        if !(0.0..24.0).contains(&hour) {
            return Err(ScenarioError::OutOfRange(format!("hour {hour} outside [0, 24)")));
        }
        windows
            .iter()
            .find(|w| w.start_hour <= hour && hour < w.end_hour)
            .map(|w| w.price)
            .ok_or_else(|| ScenarioError::OutOfRange(format!("no window covers hour {hour}")))
    }

    /// Price at step `t` of the horizon.
    pub fn price(&self, t: usize, horizon: &Horizon) -> Result<f64, ScenarioError> {
        if t >= horizon.steps {
            return Err(ScenarioError::OutOfRange(format!("step {t} beyond horizon of {}", horizon.steps)));
        }
        match self {
            Tariff::Series(p) => p
                .get(t)
                .copied()
                .ok_or_else(|| ScenarioError::OutOfRange(format!("price series has no entry for step {t}"))),
            Tariff::TimeOfUse { .. } => self.price_at_hour(horizon.hour_of_day(t)),
        }
    }

    pub fn prices(&self, horizon: &Horizon) -> Result<Vec<f64>, ScenarioError> {
        (0..horizon.steps).map(|t| self.price(t, horizon)).collect()
    }
}

/// Storage device constants and sizing limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CesParameters {
    pub eta_ch: f64,
    /// Discharge divides by this, so it is at least 1.
    pub eta_dis: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// kWh
    pub e_cap_min: f64,
    pub e_cap_max: f64,
    /// kW
    pub p_rate_min: f64,
    pub p_rate_max: f64,
    /// AUD
    pub gamma: f64,
    /// AUD/kWh
    pub delta: f64,
    /// kWh
    pub epsilon_continuity: f64,
    /// Initial energy as a fraction of capacity.
    pub initial_soc: f64,
}

impl Default for CesParameters {
    fn default() -> Self {
        CesParameters {
            eta_ch: 0.98,
            eta_dis: 1.02,
            lambda_min: 0.05,
            lambda_max: 1.0,
            e_cap_min: 200.0,
            e_cap_max: 2000.0,
            p_rate_min: 20.0,
            p_rate_max: 200.0,
            gamma: 24000.0,
            delta: 300.0,
            epsilon_continuity: 1e-4,
            initial_soc: 0.05,
        }
    }
}

impl CesParameters {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidParameter(m));
        let all = [
            self.eta_ch,
            self.eta_dis,
            self.lambda_min,
            self.lambda_max,
            self.e_cap_min,
            self.e_cap_max,
            self.p_rate_min,
            self.p_rate_max,
            self.gamma,
            self.delta,
            self.epsilon_continuity,
            self.initial_soc,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("CES parameters must be finite".into());
        }
        if !(0.0 < self.eta_ch && self.eta_ch <= 1.0) {
            return bad(format!("eta_ch must be in (0, 1], got {}", self.eta_ch));
        }
        if self.eta_dis < 1.0 {
            return bad(format!("eta_dis must be >= 1, got {}", self.eta_dis));
        }
        if !(0.0 <= self.lambda_min && self.lambda_min < self.lambda_max && self.lambda_max <= 1.0) {
            return bad(format!("need 0 <= lambda_min < lambda_max <= 1, got {}, {}", self.lambda_min, self.lambda_max));
        }
        if !(0.0 < self.e_cap_min && self.e_cap_min <= self.e_cap_max) {
            return bad(format!("need 0 < e_cap_min <= e_cap_max, got {}, {}", self.e_cap_min, self.e_cap_max));
        }
        if !(0.0 < self.p_rate_min && self.p_rate_min <= self.p_rate_max) {
            return bad(format!("need 0 < p_rate_min <= p_rate_max, got {}, {}", self.p_rate_min, self.p_rate_max));
        }
        if self.gamma < 0.0 || self.delta < 0.0 || self.epsilon_continuity < 0.0 {
            return bad("gamma, delta and epsilon_continuity must be non-negative".into());
        }
        if !(self.lambda_min <= self.initial_soc && self.initial_soc <= self.lambda_max) {
            return bad(format!("initial_soc {} outside [lambda_min, lambda_max]", self.initial_soc));
        }
        Ok(())
    }

    /// `γ + δ·E_cap`, AUD.
    pub fn investment_cost(&self, e_cap: f64) -> f64 {
        self.gamma + self.delta * e_cap
    }
}

/// Customers, prices and horizon for one study.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    customers: Vec<CustomerProfile>,
    tariff: Tariff,
    horizon: Horizon,
    prices: Vec<f64>,
    node_count: usize,
}

impl Scenario {
    /// Checks every profile against the horizon and the `node_count`
    /// non-slack nodes of the network.
    pub fn new(
        customers: Vec<CustomerProfile>,
        tariff: Tariff,
        horizon: Horizon,
        node_count: usize,
    ) -> Result<Self, ScenarioError> {
        let mut ids = HashSet::new();
        for c in &customers {
            if !ids.insert(c.id.as_str()) {
                return Err(ScenarioError::Parse {
                    path: "profiles".into(),
                    msg: format!("duplicate customer id {}", c.id),
                });
            }
            if c.node == 0 || c.node > node_count {
                return Err(ScenarioError::UnknownNode { customer: c.id.clone(), node: c.node });
            }
            for (name, s) in [("p_load", &c.p_load), ("q_load", &c.q_load), ("p_pv", &c.p_pv)] {
                if s.len() != horizon.steps {
                    return Err(ScenarioError::LengthMismatch(format!(
                        "customer {} {name} has {} steps, horizon has {}",
                        c.id,
                        s.len(),
                        horizon.steps
                    )));
                }
            }
            for t in 0..horizon.steps {
                let ok = |v: f64| v >= 0.0 && v.is_finite();
                if !ok(c.p_load[t]) || !ok(c.p_pv[t]) {
                    return Err(ScenarioError::NegativeLoadOrPv { customer: c.id.clone(), t });
                }
                if !c.q_load[t].is_finite() {
                    return Err(ScenarioError::Parse {
                        path: "profiles".into(),
                        msg: format!("customer {} q_load not finite at t={t}", c.id),
                    });
                }
            }
        }
        tariff.validate()?;
        if let Tariff::Series(p) = &tariff {
            if p.len() != horizon.steps {
                return Err(ScenarioError::LengthMismatch(format!(
                    "price series has {} steps, horizon has {}",
                    p.len(),
                    horizon.steps
                )));
            }
        }
        let prices = tariff.prices(&horizon)?;
        Ok(Scenario { customers, tariff, horizon, prices, node_count })
    }

    pub fn customers(&self) -> &[CustomerProfile] {
        &self.customers
    }

    pub fn customers_at(&self, node: NodeId) -> impl Iterator<Item = &CustomerProfile> {
        self.customers.iter().filter(move |c| c.node == node)
    }

    pub fn tariff(&self) -> &Tariff {
        &self.tariff
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    /// AUD/kWh per step.
    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Σ over each node's customers of load − PV, kW, `[node - 1][t]`.
    pub fn nodal_net_load(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.horizon.steps]; self.node_count];
        for c in &self.customers {
            for (t, v) in out[c.node - 1].iter_mut().enumerate() {
                *v += c.net_position(t);
            }
        }
        out
    }

    /// Σ over each node's customers of reactive demand, kVAR.
    pub fn nodal_reactive(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.horizon.steps]; self.node_count];
        for c in &self.customers {
            for (t, v) in out[c.node - 1].iter_mut().enumerate() {
                *v += c.q_load[t];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn customer(node: NodeId, id: &str, load: f64, pv: f64, steps: usize) -> CustomerProfile {
        CustomerProfile {
            node,
            id: id.into(),
            p_load: vec![load; steps],
            q_load: vec![0.0; steps],
            p_pv: vec![pv; steps],
        }
    }

    #[test]
    fn tou_window_prices_at_boundaries() {
        let tar = Tariff::five_window_default();
        for (h, p) in [
            (0.0, 0.24871),
            (3.0, 0.24871),
            (6.0, 0.24871),
            (7.0, 0.31207),
            (14.0, 0.31207),
            (15.0, 0.52602),
            (16.0, 0.52602),
            (20.0, 0.52602),
            (21.0, 0.31207),
            (22.0, 0.24871),
            (23.0, 0.24871),
        ] {
            assert_eq!(tar.price_at_hour(h).unwrap(), p, "hour {h}");
        }
        assert!(matches!(tar.price_at_hour(24.0), Err(ScenarioError::OutOfRange(_))));
        let h = Horizon::new(48, 1.0).unwrap();
        assert_eq!(tar.price(40, &h).unwrap(), 0.52602);
        assert!(tar.price(48, &h).is_err());
    }

    #[test]
    fn horizon_must_be_whole_days() {
        assert!(matches!(Horizon::new(25, 1.0), Err(ScenarioError::LengthMismatch(_))));
        let h = Horizon::new(96, 0.5).unwrap();
        assert_eq!(h.steps_per_day(), 48);
        assert_eq!(h.day_count(), 2);
        assert_eq!(h.hour_of_day(49), 0.5);
        assert!(Horizon::new(24, 0.7).is_err());
    }

    #[test]
    fn net_position_branches() {
        let c = CustomerProfile {
            node: 1,
            id: "a".into(),
            p_load: vec![2.0, 0.5, 1.0],
            q_load: vec![0.0; 3],
            p_pv: vec![0.5, 2.0, 1.0],
        };
        assert_eq!(c.net_position(0), 1.5);
        assert_eq!(c.branch(0), ExchangeBranch::Deficit);
        assert_eq!(c.net_position(1), -1.5);
        assert_eq!(c.branch(1), ExchangeBranch::Surplus);
        assert_eq!(c.net_position(2), 0.0);
        assert_eq!(c.branch(2), ExchangeBranch::Deficit);
    }

    #[test]
    fn scenario_validation() {
        let h = Horizon::new(24, 1.0).unwrap();
        let tar = Tariff::five_window_default();
        assert!(matches!(
            Scenario::new(vec![customer(3, "a", 1.0, 0.0, 24)], tar.clone(), h, 2),
            Err(ScenarioError::UnknownNode { node: 3, .. })
        ));
        assert!(matches!(
            Scenario::new(vec![customer(0, "a", 1.0, 0.0, 24)], tar.clone(), h, 2),
            Err(ScenarioError::UnknownNode { node: 0, .. })
        ));
        assert!(matches!(
            Scenario::new(vec![customer(1, "a", -1.0, 0.0, 24)], tar.clone(), h, 2),
            Err(ScenarioError::NegativeLoadOrPv { .. })
        ));
        assert!(matches!(
            Scenario::new(vec![customer(1, "a", 1.0, 0.0, 23)], tar.clone(), h, 2),
            Err(ScenarioError::LengthMismatch(_))
        ));
        let s = Scenario::new(
            vec![customer(1, "a", 2.0, 0.5, 24), customer(1, "b", 1.0, 0.0, 24), customer(2, "c", 0.0, 1.0, 24)],
            tar,
            h,
            2,
        )
        .unwrap();
        assert_eq!(s.nodal_net_load()[0][0], 2.5);
        assert_eq!(s.nodal_net_load()[1][5], -1.0);
        assert_eq!(s.customers_at(1).count(), 2);
    }

    #[test]
    fn ces_parameter_checks() {
        let p = CesParameters::default();
        p.validate().unwrap();
        assert!((p.investment_cost(482.15) - 168645.0).abs() <= 1e-9 * 168645.0);
        let bad = CesParameters { e_cap_min: 300.0, e_cap_max: 200.0, ..p.clone() };
        assert!(bad.validate().is_err());
        let bad = CesParameters { eta_dis: 0.9, ..p.clone() };
        assert!(bad.validate().is_err());
        let bad = CesParameters { initial_soc: 0.0, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tou_windows_must_tile_the_day() {
        let Tariff::TimeOfUse { mut windows } = Tariff::five_window_default() else { unreachable!() };
        windows.remove(2);
        assert!(Tariff::TimeOfUse { windows }.validate().is_err());
        assert!(Tariff::Series(vec![0.1, 0.0]).validate().is_err());
    }
}

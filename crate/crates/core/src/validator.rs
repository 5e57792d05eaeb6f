//! Independent replay of a design and schedule.
//!
//! Everything is recomputed from the scenario, the network and the
//! schedule series: nodal absorptions, flows, voltages and losses come from
//! per-line recursion and direct sums, never from the optimization model.
//! Customers are visited in id order so the report does not depend on how
//! either input lists them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cesopt::{CesDesign, ConstraintFamily, Schedule};
use crate::netmodel::{Network, NodeId};
use crate::scenario::{CesParameters, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub power_kw: f64,
    pub energy_kwh: f64,
    pub voltage_v2: f64,
    pub objective_rel: f64,
    /// Charge and discharge both above this counts as simultaneous.
    pub simultaneous_kw: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { power_kw: 1e-6, energy_kwh: 1e-6, voltage_v2: 1e-7, objective_rel: 1e-5, simultaneous_kw: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Worst {
    pub node: Option<NodeId>,
    pub customer: Option<String>,
    pub t: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: ConstraintFamily,
    pub max_violation: f64,
    pub tolerance: f64,
    pub worst: Worst,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    SimultaneousChargeDischarge { t: usize, p_ch: f64, p_dis: f64 },
    ContinuityBreach { day: usize, deviation_kwh: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub loss_kwh: f64,
    pub trade_aud: f64,
    pub invest_aud: f64,
}

impl Objectives {
    pub fn as_array(&self) -> [f64; 3] {
        [self.loss_kwh, self.trade_aud, self.invest_aud]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub families: Vec<FamilyReport>,
    pub recomputed: Objectives,
    pub reported: Option<Objectives>,
    /// `|reported − recomputed| / max(1, |recomputed|)` per objective.
    pub objective_rel_error: Option<[f64; 3]>,
    pub flags: Vec<Flag>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn family(&self, f: ConstraintFamily) -> &FamilyReport {
        self.families.iter().find(|r| r.family == f).expect("every family is reported")
    }
}

struct Tracker {
    family: ConstraintFamily,
    tol: f64,
    max: f64,
    worst: Worst,
}

impl Tracker {
    fn new(family: ConstraintFamily, tol: f64) -> Self {
        Tracker { family, tol, max: 0.0, worst: Worst::default() }
    }

    fn see(&mut self, v: f64, node: Option<NodeId>, customer: Option<&str>, t: Option<usize>) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.max {
            self.max = v;
            self.worst = Worst { node, customer: customer.map(str::to_string), t };
        }
    }

    fn report(self) -> FamilyReport {
        FamilyReport {
            family: self.family,
            max_violation: self.max,
            tolerance: self.tol,
            pass: self.max <= self.tol,
            worst: self.worst,
        }
    }
}

fn outside(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Replays `schedule` and `design` against every constraint family and
/// recomputes the three objectives. `reported`, when given, is compared
/// with the recomputed values.
pub fn validate(
    net: &Network,
    scenario: &Scenario,
    params: &CesParameters,
    design: &CesDesign,
    schedule: &Schedule,
    reported: Option<Objectives>,
    tol: &Tolerances,
) -> Result<ValidationReport, ValidationError> {
    let h = scenario.horizon();
    let steps = h.steps;
    let dt = h.dt_hours;
    let nodes = net.node_count();
    let dim = |what: String| Err(ValidationError::DimensionMismatch(what));

    for (name, s) in [
        ("p_ch", &schedule.p_ch),
        ("p_dis", &schedule.p_dis),
        ("energy", &schedule.energy),
        ("p_grid_ces", &schedule.p_grid_ces),
    ] {
        if s.len() != steps {
            return dim(format!("{name} has {} steps, horizon has {steps}", s.len()));
        }
    }
    if scenario.node_count() != nodes {
        return dim(format!("scenario has {} nodes, network {nodes}", scenario.node_count()));
    }
    let ncust = schedule.customer_ids.len();
    if schedule.p_grid_customer.len() != ncust || schedule.p_ces_customer.len() != ncust {
        return dim("customer series do not match customer ids".into());
    }
    if ncust != scenario.customers().len() {
        return dim(format!("schedule has {ncust} customers, scenario {}", scenario.customers().len()));
    }
    let index: HashMap<&str, usize> = schedule.customer_ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(ncust);
    for (c, cust) in scenario.customers().iter().enumerate() {
        let Some(&k) = index.get(cust.id.as_str()) else {
            return dim(format!("schedule has no series for customer {}", cust.id));
        };
        if schedule.p_grid_customer[k].len() != steps || schedule.p_ces_customer[k].len() != steps {
            return dim(format!("customer {} series length differs from horizon", cust.id));
        }
        order.push((c, k));
    }
    order.sort_by(|a, b| scenario.customers()[a.0].id.cmp(&scenario.customers()[b.0].id));
    if design.location == 0 || design.location > nodes {
        return dim(format!("storage location {} is not a non-slack node", design.location));
    }

    use ConstraintFamily::*;
    let mut exchange = Tracker::new(CustomerExchange, tol.power_kw);
    let mut balance = Tracker::new(CesGridBalance, tol.power_kw);
    let mut rating = Tracker::new(Rating, tol.power_kw);
    let mut recursion = Tracker::new(SocRecursion, tol.energy_kwh);
    let mut soc = Tracker::new(SocBounds, tol.energy_kwh);
    let mut continuity = Tracker::new(DayContinuity, tol.energy_kwh);
    let mut sizing = Tracker::new(Sizing, tol.power_kw);
    let mut voltage = Tracker::new(Voltage, tol.voltage_v2);
    let mut flags = Vec::new();

    let loc = Some(design.location);
    sizing.see(outside(design.e_cap, params.e_cap_min, params.e_cap_max), loc, None, None);
    sizing.see(outside(design.p_rate, params.p_rate_min, params.p_rate_max), loc, None, None);
    let one_hot = design.siting.len() == nodes
        && design.siting.iter().enumerate().all(|(i, &a)| a == u8::from(i + 1 == design.location));
    if !one_hot {
        sizing.see(1.0, loc, None, None);
    }

    for &(c, k) in &order {
        let cust = &scenario.customers()[c];
        for t in 0..steps {
            let v = cust.net_position(t);
            let g = schedule.p_grid_customer[k][t];
            let bound = if v >= 0.0 { outside(g, 0.0, v) } else { outside(g, v, 0.0) };
            let identity = (g + schedule.p_ces_customer[k][t] - v).abs();
            exchange.see(bound.max(identity), Some(cust.node), Some(&cust.id), Some(t));
        }
    }

    let e0 = schedule.initial_energy;
    recursion.see((e0 - params.initial_soc * design.e_cap).abs(), loc, None, None);
    let (emin, emax) = (params.lambda_min * design.e_cap, params.lambda_max * design.e_cap);
    let mut prev = e0;
    for t in 0..steps {
        let (ch, dis) = (schedule.p_ch[t], schedule.p_dis[t]);
        let ces_sum: f64 = order.iter().map(|&(_, k)| schedule.p_ces_customer[k][t]).sum();
        balance.see((schedule.p_grid_ces[t] - ces_sum - ch + dis).abs(), loc, None, Some(t));
        rating.see(outside(ch, 0.0, design.p_rate).max(outside(dis, 0.0, design.p_rate)), loc, None, Some(t));
        if ch > tol.simultaneous_kw && dis > tol.simultaneous_kw {
            flags.push(Flag::SimultaneousChargeDischarge { t, p_ch: ch, p_dis: dis });
        }
        let e = schedule.energy[t];
        let expect = prev + (params.eta_ch * ch - dis / params.eta_dis) * dt;
        recursion.see((e - expect).abs(), loc, None, Some(t));
        soc.see(outside(e, emin, emax), loc, None, Some(t));
        if (t + 1) % h.steps_per_day() == 0 {
            let dev = (e - e0).abs();
            let excess = (dev - params.epsilon_continuity).max(0.0);
            continuity.see(excess, loc, None, Some(t));
            if excess > tol.energy_kwh {
                flags.push(Flag::ContinuityBreach { day: (t + 1) / h.steps_per_day(), deviation_kwh: dev });
            }
        }
        prev = e;
    }

    // nodal absorptions from customer data plus the storage's own exchange
    let mut p = vec![vec![0.0; steps]; nodes];
    let mut q = vec![vec![0.0; steps]; nodes];
    for &(c, _) in &order {
        let cust = &scenario.customers()[c];
        for t in 0..steps {
            p[cust.node - 1][t] += cust.net_position(t);
            q[cust.node - 1][t] += cust.q_load[t];
        }
    }
    for t in 0..steps {
        p[design.location - 1][t] += schedule.p_ch[t] - schedule.p_dis[t];
    }
    let u = net.voltages_by_recursion(&p, &q).expect("shapes checked");
    for (i, row) in u.u.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            voltage.see(outside(v, net.umin(), net.umax()), Some(i + 1), None, Some(t));
        }
    }

    let losses = net.line_losses(&p, &q).expect("shapes checked");
    let loss_kwh = (0..steps).map(|t| losses.iter().map(|l| l[t]).sum::<f64>() * dt).sum();
    let trade_aud = (0..steps)
        .map(|t| {
            let grid: f64 = order.iter().map(|&(_, k)| schedule.p_grid_customer[k][t]).sum();
            scenario.prices()[t] * (grid + schedule.p_grid_ces[t]) * dt
        })
        .sum();
    let recomputed = Objectives { loss_kwh, trade_aud, invest_aud: params.investment_cost(design.e_cap) };

    let objective_rel_error = reported.map(|r| {
        let (a, b) = (r.as_array(), recomputed.as_array());
        [0, 1, 2].map(|i| (a[i] - b[i]).abs() / b[i].abs().max(1.0))
    });
    let families: Vec<FamilyReport> = [exchange, balance, rating, recursion, soc, continuity, sizing, voltage]
        .into_iter()
        .map(Tracker::report)
        .collect();
    let objectives_ok = objective_rel_error.is_none_or(|e| e.iter().all(|v| *v <= tol.objective_rel));
    let pass = families.iter().all(|f| f.pass) && objectives_ok;
    Ok(ValidationReport { families, recomputed, reported, objective_rel_error, flags, pass })
}

//! One storage location turned into a quadratic program.
//!
//! Per step `t` the decision vector holds
//! `[p_ch, p_dis, E, p_grid_ces, p_grid_c0 .. p_grid_cC]`, steps are laid
//! out one after another, and the capacity and rating close the vector.
//! Customer-to-storage exchange is not a variable: it is the customer's net
//! position minus its grid exchange.
//!
//! `E(t)` is the energy at the end of step `t`. The energy before the first
//! step is `initial_soc · E_cap`, and the end of every day must return to
//! it within `epsilon_continuity`.

use serde::{Deserialize, Serialize};

use crate::netmodel::{Network, NodeId};
use crate::qpcore::{CscMatrix, QpError, QuadraticProgram};
use crate::scenario::{CesParameters, ExchangeBranch, Scenario, ScenarioError};

const KW: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("the storage cannot be placed at the slack node")]
    SlackLocation,
    #[error("node {0} is not in the network")]
    UnknownLocation(NodeId),
    #[error("infeasible parameter boxes: {0}")]
    InfeasibleBoxes(String),
    #[error("scenario covers {scenario} nodes, network has {network}")]
    NetworkMismatch { scenario: usize, network: usize },
    #[error("node {node} violates its voltage limits at t={t} and the storage cannot affect it")]
    UncontrollableVoltage { node: NodeId, t: usize },
    #[error("decision vector has length {got}, layout expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    steps: usize,
    customers: usize,
}

impl VariableLayout {
    pub fn new(steps: usize, customers: usize) -> Self {
        VariableLayout { steps, customers }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn customers(&self) -> usize {
        self.customers
    }

    fn stride(&self) -> usize {
        4 + self.customers
    }

    pub fn p_ch(&self, t: usize) -> usize {
        t * self.stride()
    }

    pub fn p_dis(&self, t: usize) -> usize {
        t * self.stride() + 1
    }

    pub fn energy(&self, t: usize) -> usize {
        t * self.stride() + 2
    }

    pub fn p_grid_ces(&self, t: usize) -> usize {
        t * self.stride() + 3
    }

    pub fn p_grid_customer(&self, t: usize, c: usize) -> usize {
        t * self.stride() + 4 + c
    }

    pub fn e_cap(&self) -> usize {
        self.steps * self.stride()
    }

    pub fn p_rate(&self) -> usize {
        self.e_cap() + 1
    }

    pub fn n(&self) -> usize {
        self.steps * self.stride() + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    CustomerExchange,
    CesGridBalance,
    Rating,
    SocRecursion,
    SocBounds,
    DayContinuity,
    Sizing,
    Voltage,
}

/// `½xᵀPx + qᵀx + constant`, with `P` stored in full.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.mul_vec(x, &mut px);
        self.constant
            + x.iter()
                .zip(&px)
                .zip(&self.q)
                .map(|((xi, pi), qi)| xi * (0.5 * pi + qi))
                .sum::<f64>()
    }
}

/// Loss (kWh), trading cost (AUD) and investment cost (AUD).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSet {
    pub loss: QuadraticObjective,
    pub trade: QuadraticObjective,
    pub invest: QuadraticObjective,
}

impl ObjectiveSet {
    pub fn get(&self, i: usize) -> &QuadraticObjective {
        [&self.loss, &self.trade, &self.invest][i]
    }

    pub fn evaluate(&self, x: &[f64]) -> [f64; 3] {
        [self.loss.evaluate(x), self.trade.evaluate(x), self.invest.evaluate(x)]
    }
}

#[derive(Debug, Clone)]
pub struct ModelInstance {
    location: NodeId,
    node_count: usize,
    layout: VariableLayout,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    families: Vec<ConstraintFamily>,
    objectives: ObjectiveSet,
    customer_ids: Vec<String>,
    net: Vec<Vec<f64>>,
    nodal_net: Vec<Vec<f64>>,
    initial_soc: f64,
}

struct Rows {
    trip: Vec<(usize, usize, f64)>,
    l: Vec<f64>,
    u: Vec<f64>,
    families: Vec<ConstraintFamily>,
}

impl Rows {
    fn push(&mut self, fam: ConstraintFamily, coeffs: &[(usize, f64)], lo: f64, hi: f64) {
        let r = self.l.len();
        self.trip.extend(coeffs.iter().filter(|c| c.1 != 0.0).map(|&(j, v)| (r, j, v)));
        self.l.push(lo);
        self.u.push(hi);
        self.families.push(fam);
    }
}

/// Builds the constraint set for a storage unit at `location` together
/// with the three objectives.
pub fn build_model(
    net: &Network,
    scenario: &Scenario,
    params: &CesParameters,
    location: NodeId,
) -> Result<ModelInstance, ModelError> {
    if location == 0 {
        return Err(ModelError::SlackLocation);
    }
    let nodes = net.node_count();
    if location > nodes {
        return Err(ModelError::UnknownLocation(location));
    }
    if scenario.node_count() != nodes {
        return Err(ModelError::NetworkMismatch { scenario: scenario.node_count(), network: nodes });
    }
    params.validate().map_err(|e| match e {
        ScenarioError::InvalidParameter(m) => ModelError::InfeasibleBoxes(m),
        other => ModelError::InfeasibleBoxes(other.to_string()),
    })?;

    let h = scenario.horizon();
    let steps = h.steps;
    let dt = h.dt_hours;
    let customers = scenario.customers();
    let lay = VariableLayout::new(steps, customers.len());
    let n = lay.n();
    let mut rows = Rows { trip: Vec::new(), l: Vec::new(), u: Vec::new(), families: Vec::new() };
    use ConstraintFamily::*;

    let net_pos: Vec<Vec<f64>> = customers
        .iter()
        .map(|c| (0..steps).map(|t| c.net_position(t)).collect())
        .collect();
    let nodal_net = scenario.nodal_net_load();
    let nodal_q = scenario.nodal_reactive();
    let base_u = net
        .lindistflow_voltages(&nodal_net, &nodal_q)
        .expect("scenario and network dimensions agree");
    let r_col: Vec<f64> = (0..nodes).map(|i| net.path_resistance()[(i, location - 1)]).collect();

    for t in 0..steps {
        for (c, cust) in customers.iter().enumerate() {
            let v = net_pos[c][t];
            let (lo, hi) = match cust.branch(t) {
                ExchangeBranch::Deficit => (0.0, v),
                ExchangeBranch::Surplus => (v, 0.0),
            };
            rows.push(CustomerExchange, &[(lay.p_grid_customer(t, c), 1.0)], lo, hi);
        }

        // p_grid_ces = Σ_c (net_c − p_grid_c) + p_ch − p_dis
        let mut coeffs = vec![(lay.p_grid_ces(t), 1.0), (lay.p_ch(t), -1.0), (lay.p_dis(t), 1.0)];
        coeffs.extend((0..customers.len()).map(|c| (lay.p_grid_customer(t, c), 1.0)));
        let total: f64 = net_pos.iter().map(|s| s[t]).sum();
        rows.push(CesGridBalance, &coeffs, total, total);

        for v in [lay.p_ch(t), lay.p_dis(t)] {
            rows.push(Rating, &[(v, 1.0)], 0.0, f64::INFINITY);
            rows.push(Rating, &[(v, 1.0), (lay.p_rate(), -1.0)], f64::NEG_INFINITY, 0.0);
        }

        let prev = if t == 0 { (lay.e_cap(), -params.initial_soc) } else { (lay.energy(t - 1), -1.0) };
        rows.push(
            SocRecursion,
            &[
                (lay.energy(t), 1.0),
                prev,
                (lay.p_ch(t), -params.eta_ch * dt),
                (lay.p_dis(t), dt / params.eta_dis),
            ],
            0.0,
            0.0,
        );

        rows.push(SocBounds, &[(lay.energy(t), 1.0), (lay.e_cap(), -params.lambda_min)], 0.0, f64::INFINITY);
        rows.push(SocBounds, &[(lay.energy(t), 1.0), (lay.e_cap(), -params.lambda_max)], f64::NEG_INFINITY, 0.0);

        if (t + 1) % h.steps_per_day() == 0 {
            let eps = params.epsilon_continuity;
            rows.push(
                DayContinuity,
                &[(lay.energy(t), 1.0), (lay.e_cap(), -params.initial_soc)],
                -eps,
                eps,
            );
        }

        // U_i = U_base_i − 2·R̃_{i,loc}·(p_ch − p_dis), written in kW of (p_ch − p_dis)
        for i in 0..nodes {
            let ub = base_u.u[i][t];
            let k = 2.0 * KW * r_col[i];
            if k == 0.0 {
                if ub < net.umin() || ub > net.umax() {
                    return Err(ModelError::UncontrollableVoltage { node: i + 1, t });
                }
                continue;
            }
            rows.push(
                Voltage,
                &[(lay.p_ch(t), 1.0), (lay.p_dis(t), -1.0)],
                (ub - net.umax()) / k,
                (ub - net.umin()) / k,
            );
        }
    }
    rows.push(Sizing, &[(lay.e_cap(), 1.0)], params.e_cap_min, params.e_cap_max);
    rows.push(Sizing, &[(lay.p_rate(), 1.0)], params.p_rate_min, params.p_rate_max);

    let m = rows.l.len();
    let a = CscMatrix::from_triplets(m, n, &rows.trip);
    let objectives = objective_vectors_for(net, scenario, params, location, &lay, &nodal_net, &nodal_q);
    Ok(ModelInstance {
        location,
        node_count: nodes,
        layout: lay,
        a,
        l: rows.l,
        u: rows.u,
        families: rows.families,
        objectives,
        customer_ids: customers.iter().map(|c| c.id.clone()).collect(),
        net: net_pos,
        nodal_net,
        initial_soc: params.initial_soc,
    })
}

fn objective_vectors_for(
    net: &Network,
    scenario: &Scenario,
    params: &CesParameters,
    location: NodeId,
    lay: &VariableLayout,
    nodal_net: &[Vec<f64>],
    nodal_q: &[Vec<f64>],
) -> ObjectiveSet {
    let n = lay.n();
    let dt = scenario.horizon().dt_hours;
    let form = net.loss_quadratic_form(nodal_q).expect("dimensions checked");
    let hjj = form.hessian[(location - 1, location - 1)];
    let j = location - 1;

    // loss(t) = (p + e_j d)ᵀH(p + e_j d) + c0 = base + 2 d (Hp)_j + H_jj d², d = p_ch − p_dis
    let mut lp = Vec::new();
    let mut lq = vec![0.0; n];
    let mut lc = 0.0;
    for t in 0..lay.steps() {
        let pt: Vec<f64> = nodal_net.iter().map(|r| r[t]).collect();
        lc += dt * form.evaluate_step(t, &pt);
        let hp: f64 = (0..pt.len()).map(|k| form.hessian[(j, k)] * pt[k]).sum();
        let (c, d) = (lay.p_ch(t), lay.p_dis(t));
        lq[c] += 2.0 * dt * hp;
        lq[d] -= 2.0 * dt * hp;
        let w = 2.0 * dt * hjj;
        lp.extend([(c, c, w), (d, d, w), (c, d, -w), (d, c, -w)]);
    }

    let mut tq = vec![0.0; n];
    for (t, price) in scenario.prices().iter().enumerate() {
        tq[lay.p_grid_ces(t)] = price * dt;
        for c in 0..lay.customers() {
            tq[lay.p_grid_customer(t, c)] = price * dt;
        }
    }

    let mut iq = vec![0.0; n];
    iq[lay.e_cap()] = params.delta;

    ObjectiveSet {
        loss: QuadraticObjective { p: CscMatrix::from_triplets(n, n, &lp), q: lq, constant: lc },
        trade: QuadraticObjective { p: CscMatrix::zeros(n, n), q: tq, constant: 0.0 },
        invest: QuadraticObjective { p: CscMatrix::zeros(n, n), q: iq, constant: params.gamma },
    }
}

/// The storage design: where it sits and how large it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesDesign {
    pub location: NodeId,
    /// One entry per non-slack node, 1 at the chosen location.
    pub siting: Vec<u8>,
    /// kWh
    pub e_cap: f64,
    /// kW
    pub p_rate: f64,
}

/// Operating schedule in kW / kWh, per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub p_ch: Vec<f64>,
    pub p_dis: Vec<f64>,
    /// Energy at the end of each step.
    pub energy: Vec<f64>,
    /// Energy before the first step.
    pub initial_energy: f64,
    /// Storage exchange with the grid, positive when importing.
    pub p_grid_ces: Vec<f64>,
    pub customer_ids: Vec<String>,
    /// Customer exchange with the grid, `[customer][t]`.
    pub p_grid_customer: Vec<Vec<f64>>,
    /// Customer exchange with the storage, `[customer][t]`.
    pub p_ces_customer: Vec<Vec<f64>>,
    /// Real absorption per non-slack node, `[node - 1][t]`.
    pub nodal_p: Vec<Vec<f64>>,
}

impl ModelInstance {
    pub fn location(&self) -> NodeId {
        self.location
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn constraint_matrix(&self) -> &CscMatrix {
        &self.a
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.l, &self.u)
    }

    pub fn families(&self) -> &[ConstraintFamily] {
        &self.families
    }

    pub fn objectives(&self) -> &ObjectiveSet {
        &self.objectives
    }

    /// QP minimizing `Σ_i coeff_i · f_i` over the feasible set; constants
    /// are dropped.
    pub fn program(&self, coeffs: [f64; 3]) -> Result<QuadraticProgram, ModelError> {
        let n = self.layout.n();
        let mut trip = Vec::new();
        let mut q = vec![0.0; n];
        for (i, &w) in coeffs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let o = self.objectives.get(i);
            trip.extend(o.p.triplets().map(|(r, c, v)| (r, c, w * v)));
            for (qi, oi) in q.iter_mut().zip(&o.q) {
                *qi += w * oi;
            }
        }
        Ok(QuadraticProgram::new(
            CscMatrix::from_triplets(n, n, &trip),
            q,
            self.a.clone(),
            self.l.clone(),
            self.u.clone(),
        )?)
    }

    pub fn extract_schedule(&self, x: &[f64]) -> Result<(CesDesign, Schedule), ModelError> {
        let lay = &self.layout;
        if x.len() != lay.n() {
            return Err(ModelError::DimensionMismatch { got: x.len(), expected: lay.n() });
        }
        let steps = lay.steps();
        let series = |f: &dyn Fn(usize) -> usize| (0..steps).map(|t| x[f(t)]).collect::<Vec<f64>>();
        let p_ch = series(&|t| lay.p_ch(t));
        let p_dis = series(&|t| lay.p_dis(t));
        let p_grid_customer: Vec<Vec<f64>> = (0..lay.customers())
            .map(|c| series(&|t| lay.p_grid_customer(t, c)))
            .collect();
        let p_ces_customer = p_grid_customer
            .iter()
            .zip(&self.net)
            .map(|(g, v)| g.iter().zip(v).map(|(g, v)| v - g).collect())
            .collect();
        let mut nodal_p = self.nodal_net.clone();
        for t in 0..steps {
            nodal_p[self.location - 1][t] += p_ch[t] - p_dis[t];
        }
        let e_cap = x[lay.e_cap()];
        let mut siting = vec![0u8; self.node_count];
        siting[self.location - 1] = 1;
        Ok((
            CesDesign { location: self.location, siting, e_cap, p_rate: x[lay.p_rate()] },
            Schedule {
                p_ch,
                p_dis,
                energy: series(&|t| lay.energy(t)),
                initial_energy: self.initial_soc * e_cap,
                p_grid_ces: series(&|t| lay.p_grid_ces(t)),
                customer_ids: self.customer_ids.clone(),
                p_grid_customer,
                p_ces_customer,
                nodal_p,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_network, Line};
    use crate::scenario::{CustomerProfile, Horizon, Tariff};

    fn small(pv: f64) -> (Network, Scenario) {
        let net = build_network(
            &[Line { from: 0, to: 1, r: 0.02, x: 0.01 }, Line { from: 1, to: 2, r: 0.03, x: 0.01 }],
            160000.0,
            0.9025 * 160000.0,
            1.1025 * 160000.0,
        )
        .unwrap();
        let cust = CustomerProfile {
            node: 2,
            id: "c".into(),
            p_load: vec![1.0; 24],
            q_load: vec![0.0; 24],
            p_pv: vec![pv; 24],
        };
        let sc = Scenario::new(vec![cust], Tariff::five_window_default(), Horizon::new(24, 1.0).unwrap(), 2).unwrap();
        (net, sc)
    }

    #[test]
    fn layout_size_for_one_customer_day() {
        let (net, sc) = small(0.0);
        let m = build_model(&net, &sc, &CesParameters::default(), 1).unwrap();
        assert_eq!(m.layout().n(), 24 * 5 + 2);
        let prob = m.program([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(prob.n(), 122);
    }

    #[test]
    fn no_pv_means_deficit_bounds() {
        let (net, sc) = small(0.0);
        let m = build_model(&net, &sc, &CesParameters::default(), 2).unwrap();
        let (l, u) = m.bounds();
        for (r, f) in m.families().iter().enumerate() {
            if *f == ConstraintFamily::CustomerExchange {
                assert_eq!((l[r], u[r]), (0.0, 1.0));
            }
        }
        let (net, sc) = small(3.0);
        let m = build_model(&net, &sc, &CesParameters::default(), 2).unwrap();
        let (l, u) = m.bounds();
        let r = m.families().iter().position(|f| *f == ConstraintFamily::CustomerExchange).unwrap();
        assert_eq!((l[r], u[r]), (-2.0, 0.0));
    }

    #[test]
    fn soc_row_arithmetic() {
        let (net, sc) = small(0.0);
        let m = build_model(&net, &sc, &CesParameters::default(), 1).unwrap();
        let lay = *m.layout();
        let a = m.constraint_matrix().to_dense();
        let r = m
            .families()
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == ConstraintFamily::SocRecursion)
            .map(|(r, _)| r)
            .nth(3)
            .unwrap();
        // E(3) = E(2) + 0.98·10·1 with E(2) = 100 gives 109.8
        let mut x = vec![0.0; lay.n()];
        x[lay.energy(2)] = 100.0;
        x[lay.p_ch(3)] = 10.0;
        x[lay.energy(3)] = 109.8;
        let ax: f64 = a[r].iter().zip(&x).map(|(a, x)| a * x).sum();
        assert!(ax.abs() < 1e-12);
    }

    #[test]
    fn investment_and_trade_objectives() {
        let (net, sc) = small(0.0);
        let m = build_model(&net, &sc, &CesParameters::default(), 1).unwrap();
        let lay = *m.layout();
        let mut x = vec![0.0; lay.n()];
        for (cap, cost) in [(482.15, 168645.0), (601.32, 204396.0), (547.69, 188307.0)] {
            x[lay.e_cap()] = cap;
            let f = m.objectives().invest.evaluate(&x);
            assert!((f - cost).abs() <= 1e-9 * cost, "{f}");
        }
        x[lay.e_cap()] = 0.0;
        assert_eq!(m.objectives().trade.evaluate(&x), 0.0);
    }

    #[test]
    fn location_errors() {
        let (net, sc) = small(0.0);
        let p = CesParameters::default();
        assert_eq!(build_model(&net, &sc, &p, 0).unwrap_err(), ModelError::SlackLocation);
        assert_eq!(build_model(&net, &sc, &p, 3).unwrap_err(), ModelError::UnknownLocation(3));
        let bad = CesParameters { e_cap_min: 500.0, e_cap_max: 400.0, ..p };
        assert!(matches!(build_model(&net, &sc, &bad, 1), Err(ModelError::InfeasibleBoxes(_))));
    }

    #[test]
    fn extracted_schedule_reconstructs_exchange() {
        let (net, sc) = small(0.4);
        let m = build_model(&net, &sc, &CesParameters::default(), 1).unwrap();
        let lay = *m.layout();
        let mut x = vec![0.0; lay.n()];
        x[lay.e_cap()] = 300.0;
        x[lay.p_ch(5)] = 5.0;
        x[lay.p_dis(5)] = 5.0;
        x[lay.p_grid_customer(5, 0)] = 0.25;
        let (d, s) = m.extract_schedule(&x).unwrap();
        assert_eq!(d.siting, vec![1, 0]);
        assert_eq!(s.p_ces_customer[0][5], 0.6 - 0.25);
        assert_eq!(s.nodal_p[0][5], 0.0);
        assert!((s.nodal_p[1][5] - 0.6).abs() < 1e-15);
        assert_eq!(s.initial_energy, 15.0);
        assert!(m.extract_schedule(&x[1..]).is_err());
    }
}

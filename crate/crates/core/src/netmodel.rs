//! Radial network model and LinDistFlow evaluation.
//!
//! Node 0 is the slack bus. Non-slack nodes are `1..=N`; per-node series
//! are indexed `[node - 1][t]`, and line `k` is always the line feeding node
//! `k + 1`, so line-indexed series share the same layout.
//!
//! Powers cross the API in kW/kVAR and are converted to W/var internally, so
//! squared voltages stay in V² and impedances in ohm.

use std::collections::VecDeque;

use nalgebra::DMatrix;

pub type NodeId = usize;

const KW: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    /// ohm
    pub r: f64,
    /// ohm
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("network has no lines")]
    Empty,
    #[error("line {from}-{to} closes a cycle")]
    CycleDetected { from: NodeId, to: NodeId },
    #[error("node {0} is not connected to the slack node")]
    DisconnectedNode(NodeId),
    #[error("line {from}-{to} needs r > 0 and x >= 0, got r={r}, x={x}")]
    NonPositiveImpedance { from: NodeId, to: NodeId, r: f64, x: f64 },
    #[error("invalid voltage limits: {0}")]
    InvalidVoltage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Squared voltage magnitudes, V², indexed `[node - 1][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageProfile {
    pub u: Vec<Vec<f64>>,
}

impl VoltageProfile {
    pub fn min(&self) -> f64 {
        self.u.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.u.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    /// Oriented away from the slack; `lines[k].to == k + 1`.
    lines: Vec<Line>,
    /// BFS order of non-slack nodes, parents before children.
    order: Vec<NodeId>,
    downstream: Vec<Vec<NodeId>>,
    r_path: DMatrix<f64>,
    x_path: DMatrix<f64>,
    u0: f64,
    umin: f64,
    umax: f64,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
}

/// Validates a radial network and precomputes downstream sets and the
/// path impedance matrices. Voltages are squared magnitudes in V².
pub fn build_network(lines: &[Line], u0: f64, umin: f64, umax: f64) -> Result<Network, NetError> {
    if lines.is_empty() {
        return Err(NetError::Empty);
    }
    if !(u0 > 0.0 && u0.is_finite() && umin.is_finite() && umax.is_finite()) {
        return Err(NetError::InvalidVoltage(format!("U0={u0}, Umin={umin}, Umax={umax}")));
    }
    if !(0.0 <= umin && umin < umax) {
        return Err(NetError::InvalidVoltage(format!("need 0 <= Umin < Umax, got {umin}, {umax}")));
    }
    for l in lines {
        if !(l.r > 0.0 && l.r.is_finite() && l.x >= 0.0 && l.x.is_finite()) {
            return Err(NetError::NonPositiveImpedance { from: l.from, to: l.to, r: l.r, x: l.x });
        }
    }

    let nodes = lines.iter().map(|l| l.from.max(l.to)).max().unwrap_or(0) + 1;
    let mut ds = DisjointSet { parent: (0..nodes).collect() };
    let mut adj = vec![Vec::new(); nodes];
    for (k, l) in lines.iter().enumerate() {
        let (a, b) = (ds.find(l.from), ds.find(l.to));
        if a == b {
            return Err(NetError::CycleDetected { from: l.from, to: l.to });
        }
        ds.parent[a] = b;
        adj[l.from].push(k);
        adj[l.to].push(k);
    }

    let mut into: Vec<Option<Line>> = vec![None; nodes];
    let mut seen = vec![false; nodes];
    let mut order = Vec::with_capacity(nodes - 1);
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &k in &adj[i] {
            let l = lines[k];
            let j = if l.from == i { l.to } else { l.from };
            if !seen[j] {
                seen[j] = true;
                into[j] = Some(Line { from: i, to: j, r: l.r, x: l.x });
                order.push(j);
                queue.push_back(j);
            }
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(NetError::DisconnectedNode(j));
    }
    let oriented: Vec<Line> = into[1..].iter().map(|l| l.expect("reached")).collect();
    let n = nodes - 1;

    // W_j: walk up from every node, registering it with each ancestor
    let mut downstream = vec![Vec::new(); n];
    for k in 1..=n {
        let mut j = k;
        while j != 0 {
            downstream[j - 1].push(k);
            j = oriented[j - 1].from;
        }
    }
    for w in &mut downstream {
        w.sort_unstable();
    }

    // R̃_ij: resistance of the shared part of the paths from the slack to i and j
    let mut r_path = DMatrix::zeros(n, n);
    let mut x_path = DMatrix::zeros(n, n);
    for (j, w) in downstream.iter().enumerate() {
        let l = oriented[j];
        for &a in w {
            for &b in w {
                r_path[(a - 1, b - 1)] += l.r;
                x_path[(a - 1, b - 1)] += l.x;
            }
        }
    }

    Ok(Network { lines: oriented, order, downstream, r_path, x_path, u0, umin, umax })
}

impl Network {
    /// Number of non-slack nodes.
    pub fn node_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn parent(&self, j: NodeId) -> NodeId {
        self.lines[j - 1].from
    }

    /// Nodes supplied through the line into `j`, including `j`.
    pub fn downstream_set(&self, j: NodeId) -> &[NodeId] {
        &self.downstream[j - 1]
    }

    pub fn path_resistance(&self) -> &DMatrix<f64> {
        &self.r_path
    }

    pub fn path_reactance(&self) -> &DMatrix<f64> {
        &self.x_path
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn umin(&self) -> f64 {
        self.umin
    }

    pub fn umax(&self) -> f64 {
        self.umax
    }

    fn check_shape(&self, what: &str, s: &[Vec<f64>]) -> Result<usize, NetError> {
        let n = self.node_count();
        if s.len() != n {
            return Err(NetError::DimensionMismatch(format!("{what} has {} rows, network has {n} nodes", s.len())));
        }
        let t = s.first().map_or(0, Vec::len);
        if s.iter().any(|r| r.len() != t) {
            return Err(NetError::DimensionMismatch(format!("{what} rows differ in length")));
        }
        Ok(t)
    }

    fn check_pair(&self, p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<usize, NetError> {
        let tp = self.check_shape("p", p)?;
        let tq = self.check_shape("q", q)?;
        if tp != tq {
            return Err(NetError::DimensionMismatch(format!("p has {tp} steps, q has {tq}")));
        }
        Ok(tp)
    }

    /// Line flows in kW/kVAR, `[line][t]`, each the sum of absorptions
    /// downstream of the line.
    pub fn line_flows(&self, p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), NetError> {
        let steps = self.check_pair(p, q)?;
        let agg = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
            self.downstream
                .iter()
                .map(|w| (0..steps).map(|t| w.iter().map(|&k| s[k - 1][t]).sum()).collect())
                .collect()
        };
        Ok((agg(p), agg(q)))
    }

    /// `U = U0·1 − 2R̃p − 2X̃q` with p, q in kW/kVAR.
    pub fn lindistflow_voltages(&self, p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<VoltageProfile, NetError> {
        let steps = self.check_pair(p, q)?;
        let n = self.node_count();
        let mut u = vec![vec![self.u0; steps]; n];
        for (i, row) in u.iter_mut().enumerate() {
            for k in 0..n {
                let (r, x) = (self.r_path[(i, k)], self.x_path[(i, k)]);
                if r == 0.0 && x == 0.0 {
                    continue;
                }
                for t in 0..steps {
                    row[t] -= 2.0 * KW * (r * p[k][t] + x * q[k][t]);
                }
            }
        }
        Ok(VoltageProfile { u })
    }

    /// Same voltages by walking the tree: `U_j = U_i − 2(r P_ij + x Q_ij)`.
    pub fn voltages_by_recursion(&self, p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<VoltageProfile, NetError> {
        let (pf, qf) = self.line_flows(p, q)?;
        let steps = pf.first().map_or(0, Vec::len);
        let mut u = vec![vec![0.0; steps]; self.node_count()];
        for &j in &self.order {
            let l = self.lines[j - 1];
            for t in 0..steps {
                let up = if l.from == 0 { self.u0 } else { u[l.from - 1][t] };
                u[j - 1][t] = up - 2.0 * KW * (l.r * pf[j - 1][t] + l.x * qf[j - 1][t]);
            }
        }
        Ok(VoltageProfile { u })
    }

    /// Per-line losses in kW, `r(P² + Q²)/U0`, `[line][t]`.
    pub fn line_losses(&self, p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NetError> {
        let (pf, qf) = self.line_flows(p, q)?;
        Ok(self
            .lines
            .iter()
            .enumerate()
            .map(|(k, l)| {
                pf[k].iter()
                    .zip(&qf[k])
                    .map(|(&a, &b)| l.r * ((a * KW).powi(2) + (b * KW).powi(2)) / self.u0 / KW)
                    .collect()
            })
            .collect())
    }

    /// Loss as a quadratic form in the nodal real absorptions, with the
    /// reactive part (fixed `q`, `[node - 1][t]`) folded into a per-step
    /// constant.
    pub fn loss_quadratic_form(&self, q_fixed: &[Vec<f64>]) -> Result<LossForm, NetError> {
        let steps = self.check_shape("q", q_fixed)?;
        let n = self.node_count();
        let hessian = &self.r_path * (KW / self.u0);
        let constant = (0..steps)
            .map(|t| {
                let qt = nalgebra::DVector::from_iterator(n, q_fixed.iter().map(|r| r[t]));
                (qt.transpose() * &hessian * &qt)[(0, 0)]
            })
            .collect();
        Ok(LossForm { hessian, constant })
    }
}

/// `loss(t) = p(t)ᵀ H p(t) + c0(t)` in kW for p in kW.
#[derive(Debug, Clone)]
pub struct LossForm {
    pub hessian: DMatrix<f64>,
    pub constant: Vec<f64>,
}

impl LossForm {
    /// Loss in kW at step `t` for one nodal absorption vector.
    pub fn evaluate_step(&self, t: usize, p: &[f64]) -> f64 {
        let n = p.len();
        let mut f = self.constant[t];
        for i in 0..n {
            for k in 0..n {
                f += p[i] * self.hessian[(i, k)] * p[k];
            }
        }
        f
    }

    /// Per-step losses in kW for `p` indexed `[node - 1][t]`.
    pub fn evaluate(&self, p: &[Vec<f64>]) -> Vec<f64> {
        (0..self.constant.len())
            .map(|t| {
                let pt: Vec<f64> = p.iter().map(|r| r[t]).collect();
                self.evaluate_step(t, &pt)
            })
            .collect()
    }
}

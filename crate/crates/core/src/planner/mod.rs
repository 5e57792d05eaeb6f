//! Weighted multi-objective planning over every candidate location.
//!
//! For each location the three objectives are minimized one at a time,
//! which gives the utopia point (the diagonal) and the nadir point (the
//! column maxima). The weighted sum of normalized objectives is then
//! minimized, and the location with the lowest weighted value wins.

mod ahp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cesopt::{build_model, CesDesign, ModelError, ModelInstance, Schedule};
use crate::netmodel::{Network, NodeId};
use crate::qpcore::{solve_qp, QpError, QpStatus, SolverSettings};
use crate::scenario::{CesParameters, NormalizationMode, Scenario};

pub use ahp::{ahp_weights, AhpError, AhpResult};

/// Relative size below which a nadir-utopia span is treated as zero.
pub const DEGENERATE_SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Loss,
    Trade,
    Invest,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Loss, Objective::Trade, Objective::Invest];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Loss => "loss",
            Objective::Trade => "trade",
            Objective::Invest => "invest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("solver stopped with status {status:?} for {what}")]
    NotOptimal { status: QpStatus, what: String },
    #[error("every normalization span is degenerate")]
    DegenerateSpan,
    #[error("invalid weights {0:?}: need non-negative values with a positive sum")]
    InvalidWeights([f64; 3]),
    #[error("no candidate location admits a feasible plan")]
    AllLocationsInfeasible,
    #[error("no candidate locations")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSolve {
    pub x: Vec<f64>,
    /// All three objectives at `x`.
    pub values: [f64; 3],
    pub diagnostics: SolveDiagnostics,
}

fn run(model: &ModelInstance, coeffs: [f64; 3], s: &SolverSettings, what: &str) -> Result<SingleSolve, PlanError> {
    let prob = model.program(coeffs)?;
    let sol = solve_qp(&prob, s)?;
    let diagnostics = SolveDiagnostics {
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        polished: sol.polished,
    };
    log::debug!(
        "node {} {what}: {:?} after {} iterations (polished: {})",
        model.location(),
        sol.status,
        sol.iterations,
        sol.polished
    );
    if sol.status != QpStatus::Optimal {
        return Err(PlanError::NotOptimal { status: sol.status, what: format!("node {} {what}", model.location()) });
    }
    let values = model.objectives().evaluate(&sol.x);
    Ok(SingleSolve { x: sol.x, values, diagnostics })
}

/// Minimizes one objective over the full feasible set.
pub fn solve_single_objective(
    model: &ModelInstance,
    which: Objective,
    settings: &SolverSettings,
) -> Result<SingleSolve, PlanError> {
    let mut c = [0.0; 3];
    c[which.index()] = 1.0;
    run(model, c, settings, &format!("{}-only", which.name()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    /// `f[k][i]`: objective `i` at the minimizer of objective `k`.
    pub f: [[f64; 3]; 3],
    pub utopia: [f64; 3],
    pub nadir: [f64; 3],
    pub degenerate: [bool; 3],
}

fn is_degenerate(utopia: f64, nadir: f64) -> bool {
    nadir - utopia < DEGENERATE_SPAN_TOL * utopia.abs().max(nadir.abs()).max(1.0)
}

/// Utopia from the diagonal, nadir from the column maxima.
pub fn nadir_utopia(f: [[f64; 3]; 3]) -> NormalizationContext {
    let utopia = [f[0][0], f[1][1], f[2][2]];
    let nadir = [0, 1, 2].map(|i| f.iter().map(|row| row[i]).fold(f64::NEG_INFINITY, f64::max));
    let degenerate = [0, 1, 2].map(|i| is_degenerate(utopia[i], nadir[i]));
    NormalizationContext { f, utopia, nadir, degenerate }
}

impl NormalizationContext {
    /// Weights with degenerate terms removed and the rest rescaled to sum
    /// to one. Fails when nothing is left.
    pub fn effective_weights(&self, w: [f64; 3]) -> Result<[f64; 3], PlanError> {
        let kept: [f64; 3] = [0, 1, 2].map(|i| if self.degenerate[i] { 0.0 } else { w[i] });
        let s: f64 = kept.iter().sum();
        if s <= 0.0 {
            return Err(PlanError::DegenerateSpan);
        }
        Ok(kept.map(|v| v / s))
    }

    /// Per-objective normalized values `(f − utopia)/(nadir − utopia)`,
    /// zero for degenerate terms.
    pub fn normalize(&self, values: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| {
            if self.degenerate[i] {
                0.0
            } else {
                (values[i] - self.utopia[i]) / (self.nadir[i] - self.utopia[i])
            }
        })
    }

    pub fn weighted(&self, w: [f64; 3], values: [f64; 3]) -> f64 {
        let n = self.normalize(values);
        (0..3).map(|i| w[i] * n[i]).sum()
    }
}

pub fn normalize_weights(w: [f64; 3]) -> Result<[f64; 3], PlanError> {
    let s: f64 = w.iter().sum();
    if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(s > 0.0) {
        return Err(PlanError::InvalidWeights(w));
    }
    Ok(w.map(|v| v / s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSolve {
    pub solve: SingleSolve,
    /// Weights after removing degenerate terms.
    pub weights: [f64; 3],
    pub normalized: [f64; 3],
    pub weighted_objective: f64,
}

/// Minimizes `Σ w_i (f_i − utopia_i)/(nadir_i − utopia_i)`.
pub fn solve_weighted(
    model: &ModelInstance,
    ctx: &NormalizationContext,
    w: [f64; 3],
    settings: &SolverSettings,
) -> Result<WeightedSolve, PlanError> {
    let w = ctx.effective_weights(normalize_weights(w)?)?;
    let coeffs = [0, 1, 2].map(|i| if w[i] == 0.0 { 0.0 } else { w[i] / (ctx.nadir[i] - ctx.utopia[i]) });
    let solve = run(model, coeffs, settings, "weighted")?;
    let normalized = ctx.normalize(solve.values);
    let weighted_objective = ctx.weighted(w, solve.values);
    Ok(WeightedSolve { solve, weights: w, normalized, weighted_objective })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub settings: SolverSettings,
    pub normalization: NormalizationMode,
    /// Restrict the search to these nodes; all non-slack nodes when empty.
    pub candidates: Vec<NodeId>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            settings: SolverSettings::default(),
            normalization: NormalizationMode::PerLocation,
            candidates: Vec::new(),
        }
    }
}

/// One row per candidate location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub location: NodeId,
    pub feasible: bool,
    pub selected: bool,
    pub e_cap_kwh: Option<f64>,
    pub p_rate_kw: Option<f64>,
    pub loss_kwh: Option<f64>,
    pub trade_aud: Option<f64>,
    pub invest_aud: Option<f64>,
    pub weighted_objective: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationResult {
    pub location: NodeId,
    pub context: NormalizationContext,
    pub weights: [f64; 3],
    pub objectives: [f64; 3],
    pub normalized: [f64; 3],
    pub weighted_objective: f64,
    pub design: CesDesign,
    pub schedule: Schedule,
    pub diagnostics: Vec<SolveDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub location: NodeId,
    pub requested_weights: [f64; 3],
    pub normalization: NormalizationMode,
    pub selected: LocationResult,
    pub leaderboard: Vec<LeaderboardRow>,
    /// Every feasible location's full result, in node order.
    pub locations: Vec<LocationResult>,
}

struct Singles {
    model: ModelInstance,
    solves: [SingleSolve; 3],
}

fn singles(
    net: &Network,
    scenario: &Scenario,
    params: &CesParameters,
    j: NodeId,
    s: &SolverSettings,
) -> Result<Singles, PlanError> {
    let model = build_model(net, scenario, params, j)?;
    let solves = [
        solve_single_objective(&model, Objective::Loss, s)?,
        solve_single_objective(&model, Objective::Trade, s)?,
        solve_single_objective(&model, Objective::Invest, s)?,
    ];
    Ok(Singles { model, solves })
}

fn finish_location(
    sg: &Singles,
    ctx: NormalizationContext,
    w: [f64; 3],
    s: &SolverSettings,
) -> Result<LocationResult, PlanError> {
    let mut warnings = Vec::new();
    for o in Objective::ALL {
        if ctx.degenerate[o.index()] {
            let msg = format!(
                "node {}: {} span is degenerate, its weight is redistributed",
                sg.model.location(),
                o.name()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut diagnostics: Vec<SolveDiagnostics> = sg.solves.iter().map(|s| s.diagnostics.clone()).collect();
    let (x, weights, objectives, normalized, weighted_objective) = match solve_weighted(&sg.model, &ctx, w, s) {
        Ok(ws) => {
            diagnostics.push(ws.solve.diagnostics.clone());
            (ws.solve.x, ws.weights, ws.solve.values, ws.normalized, ws.weighted_objective)
        }
        Err(PlanError::DegenerateSpan) => {
            // one point minimizes everything; the loss minimizer is it
            warnings.push(format!("node {}: all spans degenerate, using the loss minimizer", sg.model.location()));
            let s0 = &sg.solves[0];
            (s0.x.clone(), [0.0; 3], s0.values, [0.0; 3], 0.0)
        }
        Err(e) => return Err(e),
    };
    let (design, schedule) = sg.model.extract_schedule(&x)?;
    Ok(LocationResult {
        location: sg.model.location(),
        context: ctx,
        weights,
        objectives,
        normalized,
        weighted_objective,
        design,
        schedule,
        diagnostics,
        warnings,
    })
}

/// Enumerates candidate locations, solving each independently, and picks
/// the lowest weighted objective. Ties go to the lowest node id.
pub fn plan(
    net: &Network,
    scenario: &Scenario,
    params: &CesParameters,
    weights: [f64; 3],
    opts: &PlanOptions,
) -> Result<PlanResult, PlanError> {
    let w = normalize_weights(weights)?;
    let mut candidates: Vec<NodeId> = if opts.candidates.is_empty() {
        (1..=net.node_count()).collect()
    } else {
        opts.candidates.clone()
    };
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    for &j in &candidates {
        if j == 0 {
            return Err(ModelError::SlackLocation.into());
        }
        if j > net.node_count() {
            return Err(ModelError::UnknownLocation(j).into());
        }
    }

    let s = &opts.settings;
    let first: Vec<Result<Singles, PlanError>> = candidates
        .par_iter()
        .map(|&j| singles(net, scenario, params, j, s))
        .collect();

    let global = match opts.normalization {
        NormalizationMode::PerLocation => None,
        NormalizationMode::Global => {
            let ok: Vec<&Singles> = first.iter().filter_map(|r| r.as_ref().ok()).collect();
            if ok.is_empty() {
                None
            } else {
                let mut utopia = [f64::INFINITY; 3];
                let mut nadir = [f64::NEG_INFINITY; 3];
                for sg in &ok {
                    for i in 0..3 {
                        utopia[i] = utopia[i].min(sg.solves[i].values[i]);
                        for k in 0..3 {
                            nadir[i] = nadir[i].max(sg.solves[k].values[i]);
                        }
                    }
                }
                Some((utopia, nadir))
            }
        }
    };

    let outcomes: Vec<(NodeId, Result<LocationResult, PlanError>)> = candidates
        .par_iter()
        .zip(first.par_iter())
        .map(|(&j, r)| {
            let res = match r {
                Err(e) => Err(e.clone()),
                Ok(sg) => {
                    let f = [0, 1, 2].map(|k| sg.solves[k].values);
                    let mut ctx = nadir_utopia(f);
                    if let Some((u, n)) = global {
                        ctx.utopia = u;
                        ctx.nadir = n;
                        ctx.degenerate = [0, 1, 2].map(|i| is_degenerate(u[i], n[i]));
                    }
                    finish_location(sg, ctx, w, s)
                }
            };
            (j, res)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (_, r)) in outcomes.iter().enumerate() {
        if let Ok(lr) = r {
            let better = match best {
                None => true,
                Some(b) => {
                    let cur = outcomes[b].1.as_ref().expect("best is feasible").weighted_objective;
                    lr.weighted_objective < cur - 1e-9 * cur.abs().max(1.0)
                }
            };
            if better {
                best = Some(k);
            }
        }
    }
    let Some(best) = best else {
        for (j, r) in &outcomes {
            if let Err(e) = r {
                log::warn!("node {j}: {e}");
            }
        }
        return Err(PlanError::AllLocationsInfeasible);
    };

    let leaderboard = outcomes
        .iter()
        .enumerate()
        .map(|(k, (j, r))| match r {
            Ok(lr) => LeaderboardRow {
                location: *j,
                feasible: true,
                selected: k == best,
                e_cap_kwh: Some(lr.design.e_cap),
                p_rate_kw: Some(lr.design.p_rate),
                loss_kwh: Some(lr.objectives[0]),
                trade_aud: Some(lr.objectives[1]),
                invest_aud: Some(lr.objectives[2]),
                weighted_objective: Some(lr.weighted_objective),
                note: lr.warnings.join("; "),
            },
            Err(e) => LeaderboardRow {
                location: *j,
                feasible: false,
                selected: false,
                e_cap_kwh: None,
                p_rate_kw: None,
                loss_kwh: None,
                trade_aud: None,
                invest_aud: None,
                weighted_objective: None,
                note: e.to_string(),
            },
        })
        .collect();

    let locations: Vec<LocationResult> = outcomes.into_iter().filter_map(|(_, r)| r.ok()).collect();
    let selected_loc = candidates[best];
    let selected = locations
        .iter()
        .find(|l| l.location == selected_loc)
        .expect("selected location is feasible")
        .clone();
    Ok(PlanResult {
        location: selected_loc,
        requested_weights: w,
        normalization: opts.normalization,
        selected,
        leaderboard,
        locations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineObjectives {
    pub loss_kwh: f64,
    pub trade_aud: f64,
}

/// Loss and trading cost with no storage: every customer settles its
/// whole net position with the grid.
pub fn baseline_no_ces(net: &Network, scenario: &Scenario) -> BaselineObjectives {
    let dt = scenario.horizon().dt_hours;
    let p = scenario.nodal_net_load();
    let q = scenario.nodal_reactive();
    let losses = net.line_losses(&p, &q).expect("scenario matches network");
    let loss_kwh = losses.iter().flatten().sum::<f64>() * dt;
    let trade_aud = scenario
        .prices()
        .iter()
        .enumerate()
        .map(|(t, price)| price * dt * scenario.customers().iter().map(|c| c.net_position(t)).sum::<f64>())
        .sum();
    BaselineObjectives { loss_kwh, trade_aud }
}

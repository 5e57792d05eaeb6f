//! Files written by `plan` and `baseline`, and the printed summaries.
//!
//! Percentages are value with storage over value without, times 100.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cesplan_core::planner::{AhpResult, BaselineObjectives, PlanResult};
use cesplan_core::scenario::{Study, StudyConfig};
use cesplan_core::validator::ValidationReport;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Bumped whenever a column or field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema_version: u32,
    /// `explicit`, `ahp` or `ahp:<file>`.
    pub weights_source: String,
    pub ahp: Option<AhpResult>,
    pub baseline: BaselineObjectives,
    pub loss_pct_of_base: Option<f64>,
    pub trade_pct_of_base: Option<f64>,
    pub plan: PlanResult,
    pub validation: ValidationReport,
    pub config: StudyConfig,
}

impl PlanFile {
    pub fn new(
        weights_source: String,
        ahp: Option<AhpResult>,
        baseline: BaselineObjectives,
        plan: PlanResult,
        validation: ValidationReport,
        config: StudyConfig,
    ) -> Self {
        let [loss, trade, _] = plan.selected.objectives;
        PlanFile {
            schema_version: SCHEMA_VERSION,
            weights_source,
            ahp,
            loss_pct_of_base: pct(loss, baseline.loss_kwh),
            trade_pct_of_base: pct(trade, baseline.trade_aud),
            baseline,
            plan,
            validation,
            config,
        }
    }
}

/// `None` when the base value is too close to zero for a ratio to mean anything.
fn pct(with: f64, without: f64) -> Option<f64> {
    (without.abs() > 1e-9).then(|| 100.0 * with / without)
}

#[derive(Serialize)]
struct LeaderboardCsv<'a> {
    schema_version: u32,
    location: usize,
    feasible: bool,
    selected: bool,
    e_cap_kwh: Option<f64>,
    p_rate_kw: Option<f64>,
    loss_kwh: Option<f64>,
    loss_pct_of_base: Option<f64>,
    trade_aud: Option<f64>,
    trade_pct_of_base: Option<f64>,
    invest_aud: Option<f64>,
    weighted_objective: Option<f64>,
    note: &'a str,
}

fn io<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::io(path, e)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    csv::Writer::from_path(path).map_err(io(path))
}

pub fn write_plan(dir: &Path, file: &PlanFile, study: &Study) -> Result<(), Failure> {
    let ts = dir.join("timeseries");
    fs::create_dir_all(&ts).map_err(io(&ts))?;

    let path = dir.join("plan.json");
    let text = serde_json::to_string_pretty(file).map_err(io(&path))?;
    fs::write(&path, text + "\n").map_err(io(&path))?;

    let path = dir.join("leaderboard.csv");
    let mut w = csv_writer(&path)?;
    let base = &file.baseline;
    for r in &file.plan.leaderboard {
        w.serialize(LeaderboardCsv {
            schema_version: SCHEMA_VERSION,
            location: r.location,
            feasible: r.feasible,
            selected: r.selected,
            e_cap_kwh: r.e_cap_kwh,
            p_rate_kw: r.p_rate_kw,
            loss_kwh: r.loss_kwh,
            loss_pct_of_base: r.loss_kwh.and_then(|v| pct(v, base.loss_kwh)),
            trade_aud: r.trade_aud,
            trade_pct_of_base: r.trade_aud.and_then(|v| pct(v, base.trade_aud)),
            invest_aud: r.invest_aud,
            weighted_objective: r.weighted_objective,
            note: &r.note,
        })
        .map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    write_timeseries(&ts, file, study)
}

fn write_timeseries(ts: &Path, file: &PlanFile, study: &Study) -> Result<(), Failure> {
    let sched = &file.plan.selected.schedule;
    let design = &file.plan.selected.design;
    let sc = &study.scenario;
    let h = sc.horizon();
    let steps = h.steps;

    let path = ts.join("storage.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "t",
        "hour",
        "price_aud_per_kwh",
        "p_ch_kw",
        "p_dis_kw",
        "p_grid_ces_kw",
        "energy_kwh",
        "soc",
        "grid_total_kw",
        "grid_total_base_kw",
    ])
    .map_err(io(&path))?;
    for t in 0..steps {
        let customers: f64 = sched.p_grid_customer.iter().map(|s| s[t]).sum();
        let base: f64 = sc.customers().iter().map(|c| c.net_position(t)).sum();
        let row = [
            h.hour_of_day(t),
            sc.prices()[t],
            sched.p_ch[t],
            sched.p_dis[t],
            sched.p_grid_ces[t],
            sched.energy[t],
            sched.energy[t] / design.e_cap,
            customers + sched.p_grid_ces[t],
            base,
        ];
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    for (name, series) in [("customer_grid.csv", &sched.p_grid_customer), ("customer_ces.csv", &sched.p_ces_customer)] {
        let path = ts.join(name);
        let mut w = csv_writer(&path)?;
        let mut head = vec!["t".to_string()];
        head.extend(sched.customer_ids.iter().cloned());
        w.write_record(&head).map_err(io(&path))?;
        for t in 0..steps {
            let mut rec = vec![t.to_string()];
            rec.extend(series.iter().map(|s| s[t].to_string()));
            w.write_record(&rec).map_err(io(&path))?;
        }
        w.flush().map_err(io(&path))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineFile<'a> {
    schema_version: u32,
    steps: usize,
    customers: usize,
    #[serde(flatten)]
    objectives: &'a BaselineObjectives,
}

pub fn write_baseline(dir: &Path, base: &BaselineObjectives, study: &Study) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join("baseline.json");
    let file = BaselineFile {
        schema_version: SCHEMA_VERSION,
        steps: study.scenario.horizon().steps,
        customers: study.scenario.customers().len(),
        objectives: base,
    };
    let text = serde_json::to_string_pretty(&file).map_err(io(&path))?;
    fs::write(&path, text + "\n").map_err(io(&path))
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".into(), |v| format!("{v:.prec$}"))
}

/// One line for the no-storage case, then one per candidate.
pub fn summary(f: &PlanFile) -> String {
    let b = &f.baseline;
    let mut s = String::new();
    let w = f.plan.requested_weights;
    let _ = writeln!(s, "weights ({}): loss {:.4}, trade {:.4}, invest {:.4}", f.weights_source, w[0], w[1], w[2]);
    let _ = writeln!(
        s,
        "{:<14} {:>9} {:>8} {:>11} {:>7} {:>11} {:>7} {:>11}",
        "case", "E_cap kWh", "p_rate", "loss kWh", "%", "trade AUD", "%", "invest AUD"
    );
    let _ = writeln!(
        s,
        "{:<14} {:>9} {:>8} {:>11.3} {:>7} {:>11.2} {:>7} {:>11}",
        "no storage", "-", "-", b.loss_kwh, "100.0", b.trade_aud, "100.0", "-"
    );
    for r in &f.plan.leaderboard {
        let case = format!("node {}{}", r.location, if r.selected { " *" } else { "" });
        if !r.feasible {
            let _ = writeln!(s, "{case:<14} infeasible: {}", r.note);
            continue;
        }
        let _ = writeln!(
            s,
            "{:<14} {:>9} {:>8} {:>11} {:>7} {:>11} {:>7} {:>11}",
            case,
            opt(r.e_cap_kwh, 1),
            opt(r.p_rate_kw, 1),
            opt(r.loss_kwh, 3),
            opt(r.loss_kwh.and_then(|v| pct(v, b.loss_kwh)), 1),
            opt(r.trade_aud, 2),
            opt(r.trade_aud.and_then(|v| pct(v, b.trade_aud)), 1),
            opt(r.invest_aud, 0),
        );
    }
    let _ = writeln!(s, "validation: {}", if f.validation.pass { "pass" } else { "FAIL" });
    s
}

pub fn validation_table(r: &ValidationReport) -> String {
    let mut s = String::new();
    for f in &r.families {
        let at = [
            f.worst.node.map(|n| format!("node {n}")),
            f.worst.customer.clone(),
            f.worst.t.map(|t| format!("t={t}")),
        ]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ");
        let _ = writeln!(
            s,
            "{:<18} {:<4} max {:.3e} (tol {:.0e}) {at}",
            format!("{:?}", f.family),
            if f.pass { "ok" } else { "FAIL" },
            f.max_violation,
            f.tolerance
        );
    }
    if let Some(e) = r.objective_rel_error {
        let _ = writeln!(s, "objective relative error: loss {:.2e}, trade {:.2e}, invest {:.2e}", e[0], e[1], e[2]);
    }
    if !r.flags.is_empty() {
        let _ = writeln!(s, "{} flag(s) raised", r.flags.len());
    }
    let _ = writeln!(s, "{}", if r.pass { "pass" } else { "FAIL" });
    s
}

//! File formats.
//!
//! * network: CSV `from,to,r_ohm,x_ohm`
//! * profiles: CSV `node,customer,t,p_load_kw,q_load_kvar,p_pv_kw`; empty
//!   reactive or PV fields read as zero
//! * tariff: CSV `t,price`, or JSON holding either a price array or
//!   `{"windows": [{"name", "start_hour", "end_hour", "price"}]}`
//! * config: JSON [`StudyConfig`], every field optional

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CustomerProfile, Horizon, Scenario, ScenarioError, StudyConfig, Tariff};
use crate::netmodel::{build_network, Line, Network, NodeId};

fn io_err(path: &Path, source: std::io::Error) -> ScenarioError {
    ScenarioError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl ToString) -> ScenarioError {
    ScenarioError::Parse { path: path.display().to_string(), msg: msg.to_string() }
}

fn csv_err(path: &Path, e: csv::Error) -> ScenarioError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(path, source),
            _ => unreachable!(),
        }
    } else {
        parse_err(path, e)
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, ScenarioError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, ScenarioError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

#[derive(Debug, Serialize, Deserialize)]
struct LineRecord {
    from: NodeId,
    to: NodeId,
    r_ohm: f64,
    x_ohm: f64,
}

pub fn read_network_csv(path: &Path) -> Result<Vec<Line>, ScenarioError> {
    let mut rd = reader(path)?;
    rd.deserialize::<LineRecord>()
        .map(|r| {
            let r = r.map_err(|e| csv_err(path, e))?;
            Ok(Line { from: r.from, to: r.to, r: r.r_ohm, x: r.x_ohm })
        })
        .collect()
}

pub fn write_network_csv(path: &Path, lines: &[Line]) -> Result<(), ScenarioError> {
    let mut w = writer(path)?;
    for l in lines {
        w.serialize(LineRecord { from: l.from, to: l.to, r_ohm: l.r, x_ohm: l.x })
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRecord {
    node: NodeId,
    customer: String,
    t: usize,
    p_load_kw: f64,
    q_load_kvar: Option<f64>,
    p_pv_kw: Option<f64>,
}

/// Customers in order of first appearance, each with series as long as its
/// largest `t` plus one. Gaps are an error.
pub fn read_profiles_csv(path: &Path) -> Result<Vec<CustomerProfile>, ScenarioError> {
    let mut rd = reader(path)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(NodeId, String, Vec<Option<(f64, f64, f64)>>)> = Vec::new();
    for rec in rd.deserialize::<ProfileRecord>() {
        let r = rec.map_err(|e| csv_err(path, e))?;
        let k = *index.entry(r.customer.clone()).or_insert_with(|| {
            rows.push((r.node, r.customer.clone(), Vec::new()));
            rows.len() - 1
        });
        let (node, _, series) = &mut rows[k];
        if *node != r.node {
            return Err(parse_err(path, format!("customer {} appears at nodes {} and {}", r.customer, node, r.node)));
        }
        if series.len() <= r.t {
            series.resize(r.t + 1, None);
        }
        if series[r.t].is_some() {
            return Err(parse_err(path, format!("customer {} has two rows for t={}", r.customer, r.t)));
        }
        series[r.t] = Some((r.p_load_kw, r.q_load_kvar.unwrap_or(0.0), r.p_pv_kw.unwrap_or(0.0)));
    }
    rows.into_iter()
        .map(|(node, id, series)| {
            if let Some(t) = series.iter().position(Option::is_none) {
                return Err(ScenarioError::LengthMismatch(format!("customer {id} has no row for t={t}")));
            }
            let s: Vec<(f64, f64, f64)> = series.into_iter().flatten().collect();
            Ok(CustomerProfile {
                node,
                p_load: s.iter().map(|v| v.0).collect(),
                q_load: s.iter().map(|v| v.1).collect(),
                p_pv: s.iter().map(|v| v.2).collect(),
                id,
            })
        })
        .collect()
}

pub fn write_profiles_csv(path: &Path, customers: &[CustomerProfile]) -> Result<(), ScenarioError> {
    let mut w = writer(path)?;
    for c in customers {
        for t in 0..c.p_load.len() {
            w.serialize(ProfileRecord {
                node: c.node,
                customer: c.id.clone(),
                t,
                p_load_kw: c.p_load[t],
                q_load_kvar: Some(c.q_load[t]),
                p_pv_kw: Some(c.p_pv[t]),
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRecord {
    t: usize,
    price: f64,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn read_tariff(path: &Path) -> Result<Tariff, ScenarioError> {
    if is_json(path) {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        return serde_json::from_str(&text).map_err(|e| parse_err(path, e));
    }
    let mut rd = reader(path)?;
    let mut prices = Vec::new();
    for rec in rd.deserialize::<PriceRecord>() {
        let r = rec.map_err(|e| csv_err(path, e))?;
        if r.t != prices.len() {
            return Err(parse_err(path, format!("expected t={}, found t={}", prices.len(), r.t)));
        }
        prices.push(r.price);
    }
    Ok(Tariff::Series(prices))
}

/// Writes JSON for `.json` paths and `t,price` CSV otherwise; windowed
/// tariffs can only be written as JSON.
pub fn write_tariff(path: &Path, tariff: &Tariff) -> Result<(), ScenarioError> {
    match (tariff, is_json(path)) {
        (_, true) => {
            let text = serde_json::to_string_pretty(tariff).map_err(|e| parse_err(path, e))?;
            std::fs::write(path, text).map_err(|e| io_err(path, e))
        }
        (Tariff::Series(p), false) => {
            let mut w = writer(path)?;
            for (t, &price) in p.iter().enumerate() {
                w.serialize(PriceRecord { t, price }).map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))
        }
        (Tariff::TimeOfUse { .. }, false) => {
            Err(parse_err(path, "time-of-use tariffs are written as JSON; use a .json path"))
        }
    }
}

/// Input file locations. `horizon` overrides the configured step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyInputs {
    pub network: PathBuf,
    pub profiles: PathBuf,
    pub tariff: PathBuf,
    pub config: Option<PathBuf>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub network: Network,
    pub scenario: Scenario,
    /// Effective configuration, with the horizon resolved.
    pub config: StudyConfig,
}

pub fn read_config(path: &Path) -> Result<StudyConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::InvalidParameter(format!("{}: {e}", path.display())))
}

/// Reads and validates every input. Profile and price series longer than
/// the horizon are cut to it; shorter ones are an error.
pub fn load(inputs: &StudyInputs) -> Result<Study, ScenarioError> {
    let mut config = match &inputs.config {
        Some(p) => read_config(p)?,
        None => StudyConfig::default(),
    };
    config.validate()?;
    let lines = read_network_csv(&inputs.network)?;
    let network = build_network(&lines, config.u0(), config.umin(), config.umax())?;
    let mut customers = read_profiles_csv(&inputs.profiles)?;
    let mut tariff = read_tariff(&inputs.tariff)?;

    let inferred = customers
        .iter()
        .map(|c| c.p_load.len())
        .max()
        .or(match &tariff {
            Tariff::Series(p) => Some(p.len()),
            Tariff::TimeOfUse { .. } => None,
        })
        .unwrap_or(24);
    let steps = inputs.horizon.or(config.horizon.steps).unwrap_or(inferred);
    let horizon = Horizon::new(steps, config.horizon.dt_hours)?;
    for c in &mut customers {
        for s in [&mut c.p_load, &mut c.q_load, &mut c.p_pv] {
            s.truncate(steps);
        }
    }
    if let Tariff::Series(p) = &mut tariff {
        p.truncate(steps);
    }
    config.horizon.steps = Some(steps);
    let scenario = Scenario::new(customers, tariff, horizon, network.node_count())?;
    log::debug!(
        "loaded {} nodes, {} customers, {} steps",
        network.node_count(),
        scenario.customers().len(),
        steps
    );
    Ok(Study { network, scenario, config })
}

/// Writes a study as `network.csv`, `profiles.csv`, `tariff.json` or
/// `tariff.csv`, and `config.json` under `dir`.
pub fn write(dir: &Path, study: &Study) -> Result<StudyInputs, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tariff = match study.scenario.tariff() {
        Tariff::Series(_) => dir.join("tariff.csv"),
        Tariff::TimeOfUse { .. } => dir.join("tariff.json"),
    };
    let inputs = StudyInputs {
        network: dir.join("network.csv"),
        profiles: dir.join("profiles.csv"),
        tariff,
        config: Some(dir.join("config.json")),
        horizon: None,
    };
    write_network_csv(&inputs.network, study.network.lines())?;
    write_profiles_csv(&inputs.profiles, study.scenario.customers())?;
    write_tariff(&inputs.tariff, study.scenario.tariff())?;
    let cfg = inputs.config.as_deref().expect("set above");
    let text = serde_json::to_string_pretty(&study.config).map_err(|e| parse_err(cfg, e))?;
    std::fs::write(cfg, text).map_err(|e| io_err(cfg, e))?;
    Ok(inputs)
}

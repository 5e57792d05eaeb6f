//! `cesplan`: siting, sizing and scheduling studies for one community
//! storage unit on a radial feeder.

mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cesplan_core::cesopt::ModelError;
use cesplan_core::fixture;
use cesplan_core::planner::{self, ahp_weights, AhpError, AhpResult, PlanError, PlanOptions};
use cesplan_core::scenario::{self, ScenarioError, Study, StudyInputs, WeightSpec};
use cesplan_core::validator::{self, Tolerances};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use output::PlanFile;

#[derive(Parser, Debug)]
#[command(name = "cesplan", version, about = "Community energy storage siting, sizing and scheduling")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose the storage location, size and schedule
    Plan(PlanArgs),
    /// Loss and trading cost with no storage
    Baseline(StudyArgs),
    /// Replay a plan against the study it was made for
    Validate(ValidateArgs),
    /// Weights and consistency ratio from a pairwise comparison matrix
    Ahp {
        /// JSON matrix; the bundled judgments when absent
        #[arg(long)]
        ahp_file: Option<PathBuf>,
    },
    /// Write the seeded synthetic study as input files
    GenFixture {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_FIXTURE_STEPS)]
        horizon: usize,
        #[arg(long, default_value = "fixture")]
        out: PathBuf,
    },
}

const DEFAULT_FIXTURE_STEPS: usize = 168;

/// Either all three input files, or `--seed` for the synthetic study.
#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long, requires_all = ["profiles", "tariff"], conflicts_with = "seed")]
    network: Option<PathBuf>,
    #[arg(long, requires = "network")]
    profiles: Option<PathBuf>,
    #[arg(long, requires = "network")]
    tariff: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of steps; longer series are cut
    #[arg(long)]
    horizon: Option<usize>,
    /// Use the synthetic study generated from this seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Loss, trade and investment weights, e.g. 1/9,4/9,4/9
    #[arg(long, conflicts_with = "ahp_file")]
    weights: Option<String>,
    /// Pairwise comparison matrix for the weights
    #[arg(long)]
    ahp_file: Option<PathBuf>,
    /// Skip the search and plan for this node only
    #[arg(long)]
    fixed_location: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    study: StudyArgs,
    #[arg(long, default_value = "out/plan.json")]
    plan: PathBuf,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub const VALIDATION: u8 = 1;
    pub const INFEASIBLE: u8 = 2;
    pub const IO: u8 = 3;
    pub const CONFIG: u8 = 4;

    pub fn new(code: u8, msg: impl fmt::Display) -> Self {
        Failure { code, msg: msg.to_string() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Failure::new(Self::IO, format!("{}: {e}", path.display()))
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io { .. } | ScenarioError::Parse { .. } => Failure::IO,
            _ => Failure::CONFIG,
        };
        Failure::new(code, e)
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        let code = match &e {
            PlanError::InvalidWeights(_)
            | PlanError::NoCandidates
            | PlanError::Model(ModelError::SlackLocation | ModelError::UnknownLocation(_)) => Failure::CONFIG,
            _ => Failure::INFEASIBLE,
        };
        Failure::new(code, e)
    }
}

impl From<AhpError> for Failure {
    fn from(e: AhpError) -> Self {
        Failure::new(Failure::CONFIG, format!("judgment matrix: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CESPLAN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::CONFIG);
        }
    };
    let res = match cli.cmd {
        Command::Plan(a) => cmd_plan(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Ahp { ahp_file } => cmd_ahp(ahp_file.as_deref()),
        Command::GenFixture { seed, horizon, out } => cmd_gen_fixture(seed, horizon, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_study(a: &StudyArgs) -> Result<Study, Failure> {
    match (&a.network, &a.profiles, &a.tariff) {
        (Some(network), Some(profiles), Some(tariff)) => Ok(scenario::load(&StudyInputs {
            network: network.clone(),
            profiles: profiles.clone(),
            tariff: tariff.clone(),
            config: a.config.clone(),
            horizon: a.horizon,
        })?),
        _ => {
            let Some(seed) = a.seed else {
                return Err(Failure::new(Failure::CONFIG, "give --network, --profiles and --tariff, or --seed"));
            };
            let mut study = fixture::generate(seed, a.horizon.unwrap_or(DEFAULT_FIXTURE_STEPS))?;
            if let Some(path) = &a.config {
                let steps = study.config.horizon.steps;
                study.config = scenario::read_config(path)?;
                study.config.validate()?;
                study.config.horizon.steps = steps;
            }
            Ok(study)
        }
    }
}

/// Parses `a/b` or plain numbers, comma separated.
fn parse_weights(s: &str) -> Result<[f64; 3], Failure> {
    let bad = || Failure::new(Failure::CONFIG, format!("--weights wants three values like 1/9,4/9,4/9, got {s:?}"));
    let vals: Vec<f64> = s.split(',').map(|p| parse_fraction(p).ok_or_else(bad)).collect::<Result<_, _>>()?;
    let w: [f64; 3] = vals.try_into().map_err(|_| bad())?;
    planner::normalize_weights(w).map_err(Failure::from)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

fn read_judgments(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let rows: Vec<Vec<Entry>> = serde_json::from_str(&text)
        .map_err(|e| Failure::new(Failure::CONFIG, format!("{}: {e}", path.display())))?;
    rows.into_iter()
        .map(|r| {
            r.into_iter()
                .map(|e| match e {
                    Entry::Number(v) => Ok(v),
                    Entry::Text(t) => parse_fraction(&t)
                        .ok_or_else(|| Failure::new(Failure::CONFIG, format!("{}: bad entry {t:?}", path.display()))),
                })
                .collect()
        })
        .collect()
}

fn parse_fraction(t: &str) -> Option<f64> {
    match t.split_once('/') {
        Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
        None => t.trim().parse().ok(),
    }
}

fn three_weights(r: &AhpResult) -> Result<[f64; 3], Failure> {
    r.weights
        .clone()
        .try_into()
        .map_err(|_| Failure::new(Failure::CONFIG, "the judgment matrix must be 3x3 for (loss, trade, invest)"))
}

/// Weights from the flags, falling back to the study configuration.
fn resolve_weights(a: &PlanArgs, study: &Study) -> Result<([f64; 3], String, Option<AhpResult>), Failure> {
    if let Some(s) = &a.weights {
        return Ok((parse_weights(s)?, "explicit".into(), None));
    }
    if let Some(path) = &a.ahp_file {
        let r = ahp_weights(&read_judgments(path)?)?;
        return Ok((three_weights(&r)?, format!("ahp:{}", path.display()), Some(r)));
    }
    match &study.config.weights {
        WeightSpec::Explicit { values } => Ok((planner::normalize_weights(*values)?, "explicit".into(), None)),
        WeightSpec::Ahp { matrix } => {
            let r = ahp_weights(&matrix.map(Vec::from))?;
            Ok((three_weights(&r)?, "ahp".into(), Some(r)))
        }
    }
}

fn cmd_plan(a: &PlanArgs) -> Outcome {
    let study = load_study(&a.study)?;
    let (weights, source, ahp) = resolve_weights(a, &study)?;
    let nodes = study.network.node_count();
    let candidates = match a.fixed_location {
        Some(j) if j == 0 || j > nodes => {
            return Err(Failure::new(Failure::CONFIG, format!("--fixed-location {j} is not a node in 1..={nodes}")))
        }
        Some(j) => vec![j],
        None => Vec::new(),
    };
    let opts = PlanOptions { settings: study.config.solver.clone(), normalization: study.config.normalization, candidates };
    log::info!("planning over {} steps with weights {weights:?}", study.scenario.horizon().steps);
    let plan = planner::plan(&study.network, &study.scenario, &study.config.ces, weights, &opts)?;
    let baseline = planner::baseline_no_ces(&study.network, &study.scenario);
    let [loss_kwh, trade_aud, invest_aud] = plan.selected.objectives;
    let validation = validator::validate(
        &study.network,
        &study.scenario,
        &study.config.ces,
        &plan.selected.design,
        &plan.selected.schedule,
        Some(validator::Objectives { loss_kwh, trade_aud, invest_aud }),
        &Tolerances::default(),
    )
    .map_err(|e| Failure::new(Failure::VALIDATION, e))?;
    let file = PlanFile::new(source, ahp, baseline, plan, validation, study.config.clone());
    output::write_plan(&a.study.out, &file, &study)?;
    print!("{}", output::summary(&file));
    if !file.validation.pass {
        return Err(Failure::new(Failure::VALIDATION, "the selected plan failed validation, see plan.json"));
    }
    Ok(())
}

fn cmd_baseline(a: &StudyArgs) -> Outcome {
    let study = load_study(a)?;
    let base = planner::baseline_no_ces(&study.network, &study.scenario);
    output::write_baseline(&a.out, &base, &study)?;
    println!("without storage: loss {:.3} kWh, trade {:.2} AUD", base.loss_kwh, base.trade_aud);
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Outcome {
    let study = load_study(&a.study)?;
    let text = std::fs::read_to_string(&a.plan).map_err(|e| Failure::io(&a.plan, e))?;
    let file: PlanFile =
        serde_json::from_str(&text).map_err(|e| Failure::new(Failure::IO, format!("{}: {e}", a.plan.display())))?;
    let sel = &file.plan.selected;
    let [loss_kwh, trade_aud, invest_aud] = sel.objectives;
    let report = validator::validate(
        &study.network,
        &study.scenario,
        &study.config.ces,
        &sel.design,
        &sel.schedule,
        Some(validator::Objectives { loss_kwh, trade_aud, invest_aud }),
        &Tolerances::default(),
    )
    .map_err(|e| Failure::new(Failure::VALIDATION, e))?;
    print!("{}", output::validation_table(&report));
    if report.pass {
        Ok(())
    } else {
        Err(Failure::new(Failure::VALIDATION, "plan failed validation"))
    }
}

fn cmd_ahp(path: Option<&Path>) -> Outcome {
    let m = match path {
        Some(p) => read_judgments(p)?,
        None => scenario::DEFAULT_AHP_JUDGMENTS.map(Vec::from).to_vec(),
    };
    let r = ahp_weights(&m)?;
    let w: Vec<String> = r.weights.iter().map(|v| format!("{v:.4}")).collect();
    println!("weights: {}", w.join(", "));
    println!("lambda_max: {:.6}", r.lambda_max);
    println!("consistency ratio: {:.6}{}", r.consistency_ratio, if r.acceptable { "" } else { " (above 0.1)" });
    Ok(())
}

fn cmd_gen_fixture(seed: u64, steps: usize, out: &Path) -> Outcome {
    let study = fixture::generate(seed, steps)?;
    let inputs = scenario::write(out, &study)?;
    let config = inputs.config.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
    println!(
        "wrote {}, {}, {}, {config}",
        inputs.network.display(),
        inputs.profiles.display(),
        inputs.tariff.display()
    );
    Ok(())
}

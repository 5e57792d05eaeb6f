use std::fs;
use std::path::Path;

use cesplan_core::fixture;
use cesplan_core::scenario::{self, ScenarioError, StudyInputs, Tariff};
use proptest::prelude::*;

fn write_files(dir: &Path, network: &str, profiles: &str, tariff: (&str, &str)) -> StudyInputs {
    fs::write(dir.join("network.csv"), network).unwrap();
    fs::write(dir.join("profiles.csv"), profiles).unwrap();
    fs::write(dir.join(tariff.0), tariff.1).unwrap();
    StudyInputs {
        network: dir.join("network.csv"),
        profiles: dir.join("profiles.csv"),
        tariff: dir.join(tariff.0),
        config: None,
        horizon: None,
    }
}

const NET: &str = "from,to,r_ohm,x_ohm\n0,1,0.02,0.01\n1,2,0.03,0.01\n";

fn day_profile(node: usize, id: &str, load: f64, pv: f64, steps: usize) -> String {
    (0..steps).map(|t| format!("{node},{id},{t},{load},0.1,{pv}\n")).collect()
}

fn header() -> String {
    "node,customer,t,p_load_kw,q_load_kvar,p_pv_kw\n".to_string()
}

#[test]
fn loads_a_small_study() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = header() + &day_profile(1, "a", 1.0, 0.0, 24) + &day_profile(2, "b", 0.5, 2.0, 24);
    let tariff = "{\"windows\":[{\"name\":\"all\",\"start_hour\":0,\"end_hour\":24,\"price\":0.3}]}";
    let inputs = write_files(dir.path(), NET, &profiles, ("tariff.json", tariff));
    let study = scenario::load(&inputs).unwrap();
    assert_eq!(study.network.node_count(), 2);
    assert_eq!(study.scenario.horizon().steps, 24);
    assert_eq!(study.scenario.customers().len(), 2);
    assert_eq!(study.scenario.customers()[1].net_position(3), -1.5);
    assert!(study.scenario.prices().iter().all(|&p| p == 0.3));
}

#[test]
fn empty_reactive_and_pv_read_as_zero() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = header() + &(0..24).map(|t| format!("1,a,{t},1.0,,\n")).collect::<String>();
    let prices: String = std::iter::once("t,price\n".to_string())
        .chain((0..24).map(|t| format!("{t},0.2\n")))
        .collect();
    let inputs = write_files(dir.path(), NET, &profiles, ("tariff.csv", &prices));
    let study = scenario::load(&inputs).unwrap();
    let c = &study.scenario.customers()[0];
    assert!(c.q_load.iter().chain(&c.p_pv).all(|&v| v == 0.0));
}

#[test]
fn longer_series_are_cut_to_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = header() + &day_profile(1, "a", 1.0, 0.0, 48);
    let tariff = serde_json::to_string(&Tariff::five_window_default()).unwrap();
    let mut inputs = write_files(dir.path(), NET, &profiles, ("tariff.json", &tariff));
    inputs.horizon = Some(24);
    let study = scenario::load(&inputs).unwrap();
    assert_eq!(study.scenario.customers()[0].p_load.len(), 24);
    inputs.horizon = Some(72);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::LengthMismatch(_))));
}

#[test]
fn input_errors_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let ok_profiles = header() + &day_profile(1, "a", 1.0, 0.0, 24);
    let tariff = ("tariff.json", "[0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2,0.2]");

    let mut inputs = write_files(dir.path(), NET, &ok_profiles, tariff);
    inputs.network = dir.path().join("missing.csv");
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::Io { .. })));

    let inputs = write_files(dir.path(), "from,to,r_ohm,x_ohm\n0,1,abc,0.1\n", &ok_profiles, tariff);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::Parse { .. })));

    let inputs = write_files(dir.path(), "from,to,r_ohm,x_ohm\n0,1,0.1,0.1\n1,2,0.1,0.1\n2,0,0.1,0.1\n", &ok_profiles, tariff);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::Network(_))));

    let inputs = write_files(dir.path(), NET, &(header() + &day_profile(5, "a", 1.0, 0.0, 24)), tariff);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::UnknownNode { node: 5, .. })));

    let inputs = write_files(dir.path(), NET, &(header() + &day_profile(1, "a", -1.0, 0.0, 24)), tariff);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::NegativeLoadOrPv { .. })));

    let dup = header() + &day_profile(1, "a", 1.0, 0.0, 24) + "1,a,3,1.0,0.1,0.0\n";
    let inputs = write_files(dir.path(), NET, &dup, tariff);
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::Parse { .. })));

    let inputs = write_files(dir.path(), NET, &ok_profiles, ("tariff.json", "[0.2, 0.3]"));
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::LengthMismatch(_))));

    let mut inputs = write_files(dir.path(), NET, &ok_profiles, tariff);
    fs::write(dir.path().join("config.json"), "{\"not_a_field\": 1}").unwrap();
    inputs.config = Some(dir.path().join("config.json"));
    assert!(matches!(scenario::load(&inputs), Err(ScenarioError::InvalidParameter(_))));
}

#[test]
fn non_whole_day_horizon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = header() + &day_profile(1, "a", 1.0, 0.0, 30);
    let tariff = serde_json::to_string(&Tariff::five_window_default()).unwrap();
    let inputs = write_files(dir.path(), NET, &profiles, ("tariff.json", &tariff));
    assert!(scenario::load(&inputs).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn written_studies_load_back_unchanged(seed in 0u64..1000, days in 1usize..3) {
        let study = fixture::generate(seed, 24 * days).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let inputs = scenario::write(dir.path(), &study).unwrap();
        let back = scenario::load(&inputs).unwrap();
        prop_assert_eq!(&back.scenario, &study.scenario);
        prop_assert_eq!(back.network.lines(), study.network.lines());
        prop_assert_eq!(back.config, study.config);
    }
}

use std::sync::OnceLock;

use cesplan_core::cesopt::{CesDesign, ConstraintFamily, Schedule};
use cesplan_core::fixture;
use cesplan_core::planner::{self, PlanOptions};
use cesplan_core::scenario::{Scenario, Study};
use cesplan_core::validator::{validate, Flag, Objectives, Tolerances, ValidationError, ValidationReport};
use proptest::prelude::*;

struct Solved {
    study: Study,
    design: CesDesign,
    schedule: Schedule,
    objectives: Objectives,
}

fn solved() -> &'static Solved {
    static S: OnceLock<Solved> = OnceLock::new();
    S.get_or_init(|| {
        let study = fixture::generate(4, 24).unwrap();
        let opts = PlanOptions { candidates: vec![3], ..PlanOptions::default() };
        let r = planner::plan(&study.network, &study.scenario, &study.config.ces, [0.2, 0.6, 0.2], &opts).unwrap();
        let loc = r.selected;
        let [loss_kwh, trade_aud, invest_aud] = loc.objectives;
        Solved {
            design: loc.design,
            schedule: loc.schedule,
            objectives: Objectives { loss_kwh, trade_aud, invest_aud },
            study,
        }
    })
}

fn check(design: &CesDesign, schedule: &Schedule) -> ValidationReport {
    let s = solved();
    validate(&s.study.network, &s.study.scenario, &s.study.config.ces, design, schedule, None, &Tolerances::default()).unwrap()
}

fn failing(r: &ValidationReport) -> Vec<ConstraintFamily> {
    r.families.iter().filter(|f| !f.pass).map(|f| f.family).collect()
}

#[test]
fn solved_plan_passes_and_matches_its_reported_objectives() {
    let s = solved();
    let r = validate(
        &s.study.network,
        &s.study.scenario,
        &s.study.config.ces,
        &s.design,
        &s.schedule,
        Some(s.objectives),
        &Tolerances::default(),
    )
    .unwrap();
    assert!(r.pass, "{:?}", failing(&r));
    assert!(r.objective_rel_error.unwrap().iter().all(|e| *e <= 1e-5));
}

#[test]
fn mismatched_reported_objectives_fail() {
    let s = solved();
    let mut wrong = s.objectives;
    wrong.loss_kwh *= 1.01;
    let r = validate(
        &s.study.network,
        &s.study.scenario,
        &s.study.config.ces,
        &s.design,
        &s.schedule,
        Some(wrong),
        &Tolerances::default(),
    )
    .unwrap();
    assert!(!r.pass);
    assert!(failing(&r).is_empty());
    let e = r.objective_rel_error.unwrap();
    assert!(e[0] > 1e-3 && e[1] <= 1e-5);
}

#[test]
fn exchange_breach_names_the_customer_and_step() {
    let s = solved();
    let mut sch = s.schedule.clone();
    sch.p_grid_customer[5][9] += 2.0;
    let r = check(&s.design, &sch);
    assert_eq!(failing(&r), vec![ConstraintFamily::CustomerExchange]);
    let w = &r.family(ConstraintFamily::CustomerExchange).worst;
    assert_eq!(w.customer.as_deref(), Some(sch.customer_ids[5].as_str()));
    assert_eq!(w.t, Some(9));
    let f = r.family(ConstraintFamily::CustomerExchange).max_violation;
    assert!((f - 2.0).abs() < 1e-6, "{f}");
}

#[test]
fn storage_balance_breach() {
    let s = solved();
    let mut sch = s.schedule.clone();
    sch.p_grid_ces[14] += 0.5;
    let r = check(&s.design, &sch);
    assert_eq!(failing(&r), vec![ConstraintFamily::CesGridBalance]);
    assert_eq!(r.family(ConstraintFamily::CesGridBalance).worst.t, Some(14));
}

#[test]
fn rating_and_energy_breaches() {
    let s = solved();
    let mut d = s.design.clone();
    d.p_rate = s.schedule.p_ch.iter().chain(&s.schedule.p_dis).fold(0.0f64, |a, &b| a.max(b)) - 1.0;
    if d.p_rate >= s.study.config.ces.p_rate_min {
        let r = check(&d, &s.schedule);
        assert_eq!(failing(&r), vec![ConstraintFamily::Rating]);
    }

    let mut sch = s.schedule.clone();
    sch.energy[10] += 0.5;
    let r = check(&s.design, &sch);
    assert!(failing(&r).contains(&ConstraintFamily::SocRecursion));
    let t = r.family(ConstraintFamily::SocRecursion).worst.t.unwrap();
    assert!(t == 10 || t == 11);

    let mut sch = s.schedule.clone();
    let over = s.study.config.ces.lambda_max * s.design.e_cap + 3.0;
    sch.energy[6] = over;
    let r = check(&s.design, &sch);
    let soc = r.family(ConstraintFamily::SocBounds);
    assert!(!soc.pass && soc.worst.t == Some(6));
    assert!((soc.max_violation - 3.0).abs() < 1e-9);
}

#[test]
fn day_end_drift_is_a_continuity_breach() {
    let s = solved();
    let mut sch = s.schedule.clone();
    sch.energy[23] = sch.initial_energy + 1.0;
    let r = check(&s.design, &sch);
    assert!(failing(&r).contains(&ConstraintFamily::DayContinuity));
    assert!(r
        .flags
        .iter()
        .any(|f| matches!(f, Flag::ContinuityBreach { day: 1, deviation_kwh } if (deviation_kwh - 1.0).abs() < 1e-9)));
}

#[test]
fn sizing_and_siting_breaches() {
    let s = solved();
    let mut d = s.design.clone();
    d.e_cap = 50.0;
    let mut sch = s.schedule.clone();
    sch.initial_energy = s.study.config.ces.initial_soc * d.e_cap;
    let r = check(&d, &sch);
    assert!(failing(&r).contains(&ConstraintFamily::Sizing));

    let mut d = s.design.clone();
    d.siting = vec![1; d.siting.len()];
    let r = check(&d, &s.schedule);
    assert_eq!(failing(&r), vec![ConstraintFamily::Sizing]);
}

/// The worst voltage is located by the matrix route, independently of the
/// recursion the validator uses.
#[test]
fn voltage_breach_is_located_at_the_lowest_node() {
    let s = solved();
    let mut sch = s.schedule.clone();
    let t = 19;
    sch.p_ch[t] += 400.0;
    let r = check(&s.design, &sch);
    let v = r.family(ConstraintFamily::Voltage);
    assert!(!v.pass);
    assert_eq!(v.worst.t, Some(t));

    let mut p = s.study.scenario.nodal_net_load();
    for k in 0..24 {
        p[s.design.location - 1][k] += sch.p_ch[k] - sch.p_dis[k];
    }
    let u = s.study.network.lindistflow_voltages(&p, &s.study.scenario.nodal_reactive()).unwrap();
    let lowest = (0..u.u.len()).min_by(|&a, &b| u.u[a][t].total_cmp(&u.u[b][t])).unwrap() + 1;
    assert_eq!(v.worst.node, Some(lowest));
    let expect = s.study.network.umin() - u.u[lowest - 1][t];
    assert!((v.max_violation - expect).abs() <= 1e-6 * expect, "{} vs {expect}", v.max_violation);
}

#[test]
fn simultaneous_operation_is_flagged_not_failed() {
    let s = solved();
    let mut sch = s.schedule.clone();
    let t = (0..24).find(|&t| sch.p_ch[t] == 0.0 && sch.p_dis[t] == 0.0 && sch.p_grid_ces[t] == 0.0);
    let Some(t) = t else { return };
    // a matched charge/discharge pair with the storage paying for the difference
    let (ch, dis) = (1.0, 1.0);
    let eta = &s.study.config.ces;
    sch.p_ch[t] = ch;
    sch.p_dis[t] = dis;
    sch.p_grid_ces[t] = ch - dis;
    let shift = (eta.eta_ch * ch - dis / eta.eta_dis) * s.study.scenario.horizon().dt_hours;
    for e in &mut sch.energy[t..] {
        *e += shift;
    }
    let r = check(&s.design, &sch);
    assert!(r.flags.iter().any(|f| matches!(f, Flag::SimultaneousChargeDischarge { t: ft, .. } if *ft == t)));
    assert!(!failing(&r).contains(&ConstraintFamily::Rating));
}

#[test]
fn shape_errors_are_reported() {
    let s = solved();
    let mut sch = s.schedule.clone();
    sch.p_ch.pop();
    let e = validate(&s.study.network, &s.study.scenario, &s.study.config.ces, &s.design, &sch, None, &Tolerances::default());
    assert!(matches!(e, Err(ValidationError::DimensionMismatch(_))));

    let mut sch = s.schedule.clone();
    sch.customer_ids[0] = "nobody".into();
    let e = validate(&s.study.network, &s.study.scenario, &s.study.config.ces, &s.design, &sch, None, &Tolerances::default());
    assert!(matches!(e, Err(ValidationError::DimensionMismatch(_))));

    let mut d = s.design.clone();
    d.location = 0;
    let e = validate(&s.study.network, &s.study.scenario, &s.study.config.ces, &d, &s.schedule, None, &Tolerances::default());
    assert!(e.is_err());
}

fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn report_ignores_customer_order(perm_s in Just((0..30).collect::<Vec<usize>>()).prop_shuffle(),
                                     perm_c in Just((0..30).collect::<Vec<usize>>()).prop_shuffle(),
                                     bump in -1.0f64..1.0) {
        let s = solved();
        let mut sch = s.schedule.clone();
        // a small exchange breach so the worst-index bookkeeping is exercised
        sch.p_grid_customer[7][3] += bump;
        let plain = check(&s.design, &sch);

        let mut shuffled = sch.clone();
        shuffled.customer_ids = permute(&sch.customer_ids, &perm_s);
        shuffled.p_grid_customer = permute(&sch.p_grid_customer, &perm_s);
        shuffled.p_ces_customer = permute(&sch.p_ces_customer, &perm_s);
        let sc = &s.study.scenario;
        let scenario = Scenario::new(
            permute(sc.customers(), &perm_c),
            sc.tariff().clone(),
            *sc.horizon(),
            sc.node_count(),
        ).unwrap();
        let r = validate(&s.study.network, &scenario, &s.study.config.ces, &s.design, &shuffled, None, &Tolerances::default()).unwrap();
        prop_assert_eq!(r, plain);
    }
}

//! Seeded synthetic study: a 7-node feeder with 30 residential customers,
//! evening-peaking loads and rooftop PV, under the default ToU tariff.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{build_network, Line};
use crate::scenario::{CustomerProfile, Horizon, Scenario, ScenarioError, Study, StudyConfig, Tariff};

pub const FIXTURE_CUSTOMERS: usize = 30;

/// Trunk 0-1-2-3 with laterals 1-4-5 and 2-6-7.
pub fn fixture_lines() -> Vec<Line> {
    let l = |from, to, r, x| Line { from, to, r, x };
    vec![
        l(0, 1, 0.0225, 0.012),
        l(1, 2, 0.030, 0.015),
        l(2, 3, 0.030, 0.015),
        l(1, 4, 0.0375, 0.018),
        l(4, 5, 0.030, 0.015),
        l(2, 6, 0.045, 0.0225),
        l(6, 7, 0.0375, 0.015),
    ]
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((h - centre) / width).powi(2)).exp()
}

/// Customer profiles for `steps` hourly steps. Every node gets at least one
/// customer; the rest are placed at random.
pub fn fixture_customers(rng: &mut ChaCha8Rng, nodes: usize, count: usize, steps: usize, dt: f64) -> Vec<CustomerProfile> {
    let tan_phi = (1.0f64 - 0.95 * 0.95).sqrt() / 0.95;
    (0..count)
        .map(|k| {
            let node = if k < nodes { k + 1 } else { rng.random_range(1..=nodes) };
            let base = rng.random_range(0.5..1.0);
            let morning = rng.random_range(1.0..3.0);
            let evening = rng.random_range(2.0..5.0);
            let pv_kw = rng.random_range(4.0..10.0);
            let mut day_factor = 1.0;
            let mut clear = 1.0;
            let mut p_load = Vec::with_capacity(steps);
            let mut p_pv = Vec::with_capacity(steps);
            for t in 0..steps {
                let hour = (t as f64 * dt) % 24.0;
                if t == 0 || hour < dt / 2.0 {
                    day_factor = rng.random_range(0.85..1.15);
                    clear = rng.random_range(0.6..1.0);
                }
                let h = hour + dt / 2.0;
                let shape = base + morning * bump(h, 7.5, 1.2) + evening * bump(h, 19.0, 2.0);
                p_load.push(shape * day_factor * rng.random_range(0.9..1.1));
                let sun = if (6.0..18.0).contains(&h) { (PI * (h - 6.0) / 12.0).sin() } else { 0.0 };
                p_pv.push(pv_kw * clear * sun);
            }
            CustomerProfile {
                node,
                id: format!("c{:02}", k + 1),
                q_load: p_load.iter().map(|p| p * tan_phi).collect(),
                p_load,
                p_pv,
            }
        })
        .collect()
}

/// The bundled study for `steps` hourly steps.
pub fn generate(seed: u64, steps: usize) -> Result<Study, ScenarioError> {
    let mut config = StudyConfig::default();
    config.horizon.steps = Some(steps);
    let lines = fixture_lines();
    let network = build_network(&lines, config.u0(), config.umin(), config.umax())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = Horizon::new(steps, config.horizon.dt_hours)?;
    let customers = fixture_customers(&mut rng, network.node_count(), FIXTURE_CUSTOMERS, steps, horizon.dt_hours);
    let mut scenario = Scenario::new(customers.clone(), Tariff::five_window_default(), horizon, network.node_count())?;
    let f = voltage_shrink(&network, &scenario);
    if f < 1.0 {
        let scaled = customers
            .into_iter()
            .map(|mut c| {
                for v in c.p_load.iter_mut().chain(c.q_load.iter_mut()).chain(c.p_pv.iter_mut()) {
                    *v *= f;
                }
                c
            })
            .collect();
        scenario = Scenario::new(scaled, Tariff::five_window_default(), horizon, network.node_count())?;
    }
    Ok(Study { network, scenario, config })
}

/// Factor on all loads and PV that keeps the no-storage voltages inside the
/// limits with a 10% margin on the allowed deviation. Deviations from U0 are
/// linear in the injections, so one uniform factor suffices.
fn voltage_shrink(network: &crate::netmodel::Network, scenario: &Scenario) -> f64 {
    let u = network
        .lindistflow_voltages(&scenario.nodal_net_load(), &scenario.nodal_reactive())
        .expect("fixture dimensions agree");
    let u0 = network.u0();
    let drop = (u0 - u.min()) / (u0 - network.umin());
    let rise = (u.max() - u0) / (network.umax() - u0);
    let worst = drop.max(rise);
    if worst <= 0.9 {
        1.0
    } else {
        0.9 / worst
    }
}

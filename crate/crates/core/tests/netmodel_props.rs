mod common;

use cesplan_core::netmodel::{build_network, Line};
use common::{direct_loss_kw, random_tree, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

const U0: f64 = 160000.0;

fn series(rng: &mut rand_chacha::ChaCha8Rng, n: usize, t: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..t).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_voltages_match_recursion(seed in any::<u64>(), n in 1usize..=8) {
        let mut g = rng(seed);
        let net = build_network(&random_tree(&mut g, n), U0, 0.0, 2.0 * U0).unwrap();
        let p = series(&mut g, n, 4, 10.0);
        let q = series(&mut g, n, 4, 5.0);
        let a = net.lindistflow_voltages(&p, &q).unwrap();
        let b = net.voltages_by_recursion(&p, &q).unwrap();
        for (ra, rb) in a.u.iter().zip(&b.u) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!(rel(*x, *y) <= 1e-9, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn path_matrices_symmetric_and_resistance_positive_definite(seed in any::<u64>(), n in 1usize..=8) {
        let mut g = rng(seed);
        let net = build_network(&random_tree(&mut g, n), U0, 0.0, 2.0 * U0).unwrap();
        let r = net.path_resistance();
        let x = net.path_reactance();
        prop_assert_eq!(r, &r.transpose());
        prop_assert_eq!(x, &x.transpose());
        prop_assert!((0..n).all(|i| r[(i, i)] > 0.0));
        prop_assert!(r.clone().cholesky().is_some());
    }

    #[test]
    fn flows_are_downstream_sums(seed in any::<u64>(), n in 1usize..=8) {
        let mut g = rng(seed);
        let lines = random_tree(&mut g, n);
        let net = build_network(&lines, U0, 0.0, 2.0 * U0).unwrap();
        let p = series(&mut g, n, 3, 10.0);
        let q = series(&mut g, n, 3, 10.0);
        let (pf, qf) = net.line_flows(&p, &q).unwrap();
        let par = common::parents(&lines);
        for j in 1..=n {
            prop_assert_eq!(net.parent(j), par[j].0);
            for t in 0..3 {
                let sp: f64 = net.downstream_set(j).iter().map(|&k| p[k - 1][t]).sum();
                let sq: f64 = net.downstream_set(j).iter().map(|&k| q[k - 1][t]).sum();
                prop_assert_eq!(pf[j - 1][t], sp);
                prop_assert_eq!(qf[j - 1][t], sq);
            }
        }
    }

    #[test]
    fn loss_form_equals_direct_sum(seed in any::<u64>(), n in 1usize..=8) {
        let mut g = rng(seed);
        let lines = random_tree(&mut g, n);
        let net = build_network(&lines, U0, 0.0, 2.0 * U0).unwrap();
        let p = series(&mut g, n, 2, 10.0);
        let q = series(&mut g, n, 2, 10.0);
        let form = net.loss_quadratic_form(&q).unwrap();
        let lib_direct = net.line_losses(&p, &q).unwrap();
        for (t, f) in form.evaluate(&p).into_iter().enumerate() {
            let pt: Vec<f64> = p.iter().map(|r| r[t]).collect();
            let qt: Vec<f64> = q.iter().map(|r| r[t]).collect();
            let oracle = direct_loss_kw(&lines, U0, &pt, &qt);
            let summed: f64 = lib_direct.iter().map(|r| r[t]).sum();
            prop_assert!(rel(f, oracle) <= 1e-10, "{} vs {}", f, oracle);
            prop_assert!(rel(summed, oracle) <= 1e-10, "{} vs {}", summed, oracle);
        }
    }
}

#[test]
fn loss_hessian_matches_finite_differences() {
    let lines = [
        Line { from: 0, to: 1, r: 0.05, x: 0.02 },
        Line { from: 1, to: 2, r: 0.08, x: 0.03 },
        Line { from: 1, to: 3, r: 0.12, x: 0.01 },
    ];
    let net = build_network(&lines, U0, 0.0, 2.0 * U0).unwrap();
    let q = [0.5, -0.2, 1.0];
    let form = net.loss_quadratic_form(&[vec![q[0]], vec![q[1]], vec![q[2]]]).unwrap();
    let p0 = [3.0, -1.5, 2.0];
    let h = 1e-2;
    let f = |p: [f64; 3]| direct_loss_kw(&lines, U0, &p, &q);
    let mut fd = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for k in 0..3 {
            let mut pp = p0;
            pp[i] += h;
            pp[k] += h;
            let mut pm = p0;
            pm[i] += h;
            pm[k] -= h;
            let mut mp = p0;
            mp[i] -= h;
            mp[k] += h;
            let mut mm = p0;
            mm[i] -= h;
            mm[k] -= h;
            fd[(i, k)] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
        }
    }
    // loss = pᵀHp + c0, so its Hessian is 2H
    let diff = (&fd - &form.hessian * 2.0).abs().max();
    assert!(diff <= 1e-6, "max deviation {diff}");
}

//! Active-set polishing of an ADMM iterate.
//!
//! The active set is guessed from the sign of the multipliers. The
//! equality-constrained QP on that set, plus a small proximal term centred
//! on the ADMM iterate, is solved through a regularized KKT system with
//! iterative refinement. The proximal term pins directions the objective
//! does not see (LP-like problems have plenty) to where ADMM left them
//! instead of letting them drift to zero. The guess is then corrected (rows
//! with wrong-signed multipliers dropped, violated rows added) until it is
//! self-consistent or the pass budget runs out.

use super::admm::Scaled;
use super::csc::CscMatrix;
use super::ldl::LdlFactor;
use super::SolverSettings;

/// Polished point in the scaled space.
pub(super) struct Polished {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    Free,
    Lower,
    Upper,
    Fixed,
}

pub(super) fn polish(sc: &Scaled, x0: &[f64], z: &[f64], y: &[f64], s: &SolverSettings) -> Option<Polished> {
    let n = sc.q.len();
    let m = sc.l.len();
    let mut act: Vec<Activity> = (0..m)
        .map(|i| {
            if sc.l[i] == sc.u[i] {
                Activity::Fixed
            } else if z[i] - sc.l[i] < -y[i] {
                Activity::Lower
            } else if sc.u[i] - z[i] < y[i] {
                Activity::Upper
            } else {
                Activity::Free
            }
        })
        .collect();
    let p_upper: Vec<(usize, usize, f64)> = sc.p.triplets().filter(|&(r, c, _)| r <= c).collect();
    let delta = s.polish_delta;

    for _ in 0..s.polish_passes.max(1) {
        let rows: Vec<usize> = (0..m).filter(|&i| act[i] != Activity::Free).collect();
        let k = rows.len();
        let b: Vec<f64> = rows
            .iter()
            .map(|&i| match act[i] {
                Activity::Upper => sc.u[i],
                _ => sc.l[i],
            })
            .collect();
        let ared = sc.a.select_rows(&rows);

        let mut trip = p_upper.clone();
        trip.extend((0..n).map(|j| (j, j, delta)));
        trip.extend(ared.triplets().map(|(r, c, v)| (c, n + r, v)));
        trip.extend((0..k).map(|r| (n + r, n + r, -delta)));
        let kkt = CscMatrix::from_triplets(n + k, n + k, &trip);
        let factor = LdlFactor::new(&kkt).ok()?;

        let rhs: Vec<f64> = (0..n).map(|j| delta * x0[j] - sc.q[j]).chain(b.iter().copied()).collect();
        let mut sol = rhs.clone();
        factor.solve_in_place(&mut sol);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut top = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut bottom = vec![0.0; k];
        for _ in 0..s.polish_refine_iter {
            // residual against [P + δI, Aᵀ; A, 0]
            sc.p.mul_vec(&sol[..n], &mut top);
            for j in 0..n {
                top[j] += delta * sol[j];
            }
            ared.mul_t_vec(&sol[n..], &mut aty);
            ared.mul_vec(&sol[..n], &mut bottom);
            let mut r: Vec<f64> = (0..n)
                .map(|i| rhs[i] - top[i] - aty[i])
                .chain((0..k).map(|i| rhs[n + i] - bottom[i]))
                .collect();
            if r.iter().all(|v| v.abs() <= 1e-15 * scale) {
                break;
            }
            factor.solve_in_place(&mut r);
            for (s, d) in sol.iter_mut().zip(&r) {
                *s += d;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let x = sol[..n].to_vec();
        let mut yfull = vec![0.0; m];
        for (j, &i) in rows.iter().enumerate() {
            yfull[i] = sol[n + j];
        }
        let mut ax = vec![0.0; m];
        sc.a.mul_vec(&x, &mut ax);
        let ytol = 1e-9 * sol[n..].iter().fold(1.0f64, |acc, v| acc.max(v.abs()));

        let mut changed = false;
        for i in 0..m {
            match act[i] {
                Activity::Lower if yfull[i] > ytol => {
                    act[i] = Activity::Free;
                    changed = true;
                }
                Activity::Upper if yfull[i] < -ytol => {
                    act[i] = Activity::Free;
                    changed = true;
                }
                Activity::Free => {
                    let ftol = 1e-9 * (1.0 + ax[i].abs());
                    if ax[i] < sc.l[i] - ftol {
                        act[i] = Activity::Lower;
                        changed = true;
                    } else if ax[i] > sc.u[i] + ftol {
                        act[i] = Activity::Upper;
                        changed = true;
                    }
                }
                _ => {}
            }
        }
        if !changed {
            return Some(Polished { x, y: yfull });
        }
    }
    None
}

/// Moves `x0` onto the constraint set by a least-norm correction when the
/// active-set polish fails. Violated rows are pinned to the bound they
/// cross; a pin whose multiplier pulls the wrong way is released. Equality
/// rows stay pinned throughout. The multipliers are left to the caller.
pub(super) fn project_feasible(sc: &Scaled, x0: &[f64], s: &SolverSettings) -> Option<Vec<f64>> {
    let n = x0.len();
    let m = sc.l.len();
    let mut pinned: Vec<Option<f64>> = (0..m).map(|i| (sc.l[i] == sc.u[i]).then_some(sc.l[i])).collect();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; m];
    let delta = s.polish_delta;
    let feas_tol = |v: f64| 1e-10 * (1.0 + v.abs());

    let mut moved = true;
    for _ in 0..4 * s.polish_passes.max(1) {
        sc.a.mul_vec(&x, &mut ax);
        let mut grew = false;
        for i in 0..m {
            // just-released rows wait for a step before they can be pinned again
            if moved && pinned[i].is_none() {
                if ax[i] < sc.l[i] - feas_tol(ax[i]) {
                    pinned[i] = Some(sc.l[i]);
                    grew = true;
                } else if ax[i] > sc.u[i] + feas_tol(ax[i]) {
                    pinned[i] = Some(sc.u[i]);
                    grew = true;
                }
            }
        }
        let rows: Vec<usize> = (0..m).filter(|&i| pinned[i].is_some()).collect();
        let off = rows.iter().any(|&i| (ax[i] - pinned[i].unwrap_or(0.0)).abs() > feas_tol(ax[i]));
        if !grew && !off {
            return Some(x);
        }

        let k = rows.len();
        let ared = sc.a.select_rows(&rows);
        let mut trip: Vec<(usize, usize, f64)> = (0..n).map(|j| (j, j, 1.0)).collect();
        trip.extend(ared.triplets().map(|(r, c, v)| (c, n + r, v)));
        trip.extend((0..k).map(|r| (n + r, n + r, -delta)));
        let kkt = CscMatrix::from_triplets(n + k, n + k, &trip);
        let factor = LdlFactor::new(&kkt).ok()?;

        // least-norm step dx with A_S (x + dx) = b_S
        let rhs: Vec<f64> = vec![0.0; n]
            .into_iter()
            .chain(rows.iter().map(|&i| pinned[i].unwrap_or(0.0) - ax[i]))
            .collect();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut sol = rhs.clone();
        factor.solve_in_place(&mut sol);
        let mut bottom = vec![0.0; k];
        let mut aty = vec![0.0; n];
        for _ in 0..s.polish_refine_iter {
            ared.mul_t_vec(&sol[n..], &mut aty);
            ared.mul_vec(&sol[..n], &mut bottom);
            let mut r: Vec<f64> = (0..n)
                .map(|j| rhs[j] - sol[j] - aty[j])
                .chain((0..k).map(|i| rhs[n + i] - bottom[i]))
                .collect();
            if r.iter().all(|v| v.abs() <= 1e-15 * scale) {
                break;
            }
            factor.solve_in_place(&mut r);
            for (v, d) in sol.iter_mut().zip(&r) {
                *v += d;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // dx = −A_Sᵀν: a pin at the lower bound must push up (ν ≤ 0), one
        // at the upper bound down; anything else is released and the step
        // recomputed
        let ntol = 1e-9 * sol[n..].iter().fold(1e-12f64, |acc, v| acc.max(v.abs()));
        let mut released = false;
        for (j, &i) in rows.iter().enumerate() {
            if sc.l[i] == sc.u[i] {
                continue;
            }
            let nu = sol[n + j];
            let at_lower = pinned[i] == Some(sc.l[i]);
            if (at_lower && nu > ntol) || (!at_lower && nu < -ntol) {
                pinned[i] = None;
                released = true;
            }
        }
        moved = !released;
        if released {
            continue;
        }
        for (xj, d) in x.iter_mut().zip(&sol[..n]) {
            *xj += d;
        }
    }
    None
}

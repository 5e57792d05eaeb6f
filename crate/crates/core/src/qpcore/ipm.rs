//! Primal-dual interior-point finisher on the equilibrated problem.
//!
//! Used when ADMM stalls, which on LP-like problems with large optimal
//! faces it readily does. Each row `l ≤ aᵀx ≤ u` gets a slack per finite
//! bound; eliminating slacks and their multipliers leaves the same
//! quasi-definite pattern ADMM factors, `[P + δI, Aᵀ; A, −Θ⁻¹]`, so the
//! symbolic analysis is shared and every iteration is one numeric refactor.
//! Steps follow Mehrotra's predictor-corrector scheme.

use super::admm::Scaled;
use super::csc::CscMatrix;
use super::ldl::LdlFactor;

const MAX_ITER: usize = 120;
const STEP_FRACTION: f64 = 0.99;
/// Primal regularization of the `P` block and of equality rows.
const REG: f64 = 1e-10;
/// Diagonal used for rows without finite bounds, which keeps their
/// multipliers at zero.
const FREE_ROW_DIAG: f64 = 1e10;
const REFINE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Free,
    Equality,
    Bounded { lower: bool, upper: bool },
}

pub(super) struct InteriorPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
}

struct Step {
    dx: Vec<f64>,
    dy_eq: Vec<f64>,
    ds_l: Vec<f64>,
    ds_u: Vec<f64>,
    dl_l: Vec<f64>,
    dl_u: Vec<f64>,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest `α ≤ 1` keeping `v + α·dv ≥ 0` on the rows in `mask`.
fn max_step(v: &[f64], dv: &[f64], mask: &[bool]) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if mask[i] && dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

/// Solves to relative accuracy `tol` in the scaled space, or gives up.
pub(super) fn interior_point(sc: &Scaled, tol: f64) -> Option<InteriorPoint> {
    let (n, m) = (sc.q.len(), sc.l.len());
    let rows: Vec<Row> = (0..m)
        .map(|i| {
            let (lo, hi) = (sc.l[i], sc.u[i]);
            if lo == hi {
                Row::Equality
            } else if lo.is_finite() || hi.is_finite() {
                Row::Bounded { lower: lo.is_finite(), upper: hi.is_finite() }
            } else {
                Row::Free
            }
        })
        .collect();
    let has_l: Vec<bool> = rows.iter().map(|r| matches!(r, Row::Bounded { lower: true, .. })).collect();
    let has_u: Vec<bool> = rows.iter().map(|r| matches!(r, Row::Bounded { upper: true, .. })).collect();
    let count = has_l.iter().chain(&has_u).filter(|&&b| b).count();

    let mut trip: Vec<(usize, usize, f64)> = sc.p.triplets().filter(|&(r, c, _)| r <= c).collect();
    trip.extend((0..n).map(|j| (j, j, REG)));
    trip.extend(sc.a.triplets().map(|(r, c, v)| (c, n + r, v)));
    trip.extend((0..m).map(|i| (n + i, n + i, -1.0)));
    let mut kkt = CscMatrix::from_triplets(n + m, n + m, &trip);
    let diag_pos: Vec<usize> = (0..m).map(|i| kkt.colptr()[n + i + 1] - 1).collect();
    let mut factor = LdlFactor::new(&kkt).ok()?;

    let bnorm = 1.0
        + sc.l.iter().chain(&sc.u).filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    let qnorm = 1.0 + norm_inf(&sc.q);

    let mut x = vec![0.0; n];
    let mut y_eq = vec![0.0; m];
    let mut ax = vec![0.0; m];
    sc.a.mul_vec(&x, &mut ax);
    let mut s_l: Vec<f64> = (0..m).map(|i| if has_l[i] { (ax[i] - sc.l[i]).max(1.0) } else { 0.0 }).collect();
    let mut s_u: Vec<f64> = (0..m).map(|i| if has_u[i] { (sc.u[i] - ax[i]).max(1.0) } else { 0.0 }).collect();
    let mut l_l: Vec<f64> = has_l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut l_u: Vec<f64> = has_u.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let mut px = vec![0.0; n];
    let mut aty = vec![0.0; n];
    for it in 1..=MAX_ITER {
        let y: Vec<f64> = (0..m)
            .map(|i| match rows[i] {
                Row::Equality => y_eq[i],
                Row::Bounded { .. } => l_u[i] - l_l[i],
                Row::Free => 0.0,
            })
            .collect();
        sc.a.mul_vec(&x, &mut ax);
        sc.p.mul_vec(&x, &mut px);
        sc.a.mul_t_vec(&y, &mut aty);
        let r_d: Vec<f64> = (0..n).map(|j| px[j] + sc.q[j] + aty[j]).collect();
        let r_l: Vec<f64> = (0..m).map(|i| if has_l[i] { ax[i] - s_l[i] - sc.l[i] } else { 0.0 }).collect();
        let r_u: Vec<f64> = (0..m).map(|i| if has_u[i] { ax[i] + s_u[i] - sc.u[i] } else { 0.0 }).collect();
        let r_e: Vec<f64> = (0..m).map(|i| if rows[i] == Row::Equality { ax[i] - sc.l[i] } else { 0.0 }).collect();
        let gap: f64 = (0..m).map(|i| s_l[i] * l_l[i] + s_u[i] * l_u[i]).sum();
        let mu = if count > 0 { gap / count as f64 } else { 0.0 };

        let prim = norm_inf(&r_l).max(norm_inf(&r_u)).max(norm_inf(&r_e));
        let dual = norm_inf(&r_d);
        let dual_scale = qnorm.max(norm_inf(&px)).max(norm_inf(&aty));
        if prim <= tol * bnorm.max(norm_inf(&ax)) && dual <= tol * dual_scale && mu <= tol {
            let z = (0..m).map(|i| ax[i].max(sc.l[i]).min(sc.u[i])).collect();
            return Some(InteriorPoint { x, y, z, iterations: it - 1 });
        }
        if !(prim.is_finite() && dual.is_finite() && mu.is_finite()) {
            return None;
        }

        let theta: Vec<f64> = (0..m)
            .map(|i| {
                let mut t = 0.0;
                if has_l[i] {
                    t += l_l[i] / s_l[i];
                }
                if has_u[i] {
                    t += l_u[i] / s_u[i];
                }
                t
            })
            .collect();
        let diag: Vec<f64> = (0..m)
            .map(|i| match rows[i] {
                Row::Equality => REG,
                Row::Free => FREE_ROW_DIAG,
                Row::Bounded { .. } => (1.0 / theta[i]).max(REG),
            })
            .collect();
        {
            let values = kkt.values_mut();
            for i in 0..m {
                values[diag_pos[i]] = -diag[i];
            }
        }
        factor.refactor(kkt.values()).ok()?;

        // exact diagonal for refinement; regularized only where it must be
        let exact: Vec<f64> = (0..m)
            .map(|i| match rows[i] {
                Row::Equality => 0.0,
                Row::Free => FREE_ROW_DIAG,
                Row::Bounded { .. } => 1.0 / theta[i],
            })
            .collect();

        let solve = |c_l: &[f64], c_u: &[f64]| -> Option<Step> {
            let mut rhs = vec![0.0; n + m];
            for j in 0..n {
                rhs[j] = -r_d[j];
            }
            for i in 0..m {
                rhs[n + i] = match rows[i] {
                    Row::Equality => -r_e[i],
                    Row::Free => 0.0,
                    Row::Bounded { .. } => {
                        let mut g = 0.0;
                        if has_u[i] {
                            g += (c_u[i] + l_u[i] * r_u[i]) / s_u[i];
                        }
                        if has_l[i] {
                            g -= (c_l[i] - l_l[i] * r_l[i]) / s_l[i];
                        }
                        -g / theta[i]
                    }
                };
            }
            let mut sol = rhs.clone();
            factor.solve_in_place(&mut sol);
            let mut top = vec![0.0; n];
            let mut aty = vec![0.0; n];
            let mut bot = vec![0.0; m];
            for _ in 0..REFINE {
                sc.p.mul_vec(&sol[..n], &mut top);
                sc.a.mul_t_vec(&sol[n..], &mut aty);
                sc.a.mul_vec(&sol[..n], &mut bot);
                let mut r: Vec<f64> = (0..n)
                    .map(|j| rhs[j] - top[j] - aty[j])
                    .chain((0..m).map(|i| rhs[n + i] - bot[i] + exact[i] * sol[n + i]))
                    .collect();
                factor.solve_in_place(&mut r);
                for (v, d) in sol.iter_mut().zip(&r) {
                    *v += d;
                }
            }
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dx = sol[..n].to_vec();
            let mut adx = vec![0.0; m];
            sc.a.mul_vec(&dx, &mut adx);
            let mut st = Step {
                dx,
                dy_eq: vec![0.0; m],
                ds_l: vec![0.0; m],
                ds_u: vec![0.0; m],
                dl_l: vec![0.0; m],
                dl_u: vec![0.0; m],
            };
            for i in 0..m {
                if rows[i] == Row::Equality {
                    st.dy_eq[i] = sol[n + i];
                }
                if has_l[i] {
                    st.ds_l[i] = adx[i] + r_l[i];
                    st.dl_l[i] = (c_l[i] - l_l[i] * st.ds_l[i]) / s_l[i];
                }
                if has_u[i] {
                    st.ds_u[i] = -r_u[i] - adx[i];
                    st.dl_u[i] = (c_u[i] - l_u[i] * st.ds_u[i]) / s_u[i];
                }
            }
            Some(st)
        };
        let step_len = |st: &Step| {
            let p = max_step(&s_l, &st.ds_l, &has_l).min(max_step(&s_u, &st.ds_u, &has_u));
            let d = max_step(&l_l, &st.dl_l, &has_l).min(max_step(&l_u, &st.dl_u, &has_u));
            p.min(d)
        };

        let c_l: Vec<f64> = (0..m).map(|i| -s_l[i] * l_l[i]).collect();
        let c_u: Vec<f64> = (0..m).map(|i| -s_u[i] * l_u[i]).collect();
        let aff = solve(&c_l, &c_u)?;
        let a_aff = step_len(&aff);
        let sigma = if count > 0 {
            let gap_aff: f64 = (0..m)
                .map(|i| {
                    (s_l[i] + a_aff * aff.ds_l[i]) * (l_l[i] + a_aff * aff.dl_l[i])
                        + (s_u[i] + a_aff * aff.ds_u[i]) * (l_u[i] + a_aff * aff.dl_u[i])
                })
                .sum();
            (gap_aff / gap.max(f64::MIN_POSITIVE)).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        let c_l: Vec<f64> = (0..m)
            .map(|i| if has_l[i] { sigma * mu - s_l[i] * l_l[i] - aff.ds_l[i] * aff.dl_l[i] } else { 0.0 })
            .collect();
        let c_u: Vec<f64> = (0..m)
            .map(|i| if has_u[i] { sigma * mu - s_u[i] * l_u[i] - aff.ds_u[i] * aff.dl_u[i] } else { 0.0 })
            .collect();
        let st = solve(&c_l, &c_u)?;
        let alpha = (STEP_FRACTION * step_len(&st)).min(1.0);

        for j in 0..n {
            x[j] += alpha * st.dx[j];
        }
        for i in 0..m {
            y_eq[i] += alpha * st.dy_eq[i];
            if has_l[i] {
                s_l[i] += alpha * st.ds_l[i];
                l_l[i] += alpha * st.dl_l[i];
            }
            if has_u[i] {
                s_u[i] += alpha * st.ds_u[i];
                l_u[i] += alpha * st.dl_u[i];
            }
        }
    }
    None
}

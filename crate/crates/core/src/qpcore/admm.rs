//! ADMM iteration on the equilibrated problem.

use super::csc::CscMatrix;
use super::ldl::LdlFactor;
use super::ipm::interior_point;
use super::polish::{polish, project_feasible};
use super::{QpError, QpSolution, QpStatus, QuadraticProgram, SolverSettings};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
/// Rows whose scaled bounds are closer than this get the equality penalty.
const RHO_TOL: f64 = 1e-4;
const DIVISION_TOL: f64 = 1e-30;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Ruiz-equilibrated copy of a problem: `P̄ = c·DPD`, `q̄ = c·Dq`,
/// `Ā = EAD`, `l̄ = El`, `ū = Eu`.
pub(super) struct Scaled {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub c: f64,
}

impl Scaled {
    fn equilibrate(prob: &QuadraticProgram, iters: usize) -> Self {
        let (n, m) = (prob.n(), prob.m());
        let mut p = prob.p().clone();
        let mut a = prob.a().clone();
        let mut q = prob.q().to_vec();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        for _ in 0..iters {
            let pn = p.col_norms_inf();
            let an = a.col_norms_inf();
            let rn = a.row_norms_inf();
            let dt: Vec<f64> = (0..n)
                .map(|j| 1.0 / limit_scaling(pn[j].max(an[j])).sqrt())
                .collect();
            let et: Vec<f64> = rn.iter().map(|&v| 1.0 / limit_scaling(v).sqrt()).collect();
            p.scale(&dt, &dt);
            a.scale(&et, &dt);
            for j in 0..n {
                q[j] *= dt[j];
                d[j] *= dt[j];
            }
            for i in 0..m {
                e[i] *= et[i];
            }

            let pn = p.col_norms_inf();
            let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let qn = limit_scaling(norm_inf(&q));
            let ct = 1.0 / limit_scaling(mean.max(qn));
            p.scale_all(ct);
            q.iter_mut().for_each(|v| *v *= ct);
            c *= ct;
        }
        let l = prob.l().iter().zip(&e).map(|(v, s)| v * s).collect();
        let u = prob.u().iter().zip(&e).map(|(v, s)| v * s).collect();
        Self {
            p,
            q,
            a,
            l,
            u,
            d,
            e,
            c,
        }
    }

    pub fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(v, s)| v * s).collect()
    }

    pub fn unscale_y(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.e).map(|(v, s)| v * s / self.c).collect()
    }

    fn unscale_z(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().zip(&self.e).map(|(v, s)| v / s).collect()
    }
}

/// Unscaled residuals and the tolerances they are held to.
#[derive(Debug, Clone, Copy)]
pub(super) struct Residuals {
    pub prim: f64,
    pub dual: f64,
    /// Primal minus dual objective.
    pub gap: f64,
    pub eps_prim: f64,
    pub eps_dual: f64,
    pub eps_gap: f64,
}

impl Residuals {
    /// Small residuals alone do not bound the objective error when the
    /// iterate is large, so the duality gap is held to tolerance as well.
    pub fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual && self.gap <= self.eps_gap
    }

    /// Computes residuals of an unscaled iterate. When `z` is `None` the
    /// projection of `Ax` onto the bounds is used.
    pub fn compute(
        prob: &QuadraticProgram,
        x: &[f64],
        y: &[f64],
        z: Option<&[f64]>,
        s: &SolverSettings,
    ) -> Self {
        let (n, m) = (prob.n(), prob.m());
        let mut ax = vec![0.0; m];
        prob.a().mul_vec(x, &mut ax);
        let projected: Vec<f64>;
        let z = match z {
            Some(z) => z,
            None => {
                projected = ax
                    .iter()
                    .zip(prob.l().iter().zip(prob.u()))
                    .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
                    .collect();
                &projected
            }
        };
        let prim = ax.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let eps_prim = s.eps_abs + s.eps_rel * norm_inf(&ax).max(norm_inf(z));

        let mut px = vec![0.0; n];
        prob.p().mul_vec(x, &mut px);
        let mut aty = vec![0.0; n];
        prob.a().mul_t_vec(y, &mut aty);
        let dual = (0..n)
            .map(|i| (px[i] + prob.q()[i] + aty[i]).abs())
            .fold(0.0, f64::max);
        let eps_dual = s.eps_abs
            + s.eps_rel * norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(prob.q()));

        // support function of the bounds at y; an infinite side with a
        // multiplier of that sign falls back to z
        let support: f64 = (0..m)
            .map(|i| {
                let (yi, lo, hi) = (y[i], prob.l()[i], prob.u()[i]);
                let b = if yi > 0.0 { hi } else { lo };
                if yi == 0.0 {
                    0.0
                } else if b.is_finite() {
                    b * yi
                } else {
                    z[i] * yi
                }
            })
            .sum();
        let xpx: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum();
        let qx: f64 = x.iter().zip(prob.q()).map(|(a, b)| a * b).sum();
        let gap = (xpx + qx + support).abs();
        let eps_gap = s.eps_abs + s.eps_rel * xpx.abs().max(qx.abs()).max(support.abs());
        Self {
            prim,
            dual,
            gap,
            eps_prim,
            eps_dual,
            eps_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowKind {
    Free,
    Equality,
    Inequality,
}

fn row_kinds(sc: &Scaled) -> Vec<RowKind> {
    sc.l
        .iter()
        .zip(&sc.u)
        .map(|(&lo, &hi)| {
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                RowKind::Free
            } else if hi - lo < RHO_TOL {
                RowKind::Equality
            } else {
                RowKind::Inequality
            }
        })
        .collect()
}

fn rho_vector(kinds: &[RowKind], rho: f64) -> Vec<f64> {
    kinds
        .iter()
        .map(|k| match k {
            RowKind::Free => RHO_MIN,
            RowKind::Equality => RHO_EQ_FACTOR * rho,
            RowKind::Inequality => rho,
        })
        .collect()
}

/// Upper triangle of `[P̄ + σI, Āᵀ; Ā, −diag(1/ρ)]` and the value
/// positions of its lower-right diagonal.
fn assemble_kkt(sc: &Scaled, sigma: f64, rho_vec: &[f64]) -> (CscMatrix, Vec<usize>) {
    let (n, m) = (sc.q.len(), sc.l.len());
    let mut trip: Vec<(usize, usize, f64)> =
        sc.p.triplets().filter(|&(r, c, _)| r <= c).collect();
    trip.extend((0..n).map(|j| (j, j, sigma)));
    trip.extend(sc.a.triplets().map(|(r, c, v)| (c, n + r, v)));
    trip.extend((0..m).map(|i| (n + i, n + i, -1.0 / rho_vec[i])));
    let kkt = CscMatrix::from_triplets(n + m, n + m, &trip);
    let diag = (0..m).map(|i| kkt.colptr()[n + i + 1] - 1).collect();
    (kkt, diag)
}

struct Certificates<'a> {
    sc: &'a Scaled,
    s: &'a SolverSettings,
}

impl Certificates<'_> {
    /// Returns the unscaled certificate `E·δy` if `δy` proves primal
    /// infeasibility.
    fn primal(&self, dy: &[f64]) -> Option<Vec<f64>> {
        let sc = self.sc;
        let edy: Vec<f64> = dy.iter().zip(&sc.e).map(|(v, s)| v * s).collect();
        let norm = norm_inf(&edy);
        if norm <= DIVISION_TOL {
            return None;
        }
        let eps = self.s.eps_prim_inf * norm;
        let mut support = 0.0;
        for i in 0..dy.len() {
            if dy[i] > 0.0 {
                support += sc.u[i] * dy[i];
            } else if dy[i] < 0.0 {
                support += sc.l[i] * dy[i];
            }
        }
        if !(support < eps) {
            return None;
        }
        let mut atdy = vec![0.0; sc.q.len()];
        sc.a.mul_t_vec(dy, &mut atdy);
        let lhs = atdy
            .iter()
            .zip(&sc.d)
            .map(|(v, s)| (v / s).abs())
            .fold(0.0, f64::max);
        (lhs <= eps).then(|| edy.iter().map(|v| v / norm).collect())
    }

    /// Returns the unscaled certificate `D·δx` if `δx` proves dual
    /// infeasibility.
    fn dual(&self, dx: &[f64]) -> Option<Vec<f64>> {
        let sc = self.sc;
        let ddx: Vec<f64> = dx.iter().zip(&sc.d).map(|(v, s)| v * s).collect();
        let norm = norm_inf(&ddx);
        if norm <= DIVISION_TOL {
            return None;
        }
        let eps = self.s.eps_dual_inf * norm;
        let qdx: f64 = sc.q.iter().zip(dx).map(|(a, b)| a * b).sum();
        if !(qdx < -sc.c * eps) {
            return None;
        }
        let mut pdx = vec![0.0; dx.len()];
        sc.p.mul_vec(dx, &mut pdx);
        let pnorm = pdx
            .iter()
            .zip(&sc.d)
            .map(|(v, s)| (v / s).abs())
            .fold(0.0, f64::max);
        if pnorm >= sc.c * eps {
            return None;
        }
        let mut adx = vec![0.0; sc.l.len()];
        sc.a.mul_vec(dx, &mut adx);
        for i in 0..adx.len() {
            let v = adx[i] / sc.e[i];
            if (sc.u[i].is_finite() && v > eps) || (sc.l[i].is_finite() && v < -eps) {
                return None;
            }
        }
        Some(ddx.iter().map(|v| v / norm).collect())
    }
}

pub(super) fn solve(prob: &QuadraticProgram, s: &SolverSettings) -> Result<QpSolution, QpError> {
    let (n, m) = (prob.n(), prob.m());
    let sc = Scaled::equilibrate(prob, s.scaling_iters);
    let kinds = row_kinds(&sc);
    let mut rho = s.rho;
    let mut rho_vec = rho_vector(&kinds, rho);
    let (mut kkt, diag_pos) = assemble_kkt(&sc, s.sigma, &rho_vec);
    let mut factor = LdlFactor::new(&kkt)?;
    let certs = Certificates { sc: &sc, s };

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut x_prev = x.clone();
    let mut z_prev = z.clone();
    let mut y_prev = y.clone();
    let mut rhs = vec![0.0; n + m];

    let mut status = QpStatus::MaxIter;
    let mut certificate = None;
    let mut iterations = 0;
    let mut last = None;
    let mut early_polish = None;

    for k in 1..=s.max_iter {
        iterations = k;
        x_prev.copy_from_slice(&x);
        z_prev.copy_from_slice(&z);
        y_prev.copy_from_slice(&y);

        for i in 0..n {
            rhs[i] = s.sigma * x[i] - sc.q[i];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho_vec[i];
        }
        factor.solve_in_place(&mut rhs);
        for i in 0..n {
            x[i] = s.alpha * rhs[i] + (1.0 - s.alpha) * x_prev[i];
        }
        for i in 0..m {
            let ztilde = z_prev[i] + (rhs[n + i] - y_prev[i]) / rho_vec[i];
            let zrelax = s.alpha * ztilde + (1.0 - s.alpha) * z_prev[i];
            z[i] = (zrelax + y_prev[i] / rho_vec[i]).max(sc.l[i]).min(sc.u[i]);
            y[i] = y_prev[i] + rho_vec[i] * (zrelax - z[i]);
        }

        if k % s.check_interval == 0 || k == s.max_iter {
            let xu = sc.unscale_x(&x);
            let yu = sc.unscale_y(&y);
            let zu = sc.unscale_z(&z);
            let res = Residuals::compute(prob, &xu, &yu, Some(&zu), s);
            last = Some(res);
            if res.converged() {
                status = QpStatus::Optimal;
                break;
            }
            let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            if let Some(cert) = certs.primal(&dy) {
                status = QpStatus::PrimalInfeasible;
                certificate = Some(cert);
                break;
            }
            let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
            if let Some(cert) = certs.dual(&dx) {
                status = QpStatus::DualInfeasible;
                certificate = Some(cert);
                break;
            }
            if s.polish
                && s.polish_interval > 0
                && k % s.polish_interval == 0
                && res.prim <= 1e3 * res.eps_prim
                && res.dual <= 1e3 * res.eps_dual
            {
                if let Some((xp, yp, res)) = try_polish(prob, &sc, &x, &z, &y, s) {
                    early_polish = Some((xp, yp, res, true));
                    status = QpStatus::Optimal;
                    break;
                }
            }
        }

        if k == s.interior_point_after {
            if let Some(found) = interior_finish(prob, &sc, s) {
                early_polish = Some(found);
                status = QpStatus::Optimal;
                break;
            }
        }

        if s.adaptive_rho && s.adaptive_rho_interval > 0 && k % s.adaptive_rho_interval == 0 && m > 0 {
            let estimate = rho_estimate(&sc, &x, &y, &z, rho);
            if estimate > rho * s.adaptive_rho_tolerance || estimate < rho / s.adaptive_rho_tolerance {
                rho = estimate;
                rho_vec = rho_vector(&kinds, rho);
                let values = kkt.values_mut();
                for i in 0..m {
                    values[diag_pos[i]] = -1.0 / rho_vec[i];
                }
                factor.refactor(kkt.values())?;
            }
        }
    }

    if let Some((xp, yp, res, polished)) = early_polish {
        return Ok(finish(prob, xp, yp, QpStatus::Optimal, iterations, res, polished, None));
    }

    let xu = sc.unscale_x(&x);
    let yu = sc.unscale_y(&y);
    let res = last.unwrap_or_else(|| Residuals::compute(prob, &xu, &yu, Some(&sc.unscale_z(&z)), s));

    if matches!(status, QpStatus::Optimal | QpStatus::MaxIter) && s.polish && m + n > 0 {
        if let Some((xp, yp, pres)) = try_polish(prob, &sc, &x, &z, &y, s) {
            let better = pres.prim <= res.prim.max(pres.eps_prim) && pres.dual <= res.dual.max(pres.eps_dual);
            if better {
                return Ok(finish(prob, xp, yp, QpStatus::Optimal, iterations, pres, true, None));
            }
        }
    }
    if matches!(status, QpStatus::Optimal | QpStatus::MaxIter) && m > 0 {
        if let Some(xs) = project_feasible(&sc, &x, s) {
            let xp = sc.unscale_x(&xs);
            let pres = Residuals::compute(prob, &xp, &yu, None, s);
            if pres.converged() && pres.prim <= res.prim {
                return Ok(finish(prob, xp, yu, QpStatus::Optimal, iterations, pres, false, None));
            }
        }
    }
    Ok(finish(prob, xu, yu, status, iterations, res, false, certificate))
}

/// Interior-point solve of the scaled problem, polished when the polish
/// succeeds, and accepted only if the unscaled residuals meet tolerance.
fn interior_finish(
    prob: &QuadraticProgram,
    sc: &Scaled,
    s: &SolverSettings,
) -> Option<(Vec<f64>, Vec<f64>, Residuals, bool)> {
    let ip = interior_point(sc, 1e-3 * s.eps_abs.min(s.eps_rel))?;
    log::debug!("interior-point finisher converged in {} iterations", ip.iterations);
    if s.polish {
        if let Some((xp, yp, res)) = try_polish(prob, sc, &ip.x, &ip.z, &ip.y, s) {
            return Some((xp, yp, res, true));
        }
    }
    let yu = sc.unscale_y(&ip.y);
    let xu = sc.unscale_x(&ip.x);
    let res = Residuals::compute(prob, &xu, &yu, None, s);
    if res.converged() {
        return Some((xu, yu, res, false));
    }
    let xs = project_feasible(sc, &ip.x, s)?;
    let xp = sc.unscale_x(&xs);
    let res = Residuals::compute(prob, &xp, &yu, None, s);
    res.converged().then_some((xp, yu, res, false))
}

/// Polishes and accepts only if the unscaled result meets tolerance.
fn try_polish(
    prob: &QuadraticProgram,
    sc: &Scaled,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    s: &SolverSettings,
) -> Option<(Vec<f64>, Vec<f64>, Residuals)> {
    let pol = polish(sc, x, z, y, s)?;
    let xp = sc.unscale_x(&pol.x);
    let yp = sc.unscale_y(&pol.y);
    let res = Residuals::compute(prob, &xp, &yp, None, s);
    res.converged().then_some((xp, yp, res))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    prob: &QuadraticProgram,
    x: Vec<f64>,
    y: Vec<f64>,
    status: QpStatus,
    iterations: usize,
    res: Residuals,
    polished: bool,
    certificate: Option<Vec<f64>>,
) -> QpSolution {
    let objective = prob.objective(&x);
    log::debug!(
        "qp n={} m={} status={status:?} iter={iterations} prim={:.2e} dual={:.2e} polished={polished}",
        prob.n(),
        prob.m(),
        res.prim,
        res.dual
    );
    QpSolution {
        x,
        y,
        status,
        iterations,
        primal_residual: res.prim,
        dual_residual: res.dual,
        objective,
        polished,
        certificate,
    }
}

/// Penalty estimate balancing normalized primal and dual residuals in the
/// scaled space.
fn rho_estimate(sc: &Scaled, x: &[f64], y: &[f64], z: &[f64], rho: f64) -> f64 {
    let (n, m) = (x.len(), z.len());
    let mut ax = vec![0.0; m];
    sc.a.mul_vec(x, &mut ax);
    let prim = ax.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let prim_norm = norm_inf(&ax).max(norm_inf(z));
    let mut px = vec![0.0; n];
    sc.p.mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    sc.a.mul_t_vec(y, &mut aty);
    let dual = (0..n).map(|i| (px[i] + sc.q[i] + aty[i]).abs()).fold(0.0, f64::max);
    let dual_norm = norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&sc.q));
    let ratio_p = prim / (prim_norm + 1e-10);
    let ratio_d = dual / (dual_norm + 1e-10);
    (rho * (ratio_p / (ratio_d + 1e-10)).sqrt()).clamp(RHO_MIN, RHO_MAX)
}

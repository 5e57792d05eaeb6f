//! Convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! with `P` symmetric positive semidefinite. Equalities are rows with
//! `l = u`; one-sided rows use an infinite bound. Any bound with magnitude
//! at or above [`INFINITY_SENTINEL`] is treated as infinite.
//!
//! [`solve_qp`] runs an operator-splitting (ADMM) iteration on a Ruiz
//! equilibrated copy of the problem, reusing a single LDLᵀ factorization of
//! the quasi-definite KKT matrix, then optionally polishes the result with
//! an active-set solve. [`kkt_residuals`] recomputes optimality residuals
//! from the raw problem data only.

mod admm;
mod csc;
pub mod dump;
mod ipm;
mod ldl;
mod polish;

use serde::{Deserialize, Serialize};

pub use csc::CscMatrix;
pub use ldl::{minimum_degree_order, FactorError, LdlFactor};

/// Bounds at or beyond this magnitude are infinite.
pub const INFINITY_SENTINEL: f64 = 1e20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("objective matrix is not symmetric")]
    NotSymmetric,
    #[error("row {row}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { row: usize, lower: f64, upper: f64 },
    #[error("non-finite problem data: {0}")]
    NonFinite(String),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] FactorError),
}

fn normalize_bound(v: f64) -> f64 {
    if v >= INFINITY_SENTINEL {
        f64::INFINITY
    } else if v <= -INFINITY_SENTINEL {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// A convex QP in `½xᵀPx + qᵀx, l ≤ Ax ≤ u` form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl QuadraticProgram {
    /// Validates and assembles a problem. `p` must hold the full symmetric
    /// matrix, not just one triangle.
    pub fn new(
        p: CscMatrix,
        q: Vec<f64>,
        a: CscMatrix,
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "P is {}x{}, q has {n} entries",
                p.nrows(),
                p.ncols()
            )));
        }
        if a.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "A has {} columns, expected {n}",
                a.ncols()
            )));
        }
        let m = a.nrows();
        if l.len() != m || u.len() != m {
            return Err(QpError::DimensionMismatch(format!(
                "A has {m} rows, l has {}, u has {}",
                l.len(),
                u.len()
            )));
        }
        if p.values().iter().chain(&q).chain(a.values()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("P, q or A".into()));
        }
        if l.iter().chain(&u).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds".into()));
        }
        if !p.is_symmetric(1e-12) {
            return Err(QpError::NotSymmetric);
        }
        let l: Vec<f64> = l.into_iter().map(normalize_bound).collect();
        let u: Vec<f64> = u.into_iter().map(normalize_bound).collect();
        for (row, (&lo, &hi)) in l.iter().zip(&u).enumerate() {
            if lo > hi {
                return Err(QpError::InvertedBounds {
                    row,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { p, q, a, l, u })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn p(&self) -> &CscMatrix {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &CscMatrix {
        &self.a
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// `½xᵀPx + qᵀx`
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.n()];
        self.p.mul_vec(x, &mut px);
        x.iter()
            .zip(&px)
            .zip(&self.q)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    /// Refactor only when the penalty estimate moves by more than this factor.
    pub adaptive_rho_tolerance: f64,
    pub scaling_iters: usize,
    pub check_interval: usize,
    pub polish: bool,
    /// Try an active-set polish every this many iterations once the
    /// residuals are within a factor 1e3 of tolerance; 0 polishes only at
    /// the end.
    pub polish_interval: usize,
    pub polish_delta: f64,
    pub polish_refine_iter: usize,
    pub polish_passes: usize,
    /// If ADMM has not converged after this many iterations, hand the
    /// problem to an interior-point finisher; 0 never does.
    pub interior_point_after: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            eps_dual_inf: 1e-5,
            max_iter: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            scaling_iters: 10,
            check_interval: 25,
            polish: true,
            polish_interval: 500,
            polish_delta: 1e-7,
            polish_refine_iter: 8,
            polish_passes: 12,
            interior_point_after: 3000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), QpError> {
        let positive = [
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
            ("eps_prim_inf", self.eps_prim_inf),
            ("eps_dual_inf", self.eps_dual_inf),
            ("rho", self.rho),
            ("sigma", self.sigma),
            ("polish_delta", self.polish_delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QpError::InvalidSettings(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(QpError::InvalidSettings(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        if self.max_iter == 0 || self.check_interval == 0 {
            return Err(QpError::InvalidSettings(
                "max_iter and check_interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
    /// Infeasibility certificate: `δy` when primal infeasible, `δx` when
    /// dual infeasible.
    pub certificate: Option<Vec<f64>>,
}

/// Solves `prob`. Infeasibility and iteration exhaustion are reported
/// through [`QpSolution::status`]; `Err` is reserved for bad input and
/// numerical breakdown.
pub fn solve_qp(prob: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    settings.validate()?;
    admm::solve(prob, settings)
}

/// Optimality residuals of a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖Ax − Π[l,u](Ax)‖∞`
    pub primal: f64,
    /// `‖Px + q + Aᵀy‖∞`
    pub dual: f64,
    /// Largest product of a multiplier with its bound gap. A multiplier
    /// pushing against an infinite bound counts at its full magnitude.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// Recomputes KKT residuals from problem data. Sign convention: `y > 0`
/// pushes against the upper bound, `y < 0` against the lower one.
pub fn kkt_residuals(prob: &QuadraticProgram, x: &[f64], y: &[f64]) -> KktResiduals {
    let (n, m) = (prob.n(), prob.m());
    assert_eq!(x.len(), n, "x has wrong dimension");
    assert_eq!(y.len(), m, "y has wrong dimension");
    let mut ax = vec![0.0; m];
    prob.a.mul_vec(x, &mut ax);
    let primal = ax
        .iter()
        .zip(prob.l.iter().zip(&prob.u))
        .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);

    let mut px = vec![0.0; n];
    prob.p.mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    prob.a.mul_t_vec(y, &mut aty);
    let dual = (0..n)
        .map(|i| (px[i] + prob.q[i] + aty[i]).abs())
        .fold(0.0, f64::max);

    let complementarity = (0..m)
        .map(|i| {
            let yi = y[i];
            if yi > 0.0 {
                if prob.u[i].is_finite() {
                    yi * (prob.u[i] - ax[i]).abs()
                } else {
                    yi
                }
            } else if yi < 0.0 {
                if prob.l[i].is_finite() {
                    -yi * (ax[i] - prob.l[i]).abs()
                } else {
                    -yi
                }
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);

    KktResiduals {
        primal,
        dual,
        complementarity,
    }
}

//! Test-only oracles and fixtures shared by the integration suites.
//!
//! Nothing here calls into the solver paths it is used to check.

#![allow(dead_code)]

use cesplan_core::qpcore::{CscMatrix, QuadraticProgram};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense QP `½xᵀPx + qᵀx, l ≤ Ax ≤ u`.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl DenseQp {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn to_sparse(&self) -> QuadraticProgram {
        let n = self.n();
        let a = if self.a.is_empty() {
            CscMatrix::zeros(0, n)
        } else {
            CscMatrix::from_dense(&self.a)
        };
        QuadraticProgram::new(
            CscMatrix::from_dense(&self.p),
            self.q.clone(),
            a,
            self.l.clone(),
            self.u.clone(),
        )
        .expect("generated QP is valid")
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut f = 0.0;
        for i in 0..n {
            f += self.q[i] * x[i];
            for j in 0..n {
                f += 0.5 * x[i] * self.p[i][j] * x[j];
            }
        }
        f
    }
}

/// Number of active-set states a row can take: always-active equality,
/// inactive or at one bound, or inactive/lower/upper.
fn row_states(l: f64, u: f64) -> usize {
    if l == u {
        1
    } else {
        1 + usize::from(l.is_finite()) + usize::from(u.is_finite())
    }
}

fn enumeration_size(qp: &DenseQp) -> usize {
    qp.l.iter().zip(&qp.u).map(|(&l, &u)| row_states(l, u)).product()
}

/// Random feasible convex QP with `n ≤ 8`, `m ≤ 12`, small enough for the
/// enumeration oracle. About one in five has a singular `P`, in which case
/// every variable is boxed so the optimum stays finite.
pub fn random_qp(rng: &mut ChaCha8Rng) -> DenseQp {
    let singular = rng.random_bool(0.2);
    let n = if singular { rng.random_range(1..=4) } else { rng.random_range(1..=8) };
    let rank = if singular { rng.random_range(0..n) } else { n };
    let b: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = (0..rank).map(|k| b[k][i] * b[k][j]).sum();
        }
        if !singular {
            p[i][i] += 0.1;
        }
    }
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut a = Vec::new();
    let mut l = Vec::new();
    let mut u = Vec::new();
    if singular {
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            a.push(row);
            l.push(-2.0);
            u.push(2.0);
        }
    }
    let max_rows = if singular { 4 } else { 12 };
    let extra = rng.random_range(0..=max_rows);
    let mut equalities = 0;
    for _ in 0..extra {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax0: f64 = row.iter().zip(&x0).map(|(r, x)| r * x).sum();
        let kind = rng.random_range(0..4);
        let (lo, hi) = match kind {
            0 if equalities + 1 < n => {
                equalities += 1;
                (ax0, ax0)
            }
            1 => (ax0 - rng.random_range(0.0..1.0), f64::INFINITY),
            2 => (f64::NEG_INFINITY, ax0 + rng.random_range(0.0..1.0)),
            _ => (ax0 - rng.random_range(0.0..1.0), ax0 + rng.random_range(0.0..1.0)),
        };
        let mut trial_l = l.clone();
        let mut trial_u = u.clone();
        trial_l.push(lo);
        trial_u.push(hi);
        let budget: usize = trial_l
            .iter()
            .zip(&trial_u)
            .map(|(&a, &b)| row_states(a, b))
            .product();
        if budget > 4096 {
            continue;
        }
        a.push(row);
        l = trial_l;
        u = trial_u;
    }
    DenseQp { p, q, a, l, u }
}

/// Exhaustive active-set oracle: for every assignment of rows to
/// {inactive, lower, upper}, minimize over the affine set of active rows
/// through the dense KKT system, keep the feasible candidates and return
/// the lowest objective. Singular KKT systems are skipped; with a positive
/// definite `P`, or a bounded feasible set, some nonsingular active set
/// reproduces the optimum.
pub fn enumerate_optimum(qp: &DenseQp) -> Option<(f64, Vec<f64>)> {
    let n = qp.n();
    let m = qp.l.len();
    let states: Vec<usize> = (0..m).map(|i| row_states(qp.l[i], qp.u[i])).collect();
    let total = enumeration_size(qp);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut choice = vec![0usize; m];
    for _ in 0..total {
        let mut active: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            let (l, u) = (qp.l[i], qp.u[i]);
            if l == u {
                active.push((i, l));
                continue;
            }
            // 0 = inactive, then finite lower, then finite upper
            let mut options = vec![None];
            if l.is_finite() {
                options.push(Some(l));
            }
            if u.is_finite() {
                options.push(Some(u));
            }
            if let Some(b) = options[choice[i]] {
                active.push((i, b));
            }
        }
        if active.len() <= n {
            if let Some(x) = solve_affine(qp, &active) {
                let feasible = (0..m).all(|i| {
                    let ax: f64 = qp.a[i].iter().zip(&x).map(|(r, v)| r * v).sum();
                    let tol = 1e-9 * (1.0 + ax.abs());
                    ax >= qp.l[i] - tol && ax <= qp.u[i] + tol
                });
                if feasible {
                    let f = qp.objective(&x);
                    if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                        best = Some((f, x));
                    }
                }
            }
        }
        // advance mixed-radix counter
        for i in 0..m {
            choice[i] += 1;
            if choice[i] < states[i] {
                break;
            }
            choice[i] = 0;
        }
    }
    best
}

fn solve_affine(qp: &DenseQp, active: &[(usize, f64)]) -> Option<Vec<f64>> {
    let n = qp.n();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = qp.p[i][j];
        }
        rhs[i] = -qp.q[i];
    }
    for (r, &(row, b)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[row][j];
            kkt[(j, n + r)] = qp.a[row][j];
        }
        rhs[n + r] = b;
    }
    let svd = kkt.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.rank(1e-10 * smax) < dim {
        return None;
    }
    let sol = svd.solve(&rhs, 1e-12 * smax).ok()?;
    Some(sol.iter().take(n).copied().collect())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random radial feeder with `n` non-slack nodes. Node labels are shuffled
/// and about half the lines are listed child-to-parent.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<cesplan_core::netmodel::Line> {
    let mut label: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        label.swap(i, j);
    }
    let name = |k: usize| if k == 0 { 0 } else { label[k - 1] };
    (1..=n)
        .map(|k| {
            let parent = rng.random_range(0..k);
            let (a, b) = (name(parent), name(k));
            let (from, to) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            cesplan_core::netmodel::Line {
                from,
                to,
                r: rng.random_range(0.01..0.5),
                x: rng.random_range(0.0..0.3),
            }
        })
        .collect()
}

/// Parent of every node, found by flooding from the slack over an
/// undirected line list. Index 0 is unused.
pub fn parents(lines: &[cesplan_core::netmodel::Line]) -> Vec<(usize, f64, f64)> {
    let n = lines.len();
    let mut par = vec![(usize::MAX, 0.0, 0.0); n + 1];
    let mut done = vec![false; n + 1];
    done[0] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for l in lines {
            for (a, b) in [(l.from, l.to), (l.to, l.from)] {
                if done[a] && !done[b] {
                    done[b] = true;
                    par[b] = (a, l.r, l.x);
                    changed = true;
                }
            }
        }
    }
    par
}

/// Direct per-line loss in kW at one step: push absorptions up the tree to
/// get the flow into each node, then sum `r(P² + Q²)/U0` in SI units.
pub fn direct_loss_kw(lines: &[cesplan_core::netmodel::Line], u0: f64, p: &[f64], q: &[f64]) -> f64 {
    let par = parents(lines);
    let n = lines.len();
    let mut fp = vec![0.0; n + 1];
    let mut fq = vec![0.0; n + 1];
    for k in 1..=n {
        let mut j = k;
        while j != 0 {
            fp[j] += p[k - 1];
            fq[j] += q[k - 1];
            j = par[j].0;
        }
    }
    (1..=n)
        .map(|j| par[j].1 * ((fp[j] * 1e3).powi(2) + (fq[j] * 1e3).powi(2)) / u0 / 1e3)
        .sum()
}

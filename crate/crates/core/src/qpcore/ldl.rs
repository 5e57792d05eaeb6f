//! Sparse LDLᵀ factorization for quasi-definite matrices.
//!
//! The input is the upper triangle of a symmetric matrix in CSC form with
//! every diagonal entry present. No pivoting is done: quasi-definite
//! matrices admit a stable LDLᵀ under any symmetric permutation, so the
//! permutation is chosen purely to limit fill.

use std::collections::BTreeSet;

use super::csc::CscMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("matrix is not square upper triangular")]
    NotUpperTriangular,
    #[error("diagonal entry missing in column {0}")]
    MissingDiagonal(usize),
    #[error("zero pivot at permuted column {0}")]
    ZeroPivot(usize),
}

/// Greedy minimum-degree ordering on the symmetric pattern of `upper`.
///
/// Returns `perm` with `perm[k]` = original index placed at position `k`.
/// Ties are broken by the lower index, so the result is deterministic.
pub fn minimum_degree_order(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in upper.triplets() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut heap: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some((_, v)) = heap.pop_first() {
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            heap.remove(&(adj[u].len(), u));
            // adj[u] ← (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = if j == b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                    a[i - 1]
                } else if i == a.len() || b[j] < a[i] {
                    j += 1;
                    b[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.insert((adj[u].len(), u));
        }
    }
    order
}

const UNKNOWN: usize = usize::MAX;

/// A numeric LDLᵀ factor `P K Pᵀ = L D Lᵀ` with a reusable symbolic part.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    /// Permuted upper triangle; values refreshed on each refactorization.
    kp: CscMatrix,
    /// Entry `k` of the original upper matrix lives at `kp.values[map[k]]`.
    map: Vec<usize>,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Orders, analyses and factors `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self, FactorError> {
        let n = upper.ncols();
        if upper.nrows() != n {
            return Err(FactorError::NotUpperTriangular);
        }
        for c in 0..n {
            let rows = &upper.rowind()[upper.colptr()[c]..upper.colptr()[c + 1]];
            if rows.iter().any(|&r| r > c) {
                return Err(FactorError::NotUpperTriangular);
            }
            if rows.last() != Some(&c) {
                return Err(FactorError::MissingDiagonal(c));
            }
        }

        let perm = minimum_degree_order(upper);
        let mut iperm = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }

        // Permute, keeping the upper triangle, and remember where each
        // original entry lands.
        let entries: Vec<(usize, usize, usize)> = upper
            .triplets()
            .enumerate()
            .map(|(k, (r, c, _))| {
                let (pr, pc) = (iperm[r], iperm[c]);
                (pr.min(pc), pr.max(pc), k)
            })
            .collect();
        let mut counts = vec![0usize; n + 1];
        for &(_, c, _) in &entries {
            counts[c + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let mut by_col: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &(r, c, k) in &entries {
            by_col[c].push((r, k));
        }
        let mut rowind = Vec::with_capacity(entries.len());
        let mut map = vec![0usize; entries.len()];
        for col in &mut by_col {
            col.sort_unstable();
            for &(r, k) in col.iter() {
                map[k] = rowind.len();
                rowind.push(r);
            }
        }
        let kp = CscMatrix::from_parts(n, n, counts, rowind, vec![0.0; entries.len()]);

        let (etree, lnz) = elimination_tree(&kp);
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut factor = Self {
            n,
            perm,
            kp,
            map,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        factor.refactor(upper.values())?;
        Ok(factor)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill(&self) -> usize {
        self.li.len()
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    /// Refactors with new values on the original pattern.
    pub fn refactor(&mut self, values: &[f64]) -> Result<(), FactorError> {
        debug_assert_eq!(values.len(), self.map.len());
        {
            let kv = self.kp.values_mut();
            for (k, &v) in values.iter().enumerate() {
                kv[self.map[k]] = v;
            }
        }
        self.numeric()
    }

    fn numeric(&mut self) -> Result<(), FactorError> {
        let n = self.n;
        let ap = self.kp.colptr();
        let ai = self.kp.rowind();
        let ax = self.kp.values();
        let mut y_used = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in ap[k]..ap[k + 1] {
                let bidx = ai[p];
                if bidx == k {
                    self.d[k] = ax[p];
                    continue;
                }
                y_vals[bidx] = ax[p];
                if !y_used[bidx] {
                    y_used[bidx] = true;
                    elim[0] = bidx;
                    let mut nnz_e = 1;
                    let mut next = self.etree[bidx];
                    while next != UNKNOWN && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                self.lx[end] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[end];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(FactorError::ZeroPivot(k));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    #[allow(dead_code)]
    pub(crate) fn column_counts(&self) -> &[usize] {
        &self.lnz
    }
}

/// Elimination tree and per-column nonzero counts of L for an upper
/// triangular CSC pattern.
fn elimination_tree(kp: &CscMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = kp.ncols();
    let mut work = vec![UNKNOWN; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![UNKNOWN; n];
    for j in 0..n {
        work[j] = j;
        for p in kp.colptr()[j]..kp.colptr()[j + 1] {
            let mut i = kp.rowind()[p];
            while work[i] != j {
                if etree[i] == UNKNOWN {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

//! Weights from a pairwise comparison matrix.

use serde::{Deserialize, Serialize};

/// Saaty's random consistency index for n = 1..=10.
const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AhpError {
    #[error("matrix must be square with 1 to 10 rows")]
    BadShape,
    #[error("entry ({row}, {col}) = {value} is not the reciprocal of ({col}, {row})")]
    NonReciprocal { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) = {value} is outside [1/9, 9]")]
    OutOfScale { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhpResult {
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    pub consistency_index: f64,
    pub consistency_ratio: f64,
    /// Consistency ratio at most 0.1.
    pub acceptable: bool,
    pub iterations: usize,
}

/// Principal right eigenvector of a reciprocal matrix by power iteration,
/// normalized to sum to one.
pub fn ahp_weights(m: &[Vec<f64>]) -> Result<AhpResult, AhpError> {
    let n = m.len();
    if n == 0 || n > RANDOM_INDEX.len() || m.iter().any(|r| r.len() != n) {
        return Err(AhpError::BadShape);
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[i][j];
            if !(v.is_finite() && (1.0 / 9.0 - 1e-12..=9.0 + 1e-12).contains(&v)) {
                return Err(AhpError::OutOfScale { row: i, col: j, value: v });
            }
            if (v * m[j][i] - 1.0).abs() > 1e-6 {
                return Err(AhpError::NonReciprocal { row: i, col: j, value: v });
            }
        }
    }

    let mut w = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    for _ in 0..10_000 {
        iterations += 1;
        let mut next: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * w[j]).sum()).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let delta = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if delta <= 1e-12 {
            break;
        }
    }
    let lambda_max = (0..n)
        .map(|i| (0..n).map(|j| m[i][j] * w[j]).sum::<f64>() / w[i])
        .sum::<f64>()
        / n as f64;
    let consistency_index = if n > 1 { ((lambda_max - n as f64) / (n as f64 - 1.0)).max(0.0) } else { 0.0 };
    let ri = RANDOM_INDEX[n - 1];
    let consistency_ratio = if ri > 0.0 { consistency_index / ri } else { 0.0 };
    let acceptable = consistency_ratio <= 0.1;
    if !acceptable {
        log::warn!("pairwise judgments are inconsistent (CR = {consistency_ratio:.3})");
    }
    Ok(AhpResult { weights: w, lambda_max, consistency_index, consistency_ratio, acceptable, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
    }

    #[test]
    fn consistent_matrices() {
        let r = ahp_weights(&[vec![1.0, 0.25, 0.25], vec![4.0, 1.0, 1.0], vec![4.0, 1.0, 1.0]]).unwrap();
        assert!(close(&r.weights, &[1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0]), "{:?}", r.weights);
        assert!(r.consistency_ratio < 1e-9);
        let r = ahp_weights(&vec![vec![1.0; 3]; 3]).unwrap();
        assert!(close(&r.weights, &[1.0 / 3.0; 3]));
        let r = ahp_weights(&[vec![1.0, 2.0, 4.0], vec![0.5, 1.0, 2.0], vec![0.25, 0.5, 1.0]]).unwrap();
        assert!(close(&r.weights, &[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]));
    }

    #[test]
    fn inconsistent_is_flagged_not_rejected() {
        let r = ahp_weights(&[vec![1.0, 9.0, 1.0 / 9.0], vec![1.0 / 9.0, 1.0, 9.0], vec![9.0, 1.0 / 9.0, 1.0]]).unwrap();
        assert!(!r.acceptable);
        assert!(r.consistency_ratio > 0.1);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            ahp_weights(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(AhpError::NonReciprocal { .. })
        ));
        assert!(matches!(
            ahp_weights(&[vec![1.0, 20.0], vec![0.05, 1.0]]),
            Err(AhpError::OutOfScale { .. })
        ));
        assert_eq!(ahp_weights(&[vec![1.0, 1.0]]), Err(AhpError::BadShape));
    }
}

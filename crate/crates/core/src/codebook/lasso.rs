//! LASSO coding of a descriptor against a codebook by cyclic coordinate descent:
//! minimise `‖x − Q e‖² + λ‖e‖₁` where the columns of `Q` are the centroids.

use crate::error::{Error, Result};
use crate::types::Codebook;

pub const MAX_SWEEPS: usize = 10_000;
pub const CHANGE_TOL: f64 = 1e-10;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Codebook Gram matrix cached for repeated encodes.
#[derive(Clone, Debug)]
pub struct LassoEncoder<'a> {
    codebook: &'a Codebook,
    gram: Vec<Vec<f64>>,
}

impl<'a> LassoEncoder<'a> {
    pub fn new(codebook: &'a Codebook) -> Result<Self> {
        if !(codebook.lambda >= 0.0) || !codebook.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", codebook.lambda)));
        }
        let q = &codebook.centroids;
        let gram = q
            .iter()
            .map(|a| q.iter().map(|b| dot(a, b)).collect())
            .collect();
        Ok(LassoEncoder { codebook, gram })
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.codebook.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len(), frame: None });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("descriptor".into()));
        }
        let k = self.codebook.k();
        let half_lambda = 0.5 * self.codebook.lambda;
        let corr: Vec<f64> = self.codebook.centroids.iter().map(|q| dot(q, x)).collect();
        let mut e = vec![0.0; k];
        // ge = G e, kept in sync with e
        let mut ge = vec![0.0; k];
        for _ in 0..MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..k {
                let gjj = self.gram[j][j];
                if gjj <= 0.0 {
                    continue;
                }
                let z = corr[j] - ge[j] + gjj * e[j];
                let new = soft_threshold(z, half_lambda) / gjj;
                let delta = new - e[j];
                if delta != 0.0 {
                    e[j] = new;
                    for (g, row) in ge.iter_mut().zip(&self.gram) {
                        *g += delta * row[j];
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < CHANGE_TOL {
                break;
            }
        }
        Ok(e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-off LASSO code of `x`. Use [`LassoEncoder`] when coding many frames.
pub fn sparse_encode(x: &[f64], cb: &Codebook) -> Result<Vec<f64>> {
    LassoEncoder::new(cb)?.encode(x)
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Largest violation of the LASSO subgradient optimality conditions.
    /// For zero coordinates `|2 qⱼᵀ(Qe − x)| ≤ λ`; otherwise
    /// `2 qⱼᵀ(x − Qe) = λ·sign(eⱼ)`.
    pub fn kkt_violation(q: &[Vec<f64>], x: &[f64], lambda: f64, e: &[f64]) -> f64 {
        let n = x.len();
        let mut resid = x.to_vec();
        for (qj, ej) in q.iter().zip(e) {
            for i in 0..n {
                resid[i] -= qj[i] * ej;
            }
        }
        let mut worst: f64 = 0.0;
        for (qj, &ej) in q.iter().zip(e) {
            let g = 2.0 * qj.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>();
            let v = if ej == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * ej.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

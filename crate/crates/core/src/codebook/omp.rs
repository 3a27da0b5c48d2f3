//! k-sparse semantic coding by Orthogonal Matching Pursuit.

use nalgebra::{DMatrix, DVector};

use crate::codebook::lasso::dot;
use crate::error::{Error, Result};
use crate::types::SemanticVocab;

/// Residual norm below which pursuit stops early.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Coefficients plus the residual norm after each pursuit step (index 0 is
/// the input norm).
#[derive(Clone, Debug, PartialEq)]
pub struct OmpTrace {
    pub coeffs: Vec<f64>,
    pub residual_norms: Vec<f64>,
}

fn least_squares(atoms: &[Vec<f64>], support: &[usize], p: &[f64]) -> Vec<f64> {
    let e = p.len();
    let a = DMatrix::from_fn(e, support.len(), |r, c| atoms[support[c]][r]);
    let b = DVector::from_column_slice(p);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .expect("svd computed with both factors");
    sol.iter().copied().collect()
}

pub fn omp_trace(p: &[f64], vocab: &SemanticVocab) -> Result<OmpTrace> {
    let e = vocab.dim();
    if p.len() != e {
        return Err(Error::DimensionMismatch { expected: e, got: p.len(), frame: None });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("semantic vector".into()));
    }
    let k = vocab.k();
    let steps = vocab.k_sparsity.min(k);
    let mut coeffs = vec![0.0; k];
    let mut residual = p.to_vec();
    let mut norms = vec![norm(&residual)];
    let mut support: Vec<usize> = Vec::with_capacity(steps);

    while support.len() < steps && *norms.last().unwrap() >= RESIDUAL_TOL {
        let mut best: Option<(usize, f64)> = None;
        for (j, atom) in vocab.atoms.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            let c = dot(atom, &residual).abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        let Some((j, c)) = best else { break };
        if c <= 1e-15 {
            break;
        }
        support.push(j);
        let sol = least_squares(&vocab.atoms, &support, p);
        residual = p.to_vec();
        for (&s, &b) in support.iter().zip(&sol) {
            for (r, a) in residual.iter_mut().zip(&vocab.atoms[s]) {
                *r -= b * a;
            }
        }
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (&s, &b) in support.iter().zip(&sol) {
            coeffs[s] = b;
        }
        norms.push(norm(&residual));
    }
    Ok(OmpTrace { coeffs, residual_norms: norms })
}

/// k-sparse code of `p` over the vocabulary atoms.
pub fn omp_encode(p: &[f64], vocab: &SemanticVocab) -> Result<Vec<f64>> {
    omp_trace(p, vocab).map(|t| t.coeffs)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

//! Structured max-margin learner with semantic margin rescaling and slack
//! rescaling, trained by cutting-plane constraint generation.
//!
//! For one class and one training sequence of length `l` with frame labels
//! `y_f ∈ {−1, +1}` and target `y = y_l`, every frame contributes the
//! constraint
//!
//! ```text
//! ωᵀ(ψ_T[0..l) − ψ_T[0..=f]) ≥ μ_f − ζ / Δ_f
//! μ_f = |y_f − ŷ_f|,  ŷ_f = ωᵀψ_S[0..=f] + b,  Δ_f = |y_f − y|
//! ```
//!
//! where `ψ_T`, `ψ_S` are mean-pooled temporal and semantic codes. Frames with
//! `Δ_f = 0` impose nothing and are never stored. The optimal slack of a
//! sequence is `max(0, max_f Δ_f(μ_f − F_f))` with `F_f` the score gap on the
//! left-hand side, and the mean optimal slack bounds the training risk.

mod qp;
mod train;

use serde::{Deserialize, Serialize};

pub use train::{train, ClassReport, IterationRecord, TrainReport};

use crate::codebook::{pool_semantic, pool_temporal};
use crate::error::{Error, Result};
use crate::types::{EncodedSequence, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginRefresh {
    /// Keep the semantic scores of the all-zero initial model.
    Frozen,
    /// Recompute the semantic scores after each converged cutting-plane
    /// epoch, for at most this many epochs.
    Epochs(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub c_reg: f64,
    pub epsilon: f64,
    /// Cap on cutting-plane iterations (constraint additions + QP solves).
    pub max_outer: usize,
    pub margin_refresh: MarginRefresh,
    /// Duality gap at which a restricted QP solve stops.
    pub qp_gap: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c_reg: 10.0,
            epsilon: 1e-3,
            max_outer: 500,
            margin_refresh: MarginRefresh::Epochs(30),
            qp_gap: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_reg > 0.0) || !(self.epsilon > 0.0) || self.max_outer == 0 || !(self.qp_gap > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "training needs c_reg > 0, epsilon > 0, max_outer >= 1, qp_gap > 0 (got {self:?})"
            )));
        }
        if self.margin_refresh == MarginRefresh::Epochs(0) {
            return Err(Error::InvalidConfig("margin_refresh epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// A stored margin constraint. `frame` is the 0-based index of the last frame
/// of the competing prefix, and `diff` is the pooled-feature difference
/// (with the constant bias feature, which always cancels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub example: usize,
    pub frame: usize,
    pub delta: f64,
    pub mu: f64,
    pub diff: Vec<f64>,
}

/// Semantic margin `|y_f − ŷ_f|`.
pub fn margin_mu(y_f: f64, yhat_f: f64) -> f64 {
    (y_f - yhat_f).abs()
}

/// Slack rescaling `|y_f − y|`: 0 for agreeing labels, 2 otherwise.
pub fn slack_rescale(y_f: f64, y_target: f64) -> f64 {
    (y_f - y_target).abs()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ŷ_f = ωᵀ·mean(semantic codes 0..=f) + bias`.
pub fn semantic_score(weights: &[f64], bias: f64, enc: &EncodedSequence, f: usize) -> Result<f64> {
    if weights.len() != enc.semantic_k() {
        return Err(Error::DimensionMismatch { expected: enc.semantic_k(), got: weights.len(), frame: None });
    }
    Ok(dot(weights, &pool_semantic(enc, 0, f)?) + bias)
}

/// Detection score of the window `s..=f` for `class`.
pub fn score(model: &Model, enc: &EncodedSequence, s: usize, f: usize, class: &str) -> Result<f64> {
    let idx = model.class_index(class).ok_or_else(|| Error::UnknownClass(class.to_string()))?;
    let c = &model.classes[idx];
    if c.weights.len() != enc.k() {
        return Err(Error::DimensionMismatch { expected: enc.k(), got: c.weights.len(), frame: None });
    }
    Ok(dot(&c.weights, &pool_temporal(enc, s, f)?) + c.bias)
}

/// One sequence viewed as a binary training example for a single class.
#[derive(Clone, Debug)]
pub(crate) struct ClassExample<'a> {
    pub enc: &'a EncodedSequence,
    /// ±1 per frame up to and including the terminal frame.
    pub y: Vec<f64>,
    pub target: f64,
    /// Pooled temporal code over the whole example plus the bias feature.
    full: Vec<f64>,
}

impl<'a> ClassExample<'a> {
    /// The example ends at the last frame carrying `class`; a sequence
    /// without the class is used whole, with target −1.
    pub fn new(enc: &'a EncodedSequence, class: &str) -> Result<Self> {
        let labels = enc.labels.as_ref().ok_or(Error::MissingLabels)?;
        if labels.len() != enc.len() {
            return Err(Error::LengthMismatch(labels.len(), enc.len()));
        }
        let len = labels.iter().rposition(|l| l == class).map_or(enc.len(), |p| p + 1);
        let y: Vec<f64> = labels[..len].iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
        let target = y[len - 1];
        let mut full = pool_temporal(enc, 0, len - 1)?;
        full.push(1.0);
        Ok(ClassExample { enc, y, target, full })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn has_positive(&self) -> bool {
        self.y.iter().any(|&v| v > 0.0)
    }

    pub fn has_negative(&self) -> bool {
        self.y.iter().any(|&v| v < 0.0) || self.len() < self.enc.len()
    }

    pub fn delta(&self, f: usize) -> f64 {
        slack_rescale(self.y[f], self.target)
    }

    /// `ψ_T[0..l) − ψ_T[0..=f]`, with the cancelled bias coordinate.
    pub fn diff(&self, f: usize) -> Vec<f64> {
        let mut p = pool_temporal(self.enc, 0, f).expect("f < len");
        p.push(1.0);
        self.full.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// μ_f for every frame under the margin weights (bias last).
    pub fn margins(&self, wb: &[f64]) -> Vec<f64> {
        let (w, b) = wb.split_at(wb.len() - 1);
        (0..self.len())
            .map(|f| {
                let yhat = dot(w, &pool_semantic(self.enc, 0, f).expect("f < len")) + b[0];
                margin_mu(self.y[f], yhat)
            })
            .collect()
    }

    /// Most violated frame under weights `wb` (bias last) and margins `mu`.
    pub fn most_violated(&self, wb: &[f64], mu: &[f64]) -> MostViolated {
        let mut best = MostViolated { frame: None, value: 0.0 };
        for f in 0..self.len() {
            let delta = self.delta(f);
            if delta == 0.0 {
                continue;
            }
            let v = delta * (mu[f] - dot(wb, &self.diff(f)));
            if v > best.value {
                best = MostViolated { frame: Some(f), value: v };
            }
        }
        best
    }
}

/// Result of the loss-augmented scan. `frame` is `None` when no admissible
/// frame has positive violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MostViolated {
    pub frame: Option<usize>,
    pub value: f64,
}

fn class_weights(model: &Model, class: &str) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let idx = model.class_index(class).ok_or_else(|| Error::UnknownClass(class.to_string()))?;
    let c = &model.classes[idx];
    let mut wb = c.weights.clone();
    wb.push(c.bias);
    let (mw, mb) = model.margin_weights(idx);
    let mut mwb = mw;
    mwb.push(mb);
    Ok((idx, wb, mwb))
}

fn check_dims(model: &Model, enc: &EncodedSequence) -> Result<()> {
    if enc.k() != model.dim() || enc.semantic_k() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: if enc.k() != model.dim() { enc.k() } else { enc.semantic_k() },
            frame: None,
        });
    }
    Ok(())
}

/// Scans every frame of `enc` for the constraint with the largest rescaled
/// violation. Ties go to the earlier frame.
pub fn most_violated(enc: &EncodedSequence, model: &Model, class: &str) -> Result<MostViolated> {
    check_dims(model, enc)?;
    let (_, wb, mwb) = class_weights(model, class)?;
    let ex = ClassExample::new(enc, class)?;
    let mu = ex.margins(&mwb);
    Ok(ex.most_violated(&wb, &mu))
}

/// Optimal slack of one example: `max(0, most violated value)`.
pub fn slack_optimal(enc: &EncodedSequence, model: &Model, class: &str) -> Result<f64> {
    Ok(most_violated(enc, model, class)?.value.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    pub class: String,
    pub bound: f64,
    pub slacks: Vec<f64>,
}

/// Mean optimal slack over the dataset, an upper bound on the training risk.
pub fn empirical_risk_bound(model: &Model, dataset: &[EncodedSequence], class: &str) -> Result<RiskBound> {
    let slacks = dataset
        .iter()
        .map(|e| slack_optimal(e, model, class))
        .collect::<Result<Vec<_>>>()?;
    let bound = if slacks.is_empty() { 0.0 } else { slacks.iter().sum::<f64>() / slacks.len() as f64 };
    Ok(RiskBound { class: class.to_string(), bound, slacks })
}

/// Replays cumulative scoring on one training example: at every frame whose
/// label disagrees with the target, the detector errs when the prefix ending
/// there scores at least as high as the completed example. The loss is the
/// largest `Δ_f·μ_f` over erring frames.
pub fn replay_loss(enc: &EncodedSequence, model: &Model, class: &str) -> Result<f64> {
    check_dims(model, enc)?;
    let (_, _, mwb) = class_weights(model, class)?;
    let ex = ClassExample::new(enc, class)?;
    let mu = ex.margins(&mwb);
    let last = score(model, enc, 0, ex.len() - 1, class)?;
    let mut loss: f64 = 0.0;
    for f in 0..ex.len() {
        let d = ex.delta(f);
        if d > 0.0 && score(model, enc, 0, f, class)? >= last {
            loss = loss.max(d * mu[f]);
        }
    }
    Ok(loss)
}

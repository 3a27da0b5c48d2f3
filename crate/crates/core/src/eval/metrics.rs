use serde::{Deserialize, Serialize};

use crate::detector::{frame_scores, DetectConfig};
use crate::error::{Error, Result};
use crate::types::{EncodedSequence, Model};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub value: f64,
    /// The class was never predicted; `value` is 0 by convention.
    pub never_predicted: bool,
}

/// Frame-set precision `|pred ∩ truth| / |pred|` for one class.
pub fn precision<S: AsRef<str>>(pred: &[S], truth: &[S], class: &str) -> Result<Precision> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut fired = 0usize;
    let mut hit = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if p.as_ref() == class {
            fired += 1;
            if t.as_ref() == class {
                hit += 1;
            }
        }
    }
    Ok(if fired == 0 {
        Precision { value: 0.0, never_predicted: true }
    } else {
        Precision { value: hit as f64 / fired as f64, never_predicted: false }
    })
}

/// Average precision of a ranking. `items` are `(score, positive)` pairs in
/// tie-break order; the sort is stable so equal scores keep that order.
/// Zero when there are no positives.
pub fn ranking_ap(items: &[(f64, bool)]) -> f64 {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].0.total_cmp(&items[a].0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if items[i].1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// AP of `class` over every frame of `testset`, ranked by detection score.
/// Ties are broken by sequence id, then frame index.
pub fn average_precision(model: &Model, testset: &[EncodedSequence], cfg: &DetectConfig, class: &str) -> Result<f64> {
    let c = model.class_index(class).ok_or_else(|| Error::UnknownClass(class.to_string()))?;
    let mut order: Vec<&EncodedSequence> = testset.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut items = Vec::new();
    for enc in order {
        let labels = enc.labels.as_ref().ok_or(Error::MissingLabels)?;
        if labels.len() != enc.len() {
            return Err(Error::LengthMismatch(labels.len(), enc.len()));
        }
        for (f, l) in labels.iter().enumerate() {
            items.push((frame_scores(model, enc, cfg, f)?[c], l == class));
        }
    }
    Ok(ranking_ap(&items))
}

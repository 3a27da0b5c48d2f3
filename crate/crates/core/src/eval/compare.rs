use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, precision};
use crate::detector::{detect, frame_scores, DetectConfig};
use crate::error::{Error, Result};
use crate::learner::{train, TrainConfig};
use crate::types::{Combo, EncodedSequence, Fusion, Model, BACKGROUND};

/// Rearranges the code tracks of `enc` into the detector (first) and margin
/// (second) tracks the combo asks for. A single active channel feeds both.
pub fn project(enc: &EncodedSequence, combo: &Combo) -> Result<EncodedSequence> {
    let (t, s) = (&enc.temporal_codes, &enc.semantic_codes);
    let (primary, secondary) = match (combo.temporal, combo.semantic, combo.fusion) {
        (false, false, _) => {
            return Err(Error::InvalidConfig(format!("combo {} selects no channel", combo.name)));
        }
        (true, false, _) => (t.clone(), t.clone()),
        (false, true, _) => (s.clone(), s.clone()),
        (true, true, Fusion::MarginOnly) => {
            if enc.k() != enc.semantic_k() {
                return Err(Error::DimensionMismatch { expected: enc.k(), got: enc.semantic_k(), frame: None });
            }
            (t.clone(), s.clone())
        }
        (true, true, Fusion::Stacked) => {
            let stacked = t.iter().zip(s).map(|(a, b)| a.iter().chain(b).copied().collect()).collect();
            let masked = t
                .iter()
                .zip(s)
                .map(|(a, b)| std::iter::repeat_n(0.0, a.len()).chain(b.iter().copied()).collect())
                .collect();
            (stacked, masked)
        }
    };
    Ok(EncodedSequence::new(enc.id.clone(), primary, secondary, enc.labels.clone()))
}

/// Sets each class threshold to the value maximising frame-level F1 of
/// `score > threshold` on `data`.
pub fn tune_thresholds(model: &mut Model, data: &[EncodedSequence], cfg: &DetectConfig) -> Result<()> {
    let per_seq: Vec<Vec<(Vec<f64>, String)>> = data
        .par_iter()
        .map(|enc| {
            let labels = enc.labels.as_ref().ok_or(Error::MissingLabels)?;
            (0..enc.len()).map(|f| Ok((frame_scores(model, enc, cfg, f)?, labels[f].clone()))).collect()
        })
        .collect::<Result<_>>()?;
    let frames: Vec<&(Vec<f64>, String)> = per_seq.iter().flatten().collect();
    for (c, class) in model.classes.iter_mut().enumerate() {
        let mut ranked: Vec<(f64, bool)> = frames.iter().map(|(s, l)| (s[c], *l == class.name)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let positives = ranked.iter().filter(|r| r.1).count();
        if positives == 0 {
            continue;
        }
        let mut best = (0.0, class.threshold);
        let mut tp = 0usize;
        for i in 0..ranked.len() {
            tp += usize::from(ranked[i].1);
            let next = ranked.get(i + 1).map(|r| r.0);
            // only cut between distinct scores
            if next == Some(ranked[i].0) {
                continue;
            }
            let f1 = 2.0 * tp as f64 / ((i + 1) + positives) as f64;
            if f1 > best.0 {
                let th = match next {
                    Some(n) => 0.5 * (ranked[i].0 + n),
                    None => ranked[i].0 - 1.0,
                };
                best = (f1, th);
            }
        }
        class.threshold = best.1;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    /// Ranking average precision over frames.
    pub ap: f64,
    /// Frame-set precision of the detector's labels.
    pub precision: f64,
    pub never_predicted: bool,
}

/// AP and detection precision for every model class on a labeled test set.
pub fn evaluate(model: &Model, test: &[EncodedSequence], cfg: &DetectConfig) -> Result<Vec<ClassScore>> {
    let detections =
        test.par_iter().map(|e| detect(model, e, cfg)).collect::<Result<Vec<_>>>()?;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (d, e) in detections.iter().zip(test) {
        let labels = e.labels.as_ref().ok_or(Error::MissingLabels)?;
        if labels.len() != d.per_frame.len() {
            return Err(Error::LengthMismatch(d.per_frame.len(), labels.len()));
        }
        pred.extend(d.per_frame.iter().map(|x| x.label.as_str()));
        truth.extend(labels.iter().map(String::as_str));
    }
    model
        .class_names()
        .par_iter()
        .map(|c| {
            let p = precision(&pred, &truth, c)?;
            Ok(ClassScore {
                class: c.clone(),
                ap: average_precision(model, test, cfg, c)?,
                precision: p.value,
                never_predicted: p.never_predicted,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboRow {
    pub combo: Combo,
    pub classes: Vec<ClassScore>,
    pub mean_ap: f64,
    pub mean_precision: f64,
}

impl ComboRow {
    pub fn new(combo: Combo, classes: Vec<ClassScore>) -> Self {
        let n = classes.len().max(1) as f64;
        let mean_ap = classes.iter().map(|c| c.ap).sum::<f64>() / n;
        let mean_precision = classes.iter().map(|c| c.precision).sum::<f64>() / n;
        ComboRow { combo, classes, mean_ap, mean_precision }
    }

    pub fn ap(&self, class: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.class == class).map(|c| c.ap)
    }
}

/// Per-class and mean (macro-averaged) scores, one row per feature combo.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ComboRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&ComboRow> {
        self.rows.iter().find(|r| r.combo.name == name)
    }

    fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            for c in &r.classes {
                if !names.contains(&c.class) {
                    names.push(c.class.clone());
                }
            }
        }
        names
    }

    /// Classes down, combos across; AP with detection precision in brackets.
    pub fn to_text(&self) -> String {
        let classes = self.class_names();
        let mut header = vec!["class".to_string()];
        header.extend(self.rows.iter().map(|r| format!("{} AP (prec)", r.combo.name)));
        let mut table = vec![header];
        for c in &classes {
            let mut line = vec![c.clone()];
            for r in &self.rows {
                line.push(match r.classes.iter().find(|x| &x.class == c) {
                    Some(s) => format!("{:.4} ({:.4}{})", s.ap, s.precision, if s.never_predicted { "*" } else { "" }),
                    None => "-".into(),
                });
            }
            table.push(line);
        }
        let mut mean = vec!["Mean".to_string()];
        mean.extend(self.rows.iter().map(|r| format!("{:.4} ({:.4})", r.mean_ap, r.mean_precision)));
        table.push(mean);

        let cols = table[0].len();
        let widths: Vec<usize> =
            (0..cols).map(|j| table.iter().map(|l| l[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if self.rows.iter().flat_map(|r| &r.classes).any(|c| c.never_predicted) {
            out.push_str("* never predicted\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("combo,class,ap,precision,never_predicted\n");
        for r in &self.rows {
            for c in &r.classes {
                let _ = writeln!(out, "{},{},{:?},{:?},{}", r.combo.name, c.class, c.ap, c.precision, c.never_predicted);
            }
            let _ = writeln!(out, "{},Mean,{:?},{:?},", r.combo.name, r.mean_ap, r.mean_precision);
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub detect: DetectConfig,
    /// Leave thresholds at the model's values instead of tuning on training data.
    pub keep_thresholds: bool,
}

/// Trains, tunes and evaluates one model on already projected tracks.
pub fn train_and_evaluate(
    train_set: &[EncodedSequence],
    test_set: &[EncodedSequence],
    classes: &[String],
    cfg: &EvalConfig,
) -> Result<(Model, Vec<ClassScore>)> {
    let (mut model, _) = train(train_set, classes, &cfg.train)?;
    if !cfg.keep_thresholds {
        tune_thresholds(&mut model, train_set, &cfg.detect)?;
    }
    let scores = evaluate(&model, test_set, &cfg.detect)?;
    Ok((model, scores))
}

/// One row per combo: train on `train`, evaluate on `test`.
pub fn compare_features(
    train_set: &[EncodedSequence],
    test_set: &[EncodedSequence],
    classes: &[String],
    combos: &[Combo],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if classes.iter().any(|c| c == BACKGROUND) {
        return Err(Error::InvalidConfig(format!("{BACKGROUND} cannot be evaluated")));
    }
    let rows = combos
        .par_iter()
        .map(|combo| {
            let tr = train_set.iter().map(|e| project(e, combo)).collect::<Result<Vec<_>>>()?;
            let te = test_set.iter().map(|e| project(e, combo)).collect::<Result<Vec<_>>>()?;
            let (_, scores) = train_and_evaluate(&tr, &te, classes, cfg)?;
            Ok(ComboRow::new(combo.clone(), scores))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

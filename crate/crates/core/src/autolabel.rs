//! Frame labels from per-frame word sets via a trigger lookup table, and
//! training on the induced labels.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::encode_sequence;
use crate::error::{Error, Result};
use crate::eval::{project, Combo, Fusion};
use crate::learner::{train, TrainConfig, TrainReport};
use crate::types::{Codebook, EncodedSequence, Model, SemanticVocab, Sequence, BACKGROUND};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// One trigger suffices.
    #[default]
    #[serde(alias = "ANY")]
    Any,
    /// Every trigger must appear.
    #[serde(alias = "ALL")]
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    #[serde(default)]
    pub match_mode: MatchMode,
    pub entries: BTreeMap<String, BTreeSet<String>>,
}

impl LookupTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.contains_key(BACKGROUND) {
            return Err(Error::InvalidConfig(format!("{BACKGROUND} cannot be a lookup-table class")));
        }
        if let Some((c, _)) = self.entries.iter().find(|(_, t)| t.is_empty()) {
            return Err(Error::InvalidConfig(format!("class {c} has no triggers")));
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Label for one frame's words.
    pub fn label(&self, words: &[String]) -> &str {
        let present: BTreeSet<&str> = words.iter().map(String::as_str).collect();
        let mut best: Option<(&str, usize)> = None;
        for (class, triggers) in &self.entries {
            let matched = triggers.iter().filter(|t| present.contains(t.as_str())).count();
            let fires = match self.match_mode {
                MatchMode::Any => matched > 0,
                MatchMode::All => matched == triggers.len(),
            };
            // entries iterate in name order, so ties keep the smaller name
            if fires && best.is_none_or(|(_, m)| matched > m) {
                best = Some((class, matched));
            }
        }
        best.map_or(BACKGROUND, |(c, _)| c)
    }
}

/// Per-frame labels induced from the frames' word lists.
pub fn label_frames(seq: &Sequence, table: &LookupTable) -> Result<Vec<String>> {
    table.validate()?;
    seq.frames
        .iter()
        .enumerate()
        .map(|(i, fr)| match &fr.words {
            Some(w) => Ok(table.label(w).to_string()),
            None => Err(Error::MissingWords(i)),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassLabelStats {
    pub class: String,
    /// Frames assigned to the class.
    pub frames: usize,
    /// Labeling precision against ground truth, when the input carried labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    pub trained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub classes: Vec<ClassLabelStats>,
    pub background_frames: usize,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainReport>,
}

/// Turns runs of a class shorter than `min_run` frames into BACKGROUND.
pub fn drop_short_runs(labels: &mut [String], min_run: usize) {
    let mut start = 0;
    while start < labels.len() {
        let mut end = start + 1;
        while end < labels.len() && labels[end] == labels[start] {
            end += 1;
        }
        if labels[start] != BACKGROUND && end - start < min_run {
            labels[start..end].iter_mut().for_each(|l| *l = BACKGROUND.to_string());
        }
        start = end;
    }
}

/// Original labels of each relabeled sequence, when it had any.
pub type AuditTruth = Vec<Option<Vec<String>>>;

/// Copy of `seqs` with frame labels replaced by the table's output, after
/// dropping runs shorter than `min_run`. Any existing labels are kept aside
/// as audit truth.
pub fn relabel(
    seqs: &[Sequence],
    table: &LookupTable,
    min_run: usize,
) -> Result<(Vec<Sequence>, AuditTruth)> {
    let induced: Vec<Vec<String>> = seqs
        .par_iter()
        .map(|s| {
            let mut l = label_frames(s, table)?;
            drop_short_runs(&mut l, min_run);
            Ok(l)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(seqs.len());
    let mut truth = Vec::with_capacity(seqs.len());
    for (seq, labels) in seqs.iter().zip(induced) {
        truth.push(seq.labels());
        let mut s = seq.clone();
        s.header.classes = table.classes();
        for (fr, l) in s.frames.iter_mut().zip(labels) {
            fr.label = Some(l);
        }
        out.push(s);
    }
    Ok((out, truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutolabelConfig {
    pub train: TrainConfig,
    /// How temporal and semantic codes are combined when a vocabulary is given.
    pub fusion: Fusion,
    /// Induced class runs shorter than this many frames become BACKGROUND.
    /// Stray trigger words from a noisy describer otherwise plant isolated
    /// positives far from the real event.
    pub min_run: usize,
}

impl Default for AutolabelConfig {
    fn default() -> Self {
        AutolabelConfig { train: TrainConfig::default(), fusion: Fusion::default(), min_run: 3 }
    }
}

impl AutolabelConfig {
    /// Track layout used for training: temporal codes, plus semantic codes
    /// when a vocabulary is available.
    pub fn combo(&self, has_vocab: bool) -> Combo {
        let name = if has_vocab { "temporal+semantic" } else { "temporal" };
        Combo::new(name, true, has_vocab, self.fusion)
    }
}

/// Labels, encodes and trains. Classes that never fire (or fire on every
/// frame) are dropped with a warning; the model is `None` when nothing is
/// left to train.
pub fn autolabel_train(
    unlabeled: &[Sequence],
    table: &LookupTable,
    cb: &Codebook,
    vocab: Option<&SemanticVocab>,
    cfg: &AutolabelConfig,
) -> Result<(Option<Model>, LabelReport)> {
    let (labeled, truth) = relabel(unlabeled, table, cfg.min_run)?;
    let combo = cfg.combo(vocab.is_some());
    let encoded: Vec<EncodedSequence> = labeled
        .par_iter()
        .map(|s| project(&encode_sequence(s, cb, vocab)?, &combo))
        .collect::<Result<_>>()?;

    let mut counts: BTreeMap<&str, (usize, usize, bool)> = BTreeMap::new();
    let mut background = 0;
    let mut audited = false;
    for (seq, t) in labeled.iter().zip(&truth) {
        audited |= t.is_some();
        for (i, fr) in seq.frames.iter().enumerate() {
            let l = fr.label.as_deref().unwrap_or(BACKGROUND);
            if l == BACKGROUND {
                background += 1;
                continue;
            }
            let e = counts.entry(l).or_default();
            e.0 += 1;
            if t.as_ref().is_some_and(|t| t[i] == l) {
                e.1 += 1;
            }
        }
    }
    let total: usize = labeled.iter().map(Sequence::len).sum();

    let mut warnings = Vec::new();
    let mut keep = Vec::new();
    for class in table.entries.keys() {
        let n = counts.get(class.as_str()).map_or(0, |c| c.0);
        if n == 0 {
            let msg = format!("dropping class {class}: {}", Error::NoPositiveExamples(class.clone()));
            warn!("{msg}");
            warnings.push(msg);
        } else if n == total {
            let msg = format!("dropping class {class}: {}", Error::NoNegativeExamples(class.clone()));
            warn!("{msg}");
            warnings.push(msg);
        } else {
            keep.push(class.clone());
            counts.get_mut(class.as_str()).unwrap().2 = true;
        }
    }
    let classes = table
        .entries
        .keys()
        .map(|c| {
            let (frames, hits, trained) = counts.get(c.as_str()).copied().unwrap_or_default();
            ClassLabelStats {
                class: c.clone(),
                frames,
                precision: audited.then(|| if frames == 0 { 0.0 } else { hits as f64 / frames as f64 }),
                trained,
            }
        })
        .collect();
    let mut report = LabelReport { classes, background_frames: background, warnings, training: None };
    if keep.is_empty() {
        return Ok((None, report));
    }
    let (model, tr) = train(&encoded, &keep, &cfg.train)?;
    report.training = Some(tr);
    Ok((Some(model), report))
}

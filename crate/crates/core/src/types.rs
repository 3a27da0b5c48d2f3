//! Domain types shared across the pipeline.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Reserved label for frames that carry no event of interest. Never learned.
pub const BACKGROUND: &str = "BACKGROUND";

/// One frame of a feature stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub t: usize,
    pub temporal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, rename = "semantic", skip_serializing_if = "Option::is_none")]
    pub semantic_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// First line of a `.vjsonl` sequence block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceHeader {
    pub id: String,
    pub num_frames: usize,
    pub temporal_dim: usize,
    pub semantic_dim: usize,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub header: SequenceHeader,
    pub frames: Vec<FrameFeatures>,
}

impl Sequence {
    pub fn id(&self) -> &str {
        &self.header.id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-frame class names, if every frame is labeled.
    pub fn labels(&self) -> Option<Vec<String>> {
        self.frames.iter().map(|f| f.label.clone()).collect()
    }
}

/// A single failed invariant found by [`validate_sequence`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub frame: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(i) => write!(f, "frame {i}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl Violation {
    fn at(frame: usize, field: &str, message: String) -> Self {
        Violation { frame: Some(frame), field: field.into(), message }
    }

    fn global(field: &str, message: String) -> Self {
        Violation { frame: None, field: field.into(), message }
    }
}

/// Checks every sequence invariant and reports each failure. An empty list
/// means the sequence is well formed.
pub fn validate_sequence(seq: &Sequence) -> Vec<Violation> {
    let h = &seq.header;
    let mut out = Vec::new();

    if seq.frames.is_empty() {
        out.push(Violation::global("frames", "sequence has no frames".into()));
    }
    if h.num_frames != seq.frames.len() {
        out.push(Violation::global(
            "num_frames",
            format!("header says {}, found {} frames", h.num_frames, seq.frames.len()),
        ));
    }
    for c in &h.classes {
        if c == BACKGROUND {
            out.push(Violation::global("classes", format!("{BACKGROUND} is reserved")));
        }
    }

    let mut labeled = 0usize;
    let mut prev_t: Option<usize> = None;
    for (i, fr) in seq.frames.iter().enumerate() {
        if fr.temporal.len() != h.temporal_dim {
            out.push(Violation::at(
                i,
                "temporal",
                format!("dimension {} vs header {}", fr.temporal.len(), h.temporal_dim),
            ));
        }
        if fr.temporal.iter().any(|v| !v.is_finite()) {
            out.push(Violation::at(i, "temporal", "non-finite value".into()));
        }
        if let Some(sv) = &fr.semantic_vec {
            if sv.len() != h.semantic_dim {
                out.push(Violation::at(
                    i,
                    "semantic",
                    format!("dimension {} vs header {}", sv.len(), h.semantic_dim),
                ));
            }
            if sv.iter().any(|v| !v.is_finite()) {
                out.push(Violation::at(i, "semantic", "non-finite value".into()));
            }
        }
        if let Some(p) = prev_t {
            if fr.t <= p {
                out.push(Violation::at(i, "t", format!("{} does not follow {}", fr.t, p)));
            }
        }
        prev_t = Some(fr.t);
        if let Some(l) = &fr.label {
            labeled += 1;
            if l != BACKGROUND && !h.classes.iter().any(|c| c == l) {
                out.push(Violation::at(i, "label", format!("unknown class {l}")));
            }
        }
    }
    if labeled != 0 && labeled != seq.frames.len() {
        out.push(Violation::global(
            "label track",
            format!("{labeled} labels for {} frames", seq.frames.len()),
        ));
    }
    out
}

/// Temporal codebook: K centroids of dimension N plus the sparsity penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub centroids: Vec<Vec<f64>>,
    pub lambda: f64,
    pub seed: u64,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, |c| c.len())
    }
}

/// Semantic dictionary (unit-norm atoms) and the word embedding table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticVocab {
    pub atoms: Vec<Vec<f64>>,
    pub k_sparsity: usize,
    pub word_embeddings: BTreeMap<String, Vec<f64>>,
}

impl SemanticVocab {
    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.len())
    }

    /// Rescales every atom to unit length. Zero atoms are left untouched.
    pub fn normalize_atoms(&mut self) {
        for a in &mut self.atoms {
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                a.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

/// Per-frame code tracks of one sequence with cached cumulative sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "EncodedRecord", into = "EncodedRecord")]
pub struct EncodedSequence {
    pub id: String,
    pub temporal_codes: Vec<Vec<f64>>,
    pub semantic_codes: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
    prefix_temporal: Vec<Vec<f64>>,
    prefix_semantic: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EncodedRecord {
    id: String,
    temporal_codes: Vec<Vec<f64>>,
    semantic_codes: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl From<EncodedRecord> for EncodedSequence {
    fn from(r: EncodedRecord) -> Self {
        EncodedSequence::new(r.id, r.temporal_codes, r.semantic_codes, r.labels)
    }
}

impl From<EncodedSequence> for EncodedRecord {
    fn from(e: EncodedSequence) -> Self {
        EncodedRecord {
            id: e.id,
            temporal_codes: e.temporal_codes,
            semantic_codes: e.semantic_codes,
            labels: e.labels,
        }
    }
}

/// Next cumulative row: `prev + row`, or a copy of `row` at the first frame.
pub fn accumulate(prev: Option<&[f64]>, row: &[f64]) -> Vec<f64> {
    match prev {
        Some(p) => p.iter().zip(row).map(|(a, b)| a + b).collect(),
        None => row.to_vec(),
    }
}

fn prefix_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for r in rows {
        let next = accumulate(out.last().map(|v| v.as_slice()), r);
        out.push(next);
    }
    out
}

/// Mean of rows `s..=f` recovered from cumulative sums.
pub fn window_mean(prefix_end: &[f64], prefix_before: Option<&[f64]>, len: usize) -> Vec<f64> {
    let n = len as f64;
    match prefix_before {
        Some(b) => prefix_end.iter().zip(b).map(|(e, b)| (e - b) / n).collect(),
        None => prefix_end.iter().map(|e| e / n).collect(),
    }
}

impl EncodedSequence {
    pub fn new(
        id: String,
        temporal_codes: Vec<Vec<f64>>,
        semantic_codes: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Self {
        let prefix_temporal = prefix_rows(&temporal_codes);
        let prefix_semantic = prefix_rows(&semantic_codes);
        EncodedSequence {
            id,
            temporal_codes,
            semantic_codes,
            labels,
            prefix_temporal,
            prefix_semantic,
        }
    }

    pub fn len(&self) -> usize {
        self.temporal_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temporal_codes.is_empty()
    }

    /// Width of the temporal track.
    pub fn k(&self) -> usize {
        self.temporal_codes.first().map_or(0, |r| r.len())
    }

    pub fn semantic_k(&self) -> usize {
        self.semantic_codes.first().map_or(0, |r| r.len())
    }

    pub fn prefix_temporal(&self) -> &[Vec<f64>] {
        &self.prefix_temporal
    }

    pub fn prefix_semantic(&self) -> &[Vec<f64>] {
        &self.prefix_semantic
    }
}

/// How two active channels are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Detector features are the temporal and semantic codes side by side;
    /// the margin scores read the semantic half only.
    #[default]
    Stacked,
    /// Temporal codes feed the detector, semantic codes only the margins.
    MarginOnly,
}

/// A feature configuration: which code tracks are active.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combo {
    pub name: String,
    pub temporal: bool,
    pub semantic: bool,
    #[serde(default)]
    pub fusion: Fusion,
}

impl Combo {
    pub fn new(name: &str, temporal: bool, semantic: bool, fusion: Fusion) -> Self {
        Combo { name: name.to_string(), temporal, semantic, fusion }
    }

    /// Temporal only, semantic only, and both stacked.
    pub fn standard() -> Vec<Combo> {
        vec![
            Combo::new("temporal", true, false, Fusion::Stacked),
            Combo::new("semantic", false, true, Fusion::Stacked),
            Combo::new("temporal+semantic", true, true, Fusion::Stacked),
        ]
    }
}

/// Learned parameters of one one-vs-rest detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub name: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    /// False when training stopped at its iteration cap with open violations.
    pub converged: bool,
    /// Weights the semantic margins were computed from in the final training
    /// epoch; the detector weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_weights: Option<Vec<f64>>,
}

/// Where the semantic margin scores came from during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarginSource {
    /// Scores follow the learned weights.
    #[default]
    Learned,
    /// Scores held at the all-zero initial model.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub classes: Vec<ClassModel>,
    pub c_reg: f64,
    #[serde(default)]
    pub margin_source: MarginSource,
    /// Code-track layout the model was trained on; raw encoded tracks when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<Combo>,
}

impl Model {
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.weights.len())
    }

    /// Weights used to score the semantic margin for class `idx`.
    pub fn margin_weights(&self, idx: usize) -> (Vec<f64>, f64) {
        let c = &self.classes[idx];
        match self.margin_source {
            MarginSource::Learned => (c.margin_weights.clone().unwrap_or_else(|| c.weights.clone()), c.bias),
            MarginSource::Frozen => (vec![0.0; c.weights.len()], 0.0),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes.is_empty() {
            out.push("model has no classes".to_string());
        }
        let k = self.dim();
        for c in &self.classes {
            if c.name == BACKGROUND {
                out.push(format!("{BACKGROUND} cannot be a model class"));
            }
            if c.weights.len() != k {
                out.push(format!("class {}: {} weights, expected {k}", c.name, c.weights.len()));
            }
            if c.weights.iter().chain([&c.bias, &c.threshold]).any(|v| !v.is_finite()) {
                out.push(format!("class {}: non-finite parameter", c.name));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDecision {
    pub t: usize,
    pub label: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub class: String,
    pub start: usize,
    pub end: usize,
    pub peak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub id: String,
    pub per_frame: Vec<FrameDecision>,
    pub segments: Vec<Segment>,
}

impl DetectionResult {
    pub fn labels(&self) -> Vec<String> {
        self.per_frame.iter().map(|d| d.label.clone()).collect()
    }

    /// Checks segment bounds, overlap and agreement with the per-frame track.
    pub fn check_segments(&self) -> Vec<String> {
        let n = self.per_frame.len();
        let mut out = Vec::new();
        let mut last_end: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.segments {
            if s.start > s.end || s.end >= n {
                out.push(format!("segment {}..{} outside 0..{n}", s.start, s.end));
                continue;
            }
            if let Some(&e) = last_end.get(s.class.as_str()) {
                if s.start <= e {
                    out.push(format!("segments of {} overlap at {}", s.class, s.start));
                }
            }
            last_end.insert(&s.class, s.end);
            if self.per_frame[s.start..=s.end].iter().any(|d| d.label != s.class) {
                out.push(format!("segment {}..{} disagrees with frame labels", s.start, s.end));
            }
        }
        out
    }
}

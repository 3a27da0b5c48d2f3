//! Causal detection over encoded streams with unknown event boundaries.
//!
//! At frame `f` each class is scored by the best window ending at `f`
//! (windowed mean pooling over candidate starts), the best class above its
//! threshold becomes the raw decision, and a hysteresis filter turns raw
//! decisions into the emitted per-frame labels.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{accumulate, window_mean, DetectionResult, EncodedSequence, FrameDecision, Model, Segment, BACKGROUND};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub max_window: usize,
    pub stride: usize,
    /// Per-class overrides of the model thresholds.
    pub thresholds: BTreeMap<String, f64>,
    /// Consecutive frames needed before the emitted label switches.
    pub hysteresis: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { max_window: 150, stride: 1, thresholds: BTreeMap::new(), hysteresis: 3 }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_window == 0 || self.stride == 0 || self.hysteresis == 0 {
            return Err(Error::InvalidConfig(format!(
                "max_window, stride and hysteresis must be >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }

    fn resolved_thresholds(&self, model: &Model) -> Vec<f64> {
        model
            .classes
            .iter()
            .map(|c| self.thresholds.get(&c.name).copied().unwrap_or(c.threshold))
            .collect()
    }
}

/// Candidate window starts for frame `f`: `f, f − stride, …` down to the
/// window limit, clamped at 0.
pub fn candidate_starts(f: usize, cfg: &DetectConfig) -> Vec<usize> {
    let lowest = (f + 1).saturating_sub(cfg.max_window);
    let mut out = Vec::new();
    let mut s = f as isize;
    while s >= lowest as isize {
        out.push(s as usize);
        s -= cfg.stride as isize;
    }
    if s < 0 && lowest == 0 && *out.last().unwrap() != 0 {
        out.push(0);
    }
    out
}

/// Per-class best window score at frame `f`, given cumulative rows by
/// absolute frame index.
fn scores_at<'p>(model: &Model, prefix: impl Fn(usize) -> &'p [f64], f: usize, cfg: &DetectConfig) -> Vec<f64> {
    let starts = candidate_starts(f, cfg);
    model
        .classes
        .iter()
        .map(|c| {
            let mut best = f64::NEG_INFINITY;
            for &s in &starts {
                let before = if s == 0 { None } else { Some(prefix(s - 1)) };
                let pooled = window_mean(prefix(f), before, f - s + 1);
                let v = c.weights.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f64>() + c.bias;
                if v > best {
                    best = v;
                }
            }
            best
        })
        .collect()
}

fn check_dims(model: &Model, k: usize) -> Result<()> {
    if model.dim() != k {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: k, frame: None });
    }
    Ok(())
}

/// Per-class detection scores `s_c(f)`.
pub fn frame_scores(model: &Model, enc: &EncodedSequence, cfg: &DetectConfig, f: usize) -> Result<Vec<f64>> {
    check_dims(model, enc.k())?;
    if f >= enc.len() {
        return Err(Error::IndexOutOfRange { start: f, end: f, len: enc.len() });
    }
    let p = enc.prefix_temporal();
    Ok(scores_at(model, |i| p[i].as_slice(), f, cfg))
}

#[derive(Clone, Debug)]
struct Decider {
    names: Vec<String>,
    thresholds: Vec<f64>,
    hysteresis: usize,
    current: Option<usize>,
    pending: Option<Option<usize>>,
    count: usize,
    open: Option<Segment>,
    per_frame: Vec<FrameDecision>,
    segments: Vec<Segment>,
}

impl Decider {
    fn new(model: &Model, cfg: &DetectConfig) -> Self {
        Decider {
            names: model.class_names(),
            thresholds: cfg.resolved_thresholds(model),
            hysteresis: cfg.hysteresis,
            current: None,
            pending: None,
            count: 0,
            open: None,
            per_frame: Vec::new(),
            segments: Vec::new(),
        }
    }

    fn step(&mut self, t: usize, scores: &[f64]) -> FrameDecision {
        let mut arg = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[arg] {
                arg = c;
            }
        }
        let raw = (scores[arg] > self.thresholds[arg]).then_some(arg);

        if raw == self.current {
            self.pending = None;
            self.count = 0;
        } else {
            if self.pending == Some(raw) {
                self.count += 1;
            } else {
                self.pending = Some(raw);
                self.count = 1;
            }
            if self.count >= self.hysteresis {
                self.current = raw;
                self.pending = None;
                self.count = 0;
            }
        }

        let frame = self.per_frame.len();
        let (label, score) = match self.current {
            Some(c) => (self.names[c].clone(), scores[c]),
            None => (BACKGROUND.to_string(), scores[arg]),
        };
        match (&mut self.open, self.current) {
            (Some(seg), Some(c)) if seg.class == self.names[c] => {
                seg.end = frame;
                seg.peak = seg.peak.max(score);
            }
            (open, cur) => {
                if let Some(seg) = open.take() {
                    self.segments.push(seg);
                }
                if let Some(c) = cur {
                    *open = Some(Segment { class: self.names[c].clone(), start: frame, end: frame, peak: score });
                }
            }
        }
        let d = FrameDecision { t, label, score };
        self.per_frame.push(d.clone());
        d
    }

    fn finish(mut self, id: String) -> DetectionResult {
        if let Some(seg) = self.open.take() {
            self.segments.push(seg);
        }
        DetectionResult { id, per_frame: self.per_frame, segments: self.segments }
    }
}

/// Labels every frame of `enc` and extracts segments.
pub fn detect(model: &Model, enc: &EncodedSequence, cfg: &DetectConfig) -> Result<DetectionResult> {
    cfg.validate()?;
    check_dims(model, enc.k())?;
    let p = enc.prefix_temporal();
    let mut dec = Decider::new(model, cfg);
    for f in 0..enc.len() {
        let s = scores_at(model, |i| p[i].as_slice(), f, cfg);
        dec.step(f, &s);
    }
    Ok(dec.finish(enc.id.clone()))
}

/// Frame-at-a-time detector. Keeps only the cumulative rows the window needs.
#[derive(Clone, Debug)]
pub struct StreamingDetector<'m> {
    model: &'m Model,
    cfg: DetectConfig,
    id: String,
    /// Cumulative rows for frames `base..`.
    window: VecDeque<Vec<f64>>,
    base: usize,
    next: usize,
    decider: Decider,
}

impl<'m> StreamingDetector<'m> {
    pub fn new(model: &'m Model, cfg: &DetectConfig, id: impl Into<String>) -> Result<Self> {
        cfg.validate()?;
        Ok(StreamingDetector {
            model,
            cfg: cfg.clone(),
            id: id.into(),
            window: VecDeque::new(),
            base: 0,
            next: 0,
            decider: Decider::new(model, cfg),
        })
    }

    /// Consumes the temporal code of the next frame.
    pub fn push(&mut self, code: &[f64]) -> Result<FrameDecision> {
        check_dims(self.model, code.len())?;
        let row = accumulate(self.window.back().map(|v| v.as_slice()), code);
        self.window.push_back(row);
        let f = self.next;
        self.next += 1;
        // rows older than the earliest possible `s − 1` are no longer needed
        while self.window.len() > self.cfg.max_window + 1 {
            self.window.pop_front();
            self.base += 1;
        }
        let (win, base) = (&self.window, self.base);
        let scores = scores_at(self.model, |i| win[i - base].as_slice(), f, &self.cfg);
        Ok(self.decider.step(f, &scores))
    }

    pub fn finish(self) -> DetectionResult {
        self.decider.finish(self.id)
    }
}

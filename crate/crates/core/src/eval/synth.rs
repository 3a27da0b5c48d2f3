use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::types::{FrameFeatures, Sequence, SequenceHeader, BACKGROUND};

/// One event type: a Gaussian over temporal features and a unigram word model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub words: BTreeMap<String, f64>,
    /// Frames of this event are labeled BACKGROUND; it only appears as a
    /// distractor.
    #[serde(default)]
    pub background: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLen {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: Vec<ClassSpec>,
    pub event_len: EventLen,
    /// Events surrounding the event of interest in each video.
    pub distractors_per_video: usize,
    pub noise_sigma: f64,
    pub words_per_frame: usize,
    /// Probability that a sampled word is replaced by one drawn uniformly
    /// from the whole vocabulary.
    pub word_noise: f64,
    /// Dimension of the generated word embeddings.
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: Vec::new(),
            event_len: EventLen { min: 8, max: 16 },
            distractors_per_video: 6,
            noise_sigma: 0.1,
            words_per_frame: 3,
            word_noise: 0.0,
            embed_dim: 16,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !self.classes.iter().any(|c| !c.background) {
            return bad("at least one non-background class is required".into());
        }
        let dim = self.classes[0].mean.len();
        if dim == 0 {
            return bad("class means must be non-empty".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.classes {
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate class {}", c.name));
            }
            if c.name == BACKGROUND {
                return bad(format!("{BACKGROUND} is reserved; mark distractor specs with background = true"));
            }
            if c.mean.len() != dim {
                return bad(format!("class {}: mean has {} dims, expected {dim}", c.name, c.mean.len()));
            }
            if !(c.sigma >= 0.0) || !c.sigma.is_finite() || c.mean.iter().any(|v| !v.is_finite()) {
                return bad(format!("class {}: invalid mean or sigma", c.name));
            }
            if c.words.is_empty() || c.words.values().any(|p| !(*p >= 0.0)) {
                return bad(format!("class {}: word probabilities must be non-negative and non-empty", c.name));
            }
            let total: f64 = c.words.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("class {}: word probabilities sum to {total}", c.name));
            }
        }
        if self.event_len.min == 0 || self.event_len.min > self.event_len.max {
            return bad(format!("event_len must satisfy 1 <= min <= max, got {:?}", self.event_len));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.word_noise) {
            return bad(format!("word_noise must be in [0, 1], got {}", self.word_noise));
        }
        if self.words_per_frame == 0 || self.embed_dim == 0 {
            return bad("words_per_frame and embed_dim must be >= 1".into());
        }
        Ok(())
    }

    /// Names of the classes that carry labels.
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().filter(|c| !c.background).map(|c| c.name.clone()).collect()
    }

    /// Every token of every class, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.classes.iter().flat_map(|c| c.words.keys()).collect();
        set.into_iter().cloned().collect()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random Gaussian embedding for every vocabulary token.
pub fn synth_embeddings(cfg: &SynthConfig) -> Result<BTreeMap<String, Vec<f64>>> {
    cfg.validate()?;
    let mut rng = seed::stream(cfg.seed, "synth/embeddings");
    Ok(cfg
        .vocabulary()
        .into_iter()
        .map(|w| {
            let v = (0..cfg.embed_dim).map(|_| gauss(&mut rng)).collect();
            (w, v)
        })
        .collect())
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    vocab: Vec<String>,
    words: Vec<(Vec<&'a String>, WeightedIndex<f64>)>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a SynthConfig) -> Result<Self> {
        let words = cfg
            .classes
            .iter()
            .map(|c| {
                let tokens: Vec<&String> = c.words.keys().collect();
                let dist = WeightedIndex::new(c.words.values().copied())
                    .map_err(|e| Error::InvalidConfig(format!("class {}: {e}", c.name)))?;
                Ok((tokens, dist))
            })
            .collect::<Result<_>>()?;
        Ok(Sampler { cfg, vocab: cfg.vocabulary(), words })
    }

    fn video(&self, index: usize) -> Sequence {
        let cfg = self.cfg;
        let mut rng = seed::stream(cfg.seed, &format!("synth/video/{index}"));
        let interest: Vec<usize> = (0..cfg.classes.len()).filter(|&i| !cfg.classes[i].background).collect();
        let target = interest[rng.random_range(0..interest.len())];
        let others: Vec<usize> = (0..cfg.classes.len()).filter(|&i| i != target).collect();
        let d = cfg.distractors_per_video;
        let slot = rng.random_range(0..=d);
        let events: Vec<usize> = (0..=d)
            .map(|i| {
                if i == slot || others.is_empty() {
                    target
                } else {
                    others[rng.random_range(0..others.len())]
                }
            })
            .collect();

        let mut frames = Vec::new();
        for &e in &events {
            let spec = &cfg.classes[e];
            let len = rng.random_range(cfg.event_len.min..=cfg.event_len.max);
            let label = if spec.background { BACKGROUND.to_string() } else { spec.name.clone() };
            for _ in 0..len {
                let temporal = spec
                    .mean
                    .iter()
                    .map(|m| m + spec.sigma * gauss(&mut rng) + cfg.noise_sigma * gauss(&mut rng))
                    .collect();
                let (tokens, dist) = &self.words[e];
                let words = (0..cfg.words_per_frame)
                    .map(|_| {
                        let w = tokens[dist.sample(&mut rng)];
                        if cfg.word_noise > 0.0 && rng.random_bool(cfg.word_noise) {
                            self.vocab[rng.random_range(0..self.vocab.len())].clone()
                        } else {
                            w.clone()
                        }
                    })
                    .collect();
                frames.push(FrameFeatures {
                    t: frames.len(),
                    temporal,
                    words: Some(words),
                    semantic_vec: None,
                    label: Some(label.clone()),
                });
            }
        }
        Sequence {
            header: SequenceHeader {
                id: format!("video{index:04}"),
                num_frames: frames.len(),
                temporal_dim: cfg.classes[0].mean.len(),
                semantic_dim: 0,
                classes: cfg.class_names(),
                provenance: None,
            },
            frames,
        }
    }
}

/// Labeled synthetic videos: an event of interest at a random position
/// among `distractors_per_video` other events. Video `i` depends only on the
/// seed and `i`.
pub fn synth_generate(cfg: &SynthConfig, n_videos: usize) -> Result<Vec<Sequence>> {
    cfg.validate()?;
    let sampler = Sampler::new(cfg)?;
    Ok((0..n_videos).into_par_iter().map(|i| sampler.video(i)).collect())
}

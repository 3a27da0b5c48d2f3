use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{build_codebook, build_vocab, encode_sequence, sentence_vector, KMeansConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{Codebook, EncodedSequence, SemanticVocab, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub kmeans: KMeansConfig,
    pub lambda: f64,
    /// OMP sparsity of the semantic codes.
    pub k_sparsity: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { kmeans: KMeansConfig::default(), lambda: 0.1, k_sparsity: 3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub codebook: Codebook,
    pub vocab: Option<SemanticVocab>,
}

/// Fits the temporal codebook on every training frame and, given word
/// embeddings, a semantic vocabulary of the same size on the frames'
/// sentence vectors.
pub fn fit_features(
    train: &[Sequence],
    embeddings: Option<&BTreeMap<String, Vec<f64>>>,
    cfg: &FeatureConfig,
) -> Result<Features> {
    let samples: Vec<Vec<f64>> = train.iter().flat_map(|s| s.frames.iter().map(|f| f.temporal.clone())).collect();
    let codebook = build_codebook(&samples, &cfg.kmeans, cfg.lambda)?;
    let vocab = match embeddings {
        None => None,
        Some(emb) => {
            let probe = SemanticVocab { atoms: Vec::new(), k_sparsity: cfg.k_sparsity, word_embeddings: emb.clone() };
            let mut vectors = Vec::new();
            for s in train {
                for (i, f) in s.frames.iter().enumerate() {
                    let v = match (&f.words, &f.semantic_vec) {
                        (Some(w), _) => sentence_vector(w, &probe).vec,
                        (None, Some(v)) => v.clone(),
                        (None, None) => return Err(Error::MissingSemantic(i)),
                    };
                    vectors.push(v);
                }
            }
            let km = KMeansConfig { seed: seed::derive(cfg.kmeans.seed, "vocab"), ..cfg.kmeans.clone() };
            Some(build_vocab(&vectors, emb.clone(), cfg.k_sparsity, &km)?)
        }
    };
    Ok(Features { codebook, vocab })
}

pub fn encode_all(seqs: &[Sequence], features: &Features) -> Result<Vec<EncodedSequence>> {
    seqs.par_iter()
        .map(|s| encode_sequence(s, &features.codebook, features.vocab.as_ref()))
        .collect()
}

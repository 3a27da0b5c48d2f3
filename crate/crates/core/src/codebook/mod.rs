//! Codebooks and per-frame coding: LASSO temporal codes, OMP semantic codes,
//! and cumulative window pooling.

mod kmeans;
mod lasso;
mod omp;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use kmeans::{kmeans, KMeansConfig, KMeansFit};
pub use lasso::{sparse_encode, LassoEncoder};
pub use omp::{omp_encode, omp_trace, OmpTrace};

use crate::error::{Error, Result};
use crate::types::{validate_sequence, window_mean, Codebook, EncodedSequence, Sequence, SemanticVocab};

/// k-means temporal codebook over raw frame descriptors.
pub fn build_codebook(samples: &[Vec<f64>], cfg: &KMeansConfig, lambda: f64) -> Result<Codebook> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let fit = kmeans(samples, cfg)?;
    Ok(Codebook { centroids: fit.centroids, lambda, seed: cfg.seed })
}

/// Semantic vocabulary whose atoms are unit-normalised k-means centres of
/// the given sentence vectors.
pub fn build_vocab(
    sentence_vectors: &[Vec<f64>],
    word_embeddings: BTreeMap<String, Vec<f64>>,
    k_sparsity: usize,
    cfg: &KMeansConfig,
) -> Result<SemanticVocab> {
    if k_sparsity == 0 || k_sparsity > cfg.k {
        return Err(Error::InvalidConfig(format!(
            "k_sparsity must be in 1..={}, got {k_sparsity}",
            cfg.k
        )));
    }
    let fit = kmeans(sentence_vectors, cfg)?;
    let mut vocab = SemanticVocab { atoms: fit.centroids, k_sparsity, word_embeddings };
    vocab.normalize_atoms();
    Ok(vocab)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVector {
    pub vec: Vec<f64>,
    /// Tokens skipped because they have no embedding.
    pub out_of_vocab: usize,
}

/// Mean embedding of the in-vocabulary tokens; zero when none are known.
pub fn sentence_vector(words: &[String], vocab: &SemanticVocab) -> SentenceVector {
    let dim = vocab
        .word_embeddings
        .values()
        .next()
        .map_or(vocab.dim(), |v| v.len());
    let mut sum = vec![0.0; dim];
    let mut known = 0usize;
    for w in words {
        if let Some(e) = vocab.word_embeddings.get(w) {
            sum.iter_mut().zip(e).for_each(|(s, x)| *s += x);
            known += 1;
        }
    }
    if known > 0 {
        let n = known as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    SentenceVector { vec: sum, out_of_vocab: words.len() - known }
}

/// Codes every frame of `seq`. Without a vocabulary the semantic track is all
/// zeros with the codebook's width.
pub fn encode_sequence(
    seq: &Sequence,
    cb: &Codebook,
    vocab: Option<&SemanticVocab>,
) -> Result<EncodedSequence> {
    let violations = validate_sequence(seq);
    if !violations.is_empty() {
        return Err(Error::InvalidSequence { id: seq.id().to_string(), violations });
    }
    if seq.header.temporal_dim != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            got: seq.header.temporal_dim,
            frame: None,
        });
    }
    let lasso = LassoEncoder::new(cb)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, fr)| {
            let at = |e: Error| match e {
                Error::DimensionMismatch { expected, got, .. } => {
                    Error::DimensionMismatch { expected, got, frame: Some(i) }
                }
                other => other,
            };
            let t = lasso.encode(&fr.temporal).map_err(at)?;
            let s = match vocab {
                None => vec![0.0; cb.k()],
                Some(v) => {
                    let p = if let Some(words) = &fr.words {
                        sentence_vector(words, v).vec
                    } else if let Some(sv) = &fr.semantic_vec {
                        sv.clone()
                    } else {
                        return Err(Error::MissingSemantic(i));
                    };
                    omp_encode(&p, v).map_err(at)?
                }
            };
            Ok((t, s))
        })
        .collect::<Result<_>>()?;
    let (temporal, semantic): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(EncodedSequence::new(seq.id().to_string(), temporal, semantic, seq.labels()))
}

fn check_window(enc: &EncodedSequence, s: usize, f: usize) -> Result<()> {
    if s > f || f >= enc.len() {
        return Err(Error::IndexOutOfRange { start: s, end: f, len: enc.len() });
    }
    Ok(())
}

fn pool(prefix: &[Vec<f64>], s: usize, f: usize) -> Vec<f64> {
    let before = if s == 0 { None } else { Some(prefix[s - 1].as_slice()) };
    window_mean(&prefix[f], before, f - s + 1)
}

/// Mean temporal code over frames `s..=f`, in O(K) from the prefix sums.
pub fn pool_temporal(enc: &EncodedSequence, s: usize, f: usize) -> Result<Vec<f64>> {
    check_window(enc, s, f)?;
    Ok(pool(enc.prefix_temporal(), s, f))
}

/// Mean semantic code over frames `s..=f`.
pub fn pool_semantic(enc: &EncodedSequence, s: usize, f: usize) -> Result<Vec<f64>> {
    check_window(enc, s, f)?;
    Ok(pool(enc.prefix_semantic(), s, f))
}

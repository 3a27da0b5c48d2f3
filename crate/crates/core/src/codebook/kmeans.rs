use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative distortion improvement falls below this.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 16, max_iters: 100, tol: 1e-6, seed: 0, restarts: 3 }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_iters == 0 || self.restarts == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "k-means needs k, max_iters, restarts >= 1 and tol > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub distortion: f64,
    pub iterations: usize,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_samples(samples: &[Vec<f64>], k: usize) -> Result<usize> {
    let dim = samples.first().map_or(0, |s| s.len());
    for (i, s) in samples.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.len(), frame: Some(i) });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("k-means sample {i}")));
        }
    }
    let mut sorted: Vec<&Vec<f64>> = samples.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.dedup();
    if sorted.len() < k {
        return Err(Error::FewerSamplesThanK { k, samples: sorted.len() });
    }
    Ok(dim)
}

/// k-means++ seeding: each new centre is drawn with probability proportional
/// to its squared distance from the centres chosen so far.
fn seed_plus_plus<R: Rng>(samples: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = samples.len();
    let mut centroids = vec![samples[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            // rounding can run off the end; fall back to the last positive weight
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = samples[pick].clone();
        for (s, d) in samples.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(s, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(samples: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> KMeansFit {
    let dim = samples[0].len();
    let k = centroids.len();
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let assign: Vec<(usize, f64)> = samples.par_iter().map(|s| nearest(s, &centroids)).collect();
        let distortion: f64 = assign.iter().map(|a| a.1).sum();
        iterations += 1;
        let improved = prev - distortion;
        if distortion == 0.0 || iterations >= cfg.max_iters || (prev.is_finite() && improved < cfg.tol * prev) {
            return KMeansFit { centroids, distortion, iterations };
        }
        prev = distortion;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (s, &(j, _)) in samples.iter().zip(&assign) {
            counts[j] += 1;
            sums[j].iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        let mut taken = vec![false; samples.len()];
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = sums[j].iter().map(|v| v / n).collect();
            } else {
                // empty cluster: reseed with the sample farthest from its centroid
                let far = assign
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken[far] = true;
                centroids[j] = samples[far].clone();
            }
        }
    }
}

/// Best of `cfg.restarts` seeded Lloyd runs. Deterministic for a fixed seed.
pub fn kmeans(samples: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansFit> {
    cfg.validate()?;
    if samples.len() < cfg.k {
        return Err(Error::FewerSamplesThanK { k: cfg.k, samples: samples.len() });
    }
    check_samples(samples, cfg.k)?;
    let mut best: Option<KMeansFit> = None;
    for r in 0..cfg.restarts {
        let mut rng = seed::stream(cfg.seed, &format!("kmeans/{r}"));
        let init = seed_plus_plus(samples, cfg.k, &mut rng);
        let fit = lloyd(samples, init, cfg);
        if best.as_ref().is_none_or(|b| fit.distortion < b.distortion) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

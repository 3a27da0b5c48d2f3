use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qp::DualQp;
use super::{ClassExample, Constraint, MarginRefresh, TrainConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{ClassModel, EncodedSequence, MarginSource, Model, BACKGROUND};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epoch: usize,
    pub outer: usize,
    /// Full objective `½‖ω‖² + (C/n)Σζ*` with optimal slacks under the
    /// current margins.
    pub objective: f64,
    /// Dual objective of the restricted QP after the solve.
    pub restricted_dual: f64,
    pub constraints: usize,
    /// Largest excess of a most-violated constraint over its stored slack,
    /// measured before the constraints were added.
    pub max_violation: f64,
    pub risk_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub iterations: Vec<IterationRecord>,
    pub epochs: usize,
    /// Per-example slack over the stored constraints, at the final margins.
    pub slacks: Vec<f64>,
    pub risk_bound: f64,
    pub converged: bool,
    /// False if the restricted dual ever dropped by more than 1e-8 within an epoch.
    pub dual_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub classes: Vec<ClassReport>,
}

fn check_dims(dataset: &[EncodedSequence]) -> Result<usize> {
    let k = dataset.first().map_or(0, |e| e.k());
    for e in dataset {
        if e.is_empty() {
            return Err(Error::InvalidConfig(format!("sequence {} has no frames", e.id)));
        }
        if e.k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: e.k(), frame: None });
        }
        if e.semantic_k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: e.semantic_k(), frame: None });
        }
    }
    Ok(k)
}

struct Trained {
    model: ClassModel,
    report: ClassReport,
}

fn scan(examples: &[ClassExample<'_>], wb: &[f64], margins: &[Vec<f64>]) -> Vec<super::MostViolated> {
    examples
        .par_iter()
        .zip(margins)
        .map(|(ex, mu)| ex.most_violated(wb, mu))
        .collect()
}

fn all_margins(examples: &[ClassExample<'_>], wb: &[f64]) -> Vec<Vec<f64>> {
    examples.par_iter().map(|ex| ex.margins(wb)).collect()
}

fn train_class(class: &str, examples: &[ClassExample<'_>], k: usize, cfg: &TrainConfig) -> Trained {
    let n = examples.len();
    let budget = cfg.c_reg / n as f64;
    let dim = k + 1;
    let mut qp = DualQp::new(budget, n, dim);
    let mut rng = seed::stream(cfg.seed, &format!("train/{class}"));
    let max_epochs = match cfg.margin_refresh {
        MarginRefresh::Frozen => 1,
        MarginRefresh::Epochs(e) => e,
    };

    let mut records = Vec::new();
    // weights the semantic margins are computed from during the current epoch
    let mut margin_wb = vec![0.0; dim];
    let mut margins = all_margins(examples, &margin_wb);
    let mut outer = 0;
    let mut converged = false;
    let mut dual_monotone = true;
    let mut prev_objective: Option<f64> = None;
    let mut epoch = 0;

    'epochs: while epoch < max_epochs {
        if epoch > 0 && qp.len() > 0 {
            qp.solve(cfg.qp_gap, &mut rng);
        }
        loop {
            if outer >= cfg.max_outer {
                warn!("class {class}: stopped after {outer} cutting-plane iterations");
                break 'epochs;
            }
            let wb = qp.weights().to_vec();
            let found = scan(examples, &wb, &margins);
            let stored = qp.slacks();
            let mut added = 0;
            let mut max_violation: f64 = 0.0;
            for (i, mv) in found.iter().enumerate() {
                let Some(f) = mv.frame else { continue };
                let excess = mv.value - stored[i];
                max_violation = max_violation.max(excess);
                if excess > cfg.epsilon && !qp.contains(i, f) {
                    let ex = &examples[i];
                    qp.add(Constraint {
                        example: i,
                        frame: f,
                        delta: ex.delta(f),
                        mu: margins[i][f],
                        diff: ex.diff(f),
                    });
                    added += 1;
                }
            }
            if added == 0 {
                break;
            }
            outer += 1;
            let before = qp.dual();
            let stats = qp.solve(cfg.qp_gap, &mut rng);
            if stats.dual < before - 1e-8 {
                dual_monotone = false;
            }
            let wb = qp.weights();
            let opt: Vec<f64> = scan(examples, wb, &margins).iter().map(|m| m.value.max(0.0)).collect();
            let risk = opt.iter().sum::<f64>() / n as f64;
            let objective = 0.5 * wb.iter().map(|v| v * v).sum::<f64>() + budget * opt.iter().sum::<f64>();
            records.push(IterationRecord {
                epoch,
                outer,
                objective,
                restricted_dual: stats.dual,
                constraints: qp.len(),
                max_violation,
                risk_bound: risk,
            });
            qp.prune();
        }
        epoch += 1;

        if cfg.margin_refresh == MarginRefresh::Frozen {
            converged = true;
            break;
        }
        // Margin weights follow the running mean of the epoch solutions; a
        // plain refresh from the latest weights can cycle.
        let step = 1.0 / epoch as f64;
        let candidate: Vec<f64> =
            margin_wb.iter().zip(qp.weights()).map(|(m, w)| m + step * (w - m)).collect();
        let next_margins = all_margins(examples, &candidate);
        let mut probe = qp.clone();
        probe.set_margins(|i, f| next_margins[i][f]);
        let stored = probe.slacks();
        let opt: Vec<f64> =
            scan(examples, probe.weights(), &next_margins).iter().map(|m| m.value.max(0.0)).collect();
        let objective = 0.5 * probe.weights().iter().map(|v| v * v).sum::<f64>() + budget * opt.iter().sum::<f64>();
        let closed = opt.iter().zip(&stored).all(|(o, s)| (o - s.max(0.0)).abs() <= cfg.epsilon);
        let settled = prev_objective.is_some_and(|p| (objective - p).abs() <= cfg.epsilon * objective.abs().max(1.0));
        debug!("class {class}: epoch {epoch} objective {objective:.6} closed {closed} settled {settled}");
        if closed && settled {
            converged = true;
            break;
        }
        prev_objective = Some(objective);
        if epoch == max_epochs {
            break;
        }
        margin_wb = candidate;
        margins = next_margins;
        qp = probe;
    }

    if !converged {
        warn!("class {class}: training did not converge");
    }
    let wb = qp.weights();
    let slacks: Vec<f64> = qp.slacks().into_iter().map(|s| s.max(0.0)).collect();
    let risk_bound = scan(examples, wb, &margins).iter().map(|m| m.value.max(0.0)).sum::<f64>() / n as f64;
    Trained {
        model: ClassModel {
            name: class.to_string(),
            weights: wb[..k].to_vec(),
            bias: wb[k],
            threshold: 0.0,
            converged,
            margin_weights: match cfg.margin_refresh {
                MarginRefresh::Frozen => None,
                MarginRefresh::Epochs(_) => Some(margin_wb[..k].to_vec()),
            },
        },
        report: ClassReport {
            class: class.to_string(),
            iterations: records,
            epochs: epoch,
            slacks,
            risk_bound,
            converged,
            dual_monotone,
        },
    }
}

/// Trains one detector per class (one-vs-rest) by cutting-plane constraint
/// generation.
pub fn train(dataset: &[EncodedSequence], classes: &[String], cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if classes.is_empty() {
        return Err(Error::InvalidConfig("no classes to train".into()));
    }
    if dataset.is_empty() {
        return Err(Error::NoPositiveExamples(classes[0].clone()));
    }
    let k = check_dims(dataset)?;
    let mut prepared = Vec::with_capacity(classes.len());
    for class in classes {
        if class == BACKGROUND {
            return Err(Error::InvalidConfig(format!("{BACKGROUND} cannot be trained")));
        }
        let examples = dataset
            .iter()
            .map(|e| ClassExample::new(e, class))
            .collect::<Result<Vec<_>>>()?;
        if !examples.iter().any(|e| e.has_positive()) {
            return Err(Error::NoPositiveExamples(class.clone()));
        }
        if !examples.iter().any(|e| e.has_negative()) {
            return Err(Error::NoNegativeExamples(class.clone()));
        }
        prepared.push((class.as_str(), examples));
    }
    let trained: Vec<Trained> = prepared
        .par_iter()
        .map(|(class, examples)| train_class(class, examples, k, cfg))
        .collect();
    let (models, reports): (Vec<_>, Vec<_>) = trained.into_iter().map(|t| (t.model, t.report)).unzip();
    let margin_source = match cfg.margin_refresh {
        MarginRefresh::Frozen => MarginSource::Frozen,
        MarginRefresh::Epochs(_) => MarginSource::Learned,
    };
    Ok((
        Model { classes: models, c_reg: cfg.c_reg, margin_source, tracks: None },
        TrainReport { classes: reports },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{slack_optimal, MostViolated};

    fn enc(id: &str, temporal: Vec<Vec<f64>>, labels: &[&str]) -> EncodedSequence {
        let sem = temporal.clone();
        EncodedSequence::new(id.into(), temporal, sem, Some(labels.iter().map(|s| s.to_string()).collect()))
    }

    fn separable() -> Vec<EncodedSequence> {
        let bg = vec![0.0, 1.0];
        let ev = vec![1.0, 0.0];
        vec![
            enc("a", vec![bg.clone(), bg.clone(), ev.clone(), ev.clone()], &["B", "B", "A", "A"]),
            enc("b", vec![bg.clone(), ev.clone(), ev.clone(), bg.clone()], &["B", "A", "A", "B"]),
            enc("c", vec![bg.clone(), bg.clone(), bg.clone()], &["B", "B", "B"]),
        ]
    }

    #[test]
    fn requires_positive_examples() {
        let d = separable();
        let r = train(&d, &["Z".to_string()], &TrainConfig::default());
        assert!(matches!(r, Err(Error::NoPositiveExamples(_))));
    }

    #[test]
    fn rejects_unequal_track_widths() {
        let e = EncodedSequence::new("x".into(), vec![vec![0.0, 1.0]], vec![vec![0.0]], Some(vec!["A".into()]));
        assert!(matches!(
            train(&[e], &["A".to_string()], &TrainConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn separable_data_reaches_zero_slack() {
        let d = separable();
        let cfg = TrainConfig { c_reg: 1e3, margin_refresh: MarginRefresh::Frozen, ..Default::default() };
        let (m, rep) = train(&d, &["A".to_string()], &cfg).unwrap();
        let r = &rep.classes[0];
        assert!(r.converged);
        assert!(r.slacks.iter().all(|&s| s <= cfg.epsilon));
        // ω₀ = (4, −4) satisfies every margin with zero slack
        let w0 = [4.0f64, -4.0];
        let half_norm0 = 0.5 * w0.iter().map(|v| v * v).sum::<f64>();
        let norm = 0.5 * m.classes[0].weights.iter().map(|v| v * v).sum::<f64>();
        assert!(norm <= half_norm0 + 1e-9);
        assert_eq!(m.classes[0].bias, 0.0);
        for e in &d {
            assert!(slack_optimal(e, &m, "A").unwrap() <= cfg.epsilon + 1e-9);
        }
    }

    #[test]
    fn stored_slacks_match_optimal() {
        let d = separable();
        let (m, rep) = train(&d, &["A".to_string()], &TrainConfig::default()).unwrap();
        let r = &rep.classes[0];
        assert!(r.dual_monotone);
        for (e, s) in d.iter().zip(&r.slacks) {
            let opt = slack_optimal(e, &m, "A").unwrap();
            assert!((opt - s).abs() <= 1e-3, "{opt} vs {s}");
        }
    }

    #[test]
    fn deterministic() {
        let d = separable();
        let a = train(&d, &["A".to_string()], &TrainConfig::default()).unwrap();
        let b = train(&d, &["A".to_string()], &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_constraints_means_zero_weights() {
        let bg = vec![0.0, 1.0];
        let d = vec![
            enc("a", vec![bg.clone(), bg.clone()], &["A", "A"]),
            enc("b", vec![bg.clone(), bg.clone()], &["B", "B"]),
        ];
        let (m, _) = train(&d, &["A".to_string()], &TrainConfig::default()).unwrap();
        assert_eq!(m.classes[0].weights, vec![0.0, 0.0]);
        let ex = ClassExample::new(&d[0], "A").unwrap();
        assert_eq!(ex.most_violated(&[0.0; 3], &[1.0; 2]), MostViolated { frame: None, value: 0.0 });
    }
}

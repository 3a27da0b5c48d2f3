#![allow(clippy::needless_range_loop)]

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p evdetect --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use evdetect::autolabel::{autolabel_train, relabel, AutolabelConfig, LookupTable, MatchMode};
use evdetect::codebook::{omp_encode, sparse_encode, KMeansConfig};
use evdetect::detector::{detect, DetectConfig, StreamingDetector};
use evdetect::eval::{
    compare_features, encode_all, evaluate, fit_features, precision, project, ranking_ap, synth_embeddings,
    synth_generate, tune_thresholds, ClassSpec, Combo, ComboRow, FeatureConfig, Fusion, SynthConfig,
};
use evdetect::io::to_json_string;
use evdetect::learner::{empirical_risk_bound, replay_loss, slack_optimal, train, MarginRefresh, TrainConfig};
use evdetect::{ClassModel, Codebook, EncodedSequence, MarginSource, Model, SemanticVocab, BACKGROUND};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- datasets

fn spec(name: &str, mean: Vec<f64>, sigma: f64, words: &[(&str, f64)], background: bool) -> ClassSpec {
    ClassSpec {
        name: name.into(),
        mean,
        sigma,
        words: words.iter().map(|(w, p)| (w.to_string(), *p)).collect(),
        background,
    }
}

fn uniform<'a>(words: &[&'a str]) -> Vec<(&'a str, f64)> {
    words.iter().map(|w| (*w, 1.0 / words.len() as f64)).collect()
}

/// Two events with one shared temporal Gaussian and disjoint words, among
/// three background activities.
fn confusable_config(seed: u64, word_noise: f64) -> SynthConfig {
    SynthConfig {
        classes: vec![
            spec("OpenDrawer", vec![2.0, 0.0, 0.0, 0.0], 0.5, &uniform(&["drawer", "pull", "handle"]), false),
            spec("OpenCupboard", vec![2.0, 0.0, 0.0, 0.0], 0.5, &uniform(&["cupboard", "door", "shelf"]), false),
            spec("idle", vec![0.0, 2.0, 0.0, 0.0], 0.5, &uniform(&["stand", "look", "wait"]), true),
            spec("wash", vec![0.0, 0.0, 2.0, 0.0], 0.5, &uniform(&["sink", "water", "wash"]), true),
            spec("cut", vec![0.0, 0.0, 0.0, 2.0], 0.5, &uniform(&["knife", "board", "cut"]), true),
        ],
        noise_sigma: 0.2,
        word_noise,
        embed_dim: 8,
        seed,
        ..Default::default()
    }
}

/// Three events whose identity is spread over overlapping temporal
/// Gaussians and overlapping word distributions.
fn joint_config(seed: u64) -> SynthConfig {
    let s = 0.8;
    SynthConfig {
        classes: vec![
            spec("A", vec![1.0, 0.0, 0.0], s, &uniform(&["a1", "a2", "ab", "ca"]), false),
            spec("B", vec![0.0, 1.0, 0.0], s, &uniform(&["b1", "b2", "ab", "bc"]), false),
            spec("C", vec![0.0, 0.0, 1.0], s, &uniform(&["c1", "c2", "bc", "ca"]), false),
            spec("idle", vec![0.0, 0.0, 0.0], s, &uniform(&["a1", "b1", "c1", "x", "y"]), true),
        ],
        noise_sigma: 0.2,
        words_per_frame: 2,
        word_noise: 0.3,
        embed_dim: 8,
        seed,
        ..Default::default()
    }
}

struct Prepared {
    classes: Vec<String>,
    train: Vec<EncodedSequence>,
    test: Vec<EncodedSequence>,
}

fn prepare(cfg: &SynthConfig, n_train: usize, n_test: usize) -> Prepared {
    let all = synth_generate(cfg, n_train + n_test).unwrap();
    let (train, test) = all.split_at(n_train);
    let emb = synth_embeddings(cfg).unwrap();
    let fc = FeatureConfig {
        kmeans: KMeansConfig { k: 16, seed: cfg.seed, ..Default::default() },
        lambda: 0.1,
        k_sparsity: 3,
    };
    let features = fit_features(train, Some(&emb), &fc).unwrap();
    let mut classes = cfg.class_names();
    classes.sort();
    Prepared { classes, train: encode_all(train, &features).unwrap(), test: encode_all(test, &features).unwrap() }
}

fn combos() -> Vec<Combo> {
    vec![
        Combo::new("temporal", true, false, Fusion::Stacked),
        Combo::new("semantic", false, true, Fusion::Stacked),
        Combo::new("temporal+semantic", true, true, Fusion::Stacked),
    ]
}

// ------------------------------------------------------- tiny-QP oracle

/// Pooled prefix mean of rows `0..=f`, by direct summation.
fn prefix_mean(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let k = rows[0].len();
    (0..k).map(|j| rows[..=f].iter().map(|r| r[j]).sum::<f64>() / (f + 1) as f64).collect()
}

/// Every constraint row `(a, b)` of one class over the dataset, with frozen
/// semantic scores (μ = 1), grouped by example.
fn enumerate_constraints(data: &[(Vec<Vec<f64>>, Vec<bool>)]) -> Vec<Vec<(Vec<f64>, f64)>> {
    data.iter()
        .map(|(rows, pos)| {
            let l = pos.iter().rposition(|&p| p).map_or(pos.len(), |p| p + 1);
            let target: f64 = if pos[l - 1] { 1.0 } else { -1.0 };
            let full = prefix_mean(rows, l - 1);
            (0..l)
                .filter_map(|f| {
                    let y = if pos[f] { 1.0 } else { -1.0 };
                    let delta = (y - target).abs();
                    if delta == 0.0 {
                        return None;
                    }
                    let part = prefix_mean(rows, f);
                    let a: Vec<f64> = full.iter().zip(&part).map(|(u, v)| delta * (u - v)).collect();
                    Some((a, delta * 1.0))
                })
                .collect()
        })
        .collect()
}

fn primal(groups: &[Vec<(Vec<f64>, f64)>], w: &[f64], budget: f64) -> f64 {
    let slack: f64 = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|(a, b)| b - a.iter().zip(w).map(|(x, y)| x * y).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + budget * slack
}

/// Euclidean projection onto `{α ≥ 0, Σα ≤ u}`.
fn project_capped(v: &[f64], u: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= u {
        return clipped;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, x) in s.iter().enumerate() {
        acc += x;
        let t = (acc - u) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Accelerated projected gradient on the dual of the full QP; returns the
/// primal objective at the recovered weights.
fn dense_qp(groups: &[Vec<(Vec<f64>, f64)>], dim: usize, budget: f64) -> f64 {
    let rows: Vec<&(Vec<f64>, f64)> = groups.iter().flatten().collect();
    if rows.is_empty() {
        return 0.0;
    }
    let lip: f64 = rows.iter().map(|(a, _)| a.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().max(1e-12);
    let step = 1.0 / lip;
    let weights = |alpha: &[f64]| {
        let mut w = vec![0.0; dim];
        for (r, al) in rows.iter().zip(alpha) {
            w.iter_mut().zip(&r.0).for_each(|(x, a)| *x += al * a);
        }
        w
    };
    let project = |v: &[f64]| {
        let mut out = Vec::with_capacity(v.len());
        let mut at = 0;
        for g in groups {
            out.extend(project_capped(&v[at..at + g.len()], budget));
            at += g.len();
        }
        out
    };
    let mut alpha = vec![0.0; rows.len()];
    let mut y = alpha.clone();
    let mut t = 1.0f64;
    let mut best = f64::INFINITY;
    for it in 0..200_000 {
        let w = weights(&y);
        let grad: Vec<f64> =
            rows.iter().map(|(a, b)| b - a.iter().zip(&w).map(|(x, z)| x * z).sum::<f64>()).collect();
        let moved: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let next = project(&moved);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.iter().zip(&alpha).map(|(n, o)| n + (t - 1.0) / t_next * (n - o)).collect();
        alpha = next;
        t = t_next;
        if it % 100 == 0 {
            let w = weights(&alpha);
            let p = primal(groups, &w, budget);
            let d = alpha.iter().zip(&rows).map(|(a, r)| a * r.1).sum::<f64>()
                - 0.5 * w.iter().map(|v| v * v).sum::<f64>();
            best = best.min(p);
            if best - d <= 1e-10 * best.abs().max(1.0) {
                break;
            }
        }
    }
    best
}

fn tiny_qp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut nontrivial = 0;
    while instances < 25 {
        let n = rng.random_range(1..=3usize);
        let k = rng.random_range(1..=3usize);
        let data: Vec<(Vec<Vec<f64>>, Vec<bool>)> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..=4usize);
                let rows = (0..len).map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
                let pos = (0..len).map(|_| rng.random_bool(0.5)).collect();
                (rows, pos)
            })
            .collect();
        let any_pos = data.iter().any(|d| d.1.iter().any(|&p| p));
        let any_neg = data.iter().any(|d| d.1.iter().any(|&p| !p));
        if !any_pos || !any_neg {
            continue;
        }
        instances += 1;
        let c_reg = rng.random_range(0.1..10.0);
        let enc: Vec<EncodedSequence> = data
            .iter()
            .enumerate()
            .map(|(i, (rows, pos))| {
                let labels = pos.iter().map(|&p| if p { "A".to_string() } else { BACKGROUND.to_string() }).collect();
                EncodedSequence::new(format!("s{i}"), rows.clone(), rows.clone(), Some(labels))
            })
            .collect();
        let cfg = TrainConfig {
            c_reg,
            epsilon: 1e-9,
            qp_gap: 1e-12,
            margin_refresh: MarginRefresh::Frozen,
            ..Default::default()
        };
        let (model, report) = train(&enc, &["A".to_string()], &cfg).map_err(|e| e.to_string())?;
        let learned = report.classes[0].iterations.last().map_or(0.0, |r| r.objective);
        let budget = c_reg / n as f64;
        let groups = enumerate_constraints(&data);
        let oracle = dense_qp(&groups, k, budget);
        nontrivial += usize::from(oracle > 1e-6);
        // the learner's weights evaluated by the oracle's own objective
        let replayed = primal(&groups, &model.classes[0].weights, budget);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        let err = if oracle == 0.0 { learned.abs().max(replayed.abs()) } else { rel(learned, oracle).max(rel(replayed, oracle)) };
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && nontrivial > 0 && secs < 10.0,
        format!("{instances} instances ({nontrivial} with positive objective), worst relative gap {worst:.2e} (<= 1e-4), {secs:.2}s (< 10s)"),
    )
}

// ------------------------------------------------- risk-bound identity

fn risk_identity() -> Outcome {
    let mut worst_identity: f64 = 0.0;
    let mut worst_dominance = f64::INFINITY;
    let mut checked = 0;
    for (name, cfg) in [("confusable", confusable_config(11, 0.0)), ("joint", joint_config(12))] {
        let p = prepare(&cfg, 24, 0);
        let combo = Combo::new("temporal+semantic", true, true, Fusion::Stacked);
        let data: Vec<EncodedSequence> = p.train.iter().map(|e| project(e, &combo).unwrap()).collect();
        let tcfg = TrainConfig::default();
        let (model, report) = train(&data, &p.classes, &tcfg).map_err(|e| format!("{name}: {e}"))?;
        for r in &report.classes {
            if !r.converged {
                return Err(format!("{name}/{}: training did not converge", r.class));
            }
            for (e, s) in data.iter().zip(&r.slacks) {
                let opt = slack_optimal(e, &model, &r.class).unwrap();
                worst_identity = worst_identity.max((opt - s).abs());
                checked += 1;
            }
            let bound = empirical_risk_bound(&model, &data, &r.class).unwrap().bound;
            let loss = data.iter().map(|e| replay_loss(e, &model, &r.class).unwrap()).sum::<f64>() / data.len() as f64;
            worst_dominance = worst_dominance.min(bound - loss);
        }
    }
    check(
        worst_identity <= TrainConfig::default().epsilon && worst_dominance >= -1e-9,
        format!(
            "{checked} slacks, max |stored - optimal| {worst_identity:.2e} (<= eps 1e-3); min(bound - replayed loss) {worst_dominance:.3e} (>= -1e-9)"
        ),
    )
}

// --------------------------------------------------------- LASSO / OMP

/// Largest KKT violation of `e` for `min ‖x − Qᵀe‖² + λ‖e‖₁`.
fn kkt(q: &[Vec<f64>], x: &[f64], lambda: f64, e: &[f64]) -> f64 {
    let n = x.len();
    let recon: Vec<f64> = (0..n).map(|d| q.iter().zip(e).map(|(row, c)| row[d] * c).sum()).collect();
    let resid: Vec<f64> = x.iter().zip(&recon).map(|(a, b)| a - b).collect();
    q.iter()
        .zip(e)
        .map(|(row, &c)| {
            let g = 2.0 * row.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>();
            if c != 0.0 {
                (g - lambda * c.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Least squares by Gaussian elimination on the normal equations.
fn least_squares(atoms: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    let k = atoms.len();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> =
                (0..k).map(|j| atoms[i].iter().zip(&atoms[j]).map(|(a, b)| a * b).sum()).collect();
            row.push(atoms[i].iter().zip(p).map(|(a, b)| a * b).sum());
            row
        })
        .collect();
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    (0..k).map(|i| m[i][k] / m[i][i]).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn coding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=12usize);
        let n = rng.random_range(1..=10usize);
        let centroids: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda = rng.random_range(0.01..1.0);
        let cb = Codebook { centroids: centroids.clone(), lambda, seed: 0 };
        let e = sparse_encode(&x, &cb).map_err(|e| e.to_string())?;
        worst_kkt = worst_kkt.max(kkt(&centroids, &x, lambda, &e));
    }

    let mut worst_single: f64 = 0.0;
    let mut worst_ls: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(2..=6usize);
        let d = rng.random_range(k..=k + 4);
        let atoms: Vec<Vec<f64>> = (0..k).map(|_| unit((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let j = rng.random_range(0..k);
        let c = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let p: Vec<f64> = atoms[j].iter().map(|a| c * a).collect();
        let one = SemanticVocab { atoms: atoms.clone(), k_sparsity: 1, word_embeddings: BTreeMap::new() };
        let b = omp_encode(&p, &one).map_err(|e| e.to_string())?;
        for (i, v) in b.iter().enumerate() {
            let want = if i == j { c } else { 0.0 };
            worst_single = worst_single.max((v - want).abs());
        }
        let full = SemanticVocab { atoms: atoms.clone(), k_sparsity: k, word_embeddings: BTreeMap::new() };
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = omp_encode(&q, &full).map_err(|e| e.to_string())?;
        let ls = least_squares(&atoms, &q);
        worst_ls = worst_ls.max(b.iter().zip(&ls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    check(
        worst_kkt <= 1e-6 && worst_single <= 1e-8 && worst_ls <= 1e-8,
        format!(
            "100 LASSO instances, max KKT violation {worst_kkt:.2e} (<= 1e-6); 1-atom recovery error {worst_single:.2e}; k = K vs least squares {worst_ls:.2e} (<= 1e-8)"
        ),
    )
}

// ------------------------------------------------ comparative claims

fn confusable_pair() -> Outcome {
    let start = Instant::now();
    let cfg = confusable_config(1, 0.0);
    let p = prepare(&cfg, 40, 40);
    let report = compare_features(&p.train, &p.test, &p.classes, &combos(), &Default::default())
        .map_err(|e| e.to_string())?;
    let t = report.row("temporal").unwrap();
    let f = report.row("temporal+semantic").unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        f.mean_ap - t.mean_ap >= 0.15 && t.mean_ap <= 0.6 && secs < 60.0,
        format!(
            "mean AP temporal {:.4} (<= 0.6), temporal+semantic {:.4}, lift {:.4} (>= 0.15); frame precision {:.4} -> {:.4}; {secs:.1}s (< 60s)",
            t.mean_ap,
            f.mean_ap,
            f.mean_ap - t.mean_ap,
            t.mean_precision,
            f.mean_precision
        ),
    )
}

fn ordering() -> Outcome {
    let cfg = joint_config(2);
    let p = prepare(&cfg, 40, 40);
    let report = compare_features(&p.train, &p.test, &p.classes, &combos(), &Default::default())
        .map_err(|e| e.to_string())?;
    let t = report.row("temporal").unwrap().mean_ap;
    let s = report.row("semantic").unwrap().mean_ap;
    let f = report.row("temporal+semantic").unwrap().mean_ap;
    check(
        f - t >= 0.03 && f - s >= 0.03,
        format!("mean AP temporal {t:.4}, semantic {s:.4}, fused {f:.4}; margins {:.4} and {:.4} (>= 0.03)", f - t, f - s),
    )
}

fn perfect_table() -> LookupTable {
    let entries = [("OpenDrawer", ["drawer", "pull", "handle"]), ("OpenCupboard", ["cupboard", "door", "shelf"])]
        .iter()
        .map(|(c, t)| (c.to_string(), t.iter().map(|x| x.to_string()).collect()))
        .collect();
    LookupTable { match_mode: MatchMode::Any, entries }
}

fn autolabel() -> Outcome {
    let acfg = AutolabelConfig::default();
    let combo = acfg.combo(true);
    let table = perfect_table();
    let fc = FeatureConfig { kmeans: KMeansConfig { k: 16, ..Default::default() }, lambda: 0.1, k_sparsity: 3 };
    let dc = DetectConfig::default();

    let mut lines = Vec::new();
    let mut ok = true;
    for (noise, seed) in [(0.0, 3), (0.1, 3)] {
        let cfg = confusable_config(seed, noise);
        let all = synth_generate(&cfg, 80).unwrap();
        let (train_s, test_s) = all.split_at(40);
        let emb = synth_embeddings(&cfg).unwrap();
        let features = fit_features(train_s, Some(&emb), &fc).unwrap();
        let unlabeled: Vec<_> = train_s
            .iter()
            .cloned()
            .map(|mut s| {
                s.frames.iter_mut().for_each(|f| f.label = None);
                s
            })
            .collect();
        let (auto, _) = autolabel_train(&unlabeled, &table, &features.codebook, features.vocab.as_ref(), &acfg)
            .map_err(|e| e.to_string())?;
        let mut auto = auto.ok_or("no class survived auto-labeling")?;
        let layout = |seqs: &[evdetect::Sequence]| -> Vec<EncodedSequence> {
            encode_all(seqs, &features).unwrap().iter().map(|e| project(e, &combo).unwrap()).collect()
        };
        let tr = layout(train_s);
        let mut classes = cfg.class_names();
        classes.sort();
        let (mut sup, _) = train(&tr, &classes, &acfg.train).map_err(|e| e.to_string())?;
        if noise == 0.0 {
            let same = to_json_string(&sup).unwrap() == to_json_string(&auto).unwrap() && sup == auto;
            ok &= same;
            lines.push(format!("perfect table: models bit-identical = {same}"));
        } else {
            let te = layout(test_s);
            tune_thresholds(&mut sup, &tr, &dc).unwrap();
            let (relabeled, _) = relabel(train_s, &table, acfg.min_run).unwrap();
            tune_thresholds(&mut auto, &layout(&relabeled), &dc).unwrap();
            let a = ComboRow::new(combo.clone(), evaluate(&auto, &te, &dc).unwrap());
            let s = ComboRow::new(combo.clone(), evaluate(&sup, &te, &dc).unwrap());
            let gap = (s.mean_ap - a.mean_ap).abs();
            ok &= gap <= 0.1;
            lines.push(format!(
                "10% word noise: mean AP supervised {:.4}, auto-labeled {:.4}, gap {gap:.4} (<= 0.1)",
                s.mean_ap, a.mean_ap
            ));
        }
    }
    check(ok, lines.join("; "))
}

// ------------------------------------------------ streaming / metrics

fn streaming() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut mismatches = 0;
    for i in 0..100 {
        let k = rng.random_range(1..=6usize);
        let len = rng.random_range(1..=120usize);
        let classes = rng.random_range(1..=3usize);
        let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let model = Model {
            classes: (0..classes)
                .map(|c| ClassModel {
                    name: format!("C{c}"),
                    weights: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    bias: 0.0,
                    threshold: rng.random_range(-0.2..0.2),
                    converged: true,
                    margin_weights: None,
                })
                .collect(),
            c_reg: 1.0,
            margin_source: MarginSource::Learned,
            tracks: None,
        };
        let cfg = DetectConfig {
            max_window: rng.random_range(1..=40),
            stride: rng.random_range(1..=4),
            hysteresis: rng.random_range(1..=4),
            thresholds: BTreeMap::new(),
        };
        let enc = EncodedSequence::new(format!("r{i}"), rows.clone(), rows.clone(), None);
        let batch = detect(&model, &enc, &cfg).map_err(|e| e.to_string())?;
        let mut s = StreamingDetector::new(&model, &cfg, enc.id.clone()).map_err(|e| e.to_string())?;
        for r in &rows {
            s.push(r).map_err(|e| e.to_string())?;
        }
        let streamed = s.finish();
        if to_json_string(&batch).unwrap() != to_json_string(&streamed).unwrap() || batch != streamed {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("100 random sequences, {mismatches} mismatches"))
}

fn metrics() -> Outcome {
    let lab = |s: &str| -> Vec<String> {
        s.chars().map(|c| if c == 'A' { "A".into() } else { BACKGROUND.into() }).collect()
    };
    let truth = lab("..AAAA....");
    let mut fails = Vec::new();
    let p = precision(&truth, &truth, "A").unwrap();
    if p.value != 1.0 || p.never_predicted {
        fails.push("pred = truth");
    }
    if precision(&lab("AAAA......"), &truth, "A").unwrap().value != 0.5 {
        fails.push("4 fired, 2 true");
    }
    let p = precision(&lab(".........."), &truth, "A").unwrap();
    if p.value != 0.0 || !p.never_predicted {
        fails.push("never predicted");
    }
    if ranking_ap(&[(0.9, true), (0.8, true), (0.3, false), (0.1, false)]) != 1.0 {
        fails.push("perfect ranking");
    }
    if ranking_ap(&[(0.9, false), (0.8, true), (0.3, false), (0.1, false)]) != 0.5 {
        fails.push("single positive ranked 2nd of 4");
    }
    // all tied: positives at positions 2 and 3 of 4 in frame order
    let tied = [(0.0, false), (0.0, true), (0.0, true), (0.0, false)];
    if ranking_ap(&tied) != (1.0 / 2.0 + 2.0 / 3.0) / 2.0 {
        fails.push("tied ranking");
    }
    check(fails.is_empty(), if fails.is_empty() { "6 hand cases exact".into() } else { format!("failed: {}", fails.join(", ")) })
}

// ------------------------------------------------ pipeline determinism

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let exe = env!("CARGO_BIN_EXE_evdetect");
    std::fs::write(
        dir.join("run.toml"),
        "seed = 7\nn_train = 12\nn_test = 8\nout = \"o\"\n\n[features.kmeans]\nk = 12\nrestarts = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let table = r#"{"match_mode":"any","entries":{"OpenDrawer":["drawer","pull","handle"],"OpenCupboard":["cupboard","door","shelf"]}}"#;
    std::fs::write(dir.join("table.json"), table).map_err(|e| e.to_string())?;
    let feat = ["--codebook", "o/codebook.json", "--vocab", "o/vocab.json"];
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth"],
        vec!["build-codebook", "--features", "o/train.vjsonl", "--embeddings", "o/embeddings.jsonl"],
        [&["encode", "--features", "o/test.vjsonl"][..], &feat].concat(),
        [&["train", "--features", "o/train.vjsonl"][..], &feat].concat(),
        [&["detect", "--features", "o/test.vjsonl", "--model", "o/model.json"][..], &feat].concat(),
        [&["eval", "--features", "o/test.vjsonl", "--model", "o/model.json"][..], &feat].concat(),
        [&["risk-bound", "--features", "o/train.vjsonl", "--model", "o/model.json"][..], &feat].concat(),
        [&["compare", "--train", "o/train.vjsonl", "--test", "o/test.vjsonl"][..], &feat].concat(),
        [&["autolabel", "--features", "o/train.vjsonl", "--table", "table.json", "--out", "o/auto"][..], &feat].concat(),
    ];
    for args in steps {
        let out = Command::new(exe)
            .current_dir(dir)
            .args(["--config", "run.toml"])
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.join("o")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    check(
        fa.len() >= 12 && fa.keys().eq(fb.keys()) && differing.is_empty(),
        format!("{} artifacts over 9 commands, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("tiny-QP oracle equivalence", tiny_qp_oracle),
        ("risk bound identity and dominance", risk_identity),
        ("LASSO/OMP correctness", coding),
        ("confusable pair: semantic fusion lift", confusable_pair),
        ("ordering: fused beats each channel", ordering),
        ("auto-label equivalence", autolabel),
        ("streaming/batch bit-equivalence", streaming),
        ("metric hand cases", metrics),
        ("full-pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

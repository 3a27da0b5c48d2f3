//! Command-line front end. Each subcommand reads a TOML run configuration
//! (optional), applies flag overrides, runs one pipeline stage and writes
//! its artifacts, each stamped with the resolved configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autolabel::{autolabel_train, AutolabelConfig, LookupTable};
use crate::codebook::encode_sequence;
use crate::detector::{detect, DetectConfig};
use crate::error::{Error, Result};
use crate::eval::{
    compare_features, evaluate, fit_features, project, synth_embeddings, synth_generate, tune_thresholds, ClassSpec,
    ComboRow, EvalReport, FeatureConfig, Features, SynthConfig,
};
use crate::io::{load_embeddings, load_vjsonl, read_json, save_embeddings, save_vjsonl, to_json_string};
use crate::learner::{empirical_risk_bound, replay_loss, train, MarginRefresh, TrainConfig};
use crate::types::{Codebook, Combo, EncodedSequence, Fusion, Model, SemanticVocab, Sequence};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub features: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    pub log_level: String,
    pub paths: Paths,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub detect: DetectConfig,
    pub synth: SynthConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Channel layout for training; semantic codes join when a vocabulary is given.
    pub fusion: Fusion,
    /// Tune class thresholds on the training data after `train`.
    pub tune_thresholds: bool,
    pub autolabel_min_run: usize,
    /// Combos for `compare`; temporal, semantic and both when empty.
    pub combos: Vec<Combo>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            log_level: "warn".into(),
            paths: Paths::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            detect: DetectConfig::default(),
            synth: SynthConfig::default(),
            n_train: 40,
            n_test: 40,
            fusion: Fusion::default(),
            tune_thresholds: true,
            autolabel_min_run: AutolabelConfig::default().min_run,
            combos: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Copies the root seed into every seeded component.
    fn resolve_seeds(&mut self) {
        self.features.kmeans.seed = self.seed;
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    fn combo(&self, has_vocab: bool) -> Combo {
        AutolabelConfig { fusion: self.fusion, ..Default::default() }.combo(has_vocab)
    }
}

#[derive(Debug, Parser)]
#[command(name = "evdetect", version, about = "Continuous event detection on frame-feature streams")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic train/test videos and word embeddings.
    Synth(SynthArgs),
    /// Fit the temporal codebook (and semantic vocabulary) on training features.
    BuildCodebook(CodebookArgs),
    /// Encode a feature file into code tracks.
    Encode(EncodeArgs),
    /// Train per-class detectors on labeled features.
    Train(TrainArgs),
    /// Label every frame of a feature file.
    Detect(DetectArgs),
    /// Label frames from their words with a lookup table, then train.
    Autolabel(AutolabelArgs),
    /// Score a trained model on labeled test features.
    Eval(EvalArgs),
    /// Train and score several feature combinations.
    Compare(CompareArgs),
    /// Empirical risk bound and replayed training loss of a model.
    RiskBound(RiskArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Feature file (.vjsonl).
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub word_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    /// Training features (.vjsonl).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Word embeddings (JSON lines); enables the semantic vocabulary.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Codebook and vocabulary size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k_sparsity: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    Stacked,
    MarginOnly,
}

impl From<FusionArg> for Fusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Stacked => Fusion::Stacked,
            FusionArg::MarginOnly => Fusion::MarginOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub c_reg: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Margin refresh epochs.
    #[arg(long, conflicts_with = "frozen_margins")]
    pub margin_epochs: Option<usize>,
    /// Keep the semantic margins of the zero model.
    #[arg(long)]
    pub frozen_margins: bool,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub max_window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub hysteresis: Option<usize>,
    /// Per-class threshold override, as CLASS=VALUE (repeatable).
    #[arg(long = "threshold", value_parser = parse_threshold)]
    pub thresholds: Vec<(String, f64)>,
}

fn parse_threshold(s: &str) -> std::result::Result<(String, f64), String> {
    let (c, v) = s.split_once('=').ok_or_else(|| format!("expected CLASS=VALUE, got {s}"))?;
    let v: f64 = v.parse().map_err(|e| format!("{s}: {e}"))?;
    Ok((c.to_string(), v))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Keep thresholds at 0 instead of tuning them on the training data.
    #[arg(long)]
    pub no_tune: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Lookup table (JSON).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub min_run: Option<usize>,
    #[command(flatten)]
    pub learn: LearnArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub learn: LearnArgs,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_path(&mut cfg.paths.features, &self.features);
        set_path(&mut cfg.paths.codebook, &self.codebook);
        set_path(&mut cfg.paths.vocab, &self.vocab);
    }
}

impl LearnArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.train.c_reg, self.c_reg);
        set(&mut cfg.train.epsilon, self.epsilon);
        set(&mut cfg.train.max_outer, self.max_outer);
        if let Some(e) = self.margin_epochs {
            cfg.train.margin_refresh = MarginRefresh::Epochs(e);
        }
        if self.frozen_margins {
            cfg.train.margin_refresh = MarginRefresh::Frozen;
        }
        set(&mut cfg.fusion, self.fusion.map(Fusion::from));
    }
}

impl WindowArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.detect.max_window, self.max_window);
        set(&mut cfg.detect.stride, self.stride);
        set(&mut cfg.detect.hysteresis, self.hysteresis);
        for (c, v) in &self.thresholds {
            cfg.detect.thresholds.insert(c.clone(), *v);
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::BuildCodebook(_) => "build-codebook",
            Command::Encode(_) => "encode",
            Command::Train(_) => "train",
            Command::Detect(_) => "detect",
            Command::Autolabel(_) => "autolabel",
            Command::Eval(_) => "eval",
            Command::Compare(_) => "compare",
            Command::RiskBound(_) => "risk-bound",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Synth(a) => {
                set(&mut cfg.n_train, a.n_train);
                set(&mut cfg.n_test, a.n_test);
                set(&mut cfg.synth.distractors_per_video, a.distractors);
                set(&mut cfg.synth.noise_sigma, a.noise_sigma);
                set(&mut cfg.synth.word_noise, a.word_noise);
            }
            Command::BuildCodebook(a) => {
                set_path(&mut cfg.paths.features, &a.features);
                set_path(&mut cfg.paths.embeddings, &a.embeddings);
                set(&mut cfg.features.kmeans.k, a.k);
                set(&mut cfg.features.lambda, a.lambda);
                set(&mut cfg.features.k_sparsity, a.k_sparsity);
                set(&mut cfg.features.kmeans.restarts, a.restarts);
            }
            Command::Encode(a) => a.input.apply(cfg),
            Command::Train(a) => {
                a.input.apply(cfg);
                a.learn.apply(cfg);
                a.window.apply(cfg);
                if a.no_tune {
                    cfg.tune_thresholds = false;
                }
            }
            Command::Detect(a) => {
                a.input.apply(cfg);
                set_path(&mut cfg.paths.model, &a.model);
                a.window.apply(cfg);
            }
            Command::Autolabel(a) => {
                a.input.apply(cfg);
                set_path(&mut cfg.paths.table, &a.table);
                set(&mut cfg.autolabel_min_run, a.min_run);
                a.learn.apply(cfg);
            }
            Command::Eval(a) => {
                a.input.apply(cfg);
                set_path(&mut cfg.paths.model, &a.model);
                a.window.apply(cfg);
            }
            Command::Compare(a) => {
                set_path(&mut cfg.paths.train, &a.train);
                set_path(&mut cfg.paths.test, &a.test);
                set_path(&mut cfg.paths.codebook, &a.codebook);
                set_path(&mut cfg.paths.vocab, &a.vocab);
                a.learn.apply(cfg);
                a.window.apply(cfg);
            }
            Command::RiskBound(a) => {
                a.input.apply(cfg);
                set_path(&mut cfg.paths.model, &a.model);
            }
        }
    }
}

/// Loads the config file and applies global and per-command flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| {
                let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
                Error::Parse { path: p.display().to_string(), line, msg: e.message().to_string() }
            })?
        }
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.jobs, cli.jobs);
    set(&mut cfg.out, cli.out.clone());
    set(&mut cfg.log_level, cli.log_level.clone());
    cli.command.apply(&mut cfg);
    cfg.resolve_seeds();
    if cfg.synth.classes.is_empty() {
        cfg.synth.classes = demo_classes();
    }
    Ok(cfg)
}

/// Kitchen-style demo set: two events sharing their motion statistics but
/// described by different words, among three background activities.
pub fn demo_classes() -> Vec<ClassSpec> {
    let spec = |name: &str, axis: usize, words: &[&str], background: bool| {
        let mut mean = vec![0.0; 4];
        mean[axis] = 2.0;
        let p = 1.0 / words.len() as f64;
        ClassSpec {
            name: name.into(),
            mean,
            sigma: 0.5,
            words: words.iter().map(|w| (w.to_string(), p)).collect(),
            background,
        }
    };
    vec![
        spec("OpenDrawer", 0, &["drawer", "pull", "handle"], false),
        spec("OpenCupboard", 0, &["cupboard", "door", "shelf"], false),
        spec("idle", 1, &["stand", "look", "wait"], true),
        spec("wash", 2, &["sink", "water", "wash"], true),
        spec("cut", 3, &["knife", "board", "cut"], true),
    ]
}

struct Ctx {
    cfg: RunConfig,
    command: &'static str,
}

impl Ctx {
    fn provenance(&self) -> Value {
        json!({
            "tool": "evdetect",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.cfg.seed,
            "config": serde_json::to_value(&self.cfg).unwrap_or(Value::Null),
        })
    }

    fn input(&self, p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = p.clone().ok_or_else(|| Error::InvalidConfig(format!("{} needs --{what}", self.command)))?;
        if !p.exists() {
            return Err(Error::InvalidConfig(format!("{what} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn optional_input(&self, p: &Option<PathBuf>, what: &str) -> Result<Option<PathBuf>> {
        p.as_ref().map(|_| self.input(p, what)).transpose()
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.cfg.out)?;
        Ok(self.cfg.out.join(name))
    }

    /// Writes `value` as JSON with a `provenance` member added.
    fn write_artifact<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(m) => {
                m.insert("provenance".into(), self.provenance());
            }
            other => {
                v = json!({ "data": other.take(), "provenance": self.provenance() });
            }
        }
        let path = self.out_path(name)?;
        std::fs::write(&path, to_json_string(&v)? + "\n")?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out_path(name)?;
        std::fs::write(&path, text)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn codebook(&self) -> Result<Codebook> {
        read_json(&self.input(&self.cfg.paths.codebook, "codebook")?)
    }

    fn vocab(&self) -> Result<Option<SemanticVocab>> {
        self.optional_input(&self.cfg.paths.vocab, "vocab")?.map(|p| read_json(&p)).transpose()
    }

    fn model(&self) -> Result<Model> {
        let m: Model = read_json(&self.input(&self.cfg.paths.model, "model")?)?;
        let problems = m.validate();
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(format!("model: {}", problems.join("; "))));
        }
        Ok(m)
    }

    fn sequences(&self, p: &Option<PathBuf>, what: &str) -> Result<Vec<Sequence>> {
        load_vjsonl(&self.input(p, what)?)
    }

    /// Encodes and lays out tracks as `combo` asks (raw tracks when `None`).
    fn encode(&self, seqs: &[Sequence], features: &Features, combo: Option<&Combo>) -> Result<Vec<EncodedSequence>> {
        use rayon::prelude::*;
        seqs.par_iter()
            .map(|s| {
                let e = encode_sequence(s, &features.codebook, features.vocab.as_ref())?;
                match combo {
                    Some(c) => project(&e, c),
                    None => Ok(e),
                }
            })
            .collect()
    }

    fn features(&self) -> Result<Features> {
        Ok(Features { codebook: self.codebook()?, vocab: self.vocab()? })
    }
}

fn classes_of(seqs: &[Sequence]) -> Vec<String> {
    let mut set = std::collections::BTreeSet::new();
    for s in seqs {
        set.extend(s.header.classes.iter().cloned());
    }
    set.into_iter().collect()
}

#[derive(Serialize)]
struct EncodedSet<'a> {
    sequences: &'a [EncodedSequence],
}

#[derive(Serialize)]
struct Detections<'a> {
    results: &'a [crate::types::DetectionResult],
}

#[derive(Serialize)]
struct RiskEntry {
    class: String,
    bound: f64,
    replay_loss: f64,
    slacks: Vec<f64>,
}

fn run_command(ctx: &Ctx, cmd: &Command) -> Result<()> {
    let cfg = &ctx.cfg;
    match cmd {
        Command::Synth(_) => {
            let all = synth_generate(&cfg.synth, cfg.n_train + cfg.n_test)?;
            let stamp = |mut seqs: Vec<Sequence>| {
                for s in &mut seqs {
                    s.header.provenance = Some(ctx.provenance());
                }
                seqs
            };
            let (train, test) = all.split_at(cfg.n_train);
            save_vjsonl(&ctx.out_path("train.vjsonl")?, &stamp(train.to_vec()))?;
            save_vjsonl(&ctx.out_path("test.vjsonl")?, &stamp(test.to_vec()))?;
            save_embeddings(&ctx.out_path("embeddings.jsonl")?, &synth_embeddings(&cfg.synth)?)?;
        }
        Command::BuildCodebook(_) => {
            let train = ctx.sequences(&cfg.paths.features, "features")?;
            let emb = ctx.optional_input(&cfg.paths.embeddings, "embeddings")?.map(|p| load_embeddings(&p)).transpose()?;
            let f = fit_features(&train, emb.as_ref(), &cfg.features)?;
            ctx.write_artifact("codebook.json", &f.codebook)?;
            if let Some(v) = &f.vocab {
                ctx.write_artifact("vocab.json", v)?;
            }
        }
        Command::Encode(_) => {
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let enc = ctx.encode(&seqs, &ctx.features()?, None)?;
            ctx.write_artifact("encoded.json", &EncodedSet { sequences: &enc })?;
        }
        Command::Train(_) => {
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let features = ctx.features()?;
            let combo = cfg.combo(features.vocab.is_some());
            let enc = ctx.encode(&seqs, &features, Some(&combo))?;
            let (mut model, report) = train(&enc, &classes_of(&seqs), &cfg.train)?;
            if cfg.tune_thresholds {
                tune_thresholds(&mut model, &enc, &cfg.detect)?;
            }
            model.tracks = Some(combo);
            ctx.write_artifact("model.json", &model)?;
            ctx.write_artifact("train_report.json", &report)?;
        }
        Command::Detect(_) => {
            let model = ctx.model()?;
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let enc = ctx.encode(&seqs, &ctx.features()?, model.tracks.as_ref())?;
            let results = enc.iter().map(|e| detect(&model, e, &cfg.detect)).collect::<Result<Vec<_>>>()?;
            ctx.write_artifact("detections.json", &Detections { results: &results })?;
        }
        Command::Autolabel(_) => {
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let table: LookupTable = read_json(&ctx.input(&cfg.paths.table, "table")?)?;
            let features = ctx.features()?;
            let acfg = AutolabelConfig { train: cfg.train.clone(), fusion: cfg.fusion, min_run: cfg.autolabel_min_run };
            let (model, report) =
                autolabel_train(&seqs, &table, &features.codebook, features.vocab.as_ref(), &acfg)?;
            ctx.write_artifact("label_report.json", &report)?;
            let Some(mut model) = model else {
                return Err(Error::NoPositiveExamples(table.classes().join(", ")));
            };
            model.tracks = Some(acfg.combo(features.vocab.is_some()));
            ctx.write_artifact("model.json", &model)?;
        }
        Command::Eval(_) => {
            let model = ctx.model()?;
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let enc = ctx.encode(&seqs, &ctx.features()?, model.tracks.as_ref())?;
            let combo = model.tracks.clone().unwrap_or_else(|| Combo::new("model", true, false, Fusion::MarginOnly));
            let report = EvalReport { rows: vec![ComboRow::new(combo, evaluate(&model, &enc, &cfg.detect)?)] };
            write_report(ctx, "eval_report", &report)?;
        }
        Command::Compare(_) => {
            let train = ctx.sequences(&cfg.paths.train, "train")?;
            let test = ctx.sequences(&cfg.paths.test, "test")?;
            let features = ctx.features()?;
            let combos: Vec<Combo> = if cfg.combos.is_empty() {
                Combo::standard().into_iter().filter(|c| features.vocab.is_some() || !c.semantic).collect()
            } else {
                cfg.combos.clone()
            };
            let tr = ctx.encode(&train, &features, None)?;
            let te = ctx.encode(&test, &features, None)?;
            let ecfg = crate::eval::EvalConfig {
                train: cfg.train.clone(),
                detect: cfg.detect.clone(),
                keep_thresholds: !cfg.tune_thresholds,
            };
            let report = compare_features(&tr, &te, &classes_of(&train), &combos, &ecfg)?;
            write_report(ctx, "compare_report", &report)?;
        }
        Command::RiskBound(_) => {
            let model = ctx.model()?;
            let seqs = ctx.sequences(&cfg.paths.features, "features")?;
            let enc = ctx.encode(&seqs, &ctx.features()?, model.tracks.as_ref())?;
            let mut out = Vec::new();
            for c in model.class_names() {
                let rb = empirical_risk_bound(&model, &enc, &c)?;
                let losses = enc.iter().map(|e| replay_loss(e, &model, &c)).collect::<Result<Vec<_>>>()?;
                out.push(RiskEntry {
                    class: c,
                    bound: rb.bound,
                    replay_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
                    slacks: rb.slacks,
                });
            }
            let classes: BTreeMap<&str, &RiskEntry> = out.iter().map(|r| (r.class.as_str(), r)).collect();
            ctx.write_artifact("risk_bound.json", &json!({ "classes": classes }))?;
        }
    }
    Ok(())
}

fn write_report(ctx: &Ctx, stem: &str, report: &EvalReport) -> Result<()> {
    ctx.write_artifact(&format!("{stem}.json"), report)?;
    ctx.write_text(&format!("{stem}.txt"), &report.to_text())?;
    ctx.write_text(&format!("{stem}.csv"), &report.to_csv())?;
    print!("{}", report.to_text());
    Ok(())
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new().parse_filters(level).format_timestamp(None).try_init();
}

/// Runs an already parsed command line and returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    init_logging(&cfg.log_level);
    if cfg.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let ctx = Ctx { cfg, command: cli.command.name() };
    match run_command(&ctx, &cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() || matches!(e, Error::NoPositiveExamples(_) | Error::NoNegativeExamples(_)) {
                1
            } else {
                2
            }
        }
    }
}

/// Entry point for the binary: parses `std::env::args` and runs.
pub fn run() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}


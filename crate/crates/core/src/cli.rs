//! Pipeline configuration and the `dynpool` subcommands.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    split_manifest, synth_clip_with, window, Label, LabeledClip, Manifest, Split, SynthKind,
    SynthStyle,
};
use crate::error::{Error, Result};
use crate::eval::{crossval, roc_csv, CrossValConfig, CrossValSummary, EvalReport};
use crate::model::{
    input_shape_of, load_weights, predict_proba, save_weights, train, InputShape, Sample, TrainConfig, TrainTrace,
};
use crate::preprocess::{read_frame, write_frame, Frame, ImageFormat, PreprocessConfig};
use crate::rankpool::{
    approx_rank_pool, build_feature_seq, hinge_energy, solve_rank_pool, RankPoolConfig,
};
use crate::rng::{derive_seed, fnv1a};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Exact,
    Approx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Run directory holding every artifact.
    pub out: PathBuf,
    /// Frame root; defaults to `<out>/frames`.
    pub frames: Option<PathBuf>,
    /// Manifest file; defaults to `<out>/manifest.jsonl`.
    pub manifest: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("run"),
            frames: None,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub periodic: usize,
    pub drift: usize,
    #[serde(rename = "static")]
    pub static_: usize,
    /// Frames rendered per source clip.
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    #[serde(flatten)]
    pub style: SynthStyle,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            periodic: 30,
            drift: 15,
            static_: 15,
            frames: 25,
            width: 64,
            height: 64,
            style: SynthStyle::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(rename = "T")]
    pub t: usize,
    /// Window stride; defaults to `T` (non-overlapping windows).
    pub stride: Option<usize>,
    /// Augmented copies per window, including the original.
    pub multiplier: u32,
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            t: 25,
            stride: None,
            multiplier: 1,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            parallel: true,
        }
    }
}

/// One JSON document configuring every stage. Section seeds are derived
/// from the top-level `seed` and may not be set individually.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub dataset: DatasetConfig,
    pub rankpool: RankPoolConfig,
    pub solver: Solver,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Flags take precedence over the file.
    pub fn apply_overrides(&mut self, args: &GlobalArgs) {
        if let Some(seed) = args.seed {
            self.seed = seed;
        }
        if let Some(out) = &args.out {
            self.paths.out = out.clone();
        }
        if let Some(solver) = args.solver {
            self.solver = solver;
        }
        if let Some(t) = args.t {
            self.dataset.t = t;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.preprocess.validate().map_err(cfg)?;
        self.rankpool.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        if self.rankpool.seed != 0 || self.train.seed != 0 {
            return Err(Error::Config(
                "rankpool.seed and train.seed are derived from the top-level seed; set that instead".into(),
            ));
        }
        let d = &self.dataset;
        if d.t < 2 {
            return Err(Error::Config(format!("dataset.T must be at least 2, got {}", d.t)));
        }
        if d.stride == Some(0) {
            return Err(Error::Config("dataset.stride must be at least 1".into()));
        }
        if d.multiplier == 0 {
            return Err(Error::Config("dataset.multiplier must be at least 1".into()));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dataset.test_fraction must lie in (0, 1), got {}",
                d.test_fraction
            )));
        }
        let s = &self.synth;
        if s.width < 8 || s.height < 8 {
            return Err(Error::Config(format!(
                "synth frames must be at least 8x8, got {}x{}",
                s.width, s.height
            )));
        }
        if s.style.channels != 1 && s.style.channels != 3 {
            return Err(Error::Config(format!(
                "synth.channels must be 1 or 3, got {}",
                s.style.channels
            )));
        }
        if !(s.style.noise >= 0.0) {
            return Err(Error::Config(format!("synth.noise must be non-negative, got {}", s.style.noise)));
        }
        if s.periodic + s.drift + s.static_ > 0 && s.frames < d.t {
            return Err(Error::Config(format!(
                "synth.frames = {} is shorter than dataset.T = {}",
                s.frames, d.t
            )));
        }
        if self.eval.k < 2 {
            return Err(Error::Config(format!("eval.k must be at least 2, got {}", self.eval.k)));
        }
        Ok(())
    }

    fn frames_dir(&self) -> PathBuf {
        self.paths.frames.clone().unwrap_or_else(|| self.paths.out.join("frames"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.paths
            .manifest
            .clone()
            .unwrap_or_else(|| self.paths.out.join("manifest.jsonl"))
    }

    fn pooled_dir(&self) -> PathBuf {
        self.paths.out.join("pooled")
    }

    fn skip_log(&self) -> PathBuf {
        self.paths.out.join("pool_skipped.log")
    }

    fn weights_path(&self) -> PathBuf {
        self.paths.out.join("model.dnw")
    }

    fn rankpool_config(&self) -> RankPoolConfig {
        RankPoolConfig {
            seed: self.seed,
            ..self.rankpool.clone()
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, "train", 0),
            ..self.train.clone()
        }
    }
}

#[derive(Clone, Debug, Default, clap::Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<Solver>,
    /// Frames per clip.
    #[arg(long = "T", global = true)]
    pub t: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "dynpool", version, about = "Dynamic-image rumination classifier")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic clips and write frames plus a manifest.
    Synth,
    /// Pool every manifest entry into a dynamic image.
    Pool,
    /// Train the classifier on the train split.
    Train,
    /// Evaluate trained weights on the test split.
    Eval {
        /// Weights file; defaults to `<out>/model.dnw`.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// k-fold cross-validation over all pooled entries.
    Crossval {
        /// Run folds one after another.
        #[arg(long)]
        serial: bool,
    },
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&cli.global);
    cfg.validate()?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg).map(|m| println!("wrote {} manifest entries", m.len())),
        Command::Pool => cmd_pool(&cfg).map(|(pooled, skipped)| {
            println!("pooled {pooled} clips, skipped {skipped}");
        }),
        Command::Train => cmd_train(&cfg).map(|trace| {
            let best = &trace.epochs[trace.best_epoch];
            println!(
                "best epoch {}: val_loss {:.4} val_acc {:.4}",
                best.epoch, best.val_loss, best.val_acc
            );
        }),
        Command::Eval { weights } => cmd_eval(&cfg, weights.as_deref()).map(|r| {
            println!("accuracy {:.4} auc {}", r.accuracy, fmt_opt(r.auc));
        }),
        Command::Crossval { serial } => {
            let mut cfg = cfg;
            if *serial {
                cfg.eval.parallel = false;
            }
            cmd_crossval(&cfg).map(|s| {
                println!(
                    "accuracy {:.4} ± {:.4}, auc {} ± {}",
                    s.mean_accuracy,
                    s.std_accuracy,
                    fmt_opt(s.mean_auc),
                    fmt_opt(s.std_auc)
                );
            })
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_file(path, text)
}

fn frame_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{:06}.png", index + 1))
}

/// Renders the configured clips and writes `frames/<source>/NNNNNN.png` and the manifest.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Manifest> {
    let s = &cfg.synth;
    let d = &cfg.dataset;
    let stride = d.stride.unwrap_or(d.t);
    let jobs: Vec<(SynthKind, usize)> = [
        (SynthKind::Periodic, s.periodic),
        (SynthKind::Drift, s.drift),
        (SynthKind::Static, s.static_),
    ]
    .into_iter()
    .flat_map(|(kind, n)| (0..n).map(move |i| (kind, i)))
    .collect();

    let mut entries = Vec::new();
    for &(kind, i) in &jobs {
        for range in window(s.frames, d.t, stride)? {
            entries.push(LabeledClip {
                source_id: format!("{}_{i:03}", kind.name()),
                start: range.start,
                t: d.t,
                label: kind.label(),
                split: Split::Train,
                crop: None,
                aug: 0,
            });
        }
    }
    let mut manifest = Manifest::new(entries, d.t)?;
    if !manifest.is_empty() {
        manifest = split_manifest(&manifest, d.test_fraction, derive_seed(cfg.seed, "split", 0))?;
        manifest = manifest.augmented(d.multiplier)?;
    }

    let clips: Vec<(String, Vec<Frame>)> = jobs
        .par_iter()
        .map(|&(kind, i)| {
            let seed = derive_seed(cfg.seed, kind.name(), i as u64);
            let clip = synth_clip_with(kind, s.frames, s.width, s.height, seed, &s.style)?;
            Ok((format!("{}_{i:03}", kind.name()), clip.frames))
        })
        .collect::<Result<_>>()?;

    create_dir(&cfg.paths.out)?;
    let frames_dir = cfg.frames_dir();
    create_dir(&frames_dir)?;
    clips.par_iter().try_for_each(|(source, frames)| {
        let dir = frames_dir.join(source);
        create_dir(&dir)?;
        frames
            .iter()
            .enumerate()
            .try_for_each(|(i, f)| write_frame(&frame_file(&dir, i), f))
    })?;
    manifest.write_jsonl(&cfg.manifest_path())?;
    info!("synthesized {} clips into {}", clips.len(), frames_dir.display());
    Ok(manifest)
}

/// Sidecar written next to every pooled image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledMeta {
    pub key: String,
    pub source_id: String,
    pub start: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub label: Label,
    pub split: Split,
    pub aug: u32,
    pub solver: Solver,
    pub lambda: f64,
    pub iterations: usize,
    pub energy: f64,
    pub norm_min: f64,
    pub norm_max: f64,
    pub seed: u64,
    /// Temporal direction the clip was pooled in.
    pub order: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

enum PoolOutcome {
    Pooled(Frame, PooledMeta),
    Skipped(String),
}

fn check_manifest_t(cfg: &PipelineConfig, manifest: &Manifest) -> Result<()> {
    if !manifest.is_empty() && manifest.t != cfg.dataset.t {
        return Err(Error::Config(format!(
            "manifest has T = {}, configuration has T = {}",
            manifest.t, cfg.dataset.t
        )));
    }
    Ok(())
}

fn load_clip(cfg: &PipelineConfig, entry: &LabeledClip) -> Result<Option<Vec<Frame>>> {
    let dir = cfg.frames_dir().join(&entry.source_id);
    if !dir.is_dir() {
        return Err(Error::Data(format!(
            "entry {}: frame directory {} is missing",
            entry.key(),
            dir.display()
        )));
    }
    let available = (0..).take_while(|&i| frame_file(&dir, i).is_file()).count();
    if available < entry.frame_range().end {
        return Ok(None);
    }
    entry
        .frame_range()
        .map(|i| {
            read_frame(&frame_file(&dir, i))
                .map_err(|e| Error::Data(format!("entry {}: {e}", entry.key())))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn pool_entry(cfg: &PipelineConfig, entry: &LabeledClip) -> Result<PoolOutcome> {
    let Some(frames) = load_clip(cfg, entry)? else {
        let reason = format!(
            "clip shorter than T = {} (needs frames {}..{})",
            entry.t,
            entry.frame_range().start + 1,
            entry.frame_range().end
        );
        warn!("skipping {}: {reason}", entry.key());
        return Ok(PoolOutcome::Skipped(reason));
    };
    let seed = derive_seed(cfg.seed, "preprocess", fnv1a(entry.base_key().as_bytes()));
    let frames = cfg.preprocess.apply_clip(&frames, entry.crop.as_ref(), entry.aug, seed)?;
    let rp = cfg.rankpool_config();
    let seq = build_feature_seq(&frames, rp.smoothing)?;
    let (image, iterations, energy) = match cfg.solver {
        Solver::Exact => {
            let sol = solve_rank_pool(&seq, &rp)?;
            (sol.image, sol.iterations, sol.energy)
        }
        Solver::Approx => {
            let image = approx_rank_pool(&seq)?;
            let energy = hinge_energy(image.d(), &seq, rp.lambda)?;
            (image, 0, energy)
        }
    };
    let meta = PooledMeta {
        key: entry.key(),
        source_id: entry.source_id.clone(),
        start: entry.start,
        t: entry.t,
        label: entry.label,
        split: entry.split,
        aug: entry.aug,
        solver: cfg.solver,
        lambda: rp.lambda,
        iterations,
        energy,
        norm_min: image.norm_min(),
        norm_max: image.norm_max(),
        seed: rp.seed,
        order: "forward".into(),
        width: image.width(),
        height: image.height(),
        channels: image.channels(),
    };
    Ok(PoolOutcome::Pooled(image.to_frame()?, meta))
}

/// Pools every manifest entry; returns (pooled, skipped) counts.
pub fn cmd_pool(cfg: &PipelineConfig) -> Result<(usize, usize)> {
    let manifest = Manifest::read_jsonl(&cfg.manifest_path())?;
    check_manifest_t(cfg, &manifest)?;
    let outcomes: Vec<PoolOutcome> = manifest
        .entries
        .par_iter()
        .map(|e| pool_entry(cfg, e))
        .collect::<Result<_>>()?;

    let dir = cfg.pooled_dir();
    create_dir(&dir)?;
    let mut skip_log = String::new();
    let mut pooled = 0;
    for (entry, outcome) in manifest.entries.iter().zip(&outcomes) {
        match outcome {
            PoolOutcome::Pooled(frame, meta) => {
                write_frame(&dir.join(format!("{}.png", meta.key)), frame)?;
                write_json(&dir.join(format!("{}.json", meta.key)), meta)?;
                pooled += 1;
            }
            PoolOutcome::Skipped(reason) => {
                skip_log.push_str(&format!("{}\t{reason}\n", entry.key()));
            }
        }
    }
    write_file(&cfg.skip_log(), &skip_log)?;
    Ok((pooled, outcomes.len() - pooled))
}

struct PooledSet {
    shape: Option<InputShape>,
    samples: Vec<(LabeledClip, Sample)>,
}

fn read_skipped(cfg: &PipelineConfig) -> Result<HashSet<String>> {
    let path = cfg.skip_log();
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .filter(|k| !k.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Reads pooled images for every manifest entry not recorded as skipped.
fn load_pooled(cfg: &PipelineConfig) -> Result<PooledSet> {
    let manifest = Manifest::read_jsonl(&cfg.manifest_path())?;
    check_manifest_t(cfg, &manifest)?;
    let skipped = read_skipped(cfg)?;
    let dir = cfg.pooled_dir();
    let entries: Vec<&LabeledClip> = manifest
        .entries
        .iter()
        .filter(|e| !skipped.contains(&e.key()))
        .collect();
    let loaded: Vec<(LabeledClip, Sample, InputShape)> = entries
        .par_iter()
        .map(|e| {
            let key = e.key();
            let meta_path = dir.join(format!("{key}.json"));
            let text = fs::read_to_string(&meta_path).map_err(|err| {
                Error::Data(format!("entry {key}: cannot read {}: {err}", meta_path.display()))
            })?;
            let meta: PooledMeta =
                serde_json::from_str(&text).map_err(|err| Error::json(&meta_path, err))?;
            if meta.t != cfg.dataset.t {
                return Err(Error::Config(format!(
                    "entry {key} was pooled with T = {}, configuration has T = {}",
                    meta.t, cfg.dataset.t
                )));
            }
            let frame = read_frame(&dir.join(format!("{key}.{}", ImageFormat::Png.extension())))
                .map_err(|err| Error::Data(format!("entry {key}: {err}")))?;
            Ok(((*e).clone(), Sample::from_frame(&frame, e.label), input_shape_of(&frame)?))
        })
        .collect::<Result<_>>()?;
    let shape = loaded.first().map(|l| l.2);
    if let Some((e, _, other)) = loaded.iter().find(|l| Some(l.2) != shape) {
        let s = shape.expect("non-empty");
        return Err(Error::Shape(format!(
            "entry {} is {}x{}x{}, expected {}x{}x{} like the other pooled images",
            e.key(),
            other.height,
            other.width,
            other.channels,
            s.height,
            s.width,
            s.channels
        )));
    }
    let samples = loaded.into_iter().map(|(e, s, _)| (e, s)).collect();
    Ok(PooledSet { shape, samples })
}

fn split_samples(set: &PooledSet, split: Split) -> Vec<Sample> {
    set.samples
        .iter()
        .filter(|(e, _)| e.split == split)
        .map(|(_, s)| s.clone())
        .collect()
}

fn require_shape(set: &PooledSet) -> Result<InputShape> {
    set.shape
        .ok_or_else(|| Error::Data("no pooled images found; run `pool` first".into()))
}

/// Trains on the train split, early-stopping on the test split.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainTrace> {
    let set = load_pooled(cfg)?;
    let shape = require_shape(&set)?;
    let train_set = split_samples(&set, Split::Train);
    let val_set = split_samples(&set, Split::Test);
    let (params, trace) = train(shape, &train_set, &val_set, &cfg.train_config())?;
    for e in &trace.epochs {
        info!(
            "epoch {} lr {:.3e} train_loss {:.4} val_loss {:.4} train_acc {:.3} val_acc {:.3} ({:.1}s)",
            e.epoch, e.lr, e.train_loss, e.val_loss, e.train_acc, e.val_acc, e.wall_secs
        );
    }
    create_dir(&cfg.paths.out)?;
    save_weights(&cfg.weights_path(), &params)?;
    write_file(&cfg.paths.out.join("trace.csv"), trace.to_csv())?;
    write_json(&cfg.paths.out.join("train.json"), &trace)?;
    Ok(trace)
}

/// Evaluates weights on the test split; writes `eval.json`, `roc.csv`, and
/// per-entry scores in `predictions.csv`.
pub fn cmd_eval(cfg: &PipelineConfig, weights: Option<&Path>) -> Result<EvalReport> {
    let weights = weights.map_or_else(|| cfg.weights_path(), Path::to_path_buf);
    let params = load_weights(&weights)?;
    let set = load_pooled(cfg)?;
    let shape = require_shape(&set)?;
    if shape != params.input {
        return Err(Error::Shape(format!(
            "weights expect {}x{}x{} inputs, pooled images are {}x{}x{}",
            params.input.height,
            params.input.width,
            params.input.channels,
            shape.height,
            shape.width,
            shape.channels
        )));
    }
    let (keys, test): (Vec<String>, Vec<Sample>) = set
        .samples
        .iter()
        .filter(|(e, _)| e.split == Split::Test)
        .map(|(e, s)| (e.key(), s.clone()))
        .unzip();
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let inputs: Vec<Vec<f64>> = test.iter().map(|s| s.input.clone()).collect();
    let scores: Vec<f64> = predict_proba(&params, &inputs)?.iter().map(|p| p[1]).collect();
    let truth: Vec<Label> = test.iter().map(|s| s.label).collect();
    let report = EvalReport::from_scores(&scores, &truth)?;
    let mut predictions = String::from("key,label,score\n");
    for ((key, label), score) in keys.iter().zip(&truth).zip(&scores) {
        predictions.push_str(&format!("{key},{label:?},{score}\n"));
    }
    create_dir(&cfg.paths.out)?;
    write_json(&cfg.paths.out.join("eval.json"), &report)?;
    write_file(&cfg.paths.out.join("roc.csv"), roc_csv(&report.roc_points))?;
    write_file(&cfg.paths.out.join("predictions.csv"), predictions)?;
    Ok(report)
}

/// k-fold cross-validation over every pooled entry; writes `crossval.json`.
pub fn cmd_crossval(cfg: &PipelineConfig) -> Result<CrossValSummary> {
    let set = load_pooled(cfg)?;
    let shape = require_shape(&set)?;
    let mut bases: Vec<String> = set.samples.iter().map(|(e, _)| e.base_key()).collect();
    bases.sort();
    bases.dedup();
    let groups: Vec<usize> = set
        .samples
        .iter()
        .map(|(e, _)| bases.binary_search(&e.base_key()).expect("known base"))
        .collect();
    let samples: Vec<Sample> = set.samples.iter().map(|(_, s)| s.clone()).collect();
    let cv = CrossValConfig {
        k: cfg.eval.k,
        seed: derive_seed(cfg.seed, "crossval", 0),
        parallel: cfg.eval.parallel,
    };
    let summary = crossval(shape, &samples, &groups, &cfg.train_config(), &cv)?;
    create_dir(&cfg.paths.out)?;
    write_json(&cfg.paths.out.join("crossval.json"), &summary)?;
    Ok(summary)
}

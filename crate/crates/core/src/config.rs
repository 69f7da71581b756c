//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Per-iteration keys (`k`,
//! `k2`, `k3`, `n_h`, `n_s`, `epochs`, `peak_lr`) take comma-separated lists,
//! and a single value applies to every iteration.

use std::fs;
use std::path::{Path, PathBuf};

use crate::curriculum::{default_iterations, CurriculumSchedule, IterationConfig, DEFAULT_DEPTH};
use crate::encoder::{FeaturizerConfig, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::eval::{Gain, DEFAULT_REL_THRESHOLD};
use crate::trainer::{TrainOptions, DEFAULT_BATCH_SIZE};

/// Factor applied to the transformer-scale peak learning rates so that the
/// bag-of-words student moves in a few hundred steps.
pub const DEFAULT_LR_MULTIPLIER: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherKind {
    #[default]
    Oracle,
    File,
    Bm25,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub collection: Option<PathBuf>,
    pub train_queries: Option<PathBuf>,
    pub eval_queries: Option<PathBuf>,
    pub eval_qrels: Option<PathBuf>,
    /// Grade table for the oracle teacher or scores for the file teacher.
    pub teacher_file: Option<PathBuf>,
    pub teacher: TeacherKind,
    pub oracle_noise: f64,
    pub out_dir: Option<PathBuf>,

    pub depth: usize,
    pub k: Vec<usize>,
    pub k2: Vec<usize>,
    pub k3: Vec<usize>,
    pub n_h: Vec<usize>,
    pub n_s: Vec<usize>,
    pub epochs: Vec<usize>,
    /// Unscaled peak learning rates.
    pub peak_lr: Vec<f64>,
    pub lr_multiplier: f64,
    /// Run only the first `n` iterations of the schedule.
    pub iterations: Option<usize>,
    pub reverse: bool,
    pub warmup: Option<usize>,

    pub dim: usize,
    pub vocab_size: usize,
    pub max_query_tokens: usize,
    pub max_doc_tokens: usize,
    pub shared: bool,

    pub batch_size: usize,
    pub seed: u64,

    pub rel_threshold: u32,
    pub gain: Gain,
}

impl Default for RunConfig {
    fn default() -> Self {
        let its = default_iterations();
        let col = |f: fn(&IterationConfig) -> usize| its.iter().map(f).collect::<Vec<_>>();
        let featurizer = FeaturizerConfig::default();
        Self {
            collection: None,
            train_queries: None,
            eval_queries: None,
            eval_qrels: None,
            teacher_file: None,
            teacher: TeacherKind::Oracle,
            oracle_noise: 0.0,
            out_dir: None,
            depth: DEFAULT_DEPTH,
            k: col(|i| i.k),
            k2: col(|i| i.k2),
            k3: col(|i| i.k3),
            n_h: col(|i| i.n_h),
            n_s: col(|i| i.n_s),
            epochs: col(|i| i.epochs),
            peak_lr: its.iter().map(|i| i.peak_lr).collect(),
            lr_multiplier: DEFAULT_LR_MULTIPLIER,
            iterations: None,
            reverse: false,
            warmup: None,
            dim: DEFAULT_DIM,
            vocab_size: featurizer.vocab_size,
            max_query_tokens: featurizer.max_query_tokens,
            max_doc_tokens: featurizer.max_doc_tokens,
            shared: false,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            rel_threshold: DEFAULT_REL_THRESHOLD,
            gain: Gain::Linear,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(|v| parse_value(key, v))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} needs at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid boolean {other:?} for {key}"
        ))),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim() {
        "" | "auto" | "none" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "collection" => self.collection = path(),
            "train_queries" => self.train_queries = path(),
            "eval_queries" => self.eval_queries = path(),
            "eval_qrels" => self.eval_qrels = path(),
            "teacher_file" => self.teacher_file = path(),
            "out_dir" => self.out_dir = path(),
            "teacher" => {
                self.teacher = match value {
                    "oracle" => TeacherKind::Oracle,
                    "file" => TeacherKind::File,
                    "bm25" => TeacherKind::Bm25,
                    other => return Err(Error::Config(format!("unknown teacher {other:?}"))),
                }
            }
            "oracle_noise" => self.oracle_noise = parse_value(key, value)?,
            "depth" => self.depth = parse_value(key, value)?,
            "k" => self.k = parse_list(key, value)?,
            "k2" => self.k2 = parse_list(key, value)?,
            "k3" => self.k3 = parse_list(key, value)?,
            "n_h" => self.n_h = parse_list(key, value)?,
            "n_s" => self.n_s = parse_list(key, value)?,
            "epochs" => self.epochs = parse_list(key, value)?,
            "peak_lr" => self.peak_lr = parse_list(key, value)?,
            "lr_multiplier" => self.lr_multiplier = parse_value(key, value)?,
            "iterations" => self.iterations = parse_optional(key, value)?,
            "reverse" => self.reverse = parse_bool(key, value)?,
            "warmup" => self.warmup = parse_optional(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            "vocab_size" => self.vocab_size = parse_value(key, value)?,
            "max_query_tokens" => self.max_query_tokens = parse_value(key, value)?,
            "max_doc_tokens" => self.max_doc_tokens = parse_value(key, value)?,
            "shared" => self.shared = parse_bool(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "rel_threshold" => self.rel_threshold = parse_value(key, value)?,
            "gain" => {
                self.gain = match value {
                    "linear" => Gain::Linear,
                    "exponential" => Gain::Exponential,
                    other => return Err(Error::Config(format!("unknown gain {other:?}"))),
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            vocab_size: self.vocab_size,
            max_query_tokens: self.max_query_tokens,
            max_doc_tokens: self.max_doc_tokens,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            featurizer: self.featurizer(),
            batch_size: self.batch_size,
            seed: self.seed,
            warmup_steps: self.warmup,
        }
    }

    /// The schedule with learning rates already multiplied.
    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        let lens = [
            self.k.len(),
            self.k2.len(),
            self.k3.len(),
            self.n_h.len(),
            self.n_s.len(),
            self.epochs.len(),
            self.peak_lr.len(),
        ];
        let n = lens.iter().copied().max().unwrap_or(0);
        if lens.iter().any(|&l| l != n && l != 1) {
            return Err(Error::Config(format!(
                "per-iteration lists disagree in length: {lens:?}"
            )));
        }
        fn at<T: Copy>(v: &[T], i: usize) -> T {
            if v.len() == 1 {
                v[0]
            } else {
                v[i]
            }
        }
        let mut iterations: Vec<IterationConfig> = (0..n)
            .map(|i| IterationConfig {
                k: at(&self.k, i),
                k2: at(&self.k2, i),
                k3: at(&self.k3, i),
                n_h: at(&self.n_h, i),
                n_s: at(&self.n_s, i),
                epochs: at(&self.epochs, i),
                peak_lr: at(&self.peak_lr, i),
            })
            .collect();
        if let Some(limit) = self.iterations {
            if limit == 0 || limit > iterations.len() {
                return Err(Error::Config(format!(
                    "iterations must be between 1 and {}",
                    iterations.len()
                )));
            }
            iterations.truncate(limit);
        }
        if !(self.lr_multiplier >= 0.0 && self.lr_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "invalid lr_multiplier {}",
                self.lr_multiplier
            )));
        }
        let mut schedule = CurriculumSchedule {
            depth: self.depth,
            iterations,
            reverse: self.reverse,
        };
        schedule.scale_learning_rates(self.lr_multiplier);
        schedule.validate()?;
        Ok(schedule)
    }

    /// Checks the schedule, encoder shape and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.featurizer().validate()?;
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.oracle_noise >= 0.0 && self.oracle_noise.is_finite()) {
            return Err(Error::Config(format!(
                "invalid oracle_noise {}",
                self.oracle_noise
            )));
        }
        let inputs = [
            &self.collection,
            &self.train_queries,
            &self.eval_queries,
            &self.eval_qrels,
            &self.teacher_file,
        ];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Requires an optional path to be set.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{key} is not set")))
    }
}

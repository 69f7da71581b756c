//! Per-iteration training data: retrieve with the student, re-rank with the
//! teacher, split the teacher order into three groups, sample, and label.
//!
//! Group 1 (the teacher's top `k`) is kept whole and labelled `1/r` by teacher
//! rank. `n_h` documents are drawn from group 2 and labelled 0, `n_s` from
//! group 3 and labelled -1. Each kept document also remembers the rank the
//! student gave it when the pool was retrieved.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Corpus, QuerySet, RankedList};
use crate::encoder::{encode, fnv1a64, EncoderParams, FeaturizerConfig, Role};
use crate::error::{Error, Result};
use crate::index::DenseIndex;
use crate::teacher::{rerank, TeacherAdapter};

pub const DEFAULT_DEPTH: usize = 200;
pub const DEFAULT_EPOCHS: usize = 3;
/// Peak learning rates of the three default iterations, before scaling.
pub const PAPER_PEAK_LRS: [f64; 3] = [7e-6, 3e-6, 3e-6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    /// Size of group 1.
    pub k: usize,
    /// Size of group 2, the hard negatives.
    pub k2: usize,
    /// Size of group 3.
    pub k3: usize,
    pub n_h: usize,
    pub n_s: usize,
    pub epochs: usize,
    pub peak_lr: f64,
}

impl IterationConfig {
    /// Documents per training example.
    pub fn list_len(&self) -> usize {
        self.k + self.n_h + self.n_s
    }

    pub fn depth(&self) -> usize {
        self.k + self.k2 + self.k3
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("group 1 size K must be at least 1".into()));
        }
        if self.n_h > self.k2 {
            return Err(Error::Config(format!(
                "N_h = {} exceeds group 2 size {}",
                self.n_h, self.k2
            )));
        }
        if self.n_s > self.k3 {
            return Err(Error::Config(format!(
                "N_s = {} exceeds group 3 size {}",
                self.n_s, self.k3
            )));
        }
        if self.depth() != depth {
            return Err(Error::Config(format!(
                "group sizes {}+{}+{} do not add up to depth {depth}",
                self.k, self.k2, self.k3
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "invalid peak learning rate {}",
                self.peak_lr
            )));
        }
        Ok(())
    }

    /// Number of ordered training pairs the loss sees per example.
    pub fn pair_count(&self) -> usize {
        self.k * (self.k - 1) / 2 + self.k * self.n_h + self.k * self.n_s + self.n_h * self.n_s
    }
}

/// The three default iterations: K = 5, 10, 30 with L = 30 and depth 200.
pub fn default_iterations() -> Vec<IterationConfig> {
    let groups = [
        (5, 45, 150, 12, 13),
        (10, 40, 150, 10, 10),
        (30, 20, 150, 0, 0),
    ];
    groups
        .iter()
        .zip(PAPER_PEAK_LRS)
        .map(|(&(k, k2, k3, n_h, n_s), peak_lr)| IterationConfig {
            k,
            k2,
            k3,
            n_h,
            n_s,
            epochs: DEFAULT_EPOCHS,
            peak_lr,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSchedule {
    pub depth: usize,
    pub iterations: Vec<IterationConfig>,
    /// Run the iterations hardest first.
    pub reverse: bool,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            iterations: default_iterations(),
            reverse: false,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.iterations.is_empty() {
            return Err(Error::Config("schedule has no iterations".into()));
        }
        for (i, it) in self.iterations.iter().enumerate() {
            it.validate(self.depth).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("iteration {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Iterations in execution order.
    pub fn ordered(&self) -> Vec<IterationConfig> {
        let mut its = self.iterations.clone();
        if self.reverse {
            its.reverse();
        }
        its
    }

    pub fn scale_learning_rates(&mut self, factor: f64) {
        for it in &mut self.iterations {
            it.peak_lr *= factor;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleDoc {
    pub doc_id: String,
    pub label: f64,
    pub teacher_rank: usize,
    pub retrieval_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query_id: String,
    pub docs: Vec<ExampleDoc>,
}

impl TrainingExample {
    pub fn labels(&self) -> Vec<f64> {
        self.docs.iter().map(|d| d.label).collect()
    }

    pub fn retrieval_ranks(&self) -> Vec<usize> {
        self.docs.iter().map(|d| d.retrieval_rank).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub difficulty: usize,
    pub config: IterationConfig,
    pub examples: Vec<TrainingExample>,
    /// Queries skipped because the student returned fewer than `depth` candidates.
    pub dropped: usize,
}

/// The label of the document at 1-based teacher rank `rank`.
pub fn pseudo_label(rank: usize, config: &IterationConfig) -> Option<f64> {
    match rank {
        0 => None,
        r if r <= config.k => Some(1.0 / r as f64),
        r if r <= config.k + config.k2 => Some(0.0),
        r if r <= config.depth() => Some(-1.0),
        _ => None,
    }
}

pub fn assign_pseudo_labels(
    teacher_ranked: &RankedList,
    config: &IterationConfig,
) -> Result<HashMap<String, f64>> {
    if teacher_ranked.len() < config.depth() {
        return Err(Error::Precondition(format!(
            "teacher list for query {} has {} entries, groups need {}",
            teacher_ranked.query_id,
            teacher_ranked.len(),
            config.depth()
        )));
    }
    Ok(teacher_ranked
        .entries
        .iter()
        .filter_map(|e| pseudo_label(e.rank, config).map(|l| (e.doc_id.clone(), l)))
        .collect())
}

/// Entry positions (0-based, into the teacher list) of the kept documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSample {
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
    pub group3: Vec<usize>,
}

impl GroupSample {
    pub fn ids<'a>(&self, ranked: &'a RankedList) -> (Vec<&'a str>, Vec<&'a str>, Vec<&'a str>) {
        let pick = |v: &[usize]| {
            v.iter()
                .map(|&i| ranked.entries[i].doc_id.as_str())
                .collect()
        };
        (pick(&self.group1), pick(&self.group2), pick(&self.group3))
    }
}

/// Keeps all of group 1 and draws `n_h` / `n_s` positions uniformly without
/// replacement from groups 2 and 3. Sampled positions are returned ascending.
pub fn sample_groups<R: Rng + ?Sized>(
    ranked: &RankedList,
    config: &IterationConfig,
    rng: &mut R,
) -> Result<GroupSample> {
    if config.n_h > config.k2 || config.n_s > config.k3 {
        return Err(Error::Config(format!(
            "cannot sample {}/{} from groups of {}/{}",
            config.n_h, config.n_s, config.k2, config.k3
        )));
    }
    if ranked.len() < config.depth() {
        return Err(Error::Precondition(format!(
            "ranked list of {} is shorter than the {} grouped positions",
            ranked.len(),
            config.depth()
        )));
    }
    let mut draw = |offset: usize, size: usize, n: usize| {
        let mut v: Vec<usize> = sample(rng, size, n)
            .into_iter()
            .map(|i| offset + i)
            .collect();
        v.sort_unstable();
        v
    };
    let group2 = draw(config.k, config.k2, config.n_h);
    let group3 = draw(config.k + config.k2, config.k3, config.n_s);
    Ok(GroupSample {
        group1: (0..config.k).collect(),
        group2,
        group3,
    })
}

pub(crate) fn query_rng(seed: u64, qid: &str) -> ChaCha8Rng {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(qid.as_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&key))
}

/// Current student state needed for retrieval.
#[derive(Clone, Copy)]
pub struct StudentView<'a> {
    pub params: &'a EncoderParams,
    pub index: &'a DenseIndex,
    pub featurizer: &'a FeaturizerConfig,
}

/// Builds one example from a teacher-ordered pool and the student's ranks.
pub fn build_example(
    student_ranked: &RankedList,
    teacher_ranked: &RankedList,
    config: &IterationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingExample> {
    let labels = assign_pseudo_labels(teacher_ranked, config)?;
    let picked = sample_groups(teacher_ranked, config, rng)?;
    let student_rank: HashMap<&str, usize> = student_ranked
        .entries
        .iter()
        .map(|e| (e.doc_id.as_str(), e.rank))
        .collect();
    let docs = picked
        .group1
        .iter()
        .chain(&picked.group2)
        .chain(&picked.group3)
        .map(|&pos| {
            let e = &teacher_ranked.entries[pos];
            let retrieval_rank = *student_rank
                .get(e.doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(e.doc_id.clone()))?;
            Ok(ExampleDoc {
                doc_id: e.doc_id.clone(),
                label: labels[&e.doc_id],
                teacher_rank: e.rank,
                retrieval_rank,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainingExample {
        query_id: teacher_ranked.query_id.clone(),
        docs,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn generate_iteration_data(
    config: &IterationConfig,
    depth: usize,
    student: StudentView<'_>,
    teacher: &TeacherAdapter,
    queries: &QuerySet,
    corpus: &Corpus,
    seed: u64,
    difficulty: usize,
) -> Result<TrainingDataset> {
    config.validate(depth)?;
    student.index.ensure_fresh(student.params)?;
    let built: Vec<Option<TrainingExample>> = queries
        .items()
        .par_iter()
        .map(|q| {
            let ids = student.featurizer.featurize(&q.text, Role::Query);
            let q_vec = encode(student.params, &ids, Role::Query)?;
            let pool = student.index.search(&q_vec, depth, &q.id)?;
            if pool.len() < depth {
                return Ok(None);
            }
            let by_teacher = rerank(teacher, q, &pool, corpus)?;
            let mut rng = query_rng(seed, &q.id);
            build_example(&pool, &by_teacher, config, &mut rng).map(Some)
        })
        .collect::<Result<_>>()?;
    let dropped = built.iter().filter(|e| e.is_none()).count();
    if dropped > 0 {
        log::warn!(
            "iteration {difficulty}: dropped {dropped} of {} queries with fewer than {depth} candidates",
            queries.len()
        );
    }
    Ok(TrainingDataset {
        difficulty,
        config: *config,
        examples: built.into_iter().flatten().collect(),
        dropped,
    })
}

/// `%g`-style rendering with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        let s = format!("{:.5e}", x);
        let (mantissa, e) = s.split_once('e').unwrap();
        let e: i32 = e.parse().unwrap();
        return format!(
            "{}e{}{:02}",
            trim(mantissa.to_owned()),
            if e < 0 { '-' } else { '+' },
            e.abs()
        );
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    // rounding may have carried into a new leading digit
    let rounded: f64 = s.parse().unwrap();
    let exp2 = rounded.abs().log10().floor() as i32;
    if exp2 != exp && (-4..6).contains(&exp2) {
        return trim(format!("{:.*}", (5 - exp2).max(0) as usize, x));
    }
    trim(s)
}

pub fn write_dataset_to<W: Write>(ds: &TrainingDataset, out: &mut W) -> std::io::Result<()> {
    for ex in &ds.examples {
        for d in &ex.docs {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                ds.difficulty,
                ex.query_id,
                d.doc_id,
                format_sig6(d.label),
                d.teacher_rank,
                d.retrieval_rank
            )?;
        }
    }
    Ok(())
}

pub fn write_dataset(ds: &TrainingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset_to(ds, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

//! Seeded synthetic retrieval world.
//!
//! Topics sit on a ring. Each topic owns a disjoint vocabulary and all topics
//! share a background vocabulary; both are sampled Zipf-style. A document of
//! topic `t` draws its words mostly from `t`, less from ring neighbours (the
//! weight shrinking with distance) and the rest from the background. The
//! grade of a document for a query is `grade_levels - 1 - distance`, floored
//! at zero.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::data::{write_qrels, write_tsv_pairs, Corpus, Document, Qrels, Query, QuerySet};
use crate::error::{Error, Result};

pub const COLLECTION_FILE: &str = "collection.tsv";
pub const TRAIN_QUERIES_FILE: &str = "queries.train.tsv";
pub const EVAL_QUERIES_FILE: &str = "queries.eval.tsv";
pub const EVAL_QRELS_FILE: &str = "qrels.eval.txt";
pub const ORACLE_GRADES_FILE: &str = "oracle.grades.txt";

/// Share of document words drawn from the document's own topic.
const OWN_TOPIC_WEIGHT: f64 = 0.45;
/// Per-side neighbour weight at ring distance `d` is `OWN_TOPIC_WEIGHT * NEIGHBOUR_DECAY^d`.
const NEIGHBOUR_DECAY: f64 = 0.3;
/// Share of query words drawn from the query's topic; the rest is background.
const QUERY_TOPIC_WEIGHT: f64 = 0.8;
const ZIPF_EXPONENT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_topics: usize,
    pub docs_per_topic: usize,
    pub vocab_per_topic: usize,
    pub shared_vocab: usize,
    pub num_train_queries: usize,
    pub num_eval_queries: usize,
    pub doc_length: usize,
    pub query_length: usize,
    pub grade_levels: u32,
    /// Off-topic documents added to each eval query's judged pool.
    pub judged_others: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_topics: 50,
            docs_per_topic: 200,
            vocab_per_topic: 60,
            shared_vocab: 2000,
            num_train_queries: 500,
            num_eval_queries: 100,
            doc_length: 40,
            query_length: 6,
            grade_levels: 4,
            judged_others: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_topics", self.num_topics),
            ("docs_per_topic", self.docs_per_topic),
            ("vocab_per_topic", self.vocab_per_topic),
            ("shared_vocab", self.shared_vocab),
            ("num_train_queries", self.num_train_queries),
            ("num_eval_queries", self.num_eval_queries),
            ("doc_length", self.doc_length),
            ("query_length", self.query_length),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.grade_levels < 2 {
            return Err(Error::Config("grade_levels must be at least 2".into()));
        }
        Ok(())
    }

    pub fn num_docs(&self) -> usize {
        self.num_topics * self.docs_per_topic
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub corpus: Corpus,
    pub train_queries: QuerySet,
    pub eval_queries: QuerySet,
    /// Judgments for the eval queries over their judged pools.
    pub qrels: Qrels,
    /// Every positive grade for every query, train and eval.
    pub oracle_grades: Qrels,
    pub doc_topics: Vec<usize>,
    pub train_topics: Vec<usize>,
    pub eval_topics: Vec<usize>,
    pub grade_levels: u32,
    pub num_topics: usize,
}

pub fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

pub fn topic_grade(a: usize, b: usize, num_topics: usize, grade_levels: u32) -> u32 {
    (grade_levels as usize - 1).saturating_sub(ring_distance(a, b, num_topics)) as u32
}

impl World {
    pub fn grade(&self, query_topic: usize, doc_row: usize) -> u32 {
        topic_grade(
            query_topic,
            self.doc_topics[doc_row],
            self.num_topics,
            self.grade_levels,
        )
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tsv_pairs(&self.corpus, dir.join(COLLECTION_FILE))?;
        write_tsv_pairs(&self.train_queries, dir.join(TRAIN_QUERIES_FILE))?;
        write_tsv_pairs(&self.eval_queries, dir.join(EVAL_QUERIES_FILE))?;
        write_qrels(&self.qrels, dir.join(EVAL_QRELS_FILE))?;
        write_qrels(&self.oracle_grades, dir.join(ORACLE_GRADES_FILE))
    }
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(ZIPF_EXPONENT))).expect("n >= 1")
}

struct Sampler {
    topic_words: WeightedIndex<f64>,
    background: WeightedIndex<f64>,
}

impl Sampler {
    fn topic_word<R: Rng>(&self, topic: usize, rng: &mut R) -> String {
        format!("t{topic}w{}", self.topic_words.sample(rng))
    }

    fn background_word<R: Rng>(&self, rng: &mut R) -> String {
        format!("bg{}", self.background.sample(rng))
    }
}

/// Source mixture for a document of `topic`: `(Some(topic), weight)` entries
/// for topical sources and `(None, weight)` for the background.
fn doc_mixture(topic: usize, cfg: &SynthConfig) -> Vec<(Option<usize>, f64)> {
    let n = cfg.num_topics;
    let mut mix = vec![(Some(topic), OWN_TOPIC_WEIGHT)];
    for d in 1..(cfg.grade_levels as usize - 1) {
        let w = OWN_TOPIC_WEIGHT * NEIGHBOUR_DECAY.powi(d as i32);
        mix.push((Some((topic + d) % n), w));
        mix.push((Some((topic + n - d % n) % n), w));
    }
    let topical: f64 = mix.iter().map(|m| m.1).sum();
    mix.push((None, (1.0 - topical).max(0.0)));
    mix
}

fn generate_queries(
    cfg: &SynthConfig,
    count: usize,
    prefix: &str,
    sampler: &Sampler,
    rng: &mut ChaCha8Rng,
) -> Result<(QuerySet, Vec<usize>)> {
    let mut queries = Vec::with_capacity(count);
    let mut topics = Vec::with_capacity(count);
    for i in 0..count {
        let topic = rng.random_range(0..cfg.num_topics);
        let words: Vec<String> = (0..cfg.query_length)
            .map(|_| {
                if rng.random_bool(QUERY_TOPIC_WEIGHT) {
                    sampler.topic_word(topic, rng)
                } else {
                    sampler.background_word(rng)
                }
            })
            .collect();
        queries.push(Query::new(format!("{prefix}{i}"), words.join(" ")));
        topics.push(topic);
    }
    Ok((QuerySet::new(queries)?, topics))
}

pub fn generate_world(cfg: &SynthConfig) -> Result<World> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sampler = Sampler {
        topic_words: zipf(cfg.vocab_per_topic),
        background: zipf(cfg.shared_vocab),
    };

    let n_docs = cfg.num_docs();
    let mut doc_topics: Vec<usize> = (0..n_docs).map(|i| i / cfg.docs_per_topic).collect();
    doc_topics.shuffle(&mut rng);
    let mut docs = Vec::with_capacity(n_docs);
    for (i, &topic) in doc_topics.iter().enumerate() {
        let mix = doc_mixture(topic, cfg);
        let source = WeightedIndex::new(mix.iter().map(|m| m.1)).expect("positive mixture");
        let words: Vec<String> = (0..cfg.doc_length)
            .map(|_| match mix[source.sample(&mut rng)].0 {
                Some(t) => sampler.topic_word(t, &mut rng),
                None => sampler.background_word(&mut rng),
            })
            .collect();
        docs.push(Document::new(i.to_string(), words.join(" ")));
    }
    let corpus = Corpus::new(docs)?;

    let (train_queries, train_topics) =
        generate_queries(cfg, cfg.num_train_queries, "tq", &sampler, &mut rng)?;
    let (eval_queries, eval_topics) =
        generate_queries(cfg, cfg.num_eval_queries, "eq", &sampler, &mut rng)?;

    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_topics];
    for (row, &t) in doc_topics.iter().enumerate() {
        by_topic[t].push(row);
    }
    let grade =
        |qt: usize, row: usize| topic_grade(qt, doc_topics[row], cfg.num_topics, cfg.grade_levels);

    let mut oracle_grades = Qrels::new();
    let all_queries = train_queries
        .iter()
        .zip(&train_topics)
        .chain(eval_queries.iter().zip(&eval_topics));
    for (q, &qt) in all_queries {
        for (t, rows) in by_topic.iter().enumerate() {
            if topic_grade(qt, t, cfg.num_topics, cfg.grade_levels) == 0 {
                continue;
            }
            for &row in rows {
                oracle_grades.insert(&q.id, &corpus.items()[row].id, grade(qt, row))?;
            }
        }
    }

    let mut qrels = Qrels::new();
    for (q, &qt) in eval_queries.iter().zip(&eval_topics) {
        let others: Vec<usize> = (0..n_docs).filter(|&r| doc_topics[r] != qt).collect();
        let picked: Vec<usize> = others
            .choose_multiple(&mut rng, cfg.judged_others.min(others.len()))
            .copied()
            .collect();
        for &row in by_topic[qt].iter().chain(&picked) {
            qrels.insert(&q.id, &corpus.items()[row].id, grade(qt, row))?;
        }
        if qrels
            .for_query(&q.id)
            .is_none_or(|j| j.values().all(|&g| g == 0))
        {
            return Err(Error::Integrity(format!(
                "eval query {} has no relevant document",
                q.id
            )));
        }
    }

    Ok(World {
        corpus,
        train_queries,
        eval_queries,
        qrels,
        oracle_grades,
        doc_topics,
        train_topics,
        eval_topics,
        grade_levels: cfg.grade_levels,
        num_topics: cfg.num_topics,
    })
}

//! Re-ranking teachers. The student never sees teacher internals, only the
//! order a teacher imposes on a candidate pool.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Corpus, Document, Qrels, Query, RankedList};
use crate::encoder::{fnv1a64, words};
use crate::error::{Error, Result};

pub const BM25_K1: f64 = 0.9;
pub const BM25_B: f64 = 0.4;

/// Graded oracle with optional per-pair Gaussian noise. Pairs absent from the
/// grade table have grade 0.
#[derive(Debug, Clone)]
pub struct OracleTeacher {
    grades: Qrels,
    noise: f64,
    seed: u64,
}

impl OracleTeacher {
    pub fn new(grades: Qrels, noise: f64, seed: u64) -> Result<Self> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::Config(format!(
                "noise scale must be >= 0, got {noise}"
            )));
        }
        Ok(Self {
            grades,
            noise,
            seed,
        })
    }

    pub fn grades(&self) -> &Qrels {
        &self.grades
    }

    fn noise_for(&self, qid: &str, doc_id: &str) -> f64 {
        let mut key = Vec::with_capacity(8 + qid.len() + doc_id.len() + 1);
        key.extend_from_slice(&self.seed.to_le_bytes());
        key.extend_from_slice(qid.as_bytes());
        key.push(0x1f);
        key.extend_from_slice(doc_id.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
        StandardNormal.sample(&mut rng)
    }

    pub fn score(&self, qid: &str, doc_id: &str) -> f64 {
        let grade = f64::from(self.grades.grade(qid, doc_id).unwrap_or(0));
        if self.noise == 0.0 {
            grade
        } else {
            grade + self.noise * self.noise_for(qid, doc_id)
        }
    }
}

/// Scores exported from an external re-ranker.
#[derive(Debug, Clone, Default)]
pub struct FileTeacher {
    scores: HashMap<String, HashMap<String, f64>>,
}

impl FileTeacher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: &str, doc_id: &str, score: f64) -> Result<()> {
        let per_query = self.scores.entry(qid.to_owned()).or_default();
        if per_query.insert(doc_id.to_owned(), score).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate teacher score for query {qid}, document {doc_id}"
            )));
        }
        Ok(())
    }

    /// Reads `qid<TAB>docid<TAB>score` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    pub fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut t = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let score: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", fields[2])))?;
            if !score.is_finite() {
                return Err(Error::parse(path, i + 1, "score is not finite"));
            }
            t.insert(fields[0], fields[1], score)?;
        }
        Ok(t)
    }

    pub fn score(&self, qid: &str, doc_id: &str) -> Result<f64> {
        self.scores
            .get(qid)
            .and_then(|m| m.get(doc_id))
            .copied()
            .ok_or_else(|| Error::Lookup {
                qid: qid.to_owned(),
                doc_id: doc_id.to_owned(),
            })
    }
}

/// Okapi BM25 over an inverted index of the corpus words.
#[derive(Debug, Clone)]
pub struct Bm25 {
    k1: f64,
    b: f64,
    terms: HashMap<String, usize>,
    /// Per term: (document row, term frequency), rows ascending.
    postings: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    rows: HashMap<String, usize>,
    doc_ids: Vec<String>,
}

impl Bm25 {
    pub fn new(corpus: &Corpus) -> Self {
        Self::with_params(corpus, BM25_K1, BM25_B)
    }

    pub fn with_params(corpus: &Corpus, k1: f64, b: f64) -> Self {
        let mut terms: HashMap<String, usize> = HashMap::new();
        let mut postings: Vec<Vec<(u32, u32)>> = Vec::new();
        let mut doc_len = Vec::with_capacity(corpus.len());
        for (row, doc) in corpus.iter().enumerate() {
            let mut tf: HashMap<usize, u32> = HashMap::new();
            let mut len = 0u32;
            for w in words(&doc.text) {
                len += 1;
                let next = terms.len();
                let t = *terms.entry(w).or_insert(next);
                if t == postings.len() {
                    postings.push(Vec::new());
                }
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, f) in tf {
                postings[t].push((row as u32, f));
            }
            doc_len.push(len);
        }
        for p in &mut postings {
            p.sort_unstable();
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = if corpus.is_empty() || total == 0 {
            1.0
        } else {
            total as f64 / corpus.len() as f64
        };
        Self {
            k1,
            b,
            terms,
            postings,
            doc_len,
            avg_doc_len,
            rows: corpus
                .iter()
                .enumerate()
                .map(|(i, d)| (d.id.clone(), i))
                .collect(),
            doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
        }
    }

    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.num_docs() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, tf: u32, row: usize) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.b + self.b * f64::from(self.doc_len[row]) / self.avg_doc_len;
        tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    /// Sums over query word occurrences, so repeated query words count repeatedly.
    pub fn score_row(&self, query_text: &str, row: usize) -> f64 {
        let mut s = 0.0;
        for w in words(query_text) {
            let Some(&t) = self.terms.get(&w) else {
                continue;
            };
            let posting = &self.postings[t];
            if let Ok(i) = posting.binary_search_by_key(&(row as u32), |&(r, _)| r) {
                s += self.idf(posting.len()) * self.term_weight(posting[i].1, row);
            }
        }
        s
    }

    pub fn score(&self, query_text: &str, doc_id: &str) -> Result<f64> {
        let row = *self
            .rows
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_owned()))?;
        Ok(self.score_row(query_text, row))
    }

    /// Scores for every document row, accumulated term-at-a-time in the same
    /// order as [`Bm25::score_row`].
    pub fn score_all(&self, query_text: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.num_docs()];
        for w in words(query_text) {
            let Some(&t) = self.terms.get(&w) else {
                continue;
            };
            let posting = &self.postings[t];
            let idf = self.idf(posting.len());
            for &(row, tf) in posting {
                scores[row as usize] += idf * self.term_weight(tf, row as usize);
            }
        }
        scores
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }
}

#[derive(Debug, Clone)]
pub enum TeacherAdapter {
    Oracle(OracleTeacher),
    File(FileTeacher),
    Lexical(Bm25),
}

impl TeacherAdapter {
    pub fn kind(&self) -> &'static str {
        match self {
            TeacherAdapter::Oracle(_) => "oracle",
            TeacherAdapter::File(_) => "file",
            TeacherAdapter::Lexical(_) => "lexical",
        }
    }

    pub fn score_pair(&self, query: &Query, doc_id: &str) -> Result<f64> {
        match self {
            TeacherAdapter::Oracle(o) => Ok(o.score(&query.id, doc_id)),
            TeacherAdapter::File(f) => f.score(&query.id, doc_id),
            TeacherAdapter::Lexical(l) => l.score(&query.text, doc_id),
        }
    }

    fn needs_corpus(&self) -> bool {
        !matches!(self, TeacherAdapter::File(_))
    }
}

pub fn teacher_score(t: &TeacherAdapter, q: &Query, d: &Document) -> Result<f64> {
    t.score_pair(q, &d.id)
}

/// Reorders `candidates` by descending teacher score, ties by ascending doc id.
pub fn rerank(
    t: &TeacherAdapter,
    q: &Query,
    candidates: &RankedList,
    corpus: &Corpus,
) -> Result<RankedList> {
    let scored = candidates
        .entries
        .iter()
        .map(|e| {
            if t.needs_corpus() && corpus.get(&e.doc_id).is_none() {
                return Err(Error::UnknownDocument(e.doc_id.clone()));
            }
            Ok((e.doc_id.clone(), t.score_pair(q, &e.doc_id)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedList::from_scores(q.id.clone(), scored))
}

/// Ranks the whole corpus with the teacher and keeps the top `k`. The file
/// adapter ranks only the documents it holds scores for.
pub fn rank_corpus(t: &TeacherAdapter, q: &Query, corpus: &Corpus, k: usize) -> Result<RankedList> {
    let scored: Vec<(String, f64)> = match t {
        TeacherAdapter::Lexical(l) => l
            .doc_ids()
            .iter()
            .cloned()
            .zip(l.score_all(&q.text))
            .collect(),
        TeacherAdapter::File(f) => corpus
            .iter()
            .filter_map(|d| f.score(&q.id, &d.id).ok().map(|s| (d.id.clone(), s)))
            .collect(),
        TeacherAdapter::Oracle(o) => corpus
            .iter()
            .map(|d| (d.id.clone(), o.score(&q.id, &d.id)))
            .collect(),
    };
    let mut list = RankedList::from_scores(q.id.clone(), scored);
    list.truncate(k);
    Ok(list)
}

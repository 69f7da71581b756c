//! Identified texts, relevance judgments and ranked lists, plus the
//! MS MARCO / TREC text formats used to move them between tools.
//!
//! Collection and query files are `id<TAB>text` with exactly one tab.
//! Qrels are `qid 0 docid grade` with any whitespace between fields.
//! Run files are `qid Q0 docid rank score tag`, scores printed with six
//! decimals.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Anything stored in an id-keyed collection.
pub trait Identified {
    fn id(&self) -> &str;
    fn text(&self) -> &str;
    fn from_parts(id: String, text: String) -> Self;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

macro_rules! identified {
    ($ty:ty) => {
        impl Identified for $ty {
            fn id(&self) -> &str {
                &self.id
            }
            fn text(&self) -> &str {
                &self.text
            }
            fn from_parts(id: String, text: String) -> Self {
                Self { id, text }
            }
        }

        impl $ty {
            pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
                Self {
                    id: id.into(),
                    text: text.into(),
                }
            }
        }
    };
}

identified!(Document);
identified!(Query);

/// Ordered collection with unique, non-empty ids and O(1) lookup by id.
#[derive(Debug, Clone)]
pub struct Collection<T> {
    items: Vec<T>,
    positions: HashMap<String, usize>,
}

pub type Corpus = Collection<Document>;
pub type QuerySet = Collection<Query>;

impl<T: Identified> Collection<T> {
    pub fn new(items: Vec<T>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.id().is_empty() {
                return Err(Error::Integrity(format!("empty id at position {i}")));
            }
            if positions.insert(item.id().to_owned(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate id {}", item.id())));
            }
        }
        Ok(Self { items, positions })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.positions.get(id).map(|&i| &self.items[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }
}

impl<'a, T> IntoIterator for &'a Collection<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Graded judgments keyed by query then document. Query iteration order is sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    by_query: BTreeMap<String, HashMap<String, u32>>,
    len: usize,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Result<()> {
        let judged = self.by_query.entry(qid.to_owned()).or_default();
        if judged.insert(doc_id.to_owned(), grade).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate judgment for query {qid}, document {doc_id}"
            )));
        }
        self.len += 1;
        Ok(())
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> Option<u32> {
        self.by_query.get(qid).and_then(|j| j.get(doc_id)).copied()
    }

    pub fn for_query(&self, qid: &str) -> Option<&HashMap<String, u32>> {
        self.by_query.get(qid)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    /// Number of judged (query, document) pairs.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Judgments in (query id, doc id) order.
    pub fn iter_sorted(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.by_query.iter().flat_map(|(qid, judged)| {
            let mut docs: Vec<_> = judged.iter().collect();
            docs.sort_by(|a, b| a.0.cmp(b.0));
            docs.into_iter()
                .map(move |(d, &g)| (qid.as_str(), d.as_str(), g))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// One query's ranking: 1-based contiguous ranks, non-increasing scores, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

/// Descending score, ascending doc id on ties.
pub(crate) fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

impl RankedList {
    /// Validates an already-ranked list.
    pub fn new(query_id: impl Into<String>, entries: Vec<RankedEntry>) -> Result<Self> {
        let list = Self {
            query_id: query_id.into(),
            entries,
        };
        list.validate()?;
        Ok(list)
    }

    /// Sorts by descending score (ties by ascending doc id) and assigns ranks 1..n.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, f64)>) -> Self {
        scored.sort_by(|a, b| rank_order((&a.0, a.1), (&b.0, b.1)));
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RankedEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        Self {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::Integrity(format!(
                    "query {}: entry {} has rank {}, expected {}",
                    self.query_id,
                    i,
                    e.rank,
                    i + 1
                )));
            }
            if i > 0 && e.score > self.entries[i - 1].score {
                return Err(Error::Integrity(format!(
                    "query {}: score increases at rank {}",
                    self.query_id, e.rank
                )));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "query {}: duplicate document {}",
                    self.query_id, e.doc_id
                )));
            }
        }
        Ok(())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses `id<TAB>text` lines; exactly one tab per line.
pub fn read_tsv_pairs<T: Identified, R: BufRead>(reader: R, path: &Path) -> Result<Collection<T>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let mut fields = line.split('\t');
        let (id, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(text), None) => (id, text),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "expected exactly 2 tab-separated fields, found {}",
                        line.split('\t').count()
                    ),
                ))
            }
        };
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty id"));
        }
        items.push(T::from_parts(id.to_owned(), text.to_owned()));
    }
    Collection::new(items)
}

pub fn load_collection(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    read_tsv_pairs(open(path)?, path)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<QuerySet> {
    let path = path.as_ref();
    read_tsv_pairs(open(path)?, path)
}

pub fn write_tsv_pairs<'a, T: Identified + 'a>(
    items: impl IntoIterator<Item = &'a T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for item in items {
        if item.text().contains(['\t', '\n']) || item.id().contains(['\t', '\n']) {
            return Err(Error::Integrity(format!(
                "record {} contains a tab or newline",
                item.id()
            )));
        }
        writeln!(out, "{}\t{}", item.id(), item.text()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_qrels<R: BufRead>(reader: R, path: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 4 whitespace-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let grade: u32 = fields[3].parse().map_err(|_| {
            Error::parse(
                path,
                lineno,
                format!("grade {:?} is not a non-negative integer", fields[3]),
            )
        })?;
        qrels.insert(fields[0], fields[2], grade)?;
    }
    Ok(qrels)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    read_qrels(open(path)?, path)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (qid, doc_id, grade) in qrels.iter_sorted() {
        writeln!(out, "{qid} 0 {doc_id} {grade}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_run_to<W: Write>(runs: &[RankedList], tag: &str, out: &mut W) -> std::io::Result<()> {
    for list in runs {
        for e in &list.entries {
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.query_id, e.doc_id, e.rank, e.score, tag
            )?;
        }
    }
    Ok(())
}

pub fn write_run(runs: &[RankedList], tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for list in runs {
        list.validate()?;
    }
    let mut out = create(path)?;
    write_run_to(runs, tag, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a TREC run. Lists come back in first-appearance order of their query ids,
/// entries sorted by rank and validated.
pub fn read_run<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RankedList>> {
    let mut order: Vec<String> = Vec::new();
    let mut lists: HashMap<String, Vec<RankedEntry>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 6 whitespace-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score {:?}", fields[4])))?;
        let qid = fields[0];
        if !lists.contains_key(qid) {
            order.push(qid.to_owned());
        }
        lists.entry(qid.to_owned()).or_default().push(RankedEntry {
            doc_id: fields[2].to_owned(),
            score,
            rank,
        });
    }
    order
        .into_iter()
        .map(|qid| {
            let mut entries = lists.remove(&qid).unwrap_or_default();
            entries.sort_by_key(|e| e.rank);
            RankedList::new(qid, entries)
        })
        .collect()
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    read_run(open(path)?, path)
}

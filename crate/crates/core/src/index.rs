//! Exact inner-product top-k search over encoded documents.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{rank_order, Corpus, RankedEntry, RankedList};
use crate::encoder::{dot, encode, EmbeddingVector, EncoderParams, FeaturizerConfig, Role};
use crate::error::{Error, Result};

const INDEX_MAGIC: &[u8; 8] = b"CLDRDIX1";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    doc_ids: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
    /// `EncoderParams::version` of the weights the vectors came from.
    pub params_version: u64,
}

pub fn build_index(
    params: &EncoderParams,
    corpus: &Corpus,
    config: &FeaturizerConfig,
) -> Result<DenseIndex> {
    let tokens = tokenize_corpus(corpus, config);
    DenseIndex::from_tokens(params, corpus, &tokens)
}

/// Document-role bucket ids for every document, in corpus order.
pub fn tokenize_corpus(corpus: &Corpus, config: &FeaturizerConfig) -> Vec<Vec<u32>> {
    corpus
        .items()
        .par_iter()
        .map(|d| config.featurize(&d.text, Role::Document))
        .collect()
}

impl DenseIndex {
    /// Builds from pre-tokenized documents; `tokens[i]` belongs to the i-th corpus document.
    pub fn from_tokens(
        params: &EncoderParams,
        corpus: &Corpus,
        tokens: &[Vec<u32>],
    ) -> Result<Self> {
        if tokens.len() != corpus.len() {
            return Err(Error::Shape {
                expected: corpus.len(),
                actual: tokens.len(),
            });
        }
        let dim = params.dim();
        let rows: Vec<Vec<f64>> = tokens
            .par_iter()
            .map(|ids| encode(params, ids, Role::Document).map(|v| v.0))
            .collect::<Result<_>>()?;
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            vectors.extend_from_slice(&r);
        }
        Ok(DenseIndex {
            doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
            vectors,
            dim,
            params_version: params.version,
        })
    }
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    /// Fails unless the index was built from exactly this parameter state.
    pub fn ensure_fresh(&self, params: &EncoderParams) -> Result<()> {
        if self.params_version != params.version {
            return Err(Error::StaleIndex {
                index: self.params_version,
                params: params.version,
            });
        }
        Ok(())
    }

    pub fn scores(&self, q_vec: &EmbeddingVector) -> Result<Vec<f64>> {
        if q_vec.dim() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: q_vec.dim(),
            });
        }
        Ok(self
            .vectors
            .chunks_exact(self.dim.max(1))
            .take(self.len())
            .map(|row| dot(&q_vec.0, row))
            .collect())
    }

    /// Top `k` by descending dot product, ties by ascending doc id.
    pub fn search(&self, q_vec: &EmbeddingVector, k: usize, query_id: &str) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        let scores = self.scores(q_vec)?;
        let cmp = |&a: &usize, &b: &usize| {
            rank_order(
                (self.doc_ids[a].as_str(), scores[a]),
                (self.doc_ids[b].as_str(), scores[b]),
            )
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        let n = k.min(order.len());
        if n < order.len() && n > 0 {
            order.select_nth_unstable_by(n - 1, cmp);
            order.truncate(n);
        }
        order.sort_unstable_by(cmp);
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(i, row)| RankedEntry {
                doc_id: self.doc_ids[row].clone(),
                score: scores[row],
                rank: i + 1,
            })
            .collect();
        Ok(RankedList {
            query_id: query_id.to_owned(),
            entries,
        })
    }

    /// Dump as `CLDRDIX1`, doc count, dim, params version, length-prefixed
    /// ids, then the row-major f32 matrix. All integers little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.params_version.to_le_bytes());
        for id in &self.doc_ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for &v in &self.vectors {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint {
            path: path.to_owned(),
            message: m.to_owned(),
        };
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated index file"));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(8)? != INDEX_MAGIC {
            return Err(bad("missing CLDRDIX1 header"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let n = u32_at(take(4)?);
        let dim = u32_at(take(4)?);
        let params_version = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut doc_ids = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32_at(take(4)?);
            let id = std::str::from_utf8(take(len)?).map_err(|_| bad("doc id is not UTF-8"))?;
            doc_ids.push(id.to_owned());
        }
        let raw = take(n * dim * 4)?;
        let vectors = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if !cur.is_empty() {
            return Err(bad("trailing bytes after matrix"));
        }
        Ok(Self {
            doc_ids,
            vectors,
            dim,
            params_version,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Index over explicit vectors; all rows must share one length.
    pub fn from_vectors(
        doc_ids: Vec<String>,
        rows: &[Vec<f64>],
        params_version: u64,
    ) -> Result<Self> {
        if doc_ids.len() != rows.len() {
            return Err(Error::Shape {
                expected: doc_ids.len(),
                actual: rows.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape {
                expected: dim,
                actual: r.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = doc_ids.iter().find(|d| !seen.insert(d.as_str())) {
            return Err(Error::Integrity(format!("duplicate document id {dup}")));
        }
        Ok(Self {
            doc_ids,
            vectors: rows.concat(),
            dim,
            params_version,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_rows(doc_ids: Vec<String>, rows: &[Vec<f64>]) -> Self {
        Self::from_vectors(doc_ids, rows, 0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(index: &DenseIndex, q: &[f64]) -> Vec<(String, usize)> {
        let mut all: Vec<(String, f64)> = (0..index.len())
            .map(|i| {
                let s: f64 = q.iter().zip(index.vector(i)).map(|(a, b)| a * b).sum();
                (index.doc_ids()[i].clone(), s)
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.into_iter()
            .enumerate()
            .map(|(i, (d, _))| (d, i + 1))
            .collect()
    }

    #[test]
    fn empty_corpus_gives_empty_index() {
        let p = EncoderParams::init(32, 4, false, 0).unwrap();
        let c = Corpus::new(vec![]).unwrap();
        let idx = build_index(&p, &c, &FeaturizerConfig::default()).unwrap();
        assert!(idx.is_empty());
        let res = idx.search(&EmbeddingVector::zeros(4), 5, "q").unwrap();
        assert!(res.is_empty());
    }

    #[test]
    fn single_doc_row_matches_encode() {
        let cfg = FeaturizerConfig {
            vocab_size: 64,
            ..Default::default()
        };
        let p = EncoderParams::init(64, 4, false, 9).unwrap();
        let c = Corpus::new(vec![Document::new("d", "some words here")]).unwrap();
        let idx = build_index(&p, &c, &cfg).unwrap();
        let expect = encode(
            &p,
            &cfg.featurize("some words here", Role::Document),
            Role::Document,
        )
        .unwrap();
        assert_eq!(idx.vector(0), expect.values());
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let cfg = FeaturizerConfig {
            vocab_size: 128,
            ..Default::default()
        };
        let p = EncoderParams::init(128, 8, false, 2).unwrap();
        let docs = (0..50)
            .map(|i| Document::new(format!("{i}"), format!("w{} w{} w{}", i % 7, i % 11, i)))
            .collect();
        let c = Corpus::new(docs).unwrap();
        let a = build_index(&p, &c, &cfg).unwrap();
        let b = build_index(&p, &c, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a, b);
    }

    #[test]
    fn k_larger_than_corpus_returns_all() {
        let idx = DenseIndex::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![1.0], vec![3.0], vec![2.0]],
        );
        let r = idx.search(&EmbeddingVector(vec![1.0]), 10, "q").unwrap();
        let ids: Vec<_> = r.doc_ids().collect();
        assert_eq!(ids, ["b", "c", "a"]);
        r.validate().unwrap();
    }

    #[test]
    fn identical_vectors_tie_break_by_id() {
        let idx = DenseIndex::from_rows(
            vec!["z".into(), "m".into()],
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
        );
        let r = idx
            .search(&EmbeddingVector(vec![0.3, 0.2]), 2, "q")
            .unwrap();
        let ids: Vec<_> = r.doc_ids().collect();
        assert_eq!(ids, ["m", "z"]);
    }

    #[test]
    fn zero_k_is_rejected() {
        let idx = DenseIndex::from_rows(vec!["a".into()], &[vec![1.0]]);
        assert!(idx.search(&EmbeddingVector(vec![1.0]), 0, "q").is_err());
    }

    #[test]
    fn random_100_docs_top10_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let idx = DenseIndex::from_rows((0..100).map(|i| format!("d{i}")).collect(), &rows);
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got: Vec<(String, usize)> = idx
            .search(&EmbeddingVector(q.clone()), 10, "q")
            .unwrap()
            .entries
            .into_iter()
            .map(|e| (e.doc_id, e.rank))
            .collect();
        let mut want = brute_force(&idx, &q);
        want.truncate(10);
        assert_eq!(got, want);
    }

    #[test]
    fn stale_detection() {
        let mut p = EncoderParams::init(16, 2, false, 0).unwrap();
        let idx = build_index(
            &p,
            &Corpus::new(vec![]).unwrap(),
            &FeaturizerConfig::default(),
        )
        .unwrap();
        idx.ensure_fresh(&p).unwrap();
        p.version += 1;
        assert!(matches!(
            idx.ensure_fresh(&p),
            Err(Error::StaleIndex { .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let idx = DenseIndex::from_rows(
            vec!["a".into(), "bb".into()],
            &[vec![0.5, -1.0], vec![2.0, 0.25]],
        );
        let back = DenseIndex::from_bytes(&idx.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, idx);
    }
}

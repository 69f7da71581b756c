//! The student: a hashing featurizer, mean-pooled embedding bags for
//! queries and documents, and inner-product scoring.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_VOCAB_SIZE: usize = 32768;
pub const DEFAULT_MAX_QUERY_TOKENS: usize = 30;
pub const DEFAULT_MAX_DOC_TOKENS: usize = 256;
pub const DEFAULT_DIM: usize = 64;

const CHECKPOINT_MAGIC: &[u8; 6] = b"CLDRD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturizerConfig {
    pub vocab_size: usize,
    pub max_query_tokens: usize,
    pub max_doc_tokens: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            max_query_tokens: DEFAULT_MAX_QUERY_TOKENS,
            max_doc_tokens: DEFAULT_MAX_DOC_TOKENS,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        if self.max_query_tokens == 0 || self.max_doc_tokens == 0 {
            return Err(Error::Config("token caps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cap(&self, role: Role) -> usize {
        match role {
            Role::Query => self.max_query_tokens,
            Role::Document => self.max_doc_tokens,
        }
    }

    /// Tokenize with the cap that belongs to `role`.
    pub fn featurize(&self, text: &str, role: Role) -> Vec<u32> {
        tokenize(text, self.cap(role), self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Query,
    Document,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Lowercased words: maximal alphanumeric runs.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub fn bucket(word: &str, vocab_size: usize) -> u32 {
    (fnv1a64(word.as_bytes()) % vocab_size as u64) as u32
}

pub fn tokenize(text: &str, cap: usize, config: &FeaturizerConfig) -> Vec<u32> {
    words(text)
        .take(cap)
        .map(|w| bucket(&w, config.vocab_size))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn score(q_vec: &EmbeddingVector, d_vec: &EmbeddingVector) -> Result<f64> {
    if q_vec.dim() != d_vec.dim() {
        return Err(Error::Shape {
            expected: q_vec.dim(),
            actual: d_vec.dim(),
        });
    }
    Ok(dot(&q_vec.0, &d_vec.0))
}

/// One or two `vocab_size x dim` row-major tables. A single table means the
/// query and document encoders share storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTables {
    pub vocab_size: usize,
    pub dim: usize,
    pub tables: Vec<Vec<f64>>,
}

impl ParamTables {
    pub fn zeros(vocab_size: usize, dim: usize, shared: bool) -> Self {
        let n = if shared { 1 } else { 2 };
        Self {
            vocab_size,
            dim,
            tables: vec![vec![0.0; vocab_size * dim]; n],
        }
    }

    pub fn zeros_like(other: &ParamTables) -> Self {
        Self::zeros(other.vocab_size, other.dim, other.shared())
    }

    pub fn shared(&self) -> bool {
        self.tables.len() == 1
    }

    pub fn table_index(&self, role: Role) -> usize {
        match role {
            Role::Document if !self.shared() => 1,
            _ => 0,
        }
    }

    pub fn row(&self, role: Role, id: usize) -> &[f64] {
        &self.tables[self.table_index(role)][id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, role: Role, id: usize) -> &mut [f64] {
        let t = self.table_index(role);
        let dim = self.dim;
        &mut self.tables[t][id * dim..(id + 1) * dim]
    }

    pub fn same_shape(&self, other: &ParamTables) -> bool {
        self.vocab_size == other.vocab_size
            && self.dim == other.dim
            && self.tables.len() == other.tables.len()
    }

    pub fn all_finite(&self) -> bool {
        self.tables.iter().flatten().all(|v| v.is_finite())
    }
}

/// Trainable student parameters. `version` increases with every optimizer step
/// so indexes can detect that they were built from older weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub tables: ParamTables,
    pub version: u64,
}

impl EncoderParams {
    /// Uniform in [-1/sqrt(dim), 1/sqrt(dim)], drawn in f32 so a checkpoint of
    /// the initial state is lossless.
    pub fn init(vocab_size: usize, dim: usize, shared: bool, seed: u64) -> Result<Self> {
        if vocab_size < 2 || dim == 0 {
            return Err(Error::Config(format!(
                "invalid encoder shape: vocab_size {vocab_size}, dim {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f32).sqrt();
        let mut tables = ParamTables::zeros(vocab_size, dim, shared);
        for table in &mut tables.tables {
            for v in table.iter_mut() {
                *v = f64::from(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self { tables, version: 0 })
    }

    pub fn dim(&self) -> usize {
        self.tables.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.tables.vocab_size
    }

    pub fn shared(&self) -> bool {
        self.tables.shared()
    }

    pub fn encode(&self, ids: &[u32], role: Role) -> Result<EmbeddingVector> {
        encode(self, ids, role)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let t = &self.tables;
        let mut out = Vec::with_capacity(15 + t.tables.len() * t.vocab_size * t.dim * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(t.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(t.dim as u32).to_le_bytes());
        out.push(u8::from(t.shared()));
        for table in &t.tables {
            for &v in table {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: &str| Error::Checkpoint {
            path: path.to_owned(),
            message: message.to_owned(),
        };
        if bytes.len() < 15 || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(bad("missing CLDRD1 header"));
        }
        let vocab_size = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let shared = match bytes[14] {
            0 => false,
            1 => true,
            _ => return Err(bad("shared flag must be 0 or 1")),
        };
        if vocab_size < 2 || dim == 0 {
            return Err(bad("invalid shape in header"));
        }
        let mut tables = ParamTables::zeros(vocab_size, dim, shared);
        let expected = 15 + tables.tables.len() * vocab_size * dim * 4;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut floats = bytes[15..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
        for table in &mut tables.tables {
            for v in table.iter_mut() {
                *v = floats.next().unwrap();
            }
        }
        if !tables.all_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(Self { tables, version: 0 })
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
}

fn check_ids(ids: &[u32], vocab_size: usize) -> Result<()> {
    match ids.iter().find(|&&i| i as usize >= vocab_size) {
        Some(&id) => Err(Error::Bounds {
            id: id as usize,
            limit: vocab_size,
        }),
        None => Ok(()),
    }
}

/// Mean of the role's embedding rows; empty input gives the zero vector.
pub fn encode(params: &EncoderParams, ids: &[u32], role: Role) -> Result<EmbeddingVector> {
    check_ids(ids, params.vocab_size())?;
    let mut out = vec![0.0; params.dim()];
    if ids.is_empty() {
        return Ok(EmbeddingVector(out));
    }
    for &id in ids {
        for (o, v) in out.iter_mut().zip(params.tables.row(role, id as usize)) {
            *o += v;
        }
    }
    let n = ids.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(EmbeddingVector(out))
}

/// Gradient buffer shaped like the parameters, tracking which rows were written
/// so clearing and optimizer updates stay proportional to the rows in use.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub values: ParamTables,
    touched: Vec<Vec<bool>>,
    touched_rows: Vec<Vec<u32>>,
}

impl Gradients {
    pub fn for_params(params: &EncoderParams) -> Self {
        let values = ParamTables::zeros_like(&params.tables);
        let n = values.tables.len();
        Self {
            touched: vec![vec![false; values.vocab_size]; n],
            touched_rows: vec![Vec::new(); n],
            values,
        }
    }

    pub(crate) fn row_for_update(&mut self, role: Role, id: u32) -> &mut [f64] {
        let t = self.values.table_index(role);
        if !self.touched[t][id as usize] {
            self.touched[t][id as usize] = true;
            self.touched_rows[t].push(id);
        }
        self.values.row_mut(role, id as usize)
    }

    /// Rows written since the last clear, per table, in first-touch order.
    pub fn touched_rows(&self) -> &[Vec<u32>] {
        &self.touched_rows
    }

    pub fn is_zero(&self) -> bool {
        self.values.tables.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn clear(&mut self) {
        let dim = self.values.dim;
        for (t, rows) in self.touched_rows.iter_mut().enumerate() {
            for &r in rows.iter() {
                let r = r as usize;
                self.values.tables[t][r * dim..(r + 1) * dim].fill(0.0);
                self.touched[t][r] = false;
            }
            rows.clear();
        }
    }

    pub fn all_finite(&self) -> bool {
        let dim = self.values.dim;
        self.touched_rows.iter().enumerate().all(|(t, rows)| {
            rows.iter().all(|&r| {
                let r = r as usize;
                self.values.tables[t][r * dim..(r + 1) * dim]
                    .iter()
                    .all(|v| v.is_finite())
            })
        })
    }
}

/// Adds `upstream * d score(q, d) / d row` for every query and document row.
pub fn accumulate_score_gradient(
    params: &EncoderParams,
    q_ids: &[u32],
    d_ids: &[u32],
    upstream: f64,
    grads: &mut Gradients,
) -> Result<()> {
    if !grads.values.same_shape(&params.tables) {
        return Err(Error::Shape {
            expected: params.tables.tables.len() * params.vocab_size() * params.dim(),
            actual: grads.values.tables.len() * grads.values.vocab_size * grads.values.dim,
        });
    }
    let q_vec = encode(params, q_ids, Role::Query)?;
    let d_vec = encode(params, d_ids, Role::Document)?;
    accumulate_with_vectors(q_ids, &q_vec.0, d_ids, &d_vec.0, upstream, grads);
    Ok(())
}

/// Same as [`accumulate_score_gradient`] with both pooled vectors precomputed
/// and ids already bounds-checked.
pub(crate) fn accumulate_with_vectors(
    q_ids: &[u32],
    q_vec: &[f64],
    d_ids: &[u32],
    d_vec: &[f64],
    upstream: f64,
    grads: &mut Gradients,
) {
    if upstream == 0.0 {
        return;
    }
    if !q_ids.is_empty() {
        let scale = upstream / q_ids.len() as f64;
        for &id in q_ids {
            let row = grads.row_for_update(Role::Query, id);
            for (g, d) in row.iter_mut().zip(d_vec) {
                *g += scale * d;
            }
        }
    }
    if !d_ids.is_empty() {
        let scale = upstream / d_ids.len() as f64;
        for &id in d_ids {
            let row = grads.row_for_update(Role::Document, id);
            for (g, q) in row.iter_mut().zip(q_vec) {
                *g += scale * q;
            }
        }
    }
}

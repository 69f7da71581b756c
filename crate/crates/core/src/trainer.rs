//! The outer curriculum loop: per iteration, rebuild the index from the
//! current student, regenerate training data, and run Adam under a linear
//! warmup/decay schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curriculum::{
    generate_iteration_data, CurriculumSchedule, StudentView, TrainingDataset,
};
use crate::data::{Corpus, Qrels, QuerySet, RankedList};
use crate::encoder::{
    accumulate_with_vectors, encode, fnv1a64, EncoderParams, FeaturizerConfig, Gradients,
    ParamTables, Role,
};
use crate::error::{Error, Result};
use crate::eval::mrr_at_k;
use crate::index::{tokenize_corpus, DenseIndex};
use crate::loss::PairSet;
use crate::teacher::TeacherAdapter;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const PAPER_WARMUP_STEPS: usize = 4000;
pub const DEFAULT_BATCH_SIZE: usize = 8;

/// Adam moments. Rows that have never received a gradient keep zero moments
/// and would get a zero update, so only rows seen so far are visited.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: ParamTables,
    pub second_moment: ParamTables,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    active: Vec<Vec<bool>>,
    active_rows: Vec<Vec<u32>>,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let m = ParamTables::zeros_like(&params.tables);
        let n = m.tables.len();
        Self {
            second_moment: m.clone(),
            first_moment: m,
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            active: vec![vec![false; params.vocab_size()]; n],
            active_rows: vec![Vec::new(); n],
        }
    }
}

pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !grads.values.same_shape(&params.tables) || !state.first_moment.same_shape(&params.tables) {
        return Err(Error::Shape {
            expected: params.tables.tables.len() * params.vocab_size() * params.dim(),
            actual: grads.values.tables.len() * grads.values.vocab_size * grads.values.dim,
        });
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient entry".into()));
    }
    for (t, rows) in grads.touched_rows().iter().enumerate() {
        for &r in rows {
            if !state.active[t][r as usize] {
                state.active[t][r as usize] = true;
                state.active_rows[t].push(r);
            }
        }
    }
    state.step_count += 1;
    let step = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bias1 = 1.0 - b1.powi(step);
    let bias2 = 1.0 - b2.powi(step);
    let dim = params.dim();
    for (t, rows) in state.active_rows.iter().enumerate() {
        let p = &mut params.tables.tables[t];
        let m = &mut state.first_moment.tables[t];
        let v = &mut state.second_moment.tables[t];
        let g = &grads.values.tables[t];
        for &r in rows {
            let span = r as usize * dim..(r as usize + 1) * dim;
            for i in span {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                if !p[i].is_finite() {
                    return Err(Error::Numeric(format!(
                        "parameter became non-finite at step {step}"
                    )));
                }
            }
        }
    }
    params.version += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub peak_lr: f64,
}

impl LrSchedule {
    /// Warmup of `min(4000, total / 10)` steps.
    pub fn desk_scale(total_steps: usize, peak_lr: f64) -> Self {
        Self {
            warmup_steps: PAPER_WARMUP_STEPS.min(total_steps / 10),
            total_steps,
            peak_lr,
        }
    }
}

/// Linear ramp from 0 to peak over the warmup, then linear decay to 0 at `total_steps`.
pub fn lr_at(step: usize, sched: &LrSchedule) -> Result<f64> {
    if step > sched.total_steps {
        return Err(Error::Domain(format!(
            "step {step} is past the schedule end {}",
            sched.total_steps
        )));
    }
    if sched.warmup_steps > sched.total_steps {
        return Err(Error::Config("warmup longer than the schedule".into()));
    }
    let peak = sched.peak_lr;
    if step < sched.warmup_steps {
        return Ok(peak * step as f64 / sched.warmup_steps as f64);
    }
    let decay = sched.total_steps - sched.warmup_steps;
    if decay == 0 {
        return Ok(peak);
    }
    Ok(peak * (sched.total_steps - step) as f64 / decay as f64)
}

/// Held-out queries scored with MRR@10 after every iteration.
#[derive(Clone, Copy)]
pub struct Validation<'a> {
    pub queries: &'a QuerySet,
    pub qrels: &'a Qrels,
    pub rel_threshold: u32,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub featurizer: FeaturizerConfig,
    pub batch_size: usize,
    pub seed: u64,
    /// Fixed warmup length; `None` uses `min(4000, 10% of the iteration's steps)`.
    pub warmup_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            featurizer: FeaturizerConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            warmup_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub delta: usize,
    pub k: usize,
    pub epoch_steps: usize,
    pub steps: usize,
    pub examples: usize,
    pub dropped: usize,
    pub train_loss_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mrr10: Option<f64>,
}

impl IterationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub params: EncoderParams,
    pub records: Vec<IterationRecord>,
    /// Validation MRR@10 of the student before any training.
    pub initial_val_mrr10: Option<f64>,
}

/// Called after each iteration with its record, the updated student and the
/// data it was trained on.
pub type IterationHook<'h> =
    dyn FnMut(&IterationRecord, &EncoderParams, &TrainingDataset) -> Result<()> + 'h;

struct PreparedExample {
    query_ids: Vec<u32>,
    doc_rows: Vec<usize>,
    pairs: PairSet,
}

fn derive_seed(seed: u64, tag: &str, a: u64, b: u64) -> u64 {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(tag.as_bytes());
    key.extend_from_slice(&a.to_le_bytes());
    key.extend_from_slice(&b.to_le_bytes());
    fnv1a64(&key)
}

/// Retrieves the top `k` for every query with the given index.
pub fn retrieve_all(
    params: &EncoderParams,
    index: &DenseIndex,
    queries: &QuerySet,
    featurizer: &FeaturizerConfig,
    k: usize,
) -> Result<Vec<RankedList>> {
    queries
        .items()
        .par_iter()
        .map(|q| {
            let q_vec = encode(
                params,
                &featurizer.featurize(&q.text, Role::Query),
                Role::Query,
            )?;
            index.search(&q_vec, k, &q.id)
        })
        .collect()
}

fn validate_mrr(
    params: &EncoderParams,
    doc_tokens: &[Vec<u32>],
    corpus: &Corpus,
    featurizer: &FeaturizerConfig,
    validation: Option<Validation<'_>>,
) -> Result<Option<f64>> {
    let Some(v) = validation else { return Ok(None) };
    let index = DenseIndex::from_tokens(params, corpus, doc_tokens)?;
    let run = retrieve_all(params, &index, v.queries, featurizer, 10)?;
    Ok(Some(mrr_at_k(&run, v.qrels, 10, v.rel_threshold)?.mean))
}

#[allow(clippy::too_many_arguments)]
pub fn run_curriculum(
    schedule: &CurriculumSchedule,
    init: EncoderParams,
    teacher: &TeacherAdapter,
    queries: &QuerySet,
    corpus: &Corpus,
    options: &TrainOptions,
    validation: Option<Validation<'_>>,
    hook: &mut IterationHook<'_>,
) -> Result<CurriculumOutcome> {
    schedule.validate()?;
    options.featurizer.validate()?;
    if options.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if init.vocab_size() != options.featurizer.vocab_size {
        return Err(Error::Config(format!(
            "encoder has {} buckets but the featurizer hashes into {}",
            init.vocab_size(),
            options.featurizer.vocab_size
        )));
    }
    let featurizer = &options.featurizer;
    let doc_tokens = tokenize_corpus(corpus, featurizer);
    let mut params = init;
    let initial_val_mrr10 = validate_mrr(&params, &doc_tokens, corpus, featurizer, validation)?;
    if let Some(m) = initial_val_mrr10 {
        log::info!("initial student: val MRR@10 {m:.4}");
    }

    let mut grads = Gradients::for_params(&params);
    let mut records = Vec::new();
    for (pos, config) in schedule.ordered().iter().enumerate() {
        let delta = pos + 1;
        let index = DenseIndex::from_tokens(&params, corpus, &doc_tokens)?;
        let dataset = generate_iteration_data(
            config,
            schedule.depth,
            StudentView {
                params: &params,
                index: &index,
                featurizer,
            },
            teacher,
            queries,
            corpus,
            derive_seed(options.seed, "data", delta as u64, 0),
            delta,
        )?;
        drop(index);

        let prepared = dataset
            .examples
            .iter()
            .map(|ex| {
                let q = queries
                    .get(&ex.query_id)
                    .ok_or_else(|| Error::Integrity(format!("unknown query {}", ex.query_id)))?;
                let doc_rows = ex
                    .docs
                    .iter()
                    .map(|d| {
                        corpus
                            .position(&d.doc_id)
                            .ok_or_else(|| Error::UnknownDocument(d.doc_id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PreparedExample {
                    query_ids: featurizer.featurize(&q.text, Role::Query),
                    doc_rows,
                    pairs: PairSet::from_parts(&ex.labels(), &ex.retrieval_ranks())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let epoch_steps = prepared.len().div_ceil(options.batch_size);
        let total_steps = epoch_steps * config.epochs;
        let sched = match options.warmup_steps {
            Some(w) => LrSchedule {
                warmup_steps: w.min(total_steps),
                total_steps,
                peak_lr: config.peak_lr,
            },
            None => LrSchedule::desk_scale(total_steps, config.peak_lr),
        };
        let mut adam = AdamState::new(&params);
        let mut loss_sum = 0.0;
        let mut step = 0usize;
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        for epoch in 0..config.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                options.seed,
                "shuffle",
                delta as u64,
                epoch as u64,
            ));
            order.shuffle(&mut rng);
            for batch in order.chunks(options.batch_size) {
                grads.clear();
                let scale = 1.0 / batch.len() as f64;
                let mut batch_loss = 0.0;
                for &i in batch {
                    let ex = &prepared[i];
                    let q_vec = encode(&params, &ex.query_ids, Role::Query)?;
                    let d_vecs = ex
                        .doc_rows
                        .iter()
                        .map(|&r| encode(&params, &doc_tokens[r], Role::Document))
                        .collect::<Result<Vec<_>>>()?;
                    let scores: Vec<f64> = d_vecs
                        .iter()
                        .map(|d| crate::encoder::dot(&q_vec.0, &d.0))
                        .collect();
                    let (loss, g) = ex.pairs.loss_and_grad(&scores);
                    batch_loss += loss * scale;
                    for ((&r, d_vec), gi) in ex.doc_rows.iter().zip(&d_vecs).zip(g) {
                        accumulate_with_vectors(
                            &ex.query_ids,
                            &q_vec.0,
                            &doc_tokens[r],
                            &d_vec.0,
                            gi * scale,
                            &mut grads,
                        );
                    }
                }
                if !batch_loss.is_finite() {
                    let ids: Vec<&str> = batch
                        .iter()
                        .map(|&i| dataset.examples[i].query_id.as_str())
                        .collect();
                    return Err(Error::Numeric(format!("non-finite loss in batch {ids:?}")));
                }
                step += 1;
                let lr = lr_at(step, &sched)?;
                adam_step(&mut params, &grads, &mut adam, lr).map_err(|e| match e {
                    Error::Numeric(m) => {
                        let ids: Vec<&str> = batch
                            .iter()
                            .map(|&i| dataset.examples[i].query_id.as_str())
                            .collect();
                        Error::Numeric(format!("{m} (batch {ids:?})"))
                    }
                    other => other,
                })?;
                loss_sum += batch_loss;
            }
        }

        let val_mrr10 = validate_mrr(&params, &doc_tokens, corpus, featurizer, validation)?;
        let record = IterationRecord {
            delta,
            k: config.k,
            epoch_steps,
            steps: step,
            examples: dataset.examples.len(),
            dropped: dataset.dropped,
            train_loss_mean: if step > 0 {
                loss_sum / step as f64
            } else {
                0.0
            },
            val_mrr10,
        };
        log::info!(
            "iteration {delta} (K={}): {} examples, {} steps, loss {:.5}{}",
            config.k,
            record.examples,
            step,
            record.train_loss_mean,
            val_mrr10.map_or(String::new(), |m| format!(", val MRR@10 {m:.4}"))
        );
        hook(&record, &params, &dataset)?;
        records.push(record);
    }
    Ok(CurriculumOutcome {
        params,
        records,
        initial_val_mrr10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(w: usize, t: usize, p: f64) -> LrSchedule {
        LrSchedule {
            warmup_steps: w,
            total_steps: t,
            peak_lr: p,
        }
    }

    #[test]
    fn lr_endpoints_and_midpoint() {
        let s = sched(4000, 12000, 7e-6);
        assert_eq!(lr_at(4000, &s).unwrap(), 7e-6);
        assert_eq!(lr_at(0, &s).unwrap(), 0.0);
        assert_eq!(lr_at(12000, &s).unwrap(), 0.0);
        assert!((lr_at(8000, &s).unwrap() - 3.5e-6).abs() < 1e-18);
        assert!((lr_at(2000, &s).unwrap() - 3.5e-6).abs() < 1e-18);
        assert!(lr_at(12001, &s).is_err());
    }

    #[test]
    fn lr_without_warmup_starts_at_peak() {
        let s = sched(0, 10, 1.0);
        assert_eq!(lr_at(0, &s).unwrap(), 1.0);
        assert_eq!(lr_at(5, &s).unwrap(), 0.5);
    }

    #[test]
    fn desk_scale_warmup() {
        assert_eq!(LrSchedule::desk_scale(1000, 1.0).warmup_steps, 100);
        assert_eq!(LrSchedule::desk_scale(100_000, 1.0).warmup_steps, 4000);
    }

    fn scalar_params() -> EncoderParams {
        let mut p = EncoderParams::init(2, 1, true, 0).unwrap();
        p.tables.tables[0] = vec![1.0, 1.0];
        p
    }

    fn grad_of(p: &EncoderParams, g: f64) -> Gradients {
        let mut grads = Gradients::for_params(p);
        grads.row_for_update(Role::Query, 0)[0] = g;
        grads
    }

    #[test]
    fn adam_zero_lr_keeps_params_but_updates_moments() {
        let mut p = scalar_params();
        let before = p.tables.clone();
        let g = grad_of(&p, 0.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.0).unwrap();
        assert_eq!(p.tables, before);
        assert_eq!(st.step_count, 1);
        assert!((st.first_moment.tables[0][0] - 0.05).abs() < 1e-15);
        assert!((st.second_moment.tables[0][0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let mut p = scalar_params();
        let g = grad_of(&p, 0.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        let update = 1.0 - p.tables.tables[0][0];
        assert!((update - 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
        assert!((update - 0.1).abs() < 1e-8);
        assert_eq!(p.tables.tables[0][1], 1.0, "untouched row moved");
        assert_eq!(p.version, 1);
    }

    #[test]
    fn adam_constant_gradient_ratio_stays_below_one() {
        // Hand trace, constant g: m_hat = g and v_hat = g^2 after both steps,
        // so update / lr = |g| / (|g| + eps) on each step.
        let g = 0.5;
        let lr = 0.01;
        let mut p = scalar_params();
        let mut st = AdamState::new(&p);
        let mut ratios = Vec::new();
        for _ in 0..2 {
            let before = p.tables.tables[0][0];
            let gr = grad_of(&p, g);
            adam_step(&mut p, &gr, &mut st, lr).unwrap();
            ratios.push((before - p.tables.tables[0][0]) / lr);
        }
        let want = g / (g + 1e-8);
        for r in ratios {
            assert!(r < 1.0);
            assert!((r - want).abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn adam_moments_decay_on_rows_without_new_gradient() {
        let mut p = scalar_params();
        let mut st = AdamState::new(&p);
        let first = grad_of(&p, 0.5);
        adam_step(&mut p, &first, &mut st, 0.01).unwrap();
        let before = p.tables.tables[0][0];
        let empty = Gradients::for_params(&p);
        adam_step(&mut p, &empty, &mut st, 0.01).unwrap();
        assert!(
            p.tables.tables[0][0] < before,
            "momentum should keep moving the row"
        );
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = scalar_params();
        let mut g = grad_of(&p, 0.5);
        g.values.tables[0][0] = f64::NAN;
        let mut st = AdamState::new(&p);
        let before = p.clone();
        assert!(matches!(
            adam_step(&mut p, &g, &mut st, 0.1),
            Err(Error::Numeric(_))
        ));
        assert_eq!(p, before);
    }
}

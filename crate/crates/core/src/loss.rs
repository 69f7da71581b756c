//! Pairwise-weighted listwise distillation loss.
//!
//! For every ordered pair `(d, d')` whose pseudo-labels satisfy
//! `label(d) > label(d')` the loss adds
//! `w(d, d') * ln(1 + exp(s(d') - s(d)))` with
//! `w(d, d') = |1/rank(d) - 1/rank(d')|`, where ranks are the student
//! retrieval ranks frozen into the training example. The weight is a constant
//! with respect to the scores.

use crate::curriculum::TrainingExample;
use crate::error::{Error, Result};

/// Which groups the two documents of a pair come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairType {
    /// Both from group 1.
    WithinTop,
    /// Group 1 over group 2.
    TopOverHard,
    /// Group 1 over group 3.
    TopOverRest,
    /// Group 2 over group 3.
    HardOverRest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    /// Index of the document with the larger label.
    pub better: usize,
    pub worse: usize,
    pub weight: f64,
    pub kind: PairType,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
}

pub fn pair_weight(rank_d: usize, rank_d2: usize) -> Result<f64> {
    if rank_d == 0 || rank_d2 == 0 {
        return Err(Error::Domain("ranks are 1-based".into()));
    }
    Ok((1.0 / rank_d as f64 - 1.0 / rank_d2 as f64).abs())
}

fn classify(better: f64, worse: f64) -> PairType {
    match (better > 0.0, worse > 0.0, worse == 0.0) {
        (true, true, _) => PairType::WithinTop,
        (true, false, true) => PairType::TopOverHard,
        (true, false, false) => PairType::TopOverRest,
        _ => PairType::HardOverRest,
    }
}

/// ln(1 + e^x), linear above 30 and exponential below -30.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl PairSet {
    /// All pairs with a strictly larger label on the first document.
    pub fn from_parts(labels: &[f64], ranks: &[usize]) -> Result<Self> {
        if labels.len() != ranks.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                actual: ranks.len(),
            });
        }
        let mut pairs = Vec::new();
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li > lj {
                    pairs.push(Pair {
                        better: i,
                        worse: j,
                        weight: pair_weight(ranks[i], ranks[j])?,
                        kind: classify(li, lj),
                    });
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, kind: PairType) -> usize {
        self.pairs.iter().filter(|p| p.kind == kind).count()
    }

    fn check(&self, scores: &[f64], n: usize) -> Result<()> {
        if scores.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: scores.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, scores: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.weight * softplus(scores[p.worse] - scores[p.better]))
            .sum()
    }

    /// Loss and d loss / d scores in one pass.
    pub fn loss_and_grad(&self, scores: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; scores.len()];
        let mut loss = 0.0;
        for p in &self.pairs {
            let gap = scores[p.worse] - scores[p.better];
            loss += p.weight * softplus(gap);
            let g = p.weight * sigmoid(gap);
            grad[p.worse] += g;
            grad[p.better] -= g;
        }
        (loss, grad)
    }
}

pub fn enumerate_pairs(example: &TrainingExample) -> Result<PairSet> {
    PairSet::from_parts(&example.labels(), &example.retrieval_ranks())
}

pub fn kd_loss(scores: &[f64], example: &TrainingExample) -> Result<f64> {
    let pairs = enumerate_pairs(example)?;
    pairs.check(scores, example.docs.len())?;
    Ok(pairs.loss(scores))
}

pub fn kd_loss_grad(scores: &[f64], example: &TrainingExample) -> Result<Vec<f64>> {
    let pairs = enumerate_pairs(example)?;
    pairs.check(scores, example.docs.len())?;
    Ok(pairs.loss_and_grad(scores).1)
}

/// Slice-level loss and gradient for callers without a `TrainingExample`.
pub fn kd_loss_and_grad(
    scores: &[f64],
    labels: &[f64],
    ranks: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let pairs = PairSet::from_parts(labels, ranks)?;
    pairs.check(scores, labels.len())?;
    Ok(pairs.loss_and_grad(scores))
}

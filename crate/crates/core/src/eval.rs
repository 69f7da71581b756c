//! Rank-based IR metrics and the paired t-test used to compare two runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use statrs::function::beta::beta_reg;

use crate::data::{Qrels, RankedList};
use crate::error::{Error, Result};

pub const DEFAULT_REL_THRESHOLD: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// `grade / log2(rank + 1)`.
    #[default]
    Linear,
    /// `(2^grade - 1) / log2(rank + 1)`.
    Exponential,
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub cutoff: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricReport {
    fn from_values(metric: &str, cutoff: usize, per_query: BTreeMap<String, f64>) -> Result<Self> {
        if per_query.is_empty() {
            return Err(Error::Eval(format!(
                "{metric}@{cutoff}: no query has a relevant judged document"
            )));
        }
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        Ok(Self {
            metric: metric.to_owned(),
            cutoff,
            per_query,
            mean,
        })
    }

    /// `metric<TAB>cutoff<TAB>mean`
    pub fn summary_line(&self) -> String {
        format!("{}\t{}\t{:.6}", self.metric, self.cutoff, self.mean)
    }

    /// `metric<TAB>cutoff<TAB>qid<TAB>value` per query.
    pub fn per_query_lines(&self) -> String {
        let mut s = String::new();
        for (q, v) in &self.per_query {
            let _ = writeln!(s, "{}\t{}\t{}\t{:.6}", self.metric, self.cutoff, q, v);
        }
        s
    }
}

/// Run lists that have judgments. Queries without judgments are skipped with a
/// warning; no overlap at all is an error.
fn judged_lists<'a>(
    run: &'a [RankedList],
    qrels: &'a Qrels,
) -> Result<Vec<(&'a RankedList, &'a HashMap<String, u32>)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for list in run {
        if !seen.insert(list.query_id.as_str()) {
            return Err(Error::Eval(format!(
                "query {} appears twice in the run",
                list.query_id
            )));
        }
        match qrels.for_query(&list.query_id) {
            Some(j) => out.push((list, j)),
            None => skipped += 1,
        }
    }
    if out.is_empty() {
        return Err(Error::Eval("run and qrels share no query ids".into()));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} run queries without judgments");
    }
    Ok(out)
}

fn grade(judged: &HashMap<String, u32>, doc_id: &str) -> u32 {
    judged.get(doc_id).copied().unwrap_or(0)
}

pub fn mrr_at_k(
    run: &[RankedList],
    qrels: &Qrels,
    k: usize,
    rel_threshold: u32,
) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    for (list, judged) in judged_lists(run, qrels)? {
        if !judged.values().any(|&g| g >= rel_threshold) {
            continue;
        }
        let rr = list
            .entries
            .iter()
            .filter(|e| e.rank <= k)
            .find(|e| grade(judged, &e.doc_id) >= rel_threshold)
            .map_or(0.0, |e| 1.0 / e.rank as f64);
        per_query.insert(list.query_id.clone(), rr);
    }
    MetricReport::from_values("mrr", k, per_query)
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(run: &[RankedList], qrels: &Qrels, k: usize, gain: Gain) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    for (list, judged) in judged_lists(run, qrels)? {
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        if ideal.is_empty() {
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain.of(g) / discount(i + 1))
            .sum();
        let dcg: f64 = list
            .entries
            .iter()
            .filter(|e| e.rank <= k)
            .map(|e| gain.of(grade(judged, &e.doc_id)) / discount(e.rank))
            .sum();
        per_query.insert(list.query_id.clone(), dcg / idcg);
    }
    MetricReport::from_values("ndcg", k, per_query)
}

/// Average precision truncated at `k`, normalised by all judged-relevant documents.
pub fn map_at_k(
    run: &[RankedList],
    qrels: &Qrels,
    k: usize,
    rel_threshold: u32,
) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    for (list, judged) in judged_lists(run, qrels)? {
        let total_relevant = judged.values().filter(|&&g| g >= rel_threshold).count();
        if total_relevant == 0 {
            continue;
        }
        let mut hits = 0usize;
        let mut sum = 0.0;
        for e in list.entries.iter().filter(|e| e.rank <= k) {
            if grade(judged, &e.doc_id) >= rel_threshold {
                hits += 1;
                sum += hits as f64 / e.rank as f64;
            }
        }
        per_query.insert(list.query_id.clone(), sum / total_relevant as f64);
    }
    MetricReport::from_values("map", k, per_query)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub t: f64,
    pub p: f64,
}

/// Two-tailed paired t-test on aligned samples.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Eval(format!(
            "t-test needs at least 2 pairs, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest { n, t: 0.0, p: 1.0 });
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        // constant non-zero difference: the statistic diverges
        return Ok(TTest {
            n,
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
        });
    }
    let t = mean / (sd / nf.sqrt());
    let df = nf - 1.0;
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest { n, t, p })
}

/// Aligns two reports on their common queries and tests `a - b`.
pub fn compare_reports(a: &MetricReport, b: &MetricReport) -> Result<TTest> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .per_query
        .iter()
        .filter_map(|(q, &x)| b.per_query.get(q).map(|&y| (x, y)))
        .unzip();
    paired_t_test(&xs, &ys)
}

/// The three standard reports: MRR@10, nDCG@10, MAP@1000.
pub fn standard_reports(
    run: &[RankedList],
    qrels: &Qrels,
    rel_threshold: u32,
    gain: Gain,
) -> Result<Vec<MetricReport>> {
    Ok(vec![
        mrr_at_k(run, qrels, 10, rel_threshold)?,
        ndcg_at_k(run, qrels, 10, gain)?,
        map_at_k(run, qrels, 1000, rel_threshold)?,
    ])
}

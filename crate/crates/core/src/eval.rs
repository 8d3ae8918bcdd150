//! Top-k ranking metrics with binary relevance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::factor::{recommend_topk, FactorModel};
use crate::sparse::SparseBinaryMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Recall,
    Precision,
    Ndcg,
    Map,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Recall, Metric::Precision, Metric::Ndcg, Metric::Map];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Ndcg => "ndcg",
            Metric::Map => "map",
        }
    }

    pub fn compute(self, recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
        match self {
            Metric::Recall => recall_at_k(recs, truth, k),
            Metric::Precision => precision_at_k(recs, truth, k),
            Metric::Ndcg => ndcg_at_k(recs, truth, k),
            Metric::Map => map_at_k(recs, truth, k),
        }
    }
}

fn check(truth: &BTreeSet<usize>, k: usize) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "cutoff must be at least 1".into(),
        });
    }
    Ok(())
}

fn hits(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> usize {
    recs.iter().take(k).filter(|i| truth.contains(i)).count()
}

/// `|top-k ∩ truth| / |truth|`
pub fn recall_at_k(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    check(truth, k)?;
    Ok(hits(recs, truth, k) as f64 / truth.len() as f64)
}

/// `|top-k ∩ truth| / k`; the denominator stays `k` for short lists.
pub fn precision_at_k(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    check(truth, k)?;
    Ok(hits(recs, truth, k) as f64 / k as f64)
}

pub fn ndcg_at_k(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    check(truth, k)?;
    let discount = |rank: usize| 1.0 / libm::log2(rank as f64 + 1.0);
    let dcg: f64 = recs
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(truth.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// Average precision at `k`, normalized by `min(k, |truth|)`.
pub fn map_at_k(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    check(truth, k)?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (r, i) in recs.iter().take(k).enumerate() {
        if truth.contains(i) {
            found += 1;
            sum += found as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / k.min(truth.len()) as f64)
}

/// Metric averages over the evaluated users.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub values: BTreeMap<(Metric, usize), f64>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
}

impl EvalReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<f64> {
        self.values.get(&(metric, k)).copied()
    }
}

/// Ranks every unconsumed item for each test user and averages all four
/// metrics at each cutoff.
///
/// `test_truth` maps user index to held-out item indices. User indices at or
/// beyond the model's user count stand for users unseen in training, and
/// item indices at or beyond its item count for unseen items: such users are
/// skipped, and such items stay in the truth set but can never be hit. Users
/// whose training row is empty are skipped as well. Users with an empty truth
/// set are ignored entirely.
pub fn evaluate_model(
    model: &FactorModel,
    train: &SparseBinaryMatrix,
    test_truth: &BTreeMap<usize, BTreeSet<usize>>,
    cutoffs: &[usize],
) -> Result<EvalReport> {
    if train.rows() != model.n_users() || train.cols() != model.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "training matrix is {}x{}, model is {}x{}",
            train.rows(),
            train.cols(),
            model.n_users(),
            model.n_items()
        )));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::InvalidParameter {
            name: "cutoffs",
            reason: "need at least one positive cutoff".into(),
        });
    }
    let depth = cutoffs.iter().copied().max().unwrap_or(0);
    let mut report = EvalReport::default();
    let mut sums: BTreeMap<(Metric, usize), f64> = BTreeMap::new();
    for (&u, truth) in test_truth {
        if truth.is_empty() {
            continue;
        }
        if u >= model.n_users() || train.row(u).is_empty() {
            report.users_skipped += 1;
            continue;
        }
        let recs: Vec<usize> = recommend_topk(model, u, depth, train.row(u))?
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        for &k in cutoffs {
            for metric in Metric::ALL {
                *sums.entry((metric, k)).or_default() += metric.compute(&recs, truth, k)?;
            }
        }
        report.users_evaluated += 1;
    }
    if report.users_evaluated == 0 {
        return Err(Error::NoEvaluableUsers);
    }
    let n = report.users_evaluated as f64;
    report.values = sums.into_iter().map(|(key, s)| (key, s / n)).collect();
    Ok(report)
}

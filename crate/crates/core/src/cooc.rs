//! Session segmentation, item co-occurrence counting and SPPMI construction.
//!
//! Counts are kept as the upper triangle `(i, j)` with `i < j`; lookups are
//! symmetric. Marginals default to the row sums of the co-occurrence table,
//! so `#(i) = sum_j #(i, j)` and `D = sum_i #(i)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{InteractionLog, Vocab};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseBinaryMatrix};

/// An item visit at a point in time, for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedItem {
    pub timestamp: u64,
    pub item: usize,
}

/// A maximal run of one user's events with gaps below the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: usize,
    /// Distinct items, ascending.
    pub items: Vec<usize>,
    pub start: u64,
    pub end: u64,
}

/// Splits one user's time-sorted events into sessions. Consecutive events
/// share a session iff their timestamps differ by strictly less than
/// `gap_seconds`.
pub fn segment_sessions(
    user: usize,
    events: &[TimedItem],
    gap_seconds: u64,
) -> Result<Vec<Session>> {
    if gap_seconds == 0 {
        return Err(Error::InvalidParameter {
            name: "gap_seconds",
            reason: "must be positive".into(),
        });
    }
    if let Some(p) = events
        .windows(2)
        .position(|w| w[1].timestamp < w[0].timestamp)
    {
        return Err(Error::Unsorted(p + 1));
    }
    let mut sessions = Vec::new();
    let mut start = 0;
    for end in 1..=events.len() {
        let boundary =
            end == events.len() || events[end].timestamp - events[end - 1].timestamp >= gap_seconds;
        if boundary {
            let run = &events[start..end];
            let mut items: Vec<usize> = run.iter().map(|e| e.item).collect();
            items.sort_unstable();
            items.dedup();
            sessions.push(Session {
                user,
                items,
                start: run[0].timestamp,
                end: run[run.len() - 1].timestamp,
            });
            start = end;
        }
    }
    Ok(sessions)
}

/// Groups `log` by user, orders each user's events by time (stable for equal
/// timestamps) and segments them. Out-of-vocabulary events are ignored.
/// Sessions come out ordered by user index, then by time.
pub fn sessions_from_log(
    log: &InteractionLog,
    vocab: &Vocab,
    gap_seconds: u64,
) -> Result<Vec<Session>> {
    let mut per_user: Vec<Vec<TimedItem>> = vec![Vec::new(); vocab.n_users()];
    for e in log {
        if let (Some(u), Some(i)) = (vocab.user_index(&e.user), vocab.item_index(&e.item)) {
            per_user[u].push(TimedItem {
                timestamp: e.timestamp,
                item: i,
            });
        }
    }
    let mut sessions = Vec::new();
    for (u, events) in per_user.iter_mut().enumerate() {
        events.sort_by_key(|e| e.timestamp);
        sessions.extend(segment_sessions(u, events, gap_seconds)?);
    }
    Ok(sessions)
}

/// Symmetric item co-occurrence counts with marginals and pair total `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocCounts {
    dim: usize,
    upper: BTreeMap<(usize, usize), u64>,
    marginals: Vec<u64>,
    total: u64,
}

impl CoocCounts {
    pub fn new(dim: usize) -> Self {
        CoocCounts {
            dim,
            upper: BTreeMap::new(),
            marginals: vec![0; dim],
            total: 0,
        }
    }

    /// Counts every unordered pair of distinct items in `context` once.
    pub fn add_context(&mut self, context: &[usize]) -> Result<()> {
        let mut items = context.to_vec();
        items.sort_unstable();
        items.dedup();
        if let Some(&bad) = items.last().filter(|&&i| i >= self.dim) {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: bad,
                size: self.dim,
            });
        }
        for (a, &i) in items.iter().enumerate() {
            for &j in &items[a + 1..] {
                *self.upper.entry((i, j)).or_default() += 1;
            }
        }
        let degree = items.len().saturating_sub(1) as u64;
        for &i in &items {
            self.marginals[i] += degree;
        }
        self.total += degree * items.len() as u64;
        Ok(())
    }

    /// Adds another partial count table. Merging is commutative.
    pub fn merge(&mut self, other: &CoocCounts) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "merging {} items into {}",
                other.dim, self.dim
            )));
        }
        for (&k, &c) in &other.upper {
            *self.upper.entry(k).or_default() += c;
        }
        for (m, o) in self.marginals.iter_mut().zip(&other.marginals) {
            *m += o;
        }
        self.total += other.total;
        Ok(())
    }

    /// Replaces the co-occurrence marginals with per-item consumption
    /// counts. `D` keeps its meaning as the number of item-context pairs.
    pub fn with_consumption_marginals(mut self, consumption: Vec<u64>) -> Result<Self> {
        if consumption.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "{} consumption counts for {} items",
                consumption.len(),
                self.dim
            )));
        }
        self.marginals = consumption;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.upper.get(&key).copied().unwrap_or(0)
    }

    pub fn marginal(&self, i: usize) -> u64 {
        self.marginals[i]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Nonzero pairs with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.upper.iter().map(|(&k, &c)| (k, c))
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }
}

/// Co-occurrence where each session's distinct items form one context.
pub fn count_session_cooc(sessions: &[Session], n_items: usize) -> Result<CoocCounts> {
    let mut counts = CoocCounts::new(n_items);
    for s in sessions {
        counts.add_context(&s.items)?;
    }
    Ok(counts)
}

/// Co-occurrence where each user's whole history forms one context.
pub fn count_user_cooc(r: &SparseBinaryMatrix) -> CoocCounts {
    let mut counts = CoocCounts::new(r.cols());
    for u in 0..r.rows() {
        counts
            .add_context(r.row(u))
            .expect("binary matrix columns are in range");
    }
    counts
}

/// Pointwise mutual information over the observed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiMatrix {
    dim: usize,
    upper: BTreeMap<(usize, usize), f64>,
}

impl PmiMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `None` for pairs that never co-occur (PMI of minus infinity).
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.upper.get(&key).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.upper.iter().map(|(&k, &v)| (k, v))
    }
}

/// `ln(#(i,j) * D / (#(i) * #(j)))` for every pair with a positive count.
pub fn pmi_matrix(counts: &CoocCounts) -> Result<PmiMatrix> {
    if counts.total == 0 {
        return Err(Error::NoCooccurrence);
    }
    let d = counts.total as f64;
    let mut upper = BTreeMap::new();
    for ((i, j), c) in counts.pairs() {
        let (mi, mj) = (counts.marginals[i], counts.marginals[j]);
        if mi == 0 || mj == 0 {
            return Err(Error::InvalidParameter {
                name: "marginals",
                reason: format!("zero marginal for co-occurring pair ({i}, {j})"),
            });
        }
        let p = libm::log(c as f64 * d / (mi as f64 * mj as f64));
        upper.insert((i, j), p);
    }
    Ok(PmiMatrix {
        dim: counts.dim,
        upper,
    })
}

/// Shifted positive PMI: `max(pmi - ln k, 0)`, storing only positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct SppmiMatrix {
    dim: usize,
    shift_k: u32,
    upper: BTreeMap<(usize, usize), f64>,
}

impl SppmiMatrix {
    /// Rebuilds a matrix from upper-triangle entries, e.g. a loaded dump.
    pub fn from_entries<I>(dim: usize, shift_k: u32, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), f64)>,
    {
        let mut upper = BTreeMap::new();
        for ((i, j), v) in entries {
            if i >= j || j >= dim {
                return Err(Error::InvalidParameter {
                    name: "sppmi entry",
                    reason: format!("({i}, {j}) is not an upper-triangle position below {dim}"),
                });
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "sppmi entry",
                    reason: format!("value {v} at ({i}, {j}) is not positive"),
                });
            }
            if upper.insert((i, j), v).is_some() {
                return Err(Error::InvalidParameter {
                    name: "sppmi entry",
                    reason: format!("duplicate ({i}, {j})"),
                });
            }
        }
        Ok(SppmiMatrix {
            dim,
            shift_k,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shift_k(&self) -> u32 {
        self.shift_k
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.upper.get(&key).copied()
    }

    /// Stored entries with `i < j`.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.upper.iter().map(|(&k, &v)| (k, v))
    }

    /// Number of stored upper-triangle entries.
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    /// Full symmetric matrix (both triangles) for training.
    pub fn to_csr(&self) -> CsrMatrix {
        let triplets = self
            .upper
            .iter()
            .flat_map(|(&(i, j), &v)| [(i, j, v), (j, i, v)]);
        CsrMatrix::from_triplets(self.dim, self.dim, triplets)
            .expect("entries validated on construction")
    }
}

pub fn sppmi_matrix(pmi: &PmiMatrix, shift_k: u32) -> Result<SppmiMatrix> {
    if shift_k < 1 {
        return Err(Error::InvalidParameter {
            name: "shift_k",
            reason: "must be at least 1".into(),
        });
    }
    let shift = libm::log(shift_k as f64);
    let upper = pmi
        .entries()
        .filter_map(|(k, p)| {
            let v = p - shift;
            (v > 0.0).then_some((k, v))
        })
        .collect();
    Ok(SppmiMatrix {
        dim: pmi.dim,
        shift_k,
        upper,
    })
}

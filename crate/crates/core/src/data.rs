//! Raw events, id vocabularies, binarization and holdout splitting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseBinaryMatrix;

/// One interaction: a user touched an item at `timestamp` (epoch seconds).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub user: String,
    pub item: String,
    pub timestamp: u64,
}

impl Event {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: u64) -> Result<Self> {
        let user = user.into();
        let item = item.into();
        if user.is_empty() {
            return Err(Error::InvalidParameter {
                name: "user",
                reason: "empty identifier".to_string(),
            });
        }
        if item.is_empty() {
            return Err(Error::InvalidParameter {
                name: "item",
                reason: "empty identifier".to_string(),
            });
        }
        Ok(Event {
            user,
            item,
            timestamp,
        })
    }
}

/// Events in arrival order. Repeat visits are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    events: Vec<Event>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Event> {
        self.events.iter()
    }
}

impl From<Vec<Event>> for InteractionLog {
    fn from(events: Vec<Event>) -> Self {
        InteractionLog { events }
    }
}

impl FromIterator<Event> for InteractionLog {
    fn from_iter<T: IntoIterator<Item = Event>>(iter: T) -> Self {
        InteractionLog {
            events: iter.into_iter().collect(),
        }
    }
}

impl IntoIterator for InteractionLog {
    type Item = Event;
    type IntoIter = alloc::vec::IntoIter<Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.into_iter()
    }
}

impl<'a> IntoIterator for &'a InteractionLog {
    type Item = &'a Event;
    type IntoIter = core::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// Dense index assignment for raw user and item identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: BTreeMap<String, usize>,
    item_lookup: BTreeMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from explicit id lists; position is the index.
    pub fn from_ids(users: Vec<String>, items: Vec<String>) -> Result<Self> {
        let user_lookup = index_ids(&users, "user")?;
        let item_lookup = index_ids(&items, "item")?;
        Ok(Vocab {
            users,
            items,
            user_lookup,
            item_lookup,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    pub fn user_id(&self, index: usize) -> Option<&str> {
        self.users.get(index).map(String::as_str)
    }

    pub fn item_id(&self, index: usize) -> Option<&str> {
        self.items.get(index).map(String::as_str)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    fn intern_user(&mut self, id: &str) {
        if !self.user_lookup.contains_key(id) {
            self.user_lookup.insert(id.to_string(), self.users.len());
            self.users.push(id.to_string());
        }
    }

    fn intern_item(&mut self, id: &str) {
        if !self.item_lookup.contains_key(id) {
            self.item_lookup.insert(id.to_string(), self.items.len());
            self.items.push(id.to_string());
        }
    }
}

fn index_ids(ids: &[String], what: &'static str) -> Result<BTreeMap<String, usize>> {
    let mut lookup = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        if lookup.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidParameter {
                name: what,
                reason: format!("duplicate identifier {id:?}"),
            });
        }
    }
    Ok(lookup)
}

/// Builds a vocabulary over users with at least `min_user_events` events and
/// items with at least `min_item_events` events. Only events whose user and
/// item both survive contribute ids; indices follow first appearance.
pub fn build_vocab(
    log: &InteractionLog,
    min_user_events: usize,
    min_item_events: usize,
) -> Result<Vocab> {
    if log.is_empty() {
        return Err(Error::EmptyInput("interaction log"));
    }
    let mut user_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut item_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in log {
        *user_counts.entry(&e.user).or_default() += 1;
        *item_counts.entry(&e.item).or_default() += 1;
    }
    if user_counts.values().all(|&c| c < min_user_events) {
        return Err(Error::FilteredOut {
            what: "users",
            threshold: "min_user_events",
            value: min_user_events,
        });
    }
    if item_counts.values().all(|&c| c < min_item_events) {
        return Err(Error::FilteredOut {
            what: "items",
            threshold: "min_item_events",
            value: min_item_events,
        });
    }
    let mut vocab = Vocab::default();
    for e in log {
        if user_counts[e.user.as_str()] >= min_user_events
            && item_counts[e.item.as_str()] >= min_item_events
        {
            vocab.intern_user(&e.user);
            vocab.intern_item(&e.item);
        }
    }
    if vocab.users.is_empty() {
        // each threshold alone keeps something but no event survives both
        return Err(Error::FilteredOut {
            what: "events",
            threshold: "min_user_events and min_item_events",
            value: min_user_events.max(min_item_events),
        });
    }
    Ok(vocab)
}

/// Collapses repeat interactions into a binary matrix. Events whose user or
/// item is missing from `vocab` are dropped; the second value counts them.
pub fn binarize(log: &InteractionLog, vocab: &Vocab) -> (SparseBinaryMatrix, usize) {
    let mut skipped = 0;
    let mut positions = Vec::with_capacity(log.len());
    for e in log {
        match (vocab.user_index(&e.user), vocab.item_index(&e.item)) {
            (Some(u), Some(i)) => positions.push((u, i)),
            _ => skipped += 1,
        }
    }
    let matrix = SparseBinaryMatrix::from_positions(vocab.n_users(), vocab.n_items(), positions)
        .expect("vocab indices are in range");
    (matrix, skipped)
}

/// Train/test partition of a log at the event level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPair {
    pub train: InteractionLog,
    pub test: InteractionLog,
    pub seed: u64,
}

/// Uniform random event-level split. `round(ratio * len)` events go to the
/// training side; both sides keep the input's arrival order.
pub fn split_holdout(log: &InteractionLog, ratio: f64, seed: u64) -> Result<SplitPair> {
    if log.is_empty() {
        return Err(Error::EmptyInput("interaction log"));
    }
    let (train, test) = partition(log, ratio, seed, "ratio")?;
    Ok(SplitPair { train, test, seed })
}

/// Moves a `fraction` of the training events into a validation log.
/// Returns `(remaining_train, validation)`. A zero fraction is a no-op.
pub fn carve_validation(
    train: &InteractionLog,
    fraction: f64,
    seed: u64,
) -> Result<(InteractionLog, InteractionLog)> {
    if fraction == 0.0 {
        return Ok((train.clone(), InteractionLog::new()));
    }
    let (validation, rest) = partition(train, fraction, seed, "validation fraction")?;
    Ok((rest, validation))
}

fn partition(
    log: &InteractionLog,
    ratio: f64,
    seed: u64,
    name: &'static str,
) -> Result<(InteractionLog, InteractionLog)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("{ratio} is outside (0, 1)"),
        });
    }
    let n = log.len();
    let n_first = libm::round(ratio * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_first = alloc::vec![false; n];
    for &i in &order[..n_first] {
        in_first[i] = true;
    }
    let mut first = InteractionLog::new();
    let mut second = InteractionLog::new();
    for (e, &take) in log.iter().zip(&in_first) {
        if take {
            first.push(e.clone());
        } else {
            second.push(e.clone());
        }
    }
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ev(u: &str, i: &str, t: u64) -> Event {
        Event::new(u, i, t).unwrap()
    }

    #[test]
    fn event_rejects_empty_ids() {
        assert!(Event::new("", "x", 0).is_err());
        assert!(Event::new("u", "", 0).is_err());
    }

    #[test]
    fn vocab_without_filtering() {
        let log: InteractionLog = vec![
            ev("a", "x", 0),
            ev("b", "y", 1),
            ev("a", "y", 2),
            ev("b", "x", 3),
        ]
        .into();
        let v = build_vocab(&log, 0, 0).unwrap();
        assert_eq!((v.n_users(), v.n_items()), (2, 2));
        assert_eq!(v.user_index("a"), Some(0));
        assert_eq!(v.item_index("y"), Some(1));
    }

    #[test]
    fn vocab_user_threshold_eliminates_everything() {
        let log: InteractionLog = vec![
            ev("a", "x", 0),
            ev("b", "y", 1),
            ev("a", "y", 2),
            ev("b", "x", 3),
        ]
        .into();
        let err = build_vocab(&log, 3, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::FilteredOut {
                threshold: "min_user_events",
                ..
            }
        ));
    }

    #[test]
    fn vocab_item_threshold() {
        let log: InteractionLog = vec![ev("a", "x", 0), ev("a", "y", 1), ev("b", "x", 2)].into();
        let v = build_vocab(&log, 0, 2).unwrap();
        assert_eq!(v.n_items(), 1);
        assert_eq!(v.item_id(0), Some("x"));
        assert_eq!(v.n_users(), 2);
    }

    #[test]
    fn vocab_empty_log() {
        assert_eq!(
            build_vocab(&InteractionLog::new(), 0, 0),
            Err(Error::EmptyInput("interaction log"))
        );
    }

    #[test]
    fn vocab_from_ids_rejects_duplicates() {
        let ids = vec!["a".to_string(), "a".to_string()];
        assert!(Vocab::from_ids(ids, vec![]).is_err());
    }

    #[test]
    fn binarize_repeat_visits() {
        let log: InteractionLog = (0..5).map(|t| ev("u", "i", t)).collect();
        let v = build_vocab(&log, 0, 0).unwrap();
        let (r, skipped) = binarize(&log, &v);
        assert_eq!(r.nnz(), 1);
        assert!(r.contains(0, 0));
        assert_eq!(skipped, 0);
    }

    #[test]
    fn binarize_distinct_pairs() {
        let log: InteractionLog = vec![
            ev("a", "x", 0),
            ev("a", "x", 1),
            ev("a", "y", 2),
            ev("b", "y", 3),
        ]
        .into();
        let v = build_vocab(&log, 0, 0).unwrap();
        let (r, _) = binarize(&log, &v);
        let support: Vec<_> = r.positions().collect();
        assert_eq!(support, vec![(0, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn binarize_empty_log_and_oov() {
        let log: InteractionLog = vec![ev("a", "x", 0)].into();
        let v = build_vocab(&log, 0, 0).unwrap();
        let (r, skipped) = binarize(&InteractionLog::new(), &v);
        assert_eq!(r.nnz(), 0);
        assert_eq!(skipped, 0);
        let other: InteractionLog = vec![ev("a", "z", 0), ev("q", "x", 0)].into();
        let (r, skipped) = binarize(&other, &v);
        assert_eq!(r.nnz(), 0);
        assert_eq!(skipped, 2);
    }

    #[test]
    fn split_sizes() {
        let log: InteractionLog = (0..10).map(|t| ev("u", "i", t)).collect();
        let s = split_holdout(&log, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let two: InteractionLog = (0..2).map(|t| ev("u", "i", t)).collect();
        let s = split_holdout(&two, 0.5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let log: InteractionLog = (0..50).map(|t| ev("u", "i", t)).collect();
        assert_eq!(
            split_holdout(&log, 0.8, 3).unwrap(),
            split_holdout(&log, 0.8, 3).unwrap()
        );
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let log: InteractionLog = vec![ev("a", "x", 0)].into();
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(split_holdout(&log, r, 0).is_err());
        }
    }

    #[test]
    fn validation_carve() {
        let log: InteractionLog = (0..20).map(|t| ev("u", "i", t)).collect();
        let (rest, val) = carve_validation(&log, 0.25, 9).unwrap();
        assert_eq!((rest.len(), val.len()), (15, 5));
        let (rest, val) = carve_validation(&log, 0.0, 9).unwrap();
        assert_eq!((rest.len(), val.len()), (20, 0));
    }
}

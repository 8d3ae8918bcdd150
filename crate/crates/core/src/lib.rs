//! Session-based collective matrix factorization for implicit-feedback
//! recommendation.
//!
//! The crate is `no_std` (with `alloc`) and contains only the algorithmic
//! pieces: event containers and vocabularies, session segmentation and
//! SPPMI construction, ALS training for WMF and the joint user-item /
//! item-item objective, and top-k evaluation. File formats, parsing and
//! the CLI live in the `sesscmf` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cooc;
pub mod data;
pub mod error;
pub mod eval;
pub mod factor;
mod linalg;
pub mod sparse;

pub use cooc::{
    count_session_cooc, count_user_cooc, pmi_matrix, segment_sessions, sessions_from_log,
    sppmi_matrix, CoocCounts, PmiMatrix, Session, SppmiMatrix, TimedItem,
};
pub use data::{
    binarize, build_vocab, carve_validation, split_holdout, Event, InteractionLog, SplitPair, Vocab,
};
pub use error::{Error, Result};
pub use eval::{
    evaluate_model, map_at_k, ndcg_at_k, precision_at_k, recall_at_k, EvalReport, Metric,
};
pub use factor::{
    init_factors, joint_grad, joint_loss, joint_train, masked_loss, mf_train, recommend_topk,
    wmf_loss, wmf_train, FactorMatrix, FactorModel, Hyperparams, JointSolver, LossParts,
    TrainReport,
};
pub use sparse::{CsrMatrix, SparseBinaryMatrix};

/// Default session gap: six hours, in seconds.
pub const DEFAULT_SESSION_GAP: u64 = 6 * 60 * 60;

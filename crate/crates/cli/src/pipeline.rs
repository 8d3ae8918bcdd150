//! Stage functions and end-to-end orchestration.
//!
//! Each CLI subcommand calls exactly one of the stage functions here, and
//! [`run_experiment`] chains the same functions, so running the stages one by
//! one produces the same files as a single `run`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use sesscmf_core::{
    binarize, build_vocab, carve_validation, count_session_cooc, count_user_cooc, evaluate_model,
    joint_train, pmi_matrix, sessions_from_log, split_holdout, sppmi_matrix, wmf_train, EvalReport,
    FactorModel, Hyperparams, InteractionLog, SparseBinaryMatrix, SppmiMatrix, TrainReport, Vocab,
};

use crate::config::{CoocMode, ExperimentConfig, Marginals, Method};
use crate::error::{Error, Result, StageExt};
use crate::formats;
use crate::ingest;

pub const SPLIT_SEED_OFFSET: u64 = 0;
pub const INIT_SEED_OFFSET: u64 = 1;
pub const VALIDATION_SEED_OFFSET: u64 = 2;

/// Train, test and (possibly empty) validation logs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: InteractionLog,
    pub test: InteractionLog,
    pub validation: InteractionLog,
}

pub fn split_log(
    log: &InteractionLog,
    ratio: f64,
    validation_ratio: f64,
    seed: u64,
) -> Result<Split> {
    let pair = split_holdout(log, ratio, seed.wrapping_add(SPLIT_SEED_OFFSET)).stage("split")?;
    let (train, validation) = carve_validation(
        &pair.train,
        validation_ratio,
        seed.wrapping_add(VALIDATION_SEED_OFFSET),
    )
    .stage("split")?;
    Ok(Split {
        train,
        test: pair.test,
        validation,
    })
}

/// Vocabulary and binarized matrix of a training log.
pub fn prepare_training(
    train: &InteractionLog,
    min_user_events: usize,
    min_item_events: usize,
) -> Result<(Vocab, SparseBinaryMatrix)> {
    let vocab = build_vocab(train, min_user_events, min_item_events).stage("vocab")?;
    let (r, _) = binarize(train, &vocab);
    Ok((vocab, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoocOptions {
    pub mode: CoocMode,
    pub session_gap: u64,
    pub shift_k: u32,
    pub marginals: Marginals,
}

/// Builds the SPPMI matrix from session or whole-history co-occurrence.
pub fn build_sppmi(
    train: &InteractionLog,
    vocab: &Vocab,
    r: &SparseBinaryMatrix,
    opts: &CoocOptions,
) -> Result<SppmiMatrix> {
    let counts = match opts.mode {
        CoocMode::Session => {
            let sessions = sessions_from_log(train, vocab, opts.session_gap).stage("sessions")?;
            count_session_cooc(&sessions, vocab.n_items()).stage("cooc")?
        }
        CoocMode::User => count_user_cooc(r),
    };
    let counts = match opts.marginals {
        Marginals::Cooccurrence => counts,
        Marginals::Consumption => {
            let mut consumed = vec![0u64; vocab.n_items()];
            for e in train {
                if let (Some(_), Some(i)) = (vocab.user_index(&e.user), vocab.item_index(&e.item)) {
                    consumed[i] += 1;
                }
            }
            counts.with_consumption_marginals(consumed).stage("cooc")?
        }
    };
    let pmi = pmi_matrix(&counts).stage("cooc")?;
    sppmi_matrix(&pmi, opts.shift_k).stage("cooc")
}

/// The SPPMI values exactly as a reader of the dump sees them. Training
/// always consumes this form so staged runs match a single `run`.
pub fn as_dumped(sppmi: &SppmiMatrix) -> Result<SppmiMatrix> {
    formats::parse_sppmi(
        &formats::format_sppmi(sppmi),
        sppmi.dim(),
        sppmi.shift_k(),
        Path::new("<sppmi>"),
    )
}

pub fn train_method(
    method: Method,
    r: &SparseBinaryMatrix,
    sppmi: Option<&SppmiMatrix>,
    hyper: &Hyperparams,
) -> Result<(FactorModel, TrainReport)> {
    match (method, sppmi) {
        (Method::Wmf, _) => wmf_train(r, hyper).stage("train"),
        (_, Some(v)) => {
            if v.dim() != r.cols() {
                return Err(Error::Usage(format!(
                    "SPPMI matrix has {} items but the training data has {}",
                    v.dim(),
                    r.cols()
                )));
            }
            joint_train(r.as_csr(), &v.to_csr(), hyper).stage("train")
        }
        (m, None) => Err(Error::Usage(format!("method {m} needs an SPPMI matrix"))),
    }
}

/// Held-out items per user. Users and items unseen in training get indices
/// past the end of the vocabulary so they count as unreachable.
pub fn test_truth(test: &InteractionLog, vocab: &Vocab) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut extra_users: BTreeMap<&str, usize> = BTreeMap::new();
    let mut extra_items: BTreeMap<&str, usize> = BTreeMap::new();
    let mut truth: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for e in test {
        let u = vocab.user_index(&e.user).unwrap_or_else(|| {
            let next = vocab.n_users() + extra_users.len();
            *extra_users.entry(&e.user).or_insert(next)
        });
        let i = vocab.item_index(&e.item).unwrap_or_else(|| {
            let next = vocab.n_items() + extra_items.len();
            *extra_items.entry(&e.item).or_insert(next)
        });
        truth.entry(u).or_default().insert(i);
    }
    truth
}

pub fn evaluate(
    model: &FactorModel,
    vocab: &Vocab,
    train: &InteractionLog,
    test: &InteractionLog,
    cutoffs: &[usize],
) -> Result<EvalReport> {
    let (r, _) = binarize(train, vocab);
    evaluate_model(model, &r, &test_truth(test, vocab), cutoffs).stage("eval")
}

/// One trained and evaluated latent dimension.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub k: usize,
    pub model: FactorModel,
    pub train_report: TrainReport,
    pub eval: EvalReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub vocab: Vocab,
    pub split: Split,
    pub skipped_lines: usize,
    pub sppmi: Option<SppmiMatrix>,
    pub runs: Vec<RunResult>,
    pub metrics_csv: String,
}

/// Model path for latent dimension `k`; several dimensions get `.k<K>` appended.
pub fn model_path(base: &Path, k: usize, multiple: bool) -> PathBuf {
    if multiple {
        let mut s = base.as_os_str().to_owned();
        s.push(format!(".k{k}"));
        PathBuf::from(s)
    } else {
        base.to_path_buf()
    }
}

/// Label used in the metrics table.
pub fn run_label(method: Method, k: usize, multiple: bool) -> String {
    if multiple {
        format!("{method}-k{k}")
    } else {
        method.to_string()
    }
}

/// ingest -> split -> co-occurrence -> train -> evaluate, for every latent
/// dimension in the config. Writes the configured output files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let input = cfg.input.as_ref().expect("validated");
    let parsed = ingest::parse_events(input, &cfg.format, cfg.strict)?;
    if parsed.log.is_empty() {
        return Err(Error::Stage {
            stage: "ingest",
            source: sesscmf_core::Error::EmptyInput("interaction log"),
        });
    }
    let split = split_log(&parsed.log, cfg.split_ratio, cfg.validation_ratio, cfg.seed)?;
    let (vocab, r) = prepare_training(&split.train, cfg.min_user_events, cfg.min_item_events)?;

    let sppmi = match cfg.method.cooc_mode() {
        None => None,
        Some(mode) => {
            let opts = CoocOptions {
                mode,
                session_gap: cfg.session_gap,
                shift_k: cfg.hyper.shift_k,
                marginals: cfg.marginals,
            };
            let full = build_sppmi(&split.train, &vocab, &r, &opts)?;
            if let Some(path) = &cfg.sppmi_out {
                formats::write_sppmi(path, &full)?;
            }
            Some(as_dumped(&full)?)
        }
    };

    let multiple = cfg.factors.len() > 1;
    let mut runs = Vec::with_capacity(cfg.factors.len());
    for &k in &cfg.factors {
        let hyper = cfg.hyper_for(k);
        let (model, train_report) = train_method(cfg.method, &r, sppmi.as_ref(), &hyper)?;
        if let Some(base) = &cfg.model_out {
            formats::save_model(&model_path(base, k, multiple), &model, &vocab)?;
        }
        let eval = evaluate(&model, &vocab, &split.train, &split.test, &cfg.cutoffs)?;
        runs.push(RunResult {
            label: run_label(cfg.method, k, multiple),
            k,
            model,
            train_report,
            eval,
        });
    }
    let metrics_csv = formats::format_metrics(runs.iter().map(|r| (r.label.as_str(), &r.eval)));
    if let Some(path) = &cfg.metrics_out {
        fs::write(path, &metrics_csv).map_err(|e| Error::io(path, e))?;
    }
    Ok(ExperimentOutput {
        vocab,
        split,
        skipped_lines: parsed.skipped,
        sppmi,
        runs,
        metrics_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sesscmf_core::Event;

    fn ev(u: &str, i: &str, t: u64) -> Event {
        Event::new(u, i, t).unwrap()
    }

    #[test]
    fn truth_maps_unseen_ids_past_the_vocab() {
        let train: InteractionLog = vec![ev("a", "x", 0), ev("b", "y", 0)].into();
        let (vocab, _) = prepare_training(&train, 0, 0).unwrap();
        let test: InteractionLog = vec![
            ev("a", "y", 1),
            ev("a", "z", 2),
            ev("c", "x", 3),
            ev("c", "z", 4),
        ]
        .into();
        let truth = test_truth(&test, &vocab);
        assert_eq!(truth[&0], [1, 2].into_iter().collect());
        assert_eq!(truth[&2], [0, 2].into_iter().collect());
    }

    #[test]
    fn one_session_per_user_matches_user_history() {
        // every user's events lie within one gap, so sessions are histories
        let train: InteractionLog = vec![
            ev("a", "x", 0),
            ev("a", "y", 100),
            ev("a", "z", 200),
            ev("b", "x", 50),
            ev("b", "y", 60),
            ev("c", "z", 10),
            ev("c", "y", 20),
        ]
        .into();
        let (vocab, r) = prepare_training(&train, 0, 0).unwrap();
        let opts = |mode| CoocOptions {
            mode,
            session_gap: 1_000_000,
            shift_k: 1,
            marginals: Marginals::Cooccurrence,
        };
        let session = build_sppmi(&train, &vocab, &r, &opts(CoocMode::Session)).unwrap();
        let user = build_sppmi(&train, &vocab, &r, &opts(CoocMode::User)).unwrap();
        assert_eq!(session, user);
        let short = CoocOptions {
            session_gap: 30,
            ..opts(CoocMode::Session)
        };
        assert_ne!(build_sppmi(&train, &vocab, &r, &short).unwrap(), user);
    }

    #[test]
    fn method_needs_sppmi() {
        let train: InteractionLog = vec![ev("a", "x", 0), ev("a", "y", 0)].into();
        let (_, r) = prepare_training(&train, 0, 0).unwrap();
        let h = Hyperparams {
            k: 2,
            ..Hyperparams::default()
        };
        assert!(matches!(
            train_method(Method::Cofactor, &r, None, &h),
            Err(Error::Usage(_))
        ));
        assert!(train_method(Method::Wmf, &r, None, &h).is_ok());
    }

    #[test]
    fn model_paths() {
        assert_eq!(
            model_path(Path::new("m.txt"), 10, false),
            PathBuf::from("m.txt")
        );
        assert_eq!(
            model_path(Path::new("m.txt"), 10, true),
            PathBuf::from("m.txt.k10")
        );
        assert_eq!(run_label(Method::SessionCmf, 20, true), "session-cmf-k20");
    }
}

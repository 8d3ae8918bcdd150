use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sesscmf::config::{self, CoocMode, ExperimentConfig, Marginals, Method};
use sesscmf::error::{Error, Result};
use sesscmf::formats;
use sesscmf::ingest::{self, FormatSpec, TimeFormat};
use sesscmf::pipeline::{self, CoocOptions, INIT_SEED_OFFSET};
use sesscmf_core::{binarize, recommend_topk, Hyperparams, DEFAULT_SESSION_GAP};

/// Session-based collective matrix factorization for implicit feedback.
#[derive(Debug, Parser)]
#[command(name = "sesscmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a raw log into canonical TSV, optionally splitting train/test.
    Ingest(IngestArgs),
    /// Build the SPPMI item-item matrix from a canonical training log.
    Cooc(CoocArgs),
    /// Train a model on a canonical training log.
    Train(TrainArgs),
    /// Evaluate a model against held-out events.
    Eval(EvalArgs),
    /// Run the full pipeline from a config file.
    #[command(after_help = config::CONFIG_KEYS)]
    Run(RunArgs),
    /// Print top-N recommendations for one user.
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
struct FormatArgs {
    /// Preset column layout (`lastfm`); explicit flags below take precedence
    #[arg(long)]
    preset: Option<String>,
    /// Field delimiter: `tab`, `comma`, `space` or a single character
    #[arg(long)]
    delimiter: Option<String>,
    /// Zero-based user column [default: 0]
    #[arg(long)]
    user_col: Option<usize>,
    /// Zero-based item column [default: 1]
    #[arg(long)]
    item_col: Option<usize>,
    /// Zero-based timestamp column [default: 2]
    #[arg(long)]
    time_col: Option<usize>,
    /// `epoch` or `iso8601` [default: epoch]
    #[arg(long)]
    time_format: Option<TimeFormat>,
    /// Columns joined as the item id when the item column is blank
    #[arg(long, value_delimiter = ',')]
    item_fallback_cols: Option<Vec<usize>>,
    /// Skip the first line
    #[arg(long)]
    skip_header: bool,
    /// Fail on the first malformed line instead of skipping it
    #[arg(long)]
    strict: bool,
}

impl FormatArgs {
    fn spec(&self) -> Result<FormatSpec> {
        let mut spec = match self.preset.as_deref() {
            None => FormatSpec::default(),
            Some("lastfm") => FormatSpec::lastfm(),
            Some(other) => return Err(Error::Usage(format!("unknown preset {other:?}"))),
        };
        if let Some(d) = &self.delimiter {
            let mut probe = ExperimentConfig::default();
            probe.set("delimiter", d).map_err(Error::Usage)?;
            spec.delimiter = probe.format.delimiter;
        }
        spec.user_col = self.user_col.unwrap_or(spec.user_col);
        spec.item_col = self.item_col.unwrap_or(spec.item_col);
        spec.time_col = self.time_col.unwrap_or(spec.time_col);
        spec.time_format = self.time_format.unwrap_or(spec.time_format);
        if let Some(cols) = &self.item_fallback_cols {
            spec.item_fallback_cols = cols.clone();
        }
        spec.skip_header |= self.skip_header;
        spec.validate().map_err(Error::Usage)?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Canonical TSV of every parsed event
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
    /// Write the training side of a random event split here
    #[arg(long, requires = "test_out")]
    train_out: Option<PathBuf>,
    /// Write the held-out side of the split here
    #[arg(long, requires = "train_out")]
    test_out: Option<PathBuf>,
    /// Write validation events carved from the training side here
    #[arg(long)]
    validation_out: Option<PathBuf>,
    /// Training fraction
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Fraction of training events moved to validation
    #[arg(long, default_value_t = 0.0)]
    validation_ratio: f64,
    /// Global seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct VocabArgs {
    /// Drop users with fewer training events
    #[arg(long, default_value_t = 0)]
    min_user_events: usize,
    /// Drop items with fewer training events
    #[arg(long, default_value_t = 0)]
    min_item_events: usize,
}

#[derive(Debug, Args)]
struct CoocArgs {
    /// Canonical TSV training log
    #[arg(long)]
    input: PathBuf,
    /// SPPMI dump destination
    #[arg(long)]
    output: PathBuf,
    /// `session` or `user`
    #[arg(long, default_value = "session")]
    mode: CoocMode,
    /// Session break threshold, seconds
    #[arg(long, default_value_t = DEFAULT_SESSION_GAP)]
    session_gap: u64,
    /// SPPMI shift k
    #[arg(long, default_value_t = 1)]
    shift_k: u32,
    /// `cooccurrence` or `consumption`
    #[arg(long, default_value = "cooccurrence")]
    marginals: Marginals,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Canonical TSV training log
    #[arg(long)]
    input: PathBuf,
    /// `wmf`, `cofactor` or `session-cmf`
    #[arg(long, default_value = "session-cmf")]
    method: Method,
    /// SPPMI dump (required for cofactor and session-cmf)
    #[arg(long)]
    sppmi: Option<PathBuf>,
    /// Model file destination
    #[arg(long)]
    output: PathBuf,
    /// Latent dimension
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda_x: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_y: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_z: f64,
    /// WMF confidence weight
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Maximum ALS sweeps
    #[arg(long, default_value_t = 50)]
    sweeps: usize,
    /// Relative loss change that stops training
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Global seed (initialization uses seed + 1)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Project factors onto >= 0 [default: true for session-cmf, else false]
    #[arg(long)]
    nonneg: Option<bool>,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// Weight of the item-item loss
    #[arg(long, default_value_t = 1.0)]
    item_item_weight: f64,
    /// Fit missing SPPMI entries as zeros
    #[arg(long)]
    item_item_dense_zeros: bool,
    /// SPPMI shift recorded with the loaded dump
    #[arg(long, default_value_t = 1)]
    shift_k: u32,
    #[command(flatten)]
    vocab: VocabArgs,
}

impl TrainArgs {
    fn hyper(&self) -> Hyperparams {
        Hyperparams {
            k: self.k,
            lambda_x: self.lambda_x,
            lambda_y: self.lambda_y,
            lambda_z: self.lambda_z,
            alpha: self.alpha,
            shift_k: self.shift_k,
            sweeps: self.sweeps,
            seed: self.seed.wrapping_add(INIT_SEED_OFFSET),
            init_scale: self.init_scale,
            nonneg: self.nonneg.unwrap_or(self.method.default_nonneg()),
            item_item_weight: self.item_item_weight,
            item_item_dense_zeros: self.item_item_dense_zeros,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Canonical TSV training log (its items are excluded from rankings)
    #[arg(long)]
    train: PathBuf,
    /// Canonical TSV held-out log
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated cutoffs
    #[arg(long, value_delimiter = ',', default_value = "20,50")]
    cutoffs: Vec<usize>,
    /// Label for the method column
    #[arg(long, default_value = "model")]
    label: String,
    /// Metrics CSV destination (stdout when absent)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set factors=10,20,30`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for `--set method=M`
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw user id
    #[arg(long)]
    user: String,
    /// Number of items to print
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Canonical TSV whose items for this user are excluded
    #[arg(long)]
    train: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let spec = args.format.spec()?;
    let parsed = ingest::parse_events(&args.input, &spec, args.format.strict)?;
    eprintln!(
        "parsed {} events, skipped {} malformed lines",
        parsed.log.len(),
        parsed.skipped
    );
    if let Some(out) = &args.output {
        ingest::write_canonical(out, &parsed.log)?;
    }
    if let (Some(train_out), Some(test_out)) = (&args.train_out, &args.test_out) {
        let split = pipeline::split_log(&parsed.log, args.ratio, args.validation_ratio, args.seed)?;
        ingest::write_canonical(train_out, &split.train)?;
        ingest::write_canonical(test_out, &split.test)?;
        if let Some(val_out) = &args.validation_out {
            ingest::write_canonical(val_out, &split.validation)?;
        }
        eprintln!(
            "split into {} train / {} test / {} validation events",
            split.train.len(),
            split.test.len(),
            split.validation.len()
        );
    }
    Ok(())
}

fn cooc(args: &CoocArgs) -> Result<()> {
    let train = ingest::read_canonical(&args.input)?;
    let (vocab, r) = pipeline::prepare_training(
        &train,
        args.vocab.min_user_events,
        args.vocab.min_item_events,
    )?;
    let opts = CoocOptions {
        mode: args.mode,
        session_gap: args.session_gap,
        shift_k: args.shift_k,
        marginals: args.marginals,
    };
    let sppmi = pipeline::build_sppmi(&train, &vocab, &r, &opts)?;
    formats::write_sppmi(&args.output, &sppmi)?;
    eprintln!(
        "{} items, {} positive SPPMI pairs",
        sppmi.dim(),
        sppmi.len()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let train = ingest::read_canonical(&args.input)?;
    let (vocab, r) = pipeline::prepare_training(
        &train,
        args.vocab.min_user_events,
        args.vocab.min_item_events,
    )?;
    let sppmi = match &args.sppmi {
        Some(path) => Some(formats::read_sppmi(path, vocab.n_items(), args.shift_k)?),
        None => None,
    };
    let hyper = args.hyper();
    hyper.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let (model, report) = pipeline::train_method(args.method, &r, sppmi.as_ref(), &hyper)?;
    formats::save_model(&args.output, &model, &vocab)?;
    eprintln!(
        "{} sweeps, final loss {:.6e}{}",
        report.sweeps_run,
        report.loss_per_sweep.last().copied().unwrap_or(f64::NAN),
        if report.converged { " (converged)" } else { "" }
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    if args.cutoffs.is_empty() || args.cutoffs.contains(&0) {
        return Err(Error::Usage("cutoffs must be positive".into()));
    }
    let (model, vocab) = formats::load_model(&args.model)?;
    let train = ingest::read_canonical(&args.train)?;
    let test = ingest::read_canonical(&args.test)?;
    let report = pipeline::evaluate(&model, &vocab, &train, &test, &args.cutoffs)?;
    let csv = formats::format_metrics([(args.label.as_str(), &report)]);
    match &args.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(method) = args.method {
        cfg.method = method;
    }
    let out = pipeline::run_experiment(&cfg)?;
    if cfg.metrics_out.is_none() {
        print!("{}", out.metrics_csv);
    }
    Ok(())
}

fn recommend(args: &RecommendArgs) -> Result<()> {
    if args.top == 0 {
        return Err(Error::Usage("--top must be at least 1".into()));
    }
    let (model, vocab) = formats::load_model(&args.model)?;
    let u = vocab
        .user_index(&args.user)
        .ok_or_else(|| Error::Usage(format!("unknown user {:?}", args.user)))?;
    let exclude: Vec<usize> = match &args.train {
        Some(path) => {
            let (r, _) = binarize(&ingest::read_canonical(path)?, &vocab);
            r.row(u).to_vec()
        }
        None => Vec::new(),
    };
    let recs = recommend_topk(&model, u, args.top, &exclude).map_err(|source| Error::Stage {
        stage: "recommend",
        source,
    })?;
    for (i, score) in recs {
        println!(
            "{}\t{score:.6}",
            vocab.item_id(i).expect("index from model")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Cooc(a) => cooc(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::Recommend(a) => recommend(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_defaults_match_config_defaults() {
        let cli =
            Cli::try_parse_from(["sesscmf", "train", "--input", "t", "--output", "m"]).unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        let cfg = ExperimentConfig::default();
        assert_eq!(args.hyper(), cfg.hyper_for(20));
    }
}

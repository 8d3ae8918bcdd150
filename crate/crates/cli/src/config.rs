//! Experiment configuration: a plain `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Every key can be
//! overridden from the command line with `--set key=value`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sesscmf_core::{Hyperparams, DEFAULT_SESSION_GAP};

use crate::error::{Error, Result};
use crate::ingest::FormatSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Wmf,
    Cofactor,
    SessionCmf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Wmf => "wmf",
            Method::Cofactor => "cofactor",
            Method::SessionCmf => "session-cmf",
        }
    }

    /// Which co-occurrence the method factorizes, if any.
    pub fn cooc_mode(self) -> Option<CoocMode> {
        match self {
            Method::Wmf => None,
            Method::Cofactor => Some(CoocMode::User),
            Method::SessionCmf => Some(CoocMode::Session),
        }
    }

    /// Nonnegativity is on for the session model and off for the baselines.
    pub fn default_nonneg(self) -> bool {
        matches!(self, Method::SessionCmf)
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "wmf" => Ok(Method::Wmf),
            "cofactor" => Ok(Method::Cofactor),
            "session-cmf" | "session_cmf" => Ok(Method::SessionCmf),
            other => Err(format!(
                "unknown method {other:?} (expected wmf, cofactor or session-cmf)"
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoocMode {
    Session,
    User,
}

impl FromStr for CoocMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "session" => Ok(CoocMode::Session),
            "user" => Ok(CoocMode::User),
            other => Err(format!(
                "unknown co-occurrence mode {other:?} (expected session or user)"
            )),
        }
    }
}

/// How PMI marginals are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginals {
    /// Row sums of the co-occurrence table.
    Cooccurrence,
    /// Number of training events per item.
    Consumption,
}

impl FromStr for Marginals {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cooccurrence" => Ok(Marginals::Cooccurrence),
            "consumption" => Ok(Marginals::Consumption),
            other => Err(format!(
                "unknown marginals {other:?} (expected cooccurrence or consumption)"
            )),
        }
    }
}

/// Reference of accepted keys and defaults, shown in `run --help`.
pub const CONFIG_KEYS: &str = "\
Config keys (key = value; defaults in brackets):
  input                  raw log path [required]
  delimiter              field delimiter, `tab` or one character [tab]
  user_col, item_col, time_col   zero-based columns [0, 1, 2]
  time_format            epoch | iso8601 [epoch]
  skip_header            skip the first line [false]
  item_fallback_cols     columns joined as item id when item_col is blank []
  strict                 fail on the first malformed line [false]
  split_ratio            training fraction of events [0.8]
  validation_ratio       fraction of training events held out for validation [0]
  seed                   global seed; split uses seed, init seed+1, validation seed+2 [0]
  min_user_events        drop users with fewer training events [0]
  min_item_events        drop items with fewer training events [0]
  method                 wmf | cofactor | session-cmf [session-cmf]
  session_gap            session break threshold in seconds [21600]
  marginals              cooccurrence | consumption [cooccurrence]
  shift_k                SPPMI shift k [1]
  factors                comma-separated latent dimensions [20]
  lambda_x, lambda_y, lambda_z   regularizers [0.1]
  alpha                  WMF confidence weight [10]
  sweeps                 maximum ALS sweeps [50]
  tol                    stop when the relative loss change is below this [1e-6]
  init_scale             factors start uniform on [0, init_scale] [0.1]
  nonneg                 project factors onto >= 0 [true for session-cmf, else false]
  item_item_weight       weight of the item-item loss [1]
  item_item_dense_zeros  fit missing SPPMI entries as zeros [false]
  cutoffs                comma-separated k for metrics [20,50]
  model_out              model file; with several factors `.k<K>` is appended []
  metrics_out            metrics CSV []
  sppmi_out              SPPMI dump []";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub input: Option<PathBuf>,
    pub format: FormatSpec,
    pub strict: bool,
    pub split_ratio: f64,
    pub validation_ratio: f64,
    pub seed: u64,
    pub min_user_events: usize,
    pub min_item_events: usize,
    pub method: Method,
    pub session_gap: u64,
    pub marginals: Marginals,
    pub factors: Vec<usize>,
    /// Everything but `k`, `seed` and `nonneg` is taken from here.
    pub hyper: Hyperparams,
    pub nonneg: Option<bool>,
    pub cutoffs: Vec<usize>,
    pub model_out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
    pub sppmi_out: Option<PathBuf>,
    base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: None,
            format: FormatSpec::default(),
            strict: false,
            split_ratio: 0.8,
            validation_ratio: 0.0,
            seed: 0,
            min_user_events: 0,
            min_item_events: 0,
            method: Method::SessionCmf,
            session_gap: DEFAULT_SESSION_GAP,
            marginals: Marginals::Cooccurrence,
            factors: vec![20],
            hyper: Hyperparams::default(),
            nonneg: None,
            cutoffs: vec![20, 50],
            model_out: None,
            metrics_out: None,
            sppmi_out: None,
            base_dir: PathBuf::new(),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| format!("{value:?}: {e}"))
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse::<usize>)
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, &base)
    }

    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            base_dir: base_dir.to_path_buf(),
            ..Self::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: n + 1,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|message| Error::Config {
                    line: n + 1,
                    message,
                })?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override {assignment:?} is not key=value")))?;
        // override paths are relative to the working directory
        let base = std::mem::take(&mut self.base_dir);
        let res = self.set(key.trim(), value.trim());
        self.base_dir = base;
        res.map_err(|m| Error::Usage(format!("override {key}: {m}")))
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let h = &mut self.hyper;
        match key {
            "input" => self.input = Some(self.path(value)),
            "delimiter" => {
                self.format.delimiter = match value {
                    "tab" | "\\t" => '\t',
                    "comma" => ',',
                    "space" => ' ',
                    v if v.chars().count() == 1 => v.chars().next().expect("one char"),
                    v => return Err(format!("delimiter {v:?} must be a single character")),
                }
            }
            "user_col" => self.format.user_col = parse(value)?,
            "item_col" => self.format.item_col = parse(value)?,
            "time_col" => self.format.time_col = parse(value)?,
            "time_format" => self.format.time_format = parse(value)?,
            "skip_header" => self.format.skip_header = parse(value)?,
            "item_fallback_cols" => self.format.item_fallback_cols = parse_list(value)?,
            "strict" => self.strict = parse(value)?,
            "split_ratio" => self.split_ratio = parse(value)?,
            "validation_ratio" => self.validation_ratio = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "min_user_events" => self.min_user_events = parse(value)?,
            "min_item_events" => self.min_item_events = parse(value)?,
            "method" => self.method = parse(value)?,
            "session_gap" => self.session_gap = parse(value)?,
            "marginals" => self.marginals = parse(value)?,
            "shift_k" => h.shift_k = parse(value)?,
            "factors" | "k" => self.factors = parse_list(value)?,
            "lambda_x" => h.lambda_x = parse(value)?,
            "lambda_y" => h.lambda_y = parse(value)?,
            "lambda_z" => h.lambda_z = parse(value)?,
            "alpha" => h.alpha = parse(value)?,
            "sweeps" => h.sweeps = parse(value)?,
            "tol" => h.tol = parse(value)?,
            "init_scale" => h.init_scale = parse(value)?,
            "nonneg" => self.nonneg = Some(parse(value)?),
            "item_item_weight" => h.item_item_weight = parse(value)?,
            "item_item_dense_zeros" => h.item_item_dense_zeros = parse(value)?,
            "cutoffs" => self.cutoffs = parse_list(value)?,
            "model_out" => self.model_out = Some(self.path(value)),
            "metrics_out" => self.metrics_out = Some(self.path(value)),
            "sppmi_out" => self.sppmi_out = Some(self.path(value)),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.input.is_none() {
            return usage("config needs an `input` path".into());
        }
        self.format.validate().map_err(Error::Usage)?;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return usage(format!(
                "split_ratio {} is outside (0, 1)",
                self.split_ratio
            ));
        }
        if !(0.0..1.0).contains(&self.validation_ratio) {
            return usage(format!(
                "validation_ratio {} is outside [0, 1)",
                self.validation_ratio
            ));
        }
        if self.session_gap == 0 {
            return usage("session_gap must be positive".into());
        }
        if self.factors.is_empty() {
            return usage("factors needs at least one latent dimension".into());
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return usage("cutoffs must be positive".into());
        }
        for &k in &self.factors {
            self.hyper_for(k)
                .validate()
                .map_err(|e| Error::Usage(e.to_string()))?;
        }
        Ok(())
    }

    /// Training hyperparameters for one latent dimension.
    pub fn hyper_for(&self, k: usize) -> Hyperparams {
        Hyperparams {
            k,
            seed: self.seed.wrapping_add(crate::pipeline::INIT_SEED_OFFSET),
            nonneg: self.nonneg.unwrap_or(self.method.default_nonneg()),
            ..self.hyper.clone()
        }
    }
}

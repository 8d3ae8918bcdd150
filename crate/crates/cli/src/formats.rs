//! Text formats for models, SPPMI dumps and metric tables.

use std::fs;
use std::path::Path;

use sesscmf_core::{EvalReport, FactorMatrix, FactorModel, Metric, SppmiMatrix, Vocab};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "SESSCMF v1";
pub const METRICS_HEADER: &str = "method,metric,k,value,users_evaluated";

/// 17 significant digits, enough to round-trip any f64.
fn fmt_exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a model with its vocabulary. Raw ids must not contain
/// whitespace.
pub fn format_model(model: &FactorModel, vocab: &Vocab) -> Result<String> {
    if vocab.n_users() != model.n_users() || vocab.n_items() != model.n_items() {
        return Err(Error::Usage(format!(
            "vocabulary is {}x{} but the model is {}x{}",
            vocab.n_users(),
            vocab.n_items(),
            model.n_users(),
            model.n_items()
        )));
    }
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "{} {} {} {}\n",
        model.k(),
        model.n_users(),
        model.n_items(),
        u8::from(model.z.is_some())
    ));
    let mut block = |tag: &str, ids: &[String], factors: &FactorMatrix| -> Result<()> {
        for (id, row) in ids.iter().zip(factors.iter_rows()) {
            if id.chars().any(char::is_whitespace) {
                return Err(Error::Usage(format!(
                    "id {id:?} contains whitespace and cannot be stored in a model file"
                )));
            }
            out.push_str(tag);
            out.push(' ');
            out.push_str(id);
            for v in row {
                out.push(' ');
                out.push_str(&fmt_exact(*v));
            }
            out.push('\n');
        }
        Ok(())
    };
    block("U", vocab.users(), &model.x)?;
    block("I", vocab.items(), &model.y)?;
    if let Some(z) = &model.z {
        block("C", vocab.items(), z)?;
    }
    Ok(out)
}

pub fn save_model(path: &Path, model: &FactorModel, vocab: &Vocab) -> Result<()> {
    let text = format_model(model, vocab)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_model(text: &str, path: &Path) -> Result<(FactorModel, Vocab)> {
    let bad = |line: usize, msg: String| Error::malformed(path, line, msg);
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    match lines.next() {
        Some((_, MODEL_MAGIC)) => {}
        Some((n, other)) => {
            return Err(bad(
                n,
                format!("expected version line {MODEL_MAGIC:?}, found {other:?}"),
            ));
        }
        None => return Err(bad(1, "empty model file".into())),
    }
    let (n, dims) = lines
        .next()
        .ok_or_else(|| bad(2, "missing dimension line".into()))?;
    let dims: Vec<usize> = dims
        .split(' ')
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(n, format!("bad dimension line: {e}")))?;
    let [k, n_users, n_items, has_context] = dims[..] else {
        return Err(bad(n, "dimension line needs `K N M has_context`".into()));
    };
    if has_context > 1 || k == 0 {
        return Err(bad(n, "invalid dimension line".into()));
    }
    let mut read_block = |tag: &str, rows: usize| -> Result<(Vec<String>, FactorMatrix)> {
        let mut ids = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            let (n, line) = lines.next().ok_or_else(|| {
                bad(
                    text.lines().count() + 1,
                    format!("truncated file: missing {tag} rows"),
                )
            })?;
            let mut parts = line.split(' ');
            if parts.next() != Some(tag) {
                return Err(bad(n, format!("expected a {tag} row")));
            }
            let id = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad(n, "missing id".into()))?;
            ids.push(id.to_string());
            let before = data.len();
            for p in parts {
                data.push(
                    p.parse::<f64>()
                        .map_err(|e| bad(n, format!("bad factor {p:?}: {e}")))?,
                );
            }
            if data.len() - before != k {
                return Err(bad(
                    n,
                    format!("expected {k} factors, found {}", data.len() - before),
                ));
            }
        }
        let m = FactorMatrix::from_vec(rows, k, data).expect("row lengths checked");
        Ok((ids, m))
    };
    let (users, x) = read_block("U", n_users)?;
    let (items, y) = read_block("I", n_items)?;
    let z = if has_context == 1 {
        let (ctx_ids, z) = read_block("C", n_items)?;
        if ctx_ids != items {
            return Err(bad(0, "context ids differ from item ids".into()));
        }
        Some(z)
    } else {
        None
    };
    if let Some((n, _)) = lines.next() {
        return Err(bad(n, "unexpected trailing content".into()));
    }
    let vocab = Vocab::from_ids(users, items).map_err(|e| bad(0, e.to_string()))?;
    Ok((FactorModel { x, y, z }, vocab))
}

pub fn load_model(path: &Path) -> Result<(FactorModel, Vocab)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

/// Upper-triangle SPPMI entries, `i<TAB>j<TAB>value` with 10 significant digits.
pub fn format_sppmi(sppmi: &SppmiMatrix) -> String {
    let mut out = String::new();
    for ((i, j), v) in sppmi.entries() {
        out.push_str(&format!("{i}\t{j}\t{v:.9e}\n"));
    }
    out
}

pub fn parse_sppmi(text: &str, dim: usize, shift_k: u32, path: &Path) -> Result<SppmiMatrix> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::malformed(path, n + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        let [i, j, v] = fields[..] else {
            return Err(bad(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        };
        let i: usize = i.parse().map_err(|e| bad(format!("bad row index: {e}")))?;
        let j: usize = j
            .parse()
            .map_err(|e| bad(format!("bad column index: {e}")))?;
        let v: f64 = v.parse().map_err(|e| bad(format!("bad value: {e}")))?;
        entries.push(((i, j), v));
    }
    SppmiMatrix::from_entries(dim, shift_k, entries)
        .map_err(|e| Error::malformed(path, 0, e.to_string()))
}

pub fn write_sppmi(path: &Path, sppmi: &SppmiMatrix) -> Result<()> {
    fs::write(path, format_sppmi(sppmi)).map_err(|e| Error::io(path, e))
}

pub fn read_sppmi(path: &Path, dim: usize, shift_k: u32) -> Result<SppmiMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sppmi(&text, dim, shift_k, path)
}

/// Metric rows for one evaluated model, in metric order then ascending cutoff.
pub fn metrics_rows(method: &str, report: &EvalReport) -> String {
    let mut keys: Vec<(Metric, usize)> = report.values.keys().copied().collect();
    keys.sort();
    let mut out = String::new();
    for (metric, k) in keys {
        out.push_str(&format!(
            "{method},{},{k},{:.6},{}\n",
            metric.name(),
            report.values[&(metric, k)],
            report.users_evaluated
        ));
    }
    out
}

pub fn format_metrics<'a, I>(reports: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a EvalReport)>,
{
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for (method, report) in reports {
        out.push_str(&metrics_rows(method, report));
    }
    out
}

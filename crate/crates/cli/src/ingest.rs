//! Delimited event logs.
//!
//! Raw logs are read according to a [`FormatSpec`]. The interchange format
//! between pipeline stages is the canonical TSV: `user<TAB>item<TAB>epoch`
//! per line, UTF-8, LF line endings, no header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use sesscmf_core::{Event, InteractionLog};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFormat {
    EpochSeconds,
    Iso8601,
}

impl FromStr for TimeFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "epoch" | "epoch-seconds" => Ok(TimeFormat::EpochSeconds),
            "iso8601" | "iso-8601" => Ok(TimeFormat::Iso8601),
            other => Err(format!(
                "unknown time format {other:?} (expected epoch or iso8601)"
            )),
        }
    }
}

/// Column layout of a raw log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatSpec {
    pub delimiter: char,
    pub user_col: usize,
    pub item_col: usize,
    pub time_col: usize,
    pub time_format: TimeFormat,
    pub skip_header: bool,
    /// Columns joined to form the item id when `item_col` is blank, e.g.
    /// artist and track name for logs with missing track identifiers.
    pub item_fallback_cols: Vec<usize>,
}

impl Default for FormatSpec {
    fn default() -> Self {
        FormatSpec {
            delimiter: '\t',
            user_col: 0,
            item_col: 1,
            time_col: 2,
            time_format: TimeFormat::EpochSeconds,
            skip_header: false,
            item_fallback_cols: Vec::new(),
        }
    }
}

impl FormatSpec {
    /// Last.fm 1K layout: `user, timestamp, artist-id, artist, track-id, track`,
    /// keyed by track id with artist and track name as fallback.
    pub fn lastfm() -> Self {
        FormatSpec {
            delimiter: '\t',
            user_col: 0,
            item_col: 4,
            time_col: 1,
            time_format: TimeFormat::Iso8601,
            skip_header: false,
            item_fallback_cols: vec![3, 5],
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let cols = [self.user_col, self.item_col, self.time_col];
        if cols[0] == cols[1] || cols[0] == cols[2] || cols[1] == cols[2] {
            return Err(format!(
                "user, item and time columns must differ (got {}, {}, {})",
                self.user_col, self.item_col, self.time_col
            ));
        }
        if self.delimiter == '\n' || self.delimiter == '\r' {
            return Err("delimiter cannot be a line break".into());
        }
        Ok(())
    }

    /// Parses one line into an event, or explains why it is malformed.
    pub fn parse_line(&self, line: &str) -> std::result::Result<Event, String> {
        let fields: Vec<&str> = line.split(self.delimiter).collect();
        let field = |c: usize| {
            fields.get(c).copied().ok_or_else(|| {
                format!(
                    "expected at least {} columns, found {}",
                    c + 1,
                    fields.len()
                )
            })
        };
        let user = field(self.user_col)?.trim();
        let mut item = field(self.item_col)?.trim().to_string();
        if item.is_empty() && !self.item_fallback_cols.is_empty() {
            let parts = self
                .item_fallback_cols
                .iter()
                .map(|&c| field(c).map(str::trim))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if parts.iter().any(|p| !p.is_empty()) {
                item = parts.join("::");
            }
        }
        let timestamp = parse_time(field(self.time_col)?.trim(), self.time_format)?;
        Event::new(user, item, timestamp).map_err(|e| e.to_string())
    }
}

fn parse_time(raw: &str, format: TimeFormat) -> std::result::Result<u64, String> {
    let seconds = match format {
        TimeFormat::EpochSeconds => raw
            .parse::<i64>()
            .map_err(|e| format!("bad epoch timestamp {raw:?}: {e}"))?,
        TimeFormat::Iso8601 => match DateTime::parse_from_rfc3339(raw) {
            Ok(t) => t.timestamp(),
            Err(_) => ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
                .map(|t| t.and_utc().timestamp())
                .ok_or_else(|| format!("bad ISO-8601 timestamp {raw:?}"))?,
        },
    };
    u64::try_from(seconds).map_err(|_| format!("timestamp {raw:?} is before the epoch"))
}

/// Parsed events plus the number of malformed lines that were skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub log: InteractionLog,
    pub skipped: usize,
}

/// Reads a delimited log. Blank lines are ignored. Malformed lines are
/// counted and skipped, or reported with their line number when `strict`.
pub fn parse_events(path: &Path, spec: &FormatSpec, strict: bool) -> Result<Parsed> {
    spec.validate().map_err(Error::Usage)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut log = InteractionLog::new();
    let mut skipped = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if (n == 0 && spec.skip_header) || line.trim().is_empty() {
            continue;
        }
        match spec.parse_line(line) {
            Ok(event) => log.push(event),
            Err(message) if strict => return Err(Error::malformed(path, n + 1, message)),
            Err(_) => skipped += 1,
        }
    }
    Ok(Parsed { log, skipped })
}

/// Reads a canonical TSV in strict mode.
pub fn read_canonical(path: &Path) -> Result<InteractionLog> {
    parse_events(path, &FormatSpec::default(), true).map(|p| p.log)
}

pub fn format_canonical(log: &InteractionLog) -> String {
    let mut out = String::new();
    for e in log {
        out.push_str(&e.user);
        out.push('\t');
        out.push_str(&e.item);
        out.push('\t');
        out.push_str(&e.timestamp.to_string());
        out.push('\n');
    }
    out
}

/// Writes the canonical TSV. Ids containing tabs or line breaks cannot be
/// represented and are rejected.
pub fn write_canonical(path: &Path, log: &InteractionLog) -> Result<()> {
    let bad = |s: &str| s.contains(['\t', '\n', '\r']);
    if let Some(e) = log.iter().find(|e| bad(&e.user) || bad(&e.item)) {
        return Err(Error::Usage(format!(
            "identifier {:?}/{:?} cannot be written as canonical TSV",
            e.user, e.item
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_canonical(log).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_line() {
        let e = FormatSpec::default()
            .parse_line("u1\tv9\t1350000000")
            .unwrap();
        assert_eq!(e, Event::new("u1", "v9", 1350000000).unwrap());
    }

    #[test]
    fn short_line_is_malformed() {
        assert!(FormatSpec::default().parse_line("u1\tv9").is_err());
        assert!(FormatSpec::default().parse_line("u1\tv9\tnoon").is_err());
        assert!(FormatSpec::default().parse_line("u1\tv9\t-5").is_err());
        assert!(FormatSpec::default().parse_line("\tv9\t5").is_err());
    }

    #[test]
    fn lastfm_line() {
        let line = "user_000001\t2009-05-04T23:08:57Z\tf1b1cf71-bd35-4e99-8624-24a6e15f133a\tDeep Dish\ttrackX-id\tFuck Me Im Famous";
        let e = FormatSpec::lastfm().parse_line(line).unwrap();
        assert_eq!(e.user, "user_000001");
        assert_eq!(e.item, "trackX-id");
        assert_eq!(e.timestamp, 1241478537);
    }

    #[test]
    fn lastfm_fallback_to_names() {
        let line = "user_000001\t2009-05-04T23:08:57Z\t\tArtist\t\tSong";
        let e = FormatSpec::lastfm().parse_line(line).unwrap();
        assert_eq!(e.item, "Artist::Song");
    }

    #[test]
    fn iso_variants() {
        assert_eq!(
            parse_time("1970-01-01T00:01:00Z", TimeFormat::Iso8601),
            Ok(60)
        );
        assert_eq!(
            parse_time("1970-01-01 00:01:00", TimeFormat::Iso8601),
            Ok(60)
        );
        assert_eq!(
            parse_time("1970-01-01T02:00:00+02:00", TimeFormat::Iso8601),
            Ok(0)
        );
        assert!(parse_time("1969-12-31T23:59:59Z", TimeFormat::Iso8601).is_err());
    }

    #[test]
    fn duplicate_columns_rejected() {
        let spec = FormatSpec {
            item_col: 0,
            ..FormatSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn canonical_text() {
        let log: InteractionLog = vec![
            Event::new("a", "x", 5).unwrap(),
            Event::new("b", "y", 1350000000).unwrap(),
        ]
        .into();
        assert_eq!(format_canonical(&log), "a\tx\t5\nb\ty\t1350000000\n");
    }
}

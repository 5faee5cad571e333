//! Tabular output of rank distributions as markdown, CSV or JSON.
//!
//! Every format carries the same columns in the same order: `shape`, `i`,
//! `count`, `source`, `anchor`. Counts are decimal strings throughout.

use std::fmt::Write as _;
use std::str::FromStr;

use persymm_core::RankDistribution;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub shape: String,
    pub i: usize,
    pub count: String,
    pub source: String,
    pub anchor: String,
}

pub const COLUMNS: [&str; 5] = ["shape", "i", "count", "source", "anchor"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Md,
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown format {0:?} (expected md, csv or json)")]
pub struct UnknownFormat(String);

impl FromStr for Format {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(Format::Md),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(UnknownFormat(s.to_owned())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportParseError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("CSV header is {0:?}")]
    Header(Vec<String>),
}

/// One row per rank. `anchors[i]`, when given, labels rank `i`.
pub fn rows_for(dist: &RankDistribution, anchors: Option<&[String]>) -> Vec<ReportRow> {
    dist.counts()
        .iter()
        .enumerate()
        .map(|(i, c)| ReportRow {
            shape: dist.shape_str().to_owned(),
            i,
            count: c.to_string(),
            source: dist.source().as_str().to_owned(),
            anchor: anchors
                .and_then(|a| a.get(i))
                .cloned()
                .unwrap_or_default(),
        })
        .collect()
}

pub fn emit(rows: &[ReportRow], format: Format) -> String {
    match format {
        Format::Md => emit_markdown(rows),
        Format::Csv => emit_csv(rows),
        Format::Json => serde_json::to_string_pretty(rows).expect("rows serialize") + "\n",
    }
}

fn emit_markdown(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.shape.clone(),
                r.i.to_string(),
                r.count.clone(),
                r.source.clone(),
                r.anchor.clone(),
            ]
        })
        .collect();
    let mut widths = COLUMNS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        out.push('|');
        for (c, w) in row.iter().zip(widths) {
            let _ = write!(out, " {c:<w$} |");
        }
        out.push('\n');
    };
    line(&mut out, &COLUMNS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

fn emit_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(COLUMNS).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, ReportParseError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(ReportParseError::Header(header));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn parse_json(text: &str) -> Result<Vec<ReportRow>, ReportParseError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use persymm_core::{Source, StackedShape};

    fn five() -> RankDistribution {
        let s = StackedShape::parse("[5]x5").unwrap();
        RankDistribution::from_u64(&s, &[1, 3, 12, 48, 192, 256], Source::Oracle).unwrap()
    }

    #[test]
    fn markdown_has_header_rule_and_one_line_per_rank() {
        let md = emit(&rows_for(&five(), None), Format::Md);
        let lines: Vec<_> = md.lines().collect();
        assert_eq!(lines.len(), 2 + 6);
        assert!(lines[0].starts_with("| shape"));
        assert!(lines[7].contains("256"));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rows = rows_for(&five(), None);
        assert_eq!(parse_csv(&emit(&rows, Format::Csv)).unwrap(), rows);
        assert_eq!(parse_json(&emit(&rows, Format::Json)).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_reordered_columns() {
        assert!(parse_csv("i,shape,count,source,anchor\n").is_err());
    }
}

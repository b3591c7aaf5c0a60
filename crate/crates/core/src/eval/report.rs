use std::fmt::Write;

use super::EvalResult;
use crate::error::{Error, Result};

/// One system's line of a machine-readable report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRecord {
    pub label: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl ReportRecord {
    pub fn new(label: &str, r: &EvalResult) -> Self {
        ReportRecord {
            label: label.replace(['\n', '\r'], " "),
            correct: r.correct,
            total: r.total,
            accuracy: r.accuracy,
        }
    }
}

fn percent(acc: f64) -> String {
    format!("{:.2}", acc * 100.0)
}

/// Aligned plain-text table with accuracies in percent to two decimals.
pub fn render_table(records: &[ReportRecord]) -> String {
    let header = ["system", "correct", "total", "accuracy"];
    let rows: Vec<[String; 4]> = records
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.correct.to_string(),
                r.total.to_string(),
                percent(r.accuracy),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 4]| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (i, c) in cells.iter().enumerate().skip(1) {
            write!(s, "  {:>w$}", c, w = widths[i]).unwrap();
        }
        writeln!(out, "{}", s.trim_end()).unwrap();
    };
    line(&mut out, header);
    for row in &rows {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}

/// `key = value` blocks, one per record, separated by blank lines.
pub fn render_machine(records: &[ReportRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "label = {}", r.label).unwrap();
        writeln!(out, "correct = {}", r.correct).unwrap();
        writeln!(out, "total = {}", r.total).unwrap();
        writeln!(out, "accuracy = {}", r.accuracy).unwrap();
    }
    out
}

/// Both renderings of labeled results: `(table, machine-readable)`.
pub fn report(results: &[(&str, &EvalResult)]) -> (String, String) {
    let records: Vec<ReportRecord> = results
        .iter()
        .map(|(l, r)| ReportRecord::new(l, r))
        .collect();
    (render_table(&records), render_machine(&records))
}

/// Parses [`render_machine`] output.
pub fn parse_report(text: &str) -> Result<Vec<ReportRecord>> {
    let mut records = Vec::new();
    let mut fields: Vec<(usize, String, String)> = Vec::new();
    let lines = text.lines().chain(std::iter::once(""));
    for (i, line) in lines.enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            if !fields.is_empty() {
                records.push(record(std::mem::take(&mut fields))?);
            }
            continue;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Format {
            path: "report".into(),
            line: lineno,
            detail: format!("expected `key = value`, got {line:?}"),
        })?;
        fields.push((lineno, k.trim().to_string(), v.to_string()));
    }
    Ok(records)
}

fn record(fields: Vec<(usize, String, String)>) -> Result<ReportRecord> {
    let first = fields[0].0;
    let err = |line: usize, detail: String| Error::Format {
        path: "report".into(),
        line,
        detail,
    };
    let get = |key: &str| {
        fields
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, v)| (*l, v.as_str()))
            .ok_or_else(|| err(first, format!("record lacks {key:?}")))
    };
    if let Some((l, k, _)) = fields
        .iter()
        .find(|(_, k, _)| !["label", "correct", "total", "accuracy"].contains(&k.as_str()))
    {
        return Err(err(*l, format!("unknown key {k:?}")));
    }
    let num = |key: &str| -> Result<usize> {
        let (l, v) = get(key)?;
        v.parse().map_err(|e| err(l, format!("{key}: {e}")))
    };
    let (al, av) = get("accuracy")?;
    Ok(ReportRecord {
        label: get("label")?.1.to_string(),
        correct: num("correct")?,
        total: num("total")?,
        accuracy: av.parse().map_err(|e| err(al, format!("accuracy: {e}")))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding_and_round_trip() {
        assert_eq!(percent(0.951471), "95.15");
        assert_eq!(percent(1.0), "100.00");
        let recs = vec![
            ReportRecord {
                label: "MFC".into(),
                correct: 7,
                total: 10,
                accuracy: 0.7,
            },
            ReportRecord {
                label: "resnet_cbp_w +aux".into(),
                correct: 2,
                total: 3,
                accuracy: 2.0 / 3.0,
            },
        ];
        assert_eq!(parse_report(&render_machine(&recs)).unwrap(), recs);
        let table = render_table(&recs);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("66.67"));
    }
}

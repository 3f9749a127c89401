//! Retrieval reports: JSON lines for machines, a table for people.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;
use xlalign_core::retrieval::{EvalReport, EvalSettings, RetrievalOutcome};

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportLine<'a> {
    Pair {
        pair: &'a str,
        accuracy: f64,
        correct: usize,
        total: usize,
        ties: usize,
    },
    Summary {
        overall: f64,
        per_language: &'a std::collections::BTreeMap<String, f64>,
        direction: &'static str,
        settings: &'a Option<EvalSettings>,
    },
}

pub fn direction_label(bidirectional: bool) -> &'static str {
    if bidirectional {
        "bidirectional-mean"
    } else {
        "source-to-target"
    }
}

pub fn write_report<W: Write>(
    mut sink: W,
    outcomes: &[(String, RetrievalOutcome)],
    report: &EvalReport,
    bidirectional: bool,
) -> Result<()> {
    for (label, o) in outcomes {
        serde_json::to_writer(
            &mut sink,
            &ReportLine::Pair {
                pair: label,
                accuracy: o.accuracy,
                correct: o.correct,
                total: o.total,
                ties: o.ties,
            },
        )?;
        sink.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut sink,
        &ReportLine::Summary {
            overall: report.overall,
            per_language: &report.per_language,
            direction: direction_label(bidirectional),
            settings: &report.settings,
        },
    )?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

pub fn render_table(outcomes: &[(String, RetrievalOutcome)], report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16}{:>10}{:>10}{:>8}",
        "pair", "accuracy", "correct", "ties"
    );
    for (label, o) in outcomes {
        let _ = writeln!(
            out,
            "{:<16}{:>10.2}{:>10}{:>8}",
            label,
            o.accuracy * 100.0,
            format!("{}/{}", o.correct, o.total),
            o.ties
        );
    }
    if report.per_language.len() > 2 || outcomes.len() > 1 {
        let _ = writeln!(out);
        for (lang, acc) in &report.per_language {
            let _ = writeln!(out, "{:<16}{:>10.2}", lang, acc * 100.0);
        }
    }
    let _ = writeln!(out, "{:<16}{:>10.2}", "average", report.overall * 100.0);
    out
}

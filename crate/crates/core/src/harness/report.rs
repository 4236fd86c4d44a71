use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, PriorSetup, ReplicateReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

const HEADER: [&str; 8] = ["n", "model", "prior", "RMSE(theta)", "SE", "RMSE(eta)", "CR95", "KS"];

/// One table row as printed, values rounded to three decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub model: Model,
    pub prior: PriorSetup,
    pub rmse_theta: f64,
    pub se: f64,
    pub rmse_eta: f64,
    pub cr95: f64,
    pub ks: f64,
}

fn cells(r: &ReplicateReport) -> [String; 8] {
    [
        r.n.to_string(),
        r.model.to_string(),
        r.prior_setup.to_string(),
        format!("{:.3}", r.rmse_theta),
        format!("{:.3}", r.se),
        format!("{:.3}", r.rmse_eta),
        format!("{:.3}", r.cr95),
        format!("{:.3}", r.ks_median),
    ]
}

pub fn render_report(reports: &[ReplicateReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to emit"));
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Parse(e.to_string());
            w.write_record(HEADER).map_err(io)?;
            for r in reports {
                w.write_record(cells(r)).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", HEADER.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(HEADER.len())));
            for r in reports {
                out.push_str(&format!("| {} |\n", cells(r).join(" | ")));
            }
            Ok(out)
        }
    }
}

/// Writes the rendered reports to `path`.
pub fn emit_report(reports: &[ReplicateReport], format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(reports, format)?)?;
    Ok(())
}

/// Reads back a table written in [`ReportFormat::Markdown`].
pub fn parse_markdown_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let split = |l: &str| -> Vec<String> {
        l.trim()
            .trim_matches('|')
            .split('|')
            .map(|c| c.trim().to_string())
            .collect()
    };
    let header = lines.next().ok_or_else(|| Error::Parse("empty table".into()))?;
    if split(header) != HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    lines.next().ok_or_else(|| Error::Parse("missing separator row".into()))?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    lines
        .map(|l| {
            let c = split(l);
            if c.len() != HEADER.len() {
                return Err(Error::Parse(format!("row has {} cells: {l:?}", c.len())));
            }
            Ok(ReportRow {
                n: c[0].parse().map_err(|e| Error::Parse(format!("{:?}: {e}", c[0])))?,
                model: c[1].parse()?,
                prior: c[2].parse()?,
                rmse_theta: num(&c[3])?,
                se: num(&c[4])?,
                rmse_eta: num(&c[5])?,
                cr95: num(&c[6])?,
                ks: num(&c[7])?,
            })
        })
        .collect()
}

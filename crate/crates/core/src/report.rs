//! Plot-ready output tables and their readers.
//!
//! CSV outputs are one or more blocks, each with its own header, separated by
//! a single blank line. JSON outputs carry the same rows as named arrays.
//! Machine columns keep full precision; `*_display` columns are rounded to
//! two decimals.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::DecompositionRecord;
use crate::panel_store::{CountryCode, CoverageReport, Year};
use crate::trade_costs::{format_flags, ChangeSummary, TradeCostSeries};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("utf-8: {0}")]
    Utf8(#[from] std::string::FromUtf8Error),
    #[error("expected {expected} block(s), found {found}")]
    BlockCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Two-decimal display string; values that round to zero print as `0.00`.
pub fn display2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub year: Year,
    pub i: String,
    pub j_or_group: String,
    pub sigma: f64,
    pub tau_percent: Option<f64>,
    pub flag: String,
    pub tau_percent_display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub i: String,
    pub j_or_group: String,
    pub sigma: f64,
    pub start_year: Year,
    pub end_year: Year,
    pub tau_start_percent: f64,
    pub tau_end_percent: f64,
    pub pct_change: f64,
    pub annualized_change_pct: Option<f64>,
    pub pct_change_display: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub series: Vec<CostRow>,
    pub summary: Vec<SummaryRow>,
}

impl CostReport {
    /// Appends the rows of one series (year ascending).
    pub fn push_series(&mut self, home: &CountryCode, series: &TradeCostSeries) {
        for (year, point) in &series.points {
            let tau_percent = point.tau.map(|t| 100.0 * t);
            self.series.push(CostRow {
                year: *year,
                i: series.subject.i_label(home),
                j_or_group: series.subject.j_label(),
                sigma: series.sigma.value(),
                tau_percent,
                flag: format_flags(&point.flags),
                tau_percent_display: tau_percent.map(display2).unwrap_or_default(),
            });
        }
    }

    pub fn push_summary(&mut self, home: &CountryCode, series: &TradeCostSeries, s: &ChangeSummary) {
        self.summary.push(SummaryRow {
            i: series.subject.i_label(home),
            j_or_group: series.subject.j_label(),
            sigma: series.sigma.value(),
            start_year: s.start_year,
            end_year: s.end_year,
            tau_start_percent: 100.0 * s.tau_start,
            tau_end_percent: 100.0 * s.tau_end,
            pct_change: s.pct_change,
            annualized_change_pct: s.annualized_change,
            pct_change_display: display2(s.pct_change),
        });
    }

    /// Sorts series rows by year, then `i`, then `j_or_group`, then sigma.
    pub fn sort(&mut self) {
        self.series.sort_by(|a, b| {
            (a.year, &a.i, &a.j_or_group).cmp(&(b.year, &b.i, &b.j_or_group)).then(a.sigma.total_cmp(&b.sigma))
        });
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Csv => Ok(format!("{}\n{}", to_csv(&self.series)?, to_csv(&self.summary)?)),
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self, ReportError> {
        match format {
            Format::Csv => {
                let blocks = split_blocks(text);
                if blocks.len() != 2 {
                    return Err(ReportError::BlockCount { expected: 2, found: blocks.len() });
                }
                Ok(Self { series: from_csv(blocks[0])?, summary: from_csv(blocks[1])? })
            }
            Format::Json => Ok(serde_json::from_str(text)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub scope: String,
    pub pair_or_group: String,
    pub base_window: String,
    pub end_year: Year,
    pub growth_pct: f64,
    #[serde(rename = "A_pct")]
    pub a_pct: f64,
    #[serde(rename = "B_pct")]
    pub b_pct: f64,
    #[serde(rename = "C_pct")]
    pub c_pct: f64,
    pub sum_pct: f64,
    pub flags: String,
}

impl DecompositionRow {
    pub fn from_record(r: &DecompositionRecord) -> Self {
        Self {
            scope: r.scope.kind().to_string(),
            pair_or_group: r.scope.label(),
            base_window: r.base_window.to_string(),
            end_year: r.end_year,
            growth_pct: r.growth_pct,
            a_pct: r.a_pct,
            b_pct: r.b_pct,
            c_pct: r.c_pct,
            sum_pct: r.sum_pct,
            flags: format_flags(&r.flags),
        }
    }

    /// Rounds every percentage to two decimals (published-table display).
    pub fn rounded(&self) -> Self {
        let r = |v: f64| (v * 100.0).round() / 100.0;
        Self {
            growth_pct: r(self.growth_pct),
            a_pct: r(self.a_pct),
            b_pct: r(self.b_pct),
            c_pct: r(self.c_pct),
            sum_pct: r(self.sum_pct),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub rows: Vec<DecompositionRow>,
}

impl DecompositionReport {
    pub fn render(&self, format: Format, display: bool) -> Result<String, ReportError> {
        match format {
            Format::Csv if display => {
                // Fixed two-decimal text so that e.g. 100 prints as 100.00.
                let mut w = csv_writer();
                w.write_record([
                    "scope",
                    "pair_or_group",
                    "base_window",
                    "end_year",
                    "growth_pct",
                    "A_pct",
                    "B_pct",
                    "C_pct",
                    "sum_pct",
                    "flags",
                ])?;
                for row in &self.rows {
                    w.write_record([
                        row.scope.clone(),
                        row.pair_or_group.clone(),
                        row.base_window.clone(),
                        row.end_year.to_string(),
                        display2(row.growth_pct),
                        display2(row.a_pct),
                        display2(row.b_pct),
                        display2(row.c_pct),
                        display2(row.sum_pct),
                        row.flags.clone(),
                    ])?;
                }
                finish_writer(w)
            }
            Format::Csv => to_csv(&self.rows),
            Format::Json if display => {
                let rows: Vec<_> = self.rows.iter().map(DecompositionRow::rounded).collect();
                Ok(serde_json::to_string_pretty(&DecompositionReport { rows })? + "\n")
            }
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self, ReportError> {
        match format {
            Format::Csv => Ok(Self { rows: from_csv(text)? }),
            Format::Json => Ok(serde_json::from_str(text)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub partner: String,
    pub first_complete_year: Option<Year>,
    pub last_complete_year: Option<Year>,
    pub present: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingRow {
    pub partner: String,
    pub year: Year,
    pub slot: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageTable {
    pub partners: Vec<CoverageRow>,
    pub missing: Vec<MissingRow>,
}

impl CoverageTable {
    pub fn from_report(report: &CoverageReport) -> Self {
        Self {
            partners: report
                .partners
                .iter()
                .map(|p| CoverageRow {
                    partner: p.partner.to_string(),
                    first_complete_year: p.first_complete_year,
                    last_complete_year: p.last_complete_year,
                    present: p.present,
                    missing: p.missing,
                })
                .collect(),
            missing: report
                .missing
                .iter()
                .map(|m| MissingRow { partner: m.partner.to_string(), year: m.year, slot: m.slot.to_string() })
                .collect(),
        }
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Csv => Ok(format!(
                "{}\n{}",
                to_csv(&self.partners)?,
                to_csv_with_header(&self.missing, &["partner", "year", "slot"])?
            )),
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self, ReportError> {
        match format {
            Format::Csv => {
                let blocks = split_blocks(text);
                if blocks.len() != 2 {
                    return Err(ReportError::BlockCount { expected: 2, found: blocks.len() });
                }
                Ok(Self { partners: from_csv(blocks[0])?, missing: from_csv(blocks[1])? })
            }
            Format::Json => Ok(serde_json::from_str(text)?),
        }
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish_writer(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes)?)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv_writer();
    for row in rows {
        w.serialize(row)?;
    }
    finish_writer(w)
}

/// Like [`to_csv`] but still emits the header when `rows` is empty.
fn to_csv_with_header<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String, ReportError> {
    if rows.is_empty() {
        let mut w = csv_writer();
        w.write_record(header)?;
        return finish_writer(w);
    }
    to_csv(rows)
}

fn from_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let rows = rdr.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

fn split_blocks(text: &str) -> Vec<&str> {
    text.split("\n\n").filter(|b| !b.trim().is_empty()).collect()
}

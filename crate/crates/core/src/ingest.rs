//! Readers and writers for the canonical CSV files, and the priority merge of
//! several bilateral flow sources into one [`FlowPanel`].
//!
//! Formats (UTF-8, comma-delimited, header row):
//!
//! | file | header |
//! |------|--------|
//! | flows | `year,reporter,partner,export_fob_kusd` (optional trailing `source`) |
//! | domestic | `year,country,domestic_trade_kusd` or `year,country,sector,value_kusd` |
//! | gdp | `year,country,gdp_kusd` |
//! | classification | `country,region,dev_status,bri` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::panel_store::{
    Classification, ClassificationTable, CountryCode, CountryYearPanel, DevStatus, DomesticPanel, FlowKey, FlowPanel,
    GdpPanel, Region, Year,
};

pub const FLOWS_HEADER: [&str; 4] = ["year", "reporter", "partner", "export_fob_kusd"];
pub const FLOWS_SOURCE_COLUMN: &str = "source";
pub const DOMESTIC_HEADER: [&str; 3] = ["year", "country", "domestic_trade_kusd"];
pub const DOMESTIC_SECTOR_HEADER: [&str; 4] = ["year", "country", "sector", "value_kusd"];
pub const GDP_HEADER: [&str; 3] = ["year", "country", "gdp_kusd"];
pub const CLASSIFICATION_HEADER: [&str; 4] = ["country", "region", "dev_status", "bri"];

/// Goods sectors summed into total domestic trade.
pub const GOODS_SECTORS: [&str; 3] = ["agriculture", "mining_energy", "manufacturing"];
/// Sectors present in sectoral extracts but outside the goods aggregate.
pub const NON_GOODS_SECTORS: [&str; 1] = ["services"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{source_name}: header {found:?} does not match expected {expected:?}")]
    SchemaMismatch { source_name: String, expected: Vec<String>, found: Vec<String> },
    #[error("{source_name}: {} malformed row(s); first: {}", .errors.len(), .errors[0])]
    MalformedRows { source_name: String, errors: Vec<RowError> },
    #[error("no source tables to merge")]
    EmptyInput,
    #[error("priority {0} is used by more than one source")]
    DuplicatePriority(i32),
    #[error("csv error: {0}")]
    Csv(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    /// Row-level errors, if this is a malformed-rows report.
    pub fn row_errors(&self) -> &[RowError] {
        match self {
            IngestError::MalformedRows { errors, .. } => errors,
            _ => &[],
        }
    }
}

/// A rejected data row; `line` is 1-based and counts the header as line 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowErrorKind {
    FieldCount { expected: usize, found: usize },
    UnparsableYear(String),
    UnparsableNumber(String),
    NegativeValue(f64),
    NonpositiveValue(f64),
    InvalidCountry(String),
    DuplicateKey(String),
    UnknownEnum { field: &'static str, value: String },
    SelfFlow(String),
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ", self.line)?;
        match &self.kind {
            RowErrorKind::FieldCount { expected, found } => write!(f, "expected {expected} fields, found {found}"),
            RowErrorKind::UnparsableYear(s) => write!(f, "unparsable year {s:?}"),
            RowErrorKind::UnparsableNumber(s) => write!(f, "unparsable number {s:?}"),
            RowErrorKind::NegativeValue(v) => write!(f, "negative value {v}"),
            RowErrorKind::NonpositiveValue(v) => write!(f, "non-positive value {v}"),
            RowErrorKind::InvalidCountry(s) => write!(f, "invalid country code {s:?}"),
            RowErrorKind::DuplicateKey(k) => write!(f, "duplicate key {k}"),
            RowErrorKind::UnknownEnum { field, value } => write!(f, "unknown {field} {value:?}"),
            RowErrorKind::SelfFlow(k) => write!(f, "reporter equals partner in {k}"),
        }
    }
}

/// Flow rows from one provider, ranked by `priority` (lower wins).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub source_id: String,
    pub priority: i32,
    pub rows: BTreeMap<FlowKey, f64>,
}

impl SourceTable {
    pub fn new(source_id: impl Into<String>, priority: i32) -> Self {
        Self { source_id: source_id.into(), priority, rows: BTreeMap::new() }
    }
}

struct Records {
    name: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_records<R: Read>(reader: R, name: &str) -> Result<Records, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::Csv(format!("{name}: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Csv(format!("{name}: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 2);
        rows.push((line, rec));
    }
    Ok(Records { name: name.to_string(), header, rows })
}

fn header_is(found: &[String], expected: &[&str]) -> bool {
    found.len() == expected.len() && found.iter().zip(expected).all(|(a, b)| a == b)
}

fn schema_mismatch(records: &Records, expected: &[&str]) -> IngestError {
    IngestError::SchemaMismatch {
        source_name: records.name.clone(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: records.header.clone(),
    }
}

/// Strict decimal parser: digits, sign, point and exponent only; finite.
/// Thousands separators, `inf` and `NaN` are rejected.
pub fn parse_value(field: &str) -> Result<f64, RowErrorKind> {
    let s = field.trim();
    let allowed = |c: char| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E');
    if s.is_empty() || !s.chars().all(allowed) {
        return Err(RowErrorKind::UnparsableNumber(field.to_string()));
    }
    match s.parse::<f64>() {
        // Normalises -0 to 0 so writers stay deterministic.
        Ok(v) if v.is_finite() => Ok(if v == 0.0 { 0.0 } else { v }),
        _ => Err(RowErrorKind::UnparsableNumber(field.to_string())),
    }
}

fn parse_year(field: &str) -> Result<Year, RowErrorKind> {
    field.trim().parse::<Year>().map_err(|_| RowErrorKind::UnparsableYear(field.to_string()))
}

fn parse_country(field: &str) -> Result<CountryCode, RowErrorKind> {
    CountryCode::new(field.trim()).map_err(|_| RowErrorKind::InvalidCountry(field.to_string()))
}

fn check_fields(rec: &csv::StringRecord, expected: usize) -> Result<(), RowErrorKind> {
    if rec.len() == expected {
        Ok(())
    } else {
        Err(RowErrorKind::FieldCount { expected, found: rec.len() })
    }
}

fn finish<T>(name: &str, value: T, errors: Vec<RowError>) -> Result<T, IngestError> {
    if errors.is_empty() {
        Ok(value)
    } else {
        Err(IngestError::MalformedRows { source_name: name.to_string(), errors })
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| IngestError::io(path, e))
}

struct FlowRow {
    key: FlowKey,
    value: f64,
    source: Option<String>,
}

fn parse_flow_records(records: &Records) -> Result<(Vec<FlowRow>, bool), IngestError> {
    let with_source = if header_is(&records.header, &FLOWS_HEADER) {
        false
    } else {
        let mut extended: Vec<&str> = FLOWS_HEADER.to_vec();
        extended.push(FLOWS_SOURCE_COLUMN);
        if header_is(&records.header, &extended) {
            true
        } else {
            return Err(schema_mismatch(records, &FLOWS_HEADER));
        }
    };
    let width = if with_source { 5 } else { 4 };
    let mut out = Vec::with_capacity(records.rows.len());
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, rec) in &records.rows {
        let parsed = (|| {
            check_fields(rec, width)?;
            let year = parse_year(&rec[0])?;
            let reporter = parse_country(&rec[1])?;
            let partner = parse_country(&rec[2])?;
            let value = parse_value(&rec[3])?;
            let key = FlowKey::new(reporter, partner, year);
            if key.reporter == key.partner {
                return Err(RowErrorKind::SelfFlow(key.to_string()));
            }
            if value < 0.0 {
                return Err(RowErrorKind::NegativeValue(value));
            }
            if !seen.insert(key.clone()) {
                return Err(RowErrorKind::DuplicateKey(key.to_string()));
            }
            let source = with_source.then(|| rec[4].trim().to_string());
            Ok(FlowRow { key, value, source })
        })();
        match parsed {
            Ok(row) => out.push(row),
            Err(kind) => errors.push(RowError { line: *line, kind }),
        }
    }
    finish(&records.name, (out, with_source), errors)
}

/// Reads one flow source file into a [`SourceTable`].
pub fn read_flows(path: &Path, source_id: &str, priority: i32) -> Result<SourceTable, IngestError> {
    read_flows_from(open(path)?, &path.display().to_string(), source_id, priority)
}

pub fn read_flows_from<R: Read>(
    reader: R,
    name: &str,
    source_id: &str,
    priority: i32,
) -> Result<SourceTable, IngestError> {
    let records = read_records(reader, name)?;
    let (rows, _) = parse_flow_records(&records)?;
    let mut table = SourceTable::new(source_id, priority);
    table.rows = rows.into_iter().map(|r| (r.key, r.value)).collect();
    Ok(table)
}

/// Reads a flow file straight into a panel, keeping the `source` column when
/// present and tagging every cell with `default_source` otherwise.
pub fn read_flow_panel(path: &Path, default_source: &str) -> Result<FlowPanel, IngestError> {
    read_flow_panel_from(open(path)?, &path.display().to_string(), default_source)
}

pub fn read_flow_panel_from<R: Read>(reader: R, name: &str, default_source: &str) -> Result<FlowPanel, IngestError> {
    let records = read_records(reader, name)?;
    let (rows, _) = parse_flow_records(&records)?;
    let mut panel = FlowPanel::new();
    for row in rows {
        let source = row.source.unwrap_or_else(|| default_source.to_string());
        panel.insert(row.key, row.value, source);
    }
    Ok(panel)
}

/// Merges sources cell by cell: each key takes the value of the most
/// preferred (lowest priority number) source that has it.
pub fn merge_flow_sources(tables: &[SourceTable]) -> Result<FlowPanel, IngestError> {
    if tables.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut ordered: Vec<&SourceTable> = tables.iter().collect();
    ordered.sort_by_key(|t| t.priority);
    for pair in ordered.windows(2) {
        if pair[0].priority == pair[1].priority {
            return Err(IngestError::DuplicatePriority(pair[0].priority));
        }
    }
    let mut panel = FlowPanel::new();
    for table in ordered {
        supplement(&mut panel, table);
    }
    Ok(panel)
}

/// Fills cells absent from `panel` with values from a less preferred source.
/// Existing cells are never overwritten.
pub fn supplement(panel: &mut FlowPanel, table: &SourceTable) {
    for (key, value) in &table.rows {
        if !panel.contains_key(key) {
            panel.insert(key.clone(), *value, table.source_id.clone());
        }
    }
}

/// Reads `domestic.csv`, either as totals or as a sectoral extract whose
/// goods sectors are summed per country-year.
pub fn read_domestic(path: &Path) -> Result<DomesticPanel, IngestError> {
    read_domestic_from(open(path)?, &path.display().to_string())
}

pub fn read_domestic_from<R: Read>(reader: R, name: &str) -> Result<DomesticPanel, IngestError> {
    let records = read_records(reader, name)?;
    if header_is(&records.header, &DOMESTIC_HEADER) {
        read_country_year(&records, 3)
    } else if header_is(&records.header, &DOMESTIC_SECTOR_HEADER) {
        read_sectoral(&records)
    } else {
        Err(schema_mismatch(&records, &DOMESTIC_HEADER))
    }
}

pub fn read_gdp(path: &Path) -> Result<GdpPanel, IngestError> {
    read_gdp_from(open(path)?, &path.display().to_string())
}

/// World (`WLD`) rows are accepted here; their presence is checked when the
/// dataset is built.
pub fn read_gdp_from<R: Read>(reader: R, name: &str) -> Result<GdpPanel, IngestError> {
    let records = read_records(reader, name)?;
    if !header_is(&records.header, &GDP_HEADER) {
        return Err(schema_mismatch(&records, &GDP_HEADER));
    }
    read_country_year(&records, 3)
}

fn read_country_year(records: &Records, width: usize) -> Result<CountryYearPanel, IngestError> {
    let mut panel = CountryYearPanel::new();
    let mut errors = Vec::new();
    for (line, rec) in &records.rows {
        let parsed = (|| {
            check_fields(rec, width)?;
            let year = parse_year(&rec[0])?;
            let country = parse_country(&rec[1])?;
            let value = parse_value(&rec[2])?;
            if value <= 0.0 {
                return Err(RowErrorKind::NonpositiveValue(value));
            }
            if panel.contains(&country, year) {
                return Err(RowErrorKind::DuplicateKey(format!("({country},{year})")));
            }
            panel.insert(country, year, value);
            Ok(())
        })();
        if let Err(kind) = parsed {
            errors.push(RowError { line: *line, kind });
        }
    }
    finish(&records.name, panel, errors)
}

fn read_sectoral(records: &Records) -> Result<DomesticPanel, IngestError> {
    let mut sums: BTreeMap<(CountryCode, Year), f64> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut errors = Vec::new();
    for (line, rec) in &records.rows {
        let parsed = (|| {
            check_fields(rec, 4)?;
            let year = parse_year(&rec[0])?;
            let country = parse_country(&rec[1])?;
            let sector = rec[2].trim().to_string();
            let value = parse_value(&rec[3])?;
            if value < 0.0 {
                return Err(RowErrorKind::NegativeValue(value));
            }
            let goods = GOODS_SECTORS.contains(&sector.as_str());
            if !goods && !NON_GOODS_SECTORS.contains(&sector.as_str()) {
                return Err(RowErrorKind::UnknownEnum { field: "sector", value: sector });
            }
            if !seen.insert((country.clone(), year, sector.clone())) {
                return Err(RowErrorKind::DuplicateKey(format!("({country},{year},{sector})")));
            }
            if goods {
                *sums.entry((country, year)).or_insert(0.0) += value;
            }
            Ok(())
        })();
        if let Err(kind) = parsed {
            errors.push(RowError { line: *line, kind });
        }
    }
    let mut panel = DomesticPanel::new();
    for ((country, year), total) in sums {
        if total > 0.0 {
            panel.insert(country, year, total);
        } else {
            errors.push(RowError { line: 0, kind: RowErrorKind::NonpositiveValue(total) });
        }
    }
    finish(&records.name, panel, errors)
}

pub fn read_classification(path: &Path) -> Result<ClassificationTable, IngestError> {
    read_classification_from(open(path)?).map_err(|e| rename_source(e, &path.display().to_string()))
}

pub fn read_classification_from<R: Read>(reader: R) -> Result<ClassificationTable, IngestError> {
    let records = read_records(reader, "classification")?;
    if !header_is(&records.header, &CLASSIFICATION_HEADER) {
        return Err(schema_mismatch(&records, &CLASSIFICATION_HEADER));
    }
    let mut table = ClassificationTable::new();
    let mut errors = Vec::new();
    for (line, rec) in &records.rows {
        let parsed = (|| {
            check_fields(rec, 4)?;
            let country = parse_country(&rec[0])?;
            let region: Region = rec[1].parse().map_err(|v| RowErrorKind::UnknownEnum { field: "region", value: v })?;
            let dev_status: DevStatus =
                rec[2].parse().map_err(|v| RowErrorKind::UnknownEnum { field: "dev_status", value: v })?;
            let bri = match rec[3].trim() {
                "true" => true,
                "false" => false,
                other => return Err(RowErrorKind::UnknownEnum { field: "bri", value: other.to_string() }),
            };
            if table.get(&country).is_some() {
                return Err(RowErrorKind::DuplicateKey(country.to_string()));
            }
            table.insert(country, Classification { region, dev_status, bri });
            Ok(())
        })();
        if let Err(kind) = parsed {
            errors.push(RowError { line: *line, kind });
        }
    }
    finish(&records.name, table, errors)
}

fn rename_source(err: IngestError, name: &str) -> IngestError {
    match err {
        IngestError::SchemaMismatch { expected, found, .. } => {
            IngestError::SchemaMismatch { source_name: name.to_string(), expected, found }
        }
        IngestError::MalformedRows { errors, .. } => {
            IngestError::MalformedRows { source_name: name.to_string(), errors }
        }
        other => other,
    }
}

fn write_csv<F>(header: &[&str], fill: F) -> Result<String, IngestError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let run = |w: &mut csv::Writer<Vec<u8>>| -> Result<(), csv::Error> {
        w.write_record(header)?;
        fill(w)?;
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| IngestError::Csv(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| IngestError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| IngestError::Csv(e.to_string()))
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

pub fn flows_to_string(panel: &FlowPanel, with_source: bool) -> Result<String, IngestError> {
    let mut header = FLOWS_HEADER.to_vec();
    if with_source {
        header.push(FLOWS_SOURCE_COLUMN);
    }
    write_csv(&header, |w| {
        for (key, cell) in panel.iter() {
            let mut rec =
                vec![key.year.to_string(), key.reporter.to_string(), key.partner.to_string(), format_value(cell.value)];
            if with_source {
                rec.push(cell.source.clone());
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn country_year_to_string(panel: &CountryYearPanel, header: &[&str]) -> Result<String, IngestError> {
    // Rows are ordered by year, then country.
    let mut rows: Vec<_> = panel.iter().collect();
    rows.sort_by(|a, b| (a.0 .1, &a.0 .0).cmp(&(b.0 .1, &b.0 .0)));
    write_csv(header, |w| {
        for ((country, year), value) in rows {
            w.write_record([year.to_string(), country.to_string(), format_value(*value)])?;
        }
        Ok(())
    })
}

pub fn domestic_to_string(panel: &DomesticPanel) -> Result<String, IngestError> {
    country_year_to_string(panel, &DOMESTIC_HEADER)
}

pub fn gdp_to_string(panel: &GdpPanel) -> Result<String, IngestError> {
    country_year_to_string(panel, &GDP_HEADER)
}

pub fn classification_to_string(table: &ClassificationTable) -> Result<String, IngestError> {
    write_csv(&CLASSIFICATION_HEADER, |w| {
        for (country, c) in table.iter() {
            w.write_record([country.to_string(), c.region.to_string(), c.dev_status.to_string(), c.bri.to_string()])?;
        }
        Ok(())
    })
}

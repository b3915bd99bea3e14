//! Canonical in-memory data model: bilateral flows, domestic trade, GDP and
//! partner classifications joined around one focal ("home") economy.
//!
//! All monetary values are thousand current USD. Missing observations are
//! absent map entries; a stored zero is a real (economically meaningful)
//! observation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{self, IngestError};

pub type Year = i32;

/// Reserved code for the world aggregate in the GDP panel.
pub const WORLD_CODE: &str = "WLD";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("invalid country code {0:?}: expected 2-8 uppercase ASCII letters or digits starting with a letter")]
    InvalidCountryCode(String),
    #[error("sigma must be finite and strictly greater than 1, got {0}")]
    SigmaOutOfRange(f64),
    #[error("country {0} appears in the flow panel but has no classification")]
    MissingClassification(CountryCode),
    #[error("missing {series} for year {year}")]
    MissingHomeSeries { series: String, year: Year },
    #[error("negative value {value} in {cell}")]
    NegativeValue { cell: String, value: f64 },
    #[error("non-positive value {value} in {cell}")]
    NonpositiveValue { cell: String, value: f64 },
    #[error("flow cell {0} has identical reporter and partner")]
    SelfFlow(String),
    #[error("world aggregate {WORLD_CODE} cannot be a flow reporter or partner ({0})")]
    WorldInFlows(String),
    #[error("world GDP in {year} ({world}) is below GDP of {country} ({value})")]
    WorldBelowCountry { country: CountryCode, year: Year, world: f64, value: f64 },
    #[error("flow cell {cell} lies outside the panel range {start}-{end}")]
    YearOutOfRange { cell: String, start: Year, end: Year },
    #[error("invalid year range {0}-{1}")]
    InvalidYearRange(Year, Year),
    #[error("the flow panel is empty")]
    EmptyFlows,
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Short uppercase economy identifier (ISO-3166 alpha-3 style).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode(String);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self, PanelError> {
        let valid_len = (2..=8).contains(&code.len());
        let mut chars = code.chars();
        let starts_alpha = chars.next().is_some_and(|c| c.is_ascii_uppercase());
        let rest_ok = code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if valid_len && starts_alpha && rest_ok {
            Ok(Self(code.to_string()))
        } else {
            Err(PanelError::InvalidCountryCode(code.to_string()))
        }
    }

    pub fn world() -> Self {
        Self(WORLD_CODE.to_string())
    }

    pub fn is_world(&self) -> bool {
        self.0 == WORLD_CODE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CountryCode {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for CountryCode {
    type Error = PanelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> Self {
        c.0
    }
}

/// Elasticity of substitution between goods; strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sigma(f64);

impl Sigma {
    pub const DEFAULT: Sigma = Sigma(8.0);

    pub fn new(value: f64) -> Result<Self, PanelError> {
        if value.is_finite() && value > 1.0 {
            Ok(Self(value))
        } else {
            Err(PanelError::SigmaOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Sigma {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for Sigma {
    type Error = PanelError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Sigma> for f64 {
    fn from(s: Sigma) -> Self {
        s.0
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Inclusive range of panel years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: Year,
    pub end: Year,
}

impl YearRange {
    pub fn new(start: Year, end: Year) -> Result<Self, PanelError> {
        if start > end {
            return Err(PanelError::InvalidYearRange(start, end));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: Year) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = Year> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Key of a directed flow cell. Ordering is year, then reporter, then partner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub year: Year,
    pub reporter: CountryCode,
    pub partner: CountryCode,
}

impl FlowKey {
    pub fn new(reporter: CountryCode, partner: CountryCode, year: Year) -> Self {
        Self { year, reporter, partner }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.reporter, self.partner, self.year)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowCell {
    pub value: f64,
    pub source: String,
}

/// Directed bilateral exports X_ij with per-cell source provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowPanel {
    cells: BTreeMap<FlowKey, FlowCell>,
}

impl FlowPanel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a cell. Validation happens in [`build_dataset`].
    pub fn insert(&mut self, key: FlowKey, value: f64, source: impl Into<String>) {
        self.cells.insert(key, FlowCell { value, source: source.into() });
    }

    pub fn get(&self, reporter: &CountryCode, partner: &CountryCode, year: Year) -> Option<f64> {
        self.cell(reporter, partner, year).map(|c| c.value)
    }

    pub fn cell(&self, reporter: &CountryCode, partner: &CountryCode, year: Year) -> Option<&FlowCell> {
        // BTreeMap lookup needs an owned key; codes are short so the clone is negligible.
        self.cells.get(&FlowKey::new(reporter.clone(), partner.clone(), year))
    }

    pub fn contains_key(&self, key: &FlowKey) -> bool {
        self.cells.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FlowKey, &FlowCell)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn remove(&mut self, key: &FlowKey) -> Option<FlowCell> {
        self.cells.remove(key)
    }

    /// Number of cells won by each source tag.
    pub fn source_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for cell in self.cells.values() {
            *counts.entry(cell.source.clone()).or_insert(0) += 1;
        }
        counts
    }

    fn year_span(&self) -> Option<(Year, Year)> {
        let first = self.cells.keys().next()?.year;
        let last = self.cells.keys().next_back()?.year;
        Some((first, last))
    }
}

/// Values keyed by (country, year); used for both domestic trade and GDP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountryYearPanel {
    values: BTreeMap<(CountryCode, Year), f64>,
}

impl CountryYearPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, country: CountryCode, year: Year, value: f64) {
        self.values.insert((country, year), value);
    }

    pub fn get(&self, country: &CountryCode, year: Year) -> Option<f64> {
        self.values.get(&(country.clone(), year)).copied()
    }

    pub fn contains(&self, country: &CountryCode, year: Year) -> bool {
        self.values.contains_key(&(country.clone(), year))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(CountryCode, Year), &f64)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn remove(&mut self, country: &CountryCode, year: Year) -> Option<f64> {
        self.values.remove(&(country.clone(), year))
    }
}

/// Intranational trade X_ii.
pub type DomesticPanel = CountryYearPanel;
/// Nominal income Y_i, including `WLD` rows for world income.
pub type GdpPanel = CountryYearPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    SoutheastAsia,
    EastAsia,
    SouthAsia,
    Oceania,
    Europe,
    NorthAmerica,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::SoutheastAsia,
        Region::EastAsia,
        Region::SouthAsia,
        Region::Oceania,
        Region::Europe,
        Region::NorthAmerica,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::SoutheastAsia => "Southeast Asia",
            Region::EastAsia => "East Asia",
            Region::SouthAsia => "South Asia",
            Region::Oceania => "Oceania",
            Region::Europe => "Europe",
            Region::NorthAmerica => "North America",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = String;
    /// Accepts the display name or a slug (`southeast_asia`, `southeast-asia`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String =
            s.trim().chars().map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() }).collect();
        Region::ALL.into_iter().find(|r| r.name().to_ascii_lowercase() == norm).ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevStatus {
    Developed,
    DevelopingEmerging,
}

impl DevStatus {
    pub fn name(self) -> &'static str {
        match self {
            DevStatus::Developed => "developed",
            DevStatus::DevelopingEmerging => "developing_emerging",
        }
    }
}

impl fmt::Display for DevStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DevStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "developed" => Ok(DevStatus::Developed),
            "developing_emerging" => Ok(DevStatus::DevelopingEmerging),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub region: Region,
    pub dev_status: DevStatus,
    pub bri: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassificationTable {
    entries: BTreeMap<CountryCode, Classification>,
}

impl ClassificationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, country: CountryCode, class: Classification) {
        self.entries.insert(country, class);
    }

    pub fn get(&self, country: &CountryCode) -> Option<&Classification> {
        self.entries.get(country)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CountryCode, &Classification)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The classification shipped with the crate: 30 partner economies in six
    /// regions, split 23/7 by development status and 12/18 by BRI corridor.
    pub fn bundled() -> Self {
        ingest::read_classification_from(BUNDLED_CLASSIFICATION.as_bytes())
            .expect("bundled classification is well-formed")
    }
}

pub const BUNDLED_CLASSIFICATION: &str = include_str!("../data/classification.csv");

/// A validated, immutable join of all panels around one focal economy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    flows: FlowPanel,
    domestic: DomesticPanel,
    gdp: GdpPanel,
    classes: ClassificationTable,
    home: CountryCode,
    years: YearRange,
    partners: Vec<CountryCode>,
}

impl Dataset {
    pub fn flows(&self) -> &FlowPanel {
        &self.flows
    }

    pub fn domestic(&self) -> &DomesticPanel {
        &self.domestic
    }

    pub fn gdp(&self) -> &GdpPanel {
        &self.gdp
    }

    pub fn classes(&self) -> &ClassificationTable {
        &self.classes
    }

    pub fn home(&self) -> &CountryCode {
        &self.home
    }

    pub fn years(&self) -> YearRange {
        self.years
    }

    /// Economies that trade with the home country in the flow panel, sorted by code.
    pub fn partners(&self) -> &[CountryCode] {
        &self.partners
    }

    pub fn flow(&self, reporter: &CountryCode, partner: &CountryCode, year: Year) -> Option<f64> {
        self.flows.get(reporter, partner, year)
    }

    pub fn domestic_trade(&self, country: &CountryCode, year: Year) -> Option<f64> {
        self.domestic.get(country, year)
    }

    pub fn income(&self, country: &CountryCode, year: Year) -> Option<f64> {
        self.gdp.get(country, year)
    }

    pub fn world_income(&self, year: Year) -> Option<f64> {
        self.gdp.get(&CountryCode::world(), year)
    }

    pub fn classification(&self, country: &CountryCode) -> Option<&Classification> {
        self.classes.get(country)
    }

    /// Writes the four canonical CSV files and `manifest.json` into `dir`.
    pub fn export_dir(&self, dir: &Path) -> Result<(), PanelError> {
        fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        let files = [
            (FLOWS_FILE, ingest::flows_to_string(&self.flows, true)?),
            (DOMESTIC_FILE, ingest::domestic_to_string(&self.domestic)?),
            (GDP_FILE, ingest::gdp_to_string(&self.gdp)?),
            (CLASSIFICATION_FILE, ingest::classification_to_string(&self.classes)?),
        ];
        let mut checksums = BTreeMap::new();
        for (name, body) in &files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| IngestError::io(&path, e))?;
            checksums.insert(name.to_string(), sha256_hex(body.as_bytes()));
        }
        let manifest = Manifest {
            home: self.home.clone(),
            start_year: self.years.start,
            end_year: self.years.end,
            files: checksums,
        };
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| PanelError::Manifest(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, body + "\n").map_err(|e| IngestError::io(&path, e))?;
        Ok(())
    }

    /// Loads a dataset directory. When a manifest is present its checksums are
    /// verified and its home/year range take effect unless `home` overrides it.
    pub fn load_dir(dir: &Path, home: Option<&CountryCode>) -> Result<Dataset, PanelError> {
        Self::load_dir_with_sources(dir, home, &[])
    }

    /// Like [`Dataset::load_dir`], then fills flow cells absent from
    /// `flows.csv` from `extra`, earlier tables first.
    pub fn load_dir_with_sources(
        dir: &Path,
        home: Option<&CountryCode>,
        extra: &[ingest::SourceTable],
    ) -> Result<Dataset, PanelError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| IngestError::io(&manifest_path, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| PanelError::Manifest(e.to_string()))?;
            for (name, sum) in &m.files {
                let path = dir.join(name);
                let bytes = fs::read(&path).map_err(|e| IngestError::io(&path, e))?;
                if &sha256_hex(&bytes) != sum {
                    return Err(PanelError::ChecksumMismatch(name.clone()));
                }
            }
            Some(m)
        } else {
            None
        };
        let home = match (home, &manifest) {
            (Some(h), _) => h.clone(),
            (None, Some(m)) => m.home.clone(),
            (None, None) => return Err(PanelError::Manifest("no manifest.json and no home country given".into())),
        };
        let mut flows = ingest::read_flow_panel(&dir.join(FLOWS_FILE), "flows")?;
        for table in extra {
            ingest::supplement(&mut flows, table);
        }
        let domestic = ingest::read_domestic(&dir.join(DOMESTIC_FILE))?;
        let gdp = ingest::read_gdp(&dir.join(GDP_FILE))?;
        let classes = ingest::read_classification(&dir.join(CLASSIFICATION_FILE))?;
        let range = match &manifest {
            Some(m) => Some(YearRange::new(m.start_year, m.end_year)?),
            None => None,
        };
        build_dataset_in_range(flows, domestic, gdp, classes, home, range)
    }
}

pub const FLOWS_FILE: &str = "flows.csv";
pub const DOMESTIC_FILE: &str = "domestic.csv";
pub const GDP_FILE: &str = "gdp.csv";
pub const CLASSIFICATION_FILE: &str = "classification.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    home: CountryCode,
    start_year: Year,
    end_year: Year,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Joins the panels into a [`Dataset`]; the year range spans the flow panel.
pub fn build_dataset(
    flows: FlowPanel,
    domestic: DomesticPanel,
    gdp: GdpPanel,
    classes: ClassificationTable,
    home: CountryCode,
) -> Result<Dataset, PanelError> {
    build_dataset_in_range(flows, domestic, gdp, classes, home, None)
}

pub fn build_dataset_in_range(
    flows: FlowPanel,
    domestic: DomesticPanel,
    gdp: GdpPanel,
    classes: ClassificationTable,
    home: CountryCode,
    range: Option<YearRange>,
) -> Result<Dataset, PanelError> {
    let years = match range {
        Some(r) => r,
        None => {
            let (start, end) = flows.year_span().ok_or(PanelError::EmptyFlows)?;
            YearRange::new(start, end)?
        }
    };

    let mut partners = BTreeSet::new();
    for (key, cell) in flows.iter() {
        if key.reporter == key.partner {
            return Err(PanelError::SelfFlow(key.to_string()));
        }
        if key.reporter.is_world() || key.partner.is_world() {
            return Err(PanelError::WorldInFlows(key.to_string()));
        }
        if !years.contains(key.year) {
            return Err(PanelError::YearOutOfRange { cell: key.to_string(), start: years.start, end: years.end });
        }
        if !(cell.value >= 0.0) || !cell.value.is_finite() {
            return Err(PanelError::NegativeValue { cell: format!("flows{key}"), value: cell.value });
        }
        for code in [&key.reporter, &key.partner] {
            if *code != home && classes.get(code).is_none() {
                return Err(PanelError::MissingClassification(code.clone()));
            }
        }
        if key.reporter == home {
            partners.insert(key.partner.clone());
        } else if key.partner == home {
            partners.insert(key.reporter.clone());
        }
    }

    for ((country, year), value) in domestic.iter() {
        if !(*value > 0.0) || !value.is_finite() {
            return Err(PanelError::NonpositiveValue { cell: format!("domestic({country},{year})"), value: *value });
        }
    }
    for ((country, year), value) in gdp.iter() {
        if !(*value > 0.0) || !value.is_finite() {
            return Err(PanelError::NonpositiveValue { cell: format!("gdp({country},{year})"), value: *value });
        }
    }

    let world = CountryCode::world();
    for year in years.years() {
        if !domestic.contains(&home, year) {
            return Err(PanelError::MissingHomeSeries { series: format!("domestic trade of {home}"), year });
        }
        if !gdp.contains(&home, year) {
            return Err(PanelError::MissingHomeSeries { series: format!("GDP of {home}"), year });
        }
        if !gdp.contains(&world, year) {
            return Err(PanelError::MissingHomeSeries { series: format!("world GDP ({WORLD_CODE})"), year });
        }
    }
    for ((country, year), value) in gdp.iter() {
        if country.is_world() || !years.contains(*year) {
            continue;
        }
        let w = gdp.get(&world, *year).expect("checked above");
        if *value > w {
            return Err(PanelError::WorldBelowCountry {
                country: country.clone(),
                year: *year,
                world: w,
                value: *value,
            });
        }
    }

    Ok(Dataset { flows, domestic, gdp, classes, home, years, partners: partners.into_iter().collect() })
}

/// The four value slots required per partner-year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// X_ij: home exports to the partner.
    Export,
    /// X_ji: partner exports to home.
    Import,
    HomeDomestic,
    PartnerDomestic,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Export, Slot::Import, Slot::HomeDomestic, Slot::PartnerDomestic];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Export => "export",
            Slot::Import => "import",
            Slot::HomeDomestic => "home_domestic",
            Slot::PartnerDomestic => "partner_domestic",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCell {
    pub partner: CountryCode,
    pub year: Year,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerCoverage {
    pub partner: CountryCode,
    pub first_complete_year: Option<Year>,
    pub last_complete_year: Option<Year>,
    pub present: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub home: CountryCode,
    pub years: YearRange,
    pub partners: Vec<PartnerCoverage>,
    pub missing: Vec<MissingCell>,
    pub present_count: usize,
}

impl CoverageReport {
    pub fn total_slots(&self) -> usize {
        self.partners.len() * self.years.len() * Slot::ALL.len()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.len()
    }
}

pub fn coverage_report(ds: &Dataset) -> CoverageReport {
    let home = ds.home();
    let mut partners = Vec::with_capacity(ds.partners().len());
    let mut missing = Vec::new();
    let mut present_count = 0;
    for partner in ds.partners() {
        let mut row = PartnerCoverage {
            partner: partner.clone(),
            first_complete_year: None,
            last_complete_year: None,
            present: 0,
            missing: 0,
        };
        for year in ds.years().years() {
            let mut complete = true;
            for slot in Slot::ALL {
                let present = match slot {
                    Slot::Export => ds.flow(home, partner, year).is_some(),
                    Slot::Import => ds.flow(partner, home, year).is_some(),
                    Slot::HomeDomestic => ds.domestic_trade(home, year).is_some(),
                    Slot::PartnerDomestic => ds.domestic_trade(partner, year).is_some(),
                };
                if present {
                    row.present += 1;
                } else {
                    complete = false;
                    row.missing += 1;
                    missing.push(MissingCell { partner: partner.clone(), year, slot });
                }
            }
            if complete {
                row.first_complete_year.get_or_insert(year);
                row.last_complete_year = Some(year);
            }
        }
        present_count += row.present;
        partners.push(row);
    }
    CoverageReport { home: home.clone(), years: ds.years(), partners, missing, present_count }
}

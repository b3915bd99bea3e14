//! Tariff-equivalent trade costs.
//!
//! The bilateral measure compares two-way international trade with the two
//! countries' domestic trade:
//!
//! ```text
//! tau_ij = ((X_ii * X_jj) / (X_ij * X_ji))^(1 / (2(sigma - 1))) - 1
//! ```
//!
//! The average measure pools a partner set through the geometric-mean
//! two-way flow `Xbar_ij = sqrt(X_ij * X_ji)`:
//!
//! ```text
//! tau_bar = (sum_j Xbar_ij / (sqrt(X_ii) * sum_j sqrt(X_jj)))^(1 / (1 - sigma)) - 1
//! ```
//!
//! Values are fractions internally (0.25 = 25%).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel_store::{CountryCode, Dataset, DevStatus, Region, Sigma, Year};

/// Sensitivity sweep over the plausible elasticity range.
pub const SENSITIVITY_SIGMAS: [f64; 3] = [5.0, 8.0, 10.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("zero international flow: trade costs are undefined")]
    ZeroFlow,
    #[error("domestic trade must be positive")]
    NonpositiveDomestic,
    #[error("flows must be finite and non-negative")]
    InvalidFlow,
    #[error("empty partner set")]
    EmptyPartnerSet,
    #[error("missing {slot} for partner {partner} in {year}")]
    MissingCell { partner: CountryCode, slot: &'static str, year: Year },
    #[error("{0} is the home country and cannot be its own partner")]
    HomeAsPartner(CountryCode),
    #[error("baseline value is zero")]
    ZeroBaseline,
    #[error("inputs must be positive and the horizon at least one year")]
    NonpositiveInput,
    #[error("no trade-cost observation for {0}")]
    NoObservation(String),
}

/// Tariff-equivalent bilateral trade cost between `i` and `j`.
pub fn bilateral_tau(x_ij: f64, x_ji: f64, x_ii: f64, x_jj: f64, sigma: Sigma) -> Result<f64, CostError> {
    log_gross_tau(x_ij, x_ji, x_ii, x_jj, sigma).map(f64::exp_m1)
}

/// `ln(1 + tau)` for the same inputs, without the round trip through `tau`.
pub fn log_gross_tau(x_ij: f64, x_ji: f64, x_ii: f64, x_jj: f64, sigma: Sigma) -> Result<f64, CostError> {
    for x in [x_ij, x_ji] {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(CostError::InvalidFlow);
        }
    }
    if !(x_ii > 0.0 && x_jj > 0.0) || !x_ii.is_finite() || !x_jj.is_finite() {
        return Err(CostError::NonpositiveDomestic);
    }
    if x_ij == 0.0 || x_ji == 0.0 {
        return Err(CostError::ZeroFlow);
    }
    let log_ratio = (x_ii.ln() + x_jj.ln()) - (x_ij.ln() + x_ji.ln());
    Ok(log_ratio / (2.0 * (sigma.value() - 1.0)))
}

/// Geometric mean of the two directed flows.
pub fn geometric_mean_trade(x_ij: f64, x_ji: f64) -> f64 {
    (x_ij * x_ji).sqrt()
}

/// Relative change in percent between two levels.
pub fn pct_change(start: f64, end: f64) -> Result<f64, CostError> {
    if start == 0.0 {
        return Err(CostError::ZeroBaseline);
    }
    Ok(100.0 * (end - start) / start)
}

/// Compound annual rate of change in percent per year.
pub fn annualized_change(start: f64, end: f64, n_years: u32) -> Result<f64, CostError> {
    if !(start > 0.0) || !(end > 0.0) || n_years == 0 {
        return Err(CostError::NonpositiveInput);
    }
    Ok(100.0 * ((end / start).powf(1.0 / f64::from(n_years)) - 1.0))
}

/// How `average_tau` treats partners with missing cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    /// Abort on the first missing cell.
    Strict,
    /// Drop the partner for that year and record the drop.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageTau {
    pub tau: f64,
    /// Sum of geometric-mean two-way flows over the partners used.
    pub xbar_sum: f64,
    pub used: Vec<CountryCode>,
    pub dropped: Vec<CountryCode>,
}

/// Average trade cost of the home country with `partners` in `year`.
pub fn average_tau(
    ds: &Dataset,
    partners: &[CountryCode],
    year: Year,
    sigma: Sigma,
    mode: MissingMode,
) -> Result<AverageTau, CostError> {
    if partners.is_empty() {
        return Err(CostError::EmptyPartnerSet);
    }
    let home = ds.home();
    let x_ii = ds.domestic_trade(home, year).ok_or_else(|| CostError::MissingCell {
        partner: home.clone(),
        slot: "home_domestic",
        year,
    })?;
    if !(x_ii > 0.0) {
        return Err(CostError::NonpositiveDomestic);
    }

    let mut xbar_sum = 0.0;
    let mut sqrt_dom_sum = 0.0;
    let mut used = Vec::with_capacity(partners.len());
    let mut dropped = Vec::new();
    for partner in partners {
        if partner == home {
            return Err(CostError::HomeAsPartner(partner.clone()));
        }
        let cells = [
            ("export", ds.flow(home, partner, year)),
            ("import", ds.flow(partner, home, year)),
            ("partner_domestic", ds.domestic_trade(partner, year)),
        ];
        if let Some((slot, _)) = cells.iter().find(|(_, v)| v.is_none()) {
            match mode {
                MissingMode::Strict => return Err(CostError::MissingCell { partner: partner.clone(), slot, year }),
                MissingMode::Lenient => {
                    dropped.push(partner.clone());
                    continue;
                }
            }
        }
        let [x_ij, x_ji, x_jj] = cells.map(|(_, v)| v.expect("checked above"));
        xbar_sum += geometric_mean_trade(x_ij, x_ji);
        sqrt_dom_sum += x_jj.sqrt();
        used.push(partner.clone());
    }
    if used.is_empty() {
        return Err(CostError::EmptyPartnerSet);
    }
    if xbar_sum == 0.0 {
        return Err(CostError::ZeroFlow);
    }
    let ratio = xbar_sum / (x_ii.sqrt() * sqrt_dom_sum);
    let tau = (ratio.ln() / (1.0 - sigma.value())).exp_m1();
    Ok(AverageTau { tau, xbar_sum, used, dropped })
}

/// Why a series point carries no value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingReason {
    MissingCell,
    ZeroFlow,
    EmptyPartnerSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFlag {
    /// Bilateral trade exceeds the domestic-trade product; reported as-is.
    NegativeTau,
    Missing(MissingReason),
    Dropped(Vec<CountryCode>),
}

impl fmt::Display for CostFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFlag::NegativeTau => f.write_str("negative_tau"),
            CostFlag::Missing(MissingReason::MissingCell) => f.write_str("missing_cell"),
            CostFlag::Missing(MissingReason::ZeroFlow) => f.write_str("zero_flow"),
            CostFlag::Missing(MissingReason::EmptyPartnerSet) => f.write_str("empty_partner_set"),
            CostFlag::Dropped(codes) => {
                let list: Vec<&str> = codes.iter().map(|c| c.as_str()).collect();
                write!(f, "dropped:{}", list.join("|"))
            }
        }
    }
}

/// Joins flags as a `;`-separated list (empty when there are none).
pub fn format_flags<T: fmt::Display>(flags: &[T]) -> String {
    flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub tau: Option<f64>,
    /// Geometric-mean two-way flow (sum over the group for averages).
    pub xbar: Option<f64>,
    pub flags: Vec<CostFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subject {
    Pair(CountryCode, CountryCode),
    Group(String),
}

impl Subject {
    pub fn i_label(&self, home: &CountryCode) -> String {
        match self {
            Subject::Pair(i, _) => i.to_string(),
            Subject::Group(_) => home.to_string(),
        }
    }

    pub fn j_label(&self) -> String {
        match self {
            Subject::Pair(_, j) => j.to_string(),
            Subject::Group(g) => g.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeCostSeries {
    pub subject: Subject,
    pub sigma: Sigma,
    pub points: BTreeMap<Year, CostPoint>,
}

impl TradeCostSeries {
    pub fn tau(&self, year: Year) -> Option<f64> {
        self.points.get(&year).and_then(|p| p.tau)
    }

    /// Years that carry a value, ascending.
    pub fn observed_years(&self) -> impl Iterator<Item = Year> + '_ {
        self.points.iter().filter(|(_, p)| p.tau.is_some()).map(|(y, _)| *y)
    }
}

/// Bilateral series for the pair `(i, j)` over `years`; gaps are flagged, not errors.
pub fn bilateral_series(
    ds: &Dataset,
    i: &CountryCode,
    j: &CountryCode,
    years: impl IntoIterator<Item = Year>,
    sigma: Sigma,
) -> TradeCostSeries {
    let mut points = BTreeMap::new();
    for year in years {
        let cells = (ds.flow(i, j, year), ds.flow(j, i, year), ds.domestic_trade(i, year), ds.domestic_trade(j, year));
        let point = match cells {
            (Some(x_ij), Some(x_ji), Some(x_ii), Some(x_jj)) => {
                let xbar = Some(geometric_mean_trade(x_ij, x_ji));
                match bilateral_tau(x_ij, x_ji, x_ii, x_jj, sigma) {
                    Ok(tau) => {
                        let flags = if tau < 0.0 { vec![CostFlag::NegativeTau] } else { vec![] };
                        CostPoint { tau: Some(tau), xbar, flags }
                    }
                    Err(_) => CostPoint { tau: None, xbar, flags: vec![CostFlag::Missing(MissingReason::ZeroFlow)] },
                }
            }
            _ => CostPoint { tau: None, xbar: None, flags: vec![CostFlag::Missing(MissingReason::MissingCell)] },
        };
        points.insert(year, point);
    }
    TradeCostSeries { subject: Subject::Pair(i.clone(), j.clone()), sigma, points }
}

/// A subset of the home country's partners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSelector {
    All,
    Region(Region),
    DevStatus(DevStatus),
    Bri(bool),
}

impl GroupSelector {
    pub fn label(&self) -> String {
        match self {
            GroupSelector::All => "all".into(),
            GroupSelector::Region(r) => format!("region:{r}"),
            GroupSelector::DevStatus(d) => d.name().into(),
            GroupSelector::Bri(true) => "bri".into(),
            GroupSelector::Bri(false) => "non_bri".into(),
        }
    }

    /// Partners of the home country that match, sorted by code.
    pub fn select(&self, ds: &Dataset) -> Vec<CountryCode> {
        ds.partners()
            .iter()
            .filter(|p| {
                let Some(c) = ds.classification(p) else { return false };
                match self {
                    GroupSelector::All => true,
                    GroupSelector::Region(r) => c.region == *r,
                    GroupSelector::DevStatus(d) => c.dev_status == *d,
                    GroupSelector::Bri(b) => c.bri == *b,
                }
            })
            .cloned()
            .collect()
    }

    /// Every group of one classification dimension, in a fixed order.
    pub fn dimension(name: &str) -> Option<Vec<GroupSelector>> {
        match name {
            "region" => Some(Region::ALL.into_iter().map(GroupSelector::Region).collect()),
            "dev_status" | "dev" => Some(vec![
                GroupSelector::DevStatus(DevStatus::Developed),
                GroupSelector::DevStatus(DevStatus::DevelopingEmerging),
            ]),
            "bri" => Some(vec![GroupSelector::Bri(true), GroupSelector::Bri(false)]),
            "all" => Some(vec![GroupSelector::All]),
            _ => None,
        }
    }
}

impl std::str::FromStr for GroupSelector {
    type Err = String;
    /// `all`, `bri`, `non_bri`, `developed`, `developing_emerging` (or
    /// `developing`), `region:<name>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(r) = s.strip_prefix("region:").or_else(|| s.strip_prefix("region=")) {
            return r.parse::<Region>().map(GroupSelector::Region).map_err(|v| format!("unknown region {v:?}"));
        }
        match s {
            "all" => Ok(GroupSelector::All),
            "bri" => Ok(GroupSelector::Bri(true)),
            "non_bri" | "non-bri" | "nonbri" => Ok(GroupSelector::Bri(false)),
            "developed" => Ok(GroupSelector::DevStatus(DevStatus::Developed)),
            "developing" | "developing_emerging" => Ok(GroupSelector::DevStatus(DevStatus::DevelopingEmerging)),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

/// How a group series pools its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupMethod {
    /// The model-based average over the group's partners.
    #[default]
    ModelBased,
    /// Mean of bilateral tau weighted by the geometric-mean two-way flow.
    TradeWeighted,
}

/// Average-cost series over an explicit partner set, one point per year.
/// In strict mode the first missing cell aborts; in lenient mode partners
/// are dropped per year and the drop is flagged.
pub fn average_tau_series(
    ds: &Dataset,
    label: &str,
    partners: &[CountryCode],
    years: impl IntoIterator<Item = Year>,
    sigma: Sigma,
    mode: MissingMode,
) -> Result<TradeCostSeries, CostError> {
    if partners.is_empty() {
        return Err(CostError::EmptyPartnerSet);
    }
    let mut points = BTreeMap::new();
    for year in years {
        let point = match average_tau(ds, partners, year, sigma, mode) {
            Ok(avg) => {
                let mut flags = Vec::new();
                if avg.tau < 0.0 {
                    flags.push(CostFlag::NegativeTau);
                }
                if !avg.dropped.is_empty() {
                    flags.push(CostFlag::Dropped(avg.dropped));
                }
                CostPoint { tau: Some(avg.tau), xbar: Some(avg.xbar_sum), flags }
            }
            Err(CostError::EmptyPartnerSet) if mode == MissingMode::Lenient => CostPoint {
                tau: None,
                xbar: None,
                flags: vec![CostFlag::Missing(MissingReason::EmptyPartnerSet), CostFlag::Dropped(partners.to_vec())],
            },
            Err(CostError::ZeroFlow) if mode == MissingMode::Lenient => {
                CostPoint { tau: None, xbar: Some(0.0), flags: vec![CostFlag::Missing(MissingReason::ZeroFlow)] }
            }
            Err(e) => return Err(e),
        };
        points.insert(year, point);
    }
    Ok(TradeCostSeries { subject: Subject::Group(label.to_string()), sigma, points })
}

/// Group series for a classification-based selector.
pub fn group_series(
    ds: &Dataset,
    selector: &GroupSelector,
    years: impl IntoIterator<Item = Year> + Clone,
    sigma: Sigma,
    mode: MissingMode,
    method: GroupMethod,
) -> Result<TradeCostSeries, CostError> {
    let partners = selector.select(ds);
    let label = selector.label();
    match method {
        GroupMethod::ModelBased => average_tau_series(ds, &label, &partners, years, sigma, mode),
        GroupMethod::TradeWeighted => trade_weighted_series(ds, &label, &partners, years, sigma, mode),
    }
}

fn trade_weighted_series(
    ds: &Dataset,
    label: &str,
    partners: &[CountryCode],
    years: impl IntoIterator<Item = Year> + Clone,
    sigma: Sigma,
    mode: MissingMode,
) -> Result<TradeCostSeries, CostError> {
    if partners.is_empty() {
        return Err(CostError::EmptyPartnerSet);
    }
    let home = ds.home();
    let members: Vec<TradeCostSeries> =
        partners.iter().map(|p| bilateral_series(ds, home, p, years.clone(), sigma)).collect();
    let mut points = BTreeMap::new();
    for year in years {
        let (mut num, mut den) = (0.0, 0.0);
        let mut dropped = Vec::new();
        for (partner, series) in partners.iter().zip(&members) {
            let point = &series.points[&year];
            match (point.tau, point.xbar) {
                (Some(tau), Some(w)) => {
                    num += w * tau;
                    den += w;
                }
                _ if mode == MissingMode::Strict => {
                    return Err(CostError::MissingCell { partner: partner.clone(), slot: "bilateral_tau", year })
                }
                _ => dropped.push(partner.clone()),
            }
        }
        let mut flags = Vec::new();
        let tau = (den > 0.0).then(|| num / den);
        match tau {
            Some(t) if t < 0.0 => flags.push(CostFlag::NegativeTau),
            None => flags.push(CostFlag::Missing(MissingReason::EmptyPartnerSet)),
            _ => {}
        }
        if !dropped.is_empty() {
            flags.push(CostFlag::Dropped(dropped));
        }
        points.insert(year, CostPoint { tau, xbar: Some(den), flags });
    }
    Ok(TradeCostSeries { subject: Subject::Group(label.to_string()), sigma, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub start_year: Year,
    pub end_year: Year,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Percent change of the tau level.
    pub pct_change: f64,
    /// Compound annual change of the tau level, percent per year; absent when
    /// either endpoint is non-positive.
    pub annualized_change: Option<f64>,
}

/// Change between the first observed year at or after `start` and the last
/// observed year at or before `end`. `end_override` pins the end year
/// instead (used when the regular end point is unusable, e.g. negative).
pub fn summarize(
    series: &TradeCostSeries,
    start: Year,
    end: Year,
    end_override: Option<Year>,
) -> Result<ChangeSummary, CostError> {
    let missing = || CostError::NoObservation(format!("{:?}", series.subject));
    let start_year = series.observed_years().find(|y| *y >= start && *y <= end).ok_or_else(missing)?;
    let end_year = match end_override {
        Some(y) => {
            series.tau(y).ok_or_else(missing)?;
            y
        }
        None => series.observed_years().filter(|y| *y <= end).last().ok_or_else(missing)?,
    };
    let tau_start = series.tau(start_year).expect("observed");
    let tau_end = series.tau(end_year).expect("observed");
    let pct = pct_change(tau_start, tau_end)?;
    let span = end_year - start_year;
    let annualized = if span >= 1 { annualized_change(tau_start, tau_end, span as u32).ok() } else { None };
    Ok(ChangeSummary { start_year, end_year, tau_start, tau_end, pct_change: pct, annualized_change: annualized })
}

//! Trade growth accounting.
//!
//! With `N = dln(X_ij X_ji)` (end minus base, in logs) the growth of two-way
//! trade splits exactly into
//!
//! ```text
//! A = 2 dln(Y_i Y_j / Y_W) / N                                    income
//! B = (N - dln(X_ii X_jj)) / N                                    trade costs
//! C = -(dln((Y_i/Y_W)/(X_ii/Y_i)) + dln((Y_j/Y_W)/(X_jj/Y_j))) / N  multilateral resistance
//! ```
//!
//! and A + B + C = 1. The same shares are also computed through the
//! tariff-equivalent route, `B' = 2(1-sigma) dln(1+tau) / N` and
//! `C' = -2(1-sigma) dln(Phi_i Phi_j) / N`, where sigma cancels; each record
//! carries the largest gap between the two routes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel_store::{CountryCode, Dataset, Sigma, Year};
use crate::trade_costs::{self, GroupSelector};

/// Largest tolerated gap between the two computation routes, in percent.
pub const PATH_TOLERANCE_PCT: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("no observation of {0} in the base window")]
    EmptyWindow(Variable),
    #[error("two-way trade did not change: shares are undefined")]
    ZeroGrowth,
    #[error("missing {variable} in {year}")]
    MissingCell { variable: Variable, year: Year },
    #[error("{0} must be positive")]
    NonpositiveValue(Variable),
    #[error("no weight for {0}")]
    WeightMissing(String),
    #[error("weight for {0} must be positive")]
    NonpositiveWeight(String),
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("records mix base/end conventions")]
    MixedConventions,
    #[error("invalid base window {0}-{1}")]
    InvalidWindow(Year, Year),
}

/// The seven inputs of a pair decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    ExportIj,
    ExportJi,
    DomesticI,
    DomesticJ,
    IncomeI,
    IncomeJ,
    IncomeWorld,
}

impl Variable {
    pub const ALL: [Variable; 7] = [
        Variable::ExportIj,
        Variable::ExportJi,
        Variable::DomesticI,
        Variable::DomesticJ,
        Variable::IncomeI,
        Variable::IncomeJ,
        Variable::IncomeWorld,
    ];
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::ExportIj => "X_ij",
            Variable::ExportJi => "X_ji",
            Variable::DomesticI => "X_ii",
            Variable::DomesticJ => "X_jj",
            Variable::IncomeI => "Y_i",
            Variable::IncomeJ => "Y_j",
            Variable::IncomeWorld => "Y_W",
        })
    }
}

/// Levels of the seven variables at one point in time (or window mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValues {
    pub x_ij: f64,
    pub x_ji: f64,
    pub x_ii: f64,
    pub x_jj: f64,
    pub y_i: f64,
    pub y_j: f64,
    pub y_w: f64,
}

impl PairValues {
    pub fn get(&self, v: Variable) -> f64 {
        match v {
            Variable::ExportIj => self.x_ij,
            Variable::ExportJi => self.x_ji,
            Variable::DomesticI => self.x_ii,
            Variable::DomesticJ => self.x_jj,
            Variable::IncomeI => self.y_i,
            Variable::IncomeJ => self.y_j,
            Variable::IncomeWorld => self.y_w,
        }
    }

    fn set(&mut self, v: Variable, value: f64) {
        match v {
            Variable::ExportIj => self.x_ij = value,
            Variable::ExportJi => self.x_ji = value,
            Variable::DomesticI => self.x_ii = value,
            Variable::DomesticJ => self.x_jj = value,
            Variable::IncomeI => self.y_i = value,
            Variable::IncomeJ => self.y_j = value,
            Variable::IncomeWorld => self.y_w = value,
        }
    }

    fn zero() -> Self {
        Self { x_ij: 0.0, x_ji: 0.0, x_ii: 0.0, x_jj: 0.0, y_i: 0.0, y_j: 0.0, y_w: 0.0 }
    }

    fn check_positive(&self) -> Result<(), DecompositionError> {
        for v in Variable::ALL {
            let x = self.get(v);
            if !(x > 0.0) || !x.is_finite() {
                return Err(DecompositionError::NonpositiveValue(v));
            }
        }
        Ok(())
    }

    fn lookup(ds: &Dataset, i: &CountryCode, j: &CountryCode, year: Year, v: Variable) -> Option<f64> {
        match v {
            Variable::ExportIj => ds.flow(i, j, year),
            Variable::ExportJi => ds.flow(j, i, year),
            Variable::DomesticI => ds.domestic_trade(i, year),
            Variable::DomesticJ => ds.domestic_trade(j, year),
            Variable::IncomeI => ds.income(i, year),
            Variable::IncomeJ => ds.income(j, year),
            Variable::IncomeWorld => ds.world_income(year),
        }
    }

    /// Values of the pair in a single year.
    pub fn at_year(ds: &Dataset, i: &CountryCode, j: &CountryCode, year: Year) -> Result<Self, DecompositionError> {
        let mut out = Self::zero();
        for v in Variable::ALL {
            let x = Self::lookup(ds, i, j, year, v).ok_or(DecompositionError::MissingCell { variable: v, year })?;
            out.set(v, x);
        }
        Ok(out)
    }
}

/// Inclusive window of base years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseWindow {
    pub start: Year,
    pub end: Year,
}

impl BaseWindow {
    pub fn new(start: Year, end: Year) -> Result<Self, DecompositionError> {
        if start > end {
            return Err(DecompositionError::InvalidWindow(start, end));
        }
        Ok(Self { start, end })
    }

    pub fn years(&self) -> impl Iterator<Item = Year> {
        self.start..=self.end
    }
}

impl fmt::Display for BaseWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseObservation {
    pub window: BaseWindow,
    pub values: PairValues,
    /// Number of window years that contributed, per variable (in [`Variable::ALL`] order).
    pub contributed_years: [usize; 7],
}

impl BaseObservation {
    pub fn contributed(&self, v: Variable) -> usize {
        let idx = Variable::ALL.iter().position(|x| *x == v).expect("listed");
        self.contributed_years[idx]
    }
}

/// Arithmetic mean of levels over the non-missing years of `window`, per variable.
pub fn smooth_base(
    ds: &Dataset,
    i: &CountryCode,
    j: &CountryCode,
    window: BaseWindow,
) -> Result<BaseObservation, DecompositionError> {
    let mut values = PairValues::zero();
    let mut contributed_years = [0usize; 7];
    for (idx, v) in Variable::ALL.into_iter().enumerate() {
        let (sum, n) = window
            .years()
            .filter_map(|y| PairValues::lookup(ds, i, j, y, v))
            .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            return Err(DecompositionError::EmptyWindow(v));
        }
        values.set(v, sum / n as f64);
        contributed_years[idx] = n;
    }
    Ok(BaseObservation { window, values, contributed_years })
}

/// Which two-way trade aggregate "trade growth" refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthDefinition {
    /// Growth of sqrt(X_ij X_ji).
    #[default]
    GeometricMean,
    /// Growth of the product X_ij X_ji.
    Product,
}

/// Percent growth of two-way trade between `base` and `end`.
pub fn trade_growth(
    base: &PairValues,
    end: &PairValues,
    definition: GrowthDefinition,
) -> Result<f64, DecompositionError> {
    for (v, x) in [
        (Variable::ExportIj, base.x_ij),
        (Variable::ExportJi, base.x_ji),
        (Variable::ExportIj, end.x_ij),
        (Variable::ExportJi, end.x_ji),
    ] {
        if !(x > 0.0) {
            return Err(DecompositionError::NonpositiveValue(v));
        }
    }
    let ratio = match definition {
        GrowthDefinition::GeometricMean => {
            trade_costs::geometric_mean_trade(end.x_ij, end.x_ji)
                / trade_costs::geometric_mean_trade(base.x_ij, base.x_ji)
        }
        GrowthDefinition::Product => (end.x_ij * end.x_ji) / (base.x_ij * base.x_ji),
    };
    Ok(100.0 * (ratio - 1.0))
}

/// Contribution shares as fractions of total growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub income: f64,
    pub trade_costs: f64,
    pub resistance: f64,
}

impl Shares {
    pub fn sum(&self) -> f64 {
        self.income + self.trade_costs + self.resistance
    }

    pub fn max_gap(&self, other: &Shares) -> f64 {
        (self.income - other.income)
            .abs()
            .max((self.trade_costs - other.trade_costs).abs())
            .max((self.resistance - other.resistance).abs())
    }
}

/// Both routes of the decomposition for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    /// `dln(X_ij X_ji)`.
    pub log_growth: f64,
    /// Shares from the direct substitution (independent of sigma).
    pub direct: Shares,
    /// Shares through tau and the relative resistances at the given sigma.
    pub via_tau: Shares,
}

fn dln(end: f64, base: f64) -> f64 {
    end.ln() - base.ln()
}

/// Pure decomposition of two observations of the seven variables.
pub fn decompose_values(base: &PairValues, end: &PairValues, sigma: Sigma) -> Result<Components, DecompositionError> {
    base.check_positive()?;
    end.check_positive()?;
    let n = dln(end.x_ij, base.x_ij) + dln(end.x_ji, base.x_ji);
    if n == 0.0 {
        return Err(DecompositionError::ZeroGrowth);
    }
    let income_term = 2.0 * (dln(end.y_i, base.y_i) + dln(end.y_j, base.y_j) - dln(end.y_w, base.y_w));
    let domestic_growth = dln(end.x_ii, base.x_ii) + dln(end.x_jj, base.x_jj);
    // ln((Y_k / Y_W) / (X_kk / Y_k)) for one country.
    let relative_income = |v: &PairValues, y: f64, x: f64| (y / v.y_w / (x / y)).ln();
    let resistance_term = (relative_income(end, end.y_i, end.x_ii) - relative_income(base, base.y_i, base.x_ii))
        + (relative_income(end, end.y_j, end.x_jj) - relative_income(base, base.y_j, base.x_jj));

    let direct =
        Shares { income: income_term / n, trade_costs: (n - domestic_growth) / n, resistance: -resistance_term / n };

    let s = sigma.value();
    let one_plus_tau = |v: &PairValues| trade_costs::log_gross_tau(v.x_ij, v.x_ji, v.x_ii, v.x_jj, sigma);
    let ln_tau_end = one_plus_tau(end).map_err(|_| DecompositionError::NonpositiveValue(Variable::ExportIj))?;
    let ln_tau_base = one_plus_tau(base).map_err(|_| DecompositionError::NonpositiveValue(Variable::ExportIj))?;
    // ln(Phi_k) = ln((X_kk/Y_k) / (Y_k/Y_W)) / (2(sigma - 1)), the domestic
    // friction having cancelled.
    let ln_phi = |v: &PairValues, y: f64, x: f64| ((x / y) / (y / v.y_w)).ln() / (2.0 * (s - 1.0));
    let dln_phi = (ln_phi(end, end.y_i, end.x_ii) + ln_phi(end, end.y_j, end.x_jj))
        - (ln_phi(base, base.y_i, base.x_ii) + ln_phi(base, base.y_j, base.x_jj));
    let via_tau = Shares {
        income: income_term / n,
        trade_costs: 2.0 * (1.0 - s) * (ln_tau_end - ln_tau_base) / n,
        resistance: -2.0 * (1.0 - s) * dln_phi / n,
    };
    Ok(Components { log_growth: n, direct, via_tau })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionFlag {
    /// Two-way trade shrank; shares keep their algebra but lose the usual sign reading.
    NegativeGrowth,
    /// The two computation routes disagree beyond [`PATH_TOLERANCE_PCT`].
    PathMismatch,
    /// Members left out of a group aggregate.
    Skipped(Vec<String>),
}

impl fmt::Display for DecompositionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecompositionFlag::NegativeGrowth => f.write_str("negative_growth"),
            DecompositionFlag::PathMismatch => f.write_str("path_mismatch"),
            DecompositionFlag::Skipped(m) => write!(f, "skipped:{}", m.join("|")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Pair(CountryCode, CountryCode),
    Group(String),
}

impl Scope {
    pub fn kind(&self) -> &'static str {
        match self {
            Scope::Pair(..) => "pair",
            Scope::Group(_) => "group",
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scope::Pair(i, j) => format!("{i}-{j}"),
            Scope::Group(g) => g.clone(),
        }
    }
}

/// Decomposition of trade growth; all percentages are in percent units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub scope: Scope,
    pub base_window: BaseWindow,
    pub end_year: Year,
    pub growth_pct: f64,
    pub a_pct: f64,
    pub b_pct: f64,
    pub c_pct: f64,
    pub sum_pct: f64,
    /// Shares from the tariff-equivalent route, percent.
    pub via_tau_pct: [f64; 3],
    /// Largest absolute gap between the routes, percent.
    pub path_gap_pct: f64,
    pub flags: Vec<DecompositionFlag>,
}

fn record_from(
    scope: Scope,
    base_window: BaseWindow,
    end_year: Year,
    growth_pct: f64,
    c: &Components,
) -> DecompositionRecord {
    let pct = |x: f64| 100.0 * x;
    let path_gap_pct = pct(c.direct.max_gap(&c.via_tau));
    let mut flags = Vec::new();
    if c.log_growth < 0.0 {
        flags.push(DecompositionFlag::NegativeGrowth);
    }
    if !(path_gap_pct <= PATH_TOLERANCE_PCT) {
        flags.push(DecompositionFlag::PathMismatch);
    }
    DecompositionRecord {
        scope,
        base_window,
        end_year,
        growth_pct,
        a_pct: pct(c.direct.income),
        b_pct: pct(c.direct.trade_costs),
        c_pct: pct(c.direct.resistance),
        sum_pct: pct(c.direct.sum()),
        via_tau_pct: [pct(c.via_tau.income), pct(c.via_tau.trade_costs), pct(c.via_tau.resistance)],
        path_gap_pct,
        flags,
    }
}

/// Decomposes growth of the pair `(i, j)` from `base` to `end_year`.
pub fn decompose_pair(
    ds: &Dataset,
    i: &CountryCode,
    j: &CountryCode,
    base: &BaseObservation,
    end_year: Year,
    sigma: Sigma,
    growth: GrowthDefinition,
) -> Result<DecompositionRecord, DecompositionError> {
    let end = PairValues::at_year(ds, i, j, end_year)?;
    let components = decompose_values(&base.values, &end, sigma)?;
    let growth_pct = trade_growth(&base.values, &end, growth)?;
    Ok(record_from(Scope::Pair(i.clone(), j.clone()), base.window, end_year, growth_pct, &components))
}

/// Weighted mean of member records. Weights are keyed by [`Scope::label`].
pub fn aggregate_decomposition(
    label: &str,
    records: &[DecompositionRecord],
    weights: &BTreeMap<String, f64>,
) -> Result<DecompositionRecord, DecompositionError> {
    let first = records.first().ok_or(DecompositionError::EmptyInput)?;
    if records.iter().any(|r| r.base_window != first.base_window || r.end_year != first.end_year) {
        return Err(DecompositionError::MixedConventions);
    }
    // Fixed key order keeps the floating-point sums independent of input order.
    let mut ordered: Vec<(&DecompositionRecord, f64)> = Vec::with_capacity(records.len());
    for r in records {
        let key = r.scope.label();
        let w = *weights.get(&key).ok_or_else(|| DecompositionError::WeightMissing(key.clone()))?;
        if !(w > 0.0) || !w.is_finite() {
            return Err(DecompositionError::NonpositiveWeight(key));
        }
        ordered.push((r, w));
    }
    ordered.sort_by(|a, b| a.0.scope.cmp(&b.0.scope));

    let total: f64 = ordered.iter().map(|(_, w)| w).sum();
    let mean = |f: &dyn Fn(&DecompositionRecord) -> f64| ordered.iter().map(|(r, w)| w * f(r)).sum::<f64>() / total;
    let a = mean(&|r| r.a_pct);
    let b = mean(&|r| r.b_pct);
    let c = mean(&|r| r.c_pct);
    let via = [mean(&|r| r.via_tau_pct[0]), mean(&|r| r.via_tau_pct[1]), mean(&|r| r.via_tau_pct[2])];
    let path_gap_pct = (a - via[0]).abs().max((b - via[1]).abs()).max((c - via[2]).abs());
    let mut flags = Vec::new();
    if !(path_gap_pct <= PATH_TOLERANCE_PCT) {
        flags.push(DecompositionFlag::PathMismatch);
    }
    Ok(DecompositionRecord {
        scope: Scope::Group(label.to_string()),
        base_window: first.base_window,
        end_year: first.end_year,
        growth_pct: mean(&|r| r.growth_pct),
        a_pct: a,
        b_pct: b,
        c_pct: c,
        sum_pct: a + b + c,
        via_tau_pct: via,
        path_gap_pct,
        flags,
    })
}

/// Weight of a pair: the sum of both incomes in `year`.
pub fn pair_gdp_weight(ds: &Dataset, i: &CountryCode, j: &CountryCode, year: Year) -> Result<f64, DecompositionError> {
    let y_i = ds.income(i, year).ok_or(DecompositionError::MissingCell { variable: Variable::IncomeI, year })?;
    let y_j = ds.income(j, year).ok_or(DecompositionError::MissingCell { variable: Variable::IncomeJ, year })?;
    Ok(y_i + y_j)
}

/// Settings shared by pair and group decompositions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionConfig {
    pub window: BaseWindow,
    pub end_year: Year,
    pub sigma: Sigma,
    pub growth: GrowthDefinition,
    /// Year whose pair GDPs weight group averages.
    pub weight_year: Year,
}

/// Decomposes every home-partner pair; failures are returned per partner.
pub fn decompose_home_pairs(
    ds: &Dataset,
    partners: &[CountryCode],
    cfg: &DecompositionConfig,
) -> Vec<(CountryCode, Result<DecompositionRecord, DecompositionError>)> {
    let home = ds.home();
    partners
        .iter()
        .map(|p| {
            let rec = smooth_base(ds, home, p, cfg.window)
                .and_then(|base| decompose_pair(ds, home, p, &base, cfg.end_year, cfg.sigma, cfg.growth));
            (p.clone(), rec)
        })
        .collect()
}

/// GDP-weighted group aggregate of already computed home-pair records.
/// Members whose pair record failed are skipped and listed in the flags.
pub fn aggregate_group(
    ds: &Dataset,
    selector: &GroupSelector,
    pairs: &BTreeMap<CountryCode, Result<DecompositionRecord, DecompositionError>>,
    weight_year: Year,
) -> Result<DecompositionRecord, DecompositionError> {
    let home = ds.home();
    let mut members = Vec::new();
    let mut weights = BTreeMap::new();
    let mut skipped = Vec::new();
    for partner in selector.select(ds) {
        match pairs.get(&partner) {
            Some(Ok(rec)) => {
                weights.insert(rec.scope.label(), pair_gdp_weight(ds, home, &partner, weight_year)?);
                members.push(rec.clone());
            }
            _ => skipped.push(partner.to_string()),
        }
    }
    let mut rec = aggregate_decomposition(&selector.label(), &members, &weights)?;
    if !skipped.is_empty() {
        rec.flags.push(DecompositionFlag::Skipped(skipped));
    }
    Ok(rec)
}

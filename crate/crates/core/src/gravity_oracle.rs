//! Forward structural gravity simulator used as ground truth for the inverse
//! trade-cost measure.
//!
//! Given incomes `Y` and iceberg frictions `t`, exports are
//!
//! ```text
//! X_ij = (Y_i Y_j / Y_W) * (t_ij / (Pi_i P_j))^(1 - sigma)
//! ```
//!
//! where the outward (`Pi`) and inward (`P`) multilateral resistances solve
//!
//! ```text
//! Pi_i^(1-sigma) = sum_j theta_j (t_ij / P_j)^(1-sigma)
//! P_j^(1-sigma)  = sum_i theta_i (t_ij / Pi_i)^(1-sigma),   theta_k = Y_k / Y_W.
//! ```
//!
//! The solver iterates on the `(1 - sigma)` powers with damping in log space,
//! and pins `P_0 = 1` since only the products `Pi_i P_j` are identified.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel_store::{
    build_dataset_in_range, Classification, ClassificationTable, CountryCode, Dataset, DevStatus, DomesticPanel,
    FlowKey, FlowPanel, GdpPanel, PanelError, Region, Sigma, Year, YearRange,
};
use crate::trade_costs;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("multilateral resistance did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("every income share must be positive and finite")]
    SingularInput,
    #[error("friction entry ({0},{1}) = {2} must be finite and at least 1")]
    InvalidFriction(usize, usize, f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("world needs at least two countries")]
    TooFewCountries,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Square matrix of gross iceberg factors, row = exporter, column = importer.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl FrictionMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, OracleError> {
        if data.len() != n * n {
            return Err(OracleError::DimensionMismatch(format!("{} entries for n = {n}", data.len())));
        }
        for (k, v) in data.iter().enumerate() {
            if !v.is_finite() || *v < 1.0 {
                return Err(OracleError::InvalidFriction(k / n, k % n, *v));
            }
        }
        Ok(Self { n, data })
    }

    /// Same off-diagonal friction everywhere, diagonal fixed at `domestic`.
    pub fn uniform(n: usize, international: f64, domestic: f64) -> Result<Self, OracleError> {
        let data = (0..n * n).map(|k| if k / n == k % n { domestic } else { international }).collect();
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), OracleError> {
        if !value.is_finite() || value < 1.0 {
            return Err(OracleError::InvalidFriction(i, j, value));
        }
        self.data[i * self.n + j] = value;
        Ok(())
    }

    /// Tariff equivalent implied by the frictions of a pair.
    pub fn implied_tau(&self, i: usize, j: usize) -> f64 {
        ((self.get(i, j) * self.get(j, i)) / (self.get(i, i) * self.get(j, j))).sqrt() - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Weight of the new iterate, in (0, 1].
    pub damping: f64,
    pub max_iterations: usize,
    /// Relative residual target.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { damping: 0.5, max_iterations: 10_000, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceVectors {
    pub outward: Vec<f64>,
    pub inward: Vec<f64>,
    /// Index whose inward resistance is pinned to one.
    pub pinned: usize,
    pub iterations: usize,
    pub residual: f64,
}

fn validate_incomes(incomes: &[f64], n: usize) -> Result<f64, OracleError> {
    if incomes.len() != n {
        return Err(OracleError::DimensionMismatch(format!("{} incomes for n = {n}", incomes.len())));
    }
    if n < 2 {
        return Err(OracleError::TooFewCountries);
    }
    if incomes.iter().any(|y| !(*y > 0.0) || !y.is_finite()) {
        return Err(OracleError::SingularInput);
    }
    Ok(incomes.iter().sum())
}

/// `t^(1 - sigma)` for every entry.
fn power_kernel(t: &FrictionMatrix, sigma: Sigma) -> Vec<f64> {
    let e = 1.0 - sigma.value();
    t.data.iter().map(|x| x.powf(e)).collect()
}

/// Updated outward and inward powers from the current pair, plus the relative residual.
fn sweep(kernel: &[f64], incomes: &[f64], world: f64, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = incomes.len();
    let mut a_new = vec![0.0; n];
    let mut b_new = vec![0.0; n];
    for i in 0..n {
        let row = &kernel[i * n..(i + 1) * n];
        let mut s = 0.0;
        for j in 0..n {
            s += incomes[j] * row[j] / b[j];
        }
        a_new[i] = s / world;
    }
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += incomes[i] * kernel[i * n + j] / a[i];
        }
        b_new[j] = s / world;
    }
    let residual =
        a.iter().zip(&a_new).chain(b.iter().zip(&b_new)).map(|(old, new)| (new / old - 1.0).abs()).fold(0.0, f64::max);
    (a_new, b_new, residual)
}

/// Solves the multilateral-resistance system by damped fixed-point iteration.
pub fn solve_multilateral_resistance(
    t: &FrictionMatrix,
    incomes: &[f64],
    sigma: Sigma,
    config: &SolverConfig,
) -> Result<ResistanceVectors, OracleError> {
    let n = t.n();
    let world = validate_incomes(incomes, n)?;
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(OracleError::InvalidScenario(format!("damping {} outside (0, 1]", config.damping)));
    }
    let kernel = power_kernel(t, sigma);
    let d = config.damping;
    // a = Pi^(1-sigma), b = P^(1-sigma)
    let mut a = vec![1.0; n];
    let mut b = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 0..=config.max_iterations {
        let (a_new, b_new, r) = sweep(&kernel, incomes, world, &a, &b);
        residual = r;
        if residual <= config.tolerance {
            let e = 1.0 / (1.0 - sigma.value());
            return Ok(ResistanceVectors {
                outward: a.iter().map(|x| x.powf(e)).collect(),
                inward: b.iter().map(|x| x.powf(e)).collect(),
                pinned: 0,
                iterations: iteration,
                residual,
            });
        }
        if iteration == config.max_iterations {
            break;
        }
        // Log-space damping also kills the joint-scale oscillation of the
        // undamped Jacobi sweep.
        for k in 0..n {
            a[k] = if d == 1.0 { a_new[k] } else { a[k].powf(1.0 - d) * a_new[k].powf(d) };
            b[k] = if d == 1.0 { b_new[k] } else { b[k].powf(1.0 - d) * b_new[k].powf(d) };
        }
        let pin = b[0];
        for k in 0..n {
            b[k] /= pin;
            a[k] *= pin;
        }
    }
    Err(OracleError::NoConvergence { residual, iterations: config.max_iterations })
}

/// Relative residual of `r` in the fixed-point system.
pub fn resistance_residual(t: &FrictionMatrix, incomes: &[f64], sigma: Sigma, r: &ResistanceVectors) -> f64 {
    let world: f64 = incomes.iter().sum();
    let e = 1.0 - sigma.value();
    let a: Vec<f64> = r.outward.iter().map(|x| x.powf(e)).collect();
    let b: Vec<f64> = r.inward.iter().map(|x| x.powf(e)).collect();
    sweep(&power_kernel(t, sigma), incomes, world, &a, &b).2
}

/// Dense n-by-n flow matrix, row = exporter; the diagonal is domestic trade.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    n: usize,
    data: Vec<f64>,
}

impl FlowMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, OracleError> {
        if data.len() != n * n {
            return Err(OracleError::DimensionMismatch(format!("{} entries for n = {n}", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.data[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }
}

/// Equilibrium exports implied by solved resistances.
pub fn predict_flows(t: &FrictionMatrix, incomes: &[f64], r: &ResistanceVectors, sigma: Sigma) -> FlowMatrix {
    let n = t.n();
    let world: f64 = incomes.iter().sum();
    let e = 1.0 - sigma.value();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let wedge = t.get(i, j) / (r.outward[i] * r.inward[j]);
            data.push(incomes[i] * incomes[j] / world * wedge.powf(e));
        }
    }
    FlowMatrix { n, data }
}

/// Largest absolute gap between the measured tariff equivalent of each pair
/// and the one implied by the true frictions.
pub fn recover_and_compare(flows: &FlowMatrix, t_true: &FrictionMatrix, sigma: Sigma) -> f64 {
    let n = flows.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let measured =
                trade_costs::bilateral_tau(flows.get(i, j), flows.get(j, i), flows.get(i, i), flows.get(j, j), sigma);
            let err = match measured {
                Ok(tau) => (tau - t_true.implied_tau(i, j)).abs(),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// Sampling laws for synthetic incomes and frictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionLaw {
    pub off_diag_min: f64,
    pub off_diag_max: f64,
    pub diag_min: f64,
    pub diag_max: f64,
    /// Incomes are log-uniform on [income_min, income_max], thousand USD.
    pub income_min: f64,
    pub income_max: f64,
}

impl Default for FrictionLaw {
    fn default() -> Self {
        Self { off_diag_min: 1.2, off_diag_max: 3.0, diag_min: 1.0, diag_max: 1.3, income_min: 1e6, income_max: 1e8 }
    }
}

impl FrictionLaw {
    fn validate(&self) -> Result<(), OracleError> {
        let ok = 1.0 <= self.off_diag_min
            && self.off_diag_min <= self.off_diag_max
            && 1.0 <= self.diag_min
            && self.diag_min <= self.diag_max
            && 0.0 < self.income_min
            && self.income_min <= self.income_max
            && self.off_diag_max.is_finite()
            && self.diag_max.is_finite()
            && self.income_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(OracleError::InvalidScenario(format!("inconsistent bounds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub incomes: Vec<f64>,
    pub frictions: FrictionMatrix,
    pub sigma: Sigma,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn world_income(&self) -> f64 {
        self.incomes.iter().sum()
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<(ResistanceVectors, FlowMatrix), OracleError> {
        let r = solve_multilateral_resistance(&self.frictions, &self.incomes, self.sigma, config)?;
        let flows = predict_flows(&self.frictions, &self.incomes, &r, self.sigma);
        Ok((r, flows))
    }
}

/// Draws a world deterministically from `seed`; frictions may be asymmetric.
pub fn synth_world(n: usize, seed: u64, law: &FrictionLaw, sigma: Sigma) -> Result<SyntheticWorld, OracleError> {
    if n < 2 {
        return Err(OracleError::TooFewCountries);
    }
    law.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (law.income_min.ln(), law.income_max.ln());
    let incomes: Vec<f64> = (0..n).map(|_| draw(&mut rng, lo, hi).exp()).collect();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = if i == j { (law.diag_min, law.diag_max) } else { (law.off_diag_min, law.off_diag_max) };
            data.push(draw(&mut rng, a, b));
        }
    }
    Ok(SyntheticWorld { incomes, frictions: FrictionMatrix::new(n, data)?, sigma, seed })
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Multi-year synthetic panel description, read from a small TOML file.
///
/// ```toml
/// n = 6
/// start_year = 1993
/// end_year = 2019
/// seed = 7
/// sigma = 8.0
/// income_growth = 0.05        # uniform annual growth of every income
/// income_growth_spread = 0.0  # per-country deviation, drawn from the seed
/// friction_drift = -0.02      # annual relative change of (t_ij - 1), off-diagonal
///
/// [law]
/// off_diag_min = 1.2
/// off_diag_max = 3.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub start_year: Year,
    pub end_year: Year,
    pub seed: u64,
    pub sigma: f64,
    pub income_growth: f64,
    pub income_growth_spread: f64,
    pub friction_drift: f64,
    /// Restrict `friction_drift` to pairs involving the home country (index 0).
    pub drift_home_only: bool,
    pub law: FrictionLaw,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: 6,
            start_year: 1993,
            end_year: 2019,
            seed: 1,
            sigma: 8.0,
            income_growth: 0.05,
            income_growth_spread: 0.0,
            friction_drift: 0.0,
            drift_home_only: false,
            law: FrictionLaw::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, OracleError> {
        toml::from_str(text).map_err(|e| OracleError::InvalidScenario(e.to_string()))
    }

    pub fn sigma(&self) -> Result<Sigma, OracleError> {
        Ok(Sigma::new(self.sigma)?)
    }

    pub fn years(&self) -> Result<YearRange, OracleError> {
        Ok(YearRange::new(self.start_year, self.end_year)?)
    }
}

/// Synthetic country code for index `k`.
pub fn synthetic_code(k: usize) -> CountryCode {
    CountryCode::new(&format!("C{k:03}")).expect("valid code")
}

/// One world per year, drifting from the seeded initial draw.
pub fn scenario_worlds(scenario: &Scenario) -> Result<Vec<(Year, SyntheticWorld)>, OracleError> {
    let sigma = scenario.sigma()?;
    let years = scenario.years()?;
    let base = synth_world(scenario.n, scenario.seed, &scenario.law, sigma)?;
    let n = scenario.n;
    // Independent stream for growth dispersion so the base world does not
    // depend on whether dispersion is enabled.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x9E37_79B9_7F4A_7C15);
    let growth: Vec<f64> = (0..n)
        .map(|_| {
            let spread = scenario.income_growth_spread;
            scenario.income_growth + if spread > 0.0 { rng.gen_range(-spread..spread) } else { 0.0 }
        })
        .collect();
    if growth.iter().any(|g| *g <= -1.0) || scenario.friction_drift <= -1.0 {
        return Err(OracleError::InvalidScenario("growth and drift rates must exceed -1".into()));
    }
    let mut worlds = Vec::with_capacity(years.len());
    for (k, year) in years.years().enumerate() {
        let steps = k as i32;
        let incomes: Vec<f64> = base.incomes.iter().zip(&growth).map(|(y, g)| y * (1.0 + g).powi(steps)).collect();
        let mut frictions = base.frictions.clone();
        if scenario.friction_drift != 0.0 {
            let factor = (1.0 + scenario.friction_drift).powi(steps);
            for i in 0..n {
                for j in 0..n {
                    let home_pair = i == 0 || j == 0;
                    if i != j && (home_pair || !scenario.drift_home_only) {
                        let t0 = base.frictions.get(i, j);
                        frictions.set(i, j, 1.0 + (t0 - 1.0) * factor)?;
                    }
                }
            }
        }
        worlds.push((year, SyntheticWorld { incomes, frictions, sigma, seed: scenario.seed }));
    }
    Ok(worlds)
}

/// Deterministic classification for synthetic partners (all six regions,
/// both development groups, both BRI groups once n is large enough).
pub fn synthetic_classification(n: usize) -> ClassificationTable {
    let mut table = ClassificationTable::new();
    for k in 1..n {
        let dev_status = if k % 3 == 0 { DevStatus::DevelopingEmerging } else { DevStatus::Developed };
        table.insert(
            synthetic_code(k),
            Classification { region: Region::ALL[(k - 1) % Region::ALL.len()], dev_status, bri: k % 2 == 1 },
        );
    }
    table
}

/// Solves each year and assembles a panel with home `C000` and the full
/// bilateral flow matrix.
pub fn worlds_to_dataset(worlds: &[(Year, SyntheticWorld)], config: &SolverConfig) -> Result<Dataset, OracleError> {
    let (first, last) = match (worlds.first(), worlds.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(OracleError::InvalidScenario("no years".into())),
    };
    let n = worlds[0].1.incomes.len();
    let codes: Vec<CountryCode> = (0..n).map(synthetic_code).collect();
    let mut flows = FlowPanel::new();
    let mut domestic = DomesticPanel::new();
    let mut gdp = GdpPanel::new();
    for (year, world) in worlds {
        if world.incomes.len() != n {
            return Err(OracleError::DimensionMismatch(format!("year {year} has {} countries", world.incomes.len())));
        }
        let (_, x) = world.solve(config)?;
        for i in 0..n {
            domestic.insert(codes[i].clone(), *year, x.get(i, i));
            gdp.insert(codes[i].clone(), *year, world.incomes[i]);
            for j in 0..n {
                if i != j {
                    flows.insert(FlowKey::new(codes[i].clone(), codes[j].clone(), *year), x.get(i, j), "SYNTH");
                }
            }
        }
        gdp.insert(CountryCode::world(), *year, world.world_income());
    }
    let range = YearRange::new(first, last)?;
    Ok(build_dataset_in_range(flows, domestic, gdp, synthetic_classification(n), codes[0].clone(), Some(range))?)
}

/// Builds the per-year worlds of a scenario and their panel.
pub fn synth_panel(
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<(Vec<(Year, SyntheticWorld)>, Dataset), OracleError> {
    let worlds = scenario_worlds(scenario)?;
    let ds = worlds_to_dataset(&worlds, config)?;
    Ok((worlds, ds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub worlds: usize,
    pub sigma: f64,
    pub max_error: f64,
    pub worst_seed: u64,
    pub max_iterations: usize,
    pub errors_by_n: BTreeMap<usize, f64>,
}

/// Sizes cycle through 2..=10 across seeds.
pub fn selftest_size(seed: u64) -> usize {
    2 + (seed % 9) as usize
}

/// Recovery check over `count` seeded asymmetric worlds. A solver failure is
/// returned together with the failing seed.
pub fn run_selftest(count: u64, sigma: Sigma, config: &SolverConfig) -> Result<SelfTestReport, (u64, OracleError)> {
    let law = FrictionLaw::default();
    let mut report = SelfTestReport {
        worlds: 0,
        sigma: sigma.value(),
        max_error: 0.0,
        worst_seed: 0,
        max_iterations: 0,
        errors_by_n: BTreeMap::new(),
    };
    for seed in 0..count {
        let n = selftest_size(seed);
        let world = synth_world(n, seed, &law, sigma).map_err(|e| (seed, e))?;
        let (r, flows) = world.solve(config).map_err(|e| (seed, e))?;
        let err = recover_and_compare(&flows, &world.frictions, sigma);
        if err > report.max_error || report.worlds == 0 {
            report.max_error = err;
            report.worst_seed = seed;
        }
        let slot = report.errors_by_n.entry(n).or_insert(0.0);
        *slot = slot.max(err);
        report.max_iterations = report.max_iterations.max(r.iterations);
        report.worlds += 1;
    }
    Ok(report)
}

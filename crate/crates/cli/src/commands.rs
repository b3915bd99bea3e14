use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use tradecost_core::decomposition::{
    aggregate_group, decompose_home_pairs, DecompositionConfig, DecompositionError, DecompositionRecord,
};
use tradecost_core::gravity_oracle::{run_selftest, synth_panel, OracleError};
use tradecost_core::ingest::{read_flows, IngestError};
use tradecost_core::panel_store::{coverage_report, PanelError, Slot};
use tradecost_core::report::{CostReport, CoverageTable, DecompositionReport, DecompositionRow, Format, ReportError};
use tradecost_core::trade_costs::{
    bilateral_series, group_series, summarize, CostError, MissingMode, TradeCostSeries, SENSITIVITY_SIGMAS,
};
use tradecost_core::{CountryCode, Dataset, GroupSelector, Scenario, Sigma, SolverConfig, Year};

use crate::{CostsArgs, DecomposeArgs, GlobalArgs, SelftestArgs, SynthArgs};

pub const EXIT_DATA: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_USAGE: u8 = 3;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Data(String),
    Numeric(String),
    Usage(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => EXIT_DATA,
            Failure::Numeric(_) => EXIT_NUMERIC,
            Failure::Usage(_) => EXIT_USAGE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Data(m) | Failure::Numeric(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.to_string())
            }
        }
    )*};
}

data_error!(PanelError, IngestError, CostError, DecompositionError, ReportError, std::io::Error);

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NoConvergence { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn emit(text: &str) -> CmdResult {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Failure::Usage(e.to_string()))
}

pub fn load(global: &GlobalArgs) -> Result<Dataset, Failure> {
    let dir = global.data.as_ref().ok_or_else(|| Failure::Usage("--data is required".into()))?;
    let mut extra = Vec::with_capacity(global.flow_sources.len());
    for (k, (id, path)) in global.flow_sources.iter().enumerate() {
        extra.push(read_flows(path, id, k as i32 + 1)?);
    }
    Ok(Dataset::load_dir_with_sources(dir, global.home.as_ref(), &extra)?)
}

/// Sigma list: explicit values, plus the sweep when requested, defaulting to 8.
pub fn sigmas(global: &GlobalArgs) -> Vec<Sigma> {
    let mut list = global.sigma.clone();
    if global.sensitivity {
        list.extend(SENSITIVITY_SIGMAS.iter().map(|v| Sigma::new(*v).expect("valid")));
    }
    if list.is_empty() {
        list.push(Sigma::DEFAULT);
    }
    let mut seen = Vec::new();
    list.retain(|s| {
        let fresh = !seen.contains(&s.value().to_bits());
        seen.push(s.value().to_bits());
        fresh
    });
    list
}

/// Analysis years: the dataset range narrowed by --start/--end.
pub fn year_span(global: &GlobalArgs, ds: &Dataset) -> Result<(Year, Year), Failure> {
    let range = ds.years();
    let start = global.start.unwrap_or(range.start);
    let end = global.end.unwrap_or(range.end);
    if start > end {
        return Err(Failure::Usage(format!("--start {start} is after --end {end}")));
    }
    if start < range.start || end > range.end {
        return Err(Failure::Data(format!("years {start}-{end} fall outside the data range {range}")));
    }
    Ok((start, end))
}

fn mode(global: &GlobalArgs) -> MissingMode {
    if global.strict {
        MissingMode::Strict
    } else {
        MissingMode::Lenient
    }
}

pub fn validate(global: &GlobalArgs) -> CmdResult {
    let ds = load(global)?;
    let report = coverage_report(&ds);
    emit(&CoverageTable::from_report(&report).render(global.format)?)?;

    eprintln!(
        "home {}, {} partners, years {}: {} of {} cells present, {} missing cells",
        report.home,
        report.partners.len(),
        report.years,
        report.present_count,
        report.total_slots(),
        report.missing_count()
    );
    for partner in &report.partners {
        if partner.missing == 0 {
            continue;
        }
        let gaps: Vec<_> = report.missing.iter().filter(|m| m.partner == partner.partner).collect();
        let mut years: Vec<Year> = gaps.iter().map(|m| m.year).collect();
        years.dedup();
        let mut slots: Vec<Slot> = gaps.iter().map(|m| m.slot).collect();
        slots.sort();
        slots.dedup();
        let slots: Vec<&str> = slots.iter().map(|s| s.name()).collect();
        eprintln!(
            "  {}: {} missing, years {} ({})",
            partner.partner,
            partner.missing,
            year_runs(&years),
            slots.join(", ")
        );
    }
    let sources = ds.flows().source_counts();
    let sources: Vec<String> = sources.iter().map(|(id, n)| format!("{id}={n}")).collect();
    eprintln!("flow cells by source: {}", sources.join(", "));
    Ok(())
}

/// Compresses sorted years into runs, e.g. `1993-1994, 2001`.
fn year_runs(years: &[Year]) -> String {
    let mut runs: Vec<(Year, Year)> = Vec::new();
    for &y in years {
        match runs.last_mut() {
            Some((_, end)) if *end + 1 == y => *end = y,
            _ => runs.push((y, y)),
        }
    }
    runs.iter().map(|(a, b)| if a == b { a.to_string() } else { format!("{a}-{b}") }).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone)]
enum CostTask {
    Pair(CountryCode, CountryCode),
    Group(GroupSelector),
}

pub fn costs(global: &GlobalArgs, args: &CostsArgs) -> CmdResult {
    let ds = load(global)?;
    let (start, end) = year_span(global, &ds)?;
    let mut tasks: Vec<CostTask> = args.pair.iter().map(|(i, j)| CostTask::Pair(i.clone(), j.clone())).collect();
    if args.all_pairs {
        tasks.extend(ds.partners().iter().map(|p| CostTask::Pair(ds.home().clone(), p.clone())));
    }
    if args.average {
        tasks.push(CostTask::Group(GroupSelector::All));
    }
    tasks.extend(args.group.iter().cloned().map(CostTask::Group));
    tasks.extend(args.by.iter().flatten().cloned().map(CostTask::Group));
    if tasks.is_empty() {
        return Err(Failure::Usage("nothing to compute: give --pair, --all-pairs, --average, --group or --by".into()));
    }
    for task in &tasks {
        if let CostTask::Pair(i, j) = task {
            for c in [i, j] {
                if c != ds.home() && !ds.partners().contains(c) {
                    return Err(Failure::Data(format!("country {c} does not appear in the flow panel")));
                }
            }
        }
    }
    let overrides: BTreeMap<&str, Year> = args.end_override.iter().map(|(k, y)| (k.as_str(), *y)).collect();
    let sigmas = sigmas(global);
    let mode = mode(global);

    let jobs: Vec<(Sigma, &CostTask)> = sigmas.iter().flat_map(|s| tasks.iter().map(move |t| (*s, t))).collect();
    let computed: Vec<Result<TradeCostSeries, CostError>> = pool(global.jobs)?.install(|| {
        jobs.par_iter()
            .map(|(sigma, task)| match task {
                CostTask::Pair(i, j) => Ok(bilateral_series(&ds, i, j, start..=end, *sigma)),
                CostTask::Group(g) => group_series(&ds, g, start..=end, *sigma, mode, args.method),
            })
            .collect()
    });

    let mut blocks: Vec<CostReport> = sigmas.iter().map(|_| CostReport::default()).collect();
    for ((sigma, _), series) in jobs.iter().zip(computed) {
        let series = series?;
        let k = sigmas.iter().position(|s| s == sigma).expect("listed");
        let block = &mut blocks[k];
        block.push_series(ds.home(), &series);
        let label = series.subject.j_label();
        match summarize(&series, start, end, overrides.get(label.as_str()).copied()) {
            Ok(summary) => block.push_summary(ds.home(), &series, &summary),
            Err(e) if !global.strict => eprintln!("warning: no summary for {label}: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    for block in &mut blocks {
        block.sort();
    }
    emit(&render_cost_blocks(&blocks, global.format)?)
}

/// One CSV report per sigma separated by blank lines, or a JSON array.
fn render_cost_blocks(blocks: &[CostReport], format: Format) -> Result<String, Failure> {
    match format {
        Format::Csv => {
            let parts: Result<Vec<String>, _> = blocks.iter().map(|b| b.render(Format::Csv)).collect();
            Ok(parts?.join("\n"))
        }
        Format::Json => {
            serde_json::to_string_pretty(blocks).map(|s| s + "\n").map_err(|e| Failure::Data(e.to_string()))
        }
    }
}

/// Pair records for `partners`, then one row per group, computed on the pool.
pub fn decompose_rows(
    ds: &Dataset,
    partners: &[CountryCode],
    groups: &[GroupSelector],
    cfg: &DecompositionConfig,
    strict: bool,
    jobs: usize,
) -> Result<Vec<DecompositionRecord>, Failure> {
    let results: Vec<_> = pool(jobs)?.install(|| {
        partners
            .par_iter()
            .map(|p| decompose_home_pairs(ds, std::slice::from_ref(p), cfg).pop().expect("one partner"))
            .collect()
    });
    let mut by_partner = BTreeMap::new();
    let mut rows = Vec::new();
    for (partner, rec) in results {
        match &rec {
            Ok(r) => rows.push(r.clone()),
            Err(e) if strict => return Err(Failure::Data(format!("{}-{partner}: {e}", ds.home()))),
            Err(e) => eprintln!("warning: skipping {}-{partner}: {e}", ds.home()),
        }
        by_partner.insert(partner, rec);
    }
    for group in groups {
        match aggregate_group(ds, group, &by_partner, cfg.weight_year) {
            Ok(r) => rows.push(r),
            Err(e) if strict => return Err(Failure::Data(format!("group {}: {e}", group.label()))),
            Err(e) => eprintln!("warning: skipping group {}: {e}", group.label()),
        }
    }
    Ok(rows)
}

pub fn decompose(global: &GlobalArgs, args: &DecomposeArgs) -> CmdResult {
    let ds = load(global)?;
    let range = ds.years();
    let end_year = args.end_year.or(global.end).unwrap_or(range.end);
    let window = global.base_window;
    if !range.contains(window.start) || !range.contains(window.end) {
        return Err(Failure::Data(format!("base window {window} falls outside the data range {range}")));
    }
    if !range.contains(end_year) || end_year <= window.end {
        return Err(Failure::Data(format!("end year {end_year} must follow the base window {window} inside {range}")));
    }
    let partners: Vec<CountryCode> = if args.partner.is_empty() {
        ds.partners().to_vec()
    } else {
        for p in &args.partner {
            if !ds.partners().contains(p) {
                return Err(Failure::Data(format!("{p} is not a partner of {}", ds.home())));
            }
        }
        args.partner.clone()
    };
    let groups: Vec<GroupSelector> = args.by.iter().flatten().chain(&args.group).cloned().collect();
    let sigma = sigmas(global)[0];
    let cfg = DecompositionConfig {
        window,
        end_year,
        sigma,
        growth: args.growth,
        weight_year: args.weight_year.unwrap_or(end_year),
    };
    let rows = decompose_rows(&ds, &partners, &groups, &cfg, global.strict, global.jobs)?;
    let report = DecompositionReport { rows: rows.iter().map(DecompositionRow::from_record).collect() };
    for r in &rows {
        if !r.flags.is_empty() {
            let flags: Vec<String> = r.flags.iter().map(|f| f.to_string()).collect();
            eprintln!("note: {} {}: {}", r.scope.kind(), r.scope.label(), flags.join("; "));
        }
    }
    emit(&report.render(global.format, global.display)?)
}

pub fn synth(global: &GlobalArgs, args: &SynthArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.scenario.display())))?;
    let mut scenario = Scenario::from_toml(&text)?;
    if let Some(s) = global.sigma.first() {
        scenario.sigma = s.value();
    }
    let (worlds, ds) = synth_panel(&scenario, &SolverConfig::default())?;
    ds.export_dir(&args.out)?;
    eprintln!(
        "wrote {} countries x {} years (home {}, sigma {}) to {}",
        scenario.n,
        worlds.len(),
        ds.home(),
        scenario.sigma,
        args.out.display()
    );
    Ok(())
}

pub fn selftest(global: &GlobalArgs, args: &SelftestArgs) -> CmdResult {
    let sigma = sigmas(global)[0];
    let report = run_selftest(args.worlds, sigma, &SolverConfig::default())
        .map_err(|(seed, e)| Failure::from(e).with_context(&format!("seed {seed}")))?;
    let mut text = String::from("n,max_abs_error\n");
    for (n, err) in &report.errors_by_n {
        text.push_str(&format!("{n},{err:e}\n"));
    }
    emit(&text)?;
    let pass = report.max_error <= args.tolerance;
    eprintln!(
        "{} worlds, sigma {}, worst seed {}, max solver iterations {}",
        report.worlds, report.sigma, report.worst_seed, report.max_iterations
    );
    if pass {
        eprintln!("max recovery error {:e} ≤ {:e}, PASS", report.max_error, args.tolerance);
        Ok(())
    } else {
        Err(Failure::Numeric(format!("max recovery error {:e} > {:e}, FAIL", report.max_error, args.tolerance)))
    }
}

impl Failure {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            Failure::Data(m) => Failure::Data(format!("{ctx}: {m}")),
            Failure::Numeric(m) => Failure::Numeric(format!("{ctx}: {m}")),
            Failure::Usage(m) => Failure::Usage(format!("{ctx}: {m}")),
        }
    }
}

mod commands;
mod replicate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tradecost_core::decomposition::{BaseWindow, GrowthDefinition};
use tradecost_core::report::Format;
use tradecost_core::trade_costs::GroupMethod;
use tradecost_core::{CountryCode, Sigma};

/// Trade-cost measurement, growth decomposition and gravity-model self checks.
#[derive(Debug, Parser)]
#[command(name = "tradecost", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Each one can also be set through a
/// `TRADECOST_*` environment variable.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Dataset directory holding flows.csv, domestic.csv, gdp.csv and classification.csv
    #[arg(long, global = true, env = "TRADECOST_DATA")]
    pub data: Option<PathBuf>,

    /// Home country code (defaults to the manifest's home)
    #[arg(long, global = true, env = "TRADECOST_HOME", value_parser = parse_code)]
    pub home: Option<CountryCode>,

    /// Elasticity of substitution; repeat for a sensitivity sweep
    #[arg(long, global = true, env = "TRADECOST_SIGMA", value_delimiter = ',', value_parser = parse_sigma)]
    pub sigma: Vec<Sigma>,

    /// Add the 5, 8, 10 sensitivity sweep to the sigma list
    #[arg(long, global = true, env = "TRADECOST_SENSITIVITY")]
    pub sensitivity: bool,

    /// First year of the analysis
    #[arg(long, global = true, env = "TRADECOST_START")]
    pub start: Option<i32>,

    /// Last year of the analysis
    #[arg(long, global = true, env = "TRADECOST_END")]
    pub end: Option<i32>,

    /// Base window for decompositions, as Y1:Y2
    #[arg(long, global = true, env = "TRADECOST_BASE_WINDOW", default_value = "1993:1995", value_parser = parse_window)]
    pub base_window: BaseWindow,

    /// Output format
    #[arg(long, global = true, env = "TRADECOST_FORMAT", default_value = "csv", value_parser = parse_format)]
    pub format: Format,

    /// Fail on the first missing cell instead of dropping and flagging it
    #[arg(long, global = true, env = "TRADECOST_STRICT")]
    pub strict: bool,

    /// Worker threads (0 uses all cores)
    #[arg(long, global = true, env = "TRADECOST_JOBS", default_value_t = 1)]
    pub jobs: usize,

    /// Extra flow source as ID=PATH, filling cells absent from flows.csv; repeatable, earlier wins
    #[arg(long = "flow-source", global = true, env = "TRADECOST_FLOW_SOURCE", value_delimiter = ';', value_parser = parse_source)]
    pub flow_sources: Vec<(String, PathBuf)>,

    /// Round percentages to two decimals in the output
    #[arg(long, global = true, env = "TRADECOST_DISPLAY")]
    pub display: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the dataset and report coverage and missing cells
    Validate,
    /// Bilateral, average and group trade-cost series
    Costs(CostsArgs),
    /// Decompose bilateral trade growth into income, trade costs and resistance
    Decompose(DecomposeArgs),
    /// Write a synthetic dataset generated from a scenario file
    Synth(SynthArgs),
    /// Check measured costs against known frictions in seeded synthetic worlds
    Selftest(SelftestArgs),
    /// Run the Cambodia configuration and compare with published benchmark values
    Replicate,
}

#[derive(Debug, Args)]
pub struct CostsArgs {
    /// Country pair as I,J; repeatable
    #[arg(long, value_parser = parse_pair)]
    pub pair: Vec<(CountryCode, CountryCode)>,

    /// Every home-partner pair
    #[arg(long)]
    pub all_pairs: bool,

    /// Average over all partners
    #[arg(long)]
    pub average: bool,

    /// Partner group (all, bri, non_bri, developed, developing_emerging, region:NAME); repeatable
    #[arg(long, value_parser = parse_group)]
    pub group: Vec<tradecost_core::GroupSelector>,

    /// Every group of a dimension: region, dev_status, bri or all; repeatable
    #[arg(long, value_parser = parse_dimension)]
    pub by: Vec<Vec<tradecost_core::GroupSelector>>,

    /// How groups pool their members
    #[arg(long, default_value = "model", value_parser = parse_method)]
    pub method: GroupMethod,

    /// Summary end year for one partner or group label, as CODE=YEAR; repeatable
    #[arg(long = "end-override", value_parser = parse_override)]
    pub end_override: Vec<(String, i32)>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Partners to decompose against the home country (default: all)
    #[arg(long, value_delimiter = ',', value_parser = parse_code)]
    pub partner: Vec<CountryCode>,

    /// Group rows by dimension: region, dev_status, bri or all; repeatable
    #[arg(long, value_parser = parse_dimension)]
    pub by: Vec<Vec<tradecost_core::GroupSelector>>,

    /// Single group row; repeatable
    #[arg(long, value_parser = parse_group)]
    pub group: Vec<tradecost_core::GroupSelector>,

    /// End year (defaults to --end or the last year of the data)
    #[arg(long)]
    pub end_year: Option<i32>,

    /// Year whose pair GDPs weight group rows (defaults to the end year)
    #[arg(long)]
    pub weight_year: Option<i32>,

    /// Trade growth definition: geometric (mean of both directions) or product
    #[arg(long, default_value = "geometric", value_parser = parse_growth)]
    pub growth: GrowthDefinition,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    pub scenario: PathBuf,

    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Number of seeded worlds
    #[arg(long, default_value_t = 100)]
    pub worlds: u64,

    /// Largest accepted absolute recovery error
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

fn parse_code(s: &str) -> Result<CountryCode, String> {
    CountryCode::new(s).map_err(|e| e.to_string())
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    Sigma::new(v).map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> Result<BaseWindow, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected Y1:Y2, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
    BaseWindow::new(a, b).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_source(s: &str) -> Result<(String, PathBuf), String> {
    let (id, path) = s.split_once('=').ok_or_else(|| format!("expected ID=PATH, got {s:?}"))?;
    if id.is_empty() || path.is_empty() {
        return Err(format!("expected ID=PATH, got {s:?}"));
    }
    Ok((id.to_string(), PathBuf::from(path)))
}

fn parse_pair(s: &str) -> Result<(CountryCode, CountryCode), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected I,J, got {s:?}"))?;
    let (a, b) = (parse_code(a.trim())?, parse_code(b.trim())?);
    if a == b {
        return Err(format!("pair needs two different countries, got {s:?}"));
    }
    Ok((a, b))
}

fn parse_group(s: &str) -> Result<tradecost_core::GroupSelector, String> {
    s.parse()
}

fn parse_dimension(s: &str) -> Result<Vec<tradecost_core::GroupSelector>, String> {
    tradecost_core::GroupSelector::dimension(s)
        .ok_or_else(|| format!("unknown dimension {s:?} (expected region, dev_status, bri or all)"))
}

fn parse_method(s: &str) -> Result<GroupMethod, String> {
    match s {
        "model" => Ok(GroupMethod::ModelBased),
        "trade-weighted" => Ok(GroupMethod::TradeWeighted),
        other => Err(format!("unknown method {other:?} (expected model or trade-weighted)")),
    }
}

fn parse_growth(s: &str) -> Result<GrowthDefinition, String> {
    match s {
        "geometric" => Ok(GrowthDefinition::GeometricMean),
        "product" => Ok(GrowthDefinition::Product),
        other => Err(format!("unknown growth definition {other:?} (expected geometric or product)")),
    }
}

fn parse_override(s: &str) -> Result<(String, i32), String> {
    let (code, year) = s.split_once('=').ok_or_else(|| format!("expected CODE=YEAR, got {s:?}"))?;
    let year = year.trim().parse().map_err(|_| format!("bad year {year:?}"))?;
    Ok((code.trim().to_string(), year))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };
    let result = match &cli.command {
        Command::Validate => commands::validate(&cli.global),
        Command::Costs(args) => commands::costs(&cli.global, args),
        Command::Decompose(args) => commands::decompose(&cli.global, args),
        Command::Synth(args) => commands::synth(&cli.global, args),
        Command::Selftest(args) => commands::selftest(&cli.global, args),
        Command::Replicate => replicate::run(&cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

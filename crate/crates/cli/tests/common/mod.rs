#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tradecost_core::gravity_oracle::synth_panel;
use tradecost_core::{Scenario, SolverConfig};

pub const BIN: &str = env!("CARGO_BIN_EXE_tradecost");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_clear().output().expect("spawn tradecost")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes the dataset of a scenario into `dir` and returns `dir`.
pub fn scenario_dir(dir: &Path, scenario: &Scenario) -> PathBuf {
    let (_, ds) = synth_panel(scenario, &SolverConfig::default()).expect("scenario solves");
    ds.export_dir(dir).expect("export");
    dir.to_path_buf()
}

/// Pair-years removed from the benchmark-shaped panel: a partner first observed
/// in 1995 and one isolated gap, leaving 807 of 810 export cells.
pub const BENCHMARK_GAPS: [(&str, i32); 3] = [("C007", 1993), ("C007", 1994), ("C019", 2008)];

/// 30 partners over 1993-2019, home flows only, with three missing
/// pair-years in both directions. Home `C000`, no manifest.
pub fn benchmark_shaped_dir(dir: &Path) -> PathBuf {
    let scenario = Scenario {
        n: 31,
        seed: 2019,
        income_growth: 0.06,
        income_growth_spread: 0.04,
        friction_drift: -0.015,
        ..Scenario::default()
    };
    scenario_dir(dir, &scenario);
    let flows = dir.join("flows.csv");
    let text = fs::read_to_string(&flows).expect("flows.csv");
    let kept: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(k, line)| *k == 0 || line.split(',').take(3).skip(1).any(|c| c == "C000"))
        .map(|(_, line)| line)
        .filter(|line| {
            !BENCHMARK_GAPS.iter().any(|(p, y)| {
                line.starts_with(&format!("{y},C000,{p},")) || line.starts_with(&format!("{y},{p},C000,"))
            })
        })
        .collect();
    fs::write(&flows, kept.join("\n") + "\n").expect("write flows");
    fs::remove_file(dir.join("manifest.json")).expect("remove manifest");
    dir.to_path_buf()
}

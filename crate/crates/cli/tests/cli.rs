mod common;

use std::fs;

use common::{benchmark_shaped_dir, path_str, run, scenario_dir, stderr, stdout};
use tradecost_core::report::{CostReport, CoverageTable, DecompositionReport, Format};
use tradecost_core::Scenario;

#[test]
fn validate_reports_the_late_starting_partner() {
    let dir = tempfile::tempdir().unwrap();
    let data = benchmark_shaped_dir(dir.path());
    let out = run(&["validate", "--data", path_str(&data), "--home", "C000"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let table = CoverageTable::parse(&stdout(&out), Format::Csv).unwrap();
    assert_eq!(table.partners.len(), 30);
    let late = table.partners.iter().find(|p| p.partner == "C007").unwrap();
    assert_eq!(late.first_complete_year, Some(1995));
    let gaps: Vec<(i32, &str)> =
        table.missing.iter().filter(|m| m.partner == "C007").map(|m| (m.year, m.slot.as_str())).collect();
    assert_eq!(gaps, vec![(1993, "export"), (1993, "import"), (1994, "export"), (1994, "import")]);

    let log = stderr(&out);
    assert!(log.contains("6 missing cells"), "{log}");
    assert!(log.contains("C007: 4 missing, years 1993-1994 (export, import)"), "{log}");
    assert!(log.contains("C019: 2 missing, years 2008"), "{log}");
}

#[test]
fn validate_clean_synthetic_panel() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 4, ..Scenario::default() });
    let out = run(&["validate", "--data", path_str(&data)]);
    assert!(out.status.success());
    assert!(stderr(&out).contains(", 0 missing cells"));
    assert!(stderr(&out).contains("flow cells by source: SYNTH="));
}

#[test]
fn missing_gdp_file_is_a_data_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = benchmark_shaped_dir(dir.path());
    fs::remove_file(data.join("gdp.csv")).unwrap();
    let out = run(&["validate", "--data", path_str(&data), "--home", "C000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gdp.csv"));
}

#[test]
fn tampered_file_fails_the_manifest_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 3, ..Scenario::default() });
    let gdp = data.join("gdp.csv");
    let text = fs::read_to_string(&gdp).unwrap();
    fs::write(&gdp, text + "\n").unwrap();
    let out = run(&["validate", "--data", path_str(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gdp.csv"));
}

#[test]
fn usage_errors_exit_with_three() {
    for args in [
        vec!["frobnicate"],
        vec!["costs", "--sigma", "1"],
        vec!["costs", "--base-window", "1995"],
        vec!["costs", "--format", "xml"],
        vec!["costs", "--pair", "KHM"],
    ] {
        assert_eq!(run(&args).status.code(), Some(3), "{args:?}");
    }
    assert_eq!(run(&["costs", "--pair", "A1,B1"]).status.code(), Some(3), "--data is required");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn environment_variables_stand_in_for_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 3, ..Scenario::default() });
    let flags = run(&["costs", "--data", path_str(&data), "--pair", "C000,C001", "--sigma", "5"]);
    let env = std::process::Command::new(common::BIN)
        .args(["costs", "--pair", "C000,C001"])
        .env_clear()
        .env("TRADECOST_DATA", &data)
        .env("TRADECOST_SIGMA", "5")
        .output()
        .unwrap();
    assert!(flags.status.success());
    assert_eq!(flags.stdout, env.stdout);
}

#[test]
fn sigma_blocks_obey_the_scaling_law() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 4, friction_drift: -0.01, ..Scenario::default() });
    let out = run(&["costs", "--data", path_str(&data), "--pair", "C000,C002", "--sigma", "5", "--sigma", "8"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 4);
    let five = CostReport::parse(&format!("{}\n\n{}", blocks[0], blocks[1]), Format::Csv).unwrap();
    let eight = CostReport::parse(&format!("{}\n\n{}", blocks[2], blocks[3]), Format::Csv).unwrap();
    assert_eq!(five.series.len(), 27);
    for (a, b) in five.series.iter().zip(&eight.series) {
        assert_eq!((a.year, a.sigma, b.sigma), (b.year, 5.0, 8.0));
        let (ta, tb) = (a.tau_percent.unwrap() / 100.0, b.tau_percent.unwrap() / 100.0);
        assert!((ta.ln_1p() / tb.ln_1p() - 7.0 / 4.0).abs() < 1e-12);
    }
    assert_eq!(five.summary.len(), 1);
}

#[test]
fn group_series_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let data = benchmark_shaped_dir(dir.path());
    let out =
        run(&["costs", "--data", path_str(&data), "--home", "C000", "--average", "--group", "bri", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let reports: Vec<CostReport> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports.len(), 1);
    let report = &reports[0];
    assert_eq!(report.series.len(), 2 * 27);
    // Lenient mode drops the partners with gaps in those years and says so.
    let first = report.series.iter().find(|r| r.year == 1993 && r.j_or_group == "all").unwrap();
    assert_eq!(first.flag, "dropped:C007");
    let labels: Vec<&str> = report.summary.iter().map(|s| s.j_or_group.as_str()).collect();
    assert_eq!(labels, ["all", "bri"]);
    assert!(report.summary.iter().all(|s| s.start_year == 1993 && s.end_year == 2019));

    let strict = run(&["costs", "--data", path_str(&data), "--home", "C000", "--average", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn end_override_moves_the_summary_end_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 3, ..Scenario::default() });
    let out = run(&["costs", "--data", path_str(&data), "--pair", "C000,C001", "--end-override", "C001=2016"]);
    assert!(out.status.success());
    let report = CostReport::parse(&stdout(&out), Format::Csv).unwrap();
    assert_eq!(report.summary[0].end_year, 2016);
}

#[test]
fn uniform_growth_decomposes_into_income_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 7, income_growth: 0.05, ..Scenario::default() });
    let out = run(&["decompose", "--data", path_str(&data), "--by", "region", "--by", "all", "--display"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = DecompositionReport::parse(&stdout(&out), Format::Csv).unwrap();
    assert_eq!(report.rows.len(), 6 + 6 + 1);
    for row in &report.rows {
        assert_eq!((row.a_pct, row.b_pct, row.c_pct, row.sum_pct), (100.0, 0.0, 0.0, 100.0), "{row:?}");
    }
    assert!(stdout(&out).lines().skip(1).all(|l| l.contains(",100.00,0.00,0.00,100.00,")));
}

#[test]
fn falling_home_frictions_show_up_as_trade_cost_share() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario { n: 6, friction_drift: -0.03, drift_home_only: true, ..Scenario::default() };
    let data = scenario_dir(dir.path(), &scenario);
    let out = run(&["decompose", "--data", path_str(&data), "--format", "json"]);
    assert!(out.status.success());
    let report = DecompositionReport::parse(&stdout(&out), Format::Json).unwrap();
    assert_eq!(report.rows.len(), 5);
    for row in &report.rows {
        assert!(row.b_pct > 0.0, "{row:?}");
        assert!((row.sum_pct - 100.0).abs() < 1e-8);
    }
}

#[test]
fn decompose_rejects_a_window_outside_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 3, start_year: 2000, end_year: 2010, ..Scenario::default() });
    let out = run(&["decompose", "--data", path_str(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("base window 1993-1995"));
    let ok = run(&["decompose", "--data", path_str(&data), "--base-window", "2000:2002"]);
    assert!(ok.status.success());
}

#[test]
fn flow_sources_fill_gaps_without_overriding() {
    let dir = tempfile::tempdir().unwrap();
    let data = benchmark_shaped_dir(&dir.path().join("data"));
    let extra = dir.path().join("mirror.csv");
    fs::write(
        &extra,
        "year,reporter,partner,export_fob_kusd\n\
         1993,C000,C007,10\n1993,C007,C000,11\n1994,C000,C007,12\n1994,C007,C000,13\n\
         2000,C000,C001,999999\n",
    )
    .unwrap();
    let source = format!("MIRROR={}", path_str(&extra));
    let out = run(&["validate", "--data", path_str(&data), "--home", "C000", "--flow-source", &source]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = stderr(&out);
    assert!(log.contains("2 missing cells"), "{log}");
    assert!(log.contains("MIRROR=4"), "{log}");
}

#[test]
fn synth_is_reproducible_and_selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(&scenario, "n = 4\nseed = 3\n[law]\noff_diag_max = 2.5\n").unwrap();
    let mut listings = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = run(&["synth", "--scenario", path_str(&scenario), "--out", path_str(&out)]).status;
        assert!(status.success());
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
            .collect();
        files.sort();
        listings.push(files);
    }
    assert_eq!(listings[0], listings[1]);
    assert_eq!(listings[0].len(), 5);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n = 4\nunknown = 1\n").unwrap();
    assert_eq!(run(&["synth", "--scenario", path_str(&bad), "--out", path_str(dir.path())]).status.code(), Some(1));

    let out = run(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("≤ 1e-9, PASS"));
    let stressed = run(&["selftest", "--sigma", "1.5"]);
    assert_eq!(stressed.status.code(), Some(0));
}

#[test]
fn replicate_runs_against_any_panel() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenario_dir(dir.path(), &Scenario { n: 4, ..Scenario::default() });
    let out = run(&["replicate", "--data", path_str(&data), "--home", "C000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 90 + 27 + 21 + 40);
    assert!(stderr(&out).contains("trade growth definition"));
}

use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use tradecost_core::gravity_oracle::synth_panel;
use tradecost_core::ingest::{merge_flow_sources, SourceTable};
use tradecost_core::panel_store::{coverage_report, FlowKey, PanelError, Slot};
use tradecost_core::{CountryCode, Dataset, Scenario, SolverConfig};

fn code(s: &str) -> CountryCode {
    CountryCode::new(s).unwrap()
}

/// 30 partners over 1993-2019 keeping only home flows, with the two
/// earliest years of `C007` and 2008 of `C019` missing in both directions.
fn benchmark_shaped() -> Dataset {
    let scenario = Scenario { n: 31, seed: 5, income_growth_spread: 0.03, ..Scenario::default() };
    let (_, full) = synth_panel(&scenario, &SolverConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    full.export_dir(dir.path()).unwrap();
    let flows = dir.path().join("flows.csv");
    let text = fs::read_to_string(&flows).unwrap();
    let gaps = [("C007", 1993), ("C007", 1994), ("C019", 2008)];
    let kept: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let home_flow = f[1] == "C000" || f[2] == "C000";
            let gap = gaps.iter().any(|(p, y)| f[0] == y.to_string() && (f[1] == *p || f[2] == *p));
            *k == 0 || (home_flow && !gap)
        })
        .map(|(_, l)| l)
        .collect();
    fs::write(&flows, kept.join("\n") + "\n").unwrap();
    fs::remove_file(dir.path().join("manifest.json")).unwrap();
    Dataset::load_dir(dir.path(), Some(&code("C000"))).unwrap()
}

#[test]
fn benchmark_shaped_panel_has_807_of_810_cells() {
    let ds = benchmark_shaped();
    assert_eq!(ds.partners().len(), 30);
    assert_eq!(ds.years().len(), 27);
    let home = ds.home().clone();
    let exports = ds.flows().iter().filter(|(k, _)| k.reporter == home).count();
    let imports = ds.flows().iter().filter(|(k, _)| k.partner == home).count();
    assert_eq!((exports, imports), (807, 807));

    let report = coverage_report(&ds);
    assert_eq!(report.partners.len() * report.years.len(), 810);
    assert_eq!(report.missing_count(), 6);
    let late: Vec<(i32, Slot)> =
        report.missing.iter().filter(|m| m.partner == code("C007")).map(|m| (m.year, m.slot)).collect();
    assert_eq!(late, vec![(1993, Slot::Export), (1993, Slot::Import), (1994, Slot::Export), (1994, Slot::Import)]);
    let c007 = report.partners.iter().find(|p| p.partner == code("C007")).unwrap();
    assert_eq!(c007.first_complete_year, Some(1995));
}

#[test]
fn export_then_load_is_lossless() {
    let scenario = Scenario { n: 5, seed: 12, friction_drift: -0.02, ..Scenario::default() };
    let (_, ds) = synth_panel(&scenario, &SolverConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.export_dir(dir.path()).unwrap();
    let back = Dataset::load_dir(dir.path(), None).unwrap();
    assert_eq!(back, ds);

    let again = tempfile::tempdir().unwrap();
    back.export_dir(again.path()).unwrap();
    for name in ["flows.csv", "domestic.csv", "gdp.csv", "classification.csv", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(again.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn edited_file_fails_checksum() {
    let (_, ds) = synth_panel(&Scenario { n: 3, ..Scenario::default() }, &SolverConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.export_dir(dir.path()).unwrap();
    let path = dir.path().join("domestic.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("1993,C001,", "1993,C001,1", 1)).unwrap();
    assert!(
        matches!(Dataset::load_dir(dir.path(), None), Err(PanelError::ChecksumMismatch(name)) if name == "domestic.csv")
    );
}

fn table(id: &str, priority: i32, cells: &[(i32, u8, f64)]) -> SourceTable {
    let mut t = SourceTable::new(id, priority);
    for (year, partner, value) in cells {
        t.rows.insert(FlowKey::new(code("HOME"), code(&format!("P{partner}")), *year), *value);
    }
    t
}

fn cells() -> impl Strategy<Value = Vec<(i32, u8, f64)>> {
    proptest::collection::vec((2000..2004i32, 0..4u8, 0.0f64..1e6), 0..12).prop_map(|v| {
        let mut seen = BTreeMap::new();
        for (y, p, x) in v {
            seen.entry((y, p)).or_insert(x);
        }
        seen.into_iter().map(|((y, p), x)| (y, p, x)).collect()
    })
}

proptest! {
    #[test]
    fn merge_is_order_independent_and_associative(a in cells(), b in cells(), c in cells()) {
        let (ta, tb, tc) = (table("A", 0, &a), table("B", 1, &b), table("C", 2, &c));
        let all = merge_flow_sources(&[ta.clone(), tb.clone(), tc.clone()]).unwrap();
        let shuffled = merge_flow_sources(&[tc.clone(), ta.clone(), tb.clone()]).unwrap();
        prop_assert_eq!(&all, &shuffled);

        // (A then B) then C equals A then (B then C).
        let ab = merge_flow_sources(&[ta.clone(), tb.clone()]).unwrap();
        let mut left = ab.clone();
        tradecost_core::ingest::supplement(&mut left, &tc);
        let bc = merge_flow_sources(&[tb, tc]).unwrap();
        let mut right = merge_flow_sources(&[ta]).unwrap();
        for (key, cell) in bc.iter() {
            if !right.contains_key(key) {
                right.insert(key.clone(), cell.value, cell.source.clone());
            }
        }
        prop_assert_eq!(&left, &all);
        prop_assert_eq!(&right, &all);
    }
}

use std::path::PathBuf;

use situ_core::eval::report::{format_cost_table, format_metrics_table, metrics_json, CountsTable};
use situ_core::eval::{bundled, MacroPolicy};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn assert_golden(rel: &str, actual: &str) {
    let path = data(rel);
    if std::env::var("SITU_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{rel} differs; rerun with SITU_BLESS=1 if intended");
}

fn counts() -> CountsTable {
    CountsTable::from_json(&std::fs::read_to_string(data("fixtures/reference_counts.json")).unwrap()).unwrap()
}

#[test]
fn counts_table_matches_golden() {
    let rows = counts().rows(MacroPolicy::Exclude);
    assert_golden("golden/reports/reference_counts.txt", &format_metrics_table(&rows));
    assert_golden("golden/reports/reference_counts.json", &metrics_json(&rows));
}

#[test]
fn zero_filled_counts_table_matches_golden() {
    let rows = counts().rows(MacroPolicy::CountAsZero);
    assert_golden("golden/reports/reference_counts_zero_filled.txt", &format_metrics_table(&rows));
}

#[test]
fn pricing_table_matches_golden() {
    assert_golden("golden/reports/pricing.txt", &format_cost_table(&[], &bundled::rate_cards()));
}

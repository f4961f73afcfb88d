//! Plain-text and JSON reports: a per-condition tool-correctness table and a
//! cost, latency and pricing table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, score_pooled, Category, CategoryMetrics, Confusion, MacroPolicy, MeanStd, Metric, MetricsReport};
use super::{estimate_cost, latency_stats_pooled, AnnotationFile, DecisionTrace, EvalError, RateCard};

/// What the `±` in the overall columns spreads over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    /// Standard deviation of the per-category values.
    #[default]
    Categories,
    /// Standard deviation of per-scenario macro means.
    Scenarios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub report: MetricsReport,
}

/// One row per variant, pooling turns across that variant's scenarios.
pub fn variant_rows(
    runs: &[(DecisionTrace, AnnotationFile)],
    policy: MacroPolicy,
    spread: Spread,
) -> Result<Vec<ReportRow>, EvalError> {
    let mut by_variant: BTreeMap<_, Vec<(&DecisionTrace, &AnnotationFile)>> = BTreeMap::new();
    for (t, a) in runs {
        by_variant.entry(t.variant).or_default().push((t, a));
    }
    let mut rows = Vec::new();
    for (variant, group) in by_variant {
        let mut report = score_pooled(&group, policy)?;
        if spread == Spread::Scenarios {
            let per_scenario = group
                .iter()
                .map(|run| score_pooled(std::slice::from_ref(run), policy))
                .collect::<Result<Vec<_>, _>>()?;
            let across = |m: Metric| {
                let means: Vec<f64> = per_scenario.iter().filter_map(|r| r.overall(m)).map(|s| s.mean).collect();
                mean_std(&means)
            };
            report.accuracy = across(Metric::Accuracy);
            report.precision = across(Metric::Precision);
            report.recall = across(Metric::Recall);
        }
        rows.push(ReportRow {
            label: variant.to_string(),
            report,
        });
    }
    Ok(rows)
}

/// One row per scored trace.
pub fn scenario_rows(runs: &[(DecisionTrace, AnnotationFile)], policy: MacroPolicy) -> Result<Vec<ReportRow>, EvalError> {
    runs.iter()
        .map(|(t, a)| {
            Ok(ReportRow {
                label: format!("{}/{}", t.scenario, t.variant),
                report: score_pooled(&[(t, a)], policy)?,
            })
        })
        .collect()
}

/// Confusion counts per condition; a null category was disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    pub rows: Vec<CountsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRow {
    pub label: String,
    pub categories: BTreeMap<Category, Option<Confusion>>,
}

impl CountsTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn rows(&self, policy: MacroPolicy) -> Vec<ReportRow> {
        self.rows
            .iter()
            .map(|row| {
                let categories = Category::ALL
                    .iter()
                    .map(|c| match row.categories.get(c).copied().flatten() {
                        Some(conf) => CategoryMetrics::from_confusion(*c, conf, true),
                        None => CategoryMetrics::from_confusion(*c, Confusion::default(), false),
                    })
                    .collect();
                ReportRow {
                    label: row.label.clone(),
                    report: MetricsReport::from_categories(categories, policy),
                }
            })
            .collect()
    }
}

const CELL: usize = 6;
const OVERALL_CELL: usize = 11;

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

fn overall_cell(v: Option<MeanStd>) -> String {
    v.map(|m| format!("{:.2}±{:.2}", m.mean, m.std)).unwrap_or_default()
}

fn pad(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{s}{}", " ".repeat(width.saturating_sub(n)))
}

/// Fixed-width table: condition, overall Acc./P/R with spread, then
/// Acc./P/R for each tool category. Undefined cells are blank.
pub fn format_metrics_table(rows: &[ReportRow]) -> String {
    let label_w = rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0).max("Condition".len());
    let group_w = |w: usize| 3 * w + 2;
    let mut out = String::new();

    let mut line = pad("", label_w);
    line += " | ";
    line += &pad("Overall", group_w(OVERALL_CELL));
    for c in Category::ALL {
        line += " | ";
        line += &pad(c.as_str(), group_w(CELL));
    }
    out += line.trim_end();
    out.push('\n');

    let mut line = pad("Condition", label_w);
    line += " | ";
    line += &["Acc.", "P", "R"].map(|h| pad(h, OVERALL_CELL)).join(" ");
    for _ in Category::ALL {
        line += " | ";
        line += &["Acc.", "P", "R"].map(|h| pad(h, CELL)).join(" ");
    }
    out += line.trim_end();
    out.push('\n');
    out += &"-".repeat(label_w + 3 + group_w(OVERALL_CELL) + 4 * (3 + group_w(CELL)));
    out.push('\n');

    for row in rows {
        let r = &row.report;
        let mut line = pad(&row.label, label_w);
        line += " | ";
        line += &Metric::ALL.map(|m| pad(&overall_cell(r.overall(m)), OVERALL_CELL)).join(" ");
        for c in Category::ALL {
            line += " | ";
            let m = r.category(c);
            line += &Metric::ALL.map(|k| pad(&cell(m.and_then(|m| m.metric(k))), CELL)).join(" ");
        }
        out += line.trim_end();
        out.push('\n');
    }
    out
}

pub fn metrics_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("reports serialize") + "\n"
}

/// Cost and latency measured for one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLatencyRow {
    pub backend: String,
    /// Dollars per exchange.
    pub cost: Option<MeanStd>,
    /// Commit to first output, in ms.
    pub latency: Option<MeanStd>,
}

/// Per-exchange cost under `rates`, as exact amounts converted to dollars.
pub fn cost_stats(traces: &[DecisionTrace], rates: &RateCard) -> Option<MeanStd> {
    let costs: Vec<f64> = traces
        .iter()
        .flat_map(|t| &t.turns)
        .map(|turn| estimate_cost(&turn.usage, rates).dollars())
        .collect();
    mean_std(&costs)
}

pub fn cost_latency_row(backend: &str, traces: &[DecisionTrace], rates: &RateCard) -> CostLatencyRow {
    CostLatencyRow {
        backend: backend.to_string(),
        cost: cost_stats(traces, rates),
        latency: latency_stats_pooled(traces).ok(),
    }
}

fn rate(r: super::cost::Rate) -> String {
    format!("{:.2}", r.dollars())
}

/// Measured cost and latency per backend, then pricing per modality.
pub fn format_cost_table(rows: &[CostLatencyRow], cards: &[RateCard]) -> String {
    let first_w = "Inputs (Text/Audio/Image)".len();
    let mut cols: Vec<String> = Vec::new();
    let mut body: Vec<(String, Vec<String>)> = Vec::new();
    if !rows.is_empty() {
        body.push(("(A) Runtime cost and latency".into(), vec![]));
        body.push((
            "Cost ($)".into(),
            rows.iter()
                .map(|r| r.cost.map(|m| format!("{:.3} ± {:.3}", m.mean, m.std)).unwrap_or_default())
                .collect(),
        ));
        body.push((
            "Latency (ms)".into(),
            rows.iter()
                .map(|r| r.latency.map(|m| format!("{:.2} ± {:.2}", m.mean, m.std)).unwrap_or_default())
                .collect(),
        ));
        cols = rows.iter().map(|r| r.backend.clone()).collect();
    }
    if !cards.is_empty() {
        if cols.is_empty() {
            cols = cards.iter().map(|c| c.name.clone()).collect();
        }
        body.push(("(B) Pricing by modality (USD / 1M tokens)".into(), vec![]));
        body.push((
            "Inputs (Text/Audio/Image)".into(),
            cards.iter()
                .map(|c| format!("{} / {} / {}", rate(c.text_in), rate(c.audio_in), rate(c.image_in)))
                .collect(),
        ));
        body.push((
            "Outputs (Text/Audio)".into(),
            cards.iter().map(|c| format!("{} / {}", rate(c.text_out), rate(c.audio_out))).collect(),
        ));
    }
    let ncols = cols.len();
    let widths: Vec<usize> = (0..ncols)
        .map(|i| {
            body.iter()
                .filter_map(|(_, cells)| cells.get(i))
                .chain(std::iter::once(&cols[i]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut header = pad("", first_w);
    for (c, w) in cols.iter().zip(&widths) {
        let _ = write!(header, "  {}", pad(c, *w));
    }
    out += header.trim_end();
    out.push('\n');
    for (label, cells) in body {
        if cells.is_empty() {
            out += &label;
            out.push('\n');
            continue;
        }
        let mut line = pad(&label, first_w);
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(line, "  {}", pad(c, *w));
        }
        out += line.trim_end();
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bundled;

    #[test]
    fn counts_fixture_reproduces_published_cells() {
        let table = CountsTable::from_json(include_str!("../../data/fixtures/reference_counts.json")).unwrap();
        let rows = table.rows(MacroPolicy::Exclude);
        let full = &rows[0].report;
        let cells: Vec<String> = Category::ALL
            .iter()
            .flat_map(|c| Metric::ALL.map(|m| cell(full.category(*c).unwrap().metric(m))))
            .collect();
        assert_eq!(
            cells.join(" "),
            "0.63 0.52 1.00 0.70 1.00 0.19 0.93 1.00 0.70 0.64 1.00 0.60"
        );
        assert_eq!(overall_cell(full.accuracy).split('±').next().unwrap(), "0.72");
        assert_eq!(overall_cell(full.precision).split('±').next().unwrap(), "0.88");
        let no_object = &rows[1].report;
        assert!(!no_object.category(Category::LookFor).unwrap().defined);
        let zero = table.rows(MacroPolicy::CountAsZero);
        assert_eq!(overall_cell(zero[1].report.accuracy).split('±').next().unwrap(), "0.28");
        assert_eq!(overall_cell(zero[2].report.accuracy).split('±').next().unwrap(), "0.48");
    }

    #[test]
    fn pricing_only_table() {
        let text = format_cost_table(&[], &bundled::rate_cards());
        assert!(text.contains("4.00 / 32.00 / 5.00"));
        assert!(text.contains("2.00 / 12.00"));
    }
}

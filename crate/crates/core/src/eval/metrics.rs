//! Turn-level tool-decision scoring against "should do next" annotations.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DecisionTrace, EvalError};
use crate::tools::ToolName;

/// The four scored decision categories, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    LookAtPerson,
    LookAtObject,
    LookFor,
    UseVision,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::LookAtPerson,
        Category::LookAtObject,
        Category::LookFor,
        Category::UseVision,
    ];

    pub fn tool(self) -> ToolName {
        match self {
            Category::LookAtPerson => ToolName::LookAtPerson,
            Category::LookAtObject => ToolName::LookAtObject,
            Category::LookFor => ToolName::LookFor,
            Category::UseVision => ToolName::UseVision,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.tool().as_str()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Attention changes an annotator marked as needed. `use_vision` is not a
/// member here; it is scored against `needs_vision`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNeed {
    LookFor,
    LookAtObject,
    LookAtPerson,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLabel {
    #[serde(rename = "i")]
    pub turn_index: usize,
    #[serde(default)]
    pub should: BTreeSet<AttentionNeed>,
    #[serde(default)]
    pub needs_vision: bool,
}

impl AnnotationLabel {
    pub fn needs(&self, category: Category) -> bool {
        match category {
            Category::LookAtPerson => self.should.contains(&AttentionNeed::LookAtPerson),
            Category::LookAtObject => self.should.contains(&AttentionNeed::LookAtObject),
            Category::LookFor => self.should.contains(&AttentionNeed::LookFor),
            Category::UseVision => self.needs_vision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub turns: Vec<AnnotationLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, called: bool, needed: bool) {
        match (called, needed) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }
}

/// One category row. When the tool was disabled the row is undefined and
/// every metric is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: Category,
    pub defined: bool,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Turns annotated as needing this category.
    pub support: u64,
    pub confusion: Confusion,
}

impl CategoryMetrics {
    pub fn from_confusion(category: Category, confusion: Confusion, enabled: bool) -> Self {
        Self {
            category,
            defined: enabled,
            accuracy: confusion.accuracy().filter(|_| enabled),
            precision: confusion.precision().filter(|_| enabled),
            recall: confusion.recall().filter(|_| enabled),
            support: confusion.tp + confusion.fn_,
            confusion,
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Accuracy, Metric::Precision, Metric::Recall];
}

/// How undefined category metrics enter the macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroPolicy {
    /// Skip them.
    #[default]
    Exclude,
    /// Count them as 0.
    CountAsZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

/// Sample mean and (n - 1) standard deviation.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, n })
}

/// Macro average of one metric over category values.
pub fn macro_average(values: &[Option<f64>], policy: MacroPolicy) -> Option<MeanStd> {
    let used: Vec<f64> = match policy {
        MacroPolicy::Exclude => values.iter().flatten().copied().collect(),
        MacroPolicy::CountAsZero => values.iter().map(|v| v.unwrap_or(0.0)).collect(),
    };
    mean_std(&used)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub categories: Vec<CategoryMetrics>,
    pub accuracy: Option<MeanStd>,
    pub precision: Option<MeanStd>,
    pub recall: Option<MeanStd>,
    pub turns: u64,
}

impl MetricsReport {
    pub fn from_categories(categories: Vec<CategoryMetrics>, policy: MacroPolicy) -> Self {
        let macro_of = |m: Metric| {
            let values: Vec<Option<f64>> = categories.iter().map(|c| c.metric(m)).collect();
            macro_average(&values, policy)
        };
        let turns = categories.first().map_or(0, |c| c.confusion.total());
        Self {
            accuracy: macro_of(Metric::Accuracy),
            precision: macro_of(Metric::Precision),
            recall: macro_of(Metric::Recall),
            categories,
            turns,
        }
    }

    pub fn overall(&self, m: Metric) -> Option<MeanStd> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
        }
    }

    pub fn category(&self, c: Category) -> Option<&CategoryMetrics> {
        self.categories.iter().find(|m| m.category == c)
    }
}

/// Checks that annotations cover exactly the trace's turns, in order.
pub fn align<'a>(trace: &DecisionTrace, annotations: &'a AnnotationFile) -> Result<Vec<&'a AnnotationLabel>, EvalError> {
    if trace.turns.len() != annotations.turns.len() {
        return Err(EvalError::Alignment(format!(
            "{}: trace has {} turns, annotations have {}",
            trace.scenario,
            trace.turns.len(),
            annotations.turns.len()
        )));
    }
    let mut out = Vec::with_capacity(trace.turns.len());
    for (i, (t, a)) in trace.turns.iter().zip(&annotations.turns).enumerate() {
        if t.index != i || a.turn_index != i {
            return Err(EvalError::Alignment(format!(
                "{}: turn {i} is labelled {} in the trace and {} in the annotations",
                trace.scenario, t.index, a.turn_index
            )));
        }
        out.push(a);
    }
    Ok(out)
}

/// Per-category confusion counts for one trace.
pub fn confusions(trace: &DecisionTrace, annotations: &AnnotationFile) -> Result<Vec<Confusion>, EvalError> {
    let labels = align(trace, annotations)?;
    let mut out = vec![Confusion::default(); Category::ALL.len()];
    for (turn, label) in trace.turns.iter().zip(labels) {
        for (k, c) in Category::ALL.iter().enumerate() {
            out[k].add(turn.tools.contains(&c.tool()), label.needs(*c));
        }
    }
    Ok(out)
}

/// Scores one trace. Categories whose tool was disabled are undefined.
pub fn score_trace(trace: &DecisionTrace, annotations: &AnnotationFile) -> Result<MetricsReport, EvalError> {
    score_trace_with(trace, annotations, MacroPolicy::Exclude)
}

pub fn score_trace_with(
    trace: &DecisionTrace,
    annotations: &AnnotationFile,
    policy: MacroPolicy,
) -> Result<MetricsReport, EvalError> {
    score_pooled(&[(trace, annotations)], policy)
}

/// Scores several traces of the same variant by pooling their turns.
pub fn score_pooled(runs: &[(&DecisionTrace, &AnnotationFile)], policy: MacroPolicy) -> Result<MetricsReport, EvalError> {
    let mut pooled = vec![Confusion::default(); Category::ALL.len()];
    let mut enabled: Option<BTreeSet<ToolName>> = None;
    for (trace, annotations) in runs {
        for (p, c) in pooled.iter_mut().zip(confusions(trace, annotations)?) {
            p.merge(&c);
        }
        let tools: BTreeSet<ToolName> = trace.enabled_tools.iter().copied().collect();
        match &enabled {
            None => enabled = Some(tools),
            Some(prev) if *prev != tools => {
                return Err(EvalError::Alignment("pooled traces expose different tool sets".into()))
            }
            Some(_) => {}
        }
    }
    let enabled = enabled.unwrap_or_default();
    let categories = Category::ALL
        .iter()
        .zip(pooled)
        .map(|(c, conf)| CategoryMetrics::from_confusion(*c, conf, enabled.contains(&c.tool())))
        .collect();
    Ok(MetricsReport::from_categories(categories, policy))
}

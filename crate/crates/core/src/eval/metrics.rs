use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with class 0 (fake) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.precision, self.recall, self.f1, self.auc]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            auc: v[4],
        }
    }
}

/// `labels` and `predicted` are class indices (0 = fake).
pub fn compute_metrics(labels: &[usize], predicted: &[usize]) -> Result<ConfusionCounts> {
    if labels.len() != predicted.len() {
        return Err(Error::dim("predicted labels", labels.len(), predicted.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predicted) {
        match (y == 0, p == 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Mann-Whitney form of the area under the ROC curve: fraction of
/// positive/negative pairs ranked correctly, ties counting half.
pub fn roc_auc(positive: &[bool], scores: &[f64]) -> Result<f64> {
    if positive.len() != scores.len() {
        return Err(Error::dim("scores", positive.len(), scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Invalid("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps tied midranks integral.
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positive[k]).count() as u128;
        rank2_pos += mid2 * pos_in_group;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    let u2 = rank2_pos - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Metrics for class-probability predictions `[p_fake, p_real]`; a sample is
/// predicted fake when `p_fake > 0.5`.
pub fn evaluate_probabilities(labels: &[usize], probs: &[[f64; 2]]) -> Result<Metrics> {
    let predicted: Vec<usize> = probs.iter().map(|p| if p[0] > 0.5 { 0 } else { 1 }).collect();
    let c = compute_metrics(labels, &predicted)?;
    let positive: Vec<bool> = labels.iter().map(|&y| y == 0).collect();
    let scores: Vec<f64> = probs.iter().map(|p| p[0]).collect();
    Ok(Metrics {
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        auc: roc_auc(&positive, &scores)?,
    })
}

/// Per-run metrics of one model with mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub runs: Vec<Metrics>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl MetricsReport {
    pub fn aggregate(model: impl Into<String>, runs: Vec<Metrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Invalid("no runs to aggregate".into()));
        }
        let n = runs.len() as f64;
        // Offsets from the first run keep a constant series exact.
        let base = runs[0].values();
        let mut mean = base;
        for r in &runs {
            for ((m, v), b) in mean.iter_mut().zip(r.values()).zip(base) {
                *m += (v - b) / n;
            }
        }
        let mut var = [0.0; 5];
        for r in &runs {
            for ((s, v), m) in var.iter_mut().zip(r.values()).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        Ok(Self {
            model: model.into(),
            runs,
            mean: Metrics::from_values(mean),
            std: Metrics::from_values(var.map(f64::sqrt)),
        })
    }
}

pub fn reports_to_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn reports_from_json(text: &str) -> Result<Vec<MetricsReport>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        context: "metrics report".into(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Fixed-width table with one `mean ± std` cell per metric.
pub fn reports_to_text(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  runs", "model");
    for name in Metrics::NAMES {
        let _ = write!(out, "  {name:>17}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}  {:>4}", r.model, r.runs.len());
        for (m, s) in r.mean.values().iter().zip(r.std.values()) {
            let _ = write!(out, "  {:>17}", format!("{m:.4} ± {s:.4}"));
        }
        out.push('\n');
    }
    out
}

//! Confusion counts and the ten fixed-threshold metrics, with anomalies (-1)
//! as the positive class. A metric whose denominator is zero is `None`
//! (serialized as `null`), never a silent 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_labels(true_labels: &[i8], predicted: &[i8]) -> Result<Self> {
        if true_labels.len() != predicted.len() {
            return Err(Error::shape(format!(
                "{} true labels but {} predictions",
                true_labels.len(),
                predicted.len()
            )));
        }
        let mut m = ConfusionMatrix::default();
        for (i, (&t, &p)) in true_labels.iter().zip(predicted).enumerate() {
            match (t, p) {
                (-1, -1) => m.tp += 1,
                (1, -1) => m.fp += 1,
                (1, 1) => m.tn += 1,
                (-1, 1) => m.fn_ += 1,
                _ => {
                    return Err(Error::data(format!(
                        "label pair ({t}, {p}) at index {i} is not in {{-1, +1}}"
                    )))
                }
            }
        }
        Ok(m)
    }

    pub fn metrics(&self) -> MetricsReport {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let (tp, fp, tn, fn_) = (self.tp, self.fp, self.tn, self.fn_);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let den = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
        let mcc = (den > 0.0).then(|| (tpf * tnf - fpf * fnf) / den.sqrt());
        MetricsReport {
            accuracy: ratio(tp + tn, self.total()),
            ppp: ratio(tp + fp, self.total()),
            precision,
            recall,
            npv: ratio(tn, tn + fn_),
            specificity: ratio(tn, tn + fp),
            fpr: ratio(fp, fp + tn),
            fnr: ratio(fn_, fn_ + tp),
            f1,
            mcc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub ppp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub npv: Option<f64>,
    pub specificity: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

pub const METRIC_NAMES: [&str; 10] = [
    "accuracy",
    "ppp",
    "precision",
    "recall",
    "npv",
    "specificity",
    "fpr",
    "fnr",
    "f1",
    "mcc",
];

impl MetricsReport {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.accuracy,
            self.ppp,
            self.precision,
            self.recall,
            self.npv,
            self.specificity,
            self.fpr,
            self.fnr,
            self.f1,
            self.mcc,
        ]
    }
}

/// Confusion counts and metrics for one set of predictions.
pub fn confusion_and_metrics(true_labels: &[i8], predicted: &[i8]) -> Result<(ConfusionMatrix, MetricsReport)> {
    let m = ConfusionMatrix::from_labels(true_labels, predicted)?;
    Ok((m, m.metrics()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(count)`; 0 for a single run.
    pub se: Option<f64>,
    /// Runs in which the metric was defined.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub accuracy: MetricSummary,
    pub ppp: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub npv: MetricSummary,
    pub specificity: MetricSummary,
    pub fpr: MetricSummary,
    pub fnr: MetricSummary,
    pub f1: MetricSummary,
    pub mcc: MetricSummary,
}

impl AggregateReport {
    pub fn summaries(&self) -> [MetricSummary; 10] {
        [
            self.accuracy,
            self.ppp,
            self.precision,
            self.recall,
            self.npv,
            self.specificity,
            self.fpr,
            self.fnr,
            self.f1,
            self.mcc,
        ]
    }
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> MetricSummary {
    let defined: Vec<f64> = values.flatten().collect();
    let count = defined.len();
    if count == 0 {
        return MetricSummary {
            mean: None,
            se: None,
            count,
        };
    }
    let mean = defined.iter().sum::<f64>() / count as f64;
    let se = if count == 1 {
        0.0
    } else {
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        var.sqrt() / (count as f64).sqrt()
    };
    MetricSummary {
        mean: Some(mean),
        se: Some(se),
        count,
    }
}

/// Mean and standard error per metric; runs where a metric is undefined are
/// left out of that metric only.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::data("cannot aggregate zero runs"));
    }
    let s = |f: fn(&MetricsReport) -> Option<f64>| summarize(reports.iter().map(f));
    Ok(AggregateReport {
        runs: reports.len(),
        accuracy: s(|r| r.accuracy),
        ppp: s(|r| r.ppp),
        precision: s(|r| r.precision),
        recall: s(|r| r.recall),
        npv: s(|r| r.npv),
        specificity: s(|r| r.specificity),
        fpr: s(|r| r.fpr),
        fnr: s(|r| r.fnr),
        f1: s(|r| r.f1),
        mcc: s(|r| r.mcc),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `label,accuracy,...,mcc`, one row per labelled report; undefined cells are empty.
pub fn metrics_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = format!("label,{}\n", METRIC_NAMES.join(","));
    for (label, r) in rows {
        let cells: Vec<String> = r.values().iter().map(|v| cell(*v)).collect();
        out.push_str(&format!("{label},{}\n", cells.join(",")));
    }
    out
}

/// `label,metric,mean,se,count`, ready for bar charts with error bars.
pub fn aggregate_csv(rows: &[(String, AggregateReport)]) -> String {
    let mut out = String::from("label,metric,mean,se,count\n");
    for (label, a) in rows {
        for (name, s) in METRIC_NAMES.iter().zip(a.summaries()) {
            out.push_str(&format!("{label},{name},{},{},{}\n", cell(s.mean), cell(s.se), s.count));
        }
    }
    out
}

//! Confusion-matrix bookkeeping and classification metrics.

use crate::error::{Error, Result};

/// Square table of counts: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Dimension(format!(
                "confusion matrix for {classes} classes needs {} counts",
                classes * classes
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Accuracy plus one-vs-rest sensitivity and specificity for a designated
/// positive class. Metrics over empty denominators are reported as absent
/// rather than propagated as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn classify_metrics(confusion: &ConfusionMatrix, positive_class: usize) -> Result<ClassMetrics> {
    let n = confusion.classes();
    if positive_class >= n {
        return Err(Error::InvalidParameter(format!(
            "positive class {positive_class} outside {n} classes"
        )));
    }
    let total = confusion.total();
    let trace: u64 = (0..n).map(|i| confusion.count(i, i)).sum();
    let tp = confusion.count(positive_class, positive_class);
    let fn_: u64 = (0..n)
        .filter(|&j| j != positive_class)
        .map(|j| confusion.count(positive_class, j))
        .sum();
    let fp: u64 = (0..n)
        .filter(|&i| i != positive_class)
        .map(|i| confusion.count(i, positive_class))
        .sum();
    let tn = total - tp - fn_ - fp;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(ClassMetrics {
        accuracy: ratio(trace, total),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}

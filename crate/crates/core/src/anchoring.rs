//! Leak-free temporal anchoring for longitudinal per-subject prediction.
//!
//! A subject's earliest `n_anchor` visits are anchors; everything later is
//! test. Rows that share a timestamp belong to the same visit, so a split can
//! never place two rows with equal time on opposite sides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_id: String,
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSeries {
    pub subject_id: String,
    visits: Vec<Visit>,
}

impl VisitSeries {
    /// Orders visits by `(timestamp, visit_id)`.
    pub fn new(subject_id: impl Into<String>, mut visits: Vec<Visit>) -> Result<Self> {
        if visits.is_empty() {
            return Err(Error::input("a visit series needs at least one visit"));
        }
        if visits
            .iter()
            .any(|v| !v.timestamp.is_finite() || !v.label.is_finite())
        {
            return Err(Error::input("visit timestamps and labels must be finite"));
        }
        visits.sort_by(|a, b| {
            a.timestamp
                .total_cmp(&b.timestamp)
                .then_with(|| a.visit_id.cmp(&b.visit_id))
        });
        Ok(VisitSeries {
            subject_id: subject_id.into(),
            visits,
        })
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    pub fn distinct_timestamps(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for v in &self.visits {
            if last != Some(v.timestamp) {
                count += 1;
                last = Some(v.timestamp);
            }
        }
        count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSplit {
    pub subject_id: String,
    pub anchors: Vec<Visit>,
    pub test: Vec<Visit>,
    /// No test visits remain; the subject is left out of evaluation.
    pub excluded: bool,
}

impl AnchorSplit {
    pub fn anchor_labels(&self) -> Vec<f64> {
        self.anchors.iter().map(|v| v.label).collect()
    }

    pub fn test_labels(&self) -> Vec<f64> {
        self.test.iter().map(|v| v.label).collect()
    }

    /// Every anchor strictly precedes every test visit.
    pub fn is_leak_free(&self) -> bool {
        let last_anchor = self
            .anchors
            .iter()
            .map(|v| v.timestamp)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_test = self
            .test
            .iter()
            .map(|v| v.timestamp)
            .fold(f64::INFINITY, f64::min);
        last_anchor < first_test
    }
}

/// The first `n_anchor` distinct visit times become anchors.
pub fn split_anchors(series: &VisitSeries, n_anchor: usize) -> AnchorSplit {
    let mut seen = 0;
    let mut last = None;
    let mut cut = series.visits.len();
    for (i, v) in series.visits.iter().enumerate() {
        if last != Some(v.timestamp) {
            if seen == n_anchor {
                cut = i;
                break;
            }
            seen += 1;
            last = Some(v.timestamp);
        }
    }
    let (anchors, test) = series.visits.split_at(cut);
    AnchorSplit {
        subject_id: series.subject_id.clone(),
        anchors: anchors.to_vec(),
        test: test.to_vec(),
        excluded: test.is_empty(),
    }
}

fn require_anchors(anchor_labels: &[f64]) -> Result<()> {
    if anchor_labels.is_empty() {
        return Err(Error::contract(
            "label-only baselines need at least one anchor",
        ));
    }
    Ok(())
}

/// Replays the label of the chronologically last anchor visit for each test
/// visit. Rows sharing that visit's timestamp contribute their mean.
pub fn last_anchor_baseline(anchors: &[Visit], n_test: usize) -> Result<Vec<f64>> {
    let Some(last) = anchors.iter().map(|v| v.timestamp).reduce(f64::max) else {
        return Err(Error::contract(
            "label-only baselines need at least one anchor",
        ));
    };
    let rows: Vec<f64> = anchors
        .iter()
        .filter(|v| v.timestamp == last)
        .map(|v| v.label)
        .collect();
    Ok(vec![anchor_mean(&rows); n_test])
}

/// Predicts the mean anchor label for each test visit.
pub fn anchor_mean_baseline(anchor_labels: &[f64], n_test: usize) -> Result<Vec<f64>> {
    require_anchors(anchor_labels)?;
    Ok(vec![anchor_mean(anchor_labels); n_test])
}

fn anchor_mean(anchor_labels: &[f64]) -> f64 {
    anchor_labels.iter().sum::<f64>() / anchor_labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTarget {
    pub visit_id: String,
    pub features: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedTargets {
    pub anchor_mean: f64,
    pub targets: Vec<ResidualTarget>,
}

impl PersonalizedTargets {
    /// Final prediction from a predicted residual.
    pub fn recompose(&self, predicted_residual: f64) -> f64 {
        self.anchor_mean + predicted_residual
    }
}

/// Residual of each test label against the subject's anchor mean.
pub fn personalized_residual_target(split: &AnchorSplit) -> Result<PersonalizedTargets> {
    let labels = split.anchor_labels();
    require_anchors(&labels)?;
    let mean = anchor_mean(&labels);
    let targets = split
        .test
        .iter()
        .map(|v| {
            let features = v.features.clone().ok_or_else(|| {
                Error::input(format!("test visit `{}` carries no features", v.visit_id))
            })?;
            Ok(ResidualTarget {
                visit_id: v.visit_id.clone(),
                features,
                residual: v.label - mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PersonalizedTargets {
        anchor_mean: mean,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl ConstantPredictor {
    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.value; n]
    }
}

pub fn mean_predictor_baseline(train_labels: &[f64]) -> Result<ConstantPredictor> {
    if train_labels.is_empty() {
        return Err(Error::input("mean predictor needs training labels"));
    }
    Ok(ConstantPredictor {
        value: anchor_mean(train_labels),
    })
}

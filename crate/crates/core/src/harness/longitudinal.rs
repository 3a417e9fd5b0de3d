//! Longitudinal CSV format and the anchored evaluation driver.
//!
//! Header: `subject_id`, `visit_id` (or `sample_id`), `timestamp`, `label`,
//! and any number of `f_*` feature columns.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchoring::{
    anchor_mean_baseline, last_anchor_baseline, mean_predictor_baseline,
    personalized_residual_target, split_anchors, AnchorSplit, Visit, VisitSeries,
};
use crate::error::{Error, Result};
use crate::harness::lsq::LinearModel;
use crate::metrics::{mae, rmse};

pub fn read_longitudinal<R: Read>(reader: R) -> Result<Vec<VisitSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("longitudinal CSV needs a `{name}` column")))
    };
    let subject = need("subject_id")?;
    let visit = find("visit_id")
        .or_else(|| find("sample_id"))
        .ok_or_else(|| {
            Error::Schema("longitudinal CSV needs a `visit_id` or `sample_id` column".into())
        })?;
    let time = need("timestamp")?;
    let label = need("label")?;
    let features: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("f_"))
        .map(|(i, _)| i)
        .collect();

    let mut by_subject: BTreeMap<String, Vec<Visit>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |i: usize| -> Result<f64> {
            let cell = record.get(i).unwrap_or("");
            f64::from_str(cell)
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row {
                    line,
                    column: headers[i].to_owned(),
                    message: format!("`{cell}` is not a finite number"),
                })
        };
        let subject_id = record.get(subject).unwrap_or("").to_owned();
        let visit_id = record.get(visit).unwrap_or("").to_owned();
        if !seen.insert((subject_id.clone(), visit_id.clone())) {
            return Err(Error::Row {
                line,
                column: headers[visit].to_owned(),
                message: format!("duplicate visit `{visit_id}` for subject `{subject_id}`"),
            });
        }
        let feats = features
            .iter()
            .map(|&i| number(i))
            .collect::<Result<Vec<_>>>()?;
        by_subject.entry(subject_id).or_default().push(Visit {
            visit_id,
            timestamp: number(time)?,
            features: (!features.is_empty()).then_some(feats),
            label: number(label)?,
        });
    }
    by_subject
        .into_iter()
        .map(|(s, visits)| VisitSeries::new(s, visits))
        .collect()
}

pub fn write_longitudinal<W: Write>(series: &[VisitSeries], writer: W) -> Result<()> {
    let width = series
        .iter()
        .flat_map(|s| s.visits())
        .map(|v| v.features.as_ref().map_or(0, Vec::len))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "subject_id".to_owned(),
        "visit_id".into(),
        "timestamp".into(),
        "label".into(),
    ];
    header.extend((0..width).map(|j| format!("f_{j}")));
    w.write_record(&header)?;
    for s in series {
        for v in s.visits() {
            let mut row = vec![
                s.subject_id.clone(),
                v.visit_id.clone(),
                v.timestamp.to_string(),
                v.label.to_string(),
            ];
            let feats = v.features.as_deref().unwrap_or(&[]);
            row.extend((0..width).map(|j| feats.get(j).map_or(String::new(), f64::to_string)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMethod {
    LastAnchor,
    AnchorMean,
    /// Leave-one-subject-out constant mean of the other subjects' labels.
    MeanPredictor,
    /// Anchor mean plus a least-squares residual model fitted on the other subjects.
    PersonalizedLsq,
}

impl AnchorMethod {
    pub const ALL: [AnchorMethod; 4] = [
        AnchorMethod::LastAnchor,
        AnchorMethod::AnchorMean,
        AnchorMethod::MeanPredictor,
        AnchorMethod::PersonalizedLsq,
    ];
}

impl FromStr for AnchorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_anchor" | "last-anchor" => Ok(AnchorMethod::LastAnchor),
            "anchor_mean" | "anchor-mean" => Ok(AnchorMethod::AnchorMean),
            "mean_predictor" | "mean-predictor" => Ok(AnchorMethod::MeanPredictor),
            "personalized_lsq" | "personalized-lsq" => Ok(AnchorMethod::PersonalizedLsq),
            other => Err(Error::config(format!("unknown anchoring method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedSubject {
    pub subject_id: String,
    pub distinct_visits: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub n_anchor: usize,
    pub subjects_total: usize,
    pub subjects_excluded: usize,
    pub excluded: Vec<ExcludedSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject_id: String,
    pub n_anchor_rows: usize,
    pub n_test: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEvalReport {
    pub method: AnchorMethod,
    pub n_anchor: usize,
    pub subjects_evaluated: usize,
    pub n_test: usize,
    /// Pooled over every test visit.
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    /// Mean of per-subject MAE.
    pub macro_mae: Option<f64>,
    pub per_subject: Vec<SubjectScore>,
    pub exclusions: ExclusionReport,
}

fn predict_subject(
    method: AnchorMethod,
    index: usize,
    splits: &[AnchorSplit],
    series: &[VisitSeries],
) -> Result<Vec<f64>> {
    let split = &splits[index];
    let n_test = split.test.len();
    match method {
        AnchorMethod::LastAnchor => last_anchor_baseline(&split.anchors, n_test),
        AnchorMethod::AnchorMean => anchor_mean_baseline(&split.anchor_labels(), n_test),
        AnchorMethod::MeanPredictor => {
            let train: Vec<f64> = series
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != index)
                .flat_map(|(_, s)| s.visits().iter().map(|v| v.label))
                .collect();
            Ok(mean_predictor_baseline(&train)?.predict(n_test))
        }
        AnchorMethod::PersonalizedLsq => {
            let own = personalized_residual_target(split)?;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (j, other) in splits.iter().enumerate() {
                if j == index || other.excluded {
                    continue;
                }
                for t in personalized_residual_target(other)?.targets {
                    xs.push(t.features);
                    ys.push(t.residual);
                }
            }
            let model = LinearModel::fit(&xs, &ys)?;
            Ok(own
                .targets
                .iter()
                .map(|t| own.recompose(model.predict(&t.features)))
                .collect())
        }
    }
}

/// Splits every subject, excludes those without test visits, predicts per
/// subject in parallel and aggregates in subject-id order.
pub fn evaluate_anchoring(
    series: &[VisitSeries],
    n_anchor: usize,
    method: AnchorMethod,
) -> Result<AnchorEvalReport> {
    let mut series: Vec<VisitSeries> = series.to_vec();
    series.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let splits: Vec<AnchorSplit> = series.iter().map(|s| split_anchors(s, n_anchor)).collect();
    if let Some(bad) = splits
        .iter()
        .find(|s| !s.is_leak_free() && !s.excluded && !s.anchors.is_empty())
    {
        return Err(Error::contract(format!(
            "anchor split for `{}` leaks",
            bad.subject_id
        )));
    }

    let excluded: Vec<ExcludedSubject> = splits
        .iter()
        .zip(&series)
        .filter(|(sp, _)| sp.excluded)
        .map(|(sp, s)| ExcludedSubject {
            subject_id: sp.subject_id.clone(),
            distinct_visits: s.distinct_timestamps(),
            rows: s.visits().len(),
        })
        .collect();
    let exclusions = ExclusionReport {
        n_anchor,
        subjects_total: series.len(),
        subjects_excluded: excluded.len(),
        excluded,
    };

    let evaluated: Vec<usize> = (0..splits.len()).filter(|&i| !splits[i].excluded).collect();
    let predictions: Vec<Vec<f64>> = evaluated
        .par_iter()
        .map(|&i| {
            predict_subject(method, i, &splits, &series)
                .map_err(|e| e.within("anchoring", Some(&splits[i].subject_id)))
        })
        .collect::<Result<_>>()?;

    let mut y_all = Vec::new();
    let mut p_all = Vec::new();
    let mut per_subject = Vec::with_capacity(evaluated.len());
    for (&i, pred) in evaluated.iter().zip(&predictions) {
        let y = splits[i].test_labels();
        per_subject.push(SubjectScore {
            subject_id: splits[i].subject_id.clone(),
            n_anchor_rows: splits[i].anchors.len(),
            n_test: y.len(),
            mae: mae(&y, pred)?,
        });
        y_all.extend(y);
        p_all.extend_from_slice(pred);
    }
    let pooled = !y_all.is_empty();
    Ok(AnchorEvalReport {
        method,
        n_anchor,
        subjects_evaluated: per_subject.len(),
        n_test: y_all.len(),
        mae: if pooled {
            Some(mae(&y_all, &p_all)?)
        } else {
            None
        },
        rmse: if pooled {
            Some(rmse(&y_all, &p_all)?)
        } else {
            None
        },
        macro_mae: (!per_subject.is_empty())
            .then(|| per_subject.iter().map(|s| s.mae).sum::<f64>() / per_subject.len() as f64),
        per_subject,
        exclusions,
    })
}

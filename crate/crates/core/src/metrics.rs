//! Regression, classification and reliability metrics.
//!
//! Everything here is a pure function over slices. Undefined values (R² of a
//! constant target, AUC with an empty class, ...) come back as `None` in the
//! reports and as errors from the individual functions.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calibration::argmax;
use crate::error::{Error, Result};

pub const Z_95: f64 = 1.96;
pub const ECE_BINS: usize = 15;

fn check_pair(a: usize, b: usize, what: &str) -> Result<()> {
    if a == 0 || a != b {
        return Err(Error::input(format!(
            "{what}: need equal nonempty inputs, got {a} and {b}"
        )));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y.len(), yhat.len(), "mae")?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y.len(), yhat.len(), "rmse")?;
    Ok((y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt())
}

/// `1 - SS_res / SS_tot`; undefined for a constant target.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y.len(), yhat.len(), "r2")?;
    let my = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::input("r2 undefined for a constant target"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x.len(), y.len(), "pearson")?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::input("correlation undefined for constant input"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && x[order[end + 1]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = avg;
        }
        start = end + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x.len(), y.len(), "spearman")?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Lin's concordance correlation with population (1/n) moments.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x.len(), y.len(), "ccc")?;
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    let denom = vx + vy + (mx - my).powi(2);
    if denom == 0.0 {
        return Err(Error::input(
            "ccc undefined: both inputs constant and equal",
        ));
    }
    Ok(2.0 * cov / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub ccc: Option<f64>,
}

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<RegressionReport> {
    check_pair(y.len(), yhat.len(), "regression metrics")?;
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::input("regression metrics need finite values"));
    }
    Ok(RegressionReport {
        n: y.len(),
        mae: mae(y, yhat)?,
        rmse: rmse(y, yhat)?,
        r2: r2(y, yhat).ok(),
        pearson: pearson(y, yhat).ok(),
        spearman: spearman(y, yhat).ok(),
        ccc: ccc(y, yhat).ok(),
    })
}

/// `P(s+ > s-)` with half credit for ties, computed from the rank sum.
pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::input("auc undefined with an empty class"));
    }
    let all: Vec<f64> = scores_pos.iter().chain(scores_neg).copied().collect();
    let ranks = average_ranks(&all);
    let (np, nn) = (scores_pos.len() as f64, scores_neg.len() as f64);
    let rank_sum: f64 = ranks[..scores_pos.len()].iter().sum();
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// One-vs-rest macro AUC over the classes that have both positives and negatives.
pub fn auc_ovr_macro(probabilities: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_pair(probabilities.len(), labels.len(), "auc")?;
    let k = probabilities[0].len();
    let mut aucs = Vec::new();
    for class in 0..k {
        let pos: Vec<f64> = probabilities
            .iter()
            .zip(labels)
            .filter(|(_, y)| **y == class)
            .map(|(p, _)| p[class])
            .collect();
        let neg: Vec<f64> = probabilities
            .iter()
            .zip(labels)
            .filter(|(_, y)| **y != class)
            .map(|(p, _)| p[class])
            .collect();
        if let Ok(a) = auc(&pos, &neg) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return Err(Error::input(
            "auc undefined: no class has both positives and negatives",
        ));
    }
    Ok(mean(&aucs))
}

/// Normal-approximation CI with the Hanley–McNeil standard error, clipped to `[0, 1]`.
pub fn hanley_mcneil_ci(auc: f64, n_pos: usize, n_neg: usize, z: f64) -> Result<(f64, f64)> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("Hanley-McNeil CI needs both classes"));
    }
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
    let se = var.max(0.0).sqrt();
    Ok(((a - z * se).max(0.0), (a + z * se).min(1.0)))
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_ci(successes: f64, n: usize, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::input("Wilson interval undefined for n = 0"));
    }
    let nf = n as f64;
    if !(0.0..=nf).contains(&successes) {
        return Err(Error::input(format!("{successes} successes out of {n}")));
    }
    let p = successes / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Ok((
        ((center - half) / denom).max(0.0),
        ((center + half) / denom).min(1.0),
    ))
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds.len(), labels.len(), "accuracy")?;
    Ok(preds.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / preds.len() as f64)
}

fn class_f1(preds: &[usize], labels: &[usize], class: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &y) in preds.iter().zip(labels) {
        match (p == class, y == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    /// F1 of class 1.
    Binary,
    /// Unweighted mean over every class seen in labels or predictions.
    Macro,
}

/// Returns `(f1, accuracy)`.
pub fn f1_accuracy(preds: &[usize], labels: &[usize], average: F1Average) -> Result<(f64, f64)> {
    let acc = accuracy(preds, labels)?;
    let f1 = match average {
        F1Average::Binary => class_f1(preds, labels, 1),
        F1Average::Macro => {
            let mut classes: Vec<usize> = preds.iter().chain(labels).copied().collect();
            classes.sort_unstable();
            classes.dedup();
            mean(
                &classes
                    .iter()
                    .map(|&c| class_f1(preds, labels, c))
                    .collect::<Vec<_>>(),
            )
        }
    };
    Ok((f1, acc))
}

/// Area under the precision-recall step curve, `sum (R_k - R_{k-1}) P_k`
/// over descending distinct score thresholds.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_pair(scores.len(), labels.len(), "auprc")?;
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::input("auprc undefined without positives"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let end_of_tie = order
            .get(pos + 1)
            .is_none_or(|&next| scores[next] != scores[i]);
        if end_of_tie {
            let recall = tp as f64 / positives as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Ok(area)
}

fn check_probabilities(probabilities: &[Vec<f64>], labels: &[usize], what: &str) -> Result<()> {
    check_pair(probabilities.len(), labels.len(), what)?;
    let k = probabilities[0].len();
    for (p, &y) in probabilities.iter().zip(labels) {
        if p.len() != k || y >= k {
            return Err(Error::input(format!(
                "{what}: inconsistent class count or label out of range"
            )));
        }
    }
    Ok(())
}

/// Expected calibration error with equal-width bins on the max-class
/// confidence. Bin `b` covers `(b/B, (b+1)/B]`; the first also takes 0.
pub fn ece(probabilities: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<f64> {
    check_probabilities(probabilities, labels, "ece")?;
    if bins == 0 {
        return Err(Error::config("ece needs at least one bin"));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for (p, &y) in probabilities.iter().zip(labels) {
        let top = argmax(p);
        let conf = p[top];
        let b = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf_sum[b] += conf;
        correct[b] += usize::from(top == y);
    }
    let n = probabilities.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (correct[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}

/// Multi-class Brier score, `mean_i sum_k (p_ik - 1[y_i = k])^2`.
pub fn brier(probabilities: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_probabilities(probabilities, labels, "brier")?;
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.iter()
                .enumerate()
                .map(|(k, pk)| (pk - if k == y { 1.0 } else { 0.0 }).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Icc {
    pub value: f64,
    /// No variance at all; the value is 1 by convention.
    pub degenerate: bool,
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
/// `ratings` is `n_targets` rows of `k_raters` columns.
pub fn icc21(ratings: &[Vec<f64>]) -> Result<Icc> {
    let n = ratings.len();
    let k = ratings.first().map_or(0, Vec::len);
    if n < 2 || k < 2 || ratings.iter().any(|r| r.len() != k) {
        return Err(Error::input(
            "ICC(2,1) needs a complete matrix with n >= 2 targets and k >= 2 raters",
        ));
    }
    if ratings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("ICC(2,1) needs finite ratings"));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = ratings.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = ratings.iter().map(|r| mean(r)).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| ratings.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let ss_total: f64 = ratings.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);

    let ms_r = ss_rows / (nf - 1.0);
    let ms_c = ss_cols / (kf - 1.0);
    let ms_e = ss_err / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_r + (kf - 1.0) * ms_e + (kf / nf) * (ms_c - ms_e);
    if ss_total == 0.0 || denom == 0.0 {
        return Ok(Icc {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Icc {
        value: (ms_r - ms_e) / denom,
        degenerate: false,
    })
}

/// Fraction of `y` inside its closed interval.
pub fn empirical_coverage(y: &[f64], intervals: &[(f64, f64)]) -> Result<f64> {
    check_pair(y.len(), intervals.len(), "coverage")?;
    let covered = y
        .iter()
        .zip(intervals)
        .filter(|(v, (lo, hi))| lo <= *v && *v <= hi)
        .count();
    Ok(covered as f64 / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub num_classes: usize,
    pub auc: Option<f64>,
    pub auc_ci: Option<(f64, f64)>,
    pub f1: f64,
    pub f1_average: F1Average,
    pub f1_ci: (f64, f64),
    pub auprc: Option<f64>,
    pub accuracy: f64,
    pub accuracy_ci: (f64, f64),
    pub ece: f64,
    pub brier: f64,
}

/// Binary tasks use class 1 as positive; more classes use one-vs-rest macro
/// AUC/AUPRC and macro F1.
pub fn classification_report(
    probabilities: &[Vec<f64>],
    labels: &[usize],
) -> Result<ClassificationReport> {
    check_probabilities(probabilities, labels, "classification report")?;
    let n = labels.len();
    let k = probabilities[0].len();
    let preds: Vec<usize> = probabilities.iter().map(|p| argmax(p)).collect();
    let average = if k == 2 {
        F1Average::Binary
    } else {
        F1Average::Macro
    };
    let (f1, acc) = f1_accuracy(&preds, labels, average)?;

    let (auc_value, auc_ci, auprc_value) = if k == 2 {
        let pos: Vec<f64> = probabilities
            .iter()
            .zip(labels)
            .filter(|(_, y)| **y == 1)
            .map(|(p, _)| p[1])
            .collect();
        let neg: Vec<f64> = probabilities
            .iter()
            .zip(labels)
            .filter(|(_, y)| **y != 1)
            .map(|(p, _)| p[1])
            .collect();
        let a = auc(&pos, &neg).ok();
        let ci = a.and_then(|a| hanley_mcneil_ci(a, pos.len(), neg.len(), Z_95).ok());
        let scores: Vec<f64> = probabilities.iter().map(|p| p[1]).collect();
        let is_pos: Vec<bool> = labels.iter().map(|y| *y == 1).collect();
        (a, ci, auprc(&scores, &is_pos).ok())
    } else {
        let per_class: Vec<f64> = (0..k)
            .filter_map(|c| {
                let scores: Vec<f64> = probabilities.iter().map(|p| p[c]).collect();
                let is_pos: Vec<bool> = labels.iter().map(|y| *y == c).collect();
                auprc(&scores, &is_pos).ok()
            })
            .collect();
        let ap = (!per_class.is_empty()).then(|| mean(&per_class));
        (auc_ovr_macro(probabilities, labels).ok(), None, ap)
    };

    Ok(ClassificationReport {
        n,
        num_classes: k,
        auc: auc_value,
        auc_ci,
        f1,
        f1_average: average,
        f1_ci: wilson_ci(f1 * n as f64, n, Z_95)?,
        auprc: auprc_value,
        accuracy: acc,
        accuracy_ci: wilson_ci(acc * n as f64, n, Z_95)?,
        ece: ece(probabilities, labels, ECE_BINS)?,
        brier: brier(probabilities, labels)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub icc21: Option<f64>,
    pub icc21_degenerate: bool,
    pub coverage: f64,
    pub target: f64,
}

/// Rounds every float in a serialized report to `decimals` places.
pub fn round_floats(value: Value, decimals: i32) -> Value {
    let scale = 10f64.powi(decimals);
    match value {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            let r = (f * scale).round() / scale;
            // -0.0 prints as "-0.0"
            let r = if r == 0.0 { 0.0 } else { r };
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(
            items
                .into_iter()
                .map(|v| round_floats(v, decimals))
                .collect(),
        ),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, round_floats(v, decimals)))
                .collect(),
        ),
        other => other,
    }
}

/// Pretty JSON with six-decimal rounding, the on-disk form of every report.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    let value = round_floats(serde_json::to_value(report)?, 6);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

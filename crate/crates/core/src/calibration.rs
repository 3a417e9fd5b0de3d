//! Per-branch calibration: temperature scaling for classifiers and split
//! conformal prediction for both regression intervals and classification sets.
//!
//! Conformal quantiles use the finite-sample order statistic
//! `k = ceil((n + 1) * (1 - alpha))`. When `k > n` the quantile is `+inf` and
//! the model is flagged `unbounded`; regression intervals then cover the whole
//! line and classification sets contain every class.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::symptom_space::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::config(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub logits: Option<Vec<f64>>,
    pub probabilities: Option<Vec<f64>>,
    pub label: Option<usize>,
}

impl ClassifierOutput {
    pub fn from_logits(logits: Vec<f64>, label: Option<usize>) -> Self {
        ClassifierOutput {
            logits: Some(logits),
            probabilities: None,
            label,
        }
    }

    pub fn from_probabilities(probabilities: Vec<f64>, label: Option<usize>) -> Self {
        ClassifierOutput {
            logits: None,
            probabilities: Some(probabilities),
            label,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.logits
            .as_ref()
            .or(self.probabilities.as_ref())
            .map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        if k < 2 {
            return Err(Error::input(format!(
                "classifier output needs K >= 2 classes, got {k}"
            )));
        }
        if let Some(logits) = &self.logits {
            if logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::input("logits must be finite"));
            }
        }
        if let Some(p) = &self.probabilities {
            validate_probabilities(p)?;
            if self.logits.as_ref().is_some_and(|l| l.len() != p.len()) {
                return Err(Error::input("logits and probabilities disagree on K"));
            }
        }
        if let Some(y) = self.label {
            if y >= k {
                return Err(Error::input(format!("label {y} out of range for K = {k}")));
            }
        }
        Ok(())
    }

    /// Logits if present, otherwise log-probabilities (softmax of which
    /// reproduces the probabilities).
    fn scores(&self) -> Vec<f64> {
        match (&self.logits, &self.probabilities) {
            (Some(l), _) => l.clone(),
            (None, Some(p)) => p.iter().map(|x| x.ln()).collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Class probabilities after dividing the logits by `temperature`.
    pub fn probabilities_at(&self, temperature: f64) -> Vec<f64> {
        if temperature == 1.0 {
            if let (None, Some(p)) = (&self.logits, &self.probabilities) {
                return p.clone();
            }
        }
        let scaled: Vec<f64> = self.scores().iter().map(|s| s / temperature).collect();
        softmax(&scaled)
    }
}

pub fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::input("probability vector needs K >= 2 entries"));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::input("probabilities must be finite and nonnegative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorOutput {
    pub point: f64,
    pub q_low: f64,
    pub q_high: f64,
    pub label: Option<f64>,
}

impl RegressorOutput {
    pub fn new(point: f64, q_low: f64, q_high: f64, label: Option<f64>) -> Result<Self> {
        let out = RegressorOutput {
            point,
            q_low,
            q_high,
            label,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.point, self.q_low, self.q_high]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::input("regressor output must be finite"));
        }
        if self.q_low > self.q_high {
            return Err(Error::input(format!(
                "quantile band inverted: q_low {} > q_high {}",
                self.q_low, self.q_high
            )));
        }
        if self.label.is_some_and(|y| !y.is_finite()) {
            return Err(Error::input("regression label must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictionRegion {
    Set {
        classes: Vec<usize>,
    },
    Interval {
        #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
        lo: f64,
        #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPrediction {
    pub kind: TaskKind,
    /// Post-temperature class probabilities (classification only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    pub region: PredictionRegion,
    /// `|C|` for sets, `hi - lo` for intervals.
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub width: f64,
    /// Argmax class (as a number) or the point estimate.
    pub point: f64,
    /// The threshold rule produced an empty set and the argmax was substituted.
    #[serde(default)]
    pub empty_set_fallback: bool,
    #[serde(default)]
    pub unbounded: bool,
}

impl CalibratedPrediction {
    pub fn predicted_class(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Classification => Some(self.point as usize),
            TaskKind::Regression => None,
        }
    }

    pub fn contains_class(&self, class: usize) -> bool {
        matches!(&self.region, PredictionRegion::Set { classes } if classes.contains(&class))
    }

    pub fn contains_value(&self, y: f64) -> bool {
        matches!(self.region, PredictionRegion::Interval { lo, hi } if lo <= y && y <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    RegressionResidual,
    ClassificationScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub score_kind: ScoreKind,
    pub alpha: f64,
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub q_hat: f64,
    pub n_cal: usize,
    /// `ceil((n+1)(1-alpha)) > n`: the quantile is infinite.
    pub unbounded: bool,
}

impl ConformalModel {
    /// Clamps a negative quantile at zero so intervals never narrow.
    pub fn clamped_nonnegative(mut self) -> Self {
        if self.q_hat < 0.0 {
            self.q_hat = 0.0;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
    pub nll_before: f64,
    pub nll_after: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TemperatureModel {
    pub fn identity() -> Self {
        TemperatureModel {
            temperature: 1.0,
            nll_before: f64::NAN,
            nll_after: f64::NAN,
            warning: None,
        }
    }

    pub fn apply(&self, output: &ClassifierOutput) -> Vec<f64> {
        output.probabilities_at(self.temperature)
    }
}

/// Signed distance of `y` outside the band; negative when strictly inside.
pub fn conformal_residual(y: f64, q_low: f64, q_high: f64) -> f64 {
    (q_low - y).max(y - q_high)
}

/// Rank `k = ceil((n + 1)(1 - alpha))` of the conformal order statistic.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    // absorb representation error such as 10 * 0.9 = 9.000000000000002
    (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize
}

/// The `k`-th smallest score, or `+inf` when `k > n`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<(f64, bool)> {
    if scores.is_empty() {
        return Err(Error::input("calibration set is empty"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("conformal scores must not be NaN"));
    }
    let k = conformal_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok((f64::INFINITY, true));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[k - 1], false))
}

pub fn fit_conformal_regression(
    calibration: &[RegressorOutput],
    alpha: f64,
) -> Result<ConformalModel> {
    let scores = calibration
        .iter()
        .map(|c| {
            c.validate()?;
            let y = c
                .label
                .ok_or_else(|| Error::input("calibration sample without a label"))?;
            Ok(conformal_residual(y, c.q_low, c.q_high))
        })
        .collect::<Result<Vec<_>>>()?;
    let (q_hat, unbounded) = conformal_quantile(&scores, alpha)?;
    Ok(ConformalModel {
        score_kind: ScoreKind::RegressionResidual,
        alpha,
        q_hat,
        n_cal: scores.len(),
        unbounded,
    })
}

pub fn apply_conformal_regression(
    pred: &RegressorOutput,
    model: &ConformalModel,
) -> Result<CalibratedPrediction> {
    if model.score_kind != ScoreKind::RegressionResidual {
        return Err(Error::contract(
            "classification conformal model applied to a regressor",
        ));
    }
    pred.validate()?;
    let (lo, hi) = if model.unbounded || model.q_hat.is_infinite() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (pred.q_low - model.q_hat, pred.q_high + model.q_hat)
    };
    // A negative quantile can invert a narrow band; collapse it onto its midpoint.
    let (lo, hi) = if lo > hi {
        let mid = 0.5 * (pred.q_low + pred.q_high);
        (mid, mid)
    } else {
        (lo, hi)
    };
    Ok(CalibratedPrediction {
        kind: TaskKind::Regression,
        probabilities: None,
        region: PredictionRegion::Interval { lo, hi },
        width: hi - lo,
        point: pred.point,
        empty_set_fallback: false,
        unbounded: lo.is_infinite() || hi.is_infinite(),
    })
}

fn mean_nll(data: &[(Vec<f64>, usize)], temperature: f64) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(scores, y)| {
            let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            lse - scaled[*y]
        })
        .sum();
    total / data.len() as f64
}

/// Fits a single temperature by golden-section search on `log T` in `[-4, 4]`.
pub fn fit_temperature(calibration: &[ClassifierOutput]) -> Result<TemperatureModel> {
    const LOG_T_BRACKET: (f64, f64) = (-4.0, 4.0);
    const TOLERANCE: f64 = 1e-4;

    if calibration.is_empty() {
        return Err(Error::input("temperature calibration set is empty"));
    }
    let data = calibration
        .iter()
        .map(|c| {
            c.validate()?;
            let y = c
                .label
                .ok_or_else(|| Error::input("calibration sample without a label"))?;
            Ok((c.scores(), y))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = data[0].0.len();
    if data.iter().any(|(s, _)| s.len() != k) {
        return Err(Error::input(
            "calibration outputs disagree on the number of classes",
        ));
    }

    let nll_before = mean_nll(&data, 1.0);
    if data.iter().all(|(_, y)| *y == data[0].1) {
        return Ok(TemperatureModel {
            temperature: 1.0,
            nll_before,
            nll_after: nll_before,
            warning: Some("single-class calibration set; temperature fixed at 1".into()),
        });
    }

    let f = |log_t: f64| mean_nll(&data, log_t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_T_BRACKET;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut temperature = (0.5 * (a + b)).exp();
    let mut nll_after = mean_nll(&data, temperature);
    if nll_after.is_nan() || nll_after > nll_before {
        temperature = 1.0;
        nll_after = nll_before;
    }
    Ok(TemperatureModel {
        temperature,
        nll_before,
        nll_after,
        warning: None,
    })
}

/// Score `1 - p(true class)` on already temperature-scaled probabilities.
pub fn fit_conformal_classification(
    calibration: &[ClassifierOutput],
    alpha: f64,
) -> Result<ConformalModel> {
    let scores = calibration
        .iter()
        .map(|c| {
            c.validate()?;
            let y = c
                .label
                .ok_or_else(|| Error::input("calibration sample without a label"))?;
            Ok(1.0 - c.probabilities_at(1.0)[y])
        })
        .collect::<Result<Vec<_>>>()?;
    let (q_hat, unbounded) = conformal_quantile(&scores, alpha)?;
    Ok(ConformalModel {
        score_kind: ScoreKind::ClassificationScore,
        alpha,
        q_hat,
        n_cal: scores.len(),
        unbounded,
    })
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn apply_conformal_classification(
    probabilities: &[f64],
    model: &ConformalModel,
) -> Result<CalibratedPrediction> {
    if model.score_kind != ScoreKind::ClassificationScore {
        return Err(Error::contract(
            "regression conformal model applied to a classifier",
        ));
    }
    validate_probabilities(probabilities)?;
    let threshold = 1.0 - model.q_hat;
    let mut classes: Vec<usize> = (0..probabilities.len())
        .filter(|&k| probabilities[k] >= threshold)
        .collect();
    let top = argmax(probabilities);
    let empty_set_fallback = classes.is_empty();
    if empty_set_fallback {
        classes.push(top);
    }
    Ok(CalibratedPrediction {
        kind: TaskKind::Classification,
        probabilities: Some(probabilities.to_vec()),
        width: classes.len() as f64,
        region: PredictionRegion::Set { classes },
        point: top as f64,
        empty_set_fallback,
        unbounded: model.unbounded,
    })
}

/// The auditable JSON form of one branch's fitted calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSnapshot {
    pub kind: TaskKind,
    pub alpha: f64,
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub q_hat: f64,
    pub n_cal: usize,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub unbounded: bool,
    #[serde(default)]
    pub q_hat_clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CalibrationSnapshot {
    pub fn new(
        kind: TaskKind,
        conformal: &ConformalModel,
        temperature: Option<&TemperatureModel>,
    ) -> Self {
        let mut warnings = Vec::new();
        if conformal.unbounded {
            warnings.push(
                "calibration set too small for alpha; conformal quantile is infinite".to_owned(),
            );
        }
        if let Some(w) = temperature.and_then(|t| t.warning.clone()) {
            warnings.push(w);
        }
        CalibrationSnapshot {
            kind,
            alpha: conformal.alpha,
            q_hat: conformal.q_hat,
            n_cal: conformal.n_cal,
            temperature: temperature.map_or(1.0, |t| t.temperature),
            unbounded: conformal.unbounded,
            q_hat_clamped: false,
            nll_before: temperature.map(|t| t.nll_before).filter(|v| v.is_finite()),
            nll_after: temperature.map(|t| t.nll_after).filter(|v| v.is_finite()),
            warnings,
        }
    }

    pub fn conformal(&self) -> ConformalModel {
        ConformalModel {
            score_kind: match self.kind {
                TaskKind::Classification => ScoreKind::ClassificationScore,
                TaskKind::Regression => ScoreKind::RegressionResidual,
            },
            alpha: self.alpha,
            q_hat: self.q_hat,
            n_cal: self.n_cal,
            unbounded: self.unbounded,
        }
    }

    pub fn temperature_model(&self) -> TemperatureModel {
        TemperatureModel {
            temperature: self.temperature,
            nll_before: self.nll_before.unwrap_or(f64::NAN),
            nll_after: self.nll_after.unwrap_or(f64::NAN),
            warning: None,
        }
    }
}

/// Writes infinities as the strings `"inf"` / `"-inf"` so they survive JSON.
pub(crate) fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!(
                "invalid number `{other}`"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg(q_low: f64, q_high: f64, y: f64) -> RegressorOutput {
        RegressorOutput::new(0.5 * (q_low + q_high), q_low, q_high, Some(y)).unwrap()
    }

    /// Calibration outputs whose residuals are exactly `residuals` (band [0, 0]).
    fn with_residuals(residuals: &[f64]) -> Vec<RegressorOutput> {
        residuals.iter().map(|&e| reg(0.0, 0.0, e)).collect()
    }

    #[test]
    fn residual_examples() {
        assert_eq!(conformal_residual(4.0, 2.0, 6.0), -2.0);
        assert_eq!(conformal_residual(7.0, 2.0, 6.0), 1.0);
        assert_eq!(conformal_residual(1.0, 2.0, 6.0), 1.0);
    }

    #[test]
    fn regression_quantile_examples() {
        let cal: Vec<_> = [-1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&e| reg(0.0, 10.0, 10.0 + e))
            .collect();
        let m = fit_conformal_regression(&cal, 0.2).unwrap();
        assert_eq!(conformal_rank(4, 0.2), 4);
        assert_eq!(m.q_hat, 2.0);
        assert!(!m.unbounded);

        let m = fit_conformal_regression(&with_residuals(&[0.0]), 0.5).unwrap();
        assert_eq!(m.q_hat, 0.0);

        let m = fit_conformal_regression(&with_residuals(&[5.0, 5.0, 5.0]), 0.3).unwrap();
        assert_eq!(m.q_hat, 5.0);
    }

    #[test]
    fn regression_quantile_unbounded_when_rank_exceeds_n() {
        let m = fit_conformal_regression(&with_residuals(&[1.0, 2.0]), 0.05).unwrap();
        assert!(m.unbounded);
        assert_eq!(m.q_hat, f64::INFINITY);
        let p = apply_conformal_regression(&RegressorOutput::new(4.0, 2.0, 6.0, None).unwrap(), &m)
            .unwrap();
        assert!(p.unbounded);
        assert!(p.contains_value(1e300));
    }

    #[test]
    fn regression_fit_errors() {
        assert!(fit_conformal_regression(&[], 0.1).is_err());
        assert!(fit_conformal_regression(&with_residuals(&[1.0]), 0.0).is_err());
        assert!(fit_conformal_regression(&with_residuals(&[1.0]), 1.0).is_err());
        let unlabeled = [RegressorOutput::new(0.0, 0.0, 1.0, None).unwrap()];
        assert!(fit_conformal_regression(&unlabeled, 0.1).is_err());
        assert!(RegressorOutput::new(0.0, 2.0, 1.0, None).is_err());
    }

    fn model(kind: ScoreKind, q_hat: f64) -> ConformalModel {
        ConformalModel {
            score_kind: kind,
            alpha: 0.2,
            q_hat,
            n_cal: 10,
            unbounded: false,
        }
    }

    #[test]
    fn apply_regression_examples() {
        let band = RegressorOutput::new(4.0, 2.0, 6.0, None).unwrap();
        let p =
            apply_conformal_regression(&band, &model(ScoreKind::RegressionResidual, 2.0)).unwrap();
        assert_eq!(p.region, PredictionRegion::Interval { lo: 0.0, hi: 8.0 });
        assert_eq!(p.width, 8.0);
        let p =
            apply_conformal_regression(&band, &model(ScoreKind::RegressionResidual, 0.0)).unwrap();
        assert_eq!(p.region, PredictionRegion::Interval { lo: 2.0, hi: 6.0 });
        let p =
            apply_conformal_regression(&band, &model(ScoreKind::RegressionResidual, -1.0)).unwrap();
        assert_eq!(p.region, PredictionRegion::Interval { lo: 3.0, hi: 5.0 });
        assert_eq!(p.width, 2.0);
        assert!(
            apply_conformal_regression(&band, &model(ScoreKind::ClassificationScore, 0.0)).is_err()
        );
        let clamped = model(ScoreKind::RegressionResidual, -1.0).clamped_nonnegative();
        assert_eq!(clamped.q_hat, 0.0);
    }

    #[test]
    fn negative_quantile_still_covers_calibration_set() {
        // all labels well inside [2, 6]
        let ys = [3.5, 4.0, 4.5, 3.8, 4.2, 4.1, 3.9, 4.3, 3.7];
        let cal: Vec<_> = ys.iter().map(|&y| reg(2.0, 6.0, y)).collect();
        let m = fit_conformal_regression(&cal, 0.2).unwrap();
        assert!(m.q_hat < 0.0);
        let covered = cal
            .iter()
            .filter(|c| {
                apply_conformal_regression(c, &m)
                    .unwrap()
                    .contains_value(c.label.unwrap())
            })
            .count();
        assert!(covered as f64 / cal.len() as f64 >= 0.8);
    }

    #[test]
    fn temperature_identity_and_limit() {
        let out = ClassifierOutput::from_logits(vec![2.0, -1.0, 0.5], None);
        assert_eq!(out.probabilities_at(1.0), softmax(&[2.0, -1.0, 0.5]));
        for p in out.probabilities_at(1e4) {
            assert!((p - 1.0 / 3.0).abs() < 1e-3);
        }
    }

    /// Cohort whose labels are drawn from softmax(logits), deterministic via a tiny LCG.
    fn calibrated_cohort(n: usize, scale: f64) -> Vec<ClassifierOutput> {
        let mut state: u64 = 0x1234_5678;
        let mut uniform = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n)
            .map(|_| {
                let logits: Vec<f64> = (0..3).map(|_| 4.0 * uniform() - 2.0).collect();
                let p = softmax(&logits);
                let r = uniform();
                let y = if r < p[0] {
                    0
                } else if r < p[0] + p[1] {
                    1
                } else {
                    2
                };
                ClassifierOutput::from_logits(logits.iter().map(|l| l * scale).collect(), Some(y))
            })
            .collect()
    }

    #[test]
    fn calibrated_logits_fit_near_one() {
        let cal = calibrated_cohort(20_000, 1.0);
        let m = fit_temperature(&cal).unwrap();
        assert!(
            (0.95..=1.05).contains(&m.temperature),
            "T = {}",
            m.temperature
        );
        assert!(m.nll_after <= m.nll_before + 1e-9);
        // grid-search oracle agrees with golden section
        let data: Vec<_> = cal.iter().map(|c| (c.scores(), c.label.unwrap())).collect();
        let best = (0..=800)
            .map(|i| (-4.0 + i as f64 * 0.01f64).exp())
            .min_by(|a, b| mean_nll(&data, *a).total_cmp(&mean_nll(&data, *b)))
            .unwrap();
        assert!((best.ln() - m.temperature.ln()).abs() < 0.011);
    }

    #[test]
    fn single_class_calibration_keeps_unit_temperature() {
        let cal = vec![ClassifierOutput::from_logits(vec![1.0, 0.0], Some(0)); 5];
        let m = fit_temperature(&cal).unwrap();
        assert_eq!(m.temperature, 1.0);
        assert!(m.warning.is_some());
    }

    #[test]
    fn temperature_requires_labels() {
        let cal = vec![ClassifierOutput::from_logits(vec![1.0, 0.0], None)];
        assert!(fit_temperature(&cal).is_err());
        assert!(fit_temperature(&[]).is_err());
    }

    #[test]
    fn classification_quantile_examples() {
        let perfect = vec![ClassifierOutput::from_probabilities(vec![1.0, 0.0], Some(0)); 5];
        let m = fit_conformal_classification(&perfect, 0.2).unwrap();
        assert_eq!(m.q_hat, 0.0);
        let p = apply_conformal_classification(&[0.9, 0.1], &m).unwrap();
        assert!(p.empty_set_fallback);
        assert_eq!(p.region, PredictionRegion::Set { classes: vec![0] });

        let cal: Vec<_> = [0.9, 0.8, 0.7, 0.6]
            .iter()
            .map(|&p| ClassifierOutput::from_probabilities(vec![p, 1.0 - p], Some(0)))
            .collect();
        let m = fit_conformal_classification(&cal, 0.2).unwrap();
        assert!((m.q_hat - 0.4).abs() < 1e-12);

        let m = fit_conformal_classification(&cal, 0.01).unwrap();
        assert!(m.unbounded);
        let p = apply_conformal_classification(&[0.7, 0.2, 0.1], &m).unwrap();
        assert_eq!(
            p.region,
            PredictionRegion::Set {
                classes: vec![0, 1, 2]
            }
        );
    }

    #[test]
    fn apply_classification_examples() {
        let p = apply_conformal_classification(
            &[0.7, 0.2, 0.1],
            &model(ScoreKind::ClassificationScore, 0.4),
        )
        .unwrap();
        assert_eq!(p.region, PredictionRegion::Set { classes: vec![0] });
        assert_eq!(p.width, 1.0);
        let p = apply_conformal_classification(
            &[0.7, 0.2, 0.1],
            &model(ScoreKind::ClassificationScore, 1.0),
        )
        .unwrap();
        assert_eq!(p.width, 3.0);
        let p = apply_conformal_classification(
            &[0.5, 0.5],
            &model(ScoreKind::ClassificationScore, 0.3),
        )
        .unwrap();
        assert_eq!(p.region, PredictionRegion::Set { classes: vec![0] });
        assert!(p.empty_set_fallback);
        assert!(apply_conformal_classification(
            &[0.5, 0.6],
            &model(ScoreKind::ClassificationScore, 0.3)
        )
        .is_err());
    }

    #[test]
    fn snapshot_round_trips_infinite_quantile() {
        let m = ConformalModel {
            score_kind: ScoreKind::RegressionResidual,
            alpha: 0.05,
            q_hat: f64::INFINITY,
            n_cal: 3,
            unbounded: true,
        };
        let snap = CalibrationSnapshot::new(TaskKind::Regression, &m, None);
        let json = serde_json::to_string(&snap).unwrap();
        assert!(json.contains("\"q_hat\":\"inf\""));
        assert!(json.contains("\"T\":1.0"));
        let back: CalibrationSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back.conformal(), m);
    }

    proptest! {
        #[test]
        fn temperature_preserves_argmax(
            logits in proptest::collection::vec(-20.0..20.0f64, 2..8),
            log_t in -4.0..4.0f64,
        ) {
            let out = ClassifierOutput::from_logits(logits.clone(), None);
            prop_assert_eq!(argmax(&out.probabilities_at(log_t.exp())), argmax(&logits));
        }

        #[test]
        fn conformal_fit_is_permutation_invariant(
            mut residuals in proptest::collection::vec(-10.0..10.0f64, 1..30),
            alpha in 0.01..0.99f64,
        ) {
            let a = fit_conformal_regression(&with_residuals(&residuals), alpha).unwrap();
            residuals.reverse();
            let half = residuals.len() / 2;
            residuals.rotate_left(half);
            let b = fit_conformal_regression(&with_residuals(&residuals), alpha).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn interval_contains_point(
            lo in -10.0..10.0f64, span in 0.0..10.0f64, t in 0.0..=1.0f64, q_hat in 0.0..5.0f64,
        ) {
            let pred = RegressorOutput::new(lo + t * span, lo, lo + span, None).unwrap();
            let p = apply_conformal_regression(&pred, &model(ScoreKind::RegressionResidual, q_hat)).unwrap();
            prop_assert!(p.contains_value(pred.point));
            prop_assert!(p.contains_value(pred.q_low) && p.contains_value(pred.q_high));
        }

        #[test]
        fn set_size_monotone_in_quantile(
            raw in proptest::collection::vec(0.01..1.0f64, 2..6),
            q1 in 0.0..1.0f64, q2 in 0.0..1.0f64,
        ) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let (lo, hi) = (q1.min(q2), q1.max(q2));
            let a = apply_conformal_classification(&p, &model(ScoreKind::ClassificationScore, lo)).unwrap();
            let b = apply_conformal_classification(&p, &model(ScoreKind::ClassificationScore, hi)).unwrap();
            prop_assert!(a.width <= b.width);
        }
    }
}

//! Four-action reliability routing.
//!
//! Thresholds are fitted once as percentiles of validation signals, frozen,
//! and then applied by a fixed priority rule:
//!
//! ```text
//! REACQUIRE  if q < tau_q  or c < tau_c
//! REFER      if o > tau_ood            (optionally also u > tau_u_refer)
//! ABSTAIN    if u > tau_u_abstain or width > tau_w
//! PREDICT    otherwise
//! ```
//!
//! All comparisons are strict. Each decision records the first comparison
//! that fired together with the digest of the frozen configuration.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::calibration::CalibratedPrediction;
use crate::error::{Error, Result};
use crate::symptom_space::{ReliabilitySignals, UncertaintyNormalizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Predict,
    Abstain,
    Reacquire,
    Refer,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Predict,
        Action::Abstain,
        Action::Reacquire,
        Action::Refer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Predict => "PREDICT",
            Action::Abstain => "ABSTAIN",
            Action::Reacquire => "REACQUIRE",
            Action::Refer => "REFER",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Quality,
    Completeness,
    Ood,
    Uncertainty,
    Width,
    None,
}

impl Trigger {
    /// Lower-bound signals fire when they fall *below* their threshold.
    pub fn fires_below(self) -> bool {
        matches!(self, Trigger::Quality | Trigger::Completeness)
    }
}

/// Which order statistic a percentile maps to.
///
/// `lower` (used for floors) takes rank `floor(p*n/100) + 1`, so at most
/// `p`% of the sample lies strictly below the threshold. `upper` (used for
/// ceilings) takes the nearest rank `ceil(p*n/100)`, so at most `(100-p)`%
/// lies strictly above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    NearestRankLower,
    NearestRankUpper,
}

fn nearest_rank(n: usize, pct: f64, convention: QuantileConvention) -> usize {
    let x = pct * n as f64 / 100.0;
    let k = match convention {
        QuantileConvention::NearestRankLower => (x + 1e-9).floor() as usize + 1,
        QuantileConvention::NearestRankUpper => (x - 1e-9).ceil().max(1.0) as usize,
    };
    k.clamp(1, n)
}

/// Percentile of `values` under the given rank convention.
pub fn percentile(values: &[f64], pct: f64, convention: QuantileConvention) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("percentile of an empty sample"));
    }
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::config(format!(
            "percentile level {pct} must lie in (0, 100)"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::input("percentile input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), pct, convention) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub quality_pct: f64,
    pub uncertainty_abstain_pct: f64,
    pub uncertainty_refer_pct: f64,
    pub ood_pct: f64,
    pub floor_convention: QuantileConvention,
    pub ceiling_convention: QuantileConvention,
}

impl Default for QuantileSpec {
    fn default() -> Self {
        QuantileSpec {
            quality_pct: 20.0,
            uncertainty_abstain_pct: 70.0,
            uncertainty_refer_pct: 85.0,
            ood_pct: 85.0,
            floor_convention: QuantileConvention::NearestRankLower,
            ceiling_convention: QuantileConvention::NearestRankUpper,
        }
    }
}

/// Which signals drive REFER.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferPolicy {
    pub on_ood: bool,
    pub on_uncertainty: bool,
}

impl Default for ReferPolicy {
    fn default() -> Self {
        ReferPolicy {
            on_ood: true,
            on_uncertainty: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub tau_q: f64,
    pub tau_c: f64,
    pub tau_ood: f64,
    pub tau_u_abstain: f64,
    pub tau_u_refer: f64,
    pub tau_w: f64,
    pub quantile_spec: QuantileSpec,
    /// Fraction of validation widths at or below `tau_w`; `None` when `tau_w` was set by hand.
    pub coverage_budget: Option<f64>,
    pub refer: ReferPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty_normalizer: Option<UncertaintyNormalizer>,
    pub n_validation: usize,
    pub frozen: bool,
}

impl ThresholdConfig {
    /// A hand-specified, not yet frozen configuration.
    pub fn from_values(
        tau_q: f64,
        tau_c: f64,
        tau_ood: f64,
        tau_u_abstain: f64,
        tau_u_refer: f64,
        tau_w: f64,
    ) -> Self {
        ThresholdConfig {
            tau_q,
            tau_c,
            tau_ood,
            tau_u_abstain,
            tau_u_refer,
            tau_w,
            quantile_spec: QuantileSpec::default(),
            coverage_budget: None,
            refer: ReferPolicy::default(),
            uncertainty_normalizer: None,
            n_validation: 0,
            frozen: false,
        }
    }

    /// Thresholds published for the PADS branch (width ceiling unset).
    pub fn pads_fixture() -> Self {
        ThresholdConfig::from_values(0.9816, 1.0, 0.5706, 0.2182, 0.2427, f64::MAX)
    }

    pub fn with_refer_policy(mut self, refer: ReferPolicy) -> Result<Self> {
        if self.frozen {
            return Err(Error::contract("frozen threshold configs are immutable"));
        }
        self.refer = refer;
        Ok(self)
    }

    pub fn freeze(mut self) -> Result<Self> {
        let values = [
            ("tau_q", self.tau_q),
            ("tau_c", self.tau_c),
            ("tau_ood", self.tau_ood),
            ("tau_u_abstain", self.tau_u_abstain),
            ("tau_u_refer", self.tau_u_refer),
            ("tau_w", self.tau_w),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} = {v} is not finite")));
            }
        }
        self.frozen = true;
        Ok(self)
    }

    /// SHA-256 over the canonical JSON form: keys sorted, every number
    /// rendered with 12 significant digits in scientific notation.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("threshold config serializes");
        let canonical = canonicalize(value);
        let text = serde_json::to_string(&canonical).expect("canonical JSON serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => Value::String(format!("{f:.11e}")),
            _ => Value::Number(n),
        },
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is a BTreeMap, so keys come out sorted
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFitSpec {
    pub quantiles: QuantileSpec,
    pub coverage_budget: f64,
    pub tau_c: f64,
    pub refer: ReferPolicy,
}

impl Default for ThresholdFitSpec {
    fn default() -> Self {
        ThresholdFitSpec {
            quantiles: QuantileSpec::default(),
            coverage_budget: 0.9,
            tau_c: 1.0,
            refer: ReferPolicy::default(),
        }
    }
}

/// Fits and freezes thresholds on a validation split.
pub fn fit_thresholds(
    validation: &[(ReliabilitySignals, CalibratedPrediction)],
    spec: &ThresholdFitSpec,
) -> Result<ThresholdConfig> {
    if validation.is_empty() {
        return Err(Error::config(
            "threshold fitting needs a nonempty validation split",
        ));
    }
    if !(spec.coverage_budget > 0.0 && spec.coverage_budget < 1.0) {
        return Err(Error::config(format!(
            "coverage budget {} must lie in (0, 1)",
            spec.coverage_budget
        )));
    }
    if !(0.0..=1.0).contains(&spec.tau_c) {
        return Err(Error::config(format!(
            "tau_c {} must lie in [0, 1]",
            spec.tau_c
        )));
    }
    let q = &spec.quantiles;
    let quality: Vec<f64> = validation.iter().map(|(s, _)| s.quality).collect();
    let uncertainty: Vec<f64> = validation.iter().map(|(s, _)| s.uncertainty).collect();
    let ood: Vec<f64> = validation.iter().map(|(s, _)| s.ood).collect();
    let width: Vec<f64> = validation.iter().map(|(_, p)| p.width).collect();

    let config = ThresholdConfig {
        tau_q: percentile(&quality, q.quality_pct, q.floor_convention)?,
        tau_c: spec.tau_c,
        tau_ood: percentile(&ood, q.ood_pct, q.ceiling_convention)?,
        tau_u_abstain: percentile(
            &uncertainty,
            q.uncertainty_abstain_pct,
            q.ceiling_convention,
        )?,
        tau_u_refer: percentile(&uncertainty, q.uncertainty_refer_pct, q.ceiling_convention)?,
        tau_w: percentile(&width, spec.coverage_budget * 100.0, q.ceiling_convention)?,
        quantile_spec: *q,
        coverage_budget: Some(spec.coverage_budget),
        refer: spec.refer,
        uncertainty_normalizer: Some(UncertaintyNormalizer::fit(&uncertainty)?),
        n_validation: validation.len(),
        frozen: false,
    };
    config.freeze()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub sample_id: String,
    pub action: Action,
    pub trigger: Trigger,
    pub trigger_value: Option<f64>,
    pub threshold_value: Option<f64>,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl RoutingDecision {
    /// Re-evaluates the recorded comparison; true when it still fires (or
    /// when nothing fired and the action is PREDICT).
    pub fn reproduces(&self) -> bool {
        match (self.trigger, self.trigger_value, self.threshold_value) {
            (Trigger::None, None, None) => self.action == Action::Predict,
            (t, Some(v), Some(tau)) if t.fires_below() => v < tau,
            (Trigger::None, _, _) => false,
            (_, Some(v), Some(tau)) => v > tau,
            _ => false,
        }
    }
}

/// A frozen configuration together with its digest.
#[derive(Debug, Clone)]
pub struct Router {
    config: ThresholdConfig,
    digest: String,
}

impl Router {
    pub fn new(config: ThresholdConfig) -> Result<Self> {
        if !config.frozen {
            return Err(Error::contract(
                "routing requires a frozen threshold config",
            ));
        }
        let digest = config.digest();
        Ok(Router { config, digest })
    }

    pub fn config(&self) -> &ThresholdConfig {
        &self.config
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn route(
        &self,
        sample_id: &str,
        signals: &ReliabilitySignals,
        pred: &CalibratedPrediction,
    ) -> RoutingDecision {
        let c = &self.config;
        let (action, trigger, value, tau) = if signals.quality < c.tau_q {
            (
                Action::Reacquire,
                Trigger::Quality,
                signals.quality,
                c.tau_q,
            )
        } else if signals.completeness < c.tau_c {
            (
                Action::Reacquire,
                Trigger::Completeness,
                signals.completeness,
                c.tau_c,
            )
        } else if c.refer.on_ood && signals.ood > c.tau_ood {
            (Action::Refer, Trigger::Ood, signals.ood, c.tau_ood)
        } else if c.refer.on_uncertainty && signals.uncertainty > c.tau_u_refer {
            (
                Action::Refer,
                Trigger::Uncertainty,
                signals.uncertainty,
                c.tau_u_refer,
            )
        } else if signals.uncertainty > c.tau_u_abstain {
            (
                Action::Abstain,
                Trigger::Uncertainty,
                signals.uncertainty,
                c.tau_u_abstain,
            )
        } else if pred.width > c.tau_w {
            (Action::Abstain, Trigger::Width, pred.width, c.tau_w)
        } else {
            (Action::Predict, Trigger::None, f64::NAN, f64::NAN)
        };
        let mut flags = Vec::new();
        if pred.empty_set_fallback {
            flags.push("empty_set_fallback".to_owned());
        }
        if pred.unbounded {
            flags.push("unbounded_region".to_owned());
        }
        let (trigger_value, threshold_value) = if trigger == Trigger::None {
            (None, None)
        } else {
            (Some(value), Some(tau))
        };
        RoutingDecision {
            sample_id: sample_id.to_owned(),
            action,
            trigger,
            trigger_value,
            threshold_value,
            config_digest: self.digest.clone(),
            flags,
        }
    }

    /// Routes a batch on the current rayon pool; output keeps input order.
    pub fn route_batch<S: AsRef<str> + Sync>(
        &self,
        batch: &[(S, ReliabilitySignals, CalibratedPrediction)],
    ) -> Vec<RoutingDecision> {
        batch
            .par_iter()
            .map(|(id, s, p)| self.route(id.as_ref(), s, p))
            .collect()
    }
}

/// Routes one sample. Fails if `config` has not been frozen.
pub fn route(
    sample_id: &str,
    signals: &ReliabilitySignals,
    pred: &CalibratedPrediction,
    config: &ThresholdConfig,
) -> Result<RoutingDecision> {
    Ok(Router::new(config.clone())?.route(sample_id, signals, pred))
}

/// Per-sample outcomes used to score each routed subset.
#[derive(Debug, Clone, Copy)]
pub enum Outcomes<'a> {
    Correct(&'a [bool]),
    AbsError(&'a [f64]),
}

impl Outcomes<'_> {
    fn len(&self) -> usize {
        match self {
            Outcomes::Correct(c) => c.len(),
            Outcomes::AbsError(e) => e.len(),
        }
    }

    fn value(&self, i: usize) -> f64 {
        match self {
            Outcomes::Correct(c) => f64::from(u8::from(c[i])),
            Outcomes::AbsError(e) => e[i],
        }
    }

    fn metric_name(&self) -> &'static str {
        match self {
            Outcomes::Correct(_) => "accuracy",
            Outcomes::AbsError(_) => "mae",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub action: Action,
    pub count: usize,
    pub fraction: f64,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub total: usize,
    pub actions: Vec<ActionStats>,
    /// `accuracy` or `mae`, when outcomes were supplied.
    pub metric_kind: Option<String>,
    /// Metric over every sample, ignoring the routing.
    pub overall_metric: Option<f64>,
    /// Fraction routed to PREDICT.
    pub coverage: f64,
    /// Error rate (or MAE) on the PREDICT subset.
    pub selective_risk: Option<f64>,
}

impl ActionSummary {
    pub fn stats(&self, action: Action) -> &ActionStats {
        self.actions
            .iter()
            .find(|s| s.action == action)
            .expect("summary lists every action")
    }
}

pub fn summarize_actions(
    decisions: &[RoutingDecision],
    outcomes: Option<Outcomes<'_>>,
) -> Result<ActionSummary> {
    if let Some(o) = &outcomes {
        if o.len() != decisions.len() {
            return Err(Error::input(format!(
                "{} outcomes for {} decisions",
                o.len(),
                decisions.len()
            )));
        }
    }
    let total = decisions.len();
    let mean = |idx: &[usize]| -> Option<f64> {
        let o = outcomes.as_ref()?;
        if idx.is_empty() {
            return None;
        }
        Some(idx.iter().map(|&i| o.value(i)).sum::<f64>() / idx.len() as f64)
    };
    let actions: Vec<ActionStats> = Action::ALL
        .iter()
        .map(|&action| {
            let idx: Vec<usize> = (0..total)
                .filter(|&i| decisions[i].action == action)
                .collect();
            ActionStats {
                action,
                count: idx.len(),
                fraction: if total == 0 {
                    0.0
                } else {
                    idx.len() as f64 / total as f64
                },
                metric: mean(&idx),
            }
        })
        .collect();
    let all: Vec<usize> = (0..total).collect();
    let overall_metric = mean(&all);
    let predict = &actions[0];
    let selective_risk = match (&outcomes, predict.metric) {
        (Some(Outcomes::Correct(_)), Some(acc)) => Some(1.0 - acc),
        (Some(Outcomes::AbsError(_)), Some(mae)) => Some(mae),
        _ => None,
    };
    Ok(ActionSummary {
        total,
        coverage: predict.fraction,
        actions,
        metric_kind: outcomes.map(|o| o.metric_name().to_owned()),
        overall_metric,
        selective_risk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub risk: f64,
}

/// Selective risk as the acceptance threshold on uncertainty sweeps upward.
/// Tied uncertainties are accepted together.
pub fn risk_coverage_curve(
    uncertainties: &[f64],
    correct: &[bool],
) -> Result<Vec<RiskCoveragePoint>> {
    if uncertainties.is_empty() || uncertainties.len() != correct.len() {
        return Err(Error::input(format!(
            "risk-coverage needs equal nonempty inputs, got {} and {}",
            uncertainties.len(),
            correct.len()
        )));
    }
    if uncertainties.iter().any(|u| u.is_nan()) {
        return Err(Error::input("uncertainty contains NaN"));
    }
    let mut order: Vec<usize> = (0..uncertainties.len()).collect();
    order.sort_by(|&a, &b| uncertainties[a].total_cmp(&uncertainties[b]));
    let n = order.len() as f64;
    let mut curve = Vec::new();
    let mut errors = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        errors += usize::from(!correct[i]);
        let last_of_tie = order
            .get(pos + 1)
            .is_none_or(|&next| uncertainties[next] != uncertainties[i]);
        if last_of_tie {
            let accepted = pos + 1;
            curve.push(RiskCoveragePoint {
                threshold: uncertainties[i],
                coverage: accepted as f64 / n,
                risk: errors as f64 / accepted as f64,
            });
        }
    }
    Ok(curve)
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::TaskKind;
use crate::error::{Error, Result};
use crate::router::{QuantileSpec, ReferPolicy, ThresholdFitSpec};
use crate::symptom_space::{Node, NormalizationSpec, ObservableSet};

/// Everything a pipeline run depends on. Unknown JSON fields are rejected;
/// missing ones take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskKind,
    pub alpha: f64,
    pub coverage_budget: f64,
    pub quantiles: QuantileSpec,
    pub tau_c: f64,
    pub refer: ReferPolicy,
    /// Clamp negative conformal quantiles at zero.
    pub clamp_q_hat: bool,
    pub seed: u64,
    /// Subject fractions for the derived calibration and validation splits;
    /// the remainder is test.
    pub split_fractions: (f64, f64),
    /// Per-dataset observable nodes, overriding the built-in presets.
    pub observable: BTreeMap<String, Vec<Node>>,
    /// Node columns holding raw scores that still need min-max normalization.
    pub node_normalization: BTreeMap<Node, NormalizationSpec>,
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            task: TaskKind::Classification,
            alpha: 0.2,
            coverage_budget: 0.9,
            quantiles: QuantileSpec::default(),
            tau_c: 1.0,
            refer: ReferPolicy::default(),
            clamp_q_hat: false,
            seed: 0,
            split_fractions: (0.3, 0.3),
            observable: BTreeMap::new(),
            node_normalization: BTreeMap::new(),
            input: None,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: PipelineConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.coverage_budget > 0.0 && self.coverage_budget < 1.0) {
            return Err(Error::config(format!(
                "coverage_budget = {} must lie in (0, 1)",
                self.coverage_budget
            )));
        }
        if !(0.0..=1.0).contains(&self.tau_c) {
            return Err(Error::config(format!(
                "tau_c = {} must lie in [0, 1]",
                self.tau_c
            )));
        }
        let (cal, val) = self.split_fractions;
        if !(cal > 0.0 && val > 0.0 && cal + val < 1.0) {
            return Err(Error::config(
                "split fractions must be positive and leave room for a test split",
            ));
        }
        let q = &self.quantiles;
        for pct in [
            q.quality_pct,
            q.uncertainty_abstain_pct,
            q.uncertainty_refer_pct,
            q.ood_pct,
        ] {
            if !(pct > 0.0 && pct < 100.0) {
                return Err(Error::config(format!(
                    "quantile level {pct} must lie in (0, 100)"
                )));
            }
        }
        for spec in self.node_normalization.values() {
            spec.validate()?;
        }
        for (dataset, nodes) in &self.observable {
            ObservableSet::new(dataset.clone(), nodes.iter().copied())?;
        }
        Ok(())
    }

    /// Observable nodes for a dataset: explicit config, then the built-in
    /// presets, then all eight nodes.
    pub fn observable_set(&self, dataset_id: &str) -> Result<ObservableSet> {
        if let Some(nodes) = self.observable.get(dataset_id) {
            return ObservableSet::new(dataset_id, nodes.iter().copied());
        }
        Ok(ObservableSet::preset(dataset_id)
            .map(|mut o| {
                o.dataset_id = dataset_id.to_owned();
                o
            })
            .unwrap_or_else(|| ObservableSet::all(dataset_id)))
    }

    pub fn threshold_fit_spec(&self) -> ThresholdFitSpec {
        ThresholdFitSpec {
            quantiles: self.quantiles,
            coverage_budget: self.coverage_budget,
            tau_c: self.tau_c,
            refer: self.refer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"task": "regression", "alpha": 0.1}"#).unwrap();
        assert_eq!(c.task, TaskKind::Regression);
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.coverage_budget, 0.9);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let c = PipelineConfig {
            alpha: 1.0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"alhpa": 0.1}"#).is_err());
        let c = PipelineConfig {
            split_fractions: (0.5, 0.5),
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn observable_resolution_order() {
        let mut c = PipelineConfig::default();
        assert_eq!(c.observable_set("PADS").unwrap().len(), 3);
        assert_eq!(c.observable_set("PADS").unwrap().dataset_id, "PADS");
        assert_eq!(c.observable_set("unknown").unwrap().len(), 8);
        c.observable
            .insert("pads".into(), vec![Node::Tremor, Node::ReliabilityState]);
        assert_eq!(c.observable_set("pads").unwrap().len(), 2);
    }
}

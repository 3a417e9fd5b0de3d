//! End-to-end orchestration: partition, calibrate, fit and freeze thresholds,
//! route, evaluate, and write the artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    apply_conformal_classification, apply_conformal_regression, fit_conformal_classification,
    fit_conformal_regression, fit_temperature, CalibratedPrediction, CalibrationSnapshot,
    ClassifierOutput, TaskKind,
};
use crate::error::{Error, Result};
use crate::harness::config::PipelineConfig;
use crate::harness::table::{Label, SampleTable, Split};
use crate::metrics::{
    classification_report, ece, empirical_coverage, icc21, regression_metrics, report_json,
    AgreementReport, ClassificationReport, RegressionReport, ECE_BINS,
};
use crate::router::{
    fit_thresholds, risk_coverage_curve, summarize_actions, ActionSummary, Outcomes,
    RiskCoveragePoint, Router, RoutingDecision, ThresholdConfig,
};
use crate::symptom_space::{
    completeness, reliability_state, ReliabilitySignals, UncertaintyNormalizer,
};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const RISK_COVERAGE_FILE: &str = "risk_coverage.csv";

/// Row indices per split. `Train` rows are carried through but never used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub cal: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// The split column was absent and subjects were assigned by seed.
    pub derived: bool,
}

impl Partition {
    /// Uses the `split` column when every row has one; otherwise assigns
    /// whole subjects to cal/val/test with a seeded shuffle.
    pub fn of(table: &SampleTable, config: &PipelineConfig) -> Result<Self> {
        let with_split = table.rows.iter().filter(|r| r.split.is_some()).count();
        if with_split > 0 && with_split < table.rows.len() {
            return Err(Error::input(format!(
                "{} of {} rows carry a split; assign all rows or none",
                with_split,
                table.rows.len()
            )));
        }
        let mut p = Partition {
            cal: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            derived: with_split == 0,
        };
        if !p.derived {
            for (i, row) in table.rows.iter().enumerate() {
                match row.split {
                    Some(Split::Cal) => p.cal.push(i),
                    Some(Split::Val) => p.val.push(i),
                    Some(Split::Test) => p.test.push(i),
                    Some(Split::Train) | None => {}
                }
            }
            return Ok(p);
        }

        let mut subjects: Vec<&str> = table
            .rows
            .iter()
            .map(|r| r.record.subject_id.as_str())
            .collect();
        subjects.sort_unstable();
        subjects.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        subjects.shuffle(&mut rng);
        let n = subjects.len() as f64;
        let n_cal = (config.split_fractions.0 * n).round() as usize;
        let n_val = (config.split_fractions.1 * n).round() as usize;
        let assignment: BTreeMap<&str, Split> = subjects
            .iter()
            .enumerate()
            .map(|(rank, s)| {
                let split = if rank < n_cal {
                    Split::Cal
                } else if rank < n_cal + n_val {
                    Split::Val
                } else {
                    Split::Test
                };
                (*s, split)
            })
            .collect();
        for (i, row) in table.rows.iter().enumerate() {
            match assignment[row.record.subject_id.as_str()] {
                Split::Cal => p.cal.push(i),
                Split::Val => p.val.push(i),
                _ => p.test.push(i),
            }
        }
        Ok(p)
    }

    /// Rows used to fit calibration: `cal`, or `val` when there is no `cal`.
    pub fn calibration_rows(&self) -> &[usize] {
        if self.cal.is_empty() {
            &self.val
        } else {
            &self.cal
        }
    }
}

fn labeled(table: &SampleTable, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&i| table.rows[i].label.is_some())
        .collect()
}

fn check_task(table: &SampleTable, config: &PipelineConfig) -> Result<()> {
    if table.task != config.task {
        return Err(Error::config(format!(
            "table holds {:?} payloads but the config declares {:?}",
            table.task, config.task
        )));
    }
    Ok(())
}

pub fn calibrate(
    table: &SampleTable,
    partition: &Partition,
    config: &PipelineConfig,
) -> Result<CalibrationSnapshot> {
    check_task(table, config)?;
    let rows = labeled(table, partition.calibration_rows());
    if rows.is_empty() {
        return Err(Error::input("no labeled calibration rows").within("calibration", None));
    }
    let mut snapshot = match table.task {
        TaskKind::Classification => {
            let outputs: Vec<ClassifierOutput> = rows
                .iter()
                .map(|&i| {
                    table.rows[i]
                        .classifier_output()
                        .expect("classification payload")
                })
                .collect();
            let temperature =
                fit_temperature(&outputs).map_err(|e| e.within("calibration", None))?;
            let scaled: Vec<ClassifierOutput> = outputs
                .iter()
                .map(|o| ClassifierOutput::from_probabilities(temperature.apply(o), o.label))
                .collect();
            let conformal = fit_conformal_classification(&scaled, config.alpha)
                .map_err(|e| e.within("calibration", None))?;
            CalibrationSnapshot::new(TaskKind::Classification, &conformal, Some(&temperature))
        }
        TaskKind::Regression => {
            let outputs: Vec<_> = rows
                .iter()
                .map(|&i| {
                    table.rows[i]
                        .regressor_output()
                        .expect("regression payload")
                })
                .collect();
            let conformal = fit_conformal_regression(&outputs, config.alpha)
                .map_err(|e| e.within("calibration", None))?;
            CalibrationSnapshot::new(TaskKind::Regression, &conformal, None)
        }
    };
    if config.clamp_q_hat && snapshot.q_hat < 0.0 {
        snapshot.q_hat = 0.0;
        snapshot.q_hat_clamped = true;
    }
    Ok(snapshot)
}

/// Calibrated prediction for each listed row.
pub fn predict(
    table: &SampleTable,
    rows: &[usize],
    snapshot: &CalibrationSnapshot,
) -> Result<Vec<CalibratedPrediction>> {
    if table.task != snapshot.kind {
        return Err(Error::contract(
            "calibration snapshot was fitted for a different task",
        ));
    }
    let conformal = snapshot.conformal();
    let temperature = snapshot.temperature_model();
    rows.iter()
        .map(|&i| {
            let row = &table.rows[i];
            let result = match table.task {
                TaskKind::Classification => {
                    let output = row.classifier_output().expect("classification payload");
                    output.validate().and_then(|_| {
                        apply_conformal_classification(&temperature.apply(&output), &conformal)
                    })
                }
                TaskKind::Regression => apply_conformal_regression(
                    &row.regressor_output().expect("regression payload"),
                    &conformal,
                ),
            };
            result.map_err(|e| e.within("calibration", Some(row.sample_id())))
        })
        .collect()
}

/// Router inputs for each listed row. Completeness is taken over the
/// dataset's observable nodes; the reliability state uses `u` rescaled by
/// `normalizer`.
pub fn signals(
    table: &SampleTable,
    rows: &[usize],
    config: &PipelineConfig,
    normalizer: &UncertaintyNormalizer,
) -> Result<Vec<ReliabilitySignals>> {
    let mut observable = BTreeMap::new();
    rows.iter()
        .map(|&i| {
            let row = &table.rows[i];
            let context = |e: Error| e.within("symptom_space", Some(row.sample_id()));
            let dataset = row.record.dataset_id.as_str();
            if !observable.contains_key(dataset) {
                observable.insert(dataset.to_owned(), config.observable_set(dataset)?);
            }
            let c = completeness(&row.record, &observable[dataset]).map_err(context)?;
            let r = reliability_state(c, row.quality, normalizer.apply(row.uncertainty))
                .map_err(context)?;
            ReliabilitySignals::new(row.quality, row.uncertainty, row.ood, c, r).map_err(context)
        })
        .collect()
}

pub fn fit_stage(
    table: &SampleTable,
    partition: &Partition,
    snapshot: &CalibrationSnapshot,
    config: &PipelineConfig,
) -> Result<ThresholdConfig> {
    if partition.val.is_empty() {
        return Err(Error::input("no validation rows for threshold fitting").within("router", None));
    }
    let u: Vec<f64> = partition
        .val
        .iter()
        .map(|&i| table.rows[i].uncertainty)
        .collect();
    let normalizer = UncertaintyNormalizer::fit(&u).map_err(|e| e.within("router", None))?;
    let preds = predict(table, &partition.val, snapshot)?;
    let sigs = signals(table, &partition.val, config, &normalizer)?;
    let pairs: Vec<_> = sigs.into_iter().zip(preds).collect();
    fit_thresholds(&pairs, &config.threshold_fit_spec()).map_err(|e| e.within("router", None))
}

fn normalizer_of(thresholds: &ThresholdConfig) -> Result<UncertaintyNormalizer> {
    thresholds
        .uncertainty_normalizer
        .ok_or_else(|| Error::contract("threshold config carries no uncertainty normalizer"))
}

/// Routes the listed rows; clamp events from ingestion become audit flags.
pub fn route_stage(
    table: &SampleTable,
    rows: &[usize],
    snapshot: &CalibrationSnapshot,
    thresholds: &ThresholdConfig,
    config: &PipelineConfig,
) -> Result<(
    Vec<RoutingDecision>,
    Vec<CalibratedPrediction>,
    Vec<ReliabilitySignals>,
)> {
    let router = Router::new(thresholds.clone()).map_err(|e| e.within("router", None))?;
    let preds = predict(table, rows, snapshot)?;
    let sigs = signals(table, rows, config, &normalizer_of(thresholds)?)?;
    let batch: Vec<(&str, ReliabilitySignals, CalibratedPrediction)> = rows
        .iter()
        .zip(&sigs)
        .zip(&preds)
        .map(|((&i, s), p)| (table.rows[i].sample_id(), *s, p.clone()))
        .collect();
    let mut decisions = router.route_batch(&batch);
    for (d, &i) in decisions.iter_mut().zip(rows) {
        d.flags.extend(
            table.rows[i]
                .clamped_nodes
                .iter()
                .map(|n| format!("clamped:{}", n.name())),
        );
    }
    Ok((decisions, preds, sigs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCoverage {
    pub alpha: f64,
    pub target: f64,
    pub empirical: f64,
    pub n: usize,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub config_digest: String,
    pub n_test: usize,
    pub n_labeled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ece_before_temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformal: Option<ConformalCoverage>,
    /// Action mix over every routed row.
    pub routing: ActionSummary,
    /// Action mix and per-action outcome over labeled rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routing_labeled: Option<ActionSummary>,
    pub flags: BTreeMap<String, usize>,
}

pub fn evaluate_stage(
    table: &SampleTable,
    rows: &[usize],
    snapshot: &CalibrationSnapshot,
    thresholds: &ThresholdConfig,
    config: &PipelineConfig,
) -> Result<(Vec<RoutingDecision>, MetricsReport, Vec<RiskCoveragePoint>)> {
    let (decisions, preds, _) = route_stage(table, rows, snapshot, thresholds, config)?;
    let with_context = |e: Error| e.within("metrics", None);
    let lab: Vec<usize> = (0..rows.len())
        .filter(|&j| table.rows[rows[j]].label.is_some())
        .collect();

    let mut flags = BTreeMap::new();
    for d in &decisions {
        for f in &d.flags {
            let key = f.split(':').next().unwrap_or(f).to_owned();
            *flags.entry(key).or_insert(0) += 1;
        }
    }

    let mut report = MetricsReport {
        task: table.task,
        config_digest: thresholds.digest(),
        n_test: rows.len(),
        n_labeled: lab.len(),
        classification: None,
        ece_before_temperature: None,
        regression: None,
        agreement: None,
        conformal: None,
        routing: summarize_actions(&decisions, None).map_err(with_context)?,
        routing_labeled: None,
        flags,
    };
    if lab.is_empty() {
        return Ok((decisions, report, Vec::new()));
    }

    let lab_decisions: Vec<RoutingDecision> = lab.iter().map(|&j| decisions[j].clone()).collect();
    let uncertainty: Vec<f64> = lab
        .iter()
        .map(|&j| table.rows[rows[j]].uncertainty)
        .collect();
    let widths: Vec<f64> = lab.iter().map(|&j| preds[j].width).collect();
    let mean_width = widths.iter().sum::<f64>() / widths.len() as f64;

    let correct: Vec<bool> = match table.task {
        TaskKind::Classification => {
            let labels: Vec<usize> = lab
                .iter()
                .map(|&j| match table.rows[rows[j]].label {
                    Some(Label::Class(c)) => c,
                    _ => unreachable!("classification rows carry class labels"),
                })
                .collect();
            let probs: Vec<Vec<f64>> = lab
                .iter()
                .map(|&j| {
                    preds[j]
                        .probabilities
                        .clone()
                        .expect("classification probabilities")
                })
                .collect();
            let raw: Vec<Vec<f64>> = lab
                .iter()
                .map(|&j| {
                    table.rows[rows[j]]
                        .classifier_output()
                        .expect("classification payload")
                        .probabilities_at(1.0)
                })
                .collect();
            report.classification =
                Some(classification_report(&probs, &labels).map_err(with_context)?);
            report.ece_before_temperature =
                Some(ece(&raw, &labels, ECE_BINS).map_err(with_context)?);
            let covered = lab
                .iter()
                .zip(&labels)
                .filter(|(&j, &y)| preds[j].contains_class(y))
                .count();
            report.conformal = Some(ConformalCoverage {
                alpha: snapshot.alpha,
                target: 1.0 - snapshot.alpha,
                empirical: covered as f64 / lab.len() as f64,
                n: lab.len(),
                mean_width,
            });
            let correct: Vec<bool> = lab
                .iter()
                .zip(&labels)
                .map(|(&j, &y)| preds[j].predicted_class() == Some(y))
                .collect();
            report.routing_labeled = Some(
                summarize_actions(&lab_decisions, Some(Outcomes::Correct(&correct)))
                    .map_err(with_context)?,
            );
            correct
        }
        TaskKind::Regression => {
            let y: Vec<f64> = lab
                .iter()
                .map(|&j| match table.rows[rows[j]].label {
                    Some(Label::Value(v)) => v,
                    _ => unreachable!("regression rows carry numeric labels"),
                })
                .collect();
            let points: Vec<f64> = lab.iter().map(|&j| preds[j].point).collect();
            let intervals: Vec<(f64, f64)> = lab
                .iter()
                .map(|&j| match preds[j].region {
                    crate::calibration::PredictionRegion::Interval { lo, hi } => (lo, hi),
                    _ => unreachable!("regression predictions are intervals"),
                })
                .collect();
            report.regression = Some(regression_metrics(&y, &points).map_err(with_context)?);
            let coverage = empirical_coverage(&y, &intervals).map_err(with_context)?;
            report.conformal = Some(ConformalCoverage {
                alpha: snapshot.alpha,
                target: 1.0 - snapshot.alpha,
                empirical: coverage,
                n: y.len(),
                mean_width,
            });
            let pairs: Vec<Vec<f64>> = y.iter().zip(&points).map(|(a, b)| vec![*a, *b]).collect();
            let icc = icc21(&pairs).ok();
            report.agreement = Some(AgreementReport {
                icc21: icc.map(|i| i.value),
                icc21_degenerate: icc.is_some_and(|i| i.degenerate),
                coverage,
                target: 1.0 - snapshot.alpha,
            });
            let abs: Vec<f64> = y.iter().zip(&points).map(|(a, b)| (a - b).abs()).collect();
            report.routing_labeled = Some(
                summarize_actions(&lab_decisions, Some(Outcomes::AbsError(&abs)))
                    .map_err(with_context)?,
            );
            y.iter()
                .zip(&intervals)
                .map(|(v, (lo, hi))| lo <= v && v <= hi)
                .collect()
        }
    };
    let curve = risk_coverage_curve(&uncertainty, &correct).map_err(with_context)?;
    Ok((decisions, report, curve))
}

/// Threshold snapshot as written to disk, digest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSnapshot {
    pub config_digest: String,
    pub thresholds: ThresholdConfig,
}

impl ThresholdSnapshot {
    pub fn new(thresholds: ThresholdConfig) -> Self {
        ThresholdSnapshot {
            config_digest: thresholds.digest(),
            thresholds,
        }
    }

    /// The stored digest must match the thresholds it claims to describe.
    pub fn verified(self) -> Result<ThresholdConfig> {
        let actual = self.thresholds.digest();
        if actual != self.config_digest {
            return Err(Error::contract(format!(
                "threshold snapshot digest {} does not match its content ({actual})",
                self.config_digest
            )));
        }
        Ok(self.thresholds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutputs {
    pub partition: Partition,
    pub calibration: CalibrationSnapshot,
    pub thresholds: ThresholdConfig,
    pub decisions: Vec<RoutingDecision>,
    pub metrics: MetricsReport,
    pub risk_coverage: Vec<RiskCoveragePoint>,
}

pub fn run_pipeline(table: &SampleTable, config: &PipelineConfig) -> Result<PipelineOutputs> {
    config.validate()?;
    let partition = Partition::of(table, config)?;
    if partition.test.is_empty() {
        return Err(Error::input("no test rows to route"));
    }
    let calibration = calibrate(table, &partition, config)?;
    let thresholds = fit_stage(table, &partition, &calibration, config)?;
    let (decisions, metrics, risk_coverage) =
        evaluate_stage(table, &partition.test, &calibration, &thresholds, config)?;
    Ok(PipelineOutputs {
        partition,
        calibration,
        thresholds,
        decisions,
        metrics,
        risk_coverage,
    })
}

pub fn snapshot_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn audit_jsonl(decisions: &[RoutingDecision]) -> Result<String> {
    let mut out = String::new();
    for d in decisions {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn risk_coverage_csv(curve: &[RiskCoveragePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["coverage", "risk"])?;
    for p in curve {
        w.write_record([p.coverage.to_string(), p.risk.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("`{}` is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_outputs(outputs: &PipelineOutputs, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        (CALIBRATION_FILE, snapshot_json(&outputs.calibration)?),
        (
            THRESHOLDS_FILE,
            snapshot_json(&ThresholdSnapshot::new(outputs.thresholds.clone()))?,
        ),
        (AUDIT_FILE, audit_jsonl(&outputs.decisions)?),
        (METRICS_FILE, report_json(&outputs.metrics)?),
        (
            RISK_COVERAGE_FILE,
            risk_coverage_csv(&outputs.risk_coverage)?,
        ),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            write_atomic(&path, text.as_bytes())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{generate_synthetic_cohort, SynthSpec};
    use crate::router::Action;

    fn cohort(task: TaskKind) -> SampleTable {
        generate_synthetic_cohort(&SynthSpec {
            task,
            ..SynthSpec::default()
        })
        .unwrap()
        .table
    }

    #[test]
    fn derived_partition_is_subject_level_and_seeded() {
        let mut table = cohort(TaskKind::Classification);
        for row in &mut table.rows {
            row.split = None;
        }
        let config = PipelineConfig::default();
        let p = Partition::of(&table, &config).unwrap();
        assert!(p.derived);
        assert_eq!(p.cal.len() + p.val.len() + p.test.len(), table.rows.len());
        let subjects = |idx: &[usize]| -> std::collections::BTreeSet<String> {
            idx.iter()
                .map(|&i| table.rows[i].record.subject_id.clone())
                .collect()
        };
        assert!(subjects(&p.cal).is_disjoint(&subjects(&p.val)));
        assert!(subjects(&p.val).is_disjoint(&subjects(&p.test)));
        assert!(subjects(&p.cal).is_disjoint(&subjects(&p.test)));
        assert_eq!(p, Partition::of(&table, &config).unwrap());
        let other = Partition::of(&table, &PipelineConfig { seed: 9, ..config }).unwrap();
        assert_ne!(p, other);
    }

    #[test]
    fn partial_split_column_is_rejected() {
        let mut table = cohort(TaskKind::Classification);
        table.rows[0].split = None;
        assert!(Partition::of(&table, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn classification_run_is_consistent() {
        let table = cohort(TaskKind::Classification);
        let out = run_pipeline(&table, &PipelineConfig::default()).unwrap();
        assert_eq!(out.decisions.len(), out.partition.test.len());
        assert!(out.decisions.iter().all(|d| d.reproduces()));
        assert!(out
            .decisions
            .iter()
            .all(|d| d.config_digest == out.thresholds.digest()));
        let total: f64 = out.metrics.routing.actions.iter().map(|a| a.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let c = out.calibration.temperature;
        assert!(
            c > 1.0,
            "overconfident synthetic logits should need T > 1, got {c}"
        );
        let routed = out.metrics.routing_labeled.as_ref().unwrap();
        assert!(routed.stats(Action::Predict).count > 0);
    }

    #[test]
    fn regression_run_reports_coverage() {
        let table = cohort(TaskKind::Regression);
        let config = PipelineConfig {
            task: TaskKind::Regression,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&table, &config).unwrap();
        let cov = out.metrics.conformal.as_ref().unwrap();
        assert!(
            cov.empirical > 0.65 && cov.empirical < 0.95,
            "{}",
            cov.empirical
        );
        assert!(out.metrics.regression.is_some() && out.metrics.agreement.is_some());
    }

    #[test]
    fn task_mismatch_is_a_config_error() {
        let table = cohort(TaskKind::Classification);
        let config = PipelineConfig {
            task: TaskKind::Regression,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            run_pipeline(&table, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn snapshot_digest_is_checked() {
        let table = cohort(TaskKind::Classification);
        let out = run_pipeline(&table, &PipelineConfig::default()).unwrap();
        let snap = ThresholdSnapshot::new(out.thresholds.clone());
        let text = snapshot_json(&snap).unwrap();
        let back: ThresholdSnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(back.clone().verified().unwrap(), out.thresholds);
        let mut tampered = back;
        tampered.thresholds.tau_q += 0.01;
        assert!(tampered.verified().unwrap_err().is_contract_violation());
    }

    #[test]
    fn outputs_are_written_atomically() {
        let table = cohort(TaskKind::Classification);
        let out = run_pipeline(&table, &PipelineConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_outputs(&out, dir.path()).unwrap();
        assert_eq!(paths.len(), 5);
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
        let audit = fs::read_to_string(dir.path().join(AUDIT_FILE)).unwrap();
        assert_eq!(audit.lines().count(), out.decisions.len());
        let csv = fs::read_to_string(dir.path().join(RISK_COVERAGE_FILE)).unwrap();
        assert!(csv.starts_with("coverage,risk\n"));
    }
}

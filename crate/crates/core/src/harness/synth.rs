//! Seeded synthetic cohorts for property tests and demos.
//!
//! The generator is ChaCha8 (`rand_chacha` 0.9) seeded through
//! `SeedableRng::seed_from_u64`; the same seed yields the same table on any
//! platform. Each sample has a latent difficulty `d` in `[0, 1]` that drives
//! its error probability; the emitted uncertainty is
//! `u = rho * d + (1 - rho) * v` with independent `v ~ U(0, 1)`, so `rho`
//! controls how informative `u` is.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::anchoring::{Visit, VisitSeries};
use crate::calibration::TaskKind;
use crate::error::{Error, Result};
use crate::harness::table::{Label, Payload, SampleRow, SampleTable, Split};
use crate::symptom_space::{Node, NodeValue, ObservableSet, SymptomRecord, NODE_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub task: TaskKind,
    pub seed: u64,
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub num_classes: usize,
    /// Dataset id; a known preset name also fixes the node coverage pattern.
    pub dataset_id: String,
    /// Probability that an observable node is missing.
    pub missing_rate: f64,
    pub noise: f64,
    /// `rho` in `u = rho * d + (1 - rho) * v`.
    pub uncertainty_correlation: f64,
    pub ood_fraction: f64,
    pub low_quality_fraction: f64,
    /// Logit multiplier; values above 1 make the classifier overconfident.
    pub logit_scale: f64,
    /// Subject fractions assigned to `cal` and `val`; the rest is `test`.
    pub split_fractions: (f64, f64),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            task: TaskKind::Classification,
            seed: 0,
            n_subjects: 60,
            samples_per_subject: 10,
            num_classes: 3,
            dataset_id: "pads".into(),
            missing_rate: 0.03,
            noise: 1.0,
            uncertainty_correlation: 0.8,
            ood_fraction: 0.1,
            low_quality_fraction: 0.1,
            logit_scale: 1.5,
            split_fractions: (0.3, 0.3),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.samples_per_subject == 0 {
            return Err(Error::config(
                "synthetic cohort needs at least one subject and sample",
            ));
        }
        if self.task == TaskKind::Classification && self.num_classes < 2 {
            return Err(Error::config("synthetic classification needs K >= 2"));
        }
        for (name, v) in [
            ("missing_rate", self.missing_rate),
            ("uncertainty_correlation", self.uncertainty_correlation),
            ("ood_fraction", self.ood_fraction),
            ("low_quality_fraction", self.low_quality_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(self.noise > 0.0 && self.logit_scale > 0.0) {
            return Err(Error::config("noise and logit_scale must be positive"));
        }
        let (c, v) = self.split_fractions;
        if !(c >= 0.0 && v >= 0.0 && c + v <= 1.0) {
            return Err(Error::config("invalid split fractions"));
        }
        Ok(())
    }
}

/// Latent per-sample truth kept alongside the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub difficulty: f64,
    pub is_ood: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub table: SampleTable,
    pub truth: Vec<GroundTruth>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate_synthetic_cohort(spec: &SynthSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let observable = ObservableSet::preset(&spec.dataset_id)
        .unwrap_or_else(|| ObservableSet::all(&spec.dataset_id));

    // subject-level split: shuffle subject order, then cut by fraction
    let mut order: Vec<usize> = (0..spec.n_subjects).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_cal = (spec.split_fractions.0 * spec.n_subjects as f64).round() as usize;
    let n_val = (spec.split_fractions.1 * spec.n_subjects as f64).round() as usize;
    let mut split_of = vec![Split::Test; spec.n_subjects];
    for (rank, &s) in order.iter().enumerate() {
        split_of[s] = if rank < n_cal {
            Split::Cal
        } else if rank < n_cal + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let k = spec.num_classes;
    let rho = spec.uncertainty_correlation;
    let mut rows = Vec::with_capacity(spec.n_subjects * spec.samples_per_subject);
    let mut truth = Vec::with_capacity(rows.capacity());
    for (subject, &split) in split_of.iter().enumerate() {
        let subject_effect = 2.0 * normal(&mut rng);
        for visit in 0..spec.samples_per_subject {
            let is_ood = rng.random::<f64>() < spec.ood_fraction;
            let mut difficulty: f64 = rng.random();
            if is_ood {
                difficulty = (difficulty + 0.5).min(1.0);
            }
            let v: f64 = rng.random();
            let uncertainty = rho * difficulty + (1.0 - rho) * v;
            let quality = if rng.random::<f64>() < spec.low_quality_fraction {
                rng.random_range(0.5..0.95)
            } else {
                rng.random_range(0.95..=1.0)
            };
            let ood = if is_ood {
                rng.random_range(0.6..=1.0)
            } else {
                rng.random_range(0.0..0.55)
            };

            let (payload, label, severity) = match spec.task {
                TaskKind::Classification => {
                    let y = rng.random_range(0..k);
                    let margin = 4.0 * (1.0 - difficulty);
                    let logits: Vec<f64> = (0..k)
                        .map(|c| {
                            let z = normal(&mut rng) + if c == y { margin } else { 0.0 };
                            spec.logit_scale * z
                        })
                        .collect();
                    let severity = 0.1 + 0.8 * y as f64 / (k - 1) as f64;
                    (
                        Payload::Classification {
                            logits: Some(logits),
                            probabilities: None,
                        },
                        Label::Class(y),
                        severity,
                    )
                }
                TaskKind::Regression => {
                    let x: f64 = rng.random();
                    let mean = 20.0 + 15.0 * x + subject_effect;
                    let sigma =
                        spec.noise * (0.5 + 2.0 * difficulty) * if is_ood { 1.5 } else { 1.0 };
                    let y = mean + sigma * normal(&mut rng);
                    (
                        Payload::Regression {
                            point: mean,
                            q_low: mean - spec.noise,
                            q_high: mean + spec.noise,
                        },
                        Label::Value(y),
                        ((mean - 10.0) / 40.0).clamp(0.0, 1.0),
                    )
                }
            };

            let mut nodes = [NodeValue::Missing; NODE_COUNT];
            for node in observable.nodes() {
                if node == Node::ReliabilityState {
                    nodes[node.index()] =
                        NodeValue::Observed((quality * (1.0 - uncertainty)).clamp(0.0, 1.0));
                } else if rng.random::<f64>() >= spec.missing_rate {
                    let value = (severity + 0.1 * normal(&mut rng)).clamp(0.0, 1.0);
                    nodes[node.index()] = NodeValue::Observed(value);
                }
            }
            let record = SymptomRecord::new(
                format!("s{subject:04}-{visit:03}"),
                format!("p{subject:04}"),
                spec.dataset_id.clone(),
                visit as f64,
                nodes,
            )?;
            rows.push(SampleRow {
                record,
                quality,
                uncertainty,
                ood,
                payload,
                label: Some(label),
                split: Some(split),
                clamped_nodes: Vec::new(),
            });
            truth.push(GroundTruth { difficulty, is_ood });
        }
    }

    Ok(SyntheticCohort {
        table: SampleTable {
            task: spec.task,
            num_classes: if spec.task == TaskKind::Classification {
                k
            } else {
                0
            },
            rows,
        },
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongitudinalSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub min_visits: usize,
    pub max_visits: usize,
    pub n_features: usize,
    /// Probability that a visit carries a second recording at the same time.
    pub repeat_rate: f64,
    pub noise: f64,
}

impl Default for LongitudinalSpec {
    fn default() -> Self {
        LongitudinalSpec {
            seed: 0,
            n_subjects: 40,
            min_visits: 3,
            max_visits: 12,
            n_features: 4,
            repeat_rate: 0.1,
            noise: 1.5,
        }
    }
}

/// Per-subject series `y = baseline_s + slope_s * t + w . x + noise`, with
/// strong subject baselines so that anchor labels carry most of the signal.
pub fn generate_longitudinal(spec: &LongitudinalSpec) -> Result<Vec<VisitSeries>> {
    if spec.n_subjects == 0 || spec.min_visits == 0 || spec.min_visits > spec.max_visits {
        return Err(Error::config("invalid longitudinal spec"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..spec.n_features).map(|_| normal(&mut rng)).collect();
    (0..spec.n_subjects)
        .map(|s| {
            let baseline = 25.0 + 8.0 * normal(&mut rng);
            let slope = 0.3 * normal(&mut rng);
            let n = rng.random_range(spec.min_visits..=spec.max_visits);
            let mut t = 0.0;
            let mut visits = Vec::new();
            for v in 0..n {
                t += rng.random_range(1..=3) as f64;
                let repeats = if rng.random::<f64>() < spec.repeat_rate {
                    2
                } else {
                    1
                };
                for r in 0..repeats {
                    let x: Vec<f64> = (0..spec.n_features).map(|_| normal(&mut rng)).collect();
                    let signal: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum();
                    let y = baseline + slope * t + signal + spec.noise * normal(&mut rng);
                    visits.push(Visit {
                        visit_id: format!("p{s:04}-{v:03}-{r}"),
                        timestamp: t,
                        features: Some(x),
                        label: y,
                    });
                }
            }
            VisitSeries::new(format!("p{s:04}"), visits)
        })
        .collect()
}

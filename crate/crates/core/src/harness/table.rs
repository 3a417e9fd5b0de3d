//! CSV exchange format for per-sample evidence.
//!
//! Header columns (order free, names fixed):
//!
//! | column | notes |
//! |---|---|
//! | `sample_id`, `subject_id`, `dataset_id` | strings; `sample_id` unique |
//! | `timestamp` | number, monotone per subject |
//! | `node_0` .. `node_7` | severity in `[0, 1]`, or empty / `NA` for MISSING |
//! | `quality`, `uncertainty`, `ood` | numbers |
//! | `label` | optional column; empty cell = unlabeled |
//! | `split` | optional: `train`, `cal`, `val`, `test` |
//! | `logit_0..` and/or `p_0..` | classification payload |
//! | `point`, `q_low`, `q_high` | regression payload |

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{ClassifierOutput, RegressorOutput, TaskKind};
use crate::error::{Error, Result};
use crate::harness::config::PipelineConfig;
use crate::symptom_space::{normalize_severity, Node, NodeValue, SymptomRecord, NODE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Cal,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Cal => "cal",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "cal" => Some(Split::Cal),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Classification {
        logits: Option<Vec<f64>>,
        probabilities: Option<Vec<f64>>,
    },
    Regression {
        point: f64,
        q_low: f64,
        q_high: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub record: SymptomRecord,
    pub quality: f64,
    pub uncertainty: f64,
    pub ood: f64,
    pub payload: Payload,
    pub label: Option<Label>,
    pub split: Option<Split>,
    /// Nodes whose raw value was clamped during normalization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped_nodes: Vec<Node>,
}

impl SampleRow {
    pub fn sample_id(&self) -> &str {
        &self.record.sample_id
    }

    pub fn classifier_output(&self) -> Option<ClassifierOutput> {
        match &self.payload {
            Payload::Classification {
                logits,
                probabilities,
            } => Some(ClassifierOutput {
                logits: logits.clone(),
                probabilities: probabilities.clone(),
                label: match self.label {
                    Some(Label::Class(c)) => Some(c),
                    _ => None,
                },
            }),
            Payload::Regression { .. } => None,
        }
    }

    pub fn regressor_output(&self) -> Option<RegressorOutput> {
        match self.payload {
            Payload::Regression {
                point,
                q_low,
                q_high,
            } => Some(RegressorOutput {
                point,
                q_low,
                q_high,
                label: match self.label {
                    Some(Label::Value(y)) => Some(y),
                    _ => None,
                },
            }),
            Payload::Classification { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub task: TaskKind,
    /// Number of classes (classification only).
    pub num_classes: usize,
    pub rows: Vec<SampleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub labeled: usize,
    pub subjects: usize,
    pub datasets: BTreeMap<String, usize>,
    pub splits: BTreeMap<String, usize>,
    pub missing_per_node: BTreeMap<String, usize>,
    pub clamped_values: usize,
}

impl SampleTable {
    pub fn report(&self) -> IngestReport {
        let mut datasets = BTreeMap::new();
        let mut splits = BTreeMap::new();
        let mut subjects = std::collections::BTreeSet::new();
        let mut missing: BTreeMap<String, usize> =
            Node::ALL.iter().map(|n| (n.name().to_owned(), 0)).collect();
        for row in &self.rows {
            *datasets.entry(row.record.dataset_id.clone()).or_insert(0) += 1;
            let split = row.split.map_or("unassigned", Split::as_str);
            *splits.entry(split.to_owned()).or_insert(0) += 1;
            subjects.insert(row.record.subject_id.as_str());
            for (j, m) in row.record.mask().iter().enumerate() {
                if *m {
                    *missing.get_mut(Node::ALL[j].name()).expect("node name") += 1;
                }
            }
        }
        IngestReport {
            rows: self.rows.len(),
            labeled: self.rows.iter().filter(|r| r.label.is_some()).count(),
            subjects: subjects.len(),
            datasets,
            splits,
            missing_per_node: missing,
            clamped_values: self.rows.iter().map(|r| r.clamped_nodes.len()).sum(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.get(name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    }

    /// `prefix0, prefix1, ...` as long as they are contiguous.
    fn indexed(&self, prefix: &str) -> Vec<usize> {
        (0..)
            .map_while(|k| self.get(&format!("{prefix}{k}")))
            .collect()
    }
}

fn row_error(line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Row {
        line,
        column: column.to_owned(),
        message: message.into(),
    }
}

fn number(record: &csv::StringRecord, idx: usize, column: &str, line: u64) -> Result<f64> {
    let cell = record.get(idx).unwrap_or("");
    let v: f64 = cell
        .parse()
        .map_err(|_| row_error(line, column, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_error(line, column, "value must be finite"));
    }
    Ok(v)
}

pub fn ingest_csv(path: &Path, config: &PipelineConfig) -> Result<SampleTable> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, config)
}

pub fn ingest_reader<R: Read>(reader: R, config: &PipelineConfig) -> Result<SampleTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns {
        index: headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_owned(), i))
            .collect(),
    };

    let id_cols = [
        cols.require("sample_id")?,
        cols.require("subject_id")?,
        cols.require("dataset_id")?,
    ];
    let ts_col = cols.require("timestamp")?;
    let node_cols: Vec<usize> = (0..NODE_COUNT)
        .map(|j| cols.require(&format!("node_{j}")))
        .collect::<Result<_>>()?;
    let signal_cols = [
        cols.require("quality")?,
        cols.require("uncertainty")?,
        cols.require("ood")?,
    ];
    let label_col = cols.get("label");
    let split_col = cols.get("split");

    let (logit_cols, prob_cols, reg_cols) = match config.task {
        TaskKind::Classification => {
            let logits = cols.indexed("logit_");
            let probs = cols.indexed("p_");
            if logits.len() < 2 && probs.len() < 2 {
                return Err(Error::Schema(
                    "classification input needs logit_0.. or p_0.. columns (K >= 2)".into(),
                ));
            }
            if !logits.is_empty() && !probs.is_empty() && logits.len() != probs.len() {
                return Err(Error::Schema(
                    "logit_* and p_* columns disagree on K".into(),
                ));
            }
            (logits, probs, None)
        }
        TaskKind::Regression => (
            Vec::new(),
            Vec::new(),
            Some([
                cols.require("point")?,
                cols.require("q_low")?,
                cols.require("q_high")?,
            ]),
        ),
    };
    let num_classes = logit_cols.len().max(prob_cols.len());

    let mut rows = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");

        let sample_id = cell(id_cols[0]).to_owned();
        if sample_id.is_empty() {
            return Err(row_error(line, "sample_id", "empty sample_id"));
        }
        if let Some(&first_line) = seen.get(&sample_id) {
            return Err(Error::DuplicateSample {
                id: sample_id,
                first_line,
                second_line: line,
            });
        }
        seen.insert(sample_id.clone(), line);

        let timestamp = number(&record, ts_col, "timestamp", line)?;
        let mut nodes = [NodeValue::Missing; NODE_COUNT];
        let mut clamped_nodes = Vec::new();
        for (j, &c) in node_cols.iter().enumerate() {
            let name = format!("node_{j}");
            if is_missing(cell(c)) {
                continue;
            }
            let raw = number(&record, c, &name, line)?;
            let node = Node::ALL[j];
            let value = match config.node_normalization.get(&node) {
                Some(spec) => {
                    let s = normalize_severity(raw, spec)
                        .map_err(|e| row_error(line, &name, e.to_string()))?;
                    if s.clamped {
                        clamped_nodes.push(node);
                    }
                    s.value
                }
                None => {
                    if !(0.0..=1.0).contains(&raw) {
                        return Err(row_error(line, &name, format!("{raw} outside [0, 1]")));
                    }
                    raw
                }
            };
            nodes[j] = NodeValue::Observed(value);
        }
        let symptom = SymptomRecord::new(
            sample_id,
            cell(id_cols[1]),
            cell(id_cols[2]),
            timestamp,
            nodes,
        )
        .map_err(|e| row_error(line, "node_*", e.to_string()))?;

        let quality = number(&record, signal_cols[0], "quality", line)?;
        let uncertainty = number(&record, signal_cols[1], "uncertainty", line)?;
        let ood = number(&record, signal_cols[2], "ood", line)?;
        for (name, v, upper) in [
            ("quality", quality, true),
            ("uncertainty", uncertainty, false),
            ("ood", ood, true),
        ] {
            if v < 0.0 || (upper && v > 1.0) {
                return Err(row_error(line, name, format!("{v} out of range")));
            }
        }

        let vector = |idx: &[usize], prefix: &str| -> Result<Option<Vec<f64>>> {
            if idx.is_empty() {
                return Ok(None);
            }
            idx.iter()
                .enumerate()
                .map(|(k, &c)| number(&record, c, &format!("{prefix}{k}"), line))
                .collect::<Result<Vec<_>>>()
                .map(Some)
        };
        let payload = match reg_cols {
            None => {
                let payload = Payload::Classification {
                    logits: vector(&logit_cols, "logit_")?,
                    probabilities: vector(&prob_cols, "p_")?,
                };
                if let Payload::Classification {
                    probabilities: Some(p),
                    ..
                } = &payload
                {
                    crate::calibration::validate_probabilities(p)
                        .map_err(|e| row_error(line, "p_*", e.to_string()))?;
                }
                payload
            }
            Some([p, lo, hi]) => {
                let out = RegressorOutput {
                    point: number(&record, p, "point", line)?,
                    q_low: number(&record, lo, "q_low", line)?,
                    q_high: number(&record, hi, "q_high", line)?,
                    label: None,
                };
                out.validate()
                    .map_err(|e| row_error(line, "q_low", e.to_string()))?;
                Payload::Regression {
                    point: out.point,
                    q_low: out.q_low,
                    q_high: out.q_high,
                }
            }
        };

        let label = match label_col.map(&cell) {
            None => None,
            Some(c) if is_missing(c) => None,
            Some(c) => Some(match config.task {
                TaskKind::Classification => {
                    let k: usize = c.parse().map_err(|_| {
                        row_error(line, "label", format!("`{c}` is not a class index"))
                    })?;
                    if k >= num_classes {
                        return Err(row_error(
                            line,
                            "label",
                            format!("class {k} out of range for K = {num_classes}"),
                        ));
                    }
                    Label::Class(k)
                }
                TaskKind::Regression => Label::Value(number(
                    &record,
                    label_col.expect("label column"),
                    "label",
                    line,
                )?),
            }),
        };

        let split = match split_col.map(&cell) {
            None | Some("") => None,
            Some(c) => Some(
                Split::parse(c)
                    .ok_or_else(|| row_error(line, "split", format!("unknown split `{c}`")))?,
            ),
        };

        rows.push(SampleRow {
            record: symptom,
            quality,
            uncertainty,
            ood,
            payload,
            label,
            split,
            clamped_nodes,
        });
    }

    Ok(SampleTable {
        task: config.task,
        num_classes,
        rows,
    })
}

fn header(table: &SampleTable) -> Vec<String> {
    let mut h: Vec<String> = ["sample_id", "subject_id", "dataset_id", "timestamp"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..NODE_COUNT).map(|j| format!("node_{j}")));
    h.extend(
        ["quality", "uncertainty", "ood", "label", "split"]
            .iter()
            .map(|s| s.to_string()),
    );
    match table.task {
        TaskKind::Classification => {
            let first = table.rows.first();
            let has = |f: fn(&Payload) -> bool| first.is_none_or(|r| f(&r.payload));
            if has(|p| {
                matches!(
                    p,
                    Payload::Classification {
                        logits: Some(_),
                        ..
                    }
                )
            }) {
                h.extend((0..table.num_classes).map(|k| format!("logit_{k}")));
            }
            if first.is_some_and(|r| {
                matches!(
                    r.payload,
                    Payload::Classification {
                        probabilities: Some(_),
                        ..
                    }
                )
            }) {
                h.extend((0..table.num_classes).map(|k| format!("p_{k}")));
            }
        }
        TaskKind::Regression => {
            h.extend(["point", "q_low", "q_high"].iter().map(|s| s.to_string()))
        }
    }
    h
}

/// Writes the table in the ingest format. Nodes are written as stored
/// (already normalized).
pub fn write_csv<W: Write>(table: &SampleTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(table))?;
    for row in &table.rows {
        let r = &row.record;
        let mut fields = vec![
            r.sample_id.clone(),
            r.subject_id.clone(),
            r.dataset_id.clone(),
            r.timestamp.to_string(),
        ];
        fields.extend(r.nodes().iter().map(|n| {
            n.observed()
                .map_or_else(|| "NA".to_owned(), |v| v.to_string())
        }));
        fields.push(row.quality.to_string());
        fields.push(row.uncertainty.to_string());
        fields.push(row.ood.to_string());
        fields.push(match row.label {
            None => String::new(),
            Some(Label::Class(k)) => k.to_string(),
            Some(Label::Value(v)) => v.to_string(),
        });
        fields.push(row.split.map_or("", Split::as_str).to_owned());
        match &row.payload {
            Payload::Classification {
                logits,
                probabilities,
            } => {
                for v in logits.iter().chain(probabilities.iter()) {
                    fields.extend(v.iter().map(f64::to_string));
                }
            }
            Payload::Regression {
                point,
                q_low,
                q_high,
            } => {
                fields.extend([point, q_low, q_high].iter().map(|v| v.to_string()));
            }
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

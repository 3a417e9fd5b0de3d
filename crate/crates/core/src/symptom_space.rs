//! The shared eight-node symptom representation.
//!
//! Every modality lands in the same fixed node order (seven clinical nodes
//! plus the auxiliary `reliability_state`). A node is either an observed
//! severity in `[0, 1]` or [`NodeValue::Missing`]; missingness is never
//! folded into the value itself.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NODE_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Tremor = 0,
    Bradykinesia = 1,
    AxialGait = 2,
    MotorFluctuation = 3,
    Cognition = 4,
    SleepAutonomic = 5,
    Mood = 6,
    ReliabilityState = 7,
}

impl Node {
    pub const ALL: [Node; NODE_COUNT] = [
        Node::Tremor,
        Node::Bradykinesia,
        Node::AxialGait,
        Node::MotorFluctuation,
        Node::Cognition,
        Node::SleepAutonomic,
        Node::Mood,
        Node::ReliabilityState,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Node> {
        Node::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Node::Tremor => "tremor",
            Node::Bradykinesia => "bradykinesia",
            Node::AxialGait => "axial_gait",
            Node::MotorFluctuation => "motor_fluctuation",
            Node::Cognition => "cognition",
            Node::SleepAutonomic => "sleep_autonomic",
            Node::Mood => "mood",
            Node::ReliabilityState => "reliability_state",
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One node slot. `Missing` serializes as JSON `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeValue {
    Observed(f64),
    Missing,
}

impl NodeValue {
    pub fn is_missing(self) -> bool {
        matches!(self, NodeValue::Missing)
    }

    /// The observed value. Reading a missing node is a caller bug.
    pub fn value(self) -> Result<f64> {
        match self {
            NodeValue::Observed(v) => Ok(v),
            NodeValue::Missing => Err(Error::contract("arithmetic over a MISSING symptom node")),
        }
    }

    pub fn observed(self) -> Option<f64> {
        match self {
            NodeValue::Observed(v) => Some(v),
            NodeValue::Missing => None,
        }
    }
}

/// One sample projected into the symptom space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub dataset_id: String,
    pub timestamp: f64,
    nodes: [NodeValue; NODE_COUNT],
}

impl SymptomRecord {
    pub fn new(
        sample_id: impl Into<String>,
        subject_id: impl Into<String>,
        dataset_id: impl Into<String>,
        timestamp: f64,
        nodes: [NodeValue; NODE_COUNT],
    ) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::input("timestamp must be finite"));
        }
        for (j, node) in nodes.iter().enumerate() {
            if let NodeValue::Observed(v) = node {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::input(format!(
                        "node {} value {v} outside [0, 1]",
                        Node::ALL[j]
                    )));
                }
            }
        }
        Ok(SymptomRecord {
            sample_id: sample_id.into(),
            subject_id: subject_id.into(),
            dataset_id: dataset_id.into(),
            timestamp,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[NodeValue; NODE_COUNT] {
        &self.nodes
    }

    pub fn node(&self, node: Node) -> NodeValue {
        self.nodes[node.index()]
    }

    /// `mask[j]` is true iff node `j` is missing.
    pub fn mask(&self) -> [bool; NODE_COUNT] {
        self.nodes.map(NodeValue::is_missing)
    }

    /// Replaces one node, re-checking the range invariant.
    pub fn set_node(&mut self, node: Node, value: NodeValue) -> Result<()> {
        if let NodeValue::Observed(v) = value {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!(
                    "node {node} value {v} outside [0, 1]"
                )));
            }
        }
        self.nodes[node.index()] = value;
        Ok(())
    }
}

/// The nodes a dataset can measure in principle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSet {
    pub dataset_id: String,
    nodes: BTreeSet<Node>,
}

impl ObservableSet {
    pub fn new(
        dataset_id: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
    ) -> Result<Self> {
        let nodes: BTreeSet<Node> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(Error::config("observable node set is empty"));
        }
        if !nodes.contains(&Node::ReliabilityState) {
            return Err(Error::config(
                "reliability_state must be observable for every dataset",
            ));
        }
        Ok(ObservableSet {
            dataset_id: dataset_id.into(),
            nodes,
        })
    }

    pub fn all(dataset_id: impl Into<String>) -> Self {
        ObservableSet {
            dataset_id: dataset_id.into(),
            nodes: Node::ALL.into_iter().collect(),
        }
    }

    /// Coverage patterns of the five reference cohorts.
    pub fn preset(name: &str) -> Option<Self> {
        use Node::*;
        let nodes: &[Node] = match name.to_ascii_lowercase().as_str() {
            "ppmi" => &Node::ALL,
            "mpower" => &[
                Tremor,
                Bradykinesia,
                AxialGait,
                MotorFluctuation,
                Cognition,
                ReliabilityState,
            ],
            "pads" => &[Tremor, Bradykinesia, ReliabilityState],
            "daphnet" => &[Bradykinesia, AxialGait, MotorFluctuation, ReliabilityState],
            "uci" => &[ReliabilityState],
            _ => return None,
        };
        Some(ObservableSet {
            dataset_id: name.to_owned(),
            nodes: nodes.iter().copied().collect(),
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains(&self, node: Node) -> bool {
        self.nodes.contains(&node)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Fraction of the dataset's observable nodes that are present on this record.
/// Nodes the dataset cannot measure never count against it.
pub fn completeness(record: &SymptomRecord, obs: &ObservableSet) -> Result<f64> {
    if obs.dataset_id != record.dataset_id {
        return Err(Error::config(format!(
            "observable set for `{}` applied to record from `{}`",
            obs.dataset_id, record.dataset_id
        )));
    }
    if obs.is_empty() {
        return Err(Error::config("observable node set is empty"));
    }
    let missing = obs.nodes().filter(|n| record.node(*n).is_missing()).count();
    Ok(1.0 - missing as f64 / obs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "NormalizationSpec::default_epsilon")]
    pub epsilon: f64,
    /// Set when a higher raw value means better function.
    pub flip_to_severity: bool,
}

impl NormalizationSpec {
    pub const DEFAULT_EPSILON: f64 = 1e-9;

    fn default_epsilon() -> f64 {
        Self::DEFAULT_EPSILON
    }

    pub fn new(x_min: f64, x_max: f64, flip_to_severity: bool) -> Result<Self> {
        let spec = NormalizationSpec {
            x_min,
            x_max,
            epsilon: Self::DEFAULT_EPSILON,
            flip_to_severity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) || self.x_max < self.x_min {
            return Err(Error::config(format!(
                "normalization range [{}, {}] is invalid",
                self.x_min, self.x_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("normalization epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Severity {
    pub value: f64,
    /// The raw value fell outside `[x_min, x_max]` and was clamped.
    pub clamped: bool,
}

/// Min-max normalizes a raw score and, if requested, flips it so that larger
/// means more severe.
pub fn normalize_severity(x: f64, spec: &NormalizationSpec) -> Result<Severity> {
    if !x.is_finite() {
        return Err(Error::input(format!("raw value {x} is not finite")));
    }
    spec.validate()?;
    let raw = (x - spec.x_min) / (spec.x_max - spec.x_min + spec.epsilon);
    let clamped = !(0.0..=1.0).contains(&raw);
    let norm = raw.clamp(0.0, 1.0);
    Ok(Severity {
        value: if spec.flip_to_severity {
            1.0 - norm
        } else {
            norm
        },
        clamped,
    })
}

/// Per-sample reliability evidence consumed by the router.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySignals {
    pub quality: f64,
    pub uncertainty: f64,
    pub ood: f64,
    pub completeness: f64,
    pub reliability_state: f64,
}

impl ReliabilitySignals {
    pub fn new(
        quality: f64,
        uncertainty: f64,
        ood: f64,
        completeness: f64,
        reliability_state: f64,
    ) -> Result<Self> {
        let s = ReliabilitySignals {
            quality,
            uncertainty,
            ood,
            completeness,
            reliability_state,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("quality", self.quality),
            ("ood", self.ood),
            ("completeness", self.completeness),
            ("reliability_state", self.reliability_state),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.uncertainty.is_finite() && self.uncertainty >= 0.0) {
            return Err(Error::input(format!(
                "uncertainty = {} must be finite and nonnegative",
                self.uncertainty
            )));
        }
        Ok(())
    }
}

/// Maps completeness, quality and normalized uncertainty to the auxiliary
/// reliability node.
pub trait ReliabilityStatePolicy {
    fn reliability_state(&self, completeness: f64, quality: f64, uncertainty: f64) -> f64;
}

/// `r = c * q * (1 - min(u, 1))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProductPolicy;

impl ReliabilityStatePolicy for ProductPolicy {
    fn reliability_state(&self, completeness: f64, quality: f64, uncertainty: f64) -> f64 {
        completeness * quality * (1.0 - uncertainty.min(1.0))
    }
}

/// Range-checked [`ProductPolicy`].
pub fn reliability_state(completeness: f64, quality: f64, uncertainty: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&completeness) || !(0.0..=1.0).contains(&quality) {
        return Err(Error::input(format!(
            "completeness {completeness} and quality {quality} must lie in [0, 1]"
        )));
    }
    if !(uncertainty.is_finite() && uncertainty >= 0.0) {
        return Err(Error::input(format!(
            "uncertainty {uncertainty} must be >= 0"
        )));
    }
    Ok(ProductPolicy.reliability_state(completeness, quality, uncertainty))
}

/// Min-max rescaling of raw uncertainty into `[0, 1]`, fitted on validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyNormalizer {
    pub min: f64,
    pub max: f64,
}

impl UncertaintyNormalizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input(
                "cannot fit uncertainty normalizer on empty data",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("uncertainty values must be finite"));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(UncertaintyNormalizer { min, max })
    }

    pub fn apply(&self, u: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return if u <= self.min { 0.0 } else { 1.0 };
        }
        ((u - self.min) / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub weights: Vec<f64>,
    pub z: Vec<f64>,
}

/// Dot-product attention of one query over per-node keys, pooling the values.
pub fn attention_aggregate(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
) -> Result<Attention> {
    if keys.is_empty() || keys.len() != values.len() {
        return Err(Error::input(format!(
            "need M >= 1 matching keys and values, got {} keys and {} values",
            keys.len(),
            values.len()
        )));
    }
    if keys.iter().any(|k| k.len() != query.len()) {
        return Err(Error::input("key dimension does not match query dimension"));
    }
    let dim = values[0].len();
    if values.iter().any(|v| v.len() != dim) {
        return Err(Error::input("value vectors have inconsistent dimensions"));
    }

    let logits: Vec<f64> = keys
        .iter()
        .map(|k| k.iter().zip(query).map(|(a, b)| a * b).sum())
        .collect();
    let weights = softmax(&logits);
    let mut z = vec![0.0; dim];
    for (w, v) in weights.iter().zip(values) {
        for (acc, x) in z.iter_mut().zip(v) {
            *acc += w * x;
        }
    }
    Ok(Attention { weights, z })
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(dataset: &str, nodes: [NodeValue; NODE_COUNT]) -> SymptomRecord {
        SymptomRecord::new("s1", "p1", dataset, 0.0, nodes).unwrap()
    }

    const O: NodeValue = NodeValue::Observed(0.5);
    const M: NodeValue = NodeValue::Missing;

    #[test]
    fn severity_midpoint_flips_to_half() {
        let spec = NormalizationSpec::new(0.0, 10.0, true).unwrap();
        let s = normalize_severity(5.0, &spec).unwrap();
        assert!((s.value - 0.5).abs() < 1e-9);
        assert!(!s.clamped);
    }

    #[test]
    fn severity_endpoints() {
        let flip = NormalizationSpec::new(3.0, 7.0, true).unwrap();
        assert_eq!(normalize_severity(3.0, &flip).unwrap().value, 1.0);
        let plain = NormalizationSpec::new(3.0, 7.0, false).unwrap();
        let v = normalize_severity(7.0, &plain).unwrap().value;
        assert!((1.0 - v).abs() <= 1e-9 / 4.0 + 1e-15);
    }

    #[test]
    fn severity_out_of_range_is_clamped_and_flagged() {
        let spec = NormalizationSpec::new(0.0, 10.0, false).unwrap();
        let s = normalize_severity(12.0, &spec).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(s.clamped);
        let s = normalize_severity(-1.0, &spec).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.clamped);
    }

    #[test]
    fn severity_rejects_non_finite() {
        let spec = NormalizationSpec::new(0.0, 10.0, false).unwrap();
        assert!(matches!(
            normalize_severity(f64::NAN, &spec),
            Err(Error::Input(_))
        ));
        assert!(NormalizationSpec::new(5.0, 1.0, false).is_err());
        assert!(spec.with_epsilon(0.0).is_err());
    }

    #[test]
    fn completeness_full_and_half() {
        let r = record("ppmi", [O; 8]);
        assert_eq!(completeness(&r, &ObservableSet::all("ppmi")).unwrap(), 1.0);

        let obs = ObservableSet::new(
            "d",
            [
                Node::Tremor,
                Node::Bradykinesia,
                Node::Mood,
                Node::ReliabilityState,
            ],
        )
        .unwrap();
        let r = record("d", [M, O, O, O, O, O, M, O]);
        assert_eq!(completeness(&r, &obs).unwrap(), 0.5);
    }

    #[test]
    fn completeness_ignores_unobservable_nodes() {
        let pads = ObservableSet::preset("pads").unwrap();
        let r = record("pads", [O, O, M, M, M, M, M, O]);
        assert_eq!(completeness(&r, &pads).unwrap(), 1.0);
    }

    #[test]
    fn completeness_rejects_wrong_dataset_and_bad_sets() {
        let r = record("pads", [O; 8]);
        assert!(matches!(
            completeness(&r, &ObservableSet::all("uci")),
            Err(Error::Config(_))
        ));
        assert!(ObservableSet::new("x", []).is_err());
        assert!(ObservableSet::new("x", [Node::Tremor]).is_err());
    }

    #[test]
    fn presets_match_coverage_table() {
        let counts: Vec<usize> = ["ppmi", "mpower", "pads", "daphnet", "uci"]
            .iter()
            .map(|d| ObservableSet::preset(d).unwrap().len())
            .collect();
        assert_eq!(counts, vec![8, 6, 3, 4, 1]);
    }

    #[test]
    fn record_rejects_out_of_range_nodes() {
        let mut nodes = [O; 8];
        nodes[2] = NodeValue::Observed(1.5);
        assert!(SymptomRecord::new("a", "b", "c", 0.0, nodes).is_err());
        assert!(SymptomRecord::new("a", "b", "c", f64::NAN, [O; 8]).is_err());
    }

    #[test]
    fn mask_tracks_missing() {
        let r = record("d", [M, O, O, O, M, O, O, O]);
        assert_eq!(
            r.mask(),
            [true, false, false, false, true, false, false, false]
        );
        assert!(r
            .node(Node::Tremor)
            .value()
            .unwrap_err()
            .to_string()
            .contains("MISSING"));
    }

    #[test]
    fn reliability_state_examples() {
        assert_eq!(reliability_state(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(reliability_state(0.0, 0.7, 0.2).unwrap(), 0.0);
        // 0.5 * 0.8 * 0.75
        let expected = 0.5 * 0.8 * (1.0 - 0.25);
        assert!((reliability_state(0.5, 0.8, 0.25).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.3).abs() < 1e-15);
        assert_eq!(reliability_state(1.0, 1.0, 3.0).unwrap(), 0.0);
        assert!(reliability_state(1.2, 1.0, 0.0).is_err());
    }

    #[test]
    fn attention_examples() {
        let keys = vec![vec![1.0, 0.0]; 3];
        let values = vec![vec![0.0, 3.0], vec![3.0, 0.0], vec![6.0, 6.0]];
        let a = attention_aggregate(&[0.3, 0.2], &keys, &values).unwrap();
        for w in &a.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((a.z[0] - 3.0).abs() < 1e-12 && (a.z[1] - 3.0).abs() < 1e-12);

        let a = attention_aggregate(&[1.0], &[vec![5.0]], &[vec![2.0, 4.0]]).unwrap();
        assert_eq!(a.weights, vec![1.0]);
        assert_eq!(a.z, vec![2.0, 4.0]);

        let a = attention_aggregate(
            &[1.0],
            &[vec![0.0], vec![3f64.ln()]],
            &[vec![1.0], vec![1.0]],
        )
        .unwrap();
        assert!((a.weights[0] - 0.25).abs() < 1e-12);
        assert!((a.weights[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn attention_dimension_mismatch() {
        assert!(attention_aggregate(&[1.0, 2.0], &[vec![1.0]], &[vec![1.0]]).is_err());
        assert!(attention_aggregate(&[1.0], &[], &[]).is_err());
        assert!(attention_aggregate(
            &[1.0],
            &[vec![1.0], vec![2.0]],
            &[vec![1.0], vec![1.0, 2.0]]
        )
        .is_err());
    }

    #[test]
    fn uncertainty_normalizer() {
        let n = UncertaintyNormalizer::fit(&[0.2, 0.6, 0.4]).unwrap();
        assert!((n.apply(0.4) - 0.5).abs() < 1e-12);
        assert_eq!(n.apply(1.0), 1.0);
        assert_eq!(n.apply(0.0), 0.0);
        let flat = UncertaintyNormalizer::fit(&[0.3, 0.3]).unwrap();
        assert_eq!(flat.apply(0.3), 0.0);
        assert_eq!(flat.apply(0.31), 1.0);
    }

    fn node_value() -> impl Strategy<Value = NodeValue> {
        prop_oneof![
            Just(NodeValue::Missing),
            (0.0..=1.0f64).prop_map(NodeValue::Observed)
        ]
    }

    proptest! {
        #[test]
        fn completeness_unaffected_by_unobservable_nodes(
            nodes in proptest::array::uniform8(node_value()),
            flips in proptest::array::uniform8(any::<bool>()),
            subset in proptest::collection::btree_set(0usize..7, 0..7),
        ) {
            let obs = ObservableSet::new(
                "d",
                subset.iter().map(|&i| Node::ALL[i]).chain([Node::ReliabilityState]),
            ).unwrap();
            let a = record("d", nodes);
            let mut flipped = nodes;
            for j in 0..NODE_COUNT {
                if flips[j] && !obs.contains(Node::ALL[j]) {
                    flipped[j] = if flipped[j].is_missing() { NodeValue::Observed(0.1) } else { NodeValue::Missing };
                }
            }
            let b = record("d", flipped);
            prop_assert_eq!(completeness(&a, &obs).unwrap(), completeness(&b, &obs).unwrap());
        }

        #[test]
        fn severity_monotone(lo in -50.0..50.0f64, span in 0.1..100.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, flip in any::<bool>()) {
            let spec = NormalizationSpec::new(lo, lo + span, flip).unwrap();
            let (x1, x2) = (lo + span * a.min(b), lo + span * a.max(b));
            let s1 = normalize_severity(x1, &spec).unwrap().value;
            let s2 = normalize_severity(x2, &spec).unwrap().value;
            if flip { prop_assert!(s1 >= s2); } else { prop_assert!(s1 <= s2); }
        }

        #[test]
        fn attention_shift_invariant(
            logits in proptest::collection::vec(-5.0..5.0f64, 1..8),
            shift in -20.0..20.0f64,
        ) {
            // one-dimensional keys with query 1 make logits explicit
            let keys: Vec<Vec<f64>> = logits.iter().map(|l| vec![*l]).collect();
            let shifted: Vec<Vec<f64>> = logits.iter().map(|l| vec![*l + shift]).collect();
            let values = vec![vec![1.0]; logits.len()];
            let a = attention_aggregate(&[1.0], &keys, &values).unwrap();
            let b = attention_aggregate(&[1.0], &shifted, &values).unwrap();
            prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.weights.iter().zip(&b.weights) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn reliability_state_bounded(c in 0.0..=1.0f64, q in 0.0..=1.0f64, u in 0.0..5.0f64) {
            let r = reliability_state(c, q, u).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            if c == 0.0 || q == 0.0 || u >= 1.0 { prop_assert_eq!(r, 0.0); }
            prop_assert!(reliability_state(c, q, u + 0.1).unwrap() <= r);
        }
    }
}

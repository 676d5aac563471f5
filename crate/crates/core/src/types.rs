//! Domain values shared by every stage of an evaluation run.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Qpain,
    Pubmedqa,
    Custom,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Qpain => "qpain",
            DatasetKind::Pubmedqa => "pubmedqa",
            DatasetKind::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qpain" => Ok(DatasetKind::Qpain),
            "pubmedqa" => Ok(DatasetKind::Pubmedqa),
            "custom" => Ok(DatasetKind::Custom),
            other => Err(format!("unknown dataset kind `{other}`")),
        }
    }
}

/// The four-way answer space used for predictions and judge labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Unknown,
    Random,
}

impl Answer {
    pub const ALL: [Answer; 4] = [Answer::Yes, Answer::No, Answer::Unknown, Answer::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
            Answer::Unknown => "Unknown",
            Answer::Random => "Random",
        }
    }

    /// Yes and No are the only answers that commit to a decision.
    pub fn is_decisive(self) -> bool {
        matches!(self, Answer::Yes | Answer::No)
    }

    pub fn opposite(self) -> Option<Answer> {
        match self {
            Answer::Yes => Some(Answer::No),
            Answer::No => Some(Answer::Yes),
            _ => None,
        }
    }

    /// Case-insensitive match of a single bare word.
    pub fn from_word(word: &str) -> Option<Answer> {
        match word.to_ascii_lowercase().as_str() {
            "yes" => Some(Answer::Yes),
            "no" => Some(Answer::No),
            "unknown" => Some(Answer::Unknown),
            "random" => Some(Answer::Random),
            _ => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dosage {
    Low,
    High,
}

impl Dosage {
    pub fn from_word(word: &str) -> Option<Dosage> {
        match word.to_ascii_lowercase().as_str() {
            "low" => Some(Dosage::Low),
            "high" => Some(Dosage::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dosage: Option<Dosage>,
}

impl Label {
    pub fn new(answer: Answer) -> Self {
        Label {
            answer,
            dosage: None,
        }
    }
}

impl From<Answer> for Label {
    fn from(answer: Answer) -> Self {
        Label::new(answer)
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub dataset_kind: DatasetKind,
    pub context: String,
    pub question: String,
    pub ground_label: Label,
    pub ground_explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<BTreeMap<String, String>>,
}

/// A parsed target-model answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedAnswer {
    pub label: Label,
    pub explanation: String,
    pub raw_response: String,
}

pub const METRIC_NAMES: [&str; 9] = [
    "accuracy",
    "context_relevancy",
    "correctness",
    "iter_stability",
    "para_stability",
    "consistency",
    "qag",
    "counterfactual",
    "contextual_faithfulness",
];

/// Per-item metric values; `None` marks a value that could not be computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub accuracy: Option<f64>,
    pub context_relevancy: Option<f64>,
    pub correctness: Option<f64>,
    pub iter_stability: Option<f64>,
    pub para_stability: Option<f64>,
    pub consistency: Option<f64>,
    pub qag: Option<f64>,
    pub counterfactual: Option<f64>,
    pub contextual_faithfulness: Option<f64>,
}

impl MetricVector {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.accuracy,
            self.context_relevancy,
            self.correctness,
            self.iter_stability,
            self.para_stability,
            self.consistency,
            self.qag,
            self.counterfactual,
            self.contextual_faithfulness,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES
            .iter()
            .position(|n| *n == name)
            .and_then(|i| self.values()[i])
    }

    /// True when every present value lies in the unit interval.
    pub fn is_well_formed(&self) -> bool {
        self.values()
            .iter()
            .flatten()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub item_id: String,
    pub metrics: MetricVector,
    pub plausibility: Option<f64>,
    pub faithfulness: Option<f64>,
    pub lext: Option<f64>,
    /// Call ids of every generation request issued for this item, in order.
    pub audit: Vec<String>,
    /// Why a metric is missing, keyed by metric name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub missing: BTreeMap<String, String>,
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Endpoint {
    Master,
    Node(usize),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Master => f.write_str("master"),
            Endpoint::Node(i) => write!(f, "node{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// One-off distribution of (encoded or sharded) training data.
    DataShare,
    ModelBroadcast,
    InferenceResult,
    GradientReturn,
    ShareExchange,
    AggregateReturn,
    ModelReturn,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::DataShare,
        Phase::ModelBroadcast,
        Phase::InferenceResult,
        Phase::GradientReturn,
        Phase::ShareExchange,
        Phase::AggregateReturn,
        Phase::ModelReturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::DataShare => "data-share",
            Phase::ModelBroadcast => "model-broadcast",
            Phase::InferenceResult => "inference-result",
            Phase::GradientReturn => "gradient-return",
            Phase::ShareExchange => "share-exchange",
            Phase::AggregateReturn => "aggregate-return",
            Phase::ModelReturn => "model-return",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: Endpoint,
    pub to: Endpoint,
    pub elements: usize,
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub calls: u64,
    /// Payload elements processed.
    pub elements: u64,
}

impl OpCount {
    pub fn record(&mut self, elements: usize) {
        self.calls += 1;
        self.elements += elements as u64;
    }
}

/// In-process message log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub messages: Vec<Message>,
}

impl Bus {
    pub fn send(&mut self, from: Endpoint, to: Endpoint, elements: usize, phase: Phase) {
        self.messages.push(Message {
            from,
            to,
            elements,
            phase,
        });
    }

    pub fn count(&self) -> usize {
        self.messages.len()
    }

    pub fn volume(&self) -> u64 {
        self.messages.iter().map(|m| m.elements as u64).sum()
    }

    pub fn count_in(&self, phase: Phase) -> usize {
        self.messages.iter().filter(|m| m.phase == phase).count()
    }

    pub fn volume_in(&self, phase: Phase) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.phase == phase)
            .map(|m| m.elements as u64)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub bus: Bus,
    pub encode_ops: OpCount,
    pub decode_ops: OpCount,
    pub train_ops: OpCount,
    /// Flattened global model at the end of the round.
    pub decoded_model: Tensor,
    /// Loss of the global model on the evaluation batch.
    pub loss: f64,
    /// Classification accuracy, when the loss is a classification loss.
    pub accuracy: Option<f64>,
    /// Relative ∞-norm distance between the decoded model and the plaintext
    /// aggregate of the same round (decentralized schemes only).
    pub aggregation_gap: Option<f64>,
    /// Number of worker results used by the master.
    pub results_used: usize,
}

impl RoundTrace {
    /// Headline metric: accuracy when available, otherwise loss.
    pub fn metric(&self) -> f64 {
        self.accuracy.unwrap_or(self.loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    /// Messages and encodes that happen once, before round 0.
    pub setup: Bus,
    pub setup_encode_ops: OpCount,
    pub rounds: Vec<RoundTrace>,
}

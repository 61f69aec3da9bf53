//! Deterministic in-process simulation of the coded learning schemes.
//!
//! Every transfer goes through a [`Bus`] that records sender, receiver,
//! element count and phase, so the communication cost of a run can be read
//! off its traces and compared against [`expected_cost`].

mod network;
mod schemes;
mod trace;

use serde::{Deserialize, Serialize};

pub use network::{select_fastest, NetworkConfig, StragglerModel};
pub use schemes::{
    run_centralized_reference, run_dlcd_secure_training, run_dldd_secure_aggregation,
    run_dldd_secure_training, run_scheme, run_uncoded_dlcd, run_uncoded_dldd, SchemeData,
};
pub use trace::{Bus, Endpoint, Message, OpCount, Phase, ProtocolRun, RoundTrace};

use crate::error::{invalid, Result};
use crate::interpolation::CodingPlan;
use crate::learners::{Aggregation, Loss};
use crate::privacy::PrivacyConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    DlcdSecureTraining,
    DlddSecureAggregation,
    DlddSecureTraining,
    UncodedDlcd,
    UncodedDldd,
    /// Plaintext single-machine run with the coded DLCD schedule.
    CentralizedReference,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::DlcdSecureTraining,
        SchemeKind::DlddSecureAggregation,
        SchemeKind::DlddSecureTraining,
        SchemeKind::UncodedDlcd,
        SchemeKind::UncodedDldd,
        SchemeKind::CentralizedReference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::DlcdSecureTraining => "dlcd-secure-training",
            SchemeKind::DlddSecureAggregation => "dldd-secure-aggregation",
            SchemeKind::DlddSecureTraining => "dldd-secure-training",
            SchemeKind::UncodedDlcd => "uncoded-dlcd",
            SchemeKind::UncodedDldd => "uncoded-dldd",
            SchemeKind::CentralizedReference => "centralized-reference",
        }
    }

    pub fn is_coded(self) -> bool {
        matches!(
            self,
            SchemeKind::DlcdSecureTraining
                | SchemeKind::DlddSecureAggregation
                | SchemeKind::DlddSecureTraining
        )
    }

    pub fn is_decentralized(self) -> bool {
        matches!(
            self,
            SchemeKind::DlddSecureAggregation
                | SchemeKind::DlddSecureTraining
                | SchemeKind::UncodedDldd
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub plan: CodingPlan,
    /// Only `sigma_n` drives the simulation; the rest feeds the leakage report.
    pub privacy: PrivacyConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_per_round: usize,
    pub rounds: usize,
    pub aggregation: Aggregation,
    pub loss: Loss,
}

impl SchemeConfig {
    pub fn validate(&self, net: &NetworkConfig) -> Result<()> {
        net.validate()?;
        if net.n != self.plan.n {
            return invalid(format!(
                "network has N={} but the plan has N={}",
                net.n, self.plan.n
            ));
        }
        if self.scheme == SchemeKind::DlddSecureTraining && self.plan.k != 1 {
            return invalid(format!(
                "secure training over decentralized data encodes the whole model at one point; K must be 1, got {}",
                self.plan.k
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs_per_round == 0 || self.rounds == 0 {
            return invalid("batch_size, epochs_per_round and rounds must be positive");
        }
        if !(self.privacy.sigma_n >= 0.0 && self.privacy.sigma_n.is_finite()) {
            return invalid(format!(
                "sigma_n must be nonnegative, got {}",
                self.privacy.sigma_n
            ));
        }
        if self.privacy.k != self.plan.k || self.privacy.t != self.plan.t {
            return invalid("privacy config K/T must match the coding plan");
        }
        Ok(())
    }
}

/// Sizes that enter the closed-form costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostInputs {
    pub n: usize,
    pub k: usize,
    /// Model size `W` in elements.
    pub model: usize,
    /// Centralized dataset rows `L`.
    pub samples: usize,
    pub features: usize,
    pub target_width: usize,
    /// Model output width `B`.
    pub outputs: usize,
    pub epochs: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub setup_messages: u64,
    pub setup_elements: u64,
    pub round_messages: u64,
    pub round_elements: u64,
}

/// Closed-form communication cost of one scheme.
pub fn expected_cost(scheme: SchemeKind, c: &CostInputs) -> CostModel {
    let n = c.n as u64;
    let w = c.model as u64;
    let e = c.epochs as u64;
    let coded_w = c.model.div_ceil(c.k) as u64;
    let groups = c.samples.div_ceil(c.k) as u64;
    match scheme {
        SchemeKind::UncodedDlcd => CostModel {
            setup_messages: n,
            setup_elements: (c.samples * (c.features + c.target_width)) as u64,
            round_messages: 2 * n * e,
            round_elements: 2 * n * w * e,
        },
        SchemeKind::UncodedDldd | SchemeKind::DlddSecureTraining => CostModel {
            round_messages: 2 * n,
            round_elements: 2 * n * w,
            ..CostModel::default()
        },
        SchemeKind::DlddSecureAggregation => CostModel {
            round_messages: 2 * n + n * (n - 1),
            round_elements: n * w + (n + n * (n - 1)) * coded_w,
            ..CostModel::default()
        },
        SchemeKind::DlcdSecureTraining => CostModel {
            setup_messages: n,
            setup_elements: n * groups * c.features as u64,
            round_messages: 2 * n * groups * e,
            round_elements: n * groups * (w + c.outputs as u64) * e,
        },
        SchemeKind::CentralizedReference => CostModel::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize, k: usize) -> CostInputs {
        CostInputs {
            n,
            k,
            model: 10,
            samples: 40,
            features: 3,
            target_width: 2,
            outputs: 2,
            epochs: 1,
        }
    }

    #[test]
    fn closed_forms() {
        let agg = expected_cost(SchemeKind::DlddSecureAggregation, &inputs(8, 2));
        assert_eq!(agg.round_messages, 16 + 56);
        assert_eq!(agg.round_elements, 80 + 64 * 5);
        let dlcd = expected_cost(SchemeKind::DlcdSecureTraining, &inputs(8, 4));
        assert_eq!((dlcd.setup_messages, dlcd.round_messages), (8, 2 * 8 * 10));
        assert_eq!(dlcd.round_elements, 8 * 10 * 12);
        let un = expected_cost(SchemeKind::UncodedDldd, &inputs(8, 1));
        assert_eq!((un.round_messages, un.round_elements), (16, 160));
    }
}

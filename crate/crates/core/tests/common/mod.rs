#![allow(dead_code)]

use rand::Rng;

use pbacc::codec::{roundtrip_error, NoiseSpec};
use pbacc::interpolation::CodingPlan;
use pbacc::learners::data::clusters;
use pbacc::learners::{Activation, Aggregation, Batch, Loss, ModelParams};
use pbacc::privacy::PrivacyConfig;
use pbacc::protocols::{
    select_fastest, NetworkConfig, SchemeConfig, SchemeData, SchemeKind, StragglerModel,
};
use pbacc::{SeedTree, Tensor};

pub struct Setup {
    pub cfg: SchemeConfig,
    pub net: NetworkConfig,
    pub data: SchemeData,
    pub init: ModelParams,
}

pub struct ClusterRun {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub sigma_n: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub samples_per_node: usize,
    pub features: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub separation: f64,
    pub identical_nodes: bool,
    pub stragglers: StragglerModel,
    pub seed: u64,
}

impl Default for ClusterRun {
    fn default() -> Self {
        ClusterRun {
            n: 8,
            k: 1,
            t: 0,
            sigma_n: 0.0,
            lr: 0.1,
            batch_size: 10,
            rounds: 10,
            samples_per_node: 20,
            features: 4,
            hidden: 8,
            activation: Activation::Tanh,
            separation: 3.0,
            identical_nodes: false,
            stragglers: StragglerModel::None,
            seed: 1,
        }
    }
}

impl ClusterRun {
    pub fn build(&self, scheme: SchemeKind) -> Setup {
        let plan = CodingPlan::new(self.k, self.t, self.n, 3.0).unwrap();
        let privacy = PrivacyConfig::for_plan(&plan, self.sigma_n, 1.0, self.t.max(1), 1.0);
        let cfg = SchemeConfig {
            scheme,
            plan,
            privacy,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs_per_round: 1,
            rounds: self.rounds,
            aggregation: Aggregation::FedAvg,
            loss: Loss::SoftmaxCrossEntropy,
        };
        let root = SeedTree::new(self.seed);
        let train = clusters(
            self.samples_per_node * self.n,
            self.features,
            self.separation,
            root.child("train", 0).value(),
        )
        .unwrap();
        let per_node: Vec<Batch> = if self.identical_nodes {
            vec![train.slice(0, self.samples_per_node).unwrap(); self.n]
        } else {
            train.partition(self.n).unwrap()
        };
        let eval = clusters(
            2000,
            self.features,
            self.separation,
            root.child("eval", 0).value(),
        )
        .unwrap();
        let init = ModelParams::init(
            &[self.features, self.hidden, 2],
            self.activation,
            root.child("model", 0).value(),
        )
        .unwrap();
        let net = NetworkConfig::new(self.n, self.stragglers, root.child("network", 0).value());
        Setup {
            cfg,
            net,
            data: SchemeData {
                centralized: train,
                per_node,
                eval,
            },
            init,
        }
    }
}

pub fn uniform_input(len: usize, seed: u64) -> Tensor {
    let mut rng = SeedTree::new(seed).child("x", 0).rng();
    Tensor::from_vec((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Mean round-trip error of `f` over `draws` random subsets of size `keep`.
pub fn mean_subset_error(
    f: impl Fn(f64) -> f64 + Copy,
    x: &Tensor,
    plan: &CodingPlan,
    noise: &NoiseSpec,
    keep: usize,
    draws: u64,
) -> f64 {
    let root = SeedTree::new(77);
    let total: f64 = (0..draws)
        .map(|d| {
            let stragglers = if keep == plan.n {
                StragglerModel::None
            } else {
                StragglerModel::RandomDelay {
                    seed: root.child("subset", d).value(),
                    keep_n: keep,
                }
            };
            let subset = select_fastest(&NetworkConfig::new(plan.n, stragglers, 0), 0).unwrap();
            roundtrip_error(x, f, plan, noise, &subset).unwrap()
        })
        .sum();
    total / draws as f64
}

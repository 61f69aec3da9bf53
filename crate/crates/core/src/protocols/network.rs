use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::SeedTree;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StragglerModel {
    #[default]
    None,
    /// The `count` slowest workers of every round are ignored.
    DropSlowest { count: usize },
    /// Exponential delays from `seed`; only the `keep_n` fastest are used.
    RandomDelay { seed: u64, keep_n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    #[serde(default)]
    pub stragglers: StragglerModel,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(n: usize, stragglers: StragglerModel, seed: u64) -> Self {
        NetworkConfig {
            n,
            stragglers,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("network needs at least one node");
        }
        match self.stragglers {
            StragglerModel::None => Ok(()),
            StragglerModel::DropSlowest { count } if count >= self.n => {
                invalid(format!("cannot drop {count} of {} nodes", self.n))
            }
            StragglerModel::RandomDelay { keep_n, .. } if keep_n == 0 || keep_n > self.n => {
                invalid(format!("keep_n={keep_n} must be in 1..={}", self.n))
            }
            _ => Ok(()),
        }
    }

    /// Number of results the master waits for each round.
    pub fn kept(&self) -> usize {
        match self.stragglers {
            StragglerModel::None => self.n,
            StragglerModel::DropSlowest { count } => self.n - count,
            StragglerModel::RandomDelay { keep_n, .. } => keep_n,
        }
    }
}

/// Indices (ascending) of the workers whose results arrive first in `round`.
pub fn select_fastest(net: &NetworkConfig, round: usize) -> Result<Vec<usize>> {
    net.validate()?;
    let seed = match net.stragglers {
        StragglerModel::None => return Ok((0..net.n).collect()),
        StragglerModel::DropSlowest { .. } => net.seed,
        StragglerModel::RandomDelay { seed, .. } => seed,
    };
    let mut rng = SeedTree::new(seed).child("delay", round as u64).rng();
    let delays: Vec<f64> = (0..net.n).map(|_| Exp1.sample(&mut rng)).collect();
    let mut order: Vec<usize> = (0..net.n).collect();
    order.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]).then(a.cmp(&b)));
    order.truncate(net.kept());
    order.sort_unstable();
    Ok(order)
}

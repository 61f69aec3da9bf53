//! Synthetic datasets for the three loss families.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Batch, Loss};
use crate::error::{invalid, Result};
use crate::seed::SeedTree;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Two Gaussian clusters, softmax classifier.
    #[default]
    Clusters,
    /// Low-rank data reconstructed under MSE.
    Autoencoder,
    /// Exponential survival times with independent censoring, Cox loss.
    Survival,
}

impl Task {
    pub fn loss(self) -> Loss {
        match self {
            Task::Clusters => Loss::SoftmaxCrossEntropy,
            Task::Autoencoder => Loss::Mse,
            Task::Survival => Loss::CoxPartialLikelihood,
        }
    }

    pub fn output_width(self, features: usize) -> usize {
        match self {
            Task::Clusters => 2,
            Task::Autoencoder => features,
            Task::Survival => 1,
        }
    }

    pub fn generate(
        self,
        samples: usize,
        features: usize,
        difficulty: f64,
        seed: u64,
    ) -> Result<Batch> {
        match self {
            Task::Clusters => clusters(samples, features, difficulty, seed),
            Task::Autoencoder => {
                low_rank(samples, features, (features / 2).max(1), difficulty, seed)
            }
            Task::Survival => survival(samples, features, seed),
        }
    }
}

fn check(samples: usize, features: usize) -> Result<()> {
    if samples == 0 || features == 0 {
        return invalid(format!(
            "dataset needs samples and features, got {samples}x{features}"
        ));
    }
    Ok(())
}

/// Two unit-variance Gaussian clusters whose means are `separation` apart
/// along the all-ones direction. Targets are one-hot `[samples, 2]`.
pub fn clusters(samples: usize, features: usize, separation: f64, seed: u64) -> Result<Batch> {
    check(samples, features)?;
    let mut rng = SeedTree::new(seed).child("clusters", 0).rng();
    let offset = 0.5 * separation / (features as f64).sqrt();
    let mut x = Vec::with_capacity(samples * features);
    let mut y = Vec::with_capacity(samples * 2);
    for _ in 0..samples {
        let class = rng.random_bool(0.5);
        let sign = if class { 1.0 } else { -1.0 };
        for _ in 0..features {
            let e: f64 = StandardNormal.sample(&mut rng);
            x.push(sign * offset + e);
        }
        y.extend(if class { [0.0, 1.0] } else { [1.0, 0.0] });
    }
    Batch::new(
        Tensor::matrix(samples, features, x)?,
        Tensor::matrix(samples, 2, y)?,
    )
}

/// Rank-`latent` data plus isotropic noise of std `noise`; targets equal inputs.
pub fn low_rank(
    samples: usize,
    features: usize,
    latent: usize,
    noise: f64,
    seed: u64,
) -> Result<Batch> {
    check(samples, features)?;
    let mut rng = SeedTree::new(seed).child("low-rank", 0).rng();
    let scale = 1.0 / (latent as f64).sqrt();
    let basis: Vec<f64> = (0..latent * features)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            scale * e
        })
        .collect();
    let mut x = Vec::with_capacity(samples * features);
    for _ in 0..samples {
        let z: Vec<f64> = (0..latent)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        for f in 0..features {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = (0..latent).map(|l| z[l] * basis[l * features + f]).sum();
            x.push(v + noise * e);
        }
    }
    let x = Tensor::matrix(samples, features, x)?;
    Batch::new(x.clone(), x)
}

/// Proportional-hazards data: hazard `exp(x·w)` with alternating-sign `w`,
/// censoring at rate 0.5. Targets are `[samples, 2]` = (time, event).
pub fn survival(samples: usize, features: usize, seed: u64) -> Result<Batch> {
    check(samples, features)?;
    let mut rng = SeedTree::new(seed).child("survival", 0).rng();
    let w: Vec<f64> = (0..features)
        .map(|f| if f % 2 == 0 { 1.0 } else { -1.0 } / (features as f64).sqrt())
        .collect();
    let censor = Exp::new(0.5).expect("positive rate");
    let mut x = Vec::with_capacity(samples * features);
    let mut y = Vec::with_capacity(samples * 2);
    for _ in 0..samples {
        let row: Vec<f64> = (0..features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let risk: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        let event_time = Exp::new(risk.exp())
            .expect("positive rate")
            .sample(&mut rng);
        let censor_time = censor.sample(&mut rng);
        x.extend(row);
        y.push(event_time.min(censor_time));
        y.push(if event_time <= censor_time { 1.0 } else { 0.0 });
    }
    Batch::new(
        Tensor::matrix(samples, features, x)?,
        Tensor::matrix(samples, 2, y)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        for task in [Task::Clusters, Task::Autoencoder, Task::Survival] {
            let a = task.generate(30, 4, 2.0, 9).unwrap();
            let b = task.generate(30, 4, 2.0, 9).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.inputs.shape(), &[30, 4]);
            assert_eq!(a.targets.shape()[0], 30);
        }
    }

    #[test]
    fn clusters_are_separated() {
        let b = clusters(400, 4, 6.0, 1).unwrap();
        let (x, y) = (b.inputs.data(), b.targets.data());
        let mut correct = 0;
        for r in 0..400 {
            let s: f64 = x[r * 4..r * 4 + 4].iter().sum();
            if (s > 0.0) == (y[2 * r + 1] == 1.0) {
                correct += 1;
            }
        }
        assert!(correct > 390, "{correct}");
    }

    #[test]
    fn survival_has_events_and_censoring() {
        let b = survival(200, 3, 2).unwrap();
        let events = (0..200)
            .filter(|r| b.targets.data()[2 * r + 1] == 1.0)
            .count();
        assert!(events > 50 && events < 190, "{events}");
    }
}

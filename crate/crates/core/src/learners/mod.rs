//! Small differentiable models, losses, SGD and aggregation rules.

mod aggregate;
pub mod data;
mod loss;
mod model;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, Aggregation};
pub use data::Task;
pub use loss::Loss;
pub use model::{Activation, ForwardCache, Layer, ModelParams};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    /// `[rows, features]`.
    pub inputs: Tensor,
    /// `[rows, _]`.
    pub targets: Tensor,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.rank() != 2 || targets.rank() != 2 || inputs.shape()[0] != targets.shape()[0] {
            return invalid(format!(
                "batch inputs {:?} and targets {:?} must be matrices with equal rows",
                inputs.shape(),
                targets.shape()
            ));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn rows(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Batch> {
        if start >= end || end > self.rows() {
            return invalid(format!(
                "batch slice {start}..{end} out of range for {} rows",
                self.rows()
            ));
        }
        let idx: Vec<usize> = (start..end).collect();
        Batch::new(self.inputs.select(&idx)?, self.targets.select(&idx)?)
    }

    /// `parts` contiguous shards whose sizes differ by at most one.
    pub fn partition(&self, parts: usize) -> Result<Vec<Batch>> {
        if parts == 0 || parts > self.rows() {
            return invalid(format!(
                "cannot split {} rows into {parts} shards",
                self.rows()
            ));
        }
        let (base, extra) = (self.rows() / parts, self.rows() % parts);
        let mut start = 0;
        (0..parts)
            .map(|p| {
                let end = start + base + usize::from(p < extra);
                let b = self.slice(start, end);
                start = end;
                b
            })
            .collect()
    }

    /// Element count of inputs plus targets.
    pub fn elements(&self) -> usize {
        self.inputs.len() + self.targets.len()
    }
}

/// Loss and parameter gradients on one batch.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &Batch,
    loss: Loss,
) -> Result<(f64, ModelParams)> {
    let cache = params.forward_cached(&batch.inputs)?;
    let (value, output_grad) = loss.evaluate(&cache.output, &batch.targets)?;
    Ok((value, params.backward(&cache, &output_grad)?))
}

/// Plain mini-batch SGD over `data` in row order, `epochs` passes.
pub fn train_local(
    params: &ModelParams,
    data: &Batch,
    loss: Loss,
    lr: f64,
    batch_size: usize,
    epochs: usize,
) -> Result<ModelParams> {
    if batch_size == 0 {
        return invalid("batch size must be positive");
    }
    let mut p = params.clone();
    for _ in 0..epochs {
        let mut start = 0;
        while start < data.rows() {
            let end = (start + batch_size).min(data.rows());
            let (_, g) = loss_and_grad(&p, &data.slice(start, end)?, loss)?;
            p = p.sgd_step(&g, lr)?;
            start = end;
        }
    }
    Ok(p)
}

/// Fraction of rows whose output argmax equals the target argmax.
pub fn accuracy(output: &Tensor, targets: &Tensor) -> Result<f64> {
    if output.shape() != targets.shape() || output.rank() != 2 {
        return invalid("accuracy: output and targets must be matrices of one shape");
    }
    let (rows, cols) = (output.shape()[0], output.shape()[1]);
    let argmax = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    };
    let hits = (0..rows)
        .filter(|&r| {
            let span = r * cols..(r + 1) * cols;
            argmax(&output.data()[span.clone()]) == argmax(&targets.data()[span])
        })
        .count();
    Ok(hits as f64 / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedTree;
    use rand::Rng;

    /// Central-difference check of every parameter.
    fn max_grad_error(params: &ModelParams, batch: &Batch, loss: Loss) -> f64 {
        let (_, g) = loss_and_grad(params, batch, loss).unwrap();
        let analytic = g.flatten();
        let flat = params.flatten();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus.data_mut()[i] += h;
            let mut minus = flat.clone();
            minus.data_mut()[i] -= h;
            let lp = loss_and_grad(&params.unflatten(&plus).unwrap(), batch, loss)
                .unwrap()
                .0;
            let lm = loss_and_grad(&params.unflatten(&minus).unwrap(), batch, loss)
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let root = SeedTree::new(11);
        let losses = [
            Loss::Mse,
            Loss::SoftmaxCrossEntropy,
            Loss::CoxPartialLikelihood,
        ];
        let acts = [Activation::Tanh, Activation::Identity, Activation::Relu];
        for case in 0..12u64 {
            let mut rng = root.child("case", case).rng();
            let loss = losses[case as usize % 3];
            let act = acts[(case / 3) as usize % 3];
            let (f, hdim, rows) = (
                rng.random_range(1..4),
                rng.random_range(1..5),
                rng.random_range(2..6),
            );
            let out = match loss {
                Loss::CoxPartialLikelihood => 1,
                _ => rng.random_range(1..4),
            };
            let params = ModelParams::init(&[f, hdim, out], act, case).unwrap();
            let x = Tensor::matrix(
                rows,
                f,
                (0..rows * f).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let t = match loss {
                Loss::CoxPartialLikelihood => {
                    let mut t = Vec::new();
                    for r in 0..rows {
                        t.push(rng.random_range(0.1..3.0));
                        t.push(if r == 0 {
                            1.0
                        } else {
                            f64::from(rng.random_bool(0.6))
                        });
                    }
                    Tensor::matrix(rows, 2, t).unwrap()
                }
                _ => Tensor::matrix(
                    rows,
                    out,
                    (0..rows * out)
                        .map(|_| rng.random_range(0.0..1.0))
                        .collect(),
                )
                .unwrap(),
            };
            let err = max_grad_error(&params, &Batch::new(x, t).unwrap(), loss);
            assert!(err <= 1e-5, "case {case} ({loss:?}, {act:?}): {err}");
        }
    }

    #[test]
    fn partition_sizes() {
        let b = Batch::new(
            Tensor::matrix(7, 1, (0..7).map(f64::from).collect()).unwrap(),
            Tensor::zeros(vec![7, 1]),
        )
        .unwrap();
        let parts = b.partition(3).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Batch::rows).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert_eq!(parts[1].inputs.data(), &[3.0, 4.0]);
        assert!(b.partition(8).is_err());
    }

    #[test]
    fn local_training_reduces_loss() {
        let data = data::clusters(64, 3, 3.0, 4).unwrap();
        let p0 = ModelParams::init(&[3, 8, 2], Activation::Tanh, 1).unwrap();
        let p1 = train_local(&p0, &data, Loss::SoftmaxCrossEntropy, 0.1, 8, 5).unwrap();
        let l0 = loss_and_grad(&p0, &data, Loss::SoftmaxCrossEntropy)
            .unwrap()
            .0;
        let l1 = loss_and_grad(&p1, &data, Loss::SoftmaxCrossEntropy)
            .unwrap()
            .0;
        assert!(l1 < l0);
        let acc = accuracy(&p1.forward(&data.inputs).unwrap(), &data.targets).unwrap();
        assert!(acc > 0.8, "{acc}");
    }
}

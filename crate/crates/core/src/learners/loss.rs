//! Losses on raw model outputs, each returning the value and `dL/d output`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Mean over all elements of `(y - t)²`.
    Mse,
    /// Mean over rows of `-Σ t log softmax(y)`; targets are `[batch, classes]`.
    SoftmaxCrossEntropy,
    /// Negative Breslow partial log-likelihood averaged over events. Output
    /// is the `[batch, 1]` risk score, targets are `[batch, 2]` = (time, event).
    CoxPartialLikelihood,
}

impl Loss {
    pub fn evaluate(self, output: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
        if output.rank() != 2 || targets.rank() != 2 || output.shape()[0] != targets.shape()[0] {
            return invalid(format!(
                "output {:?} and targets {:?} must be [batch, _] with equal batch",
                output.shape(),
                targets.shape()
            ));
        }
        match self {
            Loss::Mse => mse(output, targets),
            Loss::SoftmaxCrossEntropy => softmax_ce(output, targets),
            Loss::CoxPartialLikelihood => cox(output, targets),
        }
    }
}

fn mse(output: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if output.shape() != targets.shape() {
        return invalid(format!(
            "mse: shapes {:?} and {:?} differ",
            output.shape(),
            targets.shape()
        ));
    }
    let n = output.len() as f64;
    let diff = output.sub(targets)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.scale(2.0 / n)))
}

fn softmax_ce(output: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if output.shape() != targets.shape() {
        return invalid(format!(
            "cross-entropy: logits {:?} and targets {:?} differ",
            output.shape(),
            targets.shape()
        ));
    }
    let (rows, cols) = (output.shape()[0], output.shape()[1]);
    let (y, t) = (output.data(), targets.data());
    let mut grad = vec![0.0; y.len()];
    let mut loss = 0.0;
    for r in 0..rows {
        let yr = &y[r * cols..(r + 1) * cols];
        let tr = &t[r * cols..(r + 1) * cols];
        let m = yr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = yr.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        let mass: f64 = tr.iter().sum();
        for c in 0..cols {
            loss -= tr[c] * (yr[c] - lse);
            grad[r * cols + c] = ((yr[c] - lse).exp() * mass - tr[c]) / rows as f64;
        }
    }
    Ok((loss / rows as f64, Tensor::matrix(rows, cols, grad)?))
}

fn cox(output: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    let rows = output.shape()[0];
    if output.shape()[1] != 1 || targets.shape()[1] != 2 {
        return invalid(format!(
            "cox: needs [batch, 1] risk scores and [batch, 2] (time, event) targets, got {:?} and {:?}",
            output.shape(),
            targets.shape()
        ));
    }
    let eta = output.data();
    let t = targets.data();
    let time: Vec<f64> = (0..rows).map(|r| t[2 * r]).collect();
    let event: Vec<f64> = (0..rows).map(|r| t[2 * r + 1]).collect();
    if time.iter().any(|v| !v.is_finite()) || event.iter().any(|&e| e != 0.0 && e != 1.0) {
        return invalid("cox: times must be finite and events must be 0 or 1");
    }
    let events = event.iter().filter(|&&e| e == 1.0).count();
    if events == 0 {
        return Ok((0.0, Tensor::zeros(vec![rows, 1])));
    }
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|v| (v - shift).exp()).collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; rows];
    for i in (0..rows).filter(|&i| event[i] == 1.0) {
        let at_risk: Vec<usize> = (0..rows).filter(|&j| time[j] >= time[i]).collect();
        let s: f64 = at_risk.iter().map(|&j| w[j]).sum();
        loss -= eta[i] - (shift + s.ln());
        grad[i] -= 1.0;
        for &j in &at_risk {
            grad[j] += w[j] / s;
        }
    }
    let e = events as f64;
    grad.iter_mut().for_each(|g| *g /= e);
    Ok((loss / e, Tensor::matrix(rows, 1, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_at_target() {
        let y = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (l, g) = Loss::Mse.evaluate(&y, &y).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let y = Tensor::matrix(3, 4, vec![0.7; 12]).unwrap();
        let mut t = vec![0.0; 12];
        t[0] = 1.0;
        t[5] = 1.0;
        t[11] = 1.0;
        let t = Tensor::matrix(3, 4, t).unwrap();
        let (l, _) = Loss::SoftmaxCrossEntropy.evaluate(&y, &t).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cox_two_subjects() {
        // Subject 0 fails first with both at risk; subject 1 is censored.
        let y = Tensor::matrix(2, 1, vec![0.3, -0.2]).unwrap();
        let t = Tensor::matrix(2, 2, vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        let (l, g) = Loss::CoxPartialLikelihood.evaluate(&y, &t).unwrap();
        let expected = -(0.3 - (0.3f64.exp() + (-0.2f64).exp()).ln());
        assert!((l - expected).abs() < 1e-14);
        let p0 = 0.3f64.exp() / (0.3f64.exp() + (-0.2f64).exp());
        assert!((g.data()[0] - (p0 - 1.0)).abs() < 1e-14);
        assert!((g.data()[1] - (1.0 - p0)).abs() < 1e-14);
    }

    #[test]
    fn cox_without_events_is_zero() {
        let y = Tensor::matrix(2, 1, vec![0.3, -0.2]).unwrap();
        let t = Tensor::matrix(2, 2, vec![1.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(Loss::CoxPartialLikelihood.evaluate(&y, &t).unwrap().0, 0.0);
    }

    #[test]
    fn cox_rejects_bad_targets() {
        let y = Tensor::matrix(2, 1, vec![0.3, -0.2]).unwrap();
        let t3 = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        assert!(Loss::CoxPartialLikelihood.evaluate(&y, &t3).is_err());
        let bad = Tensor::matrix(2, 2, vec![1.0, 0.5, 2.0, 0.0]).unwrap();
        assert!(Loss::CoxPartialLikelihood.evaluate(&y, &bad).is_err());
    }
}

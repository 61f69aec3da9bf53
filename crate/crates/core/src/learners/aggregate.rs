use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    FedAvg,
    CoordMedian,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" | "fed-avg" => Ok(Aggregation::FedAvg),
            "median" | "coord-median" => Ok(Aggregation::CoordMedian),
            other => invalid(format!("unknown aggregation rule {other:?}")),
        }
    }
}

/// Combines flattened models. `weights` (FedAvg only) must sum to one;
/// without them every model counts equally. An even number of models takes
/// the mean of the two middle values as the median.
pub fn aggregate(models: &[Tensor], rule: Aggregation, weights: Option<&[f64]>) -> Result<Tensor> {
    let first = match models.first() {
        Some(m) => m,
        None => return invalid("aggregate: no models"),
    };
    if models.iter().any(|m| m.shape() != first.shape()) {
        return invalid("aggregate: models differ in shape");
    }
    match rule {
        Aggregation::FedAvg => {
            let equal = vec![1.0 / models.len() as f64; models.len()];
            let w = match weights {
                Some(w) => {
                    if w.len() != models.len() {
                        return invalid(format!(
                            "aggregate: {} weights for {} models",
                            w.len(),
                            models.len()
                        ));
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return invalid(format!("aggregate: weights sum to {total}, expected 1"));
                    }
                    w
                }
                None => &equal,
            };
            let mut acc = Tensor::zeros(first.shape().to_vec());
            acc.set_coding_axis(first.coding_axis())?;
            for (m, &wi) in models.iter().zip(w) {
                acc.axpy(wi, m)?;
            }
            Ok(acc)
        }
        Aggregation::CoordMedian => {
            if weights.is_some() {
                return invalid("aggregate: the coordinate median takes no weights");
            }
            let n = models.len();
            let mut column = vec![0.0; n];
            let mut out = first.clone();
            for (i, slot) in out.data_mut().iter_mut().enumerate() {
                for (c, m) in column.iter_mut().zip(models) {
                    *c = m.data()[i];
                }
                column.sort_by(f64::total_cmp);
                *slot = if n % 2 == 1 {
                    column[n / 2]
                } else {
                    0.5 * (column[n / 2 - 1] + column[n / 2])
                };
            }
            Ok(out)
        }
    }
}

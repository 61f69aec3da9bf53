//! PBACC encoding of a tensor into `N` shares and Berrut decoding from any
//! subset of returned results.
//!
//! The coding axis is cut into groups of `K` consecutive slices. Slice `k` of
//! every group is attached to data node `α_k`; `T` Gaussian noise tensors are
//! attached to the shifted noise nodes. Share `j` is the rational encoder
//! evaluated at `β_j`, so its coding-axis extent is the number of groups.

use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interpolation::{
    berrut_basis_or_unit, berrut_eval, coincident_node, combine, CodingPlan,
};
use crate::seed::SeedTree;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise scale; each entry has variance `sigma_n² / T`.
    pub sigma_n: f64,
    pub t: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_n: f64, t: usize, seed: u64) -> Self {
        NoiseSpec { sigma_n, t, seed }
    }

    pub fn none() -> Self {
        NoiseSpec {
            sigma_n: 0.0,
            t: 0,
            seed: 0,
        }
    }

    fn draw(&self, shape: &[usize], coding_axis: usize) -> Result<Vec<Tensor>> {
        if self.t == 0 {
            return Ok(Vec::new());
        }
        let std = self.sigma_n / (self.t as f64).sqrt();
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
        let mut rng = SeedTree::new(self.seed).rng();
        let len: usize = shape.iter().product();
        (0..self.t)
            .map(|_| {
                let data = (0..len).map(|_| normal.sample(&mut rng)).collect();
                Tensor::with_axis(shape.to_vec(), data, coding_axis)
            })
            .collect()
    }
}

/// Worker `node_index`'s evaluation of the encoder at its β.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedShare {
    pub node_index: usize,
    pub beta: f64,
    pub payload: Tensor,
}

/// The rational encoder `u(z)` of one tensor: data parts at the data nodes
/// and noise blocks at the noise nodes.
#[derive(Clone, Debug)]
pub struct Encoder {
    alphas: Vec<f64>,
    /// `K` data parts followed by `T` noise blocks, all of one layout.
    payloads: Vec<Tensor>,
    k: usize,
    original_extent: usize,
}

impl Encoder {
    /// Builds the encoder. With `pad` set, a coding axis that is not a
    /// multiple of `K` is zero-padded; otherwise that is an error.
    pub fn build(x: &Tensor, plan: &CodingPlan, noise: &NoiseSpec, pad: bool) -> Result<Self> {
        if noise.t != plan.t {
            return invalid(format!("noise has T={} but plan has T={}", noise.t, plan.t));
        }
        if !(noise.sigma_n >= 0.0 && noise.sigma_n.is_finite()) {
            return invalid(format!(
                "sigma_n must be finite and nonnegative, got {}",
                noise.sigma_n
            ));
        }
        let k = plan.k;
        let extent = x.extent();
        let padded = extent.div_ceil(k) * k;
        let x = if padded != extent {
            if !pad {
                return invalid(format!(
                    "coding-axis extent {extent} is not a multiple of K={k} and padding is disabled"
                ));
            }
            x.pad_to(padded)?
        } else {
            x.clone()
        };
        let mut payloads = x.deinterleave(k)?;
        let block_shape = payloads[0].shape().to_vec();
        payloads.extend(noise.draw(&block_shape, x.coding_axis())?);

        let alphas = plan.alphas();
        for (i, &a) in alphas.iter().enumerate() {
            if coincident_node(a, &alphas[i + 1..]).is_some() {
                return Err(Error::Internal("plan carries coinciding α nodes".into()));
            }
        }
        Ok(Encoder {
            alphas,
            payloads,
            k,
            original_extent: extent,
        })
    }

    /// `u(z)`; exactly the attached payload when `z` is one of the α nodes.
    pub fn eval(&self, z: f64) -> Result<Tensor> {
        berrut_eval(z, &self.alphas, &self.payloads)
    }

    pub fn noise_blocks(&self) -> &[Tensor] {
        &self.payloads[self.k..]
    }

    pub fn data_parts(&self) -> &[Tensor] {
        &self.payloads[..self.k]
    }

    pub fn original_extent(&self) -> usize {
        self.original_extent
    }

    pub fn shares(&self, plan: &CodingPlan) -> Result<Vec<EncodedShare>> {
        plan.betas()
            .iter()
            .enumerate()
            .map(|(node_index, &beta)| {
                let q = berrut_basis_or_unit(beta, &self.alphas)?;
                Ok(EncodedShare {
                    node_index,
                    beta,
                    payload: combine(&q, &self.payloads)?,
                })
            })
            .collect()
    }
}

/// Everything produced by one encode call.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub shares: Vec<EncodedShare>,
    pub noise_blocks: Vec<Tensor>,
    /// Coding-axis extent before padding.
    pub original_extent: usize,
    /// Number of zero slices appended to reach a multiple of `K`.
    pub pad: usize,
}

fn encode_impl(x: &Tensor, plan: &CodingPlan, noise: &NoiseSpec, pad: bool) -> Result<Encoding> {
    let enc = Encoder::build(x, plan, noise, pad)?;
    let shares = enc.shares(plan)?;
    let padded = enc.data_parts()[0].extent() * plan.k;
    Ok(Encoding {
        shares,
        noise_blocks: enc.noise_blocks().to_vec(),
        original_extent: enc.original_extent(),
        pad: padded - enc.original_extent(),
    })
}

/// Encodes `x` into `plan.n` shares. The coding-axis extent must be a multiple of `K`.
pub fn encode(x: &Tensor, plan: &CodingPlan, noise: &NoiseSpec) -> Result<Encoding> {
    encode_impl(x, plan, noise, false)
}

/// Like [`encode`] but zero-pads a short final group.
pub fn encode_padded(x: &Tensor, plan: &CodingPlan, noise: &NoiseSpec) -> Result<Encoding> {
    encode_impl(x, plan, noise, true)
}

/// Decodes worker results `(β, f(u(β)))` back to the `K` data nodes.
///
/// Results are sorted by β descending before the alternating weights are
/// assigned. The output stacks the `K` decoded parts along the coding axis
/// (group-major), i.e. it has extent `groups · K` including any padding.
pub fn decode(results: &[(f64, Tensor)], plan: &CodingPlan) -> Result<Tensor> {
    if results.is_empty() {
        return invalid("decode: no results");
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[b].0.total_cmp(&results[a].0));
    let betas: Vec<f64> = order.iter().map(|&i| results[i].0).collect();
    if betas.iter().any(|b| !b.is_finite()) {
        return invalid("decode: non-finite β");
    }
    for w in betas.windows(2) {
        if coincident_node(w[0], &w[1..2]).is_some() {
            return invalid(format!("decode: duplicate β {}", w[0]));
        }
    }
    let payloads: Vec<&Tensor> = order.iter().map(|&i| &results[i].1).collect();
    if payloads.iter().any(|p| !p.same_layout(payloads[0])) {
        return invalid("decode: result payloads must share one shape");
    }
    let parts = plan
        .data_alphas()
        .iter()
        .map(|&a| berrut_eval(a, &betas, &payloads))
        .collect::<Result<Vec<_>>>()?;
    Tensor::interleave(&parts)
}

/// [`decode`] followed by truncation to the original coding-axis extent.
pub fn decode_to_extent(
    results: &[(f64, Tensor)],
    plan: &CodingPlan,
    extent: usize,
) -> Result<Tensor> {
    decode(results, plan)?.truncate(extent)
}

/// Named pointwise test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointwiseFn {
    Identity,
    Square,
    Relu,
    Tanh,
    /// `2v + 1`
    Affine,
}

impl PointwiseFn {
    pub const ALL: [PointwiseFn; 5] = [
        PointwiseFn::Identity,
        PointwiseFn::Square,
        PointwiseFn::Relu,
        PointwiseFn::Tanh,
        PointwiseFn::Affine,
    ];

    pub fn apply(self, v: f64) -> f64 {
        match self {
            PointwiseFn::Identity => v,
            PointwiseFn::Square => v * v,
            PointwiseFn::Relu => v.max(0.0),
            PointwiseFn::Tanh => v.tanh(),
            PointwiseFn::Affine => 2.0 * v + 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PointwiseFn::Identity => "identity",
            PointwiseFn::Square => "square",
            PointwiseFn::Relu => "relu",
            PointwiseFn::Tanh => "tanh",
            PointwiseFn::Affine => "affine",
        }
    }
}

impl fmt::Display for PointwiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PointwiseFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PointwiseFn::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown function '{s}'")))
    }
}

/// Encode → apply `f` on every share → decode from `subset` → compare with
/// `f` applied directly. Returns `‖decoded − f(x)‖∞ / ‖f(x)‖∞` (absolute
/// error when `f(x)` is identically zero).
pub fn roundtrip_error(
    x: &Tensor,
    f: impl Fn(f64) -> f64,
    plan: &CodingPlan,
    noise: &NoiseSpec,
    subset: &[usize],
) -> Result<f64> {
    if subset.is_empty() {
        return invalid("roundtrip: empty subset");
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= plan.n) {
        return invalid(format!(
            "roundtrip: node index {bad} out of range (N={})",
            plan.n
        ));
    }
    let enc = encode_padded(x, plan, noise)?;
    let results: Vec<(f64, Tensor)> = subset
        .iter()
        .map(|&i| {
            let s = &enc.shares[i];
            (s.beta, s.payload.map(&f))
        })
        .collect();
    let decoded = decode_to_extent(&results, plan, enc.original_extent)?;
    let direct = x.map(&f);
    let err = decoded.max_abs_diff(&direct)?;
    let scale = direct.max_abs();
    Ok(if scale > 0.0 { err / scale } else { err })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, cols: usize) -> Tensor {
        let data = (0..n * cols)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect();
        Tensor::matrix(n, cols, data).unwrap()
    }

    #[test]
    fn k1_without_noise_copies_input_to_every_share() {
        let plan = CodingPlan::bacc(1, 7).unwrap();
        let x = ramp(3, 2);
        let enc = encode(&x, &plan, &NoiseSpec::none()).unwrap();
        assert_eq!(enc.shares.len(), 7);
        for s in &enc.shares {
            assert_eq!(s.payload, x);
        }
    }

    #[test]
    fn share_betas_match_plan() {
        let plan = CodingPlan::new(2, 2, 9, 3.0).unwrap();
        let enc = encode(&ramp(4, 1), &plan, &NoiseSpec::new(1.0, 2, 1)).unwrap();
        for (j, s) in enc.shares.iter().enumerate() {
            assert_eq!(s.node_index, j);
            assert_eq!(s.beta, plan.beta(j));
            assert_eq!(s.payload.shape(), &[2, 1]);
        }
        assert_eq!(enc.noise_blocks.len(), 2);
    }

    #[test]
    fn encoder_interpolates_data_nodes() {
        let plan = CodingPlan::new(2, 0, 4, 3.0).unwrap();
        let x = Tensor::from_vec(vec![0.25, -4.0]);
        let enc = Encoder::build(&x, &plan, &NoiseSpec::none(), false).unwrap();
        assert_eq!(enc.eval(plan.data_alphas()[0]).unwrap().data(), &[0.25]);
        assert_eq!(enc.eval(plan.data_alphas()[1]).unwrap().data(), &[-4.0]);
    }

    #[test]
    fn non_multiple_extent_needs_padding() {
        let plan = CodingPlan::bacc(4, 8).unwrap();
        let x = ramp(6, 2);
        assert!(matches!(
            encode(&x, &plan, &NoiseSpec::none()),
            Err(Error::InvalidArgument(_))
        ));
        let enc = encode_padded(&x, &plan, &NoiseSpec::none()).unwrap();
        assert_eq!(enc.pad, 2);
        assert_eq!(enc.shares[0].payload.extent(), 2);
        let results: Vec<_> = enc
            .shares
            .iter()
            .map(|s| (s.beta, s.payload.clone()))
            .collect();
        let out = decode_to_extent(&results, &plan, enc.original_extent).unwrap();
        assert_eq!(out.shape(), x.shape());
    }

    #[test]
    fn noise_t_must_match_plan() {
        let plan = CodingPlan::new(1, 3, 8, 3.0).unwrap();
        assert!(encode(&ramp(1, 1), &plan, &NoiseSpec::new(1.0, 2, 0)).is_err());
    }

    #[test]
    fn decode_constant_and_single_result() {
        let plan = CodingPlan::bacc(3, 8).unwrap();
        let p = Tensor::from_vec(vec![2.5, -1.0]);
        let results: Vec<_> = [0, 2, 5, 7]
            .iter()
            .map(|&j| (plan.beta(j), p.clone()))
            .collect();
        let out = decode(&results, &plan).unwrap();
        assert_eq!(out.extent(), 6);
        for v in out.deinterleave(3).unwrap() {
            assert!(v.max_abs_diff(&p).unwrap() < 1e-12);
        }
        let single = decode(&[(plan.beta(4), p.clone())], &plan).unwrap();
        for v in single.deinterleave(3).unwrap() {
            assert_eq!(v, p);
        }
    }

    #[test]
    fn decode_rejects_duplicates_and_empty() {
        let plan = CodingPlan::bacc(2, 4).unwrap();
        let p = Tensor::from_vec(vec![1.0]);
        assert!(decode(&[], &plan).is_err());
        let dup = vec![(plan.beta(1), p.clone()), (plan.beta(1), p.clone())];
        assert!(matches!(
            decode(&dup, &plan),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn decode_is_order_independent() {
        let plan = CodingPlan::new(2, 1, 10, 3.0).unwrap();
        let enc = encode(&ramp(4, 3), &plan, &NoiseSpec::new(0.5, 1, 3)).unwrap();
        let mut results: Vec<_> = enc
            .shares
            .iter()
            .map(|s| (s.beta, s.payload.map(|v| v.tanh())))
            .collect();
        let a = decode(&results, &plan).unwrap();
        results.reverse();
        results.swap(1, 6);
        assert_eq!(decode(&results, &plan).unwrap(), a);
    }

    #[test]
    fn identical_seed_identical_shares() {
        let plan = CodingPlan::new(2, 3, 12, 3.0).unwrap();
        let x = ramp(8, 2);
        let a = encode(&x, &plan, &NoiseSpec::new(2.0, 3, 99)).unwrap();
        let b = encode(&x, &plan, &NoiseSpec::new(2.0, 3, 99)).unwrap();
        let c = encode(&x, &plan, &NoiseSpec::new(2.0, 3, 100)).unwrap();
        for (s, t) in a.shares.iter().zip(&b.shares) {
            assert_eq!(s.payload.to_bytes(), t.payload.to_bytes());
        }
        assert_ne!(a.shares[0].payload, c.shares[0].payload);
    }

    #[test]
    fn roundtrip_identity_k1_is_exact() {
        let plan = CodingPlan::bacc(1, 6).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let e = roundtrip_error(&ramp(5, 2), |v| v, &plan, &NoiseSpec::none(), &all).unwrap();
        assert!(e <= 1e-12);
    }

    #[test]
    fn roundtrip_rejects_bad_subsets() {
        let plan = CodingPlan::bacc(1, 6).unwrap();
        assert!(roundtrip_error(&ramp(1, 1), |v| v, &plan, &NoiseSpec::none(), &[]).is_err());
        assert!(roundtrip_error(&ramp(1, 1), |v| v, &plan, &NoiseSpec::none(), &[6]).is_err());
    }

    #[test]
    fn pointwise_names_parse() {
        for f in PointwiseFn::ALL {
            assert_eq!(f.name().parse::<PointwiseFn>().unwrap(), f);
        }
        assert!("cube".parse::<PointwiseFn>().is_err());
    }
}

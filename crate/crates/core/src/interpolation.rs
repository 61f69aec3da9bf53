//! Chebyshev node families and the Berrut barycentric rational interpolant.
//!
//! The Berrut interpolant over nodes `x_0..x_{m-1}` with payloads `P_i` is
//!
//! ```text
//!            Σ_i  (-1)^i / (z - x_i) · P_i
//!   r(z) = ---------------------------------
//!            Σ_j  (-1)^j / (z - x_j)
//! ```
//!
//! It interpolates (`r(x_i) = P_i`), reproduces constants and has no real poles
//! when the nodes are sorted. The same formula is used to encode (data and noise
//! payloads at the α nodes, evaluated at the β nodes) and to decode (worker
//! results at the returned β nodes, evaluated at the data α nodes).

use std::borrow::Borrow;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Relative distance under which an evaluation point is treated as sitting on a node.
pub const COINCIDENCE_GUARD: f64 = 1e-12;

/// Shift applied to an encoder node that collides with an interpolation node.
pub const BETA_PERTURBATION: f64 = 1e-9;

/// Default centre `b` of the shifted noise nodes.
///
/// Puts the noise cluster `(b - 1, b + 1)` strictly outside the data interval `[-1, 1]`.
pub const DEFAULT_NOISE_SHIFT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    /// `cos((2j+1)π / 2K)`
    ChebyshevFirst,
    /// `cos(jπ / (N-1))`
    ChebyshevSecond,
    /// `b + cos((2j+1)π / 2T)`
    ShiftedChebyshevFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFamily {
    pub kind: NodeKind,
    pub count: usize,
    pub shift: f64,
    pub values: Vec<f64>,
}

pub fn make_nodes(kind: NodeKind, count: usize, shift: f64) -> Result<NodeFamily> {
    if count == 0 {
        return invalid("node count must be at least 1");
    }
    let values: Vec<f64> = match kind {
        NodeKind::ChebyshevFirst => (0..count)
            .map(|j| ((2 * j + 1) as f64 * PI / (2 * count) as f64).cos())
            .collect(),
        NodeKind::ShiftedChebyshevFirst => (0..count)
            .map(|j| shift + ((2 * j + 1) as f64 * PI / (2 * count) as f64).cos())
            .collect(),
        NodeKind::ChebyshevSecond => {
            if count < 2 {
                return invalid("second-kind Chebyshev nodes need count >= 2");
            }
            (0..count)
                .map(|j| (j as f64 * PI / (count - 1) as f64).cos())
                .collect()
        }
    };
    let shift = if kind == NodeKind::ShiftedChebyshevFirst {
        shift
    } else {
        0.0
    };
    Ok(NodeFamily {
        kind,
        count,
        shift,
        values,
    })
}

#[inline]
fn coincides(z: f64, node: f64) -> bool {
    (z - node).abs() < COINCIDENCE_GUARD * node.abs().max(1.0)
}

/// Index of the first node within the coincidence guard of `z`.
pub fn coincident_node(z: f64, nodes: &[f64]) -> Option<usize> {
    nodes.iter().position(|&x| coincides(z, x))
}

/// Denominator `Σ_j (-1)^j / (z - x_j)` of the Berrut interpolant.
pub fn berrut_denominator(z: f64, nodes: &[f64]) -> f64 {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &x)| alternating(j) / (z - x))
        .sum()
}

#[inline]
fn alternating(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Berrut cardinal functions `q_i(z)` for all nodes.
///
/// Returns [`Error::NodeCoincidence`] when `z` sits on a node; callers take the
/// interpolation limit (`q_i = δ_{ik}`) themselves.
pub fn berrut_basis(z: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return invalid("berrut_basis: empty node list");
    }
    if let Some(index) = coincident_node(z, nodes) {
        return Err(Error::NodeCoincidence { index });
    }
    let w: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| alternating(i) / (z - x))
        .collect();
    let denom: f64 = w.iter().sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Internal(format!(
            "degenerate Berrut denominator {denom} at z={z}"
        )));
    }
    Ok(w.into_iter().map(|wi| wi / denom).collect())
}

/// Like [`berrut_basis`] but resolves a coincidence to the unit vector.
pub fn berrut_basis_or_unit(z: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    match berrut_basis(z, nodes) {
        Err(Error::NodeCoincidence { index }) => {
            let mut e = vec![0.0; nodes.len()];
            e[index] = 1.0;
            Ok(e)
        }
        other => other,
    }
}

/// Evaluates `Σ_i q_i(z) · payloads[i]`; returns the payload itself when `z`
/// sits on a node.
pub fn berrut_eval<P: Borrow<Tensor>>(z: f64, nodes: &[f64], payloads: &[P]) -> Result<Tensor> {
    if nodes.is_empty() || nodes.len() != payloads.len() {
        return invalid(format!(
            "berrut_eval: {} nodes vs {} payloads",
            nodes.len(),
            payloads.len()
        ));
    }
    let first = payloads[0].borrow();
    if payloads.iter().any(|p| !p.borrow().same_layout(first)) {
        return invalid("berrut_eval: payloads must share one shape");
    }
    if let Some(k) = coincident_node(z, nodes) {
        return Ok(payloads[k].borrow().clone());
    }
    let q = berrut_basis(z, nodes)?;
    combine(&q, payloads)
}

/// `Σ_i coeffs[i] · payloads[i]` for payloads of one layout.
pub(crate) fn combine<P: Borrow<Tensor>>(coeffs: &[f64], payloads: &[P]) -> Result<Tensor> {
    debug_assert_eq!(coeffs.len(), payloads.len());
    let first = payloads[0].borrow();
    let mut acc = vec![0.0; first.len()];
    for (c, p) in coeffs.iter().zip(payloads) {
        for (a, v) in acc.iter_mut().zip(p.borrow().data()) {
            *a += c * v;
        }
    }
    Tensor::with_axis(first.shape().to_vec(), acc, first.coding_axis())
}

/// A β node moved off an α node at plan construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPerturbation {
    pub node_index: usize,
    pub original: f64,
    pub perturbed: f64,
}

/// All interpolation points of one PBACC configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodingPlan {
    pub k: usize,
    pub t: usize,
    pub n: usize,
    pub data_nodes: NodeFamily,
    /// `None` when `t == 0` (plain BACC).
    pub noise_nodes: Option<NodeFamily>,
    pub encoder_nodes: NodeFamily,
    /// Encoder points actually used, after any collision perturbation.
    betas: Vec<f64>,
    pub perturbations: Vec<BetaPerturbation>,
}

impl CodingPlan {
    pub fn new(k: usize, t: usize, n: usize, shift: f64) -> Result<Self> {
        if k == 0 {
            return invalid("K must be at least 1");
        }
        if n < 2 {
            return invalid("N must be at least 2");
        }
        if !shift.is_finite() {
            return invalid("noise shift must be finite");
        }
        let data_nodes = make_nodes(NodeKind::ChebyshevFirst, k, 0.0)?;
        let noise_nodes = if t > 0 {
            Some(make_nodes(NodeKind::ShiftedChebyshevFirst, t, shift)?)
        } else {
            None
        };
        let encoder_nodes = make_nodes(NodeKind::ChebyshevSecond, n, 0.0)?;

        let alphas: Vec<f64> = data_nodes
            .values
            .iter()
            .chain(noise_nodes.iter().flat_map(|f| f.values.iter()))
            .copied()
            .collect();
        for (i, &a) in alphas.iter().enumerate() {
            if let Some(j) = coincident_node(a, &alphas[i + 1..]) {
                return invalid(format!(
                    "interpolation nodes {i} and {} coincide ({a}); choose another noise shift",
                    i + 1 + j
                ));
            }
        }

        let mut betas = encoder_nodes.values.clone();
        let mut perturbations = Vec::new();
        for (j, beta) in betas.iter_mut().enumerate() {
            let original = *beta;
            let mut tries = 0;
            while coincident_node(*beta, &alphas).is_some() {
                *beta += BETA_PERTURBATION;
                tries += 1;
                if tries > 16 {
                    return Err(Error::Internal(format!(
                        "cannot move β_{j} off the α nodes"
                    )));
                }
            }
            if tries > 0 {
                perturbations.push(BetaPerturbation {
                    node_index: j,
                    original,
                    perturbed: *beta,
                });
            }
        }

        Ok(CodingPlan {
            k,
            t,
            n,
            data_nodes,
            noise_nodes,
            encoder_nodes,
            betas,
            perturbations,
        })
    }

    /// Plain BACC plan (no noise).
    pub fn bacc(k: usize, n: usize) -> Result<Self> {
        Self::new(k, 0, n, DEFAULT_NOISE_SHIFT)
    }

    pub fn shift(&self) -> f64 {
        self.noise_nodes
            .as_ref()
            .map_or(DEFAULT_NOISE_SHIFT, |f| f.shift)
    }

    pub fn data_alphas(&self) -> &[f64] {
        &self.data_nodes.values
    }

    /// Data α's followed by noise α's (`K + T` values).
    pub fn alphas(&self) -> Vec<f64> {
        let mut a = self.data_nodes.values.clone();
        if let Some(noise) = &self.noise_nodes {
            a.extend_from_slice(&noise.values);
        }
        a
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, node: usize) -> f64 {
        self.betas[node]
    }
}

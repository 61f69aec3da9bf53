//! Worst-case information leakage of a PBACC plan against `c` colluding workers.
//!
//! The colluders see `Y = Σ_c X + Σ̃_c R`, where row `h` of `[Σ_c | Σ̃_c]` holds
//! the encoder's Berrut basis `q_0..q_{K+T-1}` evaluated at the colluder's β.
//! With `|X_i| ≤ s` and `R_i ~ N(0, σ_n²/T)` this is an AWGN MIMO channel with
//! `K` inputs and `c` outputs, and the mutual information is bounded by its
//! capacity under uniform power:
//!
//! ```text
//!   I ≤ log2 det( I_c + (s² T / σ_n²) (Σ̃_c Σ̃_cᵀ)⁻¹ Σ_c Σ_cᵀ )
//! ```
//!
//! `I_L` is the maximum over colluder sets and `i_L = I_L / K`.
//!
//! Row `h` of `[Σ_c | Σ̃_c]` is `(-1)^i / (β_h − α_i)` up to a per-row factor,
//! which cancels in the bound, so both blocks are Cauchy matrices. The noise
//! Gram `Σ̃_c Σ̃_cᵀ` is far too ill-conditioned to form or factor in floating
//! point (the noise nodes sit away from every β, so the noise rows are
//! nearly collinear). Instead the Cauchy block is eliminated with complete
//! pivoting over the noise columns while the pivots and multipliers are
//! updated through the node differences alone, which keeps every computed
//! entry accurate to a few ulps. With `P [Σ̃ | Σ] = L D [U_n | U_d]` the
//! bound becomes
//!
//! ```text
//!   log2 det( I_K + ρ² U_dᵀ (U_n U_nᵀ)⁻¹ U_d ),   ρ = s √T / σ_n,
//! ```
//!
//! where `U_n` is unit triangular on its pivot columns with entries bounded
//! by one. Only `ρ` depends on `s` and `σ_n`, so the bound is monotone in
//! both.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::interpolation::{berrut_basis_or_unit, CodingPlan};
use crate::seed::SeedTree;

/// Largest number of subsets an exhaustive search may enumerate.
pub const EXHAUSTIVE_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Full `c × c` noise covariance `(σ_n²/T) Σ̃_c Σ̃_cᵀ`.
    #[default]
    Correlated,
    /// Noise covariance replaced by its diagonal.
    Uncorrelated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub k: usize,
    pub t: usize,
    pub sigma_n: f64,
    /// Input amplitude bound, `|X_i| ≤ s`.
    pub s: f64,
    /// Number of colluding workers.
    pub c: usize,
    /// Target leakage in bits per element.
    pub epsilon: f64,
    #[serde(default)]
    pub noise_model: NoiseModel,
}

impl PrivacyConfig {
    pub fn for_plan(plan: &CodingPlan, sigma_n: f64, s: f64, c: usize, epsilon: f64) -> Self {
        PrivacyConfig {
            k: plan.k,
            t: plan.t,
            sigma_n,
            s,
            c,
            epsilon,
            noise_model: NoiseModel::Correlated,
        }
    }

    pub fn validate(&self, plan: &CodingPlan) -> Result<()> {
        if self.k != plan.k || self.t != plan.t {
            return invalid(format!(
                "privacy config (K={}, T={}) does not match plan (K={}, T={})",
                self.k, self.t, plan.k, plan.t
            ));
        }
        if self.t == 0 {
            return invalid("the leakage bound needs T >= 1 noise blocks");
        }
        if self.c == 0 || self.c > plan.n {
            return invalid(format!(
                "colluder count c={} must be in 1..={}",
                self.c, plan.n
            ));
        }
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return invalid(format!("sigma_n must be positive, got {}", self.sigma_n));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return invalid(format!("s must be positive, got {}", self.s));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }

    /// `s √T / σ_n`: the only way `s`, `T` and `σ_n` enter the bound.
    pub fn snr_ratio(&self) -> f64 {
        self.s * (self.t as f64).sqrt() / self.sigma_n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SearchStrategy {
    Exhaustive,
    Greedy,
    RandomSampled { draws: usize, seed: u64 },
}

impl SearchStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SearchStrategy::Exhaustive => "exhaustive",
            SearchStrategy::Greedy => "greedy",
            SearchStrategy::RandomSampled { .. } => "random-sampled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Bits per data element.
    #[serde(rename = "i_L")]
    pub i_l: f64,
    /// Bits for the whole worst colluder set.
    #[serde(rename = "I_L")]
    pub total: f64,
    pub worst_subset: Vec<usize>,
    pub strategy: SearchStrategy,
    pub subsets_evaluated: u64,
}

impl LeakageReport {
    pub fn satisfies(&self, epsilon: f64) -> bool {
        self.i_l <= epsilon
    }
}

fn check_subset(subset: &[usize], plan: &CodingPlan) -> Result<()> {
    if subset.is_empty() {
        return invalid("empty colluder set");
    }
    for (i, &a) in subset.iter().enumerate() {
        if a >= plan.n {
            return invalid(format!("node index {a} out of range (N={})", plan.n));
        }
        if subset[i + 1..].contains(&a) {
            return invalid(format!("node index {a} repeated in colluder set"));
        }
    }
    Ok(())
}

/// `(Σ_c, Σ̃_c)`: the data and noise columns of the encoder basis at the
/// colluders' β's, `c × K` and `c × T`.
pub fn build_sigmas(subset: &[usize], plan: &CodingPlan) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_subset(subset, plan)?;
    let alphas = plan.alphas();
    let (k, t, c) = (plan.k, plan.t, subset.len());
    let mut data = DMatrix::zeros(c, k);
    let mut noise = DMatrix::zeros(c, t);
    for (h, &node) in subset.iter().enumerate() {
        let q = berrut_basis_or_unit(plan.beta(node), &alphas)?;
        for i in 0..k {
            data[(h, i)] = q[i];
        }
        for i in 0..t {
            noise[(h, i)] = q[k + i];
        }
    }
    Ok((data, noise))
}

/// Leakage bound in bits for one colluder set; `+∞` when the noise seen by
/// the set is degenerate (e.g. `c > T`).
pub fn leakage_for_subset(subset: &[usize], plan: &CodingPlan, cfg: &PrivacyConfig) -> Result<f64> {
    cfg.validate(plan)?;
    check_subset(subset, plan)?;
    Ok(SubsetScorer::new(plan, cfg)?.score(subset))
}

/// `ln det(I_K + ρ² Mᵀ M)` from the eigenvalues of `Mᵀ M`, so tiny values
/// keep their relative accuracy.
fn ln_det_identity_plus(m: &DMatrix<f64>, rho: f64) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let gram = m.transpose() * m * (rho * rho);
    gram.symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0).ln_1p())
        .sum()
}

/// Correlated-noise bound in nats for colluders at `betas`. Columns of the
/// Cauchy block are the noise nodes followed by the data nodes.
fn correlated_nats(betas: &[f64], noise_alphas: &[f64], data_alphas: &[f64], rho: f64) -> f64 {
    let (c, t, k) = (betas.len(), noise_alphas.len(), data_alphas.len());
    if t < c {
        return f64::INFINITY;
    }
    let y: Vec<f64> = noise_alphas.iter().chain(data_alphas).copied().collect();
    if betas.iter().any(|&b| y.contains(&b)) {
        return f64::INFINITY;
    }
    // Current Schur complement: entry (h, i) = u_h w_i / (β_h − y_i).
    let mut u = vec![1.0; c];
    let mut w = vec![1.0; t + k];
    let mut row_free = vec![true; c];
    let mut col_free = vec![true; t + k];
    let mut un = DMatrix::zeros(c, t);
    let mut ud = DMatrix::zeros(c, k);
    for step in 0..c {
        let mut pivot = (0.0, 0, 0);
        for h in (0..c).filter(|&h| row_free[h]) {
            for i in (0..t).filter(|&i| col_free[i]) {
                let v = (u[h] * w[i] / (betas[h] - y[i])).abs();
                if v > pivot.0 {
                    pivot = (v, h, i);
                }
            }
        }
        let (size, p, q) = pivot;
        if !(size > 0.0 && size.is_finite()) {
            return f64::INFINITY;
        }
        let xp = betas[p];
        for i in (0..t + k).filter(|&i| col_free[i]) {
            let entry = if i == q {
                1.0
            } else {
                w[i] * (xp - y[q]) / (w[q] * (xp - y[i]))
            };
            if i < t {
                un[(step, i)] = entry;
            } else {
                ud[(step, i - t)] = entry;
            }
        }
        row_free[p] = false;
        col_free[q] = false;
        for h in (0..c).filter(|&h| row_free[h]) {
            u[h] *= (betas[h] - xp) / (betas[h] - y[q]);
        }
        for i in (0..t + k).filter(|&i| col_free[i]) {
            w[i] *= (y[q] - y[i]) / (xp - y[i]);
        }
    }
    let r = un.transpose().qr().r();
    match r.transpose().solve_lower_triangular(&ud) {
        Some(m) => ln_det_identity_plus(&m, rho),
        None => f64::INFINITY,
    }
}

/// Diagonal-noise bound in nats from the normalized basis rows.
fn uncorrelated_nats(data: &DMatrix<f64>, noise: &DMatrix<f64>, rho: f64) -> f64 {
    let mut m = data.clone();
    for h in 0..m.nrows() {
        let norm = noise.row(h).norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        m.row_mut(h).unscale_mut(norm);
    }
    ln_det_identity_plus(&m, rho)
}

/// Evaluates subsets against one plan without rebuilding basis rows.
struct SubsetScorer {
    betas: Vec<f64>,
    data_alphas: Vec<f64>,
    noise_alphas: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rho: f64,
    model: NoiseModel,
    evaluated: u64,
}

impl SubsetScorer {
    fn new(plan: &CodingPlan, cfg: &PrivacyConfig) -> Result<Self> {
        let alphas = plan.alphas();
        let rows = match cfg.noise_model {
            NoiseModel::Correlated => Vec::new(),
            NoiseModel::Uncorrelated => plan
                .betas()
                .iter()
                .map(|&b| berrut_basis_or_unit(b, &alphas))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(SubsetScorer {
            betas: plan.betas().to_vec(),
            data_alphas: alphas[..plan.k].to_vec(),
            noise_alphas: alphas[plan.k..].to_vec(),
            rows,
            rho: cfg.snr_ratio(),
            model: cfg.noise_model,
            evaluated: 0,
        })
    }

    /// Bits leaked to `subset`.
    fn score(&mut self, subset: &[usize]) -> f64 {
        self.evaluated += 1;
        let nats = match self.model {
            NoiseModel::Correlated => {
                let betas: Vec<f64> = subset.iter().map(|&j| self.betas[j]).collect();
                correlated_nats(&betas, &self.noise_alphas, &self.data_alphas, self.rho)
            }
            NoiseModel::Uncorrelated => {
                let (c, k, t) = (
                    subset.len(),
                    self.data_alphas.len(),
                    self.noise_alphas.len(),
                );
                let data = DMatrix::from_fn(c, k, |h, i| self.rows[subset[h]][i]);
                let noise = DMatrix::from_fn(c, t, |h, i| self.rows[subset[h]][k + i]);
                uncorrelated_nats(&data, &noise, self.rho)
            }
        };
        if nats.is_finite() {
            nats / std::f64::consts::LN_2
        } else {
            f64::INFINITY
        }
    }
}

/// `a` beats `b` if it leaks more, or equally much with a lexicographically
/// smaller set.
fn better(a: (f64, &[usize]), b: (f64, &[usize])) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// Maximizes the leakage bound over colluder sets of size `cfg.c`.
pub fn worst_case_leakage(
    plan: &CodingPlan,
    cfg: &PrivacyConfig,
    strategy: SearchStrategy,
) -> Result<LeakageReport> {
    cfg.validate(plan)?;
    let mut scorer = SubsetScorer::new(plan, cfg)?;
    let (n, c) = (plan.n, cfg.c);
    let (total, worst) = match strategy {
        SearchStrategy::Exhaustive => {
            let count = binomial(n as u64, c as u64).unwrap_or(u64::MAX);
            if count > EXHAUSTIVE_BUDGET {
                return invalid(format!(
                    "exhaustive search over C({n},{c}) = {count} subsets exceeds the budget of \
                     {EXHAUSTIVE_BUDGET}; use the greedy strategy"
                ));
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut current: Vec<usize> = (0..c).collect();
            loop {
                let v = scorer.score(&current);
                if best
                    .as_ref()
                    .is_none_or(|(bv, bs)| better((v, &current), (*bv, bs)))
                {
                    best = Some((v, current.clone()));
                }
                if !next_combination(&mut current, n) {
                    break;
                }
            }
            best.expect("at least one subset")
        }
        SearchStrategy::Greedy => {
            let mut chosen: Vec<usize> = Vec::with_capacity(c);
            let mut value = 0.0;
            for _ in 0..c {
                let mut step: Option<(f64, usize)> = None;
                for j in (0..n).filter(|j| !chosen.contains(j)) {
                    let mut trial = chosen.clone();
                    trial.push(j);
                    let v = scorer.score(&trial);
                    if step.is_none_or(|(bv, _)| v > bv) {
                        step = Some((v, j));
                    }
                }
                let (v, j) = step.expect("c <= N leaves a candidate");
                chosen.push(j);
                value = v;
            }
            chosen.sort_unstable();
            (value, chosen)
        }
        SearchStrategy::RandomSampled { draws, seed } => {
            if draws == 0 {
                return invalid("random-sampled search needs at least one draw");
            }
            let mut rng = SeedTree::new(seed).rng();
            let mut best: Option<(f64, Vec<usize>)> = None;
            for _ in 0..draws {
                let mut s = sample(&mut rng, n, c).into_vec();
                s.sort_unstable();
                let v = scorer.score(&s);
                if best
                    .as_ref()
                    .is_none_or(|(bv, bs)| better((v, &s), (*bv, bs)))
                {
                    best = Some((v, s));
                }
            }
            best.expect("at least one draw")
        }
    };
    Ok(LeakageReport {
        i_l: total / plan.k as f64,
        total,
        worst_subset: worst,
        strategy,
        subsets_evaluated: scorer.evaluated,
    })
}

/// Advances a sorted combination of `0..n` in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let c = comb.len();
    let mut i = c;
    while i > 0 {
        i -= 1;
        if comb[i] < n - c + i {
            comb[i] += 1;
            for j in i + 1..c {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Largest amplitude bound `s` for which the worst-case `i_L` stays within
/// `cfg.epsilon`, found by bisection on `log2 s`. Returns 0 when no positive
/// amplitude qualifies (degenerate noise).
pub fn max_amplitude_within(
    plan: &CodingPlan,
    cfg: &PrivacyConfig,
    strategy: SearchStrategy,
) -> Result<f64> {
    cfg.validate(plan)?;
    let leak = |s: f64| -> Result<f64> {
        let mut probe = cfg.clone();
        probe.s = s;
        Ok(worst_case_leakage(plan, &probe, strategy)?.i_l)
    };
    let mut lo_exp = cfg.s.log2();
    let mut hi_exp = lo_exp;
    if leak(cfg.s)? <= cfg.epsilon {
        // Grow until the bound breaks.
        loop {
            hi_exp += 4.0;
            if hi_exp > 1000.0 {
                return Ok(f64::INFINITY);
            }
            if leak(hi_exp.exp2())? > cfg.epsilon {
                break;
            }
            lo_exp = hi_exp;
        }
    } else {
        loop {
            lo_exp -= 4.0;
            if lo_exp < -1000.0 {
                return Ok(0.0);
            }
            if leak(lo_exp.exp2())? <= cfg.epsilon {
                break;
            }
            hi_exp = lo_exp;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo_exp + hi_exp);
        if leak(mid.exp2())? <= cfg.epsilon {
            lo_exp = mid;
        } else {
            hi_exp = mid;
        }
    }
    Ok(lo_exp.exp2())
}

//! Exact rational re-evaluation of basis, interpolant, encoder shares and
//! leakage determinants, taking the f64 nodes as exact inputs.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use pbacc::codec::{encode, NoiseSpec};
use pbacc::interpolation::{berrut_basis, berrut_eval, make_nodes, CodingPlan, NodeKind};
use pbacc::privacy::{build_sigmas, leakage_for_subset, PrivacyConfig};
use pbacc::Tensor;

type Q = BigRational;

fn q(x: f64) -> Q {
    Q::from_float(x).expect("finite")
}

fn f(x: &Q) -> f64 {
    x.to_f64().expect("representable")
}

fn basis(z: &Q, nodes: &[Q]) -> Vec<Q> {
    let terms: Vec<Q> = nodes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let sign = if i % 2 == 0 { Q::one() } else { -Q::one() };
            sign / (z - a)
        })
        .collect();
    let den: Q = terms.iter().fold(Q::zero(), |acc, t| acc + t);
    terms.into_iter().map(|t| t / &den).collect()
}

fn det(mut m: Vec<Vec<Q>>) -> Q {
    let n = m.len();
    let mut d = Q::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return Q::zero();
        };
        if p != col {
            m.swap(p, col);
            d = -d;
        }
        let top = m[col].clone();
        d *= &top[col];
        for row in m.iter_mut().skip(col + 1) {
            if row[col].is_zero() {
                continue;
            }
            let factor = &row[col] / &top[col];
            for (x, v) in row.iter_mut().zip(&top).skip(col) {
                *x -= &factor * v;
            }
        }
    }
    d
}

fn gram(rows: &[Vec<Q>]) -> Vec<Vec<Q>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y))
                .collect()
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn basis_matches_exact_evaluation() {
    let nodes = make_nodes(NodeKind::ChebyshevFirst, 3, 0.0).unwrap().values;
    let got = berrut_basis(0.3, &nodes).unwrap();
    let exact = basis(&q(0.3), &nodes.iter().map(|&a| q(a)).collect::<Vec<_>>());
    let sum: Q = exact.iter().fold(Q::zero(), |acc, t| acc + t);
    assert_eq!(sum, Q::one());
    for (g, e) in got.iter().zip(&exact) {
        assert!(rel(*g, f(e)) <= 1e-14, "{g} vs {}", f(e));
    }
}

#[test]
fn interpolant_matches_exact_evaluation() {
    let nodes = make_nodes(NodeKind::ChebyshevFirst, 4, 0.0).unwrap().values;
    let payloads: Vec<Tensor> = (1..=4)
        .map(|v| Tensor::from_vec(vec![f64::from(v)]))
        .collect();
    let got = berrut_eval(0.1, &nodes, &payloads).unwrap().data()[0];
    let b = basis(&q(0.1), &nodes.iter().map(|&a| q(a)).collect::<Vec<_>>());
    let exact = b.iter().enumerate().fold(Q::zero(), |acc, (i, w)| {
        acc + w * Q::from_integer(BigInt::from(i + 1))
    });
    assert!(rel(got, f(&exact)) <= 1e-12, "{got} vs {}", f(&exact));
}

#[test]
fn encoder_shares_match_exact_evaluation() {
    let plan = CodingPlan::new(2, 2, 8, 3.0).unwrap();
    let x = Tensor::from_vec(vec![1.0, 2.0]);
    let enc = encode(&x, &plan, &NoiseSpec::new(1.0, 2, 7)).unwrap();
    let alphas: Vec<Q> = plan.alphas().iter().map(|&a| q(a)).collect();
    let weights: Vec<Q> = [1.0, 2.0]
        .iter()
        .copied()
        .chain(enc.noise_blocks.iter().map(|t| t.data()[0]))
        .map(q)
        .collect();
    for share in &enc.shares {
        let b = basis(&q(share.beta), &alphas);
        let exact = b
            .iter()
            .zip(&weights)
            .fold(Q::zero(), |acc, (w, v)| acc + w * v);
        let got = share.payload.data()[0];
        assert!(
            rel(got, f(&exact)) <= 1e-12,
            "node {}: {got} vs {}",
            share.node_index,
            f(&exact)
        );
    }
}

#[test]
fn sigma_matrices_and_leakage_match_exact_evaluation() {
    let plan = CodingPlan::new(2, 2, 8, 3.0).unwrap();
    let subset = [1usize, 3];
    let (data, noise) = build_sigmas(&subset, &plan).unwrap();
    let alphas: Vec<Q> = plan.alphas().iter().map(|&a| q(a)).collect();
    let rows: Vec<Vec<Q>> = subset
        .iter()
        .map(|&j| basis(&q(plan.beta(j)), &alphas))
        .collect();
    for (h, row) in rows.iter().enumerate() {
        for i in 0..2 {
            assert!(rel(data[(h, i)], f(&row[i])) <= 1e-13);
            assert!(rel(noise[(h, i)], f(&row[2 + i])) <= 1e-13);
        }
    }

    // det(I + ρ² G⁻¹ H) = det(G + ρ² H) / det(G), ρ² = s² T / σ².
    let sigma = 0.5;
    let cfg = PrivacyConfig::for_plan(&plan, sigma, 1.0, 2, 1.0);
    let rho2 = q(2.0) / (q(sigma) * q(sigma));
    let data_rows: Vec<Vec<Q>> = rows.iter().map(|r| r[..2].to_vec()).collect();
    let noise_rows: Vec<Vec<Q>> = rows.iter().map(|r| r[2..].to_vec()).collect();
    let g = gram(&noise_rows);
    let h = gram(&data_rows);
    let sum: Vec<Vec<Q>> = g
        .iter()
        .zip(&h)
        .map(|(gr, hr)| gr.iter().zip(hr).map(|(a, b)| a + &rho2 * b).collect())
        .collect();
    let ratio = det(sum) / det(g.clone());
    assert!(ratio.is_positive());
    let exact_bits = f(&ratio).log2();
    let got = leakage_for_subset(&subset, &plan, &cfg).unwrap();
    assert!(rel(got, exact_bits) <= 1e-9, "{got} vs {exact_bits}");
}

#[test]
fn scalar_leakage_matches_exact_closed_form() {
    let plan = CodingPlan::new(1, 1, 6, 3.0).unwrap();
    let cfg = PrivacyConfig::for_plan(&plan, 0.8, 1.5, 1, 1.0);
    let alphas: Vec<Q> = plan.alphas().iter().map(|&a| q(a)).collect();
    for j in 0..6 {
        let b = basis(&q(plan.beta(j)), &alphas);
        let ratio = &b[0] / &b[1];
        let inner = Q::one() + q(1.5) * q(1.5) / (q(0.8) * q(0.8)) * &ratio * &ratio;
        let exact = f(&inner).log2();
        let got = leakage_for_subset(&[j], &plan, &cfg).unwrap();
        assert!(rel(got, exact) <= 1e-12, "node {j}: {got} vs {exact}");
    }
}

/// Fraction-free (Bareiss) determinant of an integer matrix.
fn bareiss_det(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !m[r][k].is_zero()) else {
                return BigInt::zero();
            };
            m.swap(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

fn int_gram(rows: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| {
                    a.iter()
                        .zip(b)
                        .fold(BigInt::zero(), |acc, (x, y)| acc + x * y)
                })
                .collect()
        })
        .collect()
}

fn log2_ratio(num: &BigInt, den: &BigInt) -> f64 {
    let shift = num.bits() as i64 - den.bits() as i64;
    let r = if shift >= 0 {
        Q::new(num.clone(), den.clone() << shift as usize)
    } else {
        Q::new(num.clone() << (-shift) as usize, den.clone())
    };
    shift as f64 + f(&r).log2()
}

/// Exact bits leaked to `subset` with `ρ² = a / σ²`. Row `h` of the Berrut
/// basis is rescaled to `Π_{i'≠i} (β_h − α_{i'})`, which leaves
/// `det(G + ρ² H) / det(G)` unchanged and makes every entry a dyadic rational.
fn exact_bits(plan: &CodingPlan, subset: &[usize], a: u64, sigma: u64) -> f64 {
    let alphas: Vec<Q> = plan.alphas().iter().map(|&v| q(v)).collect();
    let rows: Vec<Vec<BigInt>> = subset
        .iter()
        .map(|&j| {
            let beta = q(plan.beta(j));
            let diffs: Vec<Q> = alphas.iter().map(|al| &beta - al).collect();
            let row: Vec<Q> = (0..diffs.len())
                .map(|i| {
                    diffs
                        .iter()
                        .enumerate()
                        .filter(|&(i2, _)| i2 != i)
                        .fold(Q::one(), |acc, (_, d)| acc * d)
                })
                .collect();
            let scale = row.iter().map(|v| v.denom().clone()).max().unwrap();
            row.iter()
                .map(|v| (v * Q::from_integer(scale.clone())).to_integer())
                .collect()
        })
        .collect();
    let k = plan.k;
    let data: Vec<Vec<BigInt>> = rows.iter().map(|r| r[..k].to_vec()).collect();
    let noise: Vec<Vec<BigInt>> = rows.iter().map(|r| r[k..].to_vec()).collect();
    let (g, h) = (int_gram(&noise), int_gram(&data));
    let (a, b) = (BigInt::from(a), BigInt::from(sigma) * BigInt::from(sigma));
    let bg: Vec<Vec<BigInt>> = g
        .iter()
        .map(|r| r.iter().map(|v| v * &b).collect())
        .collect();
    let sum: Vec<Vec<BigInt>> = bg
        .iter()
        .zip(&h)
        .map(|(gr, hr)| gr.iter().zip(hr).map(|(x, y)| x + y * &a).collect())
        .collect();
    log2_ratio(&bareiss_det(sum), &bareiss_det(bg))
}

#[test]
fn ill_conditioned_colluder_sets_match_exact_evaluation() {
    let plan = CodingPlan::new(1, 30, 50, 3.0).unwrap();
    let subsets: [&[usize]; 3] = [
        &[20, 21, 22, 23, 24, 25, 26, 27, 28, 29],
        &[16, 20, 21, 22, 23, 24, 25, 26, 27, 28],
        &[0, 1, 2, 20, 22, 23, 24, 25, 26, 27],
    ];
    for subset in subsets {
        for sigma in [10u64, 1_000_000_000_000] {
            let cfg = PrivacyConfig::for_plan(&plan, sigma as f64, 1.0, subset.len(), 1.0);
            let exact = exact_bits(&plan, subset, 30, sigma);
            let got = leakage_for_subset(subset, &plan, &cfg).unwrap();
            assert!(
                rel(got, exact) <= 1e-9,
                "{subset:?} at sigma {sigma}: {got} vs {exact}"
            );
        }
    }
}

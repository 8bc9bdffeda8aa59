//! Moment checks for matrix samplers.
//!
//! Exact mode relies on row exchangeability: a moment depends only on the column masks of the
//! distinct rows it touches, and averages over injective row choices are computed from power
//! sums by Möbius inversion over set partitions.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MatrixSampler;
use crate::csp_core::Multiset;
use crate::error::{ensure, Result};
use crate::rational::{binomial, serde_q_opt, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMode {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFlag {
    /// Exact mode: one column mask per distinct row. Monte-Carlo mode: `(row, col)` entries.
    pub entries: Vec<(u64, u64)>,
    pub value: f64,
    #[serde(with = "serde_q_opt")]
    pub exact: Option<Q>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub mode: VerifyMode,
    pub order: usize,
    pub trials: u64,
    pub tolerance: f64,
    pub sets_checked: u64,
    pub max_abs: f64,
    pub flagged: Vec<MomentFlag>,
    pub passed: bool,
}

const MAX_FLAGS: usize = 32;

fn set_partitions(q: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, q: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == q {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            go(i + 1, q, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        go(i + 1, q, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, q, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Multisets of nonempty column masks with total popcount `<= order`.
fn shapes(cols: usize, order: usize, rows: usize) -> Vec<Vec<u32>> {
    let masks: Vec<u32> = (1u32..1 << cols).filter(|m| m.count_ones() as usize <= order).collect();
    let mut out = Vec::new();
    fn go(start: usize, budget: usize, rows: usize, masks: &[u32], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == rows {
            return;
        }
        for i in start..masks.len() {
            let w = masks[i].count_ones() as usize;
            if w <= budget {
                cur.push(masks[i]);
                go(i, budget - w, rows, masks, cur, out);
                cur.pop();
            }
        }
    }
    go(0, order, rows, &masks, &mut Vec::new(), &mut out);
    out
}

/// Exact average of `Π_m row_{i_m}^{masks_m}` over injective row choices from the histogram.
pub fn exchangeable_moment(hist: &Multiset, masks: &[u32]) -> Q {
    let w = hist.walsh();
    let r = hist.size();
    let q = masks.len();
    let mut acc = BigInt::zero();
    for part in set_partitions(q) {
        let mut term = BigInt::one();
        let mut mu = 1i64;
        for block in &part {
            let m = block.iter().fold(0u32, |x, &i| x ^ masks[i]);
            term *= BigInt::from(w[m as usize]);
            let sign = if (block.len() - 1) % 2 == 0 { 1 } else { -1 };
            mu *= sign * factorial(block.len() - 1);
        }
        acc += term * BigInt::from(mu);
    }
    let falling = binomial(r, q as u64) * BigInt::from(factorial(q));
    Q::new(acc, falling)
}

fn exact_report(sampler: &dyn MatrixSampler, mixture: &[(Q, Multiset)], order: usize) -> UniformityReport {
    let shapes = shapes(sampler.cols(), order, order.min(sampler.rows()));
    let mut flagged = Vec::new();
    let mut max_abs = 0f64;
    let mut worst = Q::zero();
    for shape in &shapes {
        let v: Q = mixture.iter().map(|(p, h)| p * exchangeable_moment(h, shape)).sum();
        if v.abs() > worst {
            worst = v.abs();
        }
        if !v.is_zero() {
            let f = v.to_f64().unwrap_or(f64::NAN);
            max_abs = max_abs.max(f.abs());
            if flagged.len() < MAX_FLAGS {
                flagged.push(MomentFlag {
                    entries: shape.iter().enumerate().map(|(i, &m)| (i as u64, m as u64)).collect(),
                    value: f,
                    exact: Some(v),
                });
            }
        }
    }
    UniformityReport {
        mode: VerifyMode::Exact,
        order,
        trials: 0,
        tolerance: 0.0,
        sets_checked: shapes.len() as u64,
        max_abs,
        passed: worst.is_zero(),
        flagged,
    }
}

fn choose_sets(rows: usize, cols: usize, order: usize, max_sets: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, usize)>> {
    let cells = rows * cols;
    let total: BigInt = (1..=order as u64).map(|s| binomial(cells as u64, s)).sum();
    let mut out = Vec::new();
    if total <= BigInt::from(max_sets) {
        fn go(start: usize, cells: usize, cols: usize, left: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            if left == 0 {
                return;
            }
            for c in start..cells {
                cur.push((c / cols, c % cols));
                go(c + 1, cells, cols, left - 1, cur, out);
                cur.pop();
            }
        }
        go(0, cells, cols, order, &mut Vec::new(), &mut out);
        return out;
    }
    while out.len() < max_sets {
        let size = rng.gen_range(1..=order);
        let mut set: Vec<usize> = Vec::with_capacity(size);
        while set.len() < size {
            let c = rng.gen_range(0..cells);
            if !set.contains(&c) {
                set.push(c);
            }
        }
        set.sort_unstable();
        out.push(set.into_iter().map(|c| (c / cols, c % cols)).collect());
    }
    out
}

pub fn verify_uniformity(
    sampler: &dyn MatrixSampler,
    order: usize,
    trials: u64,
    tol: Option<f64>,
    mode: VerifyMode,
    max_sets: usize,
    seed: u64,
) -> Result<UniformityReport> {
    ensure!(order >= 1, Precondition, "moment order must be positive");
    if mode != VerifyMode::MonteCarlo {
        if let Some(mix) = sampler.row_mixture() {
            return Ok(exact_report(sampler, &mix, order));
        }
        ensure!(mode == VerifyMode::Auto, Resource, "sampler randomness is too large to enumerate");
    }
    ensure!(trials > 0, Precondition, "Monte-Carlo mode needs trials");
    let tol = tol.unwrap_or(4.0 / (trials as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = choose_sets(sampler.rows(), sampler.cols(), order, max_sets, &mut rng);
    let sums = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(trial + 1);
            let m = sampler.sample(&mut r);
            sets.iter().map(|s| s.iter().map(|&(i, j)| m.get(i, j) as i64).product::<i64>()).collect::<Vec<i64>>()
        })
        .reduce(|| vec![0i64; sets.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let mut flagged = Vec::new();
    let mut max_abs = 0f64;
    for (set, s) in sets.iter().zip(&sums) {
        let mean = *s as f64 / trials as f64;
        max_abs = max_abs.max(mean.abs());
        if mean.abs() > tol && flagged.len() < MAX_FLAGS {
            flagged.push(MomentFlag {
                entries: set.iter().map(|&(i, j)| (i as u64, j as u64)).collect(),
                value: mean,
                exact: None,
            });
        }
    }
    Ok(UniformityReport {
        mode: VerifyMode::MonteCarlo,
        order,
        trials,
        tolerance: tol,
        sets_checked: sets.len() as u64,
        max_abs,
        passed: flagged.is_empty(),
        flagged,
    })
}

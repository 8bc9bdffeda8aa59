//! Degree-count refutation of k-XOR instances under an imbalanced Hamming weight constraint.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp_core::{character, Constraint, FactorGraph};
use crate::error::{ensure, Error, Result};

/// Relative and absolute slack added to floating-point eigenvalue bounds.
const EIG_SLACK: f64 = 1e-9;

/// Number of constraints containing each variable.
pub fn degree_counts(fg: &FactorGraph) -> Vec<u64> {
    let mut n = vec![0u64; fg.n];
    for c in &fg.constraints {
        for &v in &c.scope {
            n[v as usize] += 1;
        }
    }
    n
}

/// `b` with `x^S = b` on the constraint's support, for parity distributions or XOR predicates.
pub fn xor_sign(fg: &FactorGraph, c: &Constraint) -> Result<i8> {
    let k = c.arity();
    let full = (1u32 << k) - 1;
    if c.distribution.is_some() {
        let support = fg.local_support(c)?;
        ensure!(support.len() == 1 << (k - 1), Precondition, "local distribution is not a parity class");
        let s = character(full, support[0].0);
        ensure!(support.iter().all(|(p, _)| character(full, *p) == s), Precondition, "local distribution mixes parities");
        return Ok(s);
    }
    let p = c.predicate.ok_or_else(|| Error::Precondition("constraint has neither distribution nor predicate".into()))?;
    let pred = &fg.predicates[p];
    let sat: Vec<u32> = (0..1u32 << k).filter(|&x| pred.satisfied(x ^ c.negation)).collect();
    ensure!(sat.len() == 1 << (k - 1), Precondition, "predicate is not an XOR");
    let s = character(full, sat[0]);
    ensure!(sat.iter().all(|&x| character(full, x) == s), Precondition, "predicate is not an XOR");
    Ok(s)
}

/// Signed `(k−1)`-XOR term.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorTerm {
    pub scope: Vec<u32>,
    pub sign: i8,
}

/// For each deletion position `i`, the instance `{(S_j \ {j_i}, b_j)}`.
pub fn derive_combined_xor(fg: &FactorGraph) -> Result<Vec<Vec<XorTerm>>> {
    let Some(first) = fg.constraints.first() else { return Ok(Vec::new()) };
    let k = first.arity();
    ensure!(k >= 3, Precondition, "needs k ≥ 3, got {k}");
    let mut out = vec![Vec::with_capacity(fg.m()); k];
    for c in &fg.constraints {
        ensure!(c.arity() == k, Precondition, "mixed arities {k} and {}", c.arity());
        let b = xor_sign(fg, c)?;
        for (i, inst) in out.iter_mut().enumerate() {
            let scope = c.scope.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
            inst.push(XorTerm { scope, sign: b });
        }
    }
    Ok(out)
}

/// `A_{uv} = ½ Σ` signs of terms on `{u, v}`.
pub fn xor2_matrix(n: usize, terms: &[XorTerm]) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(n, n);
    for t in terms {
        ensure!(t.scope.len() == 2, Precondition, "spectral refutation needs 2-ary terms, got arity {}", t.scope.len());
        let (u, v) = (t.scope[0] as usize, t.scope[1] as usize);
        ensure!(u < n && v < n && u != v, Range, "bad 2-XOR scope {:?}", t.scope);
        a[(u, v)] += 0.5 * t.sign as f64;
        a[(v, u)] += 0.5 * t.sign as f64;
    }
    Ok(a)
}

/// `max(λ_max, −λ_min)·n`, an upper bound on `|Σ_j b_j x_u x_v|` over the cube and for degree-2 p̃E.
pub fn refute_2xor_spectral(n: usize, terms: &[XorTerm]) -> Result<f64> {
    if terms.is_empty() || n == 0 {
        return Ok(0.0);
    }
    let a = xor2_matrix(n, terms)?;
    let eig = SymmetricEigen::new(a);
    let rho = eig.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
    Ok(rho * n as f64 * (1.0 + EIG_SLACK) + EIG_SLACK)
}

/// `Σ_j b_j x_u x_v`.
pub fn xor2_value(terms: &[XorTerm], x: &[i8]) -> i64 {
    terms.iter().map(|t| (t.sign * x[t.scope[0] as usize] * x[t.scope[1] as usize]) as i64).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMode {
    /// `Σ_i |N_i − kΔ|`, valid for every instance.
    Exact,
    /// `10 n √(kΔ ln n)`, valid when every `|N_i − kΔ|` is below `10√(kΔ ln n)`.
    HighProbability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutationCertificate {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// `m / n`.
    pub delta: f64,
    pub degree_counts: Vec<u64>,
    pub deviation_mode: DeviationMode,
    /// Bound on `|Σ_i (N_i − kΔ) p̃E[x_i]|` used in `bound`.
    pub deviation: f64,
    pub deviation_exact: f64,
    pub deviation_high_probability: f64,
    /// Whether every `|N_i − kΔ|` is within `10√(kΔ ln n)`.
    pub degrees_concentrated: bool,
    pub spectral: Vec<f64>,
    /// Bound on `|p̃E[Σ x_i]|`, capped at `n`.
    pub bound: f64,
    pub target_weight: u64,
    /// `2B − n`.
    pub target_signed: i64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

/// Refutes `Σ x_i = 2B − n` together with all 3-XOR constraints when the certified bound is below `|2B − n|`.
pub fn refute_imbalance(fg: &FactorGraph, weight: u64, mode: DeviationMode) -> Result<RefutationCertificate> {
    let n = fg.n;
    ensure!(weight <= n as u64, Range, "target weight {weight} exceeds n = {n}");
    let k = fg.constraints.first().map_or(3, |c| c.arity());
    ensure!(k == 3, Precondition, "only k = 3 is supported, got k = {k}");
    let target_signed = 2 * weight as i64 - n as i64;
    let counts = degree_counts(fg);
    let m = fg.m();
    let nf = n as f64;
    let delta = if n == 0 { 0.0 } else { m as f64 / nf };
    let kd = k as f64 * delta;
    let deviation_exact: f64 = counts.iter().map(|&c| (c as f64 - kd).abs()).sum();
    let t = 10.0 * (kd * nf.max(1.0).ln()).sqrt();
    let deviation_high_probability = nf * t;
    let degrees_concentrated = counts.iter().all(|&c| (c as f64 - kd).abs() <= t);
    let deviation = match mode {
        DeviationMode::Exact => deviation_exact,
        DeviationMode::HighProbability => deviation_high_probability,
    };
    let parts = derive_combined_xor(fg)?;
    let spectral: Vec<f64> = parts.par_iter().map(|terms| refute_2xor_spectral(n, terms)).collect::<Result<_>>()?;
    let bound = if m == 0 {
        nf
    } else {
        let raw = (deviation + spectral.iter().sum::<f64>()) / kd;
        raw.min(nf)
    };
    let verdict = if bound < target_signed.unsigned_abs() as f64 { Verdict::Refuted } else { Verdict::Inconclusive };
    Ok(RefutationCertificate {
        n,
        m,
        k,
        delta,
        degree_counts: counts,
        deviation_mode: mode,
        deviation,
        deviation_exact,
        deviation_high_probability,
        degrees_concentrated,
        spectral,
        bound,
        target_weight: weight,
        target_signed,
        verdict,
        seed: None,
        timing_ms: None,
    })
}

/// Largest `|xᵀAx| / bound` ratio over random ±1 vectors; at most 1 when the bound is valid.
pub fn rayleigh_check(n: usize, terms: &[XorTerm], bound: f64, trials: usize, seed: u64) -> f64 {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
            let v = xor2_value(terms, &x).unsigned_abs() as f64;
            if bound > 0.0 {
                v / bound
            } else if v == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .reduce(|| 0.0, f64::max)
}

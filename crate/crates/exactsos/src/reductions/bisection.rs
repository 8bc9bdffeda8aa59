//! The ν_c row distribution, blocked CSPs and the linear-round Max/Min-Bisection instances.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BisectionInstance, Direction, Provenance, Role};
use crate::csp_core::{Constraint, FactorGraph};
use crate::error::{ensure, Result};
use crate::exact_dist::SignMatrix;
use crate::rational::{q, qu, serde_q, Q};

const PLUS_TWO: [u32; 4] = [0b0111, 0b1011, 0b1101, 0b1110];
const MINUS_TWO: [u32; 4] = [0b0001, 0b0010, 0b0100, 0b1000];

/// Cap on edges or constraints materialized by the builders here.
pub const MAX_ITEMS: u64 = 20_000_000;

/// Distribution on `c² × 4` matrices whose rows have sum ±2, `h + c` of one sign and `h` of the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuC {
    pub c: u64,
    pub h: u64,
}

impl NuC {
    pub fn new(c: u64) -> Result<Self> {
        ensure!(c > 0 && c.is_multiple_of(2), Precondition, "c must be a positive even integer, got {c}");
        ensure!(c <= 64, Range, "c = {c} too large");
        Ok(NuC { c, h: c * (c - 1) / 2 })
    }

    pub fn rows(&self) -> usize {
        (self.c * self.c) as usize
    }

    pub fn sample(&self, rng: &mut impl Rng) -> SignMatrix {
        let rows = self.rows();
        let majority_plus = rng.gen_bool(0.5);
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(rng);
        let mut out = vec![0u32; rows];
        for (rank, &row) in order.iter().enumerate() {
            let majority = (rank as u64) < self.h + self.c;
            let plus = majority == majority_plus;
            let set = if plus { &PLUS_TWO } else { &MINUS_TWO };
            out[row] = set[rng.gen_range(0..4)];
        }
        SignMatrix { cols: 4, rows: out }
    }
}

pub fn nu_c_sample(c: u64, rng: &mut impl Rng) -> Result<SignMatrix> {
    Ok(NuC::new(c)?.sample(rng))
}

/// Per-row `y` values. Max: the first `h` rows of each sign get `y` opposite to the row majority, and the
/// `c` leftover rows alternate. Min: the negation.
pub fn nu_c_yvalues(m: &SignMatrix, c: u64, direction: Direction) -> Result<Vec<i8>> {
    let nu = NuC::new(c)?;
    ensure!(m.cols == 4 && m.rows.len() == nu.rows(), Precondition, "expected a {} × 4 matrix", nu.rows());
    let plus_rows = m.rows.iter().filter(|&&r| r.count_ones() == 3).count() as u64;
    let minus_rows = m.rows.iter().filter(|&&r| r.count_ones() == 1).count() as u64;
    ensure!(plus_rows + minus_rows == nu.rows() as u64, Precondition, "every row must have sum ±2");
    ensure!(
        (plus_rows, minus_rows) == (nu.h + c, nu.h) || (plus_rows, minus_rows) == (nu.h, nu.h + c),
        Precondition,
        "row counts ({plus_rows}, {minus_rows}) do not split as h + c and h"
    );
    let (mut seen_plus, mut seen_minus, mut leftover) = (0u64, 0u64, 0u64);
    let mut y = Vec::with_capacity(m.rows.len());
    for &r in &m.rows {
        let sign: i8 = if r.count_ones() == 3 { 1 } else { -1 };
        let seen = if sign > 0 { &mut seen_plus } else { &mut seen_minus };
        let v = if *seen < nu.h {
            *seen += 1;
            -sign
        } else {
            leftover += 1;
            if leftover % 2 == 1 {
                -sign
            } else {
                sign
            }
        };
        y.push(match direction {
            Direction::Max => v,
            Direction::Min => -v,
        });
    }
    Ok(y)
}

/// Fraction of the `4c²` pairs `(y_row, entry)` with different values.
pub fn y_cut_fraction(m: &SignMatrix, y: &[i8]) -> Result<Q> {
    ensure!(y.len() == m.rows.len(), Precondition, "need one y per row");
    let mut cut = 0u64;
    for (row, &yv) in y.iter().enumerate() {
        for col in 0..m.cols {
            if m.get(row, col) != yv {
                cut += 1;
            }
        }
    }
    Ok(Q::new(cut.into(), ((m.rows.len() * m.cols) as u64).into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuCMoments {
    #[serde(with = "serde_q")]
    pub first: Q,
    #[serde(with = "serde_q")]
    pub same_row: Q,
    #[serde(with = "serde_q")]
    pub different_row: Q,
}

/// Exact first and pairwise moments from the two-branch row-type arithmetic.
pub fn nu_c_pairwise_moments(c: u64) -> Result<NuCMoments> {
    let nu = NuC::new(c)?;
    let (h, c2) = (qu(nu.h), qu(c * c));
    let big = &h + qu(c);
    let half = q(1, 2);
    let branch = |maj: &Q| -> (Q, Q) {
        // majority rows have entry mean `maj`, minority rows `-maj`
        let min = -maj.clone();
        let first = &big / &c2 * maj + &h / &c2 * &min;
        let denom = &c2 * (&c2 - qu(1));
        let both_major = &big * (&big - qu(1)) / &denom;
        let mixed = qu(2) * &big * &h / &denom;
        let both_minor = &h * (&h - qu(1)) / &denom;
        let diff = both_major * maj * maj + mixed * maj * &min + both_minor * &min * &min;
        (first, diff)
    };
    let (fa, da) = branch(&half);
    let (fb, db) = branch(&-half.clone());
    let same = |set: &[u32; 4]| -> Q {
        let mut acc = Q::zero();
        for &r in set {
            let a: i64 = if r & 1 == 1 { 1 } else { -1 };
            let b: i64 = if r >> 1 & 1 == 1 { 1 } else { -1 };
            acc += Q::from_integer((a * b).into());
        }
        acc / qu(4)
    };
    let same_row = (same(&PLUS_TWO) + same(&MINUS_TWO)) / qu(2);
    Ok(NuCMoments { first: (fa + fb) / qu(2), same_row, different_row: (da + db) / qu(2) })
}

/// Every variable replaced by `R` copies and every constraint by its `R^k` copy tuples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blockup {
    pub graph: FactorGraph,
    pub r: u64,
    /// Slack in `|avg x| ≤ ζ_bal`, carried as metadata.
    #[serde(with = "crate::rational::serde_q_opt", default)]
    pub zeta_bal: Option<Q>,
}

pub fn build_blockup(fg: &FactorGraph, r: u64, zeta_bal: Option<Q>) -> Result<Blockup> {
    ensure!(r >= 1, Range, "R must be positive");
    let mut total = 0u64;
    for c in &fg.constraints {
        let copies = r.checked_pow(c.arity() as u32).unwrap_or(u64::MAX);
        total = total.saturating_add(copies);
    }
    ensure!(total <= MAX_ITEMS, Resource, "blockup would create {total} constraints, cap {MAX_ITEMS}");
    let mut out = FactorGraph::new(fg.n * r as usize);
    out.predicates = fg.predicates.clone();
    out.distributions = fg.distributions.clone();
    for c in &fg.constraints {
        let k = c.arity();
        let mut idx = vec![0u64; k];
        loop {
            let scope = c.scope.iter().zip(&idx).map(|(&v, &j)| v * r as u32 + j as u32).collect();
            out.push(Constraint { scope, ..c.clone() })?;
            let mut i = 0;
            loop {
                if i == k {
                    break;
                }
                idx[i] += 1;
                if idx[i] < r {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
    }
    Ok(Blockup { graph: out, r, zeta_bal })
}

/// Max-Bisection (`≠` edges) from `Δn` random scopes of arity `4c²`.
pub fn build_max_bisection(n: usize, delta: u64, c: u64, r: u64, seed: u64) -> Result<BisectionInstance> {
    build_linear(n, delta, c, r, seed, Direction::Max)
}

/// Min-Bisection (`=` edges) on the same graph shape.
pub fn build_min_bisection_linear(n: usize, delta: u64, c: u64, r: u64, seed: u64) -> Result<BisectionInstance> {
    build_linear(n, delta, c, r, seed, Direction::Min)
}

fn build_linear(n: usize, delta: u64, c: u64, r: u64, seed: u64, direction: Direction) -> Result<BisectionInstance> {
    let nu = NuC::new(c)?;
    let arity = 4 * c * c;
    ensure!(n as u64 >= arity, Precondition, "need n ≥ 4c² = {arity}, got {n}");
    ensure!(delta >= 1 && r >= 1, Range, "Δ and R must be positive");
    let m = delta * n as u64;
    let ys = m * c * c;
    let edge_count = ys * 4 * r;
    ensure!(edge_count <= MAX_ITEMS, Resource, "instance would have {edge_count} edges, cap {MAX_ITEMS}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = n as u64 * r;
    let pad = (xs + ys) % 2;
    let vertices = (xs + ys + pad) as usize;
    let mut roles = Vec::with_capacity(vertices);
    for var in 0..n as u32 {
        roles.extend((0..r as u32).map(|copy| Role::BlockCopy { var, copy }));
    }
    let mut edges = Vec::with_capacity(edge_count as usize);
    for s in 0..m {
        let scope: Vec<u32> = sample(&mut rng, n, arity as usize).into_iter().map(|v| v as u32).collect();
        for row in 0..nu.rows() {
            let y = (xs + s * c * c + row as u64) as u32;
            roles.push(Role::Auxiliary { scope: s as u32, row: row as u32 });
            for &v in &scope[4 * row..4 * row + 4] {
                for j in 0..r as u32 {
                    edges.push((v * r as u32 + j, y));
                }
            }
        }
    }
    roles.extend((0..pad as u32).map(|index| Role::Pad { index }));
    let zeta = Q::new((delta * c * c).into(), r.into());
    let eta = soundness_eta(arity as f64, delta as f64, crate::rational::to_f64(&zeta), n as f64, 1.0);
    let (completeness, soundness) = match direction {
        Direction::Max => (q(3, 4) - Q::new(1.into(), (4 * c).into()), q(11, 16)),
        Direction::Min => (q(1, 4) + Q::new(1.into(), (4 * c).into()), q(5, 16)),
    };
    let provenance = Provenance {
        construction: format!("{}-bisection", direction.as_str()),
        n_base: Some(n as u64),
        m: Some(m),
        c: Some(c),
        r: Some(r),
        delta: Some(delta),
        pad,
        zeta_bal: Some(zeta),
        completeness_target: Some(completeness),
        soundness_target: Some(soundness),
        soundness_eta: Some(eta),
        ..Default::default()
    };
    let inst = BisectionInstance { vertices, edges, direction, bisection: true, roles, provenance };
    inst.validate()?;
    Ok(inst)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Empirical {
    #[serde(with = "crate::rational::serde_q_vec")]
    pub phi: Vec<Q>,
    /// Grid-index tuples with their scope frequencies.
    pub psi: Vec<(Vec<usize>, String)>,
    #[serde(with = "serde_q")]
    pub tv: Q,
}

/// Value histogram `φ_f`, scope histogram `Ψ_f`, and the exact TV distance from `Ψ_f` to `φ_f^{⊗k}`.
pub fn empirical_distributions(f: &[Q], grid: &[Q], scopes: &[Vec<u32>]) -> Result<Empirical> {
    ensure!(!f.is_empty() && !scopes.is_empty(), Precondition, "need at least one variable and one scope");
    let mut index = Vec::with_capacity(f.len());
    for (i, v) in f.iter().enumerate() {
        let pos = grid.iter().position(|g| g == v).ok_or_else(|| crate::Error::Range(format!("f({i}) = {v} is not in the grid")))?;
        index.push(pos);
    }
    let mut phi = vec![Q::zero(); grid.len()];
    let unit = Q::new(1.into(), (f.len() as u64).into());
    for &i in &index {
        phi[i] += &unit;
    }
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for s in scopes {
        ensure!(s.iter().all(|&v| (v as usize) < f.len()), Range, "scope variable out of range");
        *counts.entry(s.iter().map(|&v| index[v as usize]).collect()).or_default() += 1;
    }
    let m = qu(scopes.len() as u64);
    let mut dev = Q::zero();
    let mut covered = Q::zero();
    let mut psi = Vec::with_capacity(counts.len());
    for (u, cnt) in counts {
        let p = qu(cnt) / &m;
        let prod: Q = u.iter().fold(Q::from_integer(1.into()), |acc, &i| acc * &phi[i]);
        dev += (&p - &prod).abs();
        covered += &prod;
        psi.push((u, crate::rational::fmt_q(&p)));
    }
    let tv = (dev + Q::from_integer(1.into()) - covered) / qu(2);
    Ok(Empirical { phi, psi, tv })
}

/// `η = C·(√(ln(kΔ)/Δ) + √k·ζ + k²/n)`.
pub fn soundness_eta(k: f64, delta: f64, zeta: f64, n: f64, constant: f64) -> f64 {
    let log_term = ((k * delta).ln().max(0.0) / delta).sqrt();
    constant * (log_term + k.sqrt() * zeta + k * k / n)
}

/// `E[P] + η`.
pub fn soundness_bound(expectation: f64, k: f64, delta: f64, zeta: f64, n: f64, constant: f64) -> f64 {
    expectation + soundness_eta(k, delta, zeta, n, constant)
}

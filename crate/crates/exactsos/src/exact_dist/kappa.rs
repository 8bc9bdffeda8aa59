//! Column-repair distributions over one-count classes.
//!
//! A column of length `r` is a repair string `z` of length `aℓ` concatenated with a perfectly
//! balanced string, then uniformly permuted. `κ` is a distribution over the number of ones in
//! `z`, restricted to multiples of `ℓ/2`; within a class every string is equally likely.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lp::{minimize, LpOutcome};
use crate::rational::{binomial, qi, Q};

/// Exact `E[x^T]` for `|T| = set_size` over a uniformly random ±1 string of the given length and sum.
pub fn conditional_moment(set_size: u64, length: u64, sum: i64) -> Result<Q> {
    let num = moment_numerator(set_size, length, sum)?;
    Ok(Q::new(num, binomial(length, set_size)))
}

/// `C(length, s) · E[x^T]`, an integer.
fn moment_numerator(s: u64, length: u64, sum: i64) -> Result<BigInt> {
    ensure!(s <= length, Precondition, "set size {s} exceeds length {length}");
    ensure!(sum.unsigned_abs() <= length, Range, "sum {sum} outside [-{length}, {length}]");
    let plus2 = length as i128 + sum as i128;
    ensure!(plus2 % 2 == 0, Precondition, "length {length} and sum {sum} have different parity");
    let plus = (plus2 / 2) as u64;
    let minus = length - plus;
    let mut acc = BigInt::zero();
    for j in 0..=s {
        let term = binomial(plus, s - j) * binomial(minus, j);
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kappa {
    pub t: u64,
    pub a: u64,
    pub ell: u64,
    pub r: u64,
    /// `(one-count, probability)` with positive probability only.
    #[serde(with = "kappa_serde")]
    pub classes: Vec<(u64, Q)>,
}

mod kappa_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(u64, Q)], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(w, p)| (w, p.numer().to_string(), p.denom().to_string())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(u64, Q)>, D::Error> {
        let v = Vec::<(u64, String, String)>::deserialize(d)?;
        v.into_iter()
            .map(|(w, n, den)| {
                let n: BigInt = n.parse().map_err(serde::de::Error::custom)?;
                let den: BigInt = den.parse().map_err(serde::de::Error::custom)?;
                if den.is_zero() {
                    return Err(serde::de::Error::custom("zero denominator"));
                }
                Ok((w, Q::new(n, den)))
            })
            .collect()
    }
}

impl Kappa {
    /// Signed column sum for a class with `ones` ones in the repair string.
    pub fn column_sum(&self, ones: u64) -> i64 {
        2 * ones as i64 - (self.a * self.ell) as i64
    }

    /// Exact moment of order `j` of the repaired column.
    pub fn column_moment(&self, j: u64) -> Result<Q> {
        let mut acc = Q::zero();
        for (ones, p) in &self.classes {
            acc += p * conditional_moment(j, self.r, self.column_sum(*ones))?;
        }
        Ok(acc)
    }

    /// Exact check that `κ` is a distribution on admissible classes with moments `1..t` equal to zero.
    pub fn verify(&self) -> Result<()> {
        let half = self.ell / 2;
        let total: Q = self.classes.iter().map(|(_, p)| p.clone()).sum();
        ensure!(total.is_one(), Infeasible, "κ sums to {total}");
        for (ones, p) in &self.classes {
            ensure!(!p.is_negative(), Infeasible, "negative mass on class {ones}");
            ensure!(ones % half == 0 && *ones <= self.a * self.ell, Infeasible, "inadmissible class {ones}");
        }
        for j in 1..self.t {
            let m = self.column_moment(j)?;
            ensure!(m.is_zero(), Infeasible, "column moment of order {j} is {m}");
        }
        Ok(())
    }

    pub fn cumulative(&self) -> Vec<(u64, Q)> {
        let mut acc = Q::zero();
        self.classes
            .iter()
            .map(|(w, p)| {
                acc += p;
                (*w, acc.clone())
            })
            .collect()
    }
}

/// A vector `q` with `Σ_j q_j E[x^{T_j} | class] > 0` for every admissible class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarkasWitness {
    pub t: u64,
    pub a: u64,
    pub ell: u64,
    pub r: u64,
    #[serde(with = "crate::rational::serde_q_vec")]
    pub q: Vec<Q>,
}

impl FarkasWitness {
    pub fn verify(&self) -> Result<()> {
        ensure!(self.q.len() as u64 == self.t - 1, Precondition, "witness length");
        let half = self.ell / 2;
        for w in 0..=2 * self.a {
            let ones = w * half;
            let sum = 2 * ones as i64 - (self.a * self.ell) as i64;
            let mut acc = Q::zero();
            for (j, qj) in self.q.iter().enumerate() {
                acc += qj * conditional_moment(j as u64 + 1, self.r, sum)?;
            }
            ensure!(acc.is_positive(), Precondition, "witness inner product {acc} on class {ones} is not positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum KappaOutcome {
    Feasible(Kappa),
    Infeasible(FarkasWitness),
}

/// Solves the class LP exactly. Among feasible `κ` it minimizes `E[(w - a)^2]` in units of `ℓ/2`.
pub fn solve_kappa(t: u64, a: u64, ell: u64, r: u64) -> Result<KappaOutcome> {
    ensure!(t >= 2, Precondition, "t must be at least 2");
    ensure!(a >= 1, Precondition, "a must be positive");
    ensure!(ell >= 2 && ell.is_multiple_of(2), Precondition, "ℓ must be a positive even number");
    let al = a.checked_mul(ell).ok_or_else(|| Error::Resource("aℓ overflows".into()))?;
    ensure!(al <= r, Precondition, "aℓ = {al} exceeds r = {r}");
    ensure!((r - al).is_multiple_of(2), Precondition, "r - aℓ must be even for a balanced remainder");
    ensure!(t - 1 <= r, Precondition, "t - 1 exceeds r");
    let classes = 2 * a + 1;
    ensure!(classes <= 4096, Resource, "{classes} classes exceed the LP budget");
    let half = ell / 2;
    let sums: Vec<i64> = (0..classes).map(|w| (w * half) as i64 * 2 - al as i64).collect();
    let mut rows: Vec<Vec<Q>> = Vec::new();
    for j in 1..t {
        let row = sums
            .iter()
            .map(|&s| moment_numerator(j, r, s).map(Q::from_integer))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    rows.push(vec![Q::one(); classes as usize]);
    let mut rhs = vec![Q::zero(); t as usize - 1];
    rhs.push(Q::one());
    let cost: Vec<Q> = (0..classes).map(|w| qi((w as i64 - a as i64).pow(2))).collect();
    match minimize(&rows, &rhs, &cost) {
        LpOutcome::Optimal { x, .. } => {
            let classes = x
                .into_iter()
                .enumerate()
                .filter(|(_, p)| !p.is_zero())
                .map(|(w, p)| (w as u64 * half, p))
                .collect();
            let k = Kappa { t, a, ell, r, classes };
            k.verify()?;
            Ok(KappaOutcome::Feasible(k))
        }
        LpOutcome::Unbounded => Err(Error::Infeasible("bounded LP reported unbounded".into())),
        LpOutcome::Infeasible => {
            let witness = gordan_witness(&rows[..rows.len() - 1], t, a, ell, r)?;
            witness.verify()?;
            Ok(KappaOutcome::Infeasible(witness))
        }
    }
}

/// Finds `q` with `q · M_w >= 1` for every class column, in moment coordinates.
fn gordan_witness(scaled: &[Vec<Q>], t: u64, a: u64, ell: u64, r: u64) -> Result<FarkasWitness> {
    let dims = scaled.len();
    let classes = scaled[0].len();
    let nvars = 2 * dims + classes;
    let mut rows = Vec::with_capacity(classes);
    for w in 0..classes {
        let mut row = vec![Q::zero(); nvars];
        for j in 0..dims {
            row[j] = scaled[j][w].clone();
            row[dims + j] = -scaled[j][w].clone();
        }
        row[2 * dims + w] = -Q::one();
        rows.push(row);
    }
    let rhs = vec![Q::one(); classes];
    let cost = vec![Q::zero(); nvars];
    match minimize(&rows, &rhs, &cost) {
        LpOutcome::Optimal { x, .. } => {
            let q = (0..dims)
                .map(|j| (&x[j] - &x[dims + j]) * Q::from_integer(binomial(r, j as u64 + 1)))
                .collect();
            Ok(FarkasWitness { t, a, ell, r, q })
        }
        _ => Err(Error::Infeasible("neither κ nor a separating witness was found".into())),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub t: u64,
    pub a: u64,
    pub ell: u64,
    pub r: u64,
    pub feasible: bool,
}

/// Solves the class LP over a grid `ℓ <= max_ell`, `aℓ <= max_al`, `r = aℓ·m` for `m` in `multipliers`.
pub fn sweep_kappa(t: u64, max_ell: u64, max_al: u64, multipliers: &[u64]) -> Result<Vec<(SweepEntry, KappaOutcome)>> {
    let mut out = Vec::new();
    for ell in (2..=max_ell).step_by(2) {
        for a in 1..=max_al / ell {
            for &m in multipliers {
                let r = a * ell * m;
                if (r - a * ell) % 2 != 0 || t - 1 > r {
                    continue;
                }
                let outcome = solve_kappa(t, a, ell, r)?;
                let feasible = matches!(outcome, KappaOutcome::Feasible(_));
                out.push((SweepEntry { t, a, ell, r, feasible }, outcome));
            }
        }
    }
    Ok(out)
}

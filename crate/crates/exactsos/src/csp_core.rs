//! Predicates, local distributions, assignments and factor graphs.
//!
//! Bit convention: in a pattern `u32`, bit `j` set means `x_j = +1` (Boolean 1).

use num_integer::Integer;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rational::{q, qu, serde_q_vec, Q};

pub const MAX_ARITY: usize = 16;

/// `x^T` for the pattern `x`, where `T` is a column mask.
#[inline]
pub fn character(mask: u32, pattern: u32) -> i8 {
    if (mask & !pattern).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn pattern_from_signs(x: &[i8]) -> u32 {
    x.iter().enumerate().fold(0, |acc, (j, &v)| if v > 0 { acc | 1 << j } else { acc })
}

pub fn signs_from_pattern(p: u32, k: usize) -> Vec<i8> {
    (0..k).map(|j| if p >> j & 1 == 1 { 1 } else { -1 }).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
    #[serde(with = "serde_q_vec")]
    table: Vec<Q>,
}

impl Predicate {
    pub fn new(name: &str, arity: usize, table: Vec<Q>) -> Result<Self> {
        ensure!((1..=MAX_ARITY).contains(&arity), Precondition, "predicate arity {arity} outside 1..={MAX_ARITY}");
        ensure!(table.len() == 1 << arity, Precondition, "truth table has {} entries, want {}", table.len(), 1 << arity);
        ensure!(
            table.iter().all(|v| !v.is_negative() && *v <= Q::one()),
            Range,
            "predicate values must lie in [0,1]"
        );
        Ok(Predicate { name: name.to_string(), arity, table })
    }

    pub fn from_fn(name: &str, arity: usize, f: impl Fn(&[i8]) -> Q) -> Result<Self> {
        ensure!((1..=MAX_ARITY).contains(&arity), Precondition, "predicate arity {arity} outside 1..={MAX_ARITY}");
        let table = (0..1u32 << arity).map(|p| f(&signs_from_pattern(p, arity))).collect();
        Self::new(name, arity, table)
    }

    pub fn and(k: usize) -> Result<Self> {
        Self::from_fn(&format!("{k}and"), k, |x| if x.iter().all(|&v| v > 0) { Q::one() } else { Q::zero() })
    }

    pub fn or(k: usize) -> Result<Self> {
        Self::from_fn(&format!("{k}or"), k, |x| if x.iter().any(|&v| v > 0) { Q::one() } else { Q::zero() })
    }

    /// Satisfied iff the product of the ±1 inputs is +1.
    pub fn xor(k: usize) -> Result<Self> {
        Self::from_fn(&format!("{k}xor"), k, |x| {
            if x.iter().map(|&v| v as i32).product::<i32>() > 0 {
                Q::one()
            } else {
                Q::zero()
            }
        })
    }

    /// Generalized 4-ary predicate: 1/2 on balanced inputs, 3/4 when `|Σx| = 2`, 1 when `|Σx| = 4`.
    pub fn basic4() -> Self {
        Self::from_fn("basic4", 4, |x| {
            match x.iter().map(|&v| v as i32).sum::<i32>().abs() {
                0 => q(1, 2),
                2 => q(3, 4),
                _ => Q::one(),
            }
        })
        .expect("static arity")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        if lower == "basic4" {
            return Ok(Self::basic4());
        }
        let digits: String = lower.chars().take_while(|c| c.is_ascii_digit()).collect();
        let rest = &lower[digits.len()..];
        let k: usize = digits.parse().map_err(|_| Error::Parse(format!("unknown predicate {name:?}")))?;
        match rest {
            "and" => Self::and(k),
            "or" => Self::or(k),
            "xor" => Self::xor(k),
            _ => Err(Error::Parse(format!("unknown predicate {name:?}"))),
        }
    }

    pub fn value(&self, pattern: u32) -> &Q {
        &self.table[pattern as usize]
    }

    pub fn eval(&self, x: &[i8]) -> &Q {
        self.value(pattern_from_signs(x))
    }

    pub fn is_boolean(&self) -> bool {
        self.table.iter().all(|v| v.is_zero() || v.is_one())
    }

    pub fn satisfied(&self, pattern: u32) -> bool {
        self.table[pattern as usize].is_one()
    }

    /// Fourier coefficients `P^(T) = 2^-k Σ_x P(x) x^T`, indexed by mask `T`.
    pub fn fourier(&self) -> Vec<Q> {
        let mut f = self.table.clone();
        walsh_hadamard(&mut f);
        let scale = qu(1u64 << self.arity);
        f.iter().map(|v| v / &scale).collect()
    }

    pub fn multilinear_extension(&self, mu: &[Q]) -> Result<Q> {
        ensure!(mu.len() == self.arity, Precondition, "point has {} coordinates, predicate arity {}", mu.len(), self.arity);
        ensure!(
            mu.iter().all(|m| m.abs() <= Q::one()),
            Range,
            "multilinear extension evaluated outside [-1,1]^k"
        );
        let mut acc = Q::zero();
        for (mask, c) in self.fourier().into_iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut term = c;
            for (j, m) in mu.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    term *= m;
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// `P(x ⊙ z)` where bit `j` of `negation` flips coordinate `j`.
    pub fn value_negated(&self, pattern: u32, negation: u32) -> &Q {
        self.value(pattern ^ negation)
    }
}

/// In-place unnormalized Walsh–Hadamard transform: `out[T] = Σ_x in[x] x^T`.
pub fn walsh_hadamard<T>(v: &mut [T])
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let a = v[j].clone();
                let b = v[j + h].clone();
                v[j] = a.clone() + b.clone();
                v[j + h] = b - a;
            }
        }
        h *= 2;
    }
}

/// A multiset of k-bit patterns as a histogram.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multiset {
    pub arity: usize,
    pub counts: Vec<u64>,
}

impl Multiset {
    pub fn empty(arity: usize) -> Self {
        Multiset { arity, counts: vec![0; 1 << arity] }
    }

    pub fn from_patterns(arity: usize, patterns: &[u32]) -> Result<Self> {
        ensure!((1..=MAX_ARITY).contains(&arity), Precondition, "arity {arity} outside 1..={MAX_ARITY}");
        let mut m = Self::empty(arity);
        for &p in patterns {
            ensure!((p as usize) < m.counts.len(), Range, "pattern {p} exceeds arity {arity}");
            m.counts[p as usize] += 1;
        }
        Ok(m)
    }

    pub fn cube(arity: usize) -> Self {
        Multiset { arity, counts: vec![1; 1 << arity] }
    }

    pub fn size(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn scaled(&self, c: u64) -> Self {
        Multiset { arity: self.arity, counts: self.counts.iter().map(|v| v * c).collect() }
    }

    pub fn add_scaled(&mut self, other: &Multiset, c: u64) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b * c;
        }
    }

    /// Sub-multiset with coordinate `i` fixed to `+1` (`plus = true`) or `-1`.
    pub fn restricted(&self, i: usize, plus: bool) -> Multiset {
        let counts = self
            .counts
            .iter()
            .enumerate()
            .map(|(p, &c)| if (p >> i & 1 == 1) == plus { c } else { 0 })
            .collect();
        Multiset { arity: self.arity, counts }
    }

    pub fn satisfied(&self, p: &Predicate) -> u64 {
        self.counts.iter().enumerate().filter(|(pat, _)| p.satisfied(*pat as u32)).map(|(_, c)| c).sum()
    }

    /// Power sums `W[T] = Σ_x count(x) x^T` for every mask.
    pub fn walsh(&self) -> Vec<i128> {
        let mut w: Vec<i128> = self.counts.iter().map(|&c| c as i128).collect();
        walsh_hadamard(&mut w);
        w
    }

    pub fn expand(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for (p, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(p as u32, c as usize));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalDistribution {
    pub arity: usize,
    /// Declared uniformity: every moment of order `1..=uniformity` vanishes.
    pub uniformity: usize,
    #[serde(with = "support_serde")]
    support: Vec<(u32, Q)>,
}

mod support_serde {
    use super::*;
    use crate::rational::{fmt_q, parse_q};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(u32, Q)], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(p, w)| (p, fmt_q(w))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(u32, Q)>, D::Error> {
        let v = Vec::<(u32, String)>::deserialize(d)?;
        v.into_iter().map(|(p, w)| Ok((p, parse_q(&w).map_err(serde::de::Error::custom)?))).collect()
    }
}

impl LocalDistribution {
    /// Builds a distribution from weights, verifying the declared uniformity exactly.
    pub fn new(arity: usize, weights: Vec<(u32, Q)>, uniformity: usize) -> Result<Self> {
        ensure!((1..=MAX_ARITY).contains(&arity), Precondition, "arity {arity} outside 1..={MAX_ARITY}");
        let mut support: Vec<(u32, Q)> = Vec::new();
        let mut sorted = weights;
        sorted.sort_by_key(|(p, _)| *p);
        for (p, w) in sorted {
            ensure!((p as u64) < 1u64 << arity, Range, "pattern {p} exceeds arity {arity}");
            ensure!(!w.is_negative(), Range, "negative probability");
            if w.is_zero() {
                continue;
            }
            match support.last_mut() {
                Some((lp, lw)) if *lp == p => *lw += w,
                _ => support.push((p, w)),
            }
        }
        let total: Q = support.iter().map(|(_, w)| w.clone()).sum();
        ensure!(total.is_one(), Precondition, "probabilities sum to {total}, not 1");
        let d = LocalDistribution { arity, uniformity: 0, support };
        if let Err((mask, m)) = d.check_kwise_uniform(uniformity) {
            return Err(Error::Precondition(format!(
                "declared {uniformity}-wise uniform but moment on mask {mask:#b} is {m}"
            )));
        }
        Ok(LocalDistribution { uniformity, ..d })
    }

    pub fn from_multiset(s: &Multiset, uniformity: usize) -> Result<Self> {
        let total = s.size();
        ensure!(total > 0, Precondition, "empty multiset");
        let w = s
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(p, &c)| (p as u32, Q::new(BigInt::from(c), BigInt::from(total))))
            .collect();
        Self::new(s.arity, w, uniformity)
    }

    pub fn uniform(arity: usize) -> Result<Self> {
        Self::from_multiset(&Multiset::cube(arity), arity)
    }

    /// Uniform over patterns with an odd (`odd = true`) or even number of Boolean ones.
    pub fn parity(arity: usize, odd: bool) -> Result<Self> {
        let pats: Vec<u32> = (0..1u32 << arity).filter(|p| (p.count_ones() % 2 == 1) == odd).collect();
        Self::from_multiset(&Multiset::from_patterns(arity, &pats)?, arity - 1)
    }

    pub fn point(arity: usize, pattern: u32) -> Result<Self> {
        Self::new(arity, vec![(pattern, Q::one())], 0)
    }

    /// Uniform on `{(+1,-1), (-1,+1)}`.
    pub fn not_equal() -> Self {
        Self::new(2, vec![(0b01, q(1, 2)), (0b10, q(1, 2))], 1).expect("static distribution")
    }

    pub fn by_name(name: &str, arity: usize) -> Result<Self> {
        match name {
            "uniform" => Self::uniform(arity),
            "odd-parity" => Self::parity(arity, true),
            "even-parity" => Self::parity(arity, false),
            _ => Err(Error::Parse(format!("unknown distribution {name:?}"))),
        }
    }

    pub fn support(&self) -> &[(u32, Q)] {
        &self.support
    }

    pub fn prob(&self, pattern: u32) -> Q {
        match self.support.binary_search_by_key(&pattern, |(p, _)| *p) {
            Ok(i) => self.support[i].1.clone(),
            Err(_) => Q::zero(),
        }
    }

    pub fn moment(&self, mask: u32) -> Q {
        let mut acc = Q::zero();
        for (p, w) in &self.support {
            if character(mask, *p) > 0 {
                acc += w;
            } else {
                acc -= w;
            }
        }
        acc
    }

    /// `Ok` iff every moment with `1 <= |T| <= t` vanishes; otherwise the first offending mask.
    pub fn check_kwise_uniform(&self, t: usize) -> std::result::Result<(), (u32, Q)> {
        for mask in 1u32..1 << self.arity {
            if mask.count_ones() as usize <= t {
                let m = self.moment(mask);
                if !m.is_zero() {
                    return Err((mask, m));
                }
            }
        }
        Ok(())
    }

    /// Smallest multiset realizing the distribution exactly.
    pub fn to_multiset(&self) -> Multiset {
        let lcm = self.support.iter().fold(BigInt::one(), |acc, (_, w)| acc.lcm(w.denom()));
        let mut m = Multiset::empty(self.arity);
        for (p, w) in &self.support {
            let c = (w * Q::from_integer(lcm.clone())).to_integer();
            m.counts[*p as usize] = c.to_u64().expect("multiset count fits u64");
        }
        m
    }
}

pub fn expectation_under(p: &Predicate, nu: &LocalDistribution) -> Result<Q> {
    ensure!(p.arity == nu.arity, Precondition, "predicate arity {} vs distribution arity {}", p.arity, nu.arity);
    Ok(nu.support.iter().map(|(pat, w)| w * p.value(*pat)).sum())
}

pub fn check_kwise_uniform(nu: &LocalDistribution, t: usize) -> bool {
    nu.check_kwise_uniform(t).is_ok()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<i8>);

impl Assignment {
    pub fn new(x: Vec<i8>) -> Result<Self> {
        ensure!(x.iter().all(|&v| v == 1 || v == -1), Range, "assignment entries must be ±1");
        Ok(Assignment(x))
    }

    pub fn from_bits(bits: u64, n: usize) -> Self {
        Assignment((0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of coordinates equal to +1.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0).count()
    }

    pub fn pattern_on(&self, scope: &[u32]) -> u32 {
        scope.iter().enumerate().fold(0, |acc, (j, &v)| if self.0[v as usize] > 0 { acc | 1 << j } else { acc })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Base,
    Pin,
    Matching,
    Composite,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub scope: Vec<u32>,
    pub negation: u32,
    pub t: usize,
    pub predicate: Option<usize>,
    pub distribution: Option<usize>,
    pub kind: ConstraintKind,
    pub group: Option<u32>,
}

impl Constraint {
    pub fn arity(&self) -> usize {
        self.scope.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub n: usize,
    pub predicates: Vec<Predicate>,
    pub distributions: Vec<LocalDistribution>,
    pub constraints: Vec<Constraint>,
}

impl FactorGraph {
    pub fn new(n: usize) -> Self {
        FactorGraph { n, predicates: Vec::new(), distributions: Vec::new(), constraints: Vec::new() }
    }

    pub fn add_predicate(&mut self, p: Predicate) -> usize {
        if let Some(i) = self.predicates.iter().position(|q| *q == p) {
            return i;
        }
        self.predicates.push(p);
        self.predicates.len() - 1
    }

    pub fn add_distribution(&mut self, d: LocalDistribution) -> usize {
        if let Some(i) = self.distributions.iter().position(|q| *q == d) {
            return i;
        }
        self.distributions.push(d);
        self.distributions.len() - 1
    }

    pub fn push(&mut self, c: Constraint) -> Result<usize> {
        self.validate_constraint(&c)?;
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    fn validate_constraint(&self, c: &Constraint) -> Result<()> {
        let k = c.scope.len();
        ensure!((1..=MAX_ARITY).contains(&k), Precondition, "constraint arity {k} outside 1..={MAX_ARITY}");
        ensure!(c.scope.iter().all(|&v| (v as usize) < self.n), Range, "scope variable out of range 0..{}", self.n);
        let mut s = c.scope.clone();
        s.sort_unstable();
        s.dedup();
        ensure!(s.len() == k, Precondition, "scope {:?} repeats a variable", c.scope);
        ensure!(c.negation < 1 << k, Range, "negation mask exceeds arity");
        ensure!(1 <= c.t && c.t <= k + 1, Range, "t = {} outside 1..={}", c.t, k + 1);
        if let Some(p) = c.predicate {
            ensure!(p < self.predicates.len(), Range, "predicate index {p} out of range");
            ensure!(self.predicates[p].arity == k, Precondition, "predicate arity mismatch");
        }
        if let Some(d) = c.distribution {
            ensure!(d < self.distributions.len(), Range, "distribution index {d} out of range");
            let dist = &self.distributions[d];
            ensure!(dist.arity == k, Precondition, "distribution arity mismatch");
            ensure!(c.t <= dist.uniformity + 1, Precondition, "t = {} exceeds declared uniformity + 1", c.t);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            self.validate_constraint(c)?;
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// Probability of the scope pattern under the constraint's negated local distribution.
    pub fn local_prob(&self, c: &Constraint, pattern: u32) -> Result<Q> {
        let d = c.distribution.ok_or_else(|| Error::Precondition("constraint has no local distribution".into()))?;
        Ok(self.distributions[d].prob(pattern ^ c.negation))
    }

    pub fn local_support(&self, c: &Constraint) -> Result<Vec<(u32, Q)>> {
        let d = c.distribution.ok_or_else(|| Error::Precondition("constraint has no local distribution".into()))?;
        Ok(self.distributions[d].support().iter().map(|(p, w)| (p ^ c.negation, w.clone())).collect())
    }

    pub fn constraint_value(&self, c: &Constraint, x: &Assignment) -> Result<Q> {
        let p = c.predicate.ok_or_else(|| Error::Precondition("constraint has no predicate".into()))?;
        Ok(self.predicates[p].value_negated(x.pattern_on(&c.scope), c.negation).clone())
    }

    /// Whether the assignment lies in the support of every constraint's local distribution.
    pub fn supports(&self, x: &Assignment) -> Result<bool> {
        for c in &self.constraints {
            if self.local_prob(c, x.pattern_on(&c.scope))?.is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Average predicate value over constraints.
pub fn objective_value(fg: &FactorGraph, x: &Assignment) -> Result<Q> {
    ensure!(x.len() == fg.n, Precondition, "assignment length {} vs n = {}", x.len(), fg.n);
    ensure!(fg.m() > 0, Precondition, "objective of an instance with no constraints");
    let mut acc = Q::zero();
    for c in &fg.constraints {
        acc += fg.constraint_value(c, x)?;
    }
    Ok(acc / qu(fg.m() as u64))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mixture {
    pub t: Multiset,
    #[serde(with = "crate::rational::serde_q")]
    pub rate: Q,
    #[serde(with = "crate::rational::serde_q")]
    pub eps_prime: Q,
}

/// `T` = `2^k (L-1) R` copies of `S` plus `|S| R` copies of the cube.
pub fn mix_distributions(s: &Multiset, p: &Predicate, l: u64, r: u64) -> Result<Mixture> {
    ensure!(s.arity == p.arity, Precondition, "predicate and multiset arity differ");
    ensure!(p.is_boolean(), Precondition, "mixing requires a Boolean predicate");
    ensure!(l >= 1 && r >= 1, Range, "L and R must be positive");
    let size = s.size();
    ensure!(size > 0, Precondition, "empty multiset");
    let beta = Q::new(BigInt::from(s.satisfied(p)), BigInt::from(size));
    let cube = Multiset::cube(s.arity);
    let eta = Q::new(BigInt::from(cube.satisfied(p)), BigInt::from(cube.size()));
    ensure!(beta > eta, Precondition, "β = {beta} does not exceed E_uniform[P] = {eta}");
    let mut t = s.scaled((1u64 << s.arity) * (l - 1) * r);
    t.add_scaled(&cube, size * r);
    let eps_prime = (&beta - &eta) / qu(l);
    let rate = Q::new(BigInt::from(t.satisfied(p)), BigInt::from(t.size()));
    debug_assert_eq!(rate, &beta - &eps_prime);
    Ok(Mixture { t, rate, eps_prime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qi;
    use proptest::prelude::*;

    #[test]
    fn and3_expectations() {
        let p = Predicate::and(3).unwrap();
        assert_eq!(expectation_under(&p, &LocalDistribution::parity(3, true).unwrap()).unwrap(), q(1, 4));
        assert_eq!(expectation_under(&p, &LocalDistribution::uniform(3).unwrap()).unwrap(), q(1, 8));
    }

    #[test]
    fn basic4_uniform_and_extension() {
        let p = Predicate::basic4();
        assert_eq!(expectation_under(&p, &LocalDistribution::uniform(4).unwrap()).unwrap(), q(11, 16));
        let mu = [q(1, 3), q(-1, 2), q(2, 5), q(3, 7)];
        let mut pairs = Q::zero();
        for i in 0..4 {
            for j in i + 1..4 {
                pairs += &mu[i] * &mu[j];
            }
        }
        let quad = &mu[0] * &mu[1] * &mu[2] * &mu[3];
        let explicit = q(11, 16) + pairs / qi(16) - quad / qi(16);
        assert_eq!(p.multilinear_extension(&mu).unwrap(), explicit);
    }

    #[test]
    fn parity_is_pairwise_but_not_three_wise() {
        let d = LocalDistribution::parity(3, true).unwrap();
        assert!(check_kwise_uniform(&d, 2));
        assert!(!check_kwise_uniform(&d, 3));
        assert!(LocalDistribution::new(3, d.support().to_vec(), 3).is_err());
    }

    #[test]
    fn mixture_example() {
        let s = LocalDistribution::parity(3, true).unwrap().to_multiset();
        let m = mix_distributions(&s, &Predicate::and(3).unwrap(), 2, 1).unwrap();
        assert_eq!(m.t.size(), 64);
        assert_eq!(m.rate, q(3, 16));
        assert_eq!(m.eps_prime, q(1, 16));
        let u = Multiset::cube(3);
        assert!(mix_distributions(&u, &Predicate::and(3).unwrap(), 2, 1).is_err());
    }

    #[test]
    fn objective_all_ones() {
        let mut fg = FactorGraph::new(3);
        let p = fg.add_predicate(Predicate::and(3).unwrap());
        for neg in [0u32, 0b001] {
            fg.push(Constraint {
                scope: vec![0, 1, 2],
                negation: neg,
                t: 1,
                predicate: Some(p),
                distribution: None,
                kind: ConstraintKind::Base,
                group: None,
            })
            .unwrap();
        }
        let x = Assignment::new(vec![1, 1, 1]).unwrap();
        assert_eq!(objective_value(&fg, &x).unwrap(), q(1, 2));
    }

    fn brute_fourier(p: &Predicate, mask: u32) -> Q {
        let k = p.arity;
        let mut acc = Q::zero();
        for pat in 0..1u32 << k {
            acc += p.value(pat) * qi(character(mask, pat) as i64);
        }
        acc / qu(1 << k)
    }

    proptest! {
        #[test]
        fn extension_agrees_on_vertices(k in 1usize..6, seed in any::<u64>(), pat in any::<u32>()) {
            let table: Vec<Q> = (0..1u64 << k).map(|i| q(((seed >> (i % 60)) & 3) as i64, 3)).collect();
            let p = Predicate::new("rand", k, table).unwrap();
            let pat = pat & ((1 << k) - 1);
            let mu: Vec<Q> = signs_from_pattern(pat, k).iter().map(|&v| qi(v as i64)).collect();
            prop_assert_eq!(&p.multilinear_extension(&mu).unwrap(), p.value(pat));
            let f = p.fourier();
            for mask in 0..1u32 << k {
                prop_assert_eq!(&f[mask as usize], &brute_fourier(&p, mask));
            }
        }

        #[test]
        fn objective_in_unit_interval(seed in any::<u64>()) {
            let mut fg = FactorGraph::new(5);
            let p = fg.add_predicate(Predicate::basic4());
            for j in 0..4u64 {
                let base = (seed >> (j * 8)) as u32;
                let scope: Vec<u32> = (0..4).map(|i| (i + base) % 5).collect();
                fg.push(Constraint { scope, negation: base & 15, t: 1, predicate: Some(p), distribution: None, kind: ConstraintKind::Base, group: None }).unwrap();
            }
            let x = Assignment::from_bits(seed, 5);
            let v = objective_value(&fg, &x).unwrap();
            prop_assert!(v >= Q::zero() && v <= Q::one());
        }
    }
}

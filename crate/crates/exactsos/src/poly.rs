//! Multilinear polynomials over ±1 variables, reduced modulo `x_i^2 = 1`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::Q;

/// A multilinear monomial, stored as a strictly increasing list of variable indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(i: u32) -> Self {
        Monomial(vec![i])
    }

    /// Builds the reduced monomial of an arbitrary product of variables (repeats cancel in pairs).
    pub fn from_vars(vars: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = vars.into_iter().collect();
        v.sort_unstable();
        let mut out = Vec::with_capacity(v.len());
        let mut i = 0;
        while i < v.len() {
            let mut j = i;
            while j < v.len() && v[j] == v[i] {
                j += 1;
            }
            if (j - i) % 2 == 1 {
                out.push(v[i]);
            }
            i = j;
        }
        Monomial(out)
    }

    pub fn vars(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn eval(&self, x: &[i8]) -> i8 {
        self.0.iter().fold(1, |acc, &i| acc * x[i as usize])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    #[serde(with = "terms_serde")]
    terms: BTreeMap<Monomial, Q>,
}

mod terms_serde {
    use super::*;
    use crate::rational::{fmt_q, parse_q};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &BTreeMap<Monomial, Q>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(t.iter().map(|(m, c)| (m, fmt_q(c))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Monomial, Q>, D::Error> {
        let v = Vec::<(Monomial, String)>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (m, c) in v {
            let c = parse_q(&c).map_err(serde::de::Error::custom)?;
            let m = Monomial::from_vars(m.0);
            *out.entry(m).or_insert_with(Q::zero) += c;
        }
        out.retain(|_, c| !c.is_zero());
        Ok(out)
    }
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Q) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(i: u32) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::var(i), Q::one());
        p
    }

    pub fn monomial(m: Monomial, c: Q) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(m).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Q)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(&-Q::one()))
    }

    pub fn scale(&self, c: &Q) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut acc: BTreeMap<Monomial, Q> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                *acc.entry(m1.mul(m2)).or_insert_with(Q::zero) += c1 * c2;
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Polynomial { terms: acc }
    }

    pub fn eval(&self, x: &[i8]) -> Q {
        let mut s = Q::zero();
        for (m, c) in &self.terms {
            if m.eval(x) > 0 {
                s += c;
            } else {
                s -= c;
            }
        }
        s
    }

    /// Applies a linear functional given on monomials.
    pub fn apply<E>(&self, mut f: impl FnMut(&Monomial) -> std::result::Result<Q, E>) -> std::result::Result<Q, E> {
        let mut s = Q::zero();
        for (m, c) in &self.terms {
            s += c * f(m)?;
        }
        Ok(s)
    }
}

//! Desk-scale pseudoexpectations from closures and planted distributions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp_core::{walsh_hadamard, Assignment, Constraint, FactorGraph};
use crate::error::{ensure, Error, Result};
use crate::expansion::adjacency;
use crate::poly::{Monomial, Polynomial};
use crate::rational::{qu, Q};

/// A linear functional on multilinear monomials up to a degree cap.
pub trait Functional: Sync {
    fn degree(&self) -> usize;
    fn n(&self) -> usize;
    /// Value on a monomial of degree at most `degree()`.
    fn value(&self, m: &Monomial) -> Q;

    fn get(&self, m: &Monomial) -> Result<Q> {
        ensure!(m.degree() <= self.degree(), Range, "monomial of degree {} exceeds cap {}", m.degree(), self.degree());
        ensure!(m.vars().iter().all(|&v| (v as usize) < self.n()), Range, "monomial variable out of range");
        Ok(self.value(m))
    }

    fn eval(&self, p: &Polynomial) -> Result<Q> {
        p.apply(|m| self.get(m))
    }
}

/// Table of monomial values; absent monomials within the cap are zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudoexpectation {
    pub n: usize,
    pub degree: usize,
    #[serde(with = "value_list")]
    pub values: BTreeMap<Monomial, Q>,
}

mod value_list {
    use super::*;
    use crate::rational::{fmt_q, parse_q};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BTreeMap<Monomial, Q>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(m, x)| (m.vars().to_vec(), fmt_q(x))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<Monomial, Q>, D::Error> {
        let raw: Vec<(Vec<u32>, String)> = Vec::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (vars, x) in raw {
            let m = Monomial::from_vars(vars.iter().copied());
            if m.degree() != vars.len() {
                return Err(serde::de::Error::custom("monomial repeats a variable"));
            }
            let x = parse_q(&x).map_err(serde::de::Error::custom)?;
            if out.insert(m, x).is_some() {
                return Err(serde::de::Error::custom("duplicate monomial"));
            }
        }
        Ok(out)
    }
}

impl Pseudoexpectation {
    pub fn new(n: usize, degree: usize, values: BTreeMap<Monomial, Q>) -> Result<Self> {
        let pe = Pseudoexpectation { n, degree, values };
        pe.validate()?;
        Ok(pe)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.values.get(&Monomial::one()) == Some(&Q::one()), Precondition, "p̃E[1] must equal 1");
        for m in self.values.keys() {
            ensure!(m.degree() <= self.degree, Range, "stored monomial exceeds degree cap");
            ensure!(m.vars().iter().all(|&v| (v as usize) < self.n), Range, "monomial variable out of range");
        }
        Ok(())
    }

    pub fn uniform(n: usize, degree: usize) -> Self {
        Pseudoexpectation { n, degree, values: BTreeMap::from([(Monomial::one(), Q::one())]) }
    }

    /// Tabulates all moments of degree at most `degree` of a functional.
    pub fn tabulate(f: &dyn Functional, degree: usize) -> Result<Self> {
        ensure!(degree <= f.degree(), Range, "degree {degree} exceeds source cap {}", f.degree());
        let monos = monomials_up_to(f.n(), degree);
        let vals: Vec<(Monomial, Q)> = monos.into_par_iter().map(|m| (m.clone(), f.value(&m))).filter(|(_, v)| !v.is_zero()).collect();
        Pseudoexpectation::new(f.n(), degree, vals.into_iter().collect())
    }
}

impl Functional for Pseudoexpectation {
    fn degree(&self) -> usize {
        self.degree
    }
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, m: &Monomial) -> Q {
        self.values.get(m).cloned().unwrap_or_else(Q::zero)
    }
}

/// Expectation under an explicit distribution on `{±1}^n`.
#[derive(Clone, Debug)]
pub struct DistributionFunctional {
    pub n: usize,
    pub degree: usize,
    support: Vec<(Assignment, Q)>,
}

impl DistributionFunctional {
    pub fn new(n: usize, degree: usize, support: Vec<(Assignment, Q)>) -> Result<Self> {
        ensure!(!support.is_empty(), Precondition, "empty distribution");
        let mut total = Q::zero();
        for (x, p) in &support {
            ensure!(x.len() == n, Precondition, "assignment length {} vs n = {n}", x.len());
            ensure!(!p.is_negative(), Precondition, "negative probability");
            total += p;
        }
        ensure!(total.is_one(), Precondition, "probabilities sum to {total}");
        Ok(DistributionFunctional { n, degree, support })
    }

    pub fn support(&self) -> &[(Assignment, Q)] {
        &self.support
    }
}

impl Functional for DistributionFunctional {
    fn degree(&self) -> usize {
        self.degree
    }
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, m: &Monomial) -> Q {
        let mut acc = Q::zero();
        for (x, p) in &self.support {
            if m.eval(x.values()) > 0 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        acc
    }
}

/// All subsets of `0..n` of size at most `d`, by size then lexicographically.
pub fn monomials_up_to(n: usize, d: usize) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut layer: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..d.min(n) {
        let mut next = Vec::new();
        for s in &layer {
            let start = s.last().map_or(0, |&v| v + 1);
            for v in start..n as u32 {
                let mut t = s.clone();
                t.push(v);
                next.push(t);
            }
        }
        out.extend(next.iter().map(|s| Monomial::from_vars(s.iter().copied())));
        layer = next;
    }
    out
}

/// Edge-induced subgraph plus isolated variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subgraph {
    pub edges: BTreeSet<(usize, u32)>,
    pub isolated: BTreeSet<u32>,
}

impl Subgraph {
    pub fn constraints(&self) -> BTreeSet<usize> {
        self.edges.iter().map(|&(a, _)| a).collect()
    }

    pub fn edge_vars(&self) -> BTreeSet<u32> {
        self.edges.iter().map(|&(_, v)| v).collect()
    }

    pub fn vars(&self) -> BTreeSet<u32> {
        let mut v = self.edge_vars();
        v.extend(self.isolated.iter().copied());
        v
    }

    /// Whether every constraint meets its `t` and every degree-one variable lies in `s`.
    pub fn is_closed(&self, fg: &FactorGraph, s: &BTreeSet<u32>) -> bool {
        let mut cdeg: BTreeMap<usize, usize> = BTreeMap::new();
        let mut vdeg: BTreeMap<u32, usize> = BTreeMap::new();
        for &(a, v) in &self.edges {
            *cdeg.entry(a).or_default() += 1;
            *vdeg.entry(v).or_default() += 1;
        }
        cdeg.iter().all(|(&a, &d)| d >= fg.constraints[a].t) && vdeg.iter().all(|(v, &d)| d != 1 || s.contains(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureOptions {
    pub small: usize,
    pub max_set: usize,
    pub budget: u64,
}

impl ClosureOptions {
    pub fn new(small: usize) -> Self {
        ClosureOptions { small, max_set: 8, budget: 1 << 22 }
    }
}

/// Union of all small `S`-closed t-subgraphs, with the rest of `S` as isolated vertices.
pub fn closure(fg: &FactorGraph, s: &[u32], opts: &ClosureOptions) -> Result<Subgraph> {
    let adj = adjacency(fg);
    closure_with(fg, &adj.neighbors, s, opts)
}

fn closure_with(fg: &FactorGraph, adj: &[Vec<usize>], s: &[u32], opts: &ClosureOptions) -> Result<Subgraph> {
    ensure!(s.len() <= opts.max_set, Precondition, "|S| = {} exceeds enumeration cap {}", s.len(), opts.max_set);
    ensure!(s.iter().all(|&v| (v as usize) < fg.n), Range, "variable out of range");
    let sset: BTreeSet<u32> = s.iter().copied().collect();
    let touching: Vec<bool> = fg.constraints.iter().map(|c| c.scope.iter().any(|v| sset.contains(v))).collect();
    let rank = |u: usize| (!touching[u], u);
    let mut en = ClosureSearch { fg, adj, s: &sset, small: opts.small, budget: opts.budget, spent: 0, sub: Vec::new(), union: BTreeSet::new() };
    for root in (0..fg.m()).filter(|&u| touching[u]) {
        en.sub.push(root);
        let ext: Vec<usize> = adj[root].iter().copied().filter(|&u| rank(u) > rank(root)).collect();
        en.extend(ext, &|u| rank(u) > rank(root))?;
        en.sub.pop();
    }
    let edge_vars: BTreeSet<u32> = en.union.iter().map(|&(_, v)| v).collect();
    let isolated = sset.iter().copied().filter(|v| !edge_vars.contains(v)).collect();
    let out = Subgraph { edges: en.union, isolated };
    ensure!(out.constraints().len() <= opts.small, Precondition, "closure has {} constraints, more than SMALL = {}", out.constraints().len(), opts.small);
    Ok(out)
}

struct ClosureSearch<'a> {
    fg: &'a FactorGraph,
    adj: &'a [Vec<usize>],
    s: &'a BTreeSet<u32>,
    small: usize,
    budget: u64,
    spent: u64,
    sub: Vec<usize>,
    union: BTreeSet<(usize, u32)>,
}

impl ClosureSearch<'_> {
    fn extend(&mut self, ext: Vec<usize>, allowed: &dyn Fn(usize) -> bool) -> Result<()> {
        self.visit()?;
        if self.sub.len() == self.small {
            return Ok(());
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &self.adj[w] {
                if allowed(u)
                    && u != w
                    && !self.sub.contains(&u)
                    && !next.contains(&u)
                    && !self.sub.iter().any(|&x| self.adj[x].binary_search(&u).is_ok())
                {
                    next.push(u);
                }
            }
            self.sub.push(w);
            self.extend(next, allowed)?;
            self.sub.pop();
        }
        Ok(())
    }

    /// Tries every edge choice on the current constraint set.
    fn visit(&mut self) -> Result<()> {
        let options: Vec<Vec<u32>> = self
            .sub
            .iter()
            .map(|&a| {
                let c = &self.fg.constraints[a];
                let k = c.arity();
                (0u32..1 << k).filter(|m| m.count_ones() as usize >= c.t).collect()
            })
            .collect();
        let mut choice = vec![0usize; options.len()];
        loop {
            self.spent += 1;
            if self.spent > self.budget {
                return Err(Error::Resource(format!("closure enumeration exceeded {} candidates", self.budget)));
            }
            let mut vdeg: HashMap<u32, usize> = HashMap::new();
            for (i, &a) in self.sub.iter().enumerate() {
                let mask = options[i][choice[i]];
                for (j, &v) in self.fg.constraints[a].scope.iter().enumerate() {
                    if mask >> j & 1 == 1 {
                        *vdeg.entry(v).or_default() += 1;
                    }
                }
            }
            if vdeg.iter().all(|(v, &d)| d != 1 || self.s.contains(v)) {
                for (i, &a) in self.sub.iter().enumerate() {
                    let mask = options[i][choice[i]];
                    for (j, &v) in self.fg.constraints[a].scope.iter().enumerate() {
                        if mask >> j & 1 == 1 {
                            self.union.insert((a, v));
                        }
                    }
                }
            }
            let mut i = 0;
            loop {
                if i == choice.len() {
                    return Ok(());
                }
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Exact distribution on the variables of a subgraph; `free` variables are uniform and independent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedDistribution {
    pub vars: Vec<u32>,
    pub free: Vec<u32>,
    /// Bit `i` set means `vars[i] = +1`.
    #[serde(with = "support_list")]
    pub support: Vec<(u64, Q)>,
    pub source: Subgraph,
}

mod support_list {
    use super::*;
    use crate::rational::{fmt_q, parse_q};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(u64, Q)], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(x, p)| (*x, fmt_q(p))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(u64, Q)>, D::Error> {
        let raw: Vec<(u64, String)> = Vec::deserialize(d)?;
        raw.into_iter().map(|(x, p)| Ok((x, parse_q(&p).map_err(serde::de::Error::custom)?))).collect()
    }
}

impl PlantedDistribution {
    pub fn moment(&self, m: &Monomial) -> Q {
        let mut mask = 0u64;
        for v in m.vars() {
            match self.vars.binary_search(v) {
                Ok(i) => mask |= 1 << i,
                Err(_) => return Q::zero(),
            }
        }
        let mut acc = Q::zero();
        for (x, p) in &self.support {
            if (x & mask).count_ones() % 2 == mask.count_ones() % 2 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        acc
    }

    /// Support over `vars ∪ free`, with free variables expanded.
    pub fn expanded(&self, limit: usize) -> Result<Vec<(BTreeMap<u32, i8>, Q)>> {
        ensure!(self.free.len() < 32 && self.support.len() << self.free.len() <= limit, Resource, "expanded support exceeds {limit}");
        let share = Q::new(1.into(), (1u64 << self.free.len()).into());
        let mut out = Vec::new();
        for (x, p) in &self.support {
            for f in 0u64..1 << self.free.len() {
                let mut a: BTreeMap<u32, i8> = self.vars.iter().enumerate().map(|(i, &v)| (v, if x >> i & 1 == 1 { 1 } else { -1 })).collect();
                for (i, &v) in self.free.iter().enumerate() {
                    a.insert(v, if f >> i & 1 == 1 { 1 } else { -1 });
                }
                out.push((a, p * &share));
            }
        }
        Ok(out)
    }
}

/// Product of each constraint's marginal on its edges in `h`, conditioned on agreement.
pub fn planted_distribution(fg: &FactorGraph, h: &Subgraph) -> Result<PlantedDistribution> {
    let vars: Vec<u32> = h.edge_vars().into_iter().collect();
    ensure!(vars.len() <= 64, Resource, "planted distribution on {} variables", vars.len());
    let free: Vec<u32> = h.isolated.iter().copied().filter(|v| vars.binary_search(v).is_err()).collect();
    let mut by_con: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, v) in &h.edges {
        ensure!(a < fg.m(), Range, "constraint {a} out of range");
        let c = &fg.constraints[a];
        let j = c.scope.iter().position(|&x| x == v).ok_or_else(|| Error::Precondition(format!("variable {v} not in constraint {a}")))?;
        by_con.entry(a).or_default().push(j);
    }
    let mut pending: Vec<(usize, Vec<usize>)> = by_con.into_iter().collect();
    let mut assigned = 0u64;
    let mut states: Vec<(u64, Q)> = vec![(0, Q::one())];
    while !pending.is_empty() {
        // next: the constraint with the most already-assigned variables
        let pick = (0..pending.len())
            .max_by_key(|&i| {
                let (a, pos) = &pending[i];
                let overlap = pos.iter().filter(|&&j| assigned >> local(&vars, fg.constraints[*a].scope[j]) & 1 == 1).count();
                (overlap, std::cmp::Reverse(i))
            })
            .expect("nonempty");
        let (a, pos) = pending.remove(pick);
        let c = &fg.constraints[a];
        let marginal = marginal_on(fg, c, &pos)?;
        let locs: Vec<usize> = pos.iter().map(|&j| local(&vars, c.scope[j])).collect();
        let mut next = Vec::with_capacity(states.len() * marginal.len());
        for (x, p) in &states {
            'pat: for (pat, w) in &marginal {
                let mut y = *x;
                for (i, &l) in locs.iter().enumerate() {
                    let bit = (pat >> i & 1) as u64;
                    if assigned >> l & 1 == 1 {
                        if (x >> l & 1) != bit {
                            continue 'pat;
                        }
                    } else {
                        y |= bit << l;
                    }
                }
                next.push((y, p * w));
            }
        }
        for &l in &locs {
            assigned |= 1 << l;
        }
        states = next;
        ensure!(!states.is_empty(), Infeasible, "planted distribution conditions on a probability-zero event");
    }
    let total: Q = states.iter().map(|(_, p)| p.clone()).sum();
    ensure!(!total.is_zero(), Infeasible, "planted distribution conditions on a probability-zero event");
    let support = states.into_iter().map(|(x, p)| (x, p / &total)).collect();
    Ok(PlantedDistribution { vars, free, support, source: h.clone() })
}

fn local(vars: &[u32], v: u32) -> usize {
    vars.binary_search(&v).expect("edge variable")
}

/// Marginal of the constraint's local distribution on scope positions `pos`, keyed by sub-pattern.
fn marginal_on(fg: &FactorGraph, c: &Constraint, pos: &[usize]) -> Result<Vec<(u32, Q)>> {
    let mut acc: BTreeMap<u32, Q> = BTreeMap::new();
    for (pat, w) in fg.local_support(c)? {
        let mut sub = 0u32;
        for (i, &j) in pos.iter().enumerate() {
            sub |= (pat >> j & 1) << i;
        }
        *acc.entry(sub).or_insert_with(Q::zero) += w;
    }
    Ok(acc.into_iter().filter(|(_, w)| !w.is_zero()).collect())
}

/// `p̃E[x^T] = E_{η_cl(T)}[x^T]` for every `|T| ≤ d`.
pub fn build_pseudoexpectation(fg: &FactorGraph, degree: usize, opts: &ClosureOptions) -> Result<Pseudoexpectation> {
    fg.validate()?;
    let adj = adjacency(fg);
    let monos: Vec<Monomial> = monomials_up_to(fg.n, degree).into_iter().skip(1).collect();
    let mut touched = vec![false; fg.n];
    for c in &fg.constraints {
        for &v in &c.scope {
            touched[v as usize] = true;
        }
    }
    let monos: Vec<Monomial> = monos.into_iter().filter(|m| m.vars().iter().all(|&v| touched[v as usize])).collect();
    let closures: Vec<(Monomial, Subgraph)> = monos
        .into_par_iter()
        .map(|m| {
            let mut h = closure_with(fg, &adj.neighbors, m.vars(), opts)?;
            h.isolated.clear();
            Ok((m, h))
        })
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<Subgraph, Vec<Monomial>> = BTreeMap::new();
    for (m, h) in closures {
        let covered = h.edge_vars();
        if m.vars().iter().all(|v| covered.contains(v)) {
            groups.entry(h).or_default().push(m);
        }
    }
    let groups: Vec<(Subgraph, Vec<Monomial>)> = groups.into_iter().collect();
    let vals: Vec<Vec<(Monomial, Q)>> = groups
        .into_par_iter()
        .map(|(h, ms)| {
            let eta = planted_distribution(fg, &h)?;
            Ok(ms.into_iter().map(|m| {
                let v = eta.moment(&m);
                (m, v)
            }).collect())
        })
        .collect::<Result<_>>()?;
    let mut values: BTreeMap<Monomial, Q> = vals.into_iter().flatten().filter(|(_, v)| !v.is_zero()).collect();
    values.insert(Monomial::one(), Q::one());
    Pseudoexpectation::new(fg.n, degree, values)
}

/// Rows and columns indexed by monomials of degree at most `d/2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentMatrix {
    pub index: Vec<Monomial>,
    pub entries: Vec<Vec<Q>>,
}

impl MomentMatrix {
    pub fn to_f64(&self) -> DMatrix<f64> {
        let k = self.index.len();
        DMatrix::from_fn(k, k, |i, j| self.entries[i][j].to_f64().unwrap_or(f64::NAN))
    }

    /// Lower triangle, one row per line, rationals as `p/q`.
    pub fn to_triangular_text(&self) -> String {
        let mut s = String::new();
        for (i, row) in self.entries.iter().enumerate() {
            let cells: Vec<String> = row[..=i].iter().map(crate::rational::fmt_q).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }
}

pub fn moment_matrix(pe: &dyn Functional, d: usize) -> Result<MomentMatrix> {
    ensure!(d.is_multiple_of(2), Precondition, "moment matrix needs even degree, got {d}");
    ensure!(d <= pe.degree(), Range, "degree {d} exceeds cap {}", pe.degree());
    let index = monomials_up_to(pe.n(), d / 2);
    let entries = index
        .par_iter()
        .map(|a| index.iter().map(|b| pe.get(&a.mul(b))).collect::<Result<Vec<Q>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentMatrix { index, entries })
}

/// Minimum eigenvalue and whether it is at least `-tol`.
pub fn psd_check(m: &DMatrix<f64>, tol: f64) -> (f64, bool) {
    if m.nrows() == 0 {
        return (0.0, true);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    (min, min >= -tol)
}

pub const PSD_TOL: f64 = 1e-9;

/// Pseudo-probability of each scope pattern, `2^{-k} Σ_T p̃E[x^T] a^T`.
pub fn scope_pattern_masses(pe: &dyn Functional, c: &Constraint) -> Result<Vec<Q>> {
    let k = c.arity();
    ensure!(k <= pe.degree(), Range, "arity {k} exceeds degree cap {}", pe.degree());
    let mut moments: Vec<Q> = (0u32..1 << k)
        .map(|mask| pe.get(&Monomial::from_vars((0..k).filter(|j| mask >> j & 1 == 1).map(|j| c.scope[j]))))
        .collect::<Result<_>>()?;
    // walsh_hadamard carries a (-1)^|T| twist; conjugating by it gives the inverse direction
    let twist = |v: &mut Vec<Q>| {
        for (t, x) in v.iter_mut().enumerate() {
            if t.count_ones() % 2 == 1 {
                *x = -x.clone();
            }
        }
    };
    twist(&mut moments);
    walsh_hadamard(&mut moments);
    twist(&mut moments);
    let scale = qu(1 << k);
    Ok(moments.into_iter().map(|x| x / &scale).collect())
}

/// Zero pseudo-mass on every pattern outside the constraint's local support.
pub fn check_weak_satisfaction(pe: &dyn Functional, fg: &FactorGraph, c: &Constraint) -> Result<bool> {
    let masses = scope_pattern_masses(pe, c)?;
    for (pat, mass) in masses.iter().enumerate() {
        if fg.local_prob(c, pat as u32)?.is_zero() && !mass.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `(p̃E[Q] − b, p̃E[(Q − b)²])`.
pub fn check_identity_pvz(pe: &dyn Functional, q: &Polynomial, b: &Q) -> Result<(Q, Q)> {
    ensure!(2 * q.degree() <= pe.degree(), Range, "2·deg(Q) = {} exceeds cap {}", 2 * q.degree(), pe.degree());
    let shifted = q.sub(&Polynomial::constant(b.clone()));
    Ok((pe.eval(&shifted)?, pe.eval(&shifted.mul(&shifted))?))
}

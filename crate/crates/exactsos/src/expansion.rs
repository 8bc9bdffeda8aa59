//! Income accounting and plausibility audits over small connected constraint sets.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csp_core::FactorGraph;
use crate::error::{ensure, Error, Result};
use crate::rational::{qu, serde_q, Q};

/// Counts for an edge-induced subgraph: constraints `c`, edges `e`, variables `v`, `T = Σ t_a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphStats {
    pub c: u64,
    pub e: u64,
    pub v: u64,
    pub t_total: u64,
}

impl SubgraphStats {
    /// Stats for an edge set given as `(constraint, variable)` pairs.
    pub fn from_edges(fg: &FactorGraph, edges: &[(usize, u32)]) -> Result<Self> {
        let mut cons = BTreeSet::new();
        let mut vars = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for &(a, x) in edges {
            ensure!(a < fg.m(), Range, "constraint {a} out of range");
            ensure!(fg.constraints[a].scope.contains(&x), Precondition, "variable {x} is not in constraint {a}");
            ensure!(seen.insert((a, x)), Precondition, "repeated edge ({a}, {x})");
            cons.insert(a);
            vars.insert(x);
        }
        let t_total = cons.iter().map(|&a| fg.constraints[a].t as u64).sum();
        Ok(SubgraphStats { c: cons.len() as u64, e: edges.len() as u64, v: vars.len() as u64, t_total })
    }

    pub fn constraint_induced(fg: &FactorGraph, cons: &[usize]) -> Result<Self> {
        let edges: Vec<(usize, u32)> = cons
            .iter()
            .flat_map(|&a| fg.constraints[a].scope.iter().map(move |&x| (a, x)))
            .collect();
        Self::from_edges(fg, &edges)
    }
}

/// `I(H) = T - ζc - 2e + 2v`.
pub fn income(stats: &SubgraphStats, zeta: &Q) -> Q {
    qu(stats.t_total) - zeta * qu(stats.c) - qu(2 * stats.e) + qu(2 * stats.v)
}

/// Whether `v >= e - T/2 + ζc`.
pub fn is_plausible(stats: &SubgraphStats, zeta: &Q) -> bool {
    qu(stats.v) >= qu(stats.e) - qu(stats.t_total) / qu(2) + zeta * qu(stats.c)
}

pub fn certified_degree(zeta: &Q, small: u64) -> Q {
    zeta * qu(small) / qu(3)
}

/// `ζ = 1 / ln Δ`.
pub fn zeta_for_degree(delta: f64) -> f64 {
    1.0 / delta.ln()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub constraints: Vec<usize>,
    pub stats: SubgraphStats,
    #[serde(with = "serde_q")]
    pub income: Q,
    /// `v - (e - T/2 + ζc)`, negative for a violation.
    #[serde(with = "serde_q")]
    pub slack: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditOutcome {
    #[serde(with = "serde_q")]
    pub zeta: Q,
    pub small: u64,
    pub plausible: bool,
    pub sets_checked: u64,
    /// Whether every constraint arity is at most `ζ·SMALL`.
    pub arity_condition: bool,
    pub witness: Option<Witness>,
}

pub(crate) struct Adjacency {
    pub(crate) neighbors: Vec<Vec<usize>>,
}

/// Constraints sharing a variable, sorted.
pub(crate) fn adjacency(fg: &FactorGraph) -> Adjacency {
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); fg.n];
    for (i, c) in fg.constraints.iter().enumerate() {
        for &v in &c.scope {
            by_var[v as usize].push(i);
        }
    }
    let neighbors = fg
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s: Vec<usize> = c.scope.iter().flat_map(|&v| by_var[v as usize].iter().copied()).filter(|&j| j != i).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    Adjacency { neighbors }
}

struct Search<'a> {
    fg: &'a FactorGraph,
    adj: &'a Adjacency,
    small: usize,
    zeta_num: BigInt,
    zeta_den: BigInt,
    var_count: Vec<u32>,
    stats: SubgraphStats,
    sub: Vec<usize>,
    checked: u64,
    budget: u64,
    prune: bool,
    best: Option<Vec<usize>>,
}

impl Search<'_> {
    fn violated(&self) -> bool {
        // 2v·q < (2e - T)·q + 2pc with ζ = p/q
        let s = &self.stats;
        let lhs = BigInt::from(2 * s.v) * &self.zeta_den;
        let rhs = BigInt::from(2 * s.e as i64 - s.t_total as i64) * &self.zeta_den + BigInt::from(2 * s.c) * &self.zeta_num;
        lhs < rhs
    }

    fn push(&mut self, a: usize) {
        let c = &self.fg.constraints[a];
        self.sub.push(a);
        self.stats.c += 1;
        self.stats.e += c.scope.len() as u64;
        self.stats.t_total += c.t as u64;
        for &v in &c.scope {
            if self.var_count[v as usize] == 0 {
                self.stats.v += 1;
            }
            self.var_count[v as usize] += 1;
        }
    }

    fn pop(&mut self) {
        let a = self.sub.pop().expect("nonempty");
        let c = &self.fg.constraints[a];
        self.stats.c -= 1;
        self.stats.e -= c.scope.len() as u64;
        self.stats.t_total -= c.t as u64;
        for &v in &c.scope {
            self.var_count[v as usize] -= 1;
            if self.var_count[v as usize] == 0 {
                self.stats.v -= 1;
            }
        }
    }

    fn record(&mut self) -> Result<()> {
        self.checked += 1;
        if self.checked > self.budget {
            return Err(Error::Resource(format!("audit exceeded {} subgraphs", self.budget)));
        }
        if self.violated() {
            let mut ids = self.sub.clone();
            ids.sort_unstable();
            let better = match &self.best {
                None => true,
                Some(b) => (ids.len(), &ids) < (b.len(), b),
            };
            if better {
                self.best = Some(ids);
            }
        }
        Ok(())
    }

    fn extend(&mut self, ext: Vec<usize>, root: usize) -> Result<()> {
        self.record()?;
        if self.sub.len() == self.small {
            return Ok(());
        }
        if let Some(b) = self.best.as_ref().filter(|_| self.prune) {
            if b.len() <= self.sub.len() {
                return Ok(());
            }
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &self.adj.neighbors[w] {
                if u > root
                    && !self.sub.contains(&u)
                    && !next.contains(&u)
                    && u != w
                    && !self.sub.iter().any(|&s| self.adj.neighbors[s].binary_search(&u).is_ok())
                {
                    next.push(u);
                }
            }
            self.push(w);
            self.extend(next, root)?;
            self.pop();
        }
        Ok(())
    }
}

/// Checks plausibility of every connected constraint-induced subgraph with at most `small` constraints.
pub fn audit_plausibility(fg: &FactorGraph, zeta: &Q, small: u64, budget: u64) -> Result<AuditOutcome> {
    audit_inner(fg, zeta, small, budget, true)
}

fn audit_inner(fg: &FactorGraph, zeta: &Q, small: u64, budget: u64, prune: bool) -> Result<AuditOutcome> {
    ensure!(!zeta.is_negative(), Range, "ζ must be nonnegative");
    ensure!(small >= 1, Precondition, "SMALL must be positive");
    fg.validate()?;
    let adj = adjacency(fg);
    let bound = zeta * qu(small);
    let arity_condition = fg.constraints.iter().all(|c| qu(c.arity() as u64) <= bound);
    let results: Vec<Result<(u64, Option<Vec<usize>>)>> = (0..fg.m())
        .into_par_iter()
        .map(|root| {
            let mut s = Search {
                fg,
                adj: &adj,
                small: small as usize,
                zeta_num: zeta.numer().clone(),
                zeta_den: zeta.denom().clone(),
                var_count: vec![0; fg.n],
                stats: SubgraphStats { c: 0, e: 0, v: 0, t_total: 0 },
                sub: Vec::new(),
                checked: 0,
                budget,
                prune,
                best: None,
            };
            s.push(root);
            let ext: Vec<usize> = adj.neighbors[root].iter().copied().filter(|&u| u > root).collect();
            s.extend(ext, root)?;
            Ok((s.checked, s.best))
        })
        .collect();
    let mut checked = 0u64;
    let mut best: Option<Vec<usize>> = None;
    for r in results {
        let (c, b) = r?;
        checked += c;
        if let Some(b) = b {
            if best.as_ref().is_none_or(|cur| (b.len(), &b) < (cur.len(), cur)) {
                best = Some(b);
            }
        }
    }
    ensure!(checked <= budget, Resource, "audit exceeded {budget} subgraphs");
    let witness = match best {
        Some(ids) => {
            let stats = SubgraphStats::constraint_induced(fg, &ids)?;
            let slack = qu(stats.v) - (qu(stats.e) - qu(stats.t_total) / qu(2) + zeta * qu(stats.c));
            Some(Witness { income: income(&stats, zeta), constraints: ids, stats, slack })
        }
        None => None,
    };
    Ok(AuditOutcome { zeta: zeta.clone(), small, plausible: witness.is_none(), sets_checked: checked, arity_condition, witness })
}

/// Credits `2 - deg_H(x)` per variable minus debits `deg_H(a) - t_a` per constraint minus `ζc`.
pub fn income_by_credits(fg: &FactorGraph, edges: &[(usize, u32)], zeta: &Q) -> Q {
    let mut var_deg: BTreeMap<u32, i64> = BTreeMap::new();
    let mut con_deg: BTreeMap<usize, i64> = BTreeMap::new();
    for &(a, x) in edges {
        *var_deg.entry(x).or_default() += 1;
        *con_deg.entry(a).or_default() += 1;
    }
    let credits: i64 = var_deg.values().map(|d| 2 - d).sum();
    let debits: i64 = con_deg.iter().map(|(&a, d)| d - fg.constraints[a].t as i64).sum();
    Q::from_integer(BigInt::from(credits - debits)) - zeta * qu(con_deg.len() as u64)
}

pub fn income_f64(stats: &SubgraphStats, zeta: &Q) -> f64 {
    income(stats, zeta).to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp_core::{Constraint, ConstraintKind, LocalDistribution};
    use crate::rational::q;
    use proptest::prelude::*;

    fn xor3_graph(n: usize, scopes: &[[u32; 3]]) -> FactorGraph {
        let mut fg = FactorGraph::new(n);
        let d = fg.add_distribution(LocalDistribution::parity(3, true).unwrap());
        for s in scopes {
            fg.push(Constraint { scope: s.to_vec(), negation: 0, t: 3, predicate: None, distribution: Some(d), kind: ConstraintKind::Base, group: None })
                .unwrap();
        }
        fg
    }

    #[test]
    fn income_examples() {
        let fg = xor3_graph(3, &[[0, 1, 2]]);
        let s = SubgraphStats::constraint_induced(&fg, &[0]).unwrap();
        assert_eq!(income(&s, &q(1, 10)), q(29, 10));
        let fg = xor3_graph(3, &[[0, 1, 2], [0, 1, 2]]);
        let s = SubgraphStats::constraint_induced(&fg, &[0, 1]).unwrap();
        assert_eq!(income(&s, &q(1, 5)), q(-2, 5));
    }

    #[test]
    fn duplicate_is_flagged() {
        let fg = xor3_graph(6, &[[0, 1, 2], [0, 1, 2], [3, 4, 5]]);
        let out = audit_plausibility(&fg, &q(1, 5), 2, 1 << 20).unwrap();
        assert!(!out.plausible);
        assert!(!out.arity_condition);
        assert_eq!(out.witness.unwrap().constraints, vec![0, 1]);
    }

    #[test]
    fn single_constraint_threshold() {
        let fg = xor3_graph(3, &[[0, 1, 2]]);
        assert!(audit_plausibility(&fg, &q(3, 2), 1, 100).unwrap().plausible);
        assert!(!audit_plausibility(&fg, &q(8, 5), 1, 100).unwrap().plausible);
    }

    /// All connected constraint subsets of size <= small, by brute force over subsets.
    fn brute_count(fg: &FactorGraph, small: usize) -> u64 {
        let m = fg.m();
        let mut count = 0;
        for mask in 1u32..1 << m {
            if mask.count_ones() as usize > small {
                continue;
            }
            let ids: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            let mut seen = vec![ids[0]];
            let mut frontier = vec![ids[0]];
            while let Some(a) = frontier.pop() {
                for &b in &ids {
                    if !seen.contains(&b) && fg.constraints[a].scope.iter().any(|v| fg.constraints[b].scope.contains(v)) {
                        seen.push(b);
                        frontier.push(b);
                    }
                }
            }
            if seen.len() == ids.len() {
                count += 1;
            }
        }
        count
    }

    proptest! {
        #[test]
        fn esu_enumerates_each_connected_set_once(seed in any::<u64>()) {
            let scopes: Vec<[u32; 3]> = (0..8u64).map(|j| {
                let x = seed.rotate_left(j as u32 * 7) ^ j.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let a = (x % 9) as u32;
                let b = (a + 1 + ((x >> 8) % 8) as u32) % 9;
                let mut c = (x >> 16) as u32 % 9;
                while c == a || c == b { c = (c + 1) % 9; }
                [a, b, c]
            }).collect();
            let fg = xor3_graph(9, &scopes);
            let out = audit_inner(&fg, &q(0, 1), 4, 1 << 20, false).unwrap();
            prop_assert_eq!(out.sets_checked, brute_count(&fg, 4));
        }

        #[test]
        fn audit_monotone_in_small(seed in any::<u64>()) {
            let scopes: Vec<[u32; 3]> = (0..6u64).map(|j| {
                let x = seed.rotate_left(j as u32 * 11);
                let a = (x % 7) as u32;
                let b = (a + 1 + ((x >> 8) % 6) as u32) % 7;
                let mut c = (x >> 16) as u32 % 7;
                while c == a || c == b { c = (c + 1) % 7; }
                [a, b, c]
            }).collect();
            let fg = xor3_graph(7, &scopes);
            let z = q(1, 5);
            let mut prev = true;
            for small in 1..=5 {
                let ok = audit_plausibility(&fg, &z, small, 1 << 20).unwrap().plausible;
                prop_assert!(prev || !ok);
                prev = ok;
            }
        }
    }
}

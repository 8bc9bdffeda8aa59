//! Random 3AND to Min-Bisection with clause cliques and a giant clique.

use std::collections::BTreeMap;

use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BisectionInstance, Direction, Provenance, Role};
use crate::csp_core::{Assignment, Constraint, ConstraintKind, FactorGraph, LocalDistribution, Predicate};
use crate::error::{ensure, Result};
use crate::lp::{minimize, LpOutcome};
use crate::poly::Polynomial;
use crate::pseudoexp::Functional;
use crate::rational::{q, qi, qu, serde_q, Q};

/// Edge cap for materialized instances.
pub const MAX_EDGES: u64 = 50_000_000;

/// `m` un-negated 3AND clauses on `n` variables, each carrying the odd-parity local distribution.
pub fn random_3and(n: usize, m: usize, seed: u64) -> Result<FactorGraph> {
    ensure!(n >= 3, Precondition, "3AND needs at least 3 variables");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fg = FactorGraph::new(n);
    let p = fg.add_predicate(Predicate::and(3)?);
    let d = fg.add_distribution(LocalDistribution::parity(3, true)?);
    for _ in 0..m {
        let scope: Vec<u32> = sample(&mut rng, n, 3).into_iter().map(|v| v as u32).collect();
        fg.push(Constraint { scope, negation: 0, t: 3, predicate: Some(p), distribution: Some(d), kind: ConstraintKind::Base, group: None })?;
    }
    Ok(fg)
}

fn check_phi(phi: &FactorGraph) -> Result<()> {
    let and3 = Predicate::and(3)?;
    ensure!(phi.n.is_multiple_of(2), Precondition, "balanced 3AND needs an even number of variables, got {}", phi.n);
    ensure!(phi.m() > 0, Precondition, "3AND instance has no clauses");
    for c in &phi.constraints {
        ensure!(c.arity() == 3 && c.negation == 0, Precondition, "expected un-negated 3-ary clauses");
        let ok = c.predicate.map(|p| phi.predicates[p].arity == 3 && (0u32..8).all(|x| phi.predicates[p].value(x) == and3.value(x))).unwrap_or(false);
        ensure!(ok, Precondition, "clause predicate is not 3AND");
    }
    Ok(())
}

fn satisfied(phi: &FactorGraph, x: &Assignment) -> u64 {
    phi.constraints.iter().filter(|c| c.scope.iter().all(|&v| x.values()[v as usize] == 1)).count() as u64
}

/// Distribution on balanced assignments that each satisfy exactly `k_sat` clauses, with all first moments zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeigePhi {
    pub n: usize,
    pub m: u64,
    pub k_sat: u64,
    /// Satisfied count is `(1 - ε_Φ) M / 4`.
    #[serde(with = "serde_q")]
    pub eps_phi: Q,
    pub support: Vec<(Vec<i8>, String)>,
}

impl FeigePhi {
    pub fn distribution(&self) -> Result<Vec<(Assignment, Q)>> {
        self.support.iter().map(|(x, p)| Ok((Assignment::new(x.clone())?, crate::rational::parse_q(p)?))).collect()
    }
}

/// Largest `K ≤ M/4` admitting such a distribution, found by exact LP over balanced assignments.
pub fn exactify_feige_phi(phi: &FactorGraph) -> Result<FeigePhi> {
    check_phi(phi)?;
    let n = phi.n;
    ensure!(n <= 20, Resource, "balanced-assignment enumeration limited to n ≤ 20, got {n}");
    let m = phi.m() as u64;
    let mut by_k: BTreeMap<u64, Vec<Assignment>> = BTreeMap::new();
    for bits in 0u64..1 << n {
        if bits.count_ones() as usize * 2 != n {
            continue;
        }
        let x = Assignment::from_bits(bits, n);
        by_k.entry(satisfied(phi, &x)).or_default().push(x);
    }
    for k in (0..=m / 4).rev() {
        let Some(cands) = by_k.get(&k) else { continue };
        let mut a: Vec<Vec<Q>> = vec![vec![Q::one(); cands.len()]];
        let mut b = vec![Q::one()];
        for i in 0..n {
            a.push(cands.iter().map(|x| qi(x.values()[i] as i64)).collect());
            b.push(Q::zero());
        }
        let c = vec![Q::zero(); cands.len()];
        if let LpOutcome::Optimal { x, .. } = minimize(&a, &b, &c) {
            let support = cands
                .iter()
                .zip(x)
                .filter(|(_, p)| !p.is_zero())
                .map(|(a, p)| (a.values().to_vec(), crate::rational::fmt_q(&p)))
                .collect();
            let eps_phi = Q::one() - qu(4 * k) / qu(m);
            return Ok(FeigePhi { n, m, k_sat: k, eps_phi, support });
        }
    }
    Err(crate::Error::Infeasible("no satisfied count K ≤ M/4 admits a balanced distribution with zero first moments".into()))
}

/// Vertices: variables, `M` cliques of size `M' = 3M + 1`, a giant clique of `M''` vertices, then padding.
pub fn build_min_bisection_feige(phi: &FactorGraph, eps_phi: &Q) -> Result<BisectionInstance> {
    check_phi(phi)?;
    ensure!(*eps_phi >= Q::zero() && *eps_phi <= Q::one(), Range, "ε_Φ must lie in [0, 1]");
    let n = phi.n as u64;
    let m = phi.m() as u64;
    let mp = 3 * m + 1;
    let exact = qu(m * mp) * (Q::one() + eps_phi) / qu(2);
    let mpp = (exact.clone() + q(1, 2)).floor().to_integer().to_u64().expect("fits");
    let base = n + m * mp + mpp;
    let pad = base % 2;
    let edges_total = m * (mp * (mp - 1) / 2) + mpp * mpp.saturating_sub(1) / 2 + 3 * m;
    ensure!(edges_total <= MAX_EDGES, Resource, "instance would have {edges_total} edges, cap {MAX_EDGES}");
    let vertices = (base + pad) as usize;
    let mut roles = Vec::with_capacity(vertices);
    roles.extend((0..n as u32).map(|var| Role::Variable { var }));
    for j in 0..m as u32 {
        roles.extend((0..mp as u32).map(|index| Role::ClauseClique { clause: j, index }));
    }
    roles.extend((0..mpp as u32).map(|index| Role::Giant { index }));
    roles.extend((0..pad as u32).map(|index| Role::Pad { index }));
    let mut edges = Vec::with_capacity(edges_total as usize);
    let clique = |edges: &mut Vec<(u32, u32)>, start: u64, size: u64| {
        for a in 0..size {
            for b in a + 1..size {
                edges.push(((start + a) as u32, (start + b) as u32));
            }
        }
    };
    for j in 0..m {
        let start = n + j * mp;
        clique(&mut edges, start, mp);
        for &v in &phi.constraints[j as usize].scope {
            edges.push((v, start as u32));
        }
    }
    clique(&mut edges, n + m * mp, mpp);
    let provenance = Provenance {
        construction: "feige-min-bisection".into(),
        n_base: Some(n),
        m: Some(m),
        m_prime: Some(mp),
        m_double_prime: Some(mpp),
        eps_phi: Some(eps_phi.clone()),
        pad,
        m_double_prime_rounded: !exact.is_integer(),
        completeness_target: Some(q(3, 4) + q(3, 4) * eps_phi),
        soundness_target: Some(Q::one()),
        ..Default::default()
    };
    let inst = BisectionInstance { vertices, edges, direction: Direction::Min, bisection: true, roles, provenance };
    inst.validate()?;
    Ok(inst)
}

/// True variables, satisfied clause cliques and the giant clique on the `+1` side.
pub fn completeness_bipartition(inst: &BisectionInstance, phi: &FactorGraph, x: &Assignment) -> Result<Vec<i8>> {
    ensure!(x.len() == phi.n, Precondition, "assignment length {} vs N = {}", x.len(), phi.n);
    let sat: Vec<bool> = phi.constraints.iter().map(|c| c.scope.iter().all(|&v| x.values()[v as usize] == 1)).collect();
    let mut side: Vec<i8> = inst
        .roles
        .iter()
        .map(|r| match *r {
            Role::Variable { var } => x.values()[var as usize],
            Role::ClauseClique { clause, .. } => {
                if sat[clause as usize] {
                    1
                } else {
                    -1
                }
            }
            Role::Giant { .. } => 1,
            _ => 0,
        })
        .collect();
    let mut balance: i64 = side.iter().map(|&s| s as i64).sum();
    for s in side.iter_mut().filter(|s| **s == 0) {
        *s = if balance > 0 { -1 } else { 1 };
        balance += *s as i64;
    }
    ensure!(inst.is_bisection(&side), Precondition, "assignment does not induce an exact bisection (imbalance {balance})");
    Ok(side)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeigeObjective {
    /// `(3/2)M − 3 Σ_j p̃E[Ind_j] + ½ Σ_a deg(a) p̃E[x_a]`.
    #[serde(with = "serde_q")]
    pub symbolic: Q,
    /// `(3/2)M − (3(1−ε_Φ)/4)M + Σ_a deg(a) p̃E[x_a]`.
    #[serde(with = "serde_q")]
    pub stated: Q,
    /// `¼ Σ_{(u,v)∈E} p̃E[(u − v)²]` under the completeness mapping.
    #[serde(with = "serde_q")]
    pub edge_sum: Q,
    #[serde(with = "serde_q")]
    pub satisfied_mass: Q,
    /// `Σ_j p̃E[Ind_j] − (1−ε_Φ)M/4`.
    #[serde(with = "serde_q")]
    pub objective_residual: Q,
    #[serde(with = "serde_q")]
    pub degree_term: Q,
}

fn indicator(scope: &[u32]) -> Polynomial {
    scope.iter().fold(Polynomial::constant(Q::one()), |acc, &v| {
        acc.mul(&Polynomial::constant(q(1, 2)).add(&Polynomial::var(v).scale(&q(1, 2))))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    One,
    Var(u32),
    Clause(u32),
}

/// `p̃E[OBJ]` under `v_i = x_i`, `y_j^(a) = 2·Ind(C_j) − 1`, `z = 1`, three ways.
pub fn feige_objective(pe: &dyn Functional, inst: &BisectionInstance, phi: &FactorGraph, eps_phi: &Q) -> Result<FeigeObjective> {
    check_phi(phi)?;
    ensure!(pe.n() == phi.n, Precondition, "p̃E on {} variables, Φ has {}", pe.n(), phi.n);
    ensure!(pe.degree() >= 3, Range, "p̃E degree {} is below the 3 needed for clause indicators", pe.degree());
    let sum = (0..phi.n as u32).fold(Polynomial::zero(), |acc, v| acc.add(&Polynomial::var(v)));
    ensure!(pe.eval(&sum)?.is_zero(), Precondition, "p̃E is not balanced: p̃E[Σx] ≠ 0");
    ensure!(pe.eval(&sum.mul(&sum))?.is_zero(), Precondition, "balance does not hold with pseudovariance zero");
    let m = qu(phi.m() as u64);
    let inds: Vec<Polynomial> = phi.constraints.iter().map(|c| indicator(&c.scope)).collect();
    let mut sat = Q::zero();
    for p in &inds {
        sat += pe.eval(p)?;
    }
    let mut deg = vec![0u64; phi.n];
    for c in &phi.constraints {
        for &v in &c.scope {
            deg[v as usize] += 1;
        }
    }
    let mut degree_term = Q::zero();
    for (v, &d) in deg.iter().enumerate() {
        if d > 0 {
            degree_term += qu(d) * pe.get(&crate::poly::Monomial::var(v as u32))?;
        }
    }
    let symbolic = q(3, 2) * &m - qi(3) * &sat + &degree_term / qi(2);
    let stated = q(3, 2) * &m - q(3, 4) * (Q::one() - eps_phi) * &m + &degree_term;
    let class = |r: &Role| match *r {
        Role::Variable { var } => Some(Class::Var(var)),
        Role::ClauseClique { clause, .. } => Some(Class::Clause(clause)),
        Role::Giant { .. } => Some(Class::One),
        _ => None,
    };
    let mut counts: BTreeMap<(Class, Class), u64> = BTreeMap::new();
    for &(u, v) in &inst.edges {
        let (a, b) = (class(&inst.roles[u as usize]), class(&inst.roles[v as usize]));
        let (Some(a), Some(b)) = (a, b) else {
            return Err(crate::Error::Precondition(format!("edge ({u}, {v}) touches a padding vertex")));
        };
        *counts.entry(if a <= b { (a, b) } else { (b, a) }).or_default() += 1;
    }
    let poly = |c: Class| -> Result<Polynomial> {
        Ok(match c {
            Class::One => Polynomial::constant(Q::one()),
            Class::Var(v) => Polynomial::var(v),
            Class::Clause(j) => {
                let ind = inds.get(j as usize).ok_or_else(|| crate::Error::Range(format!("clause {j} out of range")))?;
                ind.scale(&qi(2)).sub(&Polynomial::constant(Q::one()))
            }
        })
    };
    let mut edge_sum = Q::zero();
    for ((a, b), count) in counts {
        if a == b {
            continue;
        }
        let d = poly(a)?.sub(&poly(b)?);
        edge_sum += qu(count) * pe.eval(&d.mul(&d))?;
    }
    edge_sum /= qi(4);
    let objective_residual = &sat - (Q::one() - eps_phi) * &m / qi(4);
    Ok(FeigeObjective { symbolic, stated, edge_sum, satisfied_mass: sat, objective_residual, degree_term })
}

/// `M'' = M M' (1 + ε_Φ)/2` exactly, when it is an integer.
pub fn exact_m_double_prime(m: u64, eps_phi: &Q) -> Option<u64> {
    let v = qu(m * (3 * m + 1)) * (Q::one() + eps_phi) / qu(2);
    v.is_integer().then(|| v.to_integer().to_u64()).flatten()
}

/// `M'' = M'(M − 2K)`: the giant-clique size that balances `K` satisfied clause cliques.
pub fn m_double_prime_for(m: u64, k_sat: u64) -> u64 {
    (3 * m + 1) * (m - 2 * k_sat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudoexp::DistributionFunctional;

    #[test]
    fn small_counts() {
        let phi = random_3and(4, 2, 1).unwrap();
        let g = build_min_bisection_feige(&phi, &Q::one()).unwrap();
        let p = &g.provenance;
        assert_eq!((p.m_prime, p.m_double_prime), (Some(7), Some(14)));
        let clause_vertices = g.roles.iter().filter(|r| matches!(r, Role::ClauseClique { .. })).count();
        assert_eq!(clause_vertices, 14);
        assert_eq!(g.vertices, 4 + 14 + 14);
        let clause_edges = g
            .edges
            .iter()
            .filter(|&&(u, v)| matches!(g.roles[u as usize], Role::Variable { .. }) != matches!(g.roles[v as usize], Role::Variable { .. }))
            .count();
        assert_eq!(clause_edges, 6);
    }

    #[test]
    fn integral_point_matches_closed_form() {
        let phi = random_3and(8, 16, 3).unwrap();
        let ex = exactify_feige_phi(&phi).unwrap();
        let g = build_min_bisection_feige(&phi, &ex.eps_phi).unwrap();
        assert_eq!(g.provenance.m_double_prime, Some(m_double_prime_for(16, ex.k_sat)));
        for (x, _) in ex.distribution().unwrap() {
            let side = completeness_bipartition(&g, &phi, &x).unwrap();
            assert!(g.cut_size(&side).unwrap() <= 3 * 16);
            let point = DistributionFunctional::new(8, 8, vec![(x.clone(), Q::one())]).unwrap();
            let o = feige_objective(&point, &g, &phi, &ex.eps_phi).unwrap();
            assert_eq!(o.symbolic, o.edge_sum);
            assert_eq!(o.edge_sum, qu(g.cut_size(&side).unwrap()));
            assert!(o.objective_residual.is_zero());
        }
        let mix = DistributionFunctional::new(8, 8, ex.distribution().unwrap()).unwrap();
        let o = feige_objective(&mix, &g, &phi, &ex.eps_phi).unwrap();
        assert_eq!(o.symbolic, o.edge_sum);
        assert_eq!(o.stated, o.symbolic);
        assert_eq!(o.symbolic, (q(3, 4) + q(3, 4) * &ex.eps_phi) * qu(16));
    }

    #[test]
    fn unbalanced_rejected() {
        let phi = random_3and(4, 2, 1).unwrap();
        let g = build_min_bisection_feige(&phi, &Q::one()).unwrap();
        let ones = DistributionFunctional::new(4, 4, vec![(Assignment::new(vec![1; 4]).unwrap(), Q::one())]).unwrap();
        assert!(feige_objective(&ones, &g, &phi, &Q::one()).is_err());
    }
}

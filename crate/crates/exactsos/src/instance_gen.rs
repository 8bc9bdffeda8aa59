//! Seeded random CSP generation, batch sampling and sparse exactification repair.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csp_core::{Assignment, Constraint, ConstraintKind, FactorGraph, LocalDistribution, Predicate};
use crate::error::{ensure, Result};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn distinct_scope(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<u32> {
    sample(rng, n, k).into_iter().map(|v| v as u32).collect()
}

fn template(fg: &mut FactorGraph, p: &Predicate, nu: Option<&LocalDistribution>) -> Result<(usize, Option<usize>, usize)> {
    if let Some(nu) = nu {
        ensure!(nu.arity == p.arity, Precondition, "distribution arity {} vs predicate arity {}", nu.arity, p.arity);
    }
    let pi = fg.add_predicate(p.clone());
    let di = nu.map(|d| fg.add_distribution(d.clone()));
    let t = nu.map(|d| d.uniformity + 1).unwrap_or(1).min(p.arity + 1);
    Ok((pi, di, t))
}

/// `m` constraints on uniformly random ordered scopes of distinct variables with uniform negations.
pub fn random_csp(n: usize, m: usize, p: &Predicate, nu: Option<&LocalDistribution>, seed: u64) -> Result<FactorGraph> {
    let k = p.arity;
    ensure!(k <= n, Precondition, "arity {k} exceeds n = {n}");
    let mut fg = FactorGraph::new(n);
    let (pi, di, t) = template(&mut fg, p, nu)?;
    let mut r = rng(seed);
    for _ in 0..m {
        let scope = distinct_scope(&mut r, n, k);
        let negation = r.gen_range(0..1u32 << k);
        fg.push(Constraint { scope, negation, t, predicate: Some(pi), distribution: di, kind: ConstraintKind::Base, group: None })?;
    }
    Ok(fg)
}

/// `m / r` groups; each group uses `rk` distinct variables and one shared negation pattern.
pub fn batch_sample_csp(n: usize, m: usize, r: usize, p: &Predicate, nu: Option<&LocalDistribution>, seed: u64) -> Result<FactorGraph> {
    let k = p.arity;
    ensure!(r >= 1 && m.is_multiple_of(r), Precondition, "r = {r} does not divide m = {m}");
    ensure!(r * k <= n, Precondition, "a group needs rk = {} distinct variables but n = {n}", r * k);
    let mut fg = FactorGraph::new(n);
    let (pi, di, t) = template(&mut fg, p, nu)?;
    let mut rg = rng(seed);
    for g in 0..m / r {
        let vars = distinct_scope(&mut rg, n, r * k);
        let negation = rg.gen_range(0..1u32 << k);
        for chunk in vars.chunks(k) {
            fg.push(Constraint {
                scope: chunk.to_vec(),
                negation,
                t,
                predicate: Some(pi),
                distribution: di,
                kind: ConstraintKind::Base,
                group: Some(g as u32),
            })?;
        }
    }
    Ok(fg)
}

/// Random k-XOR: constraint `j` asserts `x^{S_j} = b_j`, encoded as the k-ary parity predicate with
/// a negation mask whose sign product is `b_j`. When `planted` is given, `b_j` agrees with it.
pub fn random_kxor(n: usize, m: usize, k: usize, planted: Option<&Assignment>, seed: u64) -> Result<FactorGraph> {
    ensure!(k >= 1 && k <= n, Precondition, "arity {k} must lie in 1..={n}");
    if let Some(x) = planted {
        ensure!(x.len() == n, Precondition, "planted assignment length {} vs n = {n}", x.len());
    }
    let mut fg = FactorGraph::new(n);
    let pi = fg.add_predicate(Predicate::xor(k)?);
    let di = fg.add_distribution(LocalDistribution::parity(k, k % 2 == 1)?);
    let mut r = rng(seed);
    for _ in 0..m {
        let scope = distinct_scope(&mut r, n, k);
        let sign: i8 = match planted {
            Some(x) => scope.iter().map(|&v| x.values()[v as usize]).product(),
            None => {
                if r.gen_bool(0.5) {
                    1
                } else {
                    -1
                }
            }
        };
        let negation = if sign > 0 { 0 } else { 1 };
        fg.push(Constraint { scope, negation, t: k, predicate: Some(pi), distribution: Some(di), kind: ConstraintKind::Base, group: None })?;
    }
    Ok(fg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Plain,
    /// Runs are formed within buckets of equal negation pattern.
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactifyReport {
    pub r: usize,
    pub mode: RunMode,
    pub surviving_groups: usize,
    pub collision_runs: usize,
    pub leftover_constraints: usize,
    /// Runs demoted because they share a variable with a pinned run.
    pub cascaded_runs: usize,
    /// Number of constraints whose variables are all pinned (`C`).
    pub pinned_constraints: usize,
    pub pinned_variables: usize,
    pub pinned_satisfied: usize,
    pub pinned_unsatisfied: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseExactify {
    pub graph: FactorGraph,
    pub report: ExactifyReport,
}

/// Groups consecutive runs of `r` constraints into composite constraints; runs whose scopes
/// intersect, and the leftover constraints, have all their variables pinned to -1.
pub fn sparse_exactify(fg: &FactorGraph, r: usize, mode: RunMode) -> Result<SparseExactify> {
    ensure!(r >= 1, Precondition, "r must be positive");
    fg.validate()?;
    let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, c) in fg.constraints.iter().enumerate() {
        let key = match mode {
            RunMode::Plain => 0,
            RunMode::Stratified => c.negation,
        };
        buckets.entry(key).or_default().push(i);
    }
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut pinned_cons: Vec<usize> = Vec::new();
    let mut leftover = 0;
    for ids in buckets.values() {
        let full = ids.len() / r * r;
        for chunk in ids[..full].chunks(r) {
            runs.push(chunk.to_vec());
        }
        leftover += ids.len() - full;
        pinned_cons.extend_from_slice(&ids[full..]);
    }
    let disjoint = |run: &[usize]| {
        let mut seen = HashSet::new();
        run.iter().all(|&c| fg.constraints[c].scope.iter().all(|v| seen.insert(*v)))
    };
    let mut alive: Vec<bool> = runs.iter().map(|run| disjoint(run)).collect();
    let collision_runs = alive.iter().filter(|a| !**a).count();
    let mut pinned = vec![false; fg.n];
    let mark = |pinned: &mut Vec<bool>, c: usize| {
        for &v in &fg.constraints[c].scope {
            pinned[v as usize] = true;
        }
    };
    for &c in &pinned_cons {
        mark(&mut pinned, c);
    }
    for (run, a) in runs.iter().zip(&alive) {
        if !*a {
            for &c in run {
                mark(&mut pinned, c);
            }
        }
    }
    let mut cascaded_runs = 0;
    loop {
        let mut changed = false;
        for (i, run) in runs.iter().enumerate() {
            if alive[i] && run.iter().any(|&c| fg.constraints[c].scope.iter().any(|&v| pinned[v as usize])) {
                alive[i] = false;
                cascaded_runs += 1;
                changed = true;
                for &c in run {
                    mark(&mut pinned, c);
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut graph = fg.clone();
    let mut group = 0u32;
    for (run, a) in runs.iter().zip(&alive) {
        if *a {
            for &c in run {
                graph.constraints[c].group = Some(group);
                graph.constraints[c].kind = ConstraintKind::Composite;
            }
            group += 1;
        } else {
            for &c in run {
                graph.constraints[c].group = None;
            }
        }
    }
    for &c in &pinned_cons {
        graph.constraints[c].group = None;
    }
    let minus = graph.add_distribution(LocalDistribution::point(1, 0)?);
    for (v, _) in pinned.iter().enumerate().filter(|(_, p)| **p) {
        graph.push(Constraint {
            scope: vec![v as u32],
            negation: 0,
            t: 1,
            predicate: None,
            distribution: Some(minus),
            kind: ConstraintKind::Pin,
            group: None,
        })?;
    }
    let all_pinned: Vec<usize> = runs
        .iter()
        .zip(&alive)
        .filter(|(_, a)| !**a)
        .flat_map(|(run, _)| run.iter().copied())
        .chain(pinned_cons.iter().copied())
        .collect();
    let x = Assignment::from_bits(0, fg.n);
    let mut sat = 0;
    for &c in &all_pinned {
        let con = &fg.constraints[c];
        if con.predicate.is_some() && fg.constraint_value(con, &x)? == num_traits::One::one() {
            sat += 1;
        }
    }
    let report = ExactifyReport {
        r,
        mode,
        surviving_groups: group as usize,
        collision_runs,
        leftover_constraints: leftover,
        cascaded_runs,
        pinned_constraints: all_pinned.len(),
        pinned_variables: pinned.iter().filter(|p| **p).count(),
        pinned_satisfied: sat,
        pinned_unsatisfied: all_pinned.len() - sat,
    };
    Ok(SparseExactify { graph, report })
}

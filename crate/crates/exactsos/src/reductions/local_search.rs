//! Balance-preserving swap local search for bisection instances.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BisectionInstance, Direction};
use crate::error::{ensure, Result};

/// Candidates examined per side at each step.
const TOP_K: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSearchResult {
    pub direction: Direction,
    pub best_cut: u64,
    pub edges: u64,
    pub best_restart: usize,
    pub per_restart: Vec<u64>,
    pub side: Vec<i8>,
}

impl LocalSearchResult {
    pub fn fraction(&self) -> f64 {
        if self.edges == 0 {
            0.0
        } else {
            self.best_cut as f64 / self.edges as f64
        }
    }
}

struct Csr {
    start: Vec<usize>,
    nbr: Vec<u32>,
}

fn csr(inst: &BisectionInstance) -> Csr {
    let mut deg = vec![0usize; inst.vertices + 1];
    for &(u, v) in &inst.edges {
        deg[u as usize] += 1;
        deg[v as usize] += 1;
    }
    let mut start = vec![0usize; inst.vertices + 1];
    for i in 0..inst.vertices {
        start[i + 1] = start[i] + deg[i];
    }
    let mut fill = start.clone();
    let mut nbr = vec![0u32; start[inst.vertices]];
    for &(u, v) in &inst.edges {
        nbr[fill[u as usize]] = v;
        fill[u as usize] += 1;
        nbr[fill[v as usize]] = u;
        fill[v as usize] += 1;
    }
    for i in 0..inst.vertices {
        nbr[start[i]..start[i + 1]].sort_unstable();
    }
    Csr { start, nbr }
}

impl Csr {
    fn neighbors(&self, v: usize) -> &[u32] {
        &self.nbr[self.start[v]..self.start[v + 1]]
    }

    fn weight(&self, u: usize, v: u32) -> i64 {
        let n = self.neighbors(u);
        let lo = n.partition_point(|&x| x < v);
        let hi = n.partition_point(|&x| x <= v);
        (hi - lo) as i64
    }
}

struct State<'a> {
    g: &'a Csr,
    side: Vec<i8>,
    /// Same-side minus cross-side neighbor count; moving `v` changes the cut by `gain[v]`.
    gain: Vec<i64>,
    cut: i64,
}

impl<'a> State<'a> {
    fn new(g: &'a Csr, side: Vec<i8>) -> Self {
        let n = side.len();
        let mut gain = vec![0i64; n];
        let mut cut = 0i64;
        for v in 0..n {
            for &w in g.neighbors(v) {
                if side[w as usize] == side[v] {
                    gain[v] += 1;
                } else {
                    gain[v] -= 1;
                    cut += 1;
                }
            }
        }
        State { g, side, gain, cut: cut / 2 }
    }

    fn flip(&mut self, u: usize) {
        self.cut += self.gain[u];
        let old = self.side[u];
        for &w in self.g.neighbors(u) {
            let w = w as usize;
            if self.side[w] == old {
                self.gain[w] -= 2;
            } else {
                self.gain[w] += 2;
            }
        }
        self.gain[u] = -self.gain[u];
        self.side[u] = -old;
    }
}

fn top(cands: &mut [usize], key: impl Fn(usize) -> i64) -> &[usize] {
    let k = TOP_K.min(cands.len());
    if k < cands.len() {
        cands.select_nth_unstable_by_key(k, |&v| std::cmp::Reverse(key(v)));
    }
    &cands[..k]
}

fn run(inst: &BisectionInstance, g: &Csr, seed: u64, restart: usize, max_steps: usize) -> (u64, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let n = inst.vertices;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut side = vec![-1i8; n];
    for &v in &order[..n / 2] {
        side[v] = 1;
    }
    let mut st = State::new(g, side);
    let sgn: i64 = match inst.direction {
        Direction::Max => 1,
        Direction::Min => -1,
    };
    let (mut plus, mut minus) = (Vec::with_capacity(n / 2), Vec::with_capacity(n / 2));
    for _ in 0..max_steps {
        plus.clear();
        minus.clear();
        for v in 0..n {
            if st.side[v] > 0 {
                plus.push(v);
            } else {
                minus.push(v);
            }
        }
        let imp = |v: usize| sgn * st.gain[v];
        let a: Vec<usize> = top(&mut plus, imp).to_vec();
        let b: Vec<usize> = top(&mut minus, imp).to_vec();
        let mut best: Option<(i64, usize, usize)> = None;
        for &u in &a {
            for &v in &b {
                let delta = imp(u) + imp(v) + sgn * 2 * g.weight(u, v as u32);
                if delta > 0 && best.is_none_or(|(d, bu, bv)| (delta, std::cmp::Reverse((u, v))) > (d, std::cmp::Reverse((bu, bv)))) {
                    best = Some((delta, u, v));
                }
            }
        }
        let Some((_, u, v)) = best else { break };
        st.flip(u);
        st.flip(v);
    }
    (st.cut as u64, st.side)
}

/// Best cut over `restarts` random balanced starts; deterministic in `seed`.
pub fn local_search_bisection(inst: &BisectionInstance, restarts: usize, seed: u64) -> Result<LocalSearchResult> {
    ensure!(inst.bisection, Precondition, "local search needs the bisection flag");
    ensure!(inst.vertices.is_multiple_of(2), Precondition, "odd vertex count {}", inst.vertices);
    ensure!(restarts >= 1, Range, "need at least one restart");
    inst.validate()?;
    let g = csr(inst);
    let max_steps = 4 * inst.vertices + 16;
    let runs: Vec<(u64, Vec<i8>)> = (0..restarts).into_par_iter().map(|r| run(inst, &g, seed, r, max_steps)).collect();
    let better = |a: u64, b: u64| match inst.direction {
        Direction::Max => a > b,
        Direction::Min => a < b,
    };
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if better(r.0, runs[best].0) {
            best = i;
        }
    }
    debug_assert!(inst.is_bisection(&runs[best].1));
    Ok(LocalSearchResult {
        direction: inst.direction,
        best_cut: runs[best].0,
        edges: inst.edges.len() as u64,
        best_restart: best,
        per_restart: runs.iter().map(|r| r.0).collect(),
        side: runs[best].1.clone(),
    })
}

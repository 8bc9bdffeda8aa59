//! Bisection gadget instances, their completeness mappings, and soundness estimators.

pub mod bisection;
pub mod feige;
pub mod local_search;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rational::{serde_q_opt, Q};

pub use bisection::{
    build_blockup, build_max_bisection, build_min_bisection_linear, empirical_distributions, nu_c_pairwise_moments, nu_c_sample,
    nu_c_yvalues, soundness_bound, y_cut_fraction, Blockup, Empirical, NuC, NuCMoments,
};
pub use feige::{
    build_min_bisection_feige, completeness_bipartition, exactify_feige_phi, feige_objective, random_3and, FeigeObjective, FeigePhi,
};
pub use local_search::{local_search_bisection, LocalSearchResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Direction::Min),
            "max" => Ok(Direction::Max),
            _ => Err(Error::Parse(format!("direction must be min or max, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "kebab-case")]
pub enum Role {
    Variable { var: u32 },
    ClauseClique { clause: u32, index: u32 },
    Giant { index: u32 },
    BlockCopy { var: u32, copy: u32 },
    Auxiliary { scope: u32, row: u32 },
    Pad { index: u32 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub construction: String,
    pub n_base: Option<u64>,
    pub m: Option<u64>,
    pub m_prime: Option<u64>,
    pub m_double_prime: Option<u64>,
    #[serde(with = "serde_q_opt", default)]
    pub eps_phi: Option<Q>,
    pub c: Option<u64>,
    pub r: Option<u64>,
    pub delta: Option<u64>,
    pub pad: u64,
    #[serde(default)]
    pub m_double_prime_rounded: bool,
    #[serde(with = "serde_q_opt", default)]
    pub zeta_bal: Option<Q>,
    #[serde(with = "serde_q_opt", default)]
    pub completeness_target: Option<Q>,
    #[serde(with = "serde_q_opt", default)]
    pub soundness_target: Option<Q>,
    /// The η added to (or subtracted from) the soundness target, with unit constant.
    pub soundness_eta: Option<f64>,
}

/// Undirected multigraph with an objective direction and an optional exact-bisection requirement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionInstance {
    pub vertices: usize,
    pub edges: Vec<(u32, u32)>,
    pub direction: Direction,
    pub bisection: bool,
    pub roles: Vec<Role>,
    pub provenance: Provenance,
}

impl BisectionInstance {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.roles.len() == self.vertices, Precondition, "{} role tags for {} vertices", self.roles.len(), self.vertices);
        ensure!(!self.bisection || self.vertices.is_multiple_of(2), Precondition, "bisection instance with odd vertex count {}", self.vertices);
        for &(u, v) in &self.edges {
            ensure!((u as usize) < self.vertices && (v as usize) < self.vertices, Range, "edge ({u}, {v}) out of range");
            ensure!(u != v, Precondition, "self-loop at {u}");
        }
        Ok(())
    }

    /// Number of edges whose endpoints get different signs.
    pub fn cut_size(&self, side: &[i8]) -> Result<u64> {
        ensure!(side.len() == self.vertices, Precondition, "side vector length {} vs {} vertices", side.len(), self.vertices);
        Ok(self.edges.iter().filter(|&&(u, v)| side[u as usize] != side[v as usize]).count() as u64)
    }

    pub fn is_bisection(&self, side: &[i8]) -> bool {
        side.len() == self.vertices && side.iter().map(|&s| s as i64).sum::<i64>() == 0 && side.iter().all(|&s| s == 1 || s == -1)
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        adj
    }

    /// Header `n m direction bisection-flag`, then one `u v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::with_capacity(self.edges.len() * 12 + 32);
        let _ = writeln!(s, "{} {} {} {}", self.vertices, self.edges.len(), self.direction.as_str(), u8::from(self.bisection));
        for &(u, v) in &self.edges {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }
}

/// Parsed edge-list graph; role tags and provenance are not part of the format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeList {
    pub vertices: usize,
    pub edges: Vec<(u32, u32)>,
    pub direction: Direction,
    pub bisection: bool,
}

pub fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    ensure!(h.len() == 4, Parse, "header needs 4 fields, got {}", h.len());
    let vertices: usize = h[0].parse().map_err(|_| Error::Parse(format!("bad vertex count {:?}", h[0])))?;
    let m: usize = h[1].parse().map_err(|_| Error::Parse(format!("bad edge count {:?}", h[1])))?;
    let direction = Direction::parse(h[2])?;
    let bisection = match h[3] {
        "0" => false,
        "1" => true,
        f => return Err(Error::Parse(format!("bisection flag must be 0 or 1, got {f:?}"))),
    };
    let mut edges = Vec::with_capacity(m);
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        ensure!(f.len() == 2, Parse, "edge line {} has {} fields", i + 1, f.len());
        let u: u32 = f[0].parse().map_err(|_| Error::Parse(format!("bad vertex {:?}", f[0])))?;
        let v: u32 = f[1].parse().map_err(|_| Error::Parse(format!("bad vertex {:?}", f[1])))?;
        ensure!((u as usize) < vertices && (v as usize) < vertices, Range, "edge ({u}, {v}) out of range");
        edges.push((u, v));
    }
    ensure!(edges.len() == m, Parse, "header promises {m} edges, found {}", edges.len());
    Ok(EdgeList { vertices, edges, direction, bisection })
}

impl EdgeList {
    pub fn into_instance(self) -> BisectionInstance {
        BisectionInstance {
            vertices: self.vertices,
            roles: (0..self.vertices as u32).map(|index| Role::Pad { index }).collect(),
            edges: self.edges,
            direction: self.direction,
            bisection: self.bisection,
            provenance: Provenance { construction: "edge-list".into(), ..Default::default() },
        }
    }
}

//! Exact Hamming-weight gadget: unary pins plus `≠` matching pairs.

use serde::{Deserialize, Serialize};

use crate::csp_core::{Assignment, Constraint, ConstraintKind, FactorGraph, LocalDistribution};
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammingGadget {
    pub n: usize,
    /// Target number of +1 coordinates.
    pub weight: usize,
    /// `(variable, pinned value)`, value ±1.
    pub pins: Vec<(u32, i8)>,
    pub pairs: Vec<(u32, u32)>,
}

/// Pins the first `U = |2B - n|` variables and matches the rest in consecutive pairs.
pub fn attach_hamming_gadget(n: usize, weight: usize, c_u: f64) -> Result<HammingGadget> {
    ensure!(n >= 1, Precondition, "n must be positive");
    ensure!(weight <= n, Range, "target weight {weight} exceeds n = {n}");
    ensure!(c_u.is_finite() && c_u >= 0.0, Range, "c_U must be a nonnegative number");
    let u = (2 * weight).abs_diff(n);
    let cap = (c_u * (n as f64).sqrt()).ceil() as usize;
    ensure!(u <= cap, Range, "needs U = {u} pins but the cap is ceil(c_U √n) = {cap}");
    let value = if 2 * weight > n { 1 } else { -1 };
    let pins = (0..u as u32).map(|i| (i, value)).collect();
    let pairs = (u as u32..n as u32).step_by(2).map(|i| (i, i + 1)).collect();
    Ok(HammingGadget { n, weight, pins, pairs })
}

impl HammingGadget {
    /// Adds the gadget's unary and matching constraints to a factor graph on the same variables.
    pub fn attach(&self, fg: &mut FactorGraph) -> Result<()> {
        ensure!(fg.n == self.n, Precondition, "gadget built for n = {}, instance has n = {}", self.n, fg.n);
        let plus = fg.add_distribution(LocalDistribution::point(1, 1)?);
        let minus = fg.add_distribution(LocalDistribution::point(1, 0)?);
        let ne = fg.add_distribution(LocalDistribution::not_equal());
        for &(v, val) in &self.pins {
            fg.push(Constraint {
                scope: vec![v],
                negation: 0,
                t: 1,
                predicate: None,
                distribution: Some(if val > 0 { plus } else { minus }),
                kind: ConstraintKind::Pin,
                group: None,
            })?;
        }
        for &(a, b) in &self.pairs {
            fg.push(Constraint {
                scope: vec![a, b],
                negation: 0,
                t: 2,
                predicate: None,
                distribution: Some(ne),
                kind: ConstraintKind::Matching,
                group: None,
            })?;
        }
        Ok(())
    }

    pub fn satisfied_by(&self, x: &Assignment) -> bool {
        let v = x.values();
        v.len() == self.n
            && self.pins.iter().all(|&(i, val)| v[i as usize] == val)
            && self.pairs.iter().all(|&(a, b)| v[a as usize] != v[b as usize])
    }
}

/// Whether the assignment satisfies every gadget constraint; such assignments have weight exactly `B`.
pub fn verify_exact_weight(g: &HammingGadget, x: &Assignment) -> Result<bool> {
    ensure!(x.len() == g.n, Precondition, "assignment length {} vs n = {}", x.len(), g.n);
    let ok = g.satisfied_by(x);
    if ok {
        ensure!(x.weight() == g.weight, Infeasible, "gadget satisfied at weight {} instead of {}", x.weight(), g.weight);
    }
    Ok(ok)
}

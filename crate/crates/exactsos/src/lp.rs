//! Dense two-phase simplex over exact rationals with Bland's rule.
//!
//! Solves `min c·x` subject to `A x = b`, `x >= 0`.

use num_traits::{One, Signed, Zero};

use crate::rational::Q;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<Q>, value: Q },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    z: Vec<Q>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.width
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        if !self.z[col].is_zero() {
            let f = self.z[col].clone();
            for (v, pv) in self.z.iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false if unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        let rhs = self.rhs();
        loop {
            let Some(col) = (0..allowed).find(|&j| self.z[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(usize, Q)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col].is_positive() {
                    let ratio = &row[rhs] / &row[col];
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

pub fn minimize(a: &[Vec<Q>], b: &[Q], c: &[Q]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert!(a.iter().all(|r| r.len() == n) && b.len() == m, "lp dimensions");
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i].is_negative();
        let mut row = vec![Q::zero(); width + 1];
        for j in 0..n {
            row[j] = if flip { -a[i][j].clone() } else { a[i][j].clone() };
        }
        row[n + i] = Q::one();
        row[width] = if flip { -b[i].clone() } else { b[i].clone() };
        rows.push(row);
    }
    let mut z = vec![Q::zero(); width + 1];
    for row in &rows {
        for j in 0..n {
            z[j] -= &row[j];
        }
        z[width] -= &row[width];
    }
    let mut t = Tableau { rows, z, basis: (n..n + m).collect(), width };
    t.run(width);
    if t.z[width].is_negative() {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificial variables out of the basis, dropping redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| !t.rows[r][j].is_zero()) {
                t.pivot(r, col);
                r += 1;
            } else {
                t.rows.remove(r);
                t.basis.remove(r);
            }
        } else {
            r += 1;
        }
    }
    let mut z = vec![Q::zero(); width + 1];
    z[..n].clone_from_slice(c);
    for (i, row) in t.rows.iter().enumerate() {
        let cb = &c[t.basis[i]];
        if cb.is_zero() {
            continue;
        }
        for j in 0..=width {
            if !row[j].is_zero() {
                z[j] -= cb * &row[j];
            }
        }
    }
    t.z = z;
    if !t.run(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); n];
    for (i, &bv) in t.basis.iter().enumerate() {
        x[bv] = t.rows[i][width].clone();
    }
    let value = x.iter().zip(c).map(|(x, c)| x * c).sum();
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qi;

    fn v(xs: &[i64]) -> Vec<Q> {
        xs.iter().map(|&x| qi(x)).collect()
    }

    #[test]
    fn small_optimum() {
        // min -x1 - x2 s.t. x1 + 2x2 + s1 = 4, 3x1 + x2 + s2 = 6
        let a = vec![v(&[1, 2, 1, 0]), v(&[3, 1, 0, 1])];
        match minimize(&a, &v(&[4, 6]), &v(&[-1, -1, 0, 0])) {
            LpOutcome::Optimal { x, value } => {
                assert_eq!(value, Q::new(qi(-14).to_integer(), qi(5).to_integer()));
                assert_eq!(x[0], Q::new(8.into(), 5.into()));
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = vec![v(&[1, 1]), v(&[1, 1])];
        assert_eq!(minimize(&a, &v(&[1, 2]), &v(&[0, 0])), LpOutcome::Infeasible);
        let a = vec![v(&[1, -1])];
        assert_eq!(minimize(&a, &v(&[1]), &v(&[-1, 0])), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![v(&[1, 1]), v(&[2, 2])];
        match minimize(&a, &v(&[1, 2]), &v(&[1, 2])) {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, qi(1)),
            o => panic!("{o:?}"),
        }
    }
}

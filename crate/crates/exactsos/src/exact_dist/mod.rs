//! Exactifying constructions: distributions whose every sample has the same number of
//! satisfying rows while staying pairwise or `(t-1)`-wise uniform.

pub mod kappa;
pub mod pairwise;
pub mod twise;
pub mod verify;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::csp_core::{Multiset, Predicate};
use crate::rational::Q;

pub use kappa::{conditional_moment, solve_kappa, sweep_kappa, FarkasWitness, Kappa, KappaOutcome};
pub use pairwise::{pairwise_params, pairwise_sample, PairwiseParams, PairwiseSampler, PairwiseScheme};
pub use twise::{twise_params, twise_params_compact, twise_sample, TwiseConfig, TwiseParams, TwiseSampler};
pub use verify::{verify_uniformity, UniformityReport, VerifyMode};

/// An `r × k` ±1 matrix stored as row patterns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMatrix {
    pub cols: usize,
    pub rows: Vec<u32>,
}

impl SignMatrix {
    pub fn get(&self, row: usize, col: usize) -> i8 {
        if self.rows[row] >> col & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn satisfied_rows(&self, p: &Predicate) -> u64 {
        self.rows.iter().filter(|&&x| p.satisfied(x)).count() as u64
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

/// A sampler whose output is a uniformly random row permutation of a (random) row multiset.
pub trait MatrixSampler: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> SignMatrix;
    /// The exact mixture of row histograms, when it is small enough to enumerate.
    fn row_mixture(&self) -> Option<Vec<(Q, Multiset)>>;
}

pub(crate) fn draw_pattern(m: &Multiset, rng: &mut impl Rng) -> u32 {
    let mut u = rng.gen_range(0..m.size());
    for (p, &c) in m.counts.iter().enumerate() {
        if u < c {
            return p as u32;
        }
        u -= c;
    }
    unreachable!("draw beyond multiset size")
}

pub(crate) fn permuted(hist: &Multiset, rng: &mut impl Rng) -> SignMatrix {
    let mut rows = hist.expand();
    rows.shuffle(rng);
    SignMatrix { cols: hist.arity, rows }
}

//! Pairwise-uniform exactification: every sample has exactly `Λ` satisfying rows.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_pattern, permuted, MatrixSampler, SignMatrix};
use crate::csp_core::{mix_distributions, LocalDistribution, Multiset, Predicate};
use crate::error::{ensure, Error, Result};
use crate::rational::{binomial, qu, serde_q, to_u64, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairwiseScheme {
    /// Closed forms `a = 2(β-δ)ℓ`, `d = 2(β-δ)ℓ²`.
    ClosedForm,
    /// Block sizes chosen so that same-column entry pairs are exactly uncorrelated (`a²ℓ = d`).
    ExactColumns,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseParams {
    pub scheme: PairwiseScheme,
    pub k: usize,
    pub s_size: u64,
    #[serde(with = "serde_q")]
    pub beta: Q,
    #[serde(with = "serde_q")]
    pub eta: Q,
    #[serde(with = "serde_q")]
    pub eps: Q,
    #[serde(with = "serde_q")]
    pub eps_prime: Q,
    #[serde(with = "serde_q")]
    pub delta: Q,
    pub big_l: u64,
    pub big_r: u64,
    pub ell: u64,
    pub a: u64,
    pub b0: u64,
    pub b1: u64,
    pub c0: u64,
    pub c1: u64,
    pub d: u64,
    pub r: u64,
    pub lambda: u64,
    #[serde(with = "serde_q")]
    pub eps_tilde: Q,
    #[serde(with = "serde_q")]
    pub fraction: Q,
}

/// Exact identities satisfied (or not) by a parameter set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseIdentities {
    pub size: bool,
    pub satisfied_count: bool,
    /// `a(ℓ-1) - β(b1+c1) - (1-β)(b0+c0) = 0`.
    pub balance_linear: bool,
    /// Exact correlation of two distinct entries in one column of a sample.
    #[serde(with = "serde_q")]
    pub column_correlation: Q,
}

impl PairwiseParams {
    pub fn identities(&self) -> PairwiseIdentities {
        let (a, b0, b1, c0, c1, d, ell) =
            (qu(self.a), qu(self.b0), qu(self.b1), qu(self.c0), qu(self.c1), qu(self.d), qu(self.ell));
        let size = d == &a + &b1 + &c1 && d == &a + &b0 + &c0;
        let sat = |b: &Q, c: &Q| b * &self.beta * &ell + c * &self.delta * &ell;
        let satisfied_count = &a * &ell + sat(&b1, &c1) == sat(&b0, &c0);
        let one_minus = Q::one() - &self.beta;
        let balance_linear =
            (&a * (&ell - Q::one()) - &self.beta * (&b1 + &c1) - &one_minus * (&b0 + &c0)).is_zero();
        let al = &a * &ell;
        let within = &al * (&al - Q::one()) / qu(2)
            - &self.beta * (&b1 + &c1) * &ell / qu(2)
            - &one_minus * (&b0 + &c0) * &ell / qu(2);
        let column_correlation = within / Q::from_integer(binomial(self.r, 2));
        PairwiseIdentities { size, satisfied_count, balance_linear, column_correlation }
    }
}

fn rate(m: &Multiset, p: &Predicate) -> Q {
    Q::new(BigInt::from(m.satisfied(p)), BigInt::from(m.size()))
}

pub fn pairwise_params(p: &Predicate, s: &Multiset, eps: &Q, scheme: PairwiseScheme) -> Result<PairwiseParams> {
    ensure!(p.arity == s.arity, Precondition, "predicate arity {} vs multiset arity {}", p.arity, s.arity);
    ensure!(p.is_boolean(), Precondition, "exactification requires a Boolean predicate");
    ensure!(eps.is_positive(), Range, "ε must be positive");
    let nu = LocalDistribution::from_multiset(s, 0)?;
    ensure!(nu.check_kwise_uniform(2).is_ok(), Precondition, "S is not pairwise uniform");
    let k = p.arity;
    let beta = rate(s, p);
    let eta = rate(&Multiset::cube(k), p);
    ensure!(beta > eta, Precondition, "β = {beta} does not exceed E_uniform[P] = {eta}");
    let gap = &beta - &eta;
    let mut big_l = 1u64;
    while &gap / qu(big_l) >= *eps {
        big_l += 1;
    }
    let eps_prime = &gap / qu(big_l);
    let delta = &beta - &eps_prime;
    let s_size = s.size();
    let unit = (1u64 << k) * big_l * s_size;
    let mut big_r = 1u64;
    while &eps_prime * (qu(unit * big_r) - Q::one()) <= Q::one() {
        big_r += 1;
    }
    let ell = unit * big_r;
    let ellq = qu(ell);
    let (a, b0, b1, c0, c1, d) = match scheme {
        PairwiseScheme::ClosedForm => {
            let x = &eps_prime * (&ellq - Q::one());
            let a = to_u64(&(qu(2) * &eps_prime * &ellq), "a")?;
            let b1 = to_u64(&((&x - Q::one()) * &ellq), "b1")?;
            let b0 = to_u64(&((&x + Q::one()) * &ellq), "b0")?;
            let d = to_u64(&(qu(2) * &eps_prime * &ellq * &ellq), "d")?;
            (a, b0, b1, b1, b0, d)
        }
        PairwiseScheme::ExactColumns => exact_column_blocks(&eps_prime, ell)?,
    };
    let r = d.checked_mul(ell).ok_or_else(|| Error::Resource("r overflows u64".into()))?;
    let t_mix = mix_distributions(s, p, big_l, big_r)?.t;
    let sat_s_prime = s.satisfied(p) * (1u64 << k) * big_l * big_r;
    let sat_t = t_mix.satisfied(p);
    let lambda = b0 * sat_s_prime + c0 * sat_t;
    let lambda1 = a * ell + b1 * sat_s_prime + c1 * sat_t;
    ensure!(lambda == lambda1, Infeasible, "branch satisfied counts differ: {lambda} vs {lambda1}");
    let fraction = Q::new(BigInt::from(lambda), BigInt::from(r));
    let eps_tilde = &beta - &fraction;
    if scheme == PairwiseScheme::ClosedForm {
        let closed = &eps_prime / qu(2) - (Q::one() / &ellq) * ((Q::one() + &eps_prime) / qu(2) - &beta);
        ensure!(closed == eps_tilde, Infeasible, "ε̃ closed form {closed} disagrees with Λ/r");
    }
    Ok(PairwiseParams {
        scheme,
        k,
        s_size,
        beta,
        eta,
        eps: eps.clone(),
        eps_prime,
        delta,
        big_l,
        big_r,
        ell,
        a,
        b0,
        b1,
        c0,
        c1,
        d,
        r,
        lambda,
        eps_tilde,
        fraction,
    })
}

/// Smallest `a` with `b1 = c0 = (a²ℓ - a - a/ε')/2` and `b0 = c1 = b1 + a/ε'` nonnegative integers.
fn exact_column_blocks(eps_prime: &Q, ell: u64) -> Result<(u64, u64, u64, u64, u64, u64)> {
    for a in 1u64..=1 << 20 {
        let g = qu(a) / eps_prime;
        if !g.is_integer() {
            continue;
        }
        let g = to_u64(&g, "a/ε'")?;
        let d = a.checked_mul(a).and_then(|v| v.checked_mul(ell)).ok_or_else(|| Error::Resource("d overflows".into()))?;
        let Some(rest) = d.checked_sub(a + g) else { continue };
        if rest % 2 != 0 {
            continue;
        }
        let x = rest / 2;
        return Ok((a, x + g, x, x, x + g, d));
    }
    Err(Error::Infeasible("no block size a up to 2^20 balances the columns".into()))
}

#[derive(Clone, Debug)]
pub struct PairwiseSampler {
    pub params: PairwiseParams,
    predicate: Predicate,
    s: Multiset,
    s_prime: Multiset,
    t: Multiset,
}

impl PairwiseSampler {
    pub fn new(params: &PairwiseParams, p: &Predicate, s: &Multiset) -> Result<Self> {
        ensure!(p.arity == params.k && s.arity == params.k, Precondition, "arity mismatch");
        ensure!(s.size() == params.s_size, Precondition, "multiset size differs from the parameters");
        ensure!(params.r <= 1 << 28, Resource, "r = {} rows exceeds the sampling budget", params.r);
        let s_prime = s.scaled((1u64 << params.k) * params.big_l * params.big_r);
        let t = mix_distributions(s, p, params.big_l, params.big_r)?.t;
        Ok(PairwiseSampler { params: params.clone(), predicate: p.clone(), s: s.clone(), s_prime, t })
    }

    fn histogram(&self, s: u32) -> Multiset {
        let pr = &self.params;
        let (b, c) = if self.predicate.satisfied(s) { (pr.b1, pr.c1) } else { (pr.b0, pr.c0) };
        let mut h = Multiset::empty(pr.k);
        h.counts[s as usize] += pr.a * pr.ell;
        h.add_scaled(&self.s_prime, b);
        h.add_scaled(&self.t, c);
        h
    }
}

impl MatrixSampler for PairwiseSampler {
    fn rows(&self) -> usize {
        self.params.r as usize
    }

    fn cols(&self) -> usize {
        self.params.k
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> SignMatrix {
        let s = draw_pattern(&self.s, rng);
        permuted(&self.histogram(s), rng)
    }

    fn row_mixture(&self) -> Option<Vec<(Q, Multiset)>> {
        let total = self.s.size();
        Some(
            self.s
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(p, &c)| (Q::new(BigInt::from(c), BigInt::from(total)), self.histogram(p as u32)))
                .collect(),
        )
    }
}

pub fn pairwise_sample(params: &PairwiseParams, p: &Predicate, s: &Multiset, rng: &mut ChaCha8Rng) -> Result<SignMatrix> {
    Ok(PairwiseSampler::new(params, p, s)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use rand::SeedableRng;

    fn and3() -> (Predicate, Multiset) {
        (Predicate::and(3).unwrap(), LocalDistribution::parity(3, true).unwrap().to_multiset())
    }

    #[test]
    fn and3_closed_form_parameters() {
        let (p, s) = and3();
        let pr = pairwise_params(&p, &s, &q(1, 10), PairwiseScheme::ClosedForm).unwrap();
        assert_eq!((pr.big_l, pr.big_r, pr.ell, pr.a), (2, 1, 64, 8));
        assert_eq!((pr.b1, pr.c0, pr.b0, pr.c1), (188, 188, 316, 316));
        assert_eq!((pr.d, pr.r, pr.lambda), (512, 32768, 7312));
        assert_eq!(pr.fraction, q(457, 2048));
        let id = pr.identities();
        assert!(id.size && id.satisfied_count && id.balance_linear);
        assert!(id.column_correlation.is_positive());
    }

    #[test]
    fn exact_columns_parameters() {
        let (p, s) = and3();
        let pr = pairwise_params(&p, &s, &q(1, 10), PairwiseScheme::ExactColumns).unwrap();
        assert_eq!((pr.a, pr.b1, pr.b0, pr.d, pr.r, pr.lambda), (2, 111, 143, 256, 16384, 3620));
        let id = pr.identities();
        assert!(id.size && id.satisfied_count);
        assert!(id.column_correlation.is_zero());
        assert!(pr.eps_tilde <= pr.eps);
    }

    #[test]
    fn samples_have_constant_count() {
        let (p, s) = and3();
        for scheme in [PairwiseScheme::ClosedForm, PairwiseScheme::ExactColumns] {
            let pr = pairwise_params(&p, &s, &q(1, 5), scheme).unwrap();
            let smp = PairwiseSampler::new(&pr, &p, &s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let m = smp.sample(&mut rng);
                assert_eq!(m.row_count() as u64, pr.r);
                assert_eq!(m.satisfied_rows(&p), pr.lambda);
            }
        }
    }

    #[test]
    fn rejects_non_pairwise_or_no_advantage() {
        let p = Predicate::and(3).unwrap();
        let bad = Multiset::from_patterns(3, &[7, 0]).unwrap();
        assert!(pairwise_params(&p, &bad, &q(1, 10), PairwiseScheme::ClosedForm).is_err());
        assert!(pairwise_params(&p, &Multiset::cube(3), &q(1, 10), PairwiseScheme::ClosedForm).is_err());
    }
}

//! `(t-1)`-wise uniform exactification with per-column repair strings drawn from `κ`.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kappa::{solve_kappa, Kappa, KappaOutcome};
use super::{permuted, MatrixSampler, SignMatrix};
use crate::csp_core::{mix_distributions, LocalDistribution, Multiset, Predicate};
use crate::error::{ensure, Error, Result};
use crate::rational::{qu, serde_q, serde_q_opt, to_u64, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwiseMode {
    ClosedForm,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwiseConfig {
    #[serde(with = "serde_q")]
    pub h1: Q,
    #[serde(with = "serde_q")]
    pub h2: Q,
    pub sweep_steps: u32,
}

impl Default for TwiseConfig {
    fn default() -> Self {
        TwiseConfig { h1: qu(2), h2: Q::one(), sweep_steps: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwiseParams {
    pub mode: TwiseMode,
    pub k: usize,
    pub t: u64,
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
    #[serde(with = "serde_q_opt")]
    pub h1: Option<Q>,
    #[serde(with = "serde_q_opt")]
    pub h2: Option<Q>,
    pub u: u64,
    pub big_l: u64,
    pub ell: u64,
    pub a: u64,
    pub r: u64,
    /// Rows outside the repair blocks, in units of `ℓ`: `r/ℓ - ak`.
    pub d_rows: u64,
    /// `2^k L / u`.
    pub step: u64,
    pub n_max: u64,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
    pub lambda: u64,
    #[serde(with = "serde_q")]
    pub fraction: Q,
    pub kappa: Kappa,
}

struct Base {
    k: usize,
    s_size: u64,
    beta: Q,
    eta: Q,
    u: u64,
    sat_plus: Vec<u64>,
    sat_minus: Vec<u64>,
    sat_s: u64,
}

fn base(p: &Predicate, s: &Multiset, t: u64) -> Result<Base> {
    ensure!(p.arity == s.arity, Precondition, "predicate arity {} vs multiset arity {}", p.arity, s.arity);
    ensure!(p.is_boolean(), Precondition, "exactification requires a Boolean predicate");
    ensure!(t >= 3, Precondition, "t must be at least 3");
    let nu = LocalDistribution::from_multiset(s, 0)?;
    ensure!(nu.check_kwise_uniform(t as usize - 1).is_ok(), Precondition, "S is not {}-wise uniform", t - 1);
    let k = p.arity;
    let s_size = s.size();
    let sat_s = s.satisfied(p);
    let beta = Q::new(BigInt::from(sat_s), BigInt::from(s_size));
    let cube = Multiset::cube(k);
    let eta = Q::new(BigInt::from(cube.satisfied(p)), BigInt::from(cube.size()));
    ensure!(beta > eta, Precondition, "β = {beta} does not exceed E_uniform[P] = {eta}");
    let u = to_u64(&((&beta - &eta) * qu((1u64 << k) * s_size)), "u")?;
    let sat_plus = (0..k).map(|i| s.restricted(i, true).satisfied(p)).collect();
    let sat_minus = (0..k).map(|i| s.restricted(i, false).satisfied(p)).collect();
    Ok(Base { k, s_size, beta, eta, u, sat_plus, sat_minus, sat_s })
}

/// Assembles the recurrences for given `(L, a, r)` and validates every constraint family.
#[allow(clippy::too_many_arguments)]
fn assemble(
    mode: TwiseMode,
    bs: &Base,
    p: &Predicate,
    s: &Multiset,
    t: u64,
    eps: &Q,
    big_l: u64,
    a: u64,
    r: u64,
    kappa: Kappa,
    h: Option<(Q, Q)>,
) -> Result<TwiseParams> {
    let k = bs.k;
    let ell = (1u64 << k) * big_l * bs.s_size;
    ensure!(r.is_multiple_of(ell), Precondition, "r must be a multiple of ℓ");
    let ak = a * k as u64;
    let d_rows = (r / ell).checked_sub(ak).ok_or_else(|| Error::Infeasible("r/ℓ < ak".into()))?;
    ensure!(d_rows % 2 == 0, Infeasible, "r/ℓ - ak = {d_rows} is odd");
    let step_q = qu((1u64 << k) * big_l) / qu(bs.u);
    let step = to_u64(&step_q, "2^k L / u")?;
    let n_max: u64 = (0..k).map(|i| 2 * a * bs.sat_plus[i].max(bs.sat_minus[i])).sum();
    let b0 = d_rows / 2;
    ensure!(
        b0 >= n_max * step,
        Infeasible,
        "b_n becomes negative: b_0 = {b0}, n_max = {n_max}, step = {step}"
    );
    let b: Vec<u64> = (0..=n_max).map(|n| b0 - n * step).collect();
    let c: Vec<u64> = (0..=n_max).map(|n| b0 + n * step).collect();
    let sat_sp = bs.sat_s * (1u64 << k) * big_l;
    let sat_t = mix_distributions(s, p, big_l, 1)?.t.satisfied(p);
    let unit = (1u64 << k) * big_l;
    let lambda = b[0] * sat_sp + c[0] * sat_t;
    for n in 0..=n_max as usize {
        let v = n as u64 * unit + b[n] * sat_sp + c[n] * sat_t;
        ensure!(v == lambda, Infeasible, "satisfied count at n = {n} is {v}, not {lambda}");
        ensure!(b[n] + c[n] + ak == r / ell, Infeasible, "row count mismatch at n = {n}");
    }
    let eps_prime = (&bs.beta - &bs.eta) / qu(big_l);
    ensure!(eps_prime < *eps, Infeasible, "ε' = {eps_prime} is not below ε");
    let delta = &bs.beta - &eps_prime;
    let fraction = Q::new(BigInt::from(lambda), BigInt::from(r));
    let (h1, h2) = match h {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(TwiseParams {
        mode,
        k,
        t,
        s_size: bs.s_size,
        beta: bs.beta.clone(),
        eta: bs.eta.clone(),
        eps: eps.clone(),
        eps_prime,
        delta,
        h1,
        h2,
        u: bs.u,
        big_l,
        ell,
        a,
        r,
        d_rows,
        step,
        n_max,
        b,
        c,
        lambda,
        fraction,
        kappa,
    })
}

fn closed_form_shape(bs: &Base, t: u64, eps: &Q, h1: &Q, h2: &Q) -> Result<(u64, u64, u64)> {
    let k = bs.k as u64;
    let m = std::cmp::max(qu(1), (h1 + h2).ceil());
    let inv = (Q::one() / eps).ceil();
    let big_l = to_u64(&(qu(bs.u) * m * inv * qu(k)), "L")?;
    let ell = (1u64 << k) * big_l * bs.s_size;
    let exponent = h2 * qu(t) / qu(2);
    let pow = if exponent.is_integer() {
        Q::from_integer(BigInt::from(2u8).pow(exponent.to_integer().to_u32().unwrap_or(0)))
    } else {
        Q::from_float(2f64.powf(exponent.to_f64().unwrap_or(0.0))).ok_or_else(|| Error::Range("2^(h2 t/2)".into()))?
    };
    let mut a = to_u64(&(h1 * pow * qu(t) * qu(k)).ceil(), "a")?;
    if (a * k) % 2 == 1 {
        a += 1;
    }
    let ratio = (qu(a) * qu(a) / (h1 * h1 * qu(t))).floor();
    let r = to_u64(&(ratio * qu(ell) * qu(ell)), "r")?;
    Ok((big_l, a, r))
}

/// Parameters from the closed forms, sweeping `h1, h2` upward until the class LP is feasible
/// and every `b_n` is nonnegative.
pub fn twise_params(p: &Predicate, s: &Multiset, t: u64, eps: &Q, cfg: &TwiseConfig) -> Result<TwiseParams> {
    ensure!(eps.is_positive(), Range, "ε must be positive");
    ensure!(cfg.h1.is_positive() && cfg.h2.is_positive(), Range, "h1 and h2 must be positive");
    let bs = base(p, s, t)?;
    let (mut h1, mut h2) = (cfg.h1.clone(), cfg.h2.clone());
    let mut last = String::new();
    for step in 0..=cfg.sweep_steps {
        let (big_l, a, r) = closed_form_shape(&bs, t, eps, &h1, &h2)?;
        let ell = (1u64 << bs.k) * big_l * bs.s_size;
        match solve_kappa(t, a, ell, r)? {
            KappaOutcome::Feasible(kappa) => {
                match assemble(TwiseMode::ClosedForm, &bs, p, s, t, eps, big_l, a, r, kappa, Some((h1.clone(), h2.clone()))) {
                    Ok(params) => return Ok(params),
                    Err(e) => last = e.to_string(),
                }
            }
            KappaOutcome::Infeasible(_) => last = format!("class LP infeasible at h1 = {h1}, h2 = {h2}"),
        }
        if step % 2 == 0 {
            h1 += Q::one();
        } else {
            h2 += Q::one();
        }
    }
    Err(Error::Infeasible(format!("sweep exhausted: {last}")))
}

/// Smallest row count meeting every constraint family with `R = 1`, searched over `(a, r)`.
pub fn twise_params_compact(p: &Predicate, s: &Multiset, t: u64, eps: &Q, max_rows: u64) -> Result<TwiseParams> {
    ensure!(eps.is_positive(), Range, "ε must be positive");
    let bs = base(p, s, t)?;
    let k = bs.k as u64;
    let gap = &bs.beta - &bs.eta;
    let mut big_l = 1u64;
    while &gap / qu(big_l) >= *eps || !((1u64 << k) * big_l).is_multiple_of(bs.u) {
        big_l += 1;
    }
    let ell = (1u64 << k) * big_l * bs.s_size;
    let step = (1u64 << k) * big_l / bs.u;
    let target = &bs.beta - eps;
    let mut a = 1u64;
    while a * ell * k <= max_rows {
        let n_max: u64 = (0..bs.k).map(|i| 2 * a * bs.sat_plus[i].max(bs.sat_minus[i])).sum();
        let mut d_rows = 2 * n_max * step;
        loop {
            let r = ell * (a * k + d_rows);
            if r > max_rows {
                break;
            }
            let sat_t = mix_distributions(s, p, big_l, 1)?.t.satisfied(p);
            let lambda = (d_rows / 2) * (bs.sat_s * (1u64 << k) * big_l + sat_t);
            if Q::new(BigInt::from(lambda), BigInt::from(r)) >= target {
                if let KappaOutcome::Feasible(kappa) = solve_kappa(t, a, ell, r)? {
                    return assemble(TwiseMode::Compact, &bs, p, s, t, eps, big_l, a, r, kappa, None);
                }
                break;
            }
            d_rows += 2;
        }
        a += 1;
    }
    Err(Error::Infeasible(format!("no parameters within {max_rows} rows")))
}

#[derive(Clone, Debug)]
pub struct TwiseSampler {
    pub params: TwiseParams,
    s_plus: Vec<Multiset>,
    s_minus: Vec<Multiset>,
    s_prime: Multiset,
    t: Multiset,
    sat_plus: Vec<u64>,
    sat_minus: Vec<u64>,
    class_cdf: Vec<(u64, Q)>,
}

impl TwiseSampler {
    pub fn new(params: &TwiseParams, p: &Predicate, s: &Multiset) -> Result<Self> {
        ensure!(p.arity == params.k && s.arity == params.k, Precondition, "arity mismatch");
        ensure!(params.r <= 1 << 28, Resource, "r = {} rows exceeds the sampling budget", params.r);
        params.kappa.verify()?;
        let k = params.k;
        let copies = (1u64 << k) * params.big_l;
        let s_prime = s.scaled(copies);
        let s_plus = (0..k).map(|i| s_prime.restricted(i, true)).collect();
        let s_minus = (0..k).map(|i| s_prime.restricted(i, false)).collect();
        let sat_plus = (0..k).map(|i| s.restricted(i, true).satisfied(p)).collect();
        let sat_minus = (0..k).map(|i| s.restricted(i, false).satisfied(p)).collect();
        let t = mix_distributions(s, p, params.big_l, 1)?.t;
        Ok(TwiseSampler {
            params: params.clone(),
            s_plus,
            s_minus,
            s_prime,
            t,
            sat_plus,
            sat_minus,
            class_cdf: params.kappa.cumulative(),
        })
    }

    /// Row histogram for repair classes `w` (class index `w_i` means `w_i ℓ/2` ones).
    pub fn histogram(&self, w: &[u64]) -> Multiset {
        let pr = &self.params;
        let mut h = Multiset::empty(pr.k);
        let mut n = 0u64;
        for i in 0..pr.k {
            h.add_scaled(&self.s_plus[i], w[i]);
            h.add_scaled(&self.s_minus[i], 2 * pr.a - w[i]);
            n += w[i] * self.sat_plus[i] + (2 * pr.a - w[i]) * self.sat_minus[i];
        }
        h.add_scaled(&self.s_prime, pr.b[n as usize]);
        h.add_scaled(&self.t, pr.c[n as usize]);
        h
    }

    fn draw_class(&self, rng: &mut ChaCha8Rng) -> u64 {
        // Exact inverse-CDF draw against a uniform rational with a 2^62 denominator grid.
        let u = Q::new(BigInt::from(rng.gen_range(0u64..1 << 62)), BigInt::from(1u64 << 62));
        let half = self.params.ell / 2;
        for (ones, c) in &self.class_cdf {
            if u < *c {
                return ones / half;
            }
        }
        self.class_cdf.last().map(|(o, _)| o / half).unwrap_or(0)
    }
}

impl MatrixSampler for TwiseSampler {
    fn rows(&self) -> usize {
        self.params.r as usize
    }

    fn cols(&self) -> usize {
        self.params.k
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> SignMatrix {
        let w: Vec<u64> = (0..self.params.k).map(|_| self.draw_class(rng)).collect();
        permuted(&self.histogram(&w), rng)
    }

    fn row_mixture(&self) -> Option<Vec<(Q, Multiset)>> {
        let k = self.params.k;
        let half = self.params.ell / 2;
        let support: Vec<(u64, Q)> = self.params.kappa.classes.iter().map(|(o, p)| (o / half, p.clone())).collect();
        let count = (support.len() as u64).checked_pow(k as u32)?;
        if count > 100_000 {
            return None;
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut idx = vec![0usize; k];
        loop {
            let w: Vec<u64> = idx.iter().map(|&i| support[i].0).collect();
            let p = idx.iter().fold(Q::one(), |acc, &i| acc * &support[i].1);
            if !p.is_zero() {
                out.push((p, self.histogram(&w)));
            }
            let mut pos = 0;
            loop {
                if pos == k {
                    return Some(out);
                }
                idx[pos] += 1;
                if idx[pos] < support.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
}

pub fn twise_sample(params: &TwiseParams, p: &Predicate, s: &Multiset, rng: &mut ChaCha8Rng) -> Result<SignMatrix> {
    Ok(TwiseSampler::new(params, p, s)?.sample(rng))
}

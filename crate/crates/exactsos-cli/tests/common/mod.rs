#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exactsos::csp_core::{LocalDistribution, Predicate};
use exactsos::exact_dist::verify::MomentFlag;
use exactsos::exact_dist::{pairwise_params, PairwiseScheme, UniformityReport, VerifyMode};
use exactsos::poly::Monomial;
use exactsos::expansion::audit_plausibility;
use exactsos::instance_gen::{batch_sample_csp, random_csp, random_kxor, sparse_exactify, RunMode};
use exactsos::pseudoexp::Pseudoexpectation;
use exactsos::rational::{q, Q};
use exactsos::reductions::{build_max_bisection, build_min_bisection_linear, local_search_bisection, FeigeObjective};
use exactsos::refuter::{refute_imbalance, DeviationMode};
use exactsos::schema::{CheckReport, ExactParams, ParamsKind, Payload, Report};
use exactsos::weight_gadgets::attach_hamming_gadget;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: usize = 13;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_exactsos")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn exactsos")
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rq(rng: &mut ChaCha8Rng) -> Q {
    q(rng.gen_range(-50..50), rng.gen_range(1..40))
}

fn rf(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-1e3..1e3)
}

/// A random document of kind `kind % KINDS`, built from small random library outputs.
pub fn random_payload(kind: usize, seed: u64) -> Payload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..24);
    match kind % KINDS {
        0 => {
            let names = ["3and", "3or", "3xor", "basic4"];
            let p = Predicate::by_name(names[rng.gen_range(0..names.len())]).unwrap();
            let nu = if rng.gen_bool(0.5) { Some(LocalDistribution::uniform(p.arity).unwrap()) } else { None };
            Payload::Instance(random_csp(n, rng.gen_range(0..30), &p, nu.as_ref(), seed).unwrap())
        }
        1 => {
            let p = Predicate::and(3).unwrap();
            let nu = LocalDistribution::parity(3, true).unwrap();
            let fg = batch_sample_csp(24, 12, 2, &p, Some(&nu), seed).unwrap();
            let mode = if rng.gen_bool(0.5) { RunMode::Plain } else { RunMode::Stratified };
            Payload::SparseExactify(sparse_exactify(&fg, 2, mode).unwrap())
        }
        2 => {
            let w = (n / 2 + rng.gen_range(0..2)).min(n);
            Payload::Gadget(attach_hamming_gadget(n, w, 2.0).unwrap())
        }
        3 => {
            let p = Predicate::and(3).unwrap();
            let s = LocalDistribution::parity(3, true).unwrap().to_multiset();
            let eps = [q(1, 10), q(1, 5), q(1, 4)][rng.gen_range(0..3)].clone();
            let scheme = if rng.gen_bool(0.5) { PairwiseScheme::ClosedForm } else { PairwiseScheme::ExactColumns };
            let params = pairwise_params(&p, &s, &eps, scheme).unwrap();
            Payload::Params(ExactParams { predicate: p, base: s, params: ParamsKind::Pairwise(params) })
        }
        4 => {
            let names = ["uniform", "odd-parity", "even-parity"];
            Payload::Distribution(LocalDistribution::by_name(names[rng.gen_range(0..3)], rng.gen_range(1..5)).unwrap())
        }
        5 => {
            let flagged = (0..rng.gen_range(0..3))
                .map(|_| MomentFlag {
                    entries: vec![(rng.gen_range(0..100), rng.gen_range(0..3))],
                    value: rf(&mut rng),
                    exact: if rng.gen_bool(0.5) { Some(rq(&mut rng)) } else { None },
                })
                .collect();
            Payload::Uniformity(UniformityReport {
                mode: [VerifyMode::Auto, VerifyMode::Exact, VerifyMode::MonteCarlo][rng.gen_range(0..3)],
                order: rng.gen_range(1..4),
                trials: rng.gen(),
                tolerance: rf(&mut rng).abs(),
                sets_checked: rng.gen(),
                max_abs: rf(&mut rng).abs(),
                flagged,
                passed: rng.gen(),
            })
        }
        6 => {
            let fg = random_kxor(n, rng.gen_range(1..3 * n), 3, None, seed).unwrap();
            let zeta = q(rng.gen_range(1..10), 10);
            Payload::Audit(audit_plausibility(&fg, &zeta, rng.gen_range(1..4), 1 << 20).unwrap())
        }
        7 => {
            let degree = rng.gen_range(1..4);
            let mut values = std::collections::BTreeMap::new();
            values.insert(Monomial::one(), Q::from_integer(1.into()));
            for _ in 0..rng.gen_range(0..20) {
                let vars: Vec<u32> = (0..rng.gen_range(1..=degree)).map(|_| rng.gen_range(0..n as u32)).collect();
                let m = Monomial::from_vars(vars);
                if m.degree() > 0 {
                    values.insert(m, rq(&mut rng));
                }
            }
            Payload::Pseudoexpectation(Pseudoexpectation::new(n, degree, values).unwrap())
        }
        8 => Payload::Check(match rng.gen_range(0..4) {
            0 => CheckReport::Psd { degree: 4, size: rng.gen_range(1..100), min_eigenvalue: rf(&mut rng), tolerance: 1e-9, passed: rng.gen() },
            1 => CheckReport::WeakSat { constraints: 10, violations: (0..rng.gen_range(0..4)).collect(), passed: rng.gen() },
            2 => CheckReport::Identity { target: rq(&mut rng), first: rq(&mut rng), second: rq(&mut rng), passed: rng.gen() },
            _ => CheckReport::FeigeObjective {
                objective: FeigeObjective {
                    symbolic: rq(&mut rng),
                    stated: rq(&mut rng),
                    edge_sum: rq(&mut rng),
                    satisfied_mass: rq(&mut rng),
                    objective_residual: rq(&mut rng),
                    degree_term: rq(&mut rng),
                },
                passed: rng.gen(),
            },
        }),
        9 => {
            let b = if rng.gen_bool(0.5) { build_max_bisection(16, 1, 2, 1, seed) } else { build_min_bisection_linear(16, 1, 2, 1, seed) };
            Payload::Bisection(b.unwrap())
        }
        10 => Payload::LocalSearch(local_search_bisection(&build_max_bisection(16, 1, 2, 1, seed).unwrap(), 2, seed).unwrap()),
        11 => {
            let fg = random_kxor(n, rng.gen_range(0..4 * n), 3, None, seed).unwrap();
            let mode = if rng.gen_bool(0.5) { DeviationMode::Exact } else { DeviationMode::HighProbability };
            let mut c = refute_imbalance(&fg, rng.gen_range(0..=n as u64), mode).unwrap();
            c.seed = if rng.gen_bool(0.5) { Some(rng.gen()) } else { None };
            c.timing_ms = if rng.gen_bool(0.5) { Some(rng.gen_range(0..10_000)) } else { None };
            Payload::Certificate(c)
        }
        _ => {
            let cols: Vec<String> = (0..rng.gen_range(1..5)).map(|i| format!("c{i},\"x\"")).collect();
            let rows = (0..rng.gen_range(0..4)).map(|_| cols.iter().map(|_| format!("{}|{}", rng.gen::<u16>(), rng.gen::<char>())).collect()).collect();
            Payload::Report(Report { columns: cols, rows })
        }
    }
}

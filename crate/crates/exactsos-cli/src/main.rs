use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use exactsos::csp_core::{Assignment, LocalDistribution, Predicate};
use exactsos::exact_dist::{
    pairwise_params, twise_params, twise_params_compact, verify_uniformity, MatrixSampler, PairwiseSampler, PairwiseScheme,
    TwiseConfig, TwiseSampler, VerifyMode,
};
use exactsos::expansion::audit_plausibility;
use exactsos::instance_gen::{batch_sample_csp, random_csp, random_kxor, sparse_exactify, RunMode};
use exactsos::poly::Polynomial;
use exactsos::pseudoexp::{build_pseudoexpectation, check_identity_pvz, check_weak_satisfaction, moment_matrix, psd_check, ClosureOptions, PSD_TOL};
use exactsos::rational::{parse_q, qi, Q};
use exactsos::reductions::{
    build_max_bisection, build_min_bisection_feige, build_min_bisection_linear, exactify_feige_phi, local_search_bisection, random_3and,
    BisectionInstance,
};
use exactsos::refuter::{refute_imbalance, DeviationMode, Verdict};
use exactsos::schema::{CheckReport, Envelope, ExactParams, ParamsKind, Payload, Report};
use exactsos::weight_gadgets::attach_hamming_gadget;

#[derive(Parser)]
#[command(name = "exactsos", version, about = "Exactified CSP distributions, SoS pseudoexpectations, bisection reductions, imbalance refutation")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance.
    #[command(subcommand)]
    Gen(Gen),
    /// Attach the exact Hamming-weight gadget to an instance.
    GadgetWeight {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weight: usize,
        #[arg(long, default_value_t = 1.0)]
        c_u: f64,
    },
    /// Derive exactification parameters.
    #[command(subcommand)]
    ExactifyDist(Exactify),
    /// Check uniformity and constant satisfied count of a params document.
    VerifyDist {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        max_sets: usize,
    },
    /// Check plausibility of every small constraint-induced subgraph.
    AuditExpansion {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        zeta: String,
        #[arg(long)]
        small: u64,
        #[arg(long, default_value_t = 1 << 24)]
        budget: u64,
    },
    /// Build the closure pseudoexpectation of an instance.
    BuildPe {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, default_value_t = 6)]
        small: usize,
        #[arg(long, default_value_t = 8)]
        max_set: usize,
        #[arg(long, default_value_t = 1 << 22)]
        budget: u64,
    },
    /// Check a pseudoexpectation.
    #[command(subcommand)]
    CheckPe(CheckPe),
    /// Build a bisection instance.
    #[command(subcommand)]
    Reduce(Reduce),
    /// Degree-2 refutation of a 3-XOR instance under a Hamming-weight constraint.
    RefuteImbalance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weight: u64,
        #[arg(long, value_enum, default_value_t = DeviationArg::Exact)]
        deviation: DeviationArg,
        /// Record wall-clock time in the certificate.
        #[arg(long)]
        timing: bool,
    },
    /// Tabulate key figures of JSON documents.
    Report {
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
    },
}

#[derive(Subcommand)]
enum Gen {
    /// Independent constraints with uniform scopes and negations.
    Random {
        #[command(flatten)]
        base: GenBase,
        /// For XOR predicates, choose signs consistent with a random balanced assignment.
        #[arg(long)]
        planted: bool,
        /// Un-negated 3-AND clauses with the odd-parity distribution, as the clique reduction expects.
        #[arg(long)]
        positive: bool,
    },
    /// Groups of `r` scope-disjoint constraints sharing a negation pattern.
    Batch {
        #[command(flatten)]
        base: GenBase,
        #[arg(long)]
        r: usize,
    },
    /// Fold runs of a batch instance into composite constraints.
    SparseExactify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = RunArg::Plain)]
        mode: RunArg,
    },
}

#[derive(Args)]
struct GenBase {
    #[arg(long)]
    pred: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Local distribution: uniform, odd-parity or even-parity.
    #[arg(long)]
    dist: Option<String>,
}

#[derive(Subcommand)]
enum Exactify {
    /// Pairwise-uniform composite with a constant satisfied count.
    Pairwise {
        #[command(flatten)]
        base: ExactBase,
        #[arg(long, value_enum, default_value_t = SchemeArg::ClosedForm)]
        scheme: SchemeArg,
    },
    /// (t−1)-wise uniform composite with a column-repair LP.
    Twise {
        #[command(flatten)]
        base: ExactBase,
        #[arg(long)]
        t: u64,
        /// Smallest row count found by a direct search instead of the closed-form sizes.
        #[arg(long)]
        compact: bool,
        #[arg(long, default_value_t = 1 << 20)]
        max_rows: u64,
    },
}

#[derive(Args)]
struct ExactBase {
    #[arg(long)]
    pred: String,
    #[arg(long)]
    eps: String,
    #[arg(long, default_value = "odd-parity")]
    dist: String,
}

#[derive(Subcommand)]
enum CheckPe {
    /// Minimum eigenvalue of the moment matrix.
    Psd {
        #[arg(long)]
        pe: PathBuf,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = PSD_TOL)]
        tol: f64,
        /// Also write the moment matrix as triangular text.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Zero pseudo-mass outside each constraint's support.
    WeakSat {
        #[arg(long)]
        pe: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// `Σ x_i = 2B − n` with pseudovariance zero.
    Identity {
        #[arg(long)]
        pe: PathBuf,
        #[arg(long)]
        weight: u64,
    },
}

#[derive(Subcommand)]
enum Reduce {
    /// Min-Bisection from a 3-AND instance with cliques per clause and a giant clique.
    FeigeMin {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the value of the exactified clause distribution.
        #[arg(long)]
        eps_phi: Option<String>,
        #[command(flatten)]
        extra: ReduceOut,
    },
    /// Max-Bisection from ν_c scopes with R copies per variable.
    MaxBisection {
        #[command(flatten)]
        shape: LinearShape,
        #[command(flatten)]
        extra: ReduceOut,
    },
    /// Min-Bisection on the same graph shape.
    MinBisection {
        #[command(flatten)]
        shape: LinearShape,
        #[command(flatten)]
        extra: ReduceOut,
    },
}

#[derive(Args)]
struct LinearShape {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: u64,
    #[arg(long, default_value_t = 2)]
    c: u64,
    #[arg(long)]
    r: u64,
}

#[derive(Args)]
struct ReduceOut {
    /// Also write the graph in edge-list format.
    #[arg(long)]
    edge_list: Option<PathBuf>,
    /// Run balanced local search with this many restarts and write its result.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, requires = "restarts")]
    search_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunArg {
    Plain,
    Stratified,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    ClosedForm,
    ExactColumns,
}

#[derive(Clone, Copy, ValueEnum)]
enum DeviationArg {
    Exact,
    HighProbability,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

/// Successful run whose verdict is negative.
struct Negative;

fn read(path: &Path) -> Result<Envelope> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Envelope::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_doc(out: &Option<PathBuf>, payload: Payload) -> Result<()> {
    emit(out, &Envelope::new(payload).to_json()?)
}

fn verdict(ok: bool) -> std::result::Result<(), Negative> {
    if ok {
        Ok(())
    } else {
        Err(Negative)
    }
}

fn local_dist(name: Option<&str>, arity: usize) -> Result<Option<LocalDistribution>> {
    Ok(match name {
        Some(d) => Some(LocalDistribution::by_name(d, arity)?),
        None => None,
    })
}

fn balanced(n: usize, rng: &mut ChaCha8Rng) -> Result<Assignment> {
    let mut x: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
    x.shuffle(rng);
    Ok(Assignment::new(x)?)
}

fn gen(cmd: Gen, seed: u64) -> Result<Payload> {
    Ok(match cmd {
        Gen::Random { base, planted, positive: true } => {
            if planted || !base.pred.eq_ignore_ascii_case("3and") || base.dist.is_some() {
                bail!("--positive only supports --pred 3and without --dist or --planted");
            }
            Payload::Instance(random_3and(base.n, base.m, seed)?)
        }
        Gen::Random { base, planted, positive: false } => {
            let p = Predicate::by_name(&base.pred)?;
            let xor_k = base.pred.to_ascii_lowercase().strip_suffix("xor").and_then(|k| k.parse::<usize>().ok());
            let fg = match (planted, xor_k) {
                (true, Some(k)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(1);
                    let x = balanced(base.n, &mut rng)?;
                    random_kxor(base.n, base.m, k, Some(&x), seed)?
                }
                (true, None) => bail!("--planted needs an XOR predicate"),
                (false, Some(k)) if base.dist.is_none() => random_kxor(base.n, base.m, k, None, seed)?,
                _ => random_csp(base.n, base.m, &p, local_dist(base.dist.as_deref(), p.arity)?.as_ref(), seed)?,
            };
            Payload::Instance(fg)
        }
        Gen::Batch { base, r } => {
            let p = Predicate::by_name(&base.pred)?;
            let nu = local_dist(base.dist.as_deref(), p.arity)?;
            Payload::Instance(batch_sample_csp(base.n, base.m, r, &p, nu.as_ref(), seed)?)
        }
        Gen::SparseExactify { input, r, mode } => {
            let fg = read(&input)?.into_factor_graph()?;
            let mode = match mode {
                RunArg::Plain => RunMode::Plain,
                RunArg::Stratified => RunMode::Stratified,
            };
            Payload::SparseExactify(sparse_exactify(&fg, r, mode)?)
        }
    })
}

fn exactify(cmd: Exactify) -> Result<Payload> {
    let (base, scheme, twise) = match &cmd {
        Exactify::Pairwise { base, scheme } => (base, Some(*scheme), None),
        Exactify::Twise { base, t, compact, max_rows } => (base, None, Some((*t, *compact, *max_rows))),
    };
    let (predicate, s, eps) = exact_inputs(base)?;
    let ms = s.to_multiset();
    let params = match (scheme, twise) {
        (Some(sc), _) => {
            let sc = match sc {
                SchemeArg::ClosedForm => PairwiseScheme::ClosedForm,
                SchemeArg::ExactColumns => PairwiseScheme::ExactColumns,
            };
            ParamsKind::Pairwise(pairwise_params(&predicate, &ms, &eps, sc)?)
        }
        (None, Some((t, true, max_rows))) => ParamsKind::Twise(twise_params_compact(&predicate, &ms, t, &eps, max_rows)?),
        (None, Some((t, false, _))) => ParamsKind::Twise(twise_params(&predicate, &ms, t, &eps, &TwiseConfig::default())?),
        (None, None) => unreachable!(),
    };
    Ok(Payload::Params(ExactParams { predicate, base: ms, params }))
}

fn exact_inputs(b: &ExactBase) -> Result<(Predicate, LocalDistribution, Q)> {
    let p = Predicate::by_name(&b.pred)?;
    let s = LocalDistribution::by_name(&b.dist, p.arity)?;
    Ok((p, s, parse_q(&b.eps)?))
}

fn sampler(ep: &ExactParams) -> Result<Box<dyn MatrixSampler>> {
    Ok(match &ep.params {
        ParamsKind::Pairwise(pp) => Box::new(PairwiseSampler::new(pp, &ep.predicate, &ep.base)?),
        ParamsKind::Twise(tp) => Box::new(TwiseSampler::new(tp, &ep.predicate, &ep.base)?),
    })
}

fn check_pe(cmd: CheckPe) -> Result<(Payload, bool)> {
    let report = match cmd {
        CheckPe::Psd { pe, degree, tol, matrix_out } => {
            let pe = read(&pe)?.into_pseudoexpectation()?;
            let d = degree.unwrap_or(pe.degree - pe.degree % 2);
            let mm = moment_matrix(&pe, d)?;
            if let Some(p) = matrix_out {
                fs::write(&p, mm.to_triangular_text()).with_context(|| format!("writing {}", p.display()))?;
            }
            let (min, passed) = psd_check(&mm.to_f64(), tol);
            CheckReport::Psd { degree: d, size: mm.index.len(), min_eigenvalue: min, tolerance: tol, passed }
        }
        CheckPe::WeakSat { pe, input } => {
            let pe = read(&pe)?.into_pseudoexpectation()?;
            let fg = read(&input)?.into_factor_graph()?;
            let flags: Vec<bool> = fg.constraints.par_iter().map(|c| check_weak_satisfaction(&pe, &fg, c)).collect::<exactsos::Result<_>>()?;
            let violations: Vec<usize> = flags.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i).collect();
            CheckReport::WeakSat { constraints: fg.m(), passed: violations.is_empty(), violations }
        }
        CheckPe::Identity { pe, weight } => {
            let pe = read(&pe)?.into_pseudoexpectation()?;
            let sum = (0..pe.n as u32).fold(Polynomial::zero(), |acc, v| acc.add(&Polynomial::var(v)));
            let target = qi(2 * weight as i64 - pe.n as i64);
            let (first, second) = check_identity_pvz(&pe, &sum, &target)?;
            let passed = first == Q::from_integer(0.into()) && second == Q::from_integer(0.into());
            CheckReport::Identity { target, first, second, passed }
        }
    };
    let ok = report.passed();
    Ok((Payload::Check(report), ok))
}

fn reduce(cmd: Reduce, seed: u64) -> Result<(BisectionInstance, ReduceOut)> {
    Ok(match cmd {
        Reduce::FeigeMin { input, eps_phi, extra } => {
            let phi = read(&input)?.into_factor_graph()?;
            let eps = match eps_phi {
                Some(e) => parse_q(&e)?,
                None => exactify_feige_phi(&phi)?.eps_phi,
            };
            (build_min_bisection_feige(&phi, &eps)?, extra)
        }
        Reduce::MaxBisection { shape, extra } => (build_max_bisection(shape.n, shape.delta, shape.c, shape.r, seed)?, extra),
        Reduce::MinBisection { shape, extra } => (build_min_bisection_linear(shape.n, shape.delta, shape.c, shape.r, seed)?, extra),
    })
}

fn run(cli: Cli) -> Result<std::result::Result<(), Negative>> {
    let seed = cli.seed;
    let out = &cli.out;
    match cli.cmd {
        Cmd::Gen(g) => emit_doc(out, gen(g, seed)?)?,
        Cmd::GadgetWeight { input, weight, c_u } => {
            let mut fg = read(&input)?.into_factor_graph()?;
            attach_hamming_gadget(fg.n, weight, c_u)?.attach(&mut fg)?;
            emit_doc(out, Payload::Instance(fg))?;
        }
        Cmd::ExactifyDist(e) => emit_doc(out, exactify(e)?)?,
        Cmd::VerifyDist { params, order, trials, tol, mode, max_sets } => {
            let ep = read(&params)?.into_params()?;
            let smp = sampler(&ep)?;
            let mode = match mode {
                ModeArg::Auto => VerifyMode::Auto,
                ModeArg::Exact => VerifyMode::Exact,
                ModeArg::MonteCarlo => VerifyMode::MonteCarlo,
            };
            let report = verify_uniformity(smp.as_ref(), order, trials, tol, mode, max_sets, seed)?;
            let lambda = ep.lambda();
            let off: u64 = (0..trials.min(1000))
                .into_par_iter()
                .filter(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                    rng.set_stream(i);
                    smp.sample(&mut rng).satisfied_rows(&ep.predicate) != lambda
                })
                .count() as u64;
            if off > 0 {
                eprintln!("{off} sampled matrices do not have exactly {lambda} satisfied rows");
            }
            let ok = report.passed && off == 0;
            emit_doc(out, Payload::Uniformity(report))?;
            return Ok(verdict(ok));
        }
        Cmd::AuditExpansion { input, zeta, small, budget } => {
            let fg = read(&input)?.into_factor_graph()?;
            let a = audit_plausibility(&fg, &parse_q(&zeta)?, small, budget)?;
            let ok = a.plausible;
            emit_doc(out, Payload::Audit(a))?;
            return Ok(verdict(ok));
        }
        Cmd::BuildPe { input, degree, small, max_set, budget } => {
            let fg = read(&input)?.into_factor_graph()?;
            let pe = build_pseudoexpectation(&fg, degree, &ClosureOptions { small, max_set, budget })?;
            emit_doc(out, Payload::Pseudoexpectation(pe))?;
        }
        Cmd::CheckPe(c) => {
            let (doc, ok) = check_pe(c)?;
            emit_doc(out, doc)?;
            return Ok(verdict(ok));
        }
        Cmd::Reduce(r) => {
            let (inst, extra) = reduce(r, seed)?;
            if let Some(p) = &extra.edge_list {
                fs::write(p, inst.to_edge_list()).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(restarts) = extra.restarts {
                let res = local_search_bisection(&inst, restarts, seed)?;
                match &extra.search_out {
                    Some(p) => fs::write(p, Envelope::new(Payload::LocalSearch(res)).to_json()?)?,
                    None => eprintln!("local search: best cut {} of {} edges ({:.6})", res.best_cut, res.edges, res.fraction()),
                }
            }
            emit_doc(out, Payload::Bisection(inst))?;
        }
        Cmd::RefuteImbalance { input, weight, deviation, timing } => {
            let fg = read(&input)?.into_factor_graph()?;
            let mode = match deviation {
                DeviationArg::Exact => DeviationMode::Exact,
                DeviationArg::HighProbability => DeviationMode::HighProbability,
            };
            let t0 = Instant::now();
            let mut cert = refute_imbalance(&fg, weight, mode)?;
            cert.seed = Some(seed);
            if timing {
                cert.timing_ms = Some(t0.elapsed().as_millis() as u64);
            }
            let ok = cert.verdict == Verdict::Refuted;
            emit_doc(out, Payload::Certificate(cert))?;
            return Ok(verdict(ok));
        }
        Cmd::Report { files, format } => {
            let items = files
                .iter()
                .map(|f| Ok((f.display().to_string(), read(f)?.payload.summary())))
                .collect::<Result<Vec<_>>>()?;
            let r = Report::from_summaries(&items);
            match format {
                ReportFormat::Markdown => emit(out, &r.to_markdown())?,
                ReportFormat::Csv => emit(out, &r.to_csv()?)?,
                ReportFormat::Json => emit_doc(out, Payload::Report(r))?,
            }
        }
    }
    Ok(Ok(()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Negative)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

mod common;

use exactsos::csp_core::{Constraint, ConstraintKind, FactorGraph, LocalDistribution};
use exactsos::schema::{Envelope, Payload};
use proptest::prelude::*;

fn ok_stdout(args: &[&str]) -> String {
    let o = common::run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_doc(dir: &std::path::Path, name: &str, payload: Payload) -> String {
    let p = dir.join(name);
    std::fs::write(&p, Envelope::new(payload).to_json().unwrap()).unwrap();
    p.display().to_string()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let a = ok_stdout(&["--seed", "11", "gen", "random", "--pred", "3xor", "--n", "30", "--m", "50"]);
    let b = ok_stdout(&["--seed", "11", "gen", "random", "--pred", "3xor", "--n", "30", "--m", "50"]);
    let c = ok_stdout(&["--seed", "12", "gen", "random", "--pred", "3xor", "--n", "30", "--m", "50"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let fg = Envelope::from_json(&a).unwrap().into_factor_graph().unwrap();
    assert_eq!((fg.n, fg.m()), (30, 50));
}

#[test]
fn jobs_do_not_change_output() {
    let args = ["gen", "batch", "--pred", "3and", "--n", "40", "--m", "20", "--r", "4", "--dist", "odd-parity"];
    let one = ok_stdout(&[&["--jobs", "1"][..], &args].concat());
    let two = ok_stdout(&[&["--jobs", "2"][..], &args].concat());
    assert_eq!(one, two);
}

#[test]
fn pairwise_params_match_the_stated_instance() {
    let text = ok_stdout(&["exactify-dist", "pairwise", "--pred", "3and", "--eps", "1/10"]);
    let ep = Envelope::from_json(&text).unwrap().into_params().unwrap();
    assert_eq!((ep.rows(), ep.lambda()), (32768, 7312));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(common::run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(common::run(&["gen", "random", "--pred", "3xor"]).status.code(), Some(2));
    assert_eq!(common::run(&["audit-expansion", "--input", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn duplicate_constraint_audit_exits_1_with_witness() {
    let dir = common::scratch("cli-dup");
    let mut fg = FactorGraph::new(3);
    let d = fg.add_distribution(LocalDistribution::parity(3, true).unwrap());
    for _ in 0..2 {
        fg.push(Constraint { scope: vec![0, 1, 2], negation: 0, t: 3, predicate: None, distribution: Some(d), kind: ConstraintKind::Base, group: None })
            .unwrap();
    }
    let inst = write_doc(&dir, "dup.json", Payload::Instance(fg));
    let o = common::run(&["audit-expansion", "--input", &inst, "--zeta", "1/5", "--small", "2"]);
    assert_eq!(o.status.code(), Some(1));
    match Envelope::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap().payload {
        Payload::Audit(a) => {
            assert!(!a.plausible);
            assert_eq!(a.witness.unwrap().constraints, vec![0, 1]);
        }
        other => panic!("unexpected {}", other.kind()),
    }
}

#[test]
fn refute_exit_code_follows_verdict() {
    let dir = common::scratch("cli-refute");
    let inst = dir.join("x.json").display().to_string();
    ok_stdout(&["--seed", "3", "gen", "random", "--pred", "3xor", "--n", "60", "--m", "1500", "--out", &inst]);
    assert_eq!(common::run(&["refute-imbalance", "--input", &inst, "--weight", "60"]).status.code(), Some(0));
    assert_eq!(common::run(&["refute-imbalance", "--input", &inst, "--weight", "30"]).status.code(), Some(1));
    assert_eq!(common::run(&["refute-imbalance", "--input", &inst, "--weight", "61"]).status.code(), Some(2));
}

#[test]
fn report_formats() {
    let dir = common::scratch("cli-report");
    let a = write_doc(&dir, "a.json", common::random_payload(0, 1));
    let b = write_doc(&dir, "b.json", common::random_payload(11, 2));
    let md = ok_stdout(&["report", &a, &b, "--format", "markdown"]);
    assert!(md.lines().nth(1).unwrap().starts_with("|"));
    assert_eq!(md.lines().count(), 4);
    let csv = ok_stdout(&["report", &a, &b, "--format", "csv"]);
    let mut rdr = csv::ReaderBuilder::new().from_reader(csv.as_bytes());
    let rows: Vec<_> = rdr.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 2);
    let json = ok_stdout(&["report", &a, &b, "--format", "json"]);
    match Envelope::from_json(&json).unwrap().payload {
        Payload::Report(r) => assert_eq!(r.rows.len(), 2),
        other => panic!("unexpected {}", other.kind()),
    }
}

#[test]
fn gadget_then_build_then_check() {
    let dir = common::scratch("cli-pe");
    let inst = dir.join("inst.json").display().to_string();
    let gad = dir.join("gad.json").display().to_string();
    let pe = dir.join("pe.json").display().to_string();
    ok_stdout(&["--seed", "1", "gen", "random", "--pred", "3xor", "--n", "8", "--m", "1", "--out", &inst]);
    ok_stdout(&["gadget-weight", "--input", &inst, "--weight", "4", "--out", &gad]);
    ok_stdout(&["build-pe", "--input", &gad, "--degree", "4", "--out", &pe]);
    ok_stdout(&["check-pe", "psd", "--pe", &pe]);
    ok_stdout(&["check-pe", "weak-sat", "--pe", &pe, "--input", &gad]);
    ok_stdout(&["check-pe", "identity", "--pe", &pe, "--weight", "4"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn envelopes_round_trip(kind in 0..common::KINDS, seed in any::<u64>()) {
        let e = Envelope::new(common::random_payload(kind, seed));
        let text = e.to_json().unwrap();
        let back = Envelope::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(back, e);
    }
}

#[test]
fn positive_3and_feeds_the_clique_reduction() {
    let dir = common::scratch("cli-feige");
    let phi = dir.join("phi.json").display().to_string();
    ok_stdout(&["--seed", "1", "gen", "random", "--pred", "3and", "--n", "8", "--m", "4", "--positive", "--out", &phi]);
    let text = ok_stdout(&["reduce", "feige-min", "--input", &phi]);
    let b = Envelope::from_json(&text).unwrap().into_bisection().unwrap();
    assert_eq!(b.vertices % 2, 0);
    assert_eq!(b.provenance.m_prime, Some(13));
    assert_eq!(common::run(&["gen", "random", "--pred", "3xor", "--n", "8", "--m", "4", "--positive"]).status.code(), Some(2));
}

//! Versioned JSON envelope for everything the pipeline reads or writes, plus tabular reports.

use serde::{Deserialize, Serialize};

use crate::csp_core::{FactorGraph, LocalDistribution, Multiset, Predicate};
use crate::error::{ensure, Error, Result};
use crate::exact_dist::{PairwiseParams, TwiseParams, UniformityReport};
use crate::expansion::AuditOutcome;
use crate::instance_gen::SparseExactify;
use crate::pseudoexp::Pseudoexpectation;
use crate::rational::{fmt_q, serde_q, Q};
use crate::reductions::{BisectionInstance, FeigeObjective, LocalSearchResult};
use crate::refuter::{RefutationCertificate, Verdict};
use crate::weight_gadgets::HammingGadget;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParamsKind {
    Pairwise(PairwiseParams),
    Twise(TwiseParams),
}

/// Exactification parameters together with the predicate and base multiset they were derived for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactParams {
    pub predicate: Predicate,
    pub base: Multiset,
    pub params: ParamsKind,
}

impl ExactParams {
    pub fn rows(&self) -> u64 {
        match &self.params {
            ParamsKind::Pairwise(p) => p.r,
            ParamsKind::Twise(p) => p.r,
        }
    }

    pub fn lambda(&self) -> u64 {
        match &self.params {
            ParamsKind::Pairwise(p) => p.lambda,
            ParamsKind::Twise(p) => p.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum CheckReport {
    Psd {
        degree: usize,
        size: usize,
        min_eigenvalue: f64,
        tolerance: f64,
        passed: bool,
    },
    WeakSat {
        constraints: usize,
        violations: Vec<usize>,
        passed: bool,
    },
    Identity {
        #[serde(with = "serde_q")]
        target: Q,
        /// `p̃E[Q − b]`.
        #[serde(with = "serde_q")]
        first: Q,
        /// `p̃E[(Q − b)²]`.
        #[serde(with = "serde_q")]
        second: Q,
        passed: bool,
    },
    FeigeObjective {
        objective: FeigeObjective,
        passed: bool,
    },
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        match self {
            CheckReport::Psd { passed, .. }
            | CheckReport::WeakSat { passed, .. }
            | CheckReport::Identity { passed, .. }
            | CheckReport::FeigeObjective { passed, .. } => *passed,
        }
    }
}

/// A flat table rendered as Markdown or CSV.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    /// One row per `(source, fields)`, columns in first-seen order.
    pub fn from_summaries(items: &[(String, Vec<(String, String)>)]) -> Self {
        let mut columns = vec!["source".to_string()];
        for (_, fields) in items {
            for (k, _) in fields {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        let rows = items
            .iter()
            .map(|(src, fields)| {
                columns
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            src.clone()
                        } else {
                            fields.iter().find(|(k, _)| k == c).map(|(_, v)| v.clone()).unwrap_or_default()
                        }
                    })
                    .collect()
            })
            .collect();
        Report { columns, rows }
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = format!("| {} |\n", self.columns.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for r in &self.rows {
            out.push_str(&format!("| {} |\n", r.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| Error::Parse(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Payload {
    Instance(FactorGraph),
    SparseExactify(SparseExactify),
    Gadget(HammingGadget),
    Params(ExactParams),
    Distribution(LocalDistribution),
    Uniformity(UniformityReport),
    Audit(AuditOutcome),
    Pseudoexpectation(Pseudoexpectation),
    Check(CheckReport),
    Bisection(BisectionInstance),
    LocalSearch(LocalSearchResult),
    Certificate(RefutationCertificate),
    Report(Report),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Instance(_) => "instance",
            Payload::SparseExactify(_) => "sparse-exactify",
            Payload::Gadget(_) => "gadget",
            Payload::Params(_) => "params",
            Payload::Distribution(_) => "distribution",
            Payload::Uniformity(_) => "uniformity",
            Payload::Audit(_) => "audit",
            Payload::Pseudoexpectation(_) => "pseudoexpectation",
            Payload::Check(_) => "check",
            Payload::Bisection(_) => "bisection",
            Payload::LocalSearch(_) => "local-search",
            Payload::Certificate(_) => "certificate",
            Payload::Report(_) => "report",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Payload::Instance(fg) => fg.validate(),
            Payload::SparseExactify(s) => s.graph.validate(),
            Payload::Pseudoexpectation(pe) => pe.validate(),
            Payload::Bisection(b) => b.validate(),
            _ => Ok(()),
        }
    }

    /// Key figures for the report table.
    pub fn summary(&self) -> Vec<(String, String)> {
        let mut f: Vec<(&str, String)> = vec![("kind", self.kind().into())];
        match self {
            Payload::Instance(fg) => {
                f.push(("n", fg.n.to_string()));
                f.push(("m", fg.m().to_string()));
            }
            Payload::SparseExactify(s) => {
                f.push(("n", s.graph.n.to_string()));
                f.push(("m", s.graph.m().to_string()));
                f.push(("pinned", s.report.pinned_variables.to_string()));
            }
            Payload::Gadget(g) => {
                f.push(("n", g.n.to_string()));
                f.push(("weight", g.weight.to_string()));
                f.push(("pins", g.pins.len().to_string()));
            }
            Payload::Params(p) => {
                f.push(("rows", p.rows().to_string()));
                f.push(("lambda", p.lambda().to_string()));
            }
            Payload::Distribution(d) => f.push(("support", d.support().len().to_string())),
            Payload::Uniformity(u) => {
                f.push(("max_abs", format!("{:.3e}", u.max_abs)));
                f.push(("passed", u.passed.to_string()));
            }
            Payload::Audit(a) => {
                f.push(("zeta", fmt_q(&a.zeta)));
                f.push(("small", a.small.to_string()));
                f.push(("passed", a.plausible.to_string()));
            }
            Payload::Pseudoexpectation(pe) => {
                f.push(("n", pe.n.to_string()));
                f.push(("degree", pe.degree.to_string()));
                f.push(("values", pe.values.len().to_string()));
            }
            Payload::Check(c) => f.push(("passed", c.passed().to_string())),
            Payload::Bisection(b) => {
                f.push(("n", b.vertices.to_string()));
                f.push(("m", b.edges.len().to_string()));
                f.push(("direction", b.direction.as_str().into()));
                if let Some(t) = &b.provenance.completeness_target {
                    f.push(("completeness", fmt_q(t)));
                }
                if let Some(t) = &b.provenance.soundness_target {
                    f.push(("soundness", fmt_q(t)));
                }
            }
            Payload::LocalSearch(r) => {
                f.push(("m", r.edges.to_string()));
                f.push(("best_cut", r.best_cut.to_string()));
                f.push(("fraction", format!("{:.6}", r.fraction())));
            }
            Payload::Certificate(c) => {
                f.push(("n", c.n.to_string()));
                f.push(("m", c.m.to_string()));
                f.push(("bound", format!("{:.4}", c.bound)));
                f.push(("target", c.target_signed.unsigned_abs().to_string()));
                f.push(("passed", (c.verdict == Verdict::Refuted).to_string()));
            }
            Payload::Report(r) => f.push(("rows", r.rows.len().to_string())),
        }
        f.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: u32,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn new(payload: Payload) -> Self {
        Envelope { schema_version: SCHEMA_VERSION, payload }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Envelope = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        ensure!(e.schema_version == SCHEMA_VERSION, Parse, "unsupported schema version {}", e.schema_version);
        e.payload.validate()?;
        Ok(e)
    }
}

macro_rules! expect_kind {
    ($name:ident, $variant:ident, $ty:ty) => {
        impl Envelope {
            pub fn $name(self) -> Result<$ty> {
                match self.payload {
                    Payload::$variant(x) => Ok(x),
                    other => Err(Error::Parse(format!("expected {} document, got {}", stringify!($variant), other.kind()))),
                }
            }
        }
    };
}

expect_kind!(into_instance, Instance, FactorGraph);
expect_kind!(into_params, Params, ExactParams);
expect_kind!(into_pseudoexpectation, Pseudoexpectation, Pseudoexpectation);
expect_kind!(into_bisection, Bisection, BisectionInstance);
expect_kind!(into_gadget, Gadget, HammingGadget);

impl Envelope {
    /// Instances also accept a sparse-exactify document, taking its graph.
    pub fn into_factor_graph(self) -> Result<FactorGraph> {
        match self.payload {
            Payload::Instance(fg) => Ok(fg),
            Payload::SparseExactify(s) => Ok(s.graph),
            other => Err(Error::Parse(format!("expected instance document, got {}", other.kind()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance_gen::random_kxor;

    #[test]
    fn envelope_roundtrip_and_kind() {
        let fg = random_kxor(10, 5, 3, None, 1).unwrap();
        let e = Envelope::new(Payload::Instance(fg));
        let s = e.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["kind"], "instance");
        assert_eq!(v["schema_version"], 1);
        assert_eq!(Envelope::from_json(&s).unwrap(), e);
        let bad = s.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(Envelope::from_json(&bad).is_err());
        assert!(Envelope::from_json(&s).unwrap().into_params().is_err());
    }

    #[test]
    fn report_rendering() {
        let r = Report::from_summaries(&[
            ("a.json".into(), vec![("kind".into(), "x".into()), ("n".into(), "3".into())]),
            ("b,c.json".into(), vec![("kind".into(), "y".into()), ("m".into(), "4".into())]),
        ]);
        assert_eq!(r.columns, vec!["source", "kind", "n", "m"]);
        assert_eq!(r.to_markdown(), "| source | kind | n | m |\n|---|---|---|---|\n| a.json | x | 3 |  |\n| b,c.json | y |  | 4 |\n");
        assert_eq!(r.to_csv().unwrap(), "source,kind,n,m\na.json,x,3,\n\"b,c.json\",y,,4\n");
    }
}

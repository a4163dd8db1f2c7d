//! Sweeps and their CSV and JSON reports.

use rayon::prelude::*;
use serde::Serialize;

use crate::measure::measure;
use crate::plan::{ExperimentPlan, RunSpec};

/// CSV header, in column order.
pub const COLUMNS: [&str; 12] = [
    "algo",
    "n",
    "s",
    "b_c",
    "b_l",
    "kappa",
    "g",
    "rounds",
    "analytic_bound",
    "lower_bound",
    "pass",
    "error",
];

/// One report line. Missing values are empty in CSV and `null` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub algo: String,
    pub n: Option<usize>,
    pub s: u64,
    pub b_c: String,
    pub b_l: String,
    pub kappa: Option<u32>,
    pub g: Option<usize>,
    pub rounds: Option<cwc_core::Round>,
    pub analytic_bound: Option<f64>,
    pub lower_bound: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

impl Row {
    /// A bound violation or a wrong result, as opposed to a run that could
    /// not be carried out.
    pub fn is_violation(&self) -> bool {
        !self.pass && self.error.is_none()
    }

    fn fields(&self) -> [String; 12] {
        let opt = |x: Option<String>| x.unwrap_or_default();
        [
            self.algo.clone(),
            opt(self.n.map(|v| v.to_string())),
            self.s.to_string(),
            self.b_c.clone(),
            self.b_l.clone(),
            opt(self.kappa.map(|v| v.to_string())),
            opt(self.g.map(|v| v.to_string())),
            opt(self.rounds.map(|v| v.to_string())),
            opt(self.analytic_bound.map(sig6)),
            opt(self.lower_bound.map(sig6)),
            self.pass.to_string(),
            opt(self.error.clone()),
        ]
    }
}

/// Six significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=5).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let text = format!("{x:.decimals$}");
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

/// Rounds to the precision shown in CSV, so both outputs agree.
fn rounded(x: Option<f64>) -> Option<f64> {
    x.map(|v| sig6(v).parse().unwrap_or(v))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.fields()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| Row {
                analytic_bound: rounded(r.analytic_bound),
                lower_bound: rounded(r.lower_bound),
                ..r.clone()
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
    }

    /// 0 when every row passed or failed only to run, 2 on any violation.
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().any(Row::is_violation) {
            2
        } else {
            0
        }
    }
}

/// Runs one repetition and turns it into a row; run errors land in the
/// `error` column.
pub fn run_row(spec: &RunSpec, rep: u32, plan: &ExperimentPlan) -> Row {
    match measure(spec, rep, &plan.bounds) {
        Ok(o) => Row {
            algo: spec.algo.id().to_string(),
            n: Some(o.n),
            s: o.s,
            b_c: o.b_c.clone(),
            b_l: o.b_l.clone(),
            kappa: o.kappa,
            g: o.g,
            rounds: Some(o.rounds),
            analytic_bound: o.analytic_bound,
            lower_bound: o.lower_bound,
            pass: o.pass(&plan.bounds),
            error: None,
        },
        Err(e) => {
            let seed = spec.seed.wrapping_add(rep as u64);
            let bits = crate::measure::payload_bits(spec).unwrap_or(spec.s);
            let t = spec.topology.build(seed, bits).ok();
            Row {
                algo: spec.algo.id().to_string(),
                n: Some(spec.topology.n()),
                s: spec.s,
                b_c: t.as_ref().map(|t| cwc_core::Topology::describe_range(t.cloud_bws().iter().copied())).unwrap_or_default(),
                b_l: t.as_ref().map(|t| cwc_core::Topology::describe_range(t.links().iter().map(|l| l.w))).unwrap_or_default(),
                kappa: spec.kappa,
                g: spec.grain,
                rounds: None,
                analytic_bound: None,
                lower_bound: None,
                pass: false,
                error: Some(e.label()),
            }
        }
    }
}

/// Every repetition of every run, in parallel; rows come back in plan order.
pub fn run_plan(plan: &ExperimentPlan) -> Report {
    let jobs: Vec<(&RunSpec, u32)> = plan.runs.iter().flat_map(|r| (0..r.repetitions).map(move |k| (r, k))).collect();
    let rows = jobs.par_iter().map(|&(r, k)| run_row(r, k, plan)).collect();
    Report { rows }
}

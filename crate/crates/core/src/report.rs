//! CSV rows and structured log lines for solver output.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rule::StoppingRule;
use crate::solver::VarianceSolution;

pub const COLUMNS: [&str; 13] = [
    "x",
    "case",
    "V",
    "rule_kind",
    "a",
    "b",
    "z_lo",
    "z_hi",
    "p_star",
    "c_star",
    "duality_gap",
    "mean_check",
    "error",
];

/// Twelve significant digits, trailing zeros trimmed; empty for NaN.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let e: i32 = exp.parse().unwrap();
    if (-5..12).contains(&e) {
        let s = format!("{:.*}", (11 - e).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{m}e{e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub x: f64,
    pub case: String,
    #[serde(rename = "V")]
    pub value: Option<f64>,
    pub rule_kind: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub z_lo: Option<f64>,
    pub z_hi: Option<f64>,
    pub p_star: Option<f64>,
    pub c_star: Option<f64>,
    pub duality_gap: Option<f64>,
    pub mean_check: String,
    pub error: String,
}

fn edges(rule: &StoppingRule, alpha: f64, beta: f64) -> (Option<f64>, Option<f64>) {
    match rule {
        StoppingRule::ExitInterval { lower, upper } => (Some(*lower), Some(*upper)),
        StoppingRule::BernoulliMix { first, .. } => edges(first, alpha, beta),
        StoppingRule::WholeInterval | StoppingRule::EpsilonFamily(_) => (Some(alpha), Some(beta)),
        StoppingRule::Immediate => (None, None),
    }
}

impl Record {
    pub fn from_solution(sol: &VarianceSolution, alpha: f64, beta: f64) -> Record {
        let (a, b) = edges(&sol.rule, alpha, beta);
        let p_star = match &sol.rule {
            StoppingRule::BernoulliMix { p, .. } => Some(*p),
            _ => None,
        };
        let mean_check = match sol.diagnostics.mean_check {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "exempt",
        };
        Record {
            x: sol.x,
            case: sol.classification.tag.to_string(),
            value: Some(sol.value),
            rule_kind: sol.rule.kind_name().into(),
            a,
            b,
            z_lo: sol.region.as_ref().map(|r| r.z_lo),
            z_hi: sol.region.as_ref().map(|r| r.z_hi),
            p_star,
            c_star: sol.c_star,
            duality_gap: sol.diagnostics.duality_gap,
            mean_check: mean_check.into(),
            error: String::new(),
        }
    }

    pub fn from_error(x: f64, case: Option<String>, err: &Error) -> Record {
        Record {
            x,
            case: case.unwrap_or_default(),
            value: None,
            rule_kind: String::new(),
            a: None,
            b: None,
            z_lo: None,
            z_hi: None,
            p_star: None,
            c_star: None,
            duality_gap: None,
            mean_check: String::new(),
            error: err.to_string(),
        }
    }

    pub fn fields(&self) -> [String; 13] {
        [
            fmt_num(self.x),
            self.case.clone(),
            opt(self.value),
            self.rule_kind.clone(),
            opt(self.a),
            opt(self.b),
            opt(self.z_lo),
            opt(self.z_hi),
            opt(self.p_star),
            opt(self.c_star),
            opt(self.duality_gap),
            self.mean_check.clone(),
            self.error.clone(),
        ]
    }
}

/// Header plus one line per record.
pub fn write_csv<W: Write>(out: W, records: &[Record]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("csv output: {e}"));
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Config(format!("csv output: {e}")))?;
    Ok(())
}

/// One JSON object per line.
pub fn log_line<T: Serialize>(event: &str, payload: &T) -> String {
    serde_json::json!({ "event": event, "data": payload }).to_string()
}

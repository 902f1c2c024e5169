use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::simplex::SimplexVector;

/// JSON has no infinities; non-finite values are written as strings.
pub(crate) fn finite_or_string<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_number(*v))
    }
}

pub(crate) fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.12e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEvalReport {
    pub x: f64,
    #[serde(rename = "I", serialize_with = "finite_or_string")]
    pub rate: f64,
    pub psi_star: SimplexVector,
    #[serde(serialize_with = "finite_or_string")]
    pub theta_star: f64,
    pub starts_used: usize,
    pub spread: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl RateEvalReport {
    pub(crate) fn infinite(x: f64, weights: SimplexVector) -> Self {
        Self {
            x,
            rate: f64::INFINITY,
            psi_star: weights,
            theta_star: 0.0,
            starts_used: 0,
            spread: 0.0,
            diagnostics: BTreeMap::from([("below_edge".to_string(), 1.0)]),
        }
    }

    pub(crate) fn at_edge(x: f64, weights: SimplexVector, theta: f64) -> Self {
        Self {
            x,
            rate: 0.0,
            psi_star: weights,
            theta_star: theta,
            starts_used: 0,
            spread: 0.0,
            diagnostics: BTreeMap::from([("at_edge".to_string(), 1.0)]),
        }
    }
}

/// CSV with columns `x, I, theta_star, psi_star_1..p, spread`.
pub fn rate_curve_csv(reports: &[RateEvalReport]) -> String {
    let p = reports.first().map_or(0, |r| r.psi_star.len());
    let mut out = String::from("x,I,theta_star");
    for k in 1..=p {
        let _ = write!(out, ",psi_star_{k}");
    }
    out.push_str(",spread\n");
    for r in reports {
        let _ = write!(out, "{},{},{}", format_number(r.x), format_number(r.rate), format_number(r.theta_star));
        for v in r.psi_star.as_slice() {
            let _ = write!(out, ",{}", format_number(*v));
        }
        let _ = writeln!(out, ",{}", format_number(r.spread));
    }
    out
}

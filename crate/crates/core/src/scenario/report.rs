//! Check reports: JSON form, text table and golden-file comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::hj::{HjReport, Verdict};

/// Serde helpers that keep non-finite values representable in JSON by
/// writing them as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else if x.is_nan() {
            Repr::Text("nan".into())
        } else if x > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod map {
        use super::*;
        use std::collections::BTreeMap;

        pub fn serialize<S: Serializer>(
            m: &BTreeMap<String, f64>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            let out: BTreeMap<&String, Repr> = m.iter().map(|(k, v)| (k, to_repr(*v))).collect();
            out.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, v)| from_repr(v).map(|x| (k, x)))
                .collect()
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|x| to_repr(*x))
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(from_repr)
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    #[serde(with = "real::vec")]
    pub point: Vec<f64>,
    #[serde(with = "real::map")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

/// Result of one check on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub scenario: String,
    pub check: String,
    pub verdict: Verdict,
    #[serde(with = "real::map")]
    pub hypothesis_residuals: BTreeMap<String, f64>,
    #[serde(with = "real::map")]
    pub equation_residuals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_hypotheses: Vec<String>,
    #[serde(default)]
    pub defects: Vec<String>,
    #[serde(default)]
    pub samples: Vec<SampleRow>,
    #[serde(with = "real")]
    pub wall_time_s: f64,
}

impl CheckReport {
    pub fn from_hj(scenario: &str, report: HjReport, wall_time_s: f64) -> Self {
        let failed_hypotheses = report
            .failed_hypotheses()
            .into_iter()
            .map(String::from)
            .collect();
        let hypothesis_residuals = report
            .hypotheses
            .iter()
            .map(|h| (h.name.clone(), h.residual))
            .collect();
        let mut equation_residuals =
            BTreeMap::from([("equation".to_string(), report.equation_residual)]);
        if let Some(a) = report.alternate_residual {
            equation_residuals.insert("alternate".into(), a);
        }
        CheckReport {
            scenario: scenario.to_string(),
            check: report.check,
            verdict: report.verdict,
            hypothesis_residuals,
            equation_residuals,
            failed_hypotheses,
            defects: report.defects,
            samples: report
                .samples
                .into_iter()
                .map(|s| SampleRow {
                    point: s.point,
                    values: s.values,
                    status: s.status,
                })
                .collect(),
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary: verdict line, residuals, then the sample table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} / {}: {} ({:.3} s)",
            self.scenario, self.check, self.verdict, self.wall_time_s
        );
        for (k, v) in &self.hypothesis_residuals {
            let mark = if self.failed_hypotheses.contains(k) {
                "  <- fails"
            } else {
                ""
            };
            let _ = writeln!(out, "  hypothesis {k:<22} {v:>12.3e}{mark}");
        }
        for (k, v) in &self.equation_residuals {
            let _ = writeln!(out, "  residual   {k:<22} {v:>12.3e}");
        }
        for d in &self.defects {
            let _ = writeln!(out, "  defect: {d}");
        }
        if let Some(first) = self.samples.first() {
            let keys: Vec<&String> = first.values.keys().collect();
            let mut header = format!("  {:>4}", "#");
            for k in &keys {
                let _ = write!(header, " {k:>14}");
            }
            header.push_str("  status");
            let _ = writeln!(out, "{header}");
            for (i, s) in self.samples.iter().enumerate() {
                let mut line = format!("  {i:>4}");
                for k in &keys {
                    let v = s.values.get(*k).copied().unwrap_or(f64::NAN);
                    let _ = write!(line, " {v:>14.4e}");
                }
                let _ = writeln!(out, "{line}  {}", s.status.as_deref().unwrap_or(""));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub scenario: String,
    pub code: String,
    pub message: String,
}

/// Output of `check all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub verdict: Verdict,
    pub reports: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ScenarioFailure>,
    #[serde(with = "real")]
    pub wall_time_s: f64,
}

impl SuiteReport {
    pub fn new(
        mut reports: Vec<CheckReport>,
        errors: Vec<ScenarioFailure>,
        wall_time_s: f64,
    ) -> Self {
        reports.sort_by(|a, b| (&a.scenario, &a.check).cmp(&(&b.scenario, &b.check)));
        let verdict = Verdict::combine(reports.iter().map(|r| r.verdict));
        SuiteReport {
            verdict,
            reports,
            errors,
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let _ = writeln!(out, "{:<28} {:<22} {}", r.scenario, r.check, r.verdict);
        }
        for e in &self.errors {
            let _ = writeln!(out, "{:<28} {:<22} ERROR {}", e.scenario, e.code, e.message);
        }
        let _ = writeln!(out, "overall: {}", self.verdict);
        out
    }
}

/// Absolute part of the golden comparison tolerance.
pub const GOLDEN_ABS_TOL: f64 = 1e-9;
/// Relative part of the golden comparison tolerance.
pub const GOLDEN_REL_TOL: f64 = 1e-6;

/// Compare two report documents, ignoring any key that mentions wall time.
/// Numbers match when `|a − b| ≤ 1e-9 + 1e-6·|b|`.
pub fn compare_reports(
    actual: &serde_json::Value,
    golden: &serde_json::Value,
) -> Result<(), String> {
    compare_at(actual, golden, "$")
}

fn compare_at(a: &serde_json::Value, b: &serde_json::Value, path: &str) -> Result<(), String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (
                x.as_f64().unwrap_or(f64::NAN),
                y.as_f64().unwrap_or(f64::NAN),
            );
            if (x - y).abs() <= GOLDEN_ABS_TOL + GOLDEN_REL_TOL * y.abs() {
                Ok(())
            } else {
                Err(format!("{path}: {x} differs from golden {y}"))
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                if k.contains("wall_time") {
                    continue;
                }
                let sub = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => compare_at(u, v, &sub)?,
                    (None, _) => return Err(format!("{sub}: missing from output")),
                    (_, None) => return Err(format!("{sub}: not in golden file")),
                }
            }
            Ok(())
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!(
                    "{path}: length {} differs from golden {}",
                    x.len(),
                    y.len()
                ));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .try_for_each(|(i, (u, v))| compare_at(u, v, &format!("{path}[{i}]")))
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} differs from golden {b}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> CheckReport {
        CheckReport {
            scenario: "s".into(),
            check: "hj1".into(),
            verdict: Verdict::Pass,
            hypothesis_residuals: BTreeMap::from([
                ("closedness".into(), 1e-14),
                ("sigma".into(), f64::INFINITY),
            ]),
            equation_residuals: BTreeMap::from([("equation".into(), 3e-12)]),
            failed_hypotheses: vec![],
            defects: vec![],
            samples: vec![SampleRow {
                point: vec![0.5, f64::NAN],
                values: BTreeMap::from([("equation".into(), 1e-13)]),
                status: Some("both zero".into()),
            }],
            wall_time_s: 0.01,
        }
    }

    #[test]
    fn report_round_trips_including_non_finite_values() {
        let r = sample_report();
        let back: CheckReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.hypothesis_residuals, r.hypothesis_residuals);
        assert!(back.samples[0].point[1].is_nan());
        assert_eq!(back.to_json(), r.to_json());
    }

    #[test]
    fn comparison_ignores_wall_time_and_tolerates_rounding() {
        let a = serde_json::to_value(sample_report()).unwrap();
        let mut b = sample_report();
        b.wall_time_s = 99.0;
        b.equation_residuals
            .insert("equation".into(), 3e-12 + 1e-10);
        assert!(compare_reports(&a, &serde_json::to_value(&b).unwrap()).is_ok());
        b.verdict = Verdict::Fail;
        assert!(compare_reports(&a, &serde_json::to_value(&b).unwrap()).is_err());
    }

    #[test]
    fn table_names_failed_hypotheses() {
        let mut r = sample_report();
        r.failed_hypotheses = vec!["closedness".into()];
        assert!(r.table().contains("<- fails"));
    }
}

//! Run reports and trajectory export.
//!
//! JSON has no infinity literal, so infinite values are written as the
//! strings `"inf"` / `"-inf"`. Trajectories go to RFC-4180 CSV with columns
//! `run_id, k, x_1..x_n, u_1..u_m`; the input cells of the final step are empty.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::dynamics::{ParamVector, Trajectory};
use crate::error::{Error, Result};
use crate::linear::{ResilienceResult, ResilienceStatus};
use crate::scenario::{ScenarioCertificate, ScenarioSolution};

/// Serde adapter for `f64` fields that may hold `±inf`.
pub mod f64_or_inf {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    struct V;

    impl Visitor<'_> for V {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or \"inf\" / \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(V)
    }
}

/// [`f64_or_inf`] applied element-wise.
pub mod vec_f64_or_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "super::f64_or_inf")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| W(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<W>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Scenario,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solve_s: f64,
    pub certify_s: f64,
    pub total_s: f64,
}

/// Solution summary laid out like a results table: one column per run, with
/// rows `epsilon`, `alpha_1`, `alpha_2`, `complexity` and one bound per beta.
///
/// `alpha_1` holds the state-dependent coefficients and `alpha_2` the
/// constant term, per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub scenarios: usize,
    #[serde(with = "f64_or_inf")]
    pub epsilon: f64,
    pub alpha_1: Vec<Vec<f64>>,
    pub alpha_2: Vec<f64>,
    pub complexity: usize,
    /// Keyed by beta formatted as in the config, e.g. `"1e-2"`.
    pub bound: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    /// SHA-256 of the canonical (compact) JSON of `config`.
    pub config_hash: String,
    pub config: ProblemConfig,
    pub method: Method,
    pub seed: u64,
    #[serde(with = "f64_or_inf")]
    pub epsilon: f64,
    pub status: ResilienceStatus,
    pub alpha: ParamVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ResilienceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSolution>,
    #[serde(default)]
    pub certificates: Vec<ScenarioCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<ResultTable>,
    pub timings: Timings,
}

impl RunReport {
    pub fn tool_name() -> String {
        format!("resilo {}", env!("CARGO_PKG_VERSION"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Whether the embedded config still hashes to `config_hash`.
    pub fn hash_matches(&self) -> Result<bool> {
        Ok(self.config.hash()? == self.config_hash)
    }
}

/// Splits a flat parameter vector into per-input state coefficients and a
/// constant term. Works for both linear and polynomial layouts.
pub fn split_alpha(alpha: &ParamVector, n: usize, m: usize, polynomial: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let a = alpha.as_slice();
    if polynomial {
        let d = a.len() / m.max(1);
        let rows: Vec<&[f64]> = a.chunks(d).collect();
        (rows.iter().map(|r| r[1..].to_vec()).collect(), rows.iter().map(|r| r[0]).collect())
    } else {
        let gain = a[..n * m].chunks(n).map(<[f64]>::to_vec).collect();
        (gain, a[n * m..].to_vec())
    }
}

/// Shortest round-tripping decimal form of a probability level, e.g. `1e-2`.
pub fn beta_key(beta: f64) -> String {
    let s = format!("{beta:e}");
    s.replace("e-0", "e-").replace("e0", "")
}

pub fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["run_id".to_string(), "k".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h
}

/// Writes `(run_id, trajectory)` pairs as CSV with CRLF line endings.
pub fn write_trajectories<W: Write>(out: W, n: usize, m: usize, runs: &[(usize, &Trajectory)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(trajectory_header(n, m)).map_err(csv_err)?;
    for (id, traj) in runs {
        for (k, x) in traj.states.iter().enumerate() {
            let mut rec = vec![id.to_string(), k.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            match traj.inputs.get(k) {
                Some(u) => rec.extend(u.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), m)),
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories_file(path: &Path, n: usize, m: usize, runs: &[(usize, &Trajectory)]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectories(f, n, m, runs)
}

//! Report emission: run manifests, CSV writers for step CDFs, iteration
//! traces and sample batches, and JSON scalar summaries.
//!
//! Every report embeds its manifest as a trailing comment line so a run can
//! be reproduced from the report alone; comparison tooling strips comment
//! lines first (the manifest carries a timestamp).

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{IterationTrace, StepCDF, TAIL_RULE};
use crate::simulator::SimBatch;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed report: {0}")]
    Parse(String),
}

/// Provenance record attached to every emitted report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub artifact_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    fn footer(&self) -> String {
        format!("# manifest: {}", serde_json::to_string(self).unwrap())
    }
}

/// Scalar summary of a simulation batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
    pub seed: u64,
}

impl SimSummary {
    pub fn from_batch(batch: &SimBatch) -> Self {
        Self {
            mean: batch.mean,
            variance: batch.variance,
            count: batch.samples.len() as u64,
            seed: batch.config.seed,
        }
    }
}

/// Step-CDF CSV: `x,value` rows for every grid point (the final row holds the
/// truncation point and the tail-rule value there), then footer comments with
/// the truncation point, tail rule, and manifest.
pub fn write_step_cdf_csv<W: Write>(
    cdf: &StepCDF,
    manifest: &RunManifest,
    mut w: W,
) -> Result<(), ReportError> {
    writeln!(w, "x,value")?;
    for (k, v) in cdf.values.iter().enumerate() {
        writeln!(w, "{},{}", cdf.x_grid[k], v)?;
    }
    let a = cdf.a();
    writeln!(w, "{},{}", a, cdf.eval(a))?;
    writeln!(w, "# A={a} tail={TAIL_RULE}")?;
    writeln!(w, "{}", manifest.footer())?;
    Ok(())
}

/// Reads a step-CDF CSV back; the last data row supplies the truncation point
/// and is dropped from the value list.
pub fn read_step_cdf_csv<R: BufRead>(r: R) -> Result<StepCDF, ReportError> {
    let mut x_grid = Vec::new();
    let mut values = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "x,value" {
            continue;
        }
        let (x, v) = line
            .split_once(',')
            .ok_or_else(|| ReportError::Parse(format!("bad row: {line}")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ReportError::Parse(format!("bad number: {s}")))
        };
        x_grid.push(parse(x)?);
        values.push(parse(v)?);
    }
    if x_grid.len() < 3 {
        return Err(ReportError::Parse("too few rows".into()));
    }
    values.pop();
    StepCDF::new(x_grid, values).map_err(|e| ReportError::Parse(e.to_string()))
}

/// Iteration-trace CSV: `m,U_m` rows.
pub fn write_trace_csv<W: Write>(
    trace: &IterationTrace,
    manifest: &RunManifest,
    mut w: W,
) -> Result<(), ReportError> {
    writeln!(w, "m,U_m")?;
    for (i, u) in trace.u_bounds.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, u)?;
    }
    writeln!(w, "{}", manifest.footer())?;
    Ok(())
}

/// Sample CSV with the manifest footer appended.
pub fn write_batch_csv<W: Write>(
    batch: &SimBatch,
    manifest: &RunManifest,
    mut w: W,
) -> Result<(), ReportError> {
    crate::simulator::write_samples_csv(batch, &mut w)
        .map_err(|e| ReportError::Parse(e.to_string()))?;
    writeln!(w, "{}", manifest.footer())?;
    Ok(())
}

/// Comment-free body of a report, for byte-identity comparisons that must
/// ignore the manifest timestamp.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{eval_l0, GridRule, MeshConfig};

    fn manifest() -> RunManifest {
        RunManifest::new("test", BTreeMap::new(), Some(1))
    }

    #[test]
    fn step_cdf_roundtrip() {
        let config = MeshConfig { a: 10.0, n: 40, m: 10, iterations: 1, grid_rule: GridRule::Uniform };
        let (x_grid, _) = config.grids();
        let cdf = StepCDF::new(
            x_grid.clone(),
            (0..40).map(|k| eval_l0(x_grid[k])).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_step_cdf_csv(&cdf, &manifest(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert!(text.contains("# manifest: "));
        let back = read_step_cdf_csv(text.as_bytes()).unwrap();
        assert_eq!(back.x_grid, cdf.x_grid);
        assert_eq!(back.values, cdf.values);
    }

    #[test]
    fn body_strips_only_comments() {
        let text = "x,value\n2,0\n# A=10 tail=...\n# manifest: {}\n";
        assert_eq!(csv_body(text), "x,value\n2,0");
    }

    #[test]
    fn summary_serializes() {
        let s = SimSummary { mean: 3.5, variance: 0.25, count: 100, seed: 7 };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"mean\":3.5") && json.contains("\"seed\":7"));
        let back: SimSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.count, 100);
    }
}

//! On-disk artifacts: design/bounds/verification JSON and trace/event CSVs.
//!
//! Every JSON document carries a `schema` tag and the SHA-256 hash of the
//! scenario it was produced from; the verify stage refuses artifacts whose
//! hashes disagree. Matrices are stored row-major; complex entries as
//! `[re, im]` pairs. Floats print in Rust's shortest round-trip form, so
//! CSV parse-back is exact and repeated runs are byte-identical.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::VerificationReport;
use crate::bounds::{BoundsGridRow, BoundsReport};
use crate::design::{ControllerDesign, DecayCertificate, DesignReport};
use crate::error::{Error, Result};
use crate::linalg::{C64, CMatrix, RMatrix};
use crate::sim::{AgentTrack, EventRecord, SimTrace, TraceDiagnostics};

pub const DESIGN_SCHEMA: &str = "etcon.design.v1";
pub const TRACE_CSV_SCHEMA: &str = "etcon.trace-csv.v1";
pub const EVENTS_CSV_SCHEMA: &str = "etcon.events-csv.v1";
pub const BOUNDS_GRID_CSV_SCHEMA: &str = "etcon.bounds-grid-csv.v1";
pub const BOUNDS_SCHEMA: &str = "etcon.bounds.v1";
pub const VERIFY_SCHEMA: &str = "etcon.verify.v1";
pub const META_SCHEMA: &str = "etcon.run-meta.v1";

pub fn rows_from_matrix(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> RMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    RMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub fn rows_from_complex(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn complex_from_rows(rows: &[Vec<[f64; 2]>]) -> CMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(nrows, ncols, |i, j| C64::new(rows[i][j][0], rows[i][j][1]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub schema: String,
    pub scenario_hash: String,
    pub alpha: f64,
    pub lambda2_real: f64,
    pub c_gain: f64,
    /// Row-major matrices.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    /// Complex entries as [re, im].
    pub a_hat: Vec<Vec<[f64; 2]>>,
    pub beta_hat: f64,
    pub lambda_hat: f64,
    pub checks: DesignReport,
}

impl DesignArtifact {
    pub fn new(
        scenario_hash: &str,
        a: &RMatrix,
        b: &RMatrix,
        design: &ControllerDesign,
        certificate: &DecayCertificate,
        checks: DesignReport,
    ) -> Self {
        Self {
            schema: DESIGN_SCHEMA.into(),
            scenario_hash: scenario_hash.into(),
            alpha: design.alpha,
            lambda2_real: design.lambda2_real,
            c_gain: design.c_gain,
            a: rows_from_matrix(a),
            b: rows_from_matrix(b),
            p: rows_from_matrix(&design.p_matrix),
            f: rows_from_matrix(&design.f_gain),
            a_hat: rows_from_complex(&design.a_hat),
            beta_hat: certificate.beta_hat,
            lambda_hat: certificate.lambda_hat,
            checks,
        }
    }

    pub fn design(&self) -> ControllerDesign {
        ControllerDesign {
            p_matrix: matrix_from_rows(&self.p),
            alpha: self.alpha,
            f_gain: matrix_from_rows(&self.f),
            c_gain: self.c_gain,
            lambda2_real: self.lambda2_real,
            a_hat: complex_from_rows(&self.a_hat),
        }
    }

    pub fn certificate(&self) -> DecayCertificate {
        DecayCertificate {
            beta_hat: self.beta_hat,
            lambda_hat: self.lambda_hat,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsArtifact {
    pub schema: String,
    pub scenario_hash: String,
    pub report: BoundsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArtifact {
    pub schema: String,
    pub scenario_hash: String,
    pub report: VerificationReport,
}

/// Run metadata; everything verify needs to rebuild trace diagnostics plus
/// wall-clock info (kept out of the CSVs so those stay byte-reproducible).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: String,
    pub scenario_hash: String,
    pub n_agents: usize,
    pub n: usize,
    pub m: usize,
    pub delay: f64,
    pub step_h: f64,
    pub t_end: f64,
    pub event_count: usize,
    pub diagnostics: TraceDiagnostics,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Artifact(format!("JSON encode: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))
}

pub fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Artifact(format!(
            "schema mismatch: found {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

pub fn check_hash(artifact_hash: &str, current: &str) -> Result<()> {
    if artifact_hash != current {
        return Err(Error::HashMismatch {
            artifact: artifact_hash.into(),
            current: current.into(),
        });
    }
    Ok(())
}

/// Trace CSV: one row per (sample, agent).
///
/// Columns: time, agent (1-based), x_0..x_{n−1}, y_0.., yd_0.., err_norm,
/// err_delayed_norm, threshold, u_0..u_{m−1}.
pub fn write_trace_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {TRACE_CSV_SCHEMA}")?;
    let mut header = String::from("time,agent");
    for k in 0..trace.n {
        header.push_str(&format!(",x{k}"));
    }
    for k in 0..trace.n {
        header.push_str(&format!(",y{k}"));
    }
    for k in 0..trace.n {
        header.push_str(&format!(",yd{k}"));
    }
    header.push_str(",err_norm,err_delayed_norm,threshold");
    for k in 0..trace.m {
        header.push_str(&format!(",u{k}"));
    }
    writeln!(out, "{header}")?;
    for s in 0..trace.n_samples() {
        let t = trace.times[s];
        for a in 0..trace.n_agents {
            let track = &trace.agents[a];
            let mut row = format!("{t},{}", a + 1);
            for k in 0..trace.n {
                row.push_str(&format!(",{}", track.x[s * trace.n + k]));
            }
            for k in 0..trace.n {
                row.push_str(&format!(",{}", track.y_self[s * trace.n + k]));
            }
            for k in 0..trace.n {
                row.push_str(&format!(",{}", track.y_delayed_self[s * trace.n + k]));
            }
            row.push_str(&format!(
                ",{},{},{}",
                track.err_norm[s], track.err_delayed_norm[s], track.threshold[s]
            ));
            for k in 0..trace.m {
                row.push_str(&format!(",{}", track.u[s * trace.m + k]));
            }
            writeln!(out, "{row}")?;
        }
    }
    Ok(())
}

/// Events CSV: agent (1-based), t_event, t_delivered, err_before, err_after,
/// then the broadcast state components.
pub fn write_events_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {EVENTS_CSV_SCHEMA}")?;
    let mut header = String::from("agent,t_event,t_delivered,err_before,err_after");
    for k in 0..trace.n {
        header.push_str(&format!(",x{k}"));
    }
    writeln!(out, "{header}")?;
    for ev in &trace.events {
        let mut row = format!(
            "{},{},{},{},{}",
            ev.agent + 1,
            ev.t_event,
            ev.t_delivered,
            ev.err_before,
            ev.err_after
        );
        for v in &ev.x_broadcast {
            row.push_str(&format!(",{v}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Bounds-curve CSV over the t_k grid.
pub fn write_bounds_grid_csv(path: &Path, rows: &[BoundsGridRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {BOUNDS_GRID_CSV_SCHEMA}")?;
    writeln!(out, "t_k,k3,tau,h3,delayed_tau,epsilon")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t_k,
            r.k3,
            r.tau,
            r.h3.map(|v| v.to_string()).unwrap_or_default(),
            r.delayed_tau.map(|v| v.to_string()).unwrap_or_default(),
            r.epsilon.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Artifact(format!("line {line}: bad float {field:?}")))
}

/// Rebuild a SimTrace from trace/events CSVs plus the run metadata.
pub fn read_trace(
    trace_csv: &Path,
    events_csv: &Path,
    meta: &RunMeta,
) -> Result<SimTrace> {
    let text = std::fs::read_to_string(trace_csv)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", trace_csv.display())))?;
    let (n, m, n_agents) = (meta.n, meta.m, meta.n_agents);
    let mut times: Vec<f64> = Vec::new();
    let mut tracks = vec![AgentTrack::default(); n_agents];
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("time,") {
            continue; // schema tag and column header
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + 3 * n + 3 + m;
        if fields.len() != expected {
            return Err(Error::Artifact(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                expected,
                fields.len()
            )));
        }
        let t = parse_f64(fields[0], idx + 1)?;
        let agent = fields[1]
            .parse::<usize>()
            .map_err(|_| Error::Artifact(format!("line {}: bad agent id", idx + 1)))?
            - 1;
        if agent == 0 {
            times.push(t);
        }
        let track = &mut tracks[agent];
        let mut pos = 2;
        for _ in 0..n {
            track.x.push(parse_f64(fields[pos], idx + 1)?);
            pos += 1;
        }
        for _ in 0..n {
            track.y_self.push(parse_f64(fields[pos], idx + 1)?);
            pos += 1;
        }
        for _ in 0..n {
            track.y_delayed_self.push(parse_f64(fields[pos], idx + 1)?);
            pos += 1;
        }
        track.err_norm.push(parse_f64(fields[pos], idx + 1)?);
        track
            .err_delayed_norm
            .push(parse_f64(fields[pos + 1], idx + 1)?);
        track.threshold.push(parse_f64(fields[pos + 2], idx + 1)?);
        pos += 3;
        for _ in 0..m {
            track.u.push(parse_f64(fields[pos], idx + 1)?);
            pos += 1;
        }
    }

    let ev_text = std::fs::read_to_string(events_csv)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", events_csv.display())))?;
    let mut events = Vec::new();
    for (idx, line) in ev_text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("agent,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 + n {
            return Err(Error::Artifact(format!(
                "events line {}: expected {} fields, got {}",
                idx + 1,
                5 + n,
                fields.len()
            )));
        }
        let mut x_broadcast = Vec::with_capacity(n);
        for k in 0..n {
            x_broadcast.push(parse_f64(fields[5 + k], idx + 1)?);
        }
        events.push(EventRecord {
            agent: fields[0]
                .parse::<usize>()
                .map_err(|_| Error::Artifact(format!("events line {}: bad agent", idx + 1)))?
                - 1,
            t_event: parse_f64(fields[1], idx + 1)?,
            t_delivered: parse_f64(fields[2], idx + 1)?,
            err_before: parse_f64(fields[3], idx + 1)?,
            err_after: parse_f64(fields[4], idx + 1)?,
            x_broadcast,
        });
    }

    // CSV row order is presentation; event-record invariants are checked
    // against time order.
    events.sort_by(|a, b| a.t_event.total_cmp(&b.t_event));

    let trace = SimTrace {
        n_agents,
        n,
        m,
        delay_d: meta.delay,
        times,
        agents: tracks,
        events,
        diagnostics: meta.diagnostics.clone(),
    };
    trace.validate()?;
    Ok(trace)
}

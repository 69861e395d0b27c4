//! CSV and JSON serialisation of trajectories, spectra, covariances and manifests.
//!
//! Numbers are written in shortest round-trip form, except wrapped positions in
//! trajectory files which are rounded to 12 significant digits first.

use serde::{Deserialize, Serialize};

use crate::config::{to_config_text, RunConfig};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::spectral::SpectralDecomposition;
use crate::stationary::StationaryCovariance;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest decimal string that parses back to `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `x` rounded to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("valid float literal")
}

pub fn trajectory_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("q{i}")));
    cols.extend((1..=n).map(|i| format!("p{i}")));
    cols.push("H".into());
    cols.push("pbar".into());
    cols.join(",")
}

/// `t,q1..qN,p1..pN,H,pbar`, positions wrapped into `[0, L)`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = trajectory_header(n);
    out.push('\n');
    for k in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[k])];
        row.extend(traj.wrapped_positions(k).into_iter().map(|q| fmt_f64(round_sig12(q))));
        row.extend(traj.states[k].velocities.iter().map(|&p| fmt_f64(p)));
        row.push(fmt_f64(traj.hamiltonian_track[k]));
        row.push(fmt_f64(traj.mean_velocity_track[k]));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub hamiltonian: f64,
    pub mean_velocity: f64,
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Syntax {
        line,
        message: format!("cannot parse `{s}` as a number"),
    })
}

/// Parses a trajectory CSV written by [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Syntax {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols = header.split(',').count();
    if cols < 5 || (cols - 3) % 2 != 0 {
        return Err(Error::Syntax {
            line: 1,
            message: format!("malformed header `{header}`"),
        });
    }
    let n = (cols - 3) / 2;
    if header != trajectory_header(n) {
        return Err(Error::Syntax {
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let values = l
                .split(',')
                .map(|s| parse_field(s, line))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != cols {
                return Err(Error::Syntax {
                    line,
                    message: format!("expected {cols} fields, got {}", values.len()),
                });
            }
            Ok(TrajectoryRow {
                t: values[0],
                positions: values[1..=n].to_vec(),
                velocities: values[n + 1..=2 * n].to_vec(),
                hamiltonian: values[2 * n + 1],
                mean_velocity: values[2 * n + 2],
            })
        })
        .collect()
}

/// `j,k,re,im,mu_j`.
pub fn spectrum_csv(spec: &SpectralDecomposition) -> String {
    let mut out = String::from("j,k,re,im,mu_j\n");
    for e in &spec.eigenvalues {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.j,
            e.k,
            fmt_f64(e.re),
            fmt_f64(e.im),
            fmt_f64(e.mu)
        ));
    }
    out
}

/// `j,v_j,limit_j`; the limit column is empty when the limit is undefined.
pub fn covariance_vector_csv(cov: &StationaryCovariance, limit: Option<&[f64]>) -> String {
    let mut out = String::from("j,v_j,limit_j\n");
    for (j, v) in cov.v.iter().enumerate() {
        let lim = limit.map(|l| fmt_f64(l[j])).unwrap_or_default();
        out.push_str(&format!("{j},{},{lim}\n", fmt_f64(*v)));
    }
    out
}

/// Dense matrix, one row per line, no header.
pub fn matrix_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 8);
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<nalgebra::DMatrix<f64>> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| l.split(',').map(|s| parse_field(s, i + 1)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Syntax {
            line: i + 1,
            message: "ragged matrix row".into(),
        });
    }
    Ok(nalgebra::DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

/// Provenance record written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Canonical configuration text; feeding it back reproduces the outputs.
    pub config_text: String,
    pub seeds: Vec<u64>,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seeds: Vec<u64>, outputs: Vec<String>) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config: config.clone(),
            config_text: to_config_text(config),
            seeds,
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

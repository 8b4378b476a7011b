//! JSON configuration schemas and CSV export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{Result, SalError};
use crate::modal::averaged_masses_ambient;
use crate::selection::{pairwise_observables, ConeDiagnostics};
use crate::spectral::Spectrum;
use crate::stability::ThresholdCurve;

/// Interaction matrix in a config file: either a dense row-major matrix or
/// the eigenvalue shorthand `{"diag": [l_1, ..., l_d]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VSpec {
    Dense(Vec<Vec<f64>>),
    Diag(Vec<f64>),
}

impl VSpec {
    pub fn to_spectrum(&self) -> Result<Spectrum> {
        match self {
            VSpec::Dense(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(SalError::validation(
                        "dense interaction matrix must be square",
                    ));
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                Spectrum::decompose_symmetric(&m)
            }
            VSpec::Diag(lambdas) => Spectrum::from_eigenvalues(lambdas),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VSpec::Dense(rows) => rows.len(),
            VSpec::Diag(lambdas) => lambdas.len(),
        }
    }
}

/// Initial data of a simulation: inline states, a CSV file of states, or a
/// named sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Inline {
        states: Vec<Vec<f64>>,
    },
    File {
        states_file: PathBuf,
    },
    Sampled {
        sampler: crate::experiments::SamplerId,
        n: usize,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_t_end() -> f64 {
    10.0
}

fn default_dt() -> f64 {
    1e-2
}

fn default_record_every() -> usize {
    10
}

/// Config consumed by the `simulate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub v: VSpec,
    pub beta: f64,
    pub initial: InitialSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SimulateConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SalError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| SalError::validation(format!("malformed config {}: {e}", path.display())))
    }
}

/// Reads a plain CSV of particle rows (one comma-separated row per line).
pub fn read_states_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        SalError::validation(format!("cannot read states file {}: {e}", path.display()))
    })?;
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = trimmed
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect();
        rows.push(row.map_err(|e| {
            SalError::validation(format!(
                "bad number in {} line {}: {e}",
                path.display(),
                line_no + 1
            ))
        })?);
    }
    if rows.is_empty() {
        return Err(SalError::validation(format!(
            "states file {} is empty",
            path.display()
        )));
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                SalError::validation(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let file = File::create(path)
        .map_err(|e| SalError::validation(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn io_err(e: std::io::Error) -> SalError {
    SalError::validation(format!("write failed: {e}"))
}

/// Trajectory export: one line per particle per snapshot, columns
/// `t,i,x_1,...,x_d`.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let mut out = create(path)?;
    let d = record.configurations[0].d();
    write!(out, "t,i").map_err(io_err)?;
    for k in 1..=d {
        write!(out, ",x_{k}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for (idx, cfg) in record.configurations.iter().enumerate() {
        let t = record.times[idx];
        for i in 0..cfg.n() {
            write!(out, "{t},{i}").map_err(io_err)?;
            for k in 0..d {
                write!(out, ",{}", cfg.states()[(i, k)]).map_err(io_err)?;
            }
            writeln!(out).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Energy sidecar: columns `t,energy`.
pub fn write_energy_csv(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "t,energy").map_err(io_err)?;
    for (t, e) in record.times.iter().zip(&record.energies) {
        writeln!(out, "{t},{e}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Observable export: columns `t,rho_min,rho_max,rho_abs,m_1,...,m_d`.
///
/// Pairwise observables are NaN for a single particle.
pub fn write_observables_csv(
    path: &Path,
    record: &TrajectoryRecord,
    spectrum: &Spectrum,
) -> Result<()> {
    let mut out = create(path)?;
    let d = spectrum.dim();
    write!(out, "t,rho_min,rho_max,rho_abs").map_err(io_err)?;
    for k in 1..=d {
        write!(out, ",m_{k}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for (idx, cfg) in record.configurations.iter().enumerate() {
        let t = record.times[idx];
        let (rho_min, rho_max, rho_abs) = if cfg.n() >= 2 {
            pairwise_observables(cfg)?
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        write!(out, "{t},{rho_min},{rho_max},{rho_abs}").map_err(io_err)?;
        for m in averaged_masses_ambient(cfg, spectrum) {
            write!(out, ",{m}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Averaged modal masses in long format: columns `t,k,m_k` (modes 1-based).
pub fn write_masses_csv(path: &Path, record: &TrajectoryRecord, spectrum: &Spectrum) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "t,k,m_k").map_err(io_err)?;
    for (idx, cfg) in record.configurations.iter().enumerate() {
        let t = record.times[idx];
        for (k, m) in averaged_masses_ambient(cfg, spectrum).iter().enumerate() {
            writeln!(out, "{t},{},{m}", k + 1).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Cone diagnostics: columns `t,min_c1`, then `R_k` and `bound_k` per
/// transverse mode (modes 2-based, matching the dominant mode being 1).
pub fn write_cone_csv(path: &Path, diag: &ConeDiagnostics) -> Result<()> {
    let mut out = create(path)?;
    let transverse = diag.ratios.len();
    write!(out, "t,min_c1").map_err(io_err)?;
    for k in 0..transverse {
        write!(out, ",R_{}", k + 2).map_err(io_err)?;
    }
    for k in 0..transverse {
        write!(out, ",bound_{}", k + 2).map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for (idx, t) in diag.times.iter().enumerate() {
        write!(out, "{t},{}", diag.min_c1[idx]).map_err(io_err)?;
        for k in 0..transverse {
            write!(out, ",{}", diag.ratios[k][idx]).map_err(io_err)?;
        }
        for k in 0..transverse {
            write!(out, ",{}", diag.bounds[k][idx]).map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Threshold curve: columns `beta,sigma_bound,is_endpoint`.
pub fn write_threshold_csv(path: &Path, curve: &ThresholdCurve) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "beta,sigma_bound,is_endpoint").map_err(io_err)?;
    for point in &curve.points {
        writeln!(
            out,
            "{},{},{}",
            point.beta, point.sigma_bound, point.is_endpoint
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Writes a JSON manifest next to experiment outputs.
pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> Result<()> {
    let mut out = create(path)?;
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| SalError::validation(format!("manifest serialization failed: {e}")))?;
    out.write_all(text.as_bytes()).map_err(io_err)?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vspec_parses_both_shorthands() {
        let diag: VSpec = serde_json::from_str(r#"{"diag": [1.5, 0.5, -0.5]}"#).unwrap();
        let s = diag.to_spectrum().unwrap();
        assert_eq!(s.eigenvalues(), &[1.5, 0.5, -0.5]);

        let dense: VSpec = serde_json::from_str(r#"{"dense": [[0.0, 1.0], [1.0, 0.0]]}"#).unwrap();
        let s = dense.to_spectrum().unwrap();
        assert!((s.eigenvalues()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_dense_matrix_is_rejected() {
        let dense: VSpec = serde_json::from_str(r#"{"dense": [[0.0, 1.0], [0.5, 0.0]]}"#).unwrap();
        let err = dense.to_spectrum().unwrap_err();
        assert!(err.to_string().contains("symmetric"));
    }

    #[test]
    fn simulate_config_parses_inline_and_sampler_forms() {
        let inline = r#"{
            "v": {"diag": [1.0, 0.0]},
            "beta": 1.0,
            "initial": {"states": [[1.0, 0.0], [0.0, 1.0]]},
            "t_end": 2.0,
            "dt": 0.01
        }"#;
        let cfg: SimulateConfig = serde_json::from_str(inline).unwrap();
        assert!(matches!(cfg.initial, InitialSpec::Inline { .. }));
        assert_eq!(cfg.record_every, 10);

        let sampled = r#"{
            "v": {"diag": [1.5, 0.5, -0.5]},
            "beta": 1.0,
            "initial": {"sampler": "one-sided-cone", "n": 8, "delta": 0.1},
            "seed": 7
        }"#;
        let cfg: SimulateConfig = serde_json::from_str(sampled).unwrap();
        assert!(matches!(cfg.initial, InitialSpec::Sampled { .. }));
        assert_eq!(cfg.t_end, 10.0);
    }
}

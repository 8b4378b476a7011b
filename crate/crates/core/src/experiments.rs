//! Seeded Monte Carlo harness: initial-data samplers, ensemble runs over
//! one or several sharpness values, and CSV/manifest output.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, Configuration, TrajectoryRecord};
use crate::error::{Result, SalError};
use crate::io::{write_manifest, write_trajectory_csv, VSpec};
use crate::modal::averaged_masses_of;
use crate::rng::Rng;
use crate::selection::pairwise_observables;
use crate::spectral::Spectrum;

/// Initial-data samplers. All of them produce coefficient rows in the
/// eigenbasis of the interaction matrix; the harness maps them to ambient
/// states through the basis (for diagonal matrices the two coincide).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerId {
    /// Normalized standard normals: uniform on the sphere.
    UniformSphere,
    /// Uniform draws reflected into `c_1 >= 0` and rejected below `delta`.
    OneSidedCone,
    /// Uniform draws conditioned on both signs being present in mode 1.
    MixedSign,
    /// One uniform profile repeated for every particle.
    Consensus,
    /// One uniform profile with a balanced sign split (first half `+`).
    Bipolar,
}

impl std::fmt::Display for SamplerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SamplerId::UniformSphere => "uniform-sphere",
            SamplerId::OneSidedCone => "one-sided-cone",
            SamplerId::MixedSign => "mixed-sign",
            SamplerId::Consensus => "consensus",
            SamplerId::Bipolar => "bipolar",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for SamplerId {
    type Err = SalError;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "uniform-sphere" => Ok(SamplerId::UniformSphere),
            "one-sided-cone" => Ok(SamplerId::OneSidedCone),
            "mixed-sign" => Ok(SamplerId::MixedSign),
            "consensus" => Ok(SamplerId::Consensus),
            "bipolar" => Ok(SamplerId::Bipolar),
            other => Err(SalError::validation(format!(
                "unknown sampler id '{other}'"
            ))),
        }
    }
}

/// Draws an `n x d` matrix of unit coefficient rows from the given sampler,
/// reproducibly from the seed.
pub fn sample_initial(
    sampler: SamplerId,
    n: usize,
    d: usize,
    delta: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(SalError::validation("need n >= 1 and d >= 1"));
    }
    let mut rng = Rng::new(seed);
    let rows: Vec<Vec<f64>> = match sampler {
        SamplerId::UniformSphere => (0..n).map(|_| rng.unit_vector(d)).collect(),
        SamplerId::OneSidedCone => {
            if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
                return Err(SalError::validation(format!(
                    "cone sampler requires delta in (0, 1), got {delta}"
                )));
            }
            (0..n)
                .map(|_| loop {
                    let mut v = rng.unit_vector(d);
                    v[0] = v[0].abs();
                    if v[0] >= delta {
                        return v;
                    }
                })
                .collect()
        }
        SamplerId::MixedSign => {
            if n < 2 {
                return Err(SalError::validation(
                    "mixed-sign sampler needs at least two particles",
                ));
            }
            loop {
                let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(d)).collect();
                let has_neg = rows.iter().any(|r| r[0] < 0.0);
                let has_pos = rows.iter().any(|r| r[0] > 0.0);
                if has_neg && has_pos {
                    break rows;
                }
            }
        }
        SamplerId::Consensus => {
            let u = rng.unit_vector(d);
            vec![u; n]
        }
        SamplerId::Bipolar => {
            if !n.is_multiple_of(2) {
                return Err(SalError::validation(format!(
                    "bipolar sampler requires an even particle count, got {n}"
                )));
            }
            let u = rng.unit_vector(d);
            (0..n)
                .map(|i| {
                    if i < n / 2 {
                        u.clone()
                    } else {
                        u.iter().map(|x| -x).collect()
                    }
                })
                .collect()
        }
    };
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// Sharpness of an experiment: one value or a list sharing initial data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    One(f64),
    Many(Vec<f64>),
}

impl BetaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaSpec::One(b) => vec![*b],
            BetaSpec::Many(list) => list.clone(),
        }
    }
}

fn default_record_every() -> usize {
    10
}

/// Declarative description of an ensemble experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub beta: BetaSpec,
    pub v: VSpec,
    pub sampler: SamplerId,
    #[serde(default)]
    pub delta: Option<f64>,
    pub trials: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub save_trajectories: bool,
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SalError::validation(format!("cannot read spec {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| SalError::validation(format!("malformed spec {}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SalError::validation("trials must be at least 1"));
        }
        if self.n < 2 {
            return Err(SalError::validation(
                "ensemble experiments need at least two particles",
            ));
        }
        if self.v.dim() != self.d {
            return Err(SalError::validation(format!(
                "interaction matrix dimension {} does not match d = {}",
                self.v.dim(),
                self.d
            )));
        }
        Ok(())
    }
}

/// Observable values of one trial at the recorded times.
#[derive(Debug, Clone)]
pub struct TrialSeries {
    pub trial: usize,
    pub times: Vec<f64>,
    /// One row per time; columns as in [`observable_columns`].
    pub rows: Vec<Vec<f64>>,
}

/// Ensemble mean and standard deviation per time point and observable.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    pub trials: usize,
}

/// Result of one sharpness panel.
#[derive(Debug)]
pub struct PanelResult {
    pub beta: f64,
    pub series: Vec<TrialSeries>,
    pub summary: EnsembleSummary,
    /// Hash of the initial configurations; identical across the panels of
    /// one experiment because the trials reuse their initial data.
    pub initial_hash: u64,
    /// Trials whose integration aborted, with the reported reason.
    pub aborted: Vec<(usize, String)>,
}

/// Observable column names: pairwise correlations, modal masses, energy.
pub fn observable_columns(d: usize) -> Vec<String> {
    let mut cols = vec![
        "rho_min".to_string(),
        "rho_max".to_string(),
        "rho_abs".to_string(),
    ];
    for k in 1..=d {
        cols.push(format!("m_{k}"));
    }
    cols.push("energy".to_string());
    cols
}

fn observable_row(cfg: &Configuration, basis: &Spectrum, energy: f64) -> Result<Vec<f64>> {
    let (rho_min, rho_max, rho_abs) = pairwise_observables(cfg)?;
    let mut row = vec![rho_min, rho_max, rho_abs];
    row.extend(averaged_masses_of(&basis.modal_coordinates(cfg.states())));
    row.push(energy);
    Ok(row)
}

fn series_of_record(
    trial: usize,
    record: &TrajectoryRecord,
    spectrum: &Spectrum,
) -> Result<TrialSeries> {
    let mut rows = Vec::with_capacity(record.len());
    for (idx, cfg) in record.configurations.iter().enumerate() {
        rows.push(observable_row(cfg, spectrum, record.energies[idx])?);
    }
    Ok(TrialSeries {
        trial,
        times: record.times.clone(),
        rows,
    })
}

fn summarize(series: &[TrialSeries], columns: Vec<String>) -> EnsembleSummary {
    let times = series.first().map(|s| s.times.clone()).unwrap_or_default();
    let cols = columns.len();
    let mut means = vec![vec![0.0; cols]; times.len()];
    let mut stds = vec![vec![0.0; cols]; times.len()];
    let trials = series.len();
    if trials > 0 {
        for t_idx in 0..times.len() {
            for c in 0..cols {
                let mut sum = 0.0;
                for s in series {
                    sum += s.rows[t_idx][c];
                }
                let mean = sum / trials as f64;
                let mut var = 0.0;
                for s in series {
                    let gap = s.rows[t_idx][c] - mean;
                    var += gap * gap;
                }
                means[t_idx][c] = mean;
                stds[t_idx][c] = (var / trials as f64).sqrt();
            }
        }
    }
    EnsembleSummary {
        times,
        columns,
        means,
        stds,
        trials,
    }
}

/// FNV-1a hash of the raw state bytes; used for the shared-initial-data
/// contract across sharpness panels.
fn hash_states(states: &[DMatrix<f64>]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for m in states {
        for &x in m.iter() {
            for byte in x.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
    }
    hash
}

type TrialOutcome = (
    usize,
    std::result::Result<(TrialSeries, TrajectoryRecord), String>,
);

/// Runs the experiment: samples per-trial initial data once, integrates it
/// under every sharpness value, and (optionally) writes CSV outputs plus a
/// manifest into `out_dir`.
///
/// Deterministic for a fixed spec: trial `i` draws from the substream
/// seeded with `seed + i`, trials run in parallel but outputs are ordered
/// by trial index.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Vec<PanelResult>> {
    spec.validate()?;
    let spectrum = spec.v.to_spectrum()?;
    let delta = spec.delta.unwrap_or(0.1);

    let initials: Vec<DMatrix<f64>> = (0..spec.trials)
        .map(|trial| {
            sample_initial(
                spec.sampler,
                spec.n,
                spec.d,
                delta,
                spec.seed.wrapping_add(trial as u64),
            )
            .map(|coeffs| spectrum.ambient_states(&coeffs))
        })
        .collect::<Result<_>>()?;
    let initial_hash = hash_states(&initials);

    let mut panels = Vec::new();
    for &beta in &spec.beta.values() {
        let outcomes: Vec<TrialOutcome> = initials
            .par_iter()
            .enumerate()
            .map(|(trial, states)| {
                let run = (|| -> Result<(TrialSeries, TrajectoryRecord)> {
                    let cfg = Configuration::new(states.clone(), beta)?;
                    let record =
                        integrate(&cfg, &spectrum, spec.t_end, spec.dt, spec.record_every)?;
                    let series = series_of_record(trial, &record, &spectrum)?;
                    Ok((series, record))
                })();
                (trial, run.map_err(|e| e.to_string()))
            })
            .collect();

        let mut series = Vec::with_capacity(spec.trials);
        let mut aborted = Vec::new();
        let mut records = Vec::new();
        for (trial, outcome) in outcomes {
            match outcome {
                Ok((s, record)) => {
                    series.push(s);
                    records.push((trial, record));
                }
                Err(reason) => aborted.push((trial, reason)),
            }
        }
        let summary = summarize(&series, observable_columns(spec.d));

        if let Some(dir) = out_dir {
            write_panel(dir, spec, beta, &series, &summary, &records)?;
        }
        panels.push(PanelResult {
            beta,
            series,
            summary,
            initial_hash,
            aborted,
        });
    }

    if let Some(dir) = out_dir {
        let spec_text = serde_json::to_string(spec)
            .map_err(|e| SalError::validation(format!("spec serialization failed: {e}")))?;
        let manifest = serde_json::json!({
            "name": spec.name,
            "seed": spec.seed,
            "code_version": env!("CARGO_PKG_VERSION"),
            "spec_hash": format!("{:016x}", fnv1a(spec_text.as_bytes())),
            "initial_hash": format!("{initial_hash:016x}"),
            "beta_panels": spec.beta.values(),
            "aborted_trials": panels.iter().map(|p| p.aborted.len()).sum::<usize>(),
        });
        write_manifest(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(panels)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Compact text for a sharpness value usable in file names.
fn beta_tag(beta: f64) -> String {
    format!("{beta}").replace('.', "p").replace('-', "m")
}

fn write_panel(
    dir: &Path,
    spec: &ExperimentSpec,
    beta: f64,
    series: &[TrialSeries],
    summary: &EnsembleSummary,
    records: &[(usize, TrajectoryRecord)],
) -> Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)
        .map_err(|e| SalError::validation(format!("cannot create {}: {e}", dir.display())))?;
    let tag = beta_tag(beta);
    let columns = observable_columns(spec.d);

    let obs_path = dir.join(format!("observables_beta{tag}.csv"));
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(&obs_path).map_err(|e| {
            SalError::validation(format!("cannot create {}: {e}", obs_path.display()))
        })?);
    let err = |e: std::io::Error| SalError::validation(format!("write failed: {e}"));
    write!(out, "trial,t").map_err(err)?;
    for c in &columns {
        write!(out, ",{c}").map_err(err)?;
    }
    writeln!(out).map_err(err)?;
    for s in series {
        for (t_idx, t) in s.times.iter().enumerate() {
            write!(out, "{},{t}", s.trial).map_err(err)?;
            for v in &s.rows[t_idx] {
                write!(out, ",{v}").map_err(err)?;
            }
            writeln!(out).map_err(err)?;
        }
    }
    out.flush().map_err(err)?;

    let sum_path = dir.join(format!("summary_beta{tag}.csv"));
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(&sum_path).map_err(|e| {
            SalError::validation(format!("cannot create {}: {e}", sum_path.display()))
        })?);
    write!(out, "t").map_err(err)?;
    for c in &columns {
        write!(out, ",{c}_mean,{c}_std").map_err(err)?;
    }
    writeln!(out).map_err(err)?;
    for (t_idx, t) in summary.times.iter().enumerate() {
        write!(out, "{t}").map_err(err)?;
        for c in 0..columns.len() {
            write!(
                out,
                ",{},{}",
                summary.means[t_idx][c], summary.stds[t_idx][c]
            )
            .map_err(err)?;
        }
        writeln!(out).map_err(err)?;
    }
    out.flush().map_err(err)?;

    if spec.save_trajectories {
        for (trial, record) in records {
            write_trajectory_csv(
                &dir.join(format!("trajectory_trial{trial}_beta{tag}.csv")),
                record,
            )?;
        }
    }
    Ok(())
}

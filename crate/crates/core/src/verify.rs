//! Named verification suites behind the `verify` command. Each suite runs
//! a desk-scale randomized check of one analytical statement and returns
//! machine-readable results; the acceptance tests drive the same code at
//! their stated parameters.

use nalgebra::DVector;

use crate::dynamics::{integrate, Configuration};
use crate::error::Result;
use crate::experiments::{sample_initial, SamplerId};
use crate::modal::averaged_masses_ambient;
use crate::reduced::{bipolar_limit, consensus_closed_form, integrate_bipolar, SUPPORT_TOL};
use crate::rng::Rng;
use crate::selection::{cone_check, rho_derivative_explicit};
use crate::spectral::Spectrum;
use crate::stability::{
    equilibrium_spectrum, jacobian_oracle, pure_mode_configuration, spectra_match_error,
    SignPattern,
};

/// Outcome of one named check inside a suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Full-system consensus runs against the closed-form masses: relative
/// agreement on the support and energy ascent along the way.
pub fn consensus_closed_form_suite(
    trials: usize,
    seed: u64,
    t_end: f64,
    dt: f64,
) -> Result<Vec<Check>> {
    let mut rng = Rng::new(seed);
    let mut worst_rel = 0.0f64;
    let mut worst_energy_drop = 0.0f64;
    for _ in 0..trials {
        let d = 2 + (rng.next_u64() % 7) as usize; // up to 8
        let lambdas: Vec<f64> = (0..d).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let s = Spectrum::from_eigenvalues(&lambdas)?;
        let u = rng.unit_vector(d);
        let p0: Vec<f64> = u.iter().map(|c| c * c).collect();
        let beta = 0.5 + 1.5 * rng.uniform();
        let cfg = Configuration::from_rows(&vec![u; 4], beta)?;
        let record = integrate(&cfg, &s, t_end, dt, 50)?;
        for (idx, &t) in record.times.iter().enumerate() {
            let exact = consensus_closed_form(&p0, &lambdas, t)?;
            let sim = averaged_masses_ambient(&record.configurations[idx], &s);
            for k in 0..d {
                if p0[k] > SUPPORT_TOL {
                    worst_rel = worst_rel.max((sim[k] - exact[k]).abs() / exact[k]);
                }
            }
        }
        for pair in record.energies.windows(2) {
            worst_energy_drop = worst_energy_drop.max(pair[0] - pair[1]);
        }
    }
    Ok(vec![
        Check::new(
            "consensus_masses_match_closed_form",
            worst_rel < 1e-6,
            format!("max relative error {worst_rel:.3e} (tolerance 1e-6)"),
        ),
        Check::new(
            "energy_nondecreasing",
            worst_energy_drop < 1e-9,
            format!("max per-step energy drop {worst_energy_drop:.3e} (tolerance 1e-9)"),
        ),
    ])
}

/// Balanced bipolar runs: full system versus the reduced replicator,
/// monotone sign-preserving weighted average, and the predicted limits.
pub fn bipolar_suite(trials: usize, seed: u64, t_end: f64, dt: f64) -> Result<Vec<Check>> {
    let mut rng = Rng::new(seed);
    let mut worst_gap = 0.0f64;
    let mut worst_m_violation = 0.0f64;
    let mut sign_preserved = true;
    let mut worst_limit_gap = 0.0f64;
    for trial in 0..trials {
        // Alternate between a negative-definite spectrum (n = 2 and 4) and
        // a mixed-sign spectrum on two particles.
        let (lambdas, n): (Vec<f64>, usize) = match trial % 3 {
            0 => (vec![-0.5, -1.5, -2.5], 2),
            1 => (vec![-0.5, -1.5, -2.5], 4),
            _ => (vec![2.0, 1.0, -1.0], 2),
        };
        let s = Spectrum::from_eigenvalues(&lambdas)?;
        let beta = 0.5 + 1.0 * rng.uniform();
        let u = rng.unit_vector(3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let sign = if i < n / 2 { 1.0 } else { -1.0 };
                u.iter().map(|x| sign * x).collect()
            })
            .collect();
        let cfg = Configuration::from_rows(&rows, beta)?;
        let p0: Vec<f64> = u.iter().map(|c| c * c).collect();
        let m0: f64 = p0.iter().zip(&lambdas).map(|(p, l)| p * l).sum();

        let record = integrate(&cfg, &s, t_end, dt, 100)?;
        let reduced = integrate_bipolar(&p0, &lambdas, beta, t_end, dt)?;
        let mut previous_m = if m0 >= 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        for (idx, &t) in record.times.iter().enumerate() {
            let sim = averaged_masses_ambient(&record.configurations[idx], &s);
            let step = (t / dt).round() as usize;
            for (a, b) in sim.iter().zip(&reduced[step].1) {
                worst_gap = worst_gap.max((a - b).abs());
            }
            let m: f64 = sim.iter().zip(&lambdas).map(|(p, l)| p * l).sum();
            if m0 > 0.0 {
                worst_m_violation = worst_m_violation.max(previous_m - m);
                sign_preserved &= m > 0.0;
            } else if m0 < 0.0 {
                worst_m_violation = worst_m_violation.max(m - previous_m);
                sign_preserved &= m < 0.0;
            }
            previous_m = m;
        }

        let predicted = bipolar_limit(&p0, &lambdas, beta)?;
        let terminal = averaged_masses_ambient(record.last(), &s);
        for (a, b) in terminal.iter().zip(&predicted.p_infinity) {
            worst_limit_gap = worst_limit_gap.max((a - b).abs());
        }
    }
    Ok(vec![
        Check::new(
            "full_system_matches_reduced_masses",
            worst_gap < 1e-6,
            format!("max mass gap {worst_gap:.3e} (tolerance 1e-6)"),
        ),
        Check::new(
            "weighted_average_monotone",
            worst_m_violation < 1e-10,
            format!("max monotonicity violation {worst_m_violation:.3e} (tolerance 1e-10)"),
        ),
        Check::new(
            "weighted_average_sign_preserved",
            sign_preserved,
            "sign of M constant along every run",
        ),
        Check::new(
            "limits_match_prediction",
            worst_limit_gap < 1e-4,
            format!("max terminal gap {worst_limit_gap:.3e} (tolerance 1e-4)"),
        ),
    ])
}

/// Cone invariance on seeded one-sided ensembles in a positive-dominant
/// spectrum: minimum first coordinate nondecreasing, ratio bounds, and the
/// terminal distance to the dominant mode.
///
/// With `out_dir` set, the per-trial diagnostics are exported as
/// `cone_trial<i>.csv`.
#[allow(clippy::too_many_arguments)]
pub fn cone_suite(
    n: usize,
    beta: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    lambdas: &[f64],
    t_end: f64,
    dt: f64,
    out_dir: Option<&std::path::Path>,
) -> Result<Vec<Check>> {
    let s = Spectrum::from_eigenvalues(lambdas)?;
    let mut all_monotone = true;
    let mut all_bounded = true;
    let mut worst_distance = 0.0f64;
    let mut worst_energy_drop = 0.0f64;
    for trial in 0..trials {
        let coeffs = sample_initial(
            SamplerId::OneSidedCone,
            n,
            lambdas.len(),
            delta,
            seed.wrapping_add(trial as u64),
        )?;
        let cfg = Configuration::new(s.ambient_states(&coeffs), beta)?;
        let record = integrate(&cfg, &s, t_end, dt, 20)?;
        let diag = cone_check(&record, &s, delta)?;
        if let Some(dir) = out_dir {
            crate::io::write_cone_csv(&dir.join(format!("cone_trial{trial}.csv")), &diag)?;
        }
        all_monotone &= diag.min_c1_nondecreasing;
        all_bounded &= diag.ratios_within_bounds;
        worst_distance = worst_distance.max(diag.final_max_distance);
        for pair in record.energies.windows(2) {
            worst_energy_drop = worst_energy_drop.max(pair[0] - pair[1]);
        }
    }
    Ok(vec![
        Check::new(
            "min_c1_nondecreasing",
            all_monotone,
            format!("{trials} trials, tolerance 1e-9"),
        ),
        Check::new(
            "transverse_ratios_within_bounds",
            all_bounded,
            format!("{trials} trials, tolerance 1e-9"),
        ),
        Check::new(
            "terminal_cluster_at_dominant_mode",
            worst_distance < 1e-2,
            format!("max final distance {worst_distance:.3e} (tolerance 1e-2)"),
        ),
        Check::new(
            "energy_nondecreasing",
            worst_energy_drop < 1e-9,
            format!("max per-step energy drop {worst_energy_drop:.3e}"),
        ),
    ])
}

/// Strict decrease of the two-particle correlation in the negative-definite
/// regime: the closed-form derivative against the flow, and its sign.
pub fn rho_monotone_suite(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = Rng::new(seed);
    let mut worst_gap = 0.0f64;
    let mut all_negative = true;
    let mut done = 0usize;
    while done < trials {
        let d = 2 + (rng.next_u64() % 4) as usize;
        let lambdas: Vec<f64> = (0..d).map(|_| -0.1 - 2.4 * rng.uniform()).collect();
        let s = Spectrum::from_eigenvalues(&lambdas)?;
        let beta = 0.1 + 4.9 * rng.uniform();
        let x1 = DVector::from_vec(rng.unit_vector(d));
        let x2 = DVector::from_vec(rng.unit_vector(d));
        if x1.dot(&x2).abs() >= 1.0 - 1e-6 {
            continue;
        }
        let out = rho_derivative_explicit(&x1, &x2, &s, beta)?;
        worst_gap = worst_gap.max((out.rho_dot - out.rho_dot_dynamics).abs());
        all_negative &= out.rho_dot < 0.0;
        done += 1;
    }
    Ok(vec![
        Check::new(
            "explicit_derivative_matches_flow",
            worst_gap < 1e-10,
            format!("max gap {worst_gap:.3e} over {trials} pairs (tolerance 1e-10)"),
        ),
        Check::new(
            "derivative_strictly_negative",
            all_negative,
            format!("{trials} interior pairs"),
        ),
    ])
}

/// Analytic linearization spectra against the finite-difference Jacobian.
pub fn spectrum_oracle_suite(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let d = 2 + (trial % 4); // up to 5
        let n = 2 + (rng.next_u64() % 7) as usize; // up to 8
        let lambdas: Vec<f64> = (0..d).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let beta = 0.2 + 2.0 * rng.uniform();
        let p = (rng.next_u64() % d as u64) as usize;
        let signs: Vec<i8> = (0..n)
            .map(|_| if rng.uniform() < 0.5 { 1 } else { -1 })
            .collect();
        let pattern = SignPattern::new(signs)?;
        let s = Spectrum::from_eigenvalues(&lambdas)?;
        let cfg = pure_mode_configuration(&s, p, &pattern, beta)?;
        let oracle = jacobian_oracle(&cfg, &s, 1e-5)?;
        let analytic = equilibrium_spectrum(p, &lambdas, beta, &pattern)?;
        let err = spectra_match_error(&oracle, &analytic)
            .expect("oracle and analytic spectra have equal size");
        worst = worst.max(err);
    }
    Ok(vec![Check::new(
        "analytic_spectrum_matches_jacobian_oracle",
        worst < 1e-5,
        format!("max multiset deviation {worst:.3e} over {trials} instances (tolerance 1e-5)"),
    )])
}

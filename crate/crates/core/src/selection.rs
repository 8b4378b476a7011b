//! Diagnostics for the global selection results: the forward-invariant cone
//! with its transverse ratio decay, and the two-particle anti-alignment
//! certificate in the negative-definite regime.

use nalgebra::DVector;

use crate::dynamics::{vector_field, Configuration, TrajectoryRecord};
use crate::error::{Result, SalError};
use crate::spectral::Spectrum;

/// Slack allowed on the cone monotonicity and ratio bounds.
pub const CONE_TOL: f64 = 1e-9;
/// Eigenvalues must be below this to count as negative definite.
pub const NEGATIVE_DEFINITE_TOL: f64 = -1e-12;

/// Time series attached to a cone-invariance check.
#[derive(Debug, Clone)]
pub struct ConeDiagnostics {
    pub delta: f64,
    pub times: Vec<f64>,
    /// `min_i c_{i,1}(t)` at the recorded times.
    pub min_c1: Vec<f64>,
    /// Per transverse mode `k >= 2`: `R_k(t) = max_i |c_{i,k} / c_{i,1}|`.
    pub ratios: Vec<Vec<f64>>,
    /// Per transverse mode: the decay bound `R_k(0) e^{-delta (l1 - |l_k|) t}`.
    pub bounds: Vec<Vec<f64>>,
    /// Final distance `max_i |x_i - e_1|`.
    pub final_max_distance: f64,
    pub min_c1_nondecreasing: bool,
    pub ratios_within_bounds: bool,
    pub pass: bool,
}

/// Verifies the forward-invariant cone along a recorded trajectory.
///
/// Requires the dominant-mode condition `lambda_1 > max_{k >= 2} |lambda_k|`
/// (mode 1 is the first stored eigenvalue) and the initial cone condition
/// `c_{i,1}(0) >= delta`. Checks that `min_i c_{i,1}` never decreases and
/// that every transverse ratio stays below its exponential bound, both up
/// to [`CONE_TOL`].
pub fn cone_check(
    trajectory: &TrajectoryRecord,
    s: &Spectrum,
    delta: f64,
) -> Result<ConeDiagnostics> {
    if trajectory.is_empty() {
        return Err(SalError::validation("trajectory record is empty"));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(SalError::validation(format!(
            "cone parameter delta must be positive, got {delta}"
        )));
    }
    let lambdas = s.eigenvalues();
    let lambda_1 = lambdas[0];
    for (k, &lk) in lambdas.iter().enumerate().skip(1) {
        if lambda_1 <= lk.abs() {
            return Err(SalError::validation(format!(
                "dominant-mode condition violated: lambda_1 = {lambda_1} \
                 but |lambda_{}| = {}",
                k + 1,
                lk.abs()
            )));
        }
    }

    let d = s.dim();
    let n = trajectory.configurations[0].n();
    let coords0 = s.modal_coordinates(trajectory.configurations[0].states());
    for i in 0..n {
        if coords0[(i, 0)] < delta {
            return Err(SalError::validation(format!(
                "initial cone condition violated: c_{{{i},1}}(0) = {} < delta = {delta}",
                coords0[(i, 0)]
            )));
        }
    }

    let transverse = d - 1;
    let mut min_c1 = Vec::with_capacity(trajectory.len());
    let mut ratios = vec![Vec::with_capacity(trajectory.len()); transverse];
    let mut bounds = vec![Vec::with_capacity(trajectory.len()); transverse];
    let mut initial_ratios = vec![0.0; transverse];

    for (idx, cfg) in trajectory.configurations.iter().enumerate() {
        let t = trajectory.times[idx];
        let coords = s.modal_coordinates(cfg.states());
        let mut minimum = f64::INFINITY;
        for i in 0..n {
            minimum = minimum.min(coords[(i, 0)]);
        }
        min_c1.push(minimum);
        for (slot, k) in (1..d).enumerate() {
            let mut worst = 0.0f64;
            for i in 0..n {
                worst = worst.max((coords[(i, k)] / coords[(i, 0)]).abs());
            }
            if idx == 0 {
                initial_ratios[slot] = worst;
            }
            ratios[slot].push(worst);
            bounds[slot]
                .push(initial_ratios[slot] * (-delta * (lambda_1 - lambdas[k].abs()) * t).exp());
        }
    }

    let min_c1_nondecreasing = min_c1.windows(2).all(|w| w[1] >= w[0] - CONE_TOL);
    let ratios_within_bounds = (0..transverse).all(|slot| {
        ratios[slot]
            .iter()
            .zip(&bounds[slot])
            .all(|(r, b)| *r <= b + CONE_TOL)
    });

    let last = trajectory.last();
    let mut final_max_distance = 0.0f64;
    for i in 0..n {
        let mut dist2 = 0.0;
        for k in 0..d {
            let gap = last.states()[(i, k)] - s.basis()[(k, 0)];
            dist2 += gap * gap;
        }
        final_max_distance = final_max_distance.max(dist2.sqrt());
    }

    Ok(ConeDiagnostics {
        delta,
        times: trajectory.times.clone(),
        min_c1,
        ratios,
        bounds,
        final_max_distance,
        min_c1_nondecreasing,
        ratios_within_bounds,
        pass: min_c1_nondecreasing && ratios_within_bounds,
    })
}

/// Closed-form derivative of the two-particle correlation, with all
/// intermediate quantities and the independently computed dynamics value.
#[derive(Debug, Clone, Copy)]
pub struct TwoParticleDerivative {
    /// Correlation `rho = <x_1, x_2>`.
    pub rho: f64,
    /// Quadratic form `<s, B s>` of the sum `s = x_1 + x_2`, `B = -V`.
    pub a: f64,
    /// Cross form `<s, B d>` with the difference `d = x_1 - x_2`.
    pub c: f64,
    /// Quadratic form `<d, B d>`.
    pub d: f64,
    /// Schur complement `A - C^2 / D`, nonnegative by Cauchy-Schwarz.
    pub e: f64,
    /// Softmax gap of particle 1: `w_11 - w_12 = -tanh(beta (C + D) / 4)`.
    pub eta_x: f64,
    /// Softmax gap of particle 2: `w_21 - w_22 = tanh(beta (D - C) / 4)`.
    pub eta_y: f64,
    /// The closed-form value of `d rho / dt`.
    pub rho_dot: f64,
    /// `<dx_1/dt, x_2> + <x_1, dx_2/dt>` from the flow field.
    pub rho_dot_dynamics: f64,
    /// Set when `|rho| = 1` (aligned or antipodal), where the monotone
    /// regime ends and the derivative is reported as zero.
    pub boundary: bool,
}

/// Certificate term `Xi_r(t) = t^2 (cosh r + cosh t) - r t sinh t`.
pub fn xi_certificate(r: f64, t: f64) -> Result<f64> {
    if r.is_nan() || r <= 0.0 {
        return Err(SalError::validation(format!(
            "certificate parameter r must be positive, got {r}"
        )));
    }
    Ok(t * t * (r.cosh() + t.cosh()) - r * t * t.sinh())
}

/// Evaluates the closed-form `d rho / dt` of the negative-definite
/// two-particle system and cross-checks it against the flow field.
pub fn rho_derivative_explicit(
    x1: &DVector<f64>,
    x2: &DVector<f64>,
    s: &Spectrum,
    beta: f64,
) -> Result<TwoParticleDerivative> {
    if x1.len() != s.dim() || x2.len() != s.dim() {
        return Err(SalError::validation("particle dimension mismatch"));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(SalError::validation(format!(
            "sharpness beta must be positive, got {beta}"
        )));
    }
    for (k, &lambda) in s.eigenvalues().iter().enumerate() {
        if lambda >= NEGATIVE_DEFINITE_TOL {
            return Err(SalError::validation(format!(
                "interaction matrix must be negative definite: lambda_{} = {lambda}",
                k + 1
            )));
        }
    }
    for (name, x) in [("x1", x1), ("x2", x2)] {
        let norm = x.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SalError::validation(format!(
                "{name} must be a unit vector, |{name}| = {norm}"
            )));
        }
    }

    let rho = x1.dot(x2);
    let cfg = Configuration::new(
        nalgebra::DMatrix::from_fn(2, s.dim(), |i, k| if i == 0 { x1[k] } else { x2[k] }),
        beta,
    )?;
    let field = vector_field(&cfg, s)?;
    let rho_dot_dynamics = field.row(0).transpose().dot(x2) + x1.dot(&field.row(1).transpose());

    if rho.abs() >= 1.0 - 1e-12 {
        // Aligned or antipodal pair: the difference or sum degenerates and
        // the formula's r > 0 branch does not apply.
        return Ok(TwoParticleDerivative {
            rho,
            a: f64::NAN,
            c: f64::NAN,
            d: f64::NAN,
            e: f64::NAN,
            eta_x: f64::NAN,
            eta_y: f64::NAN,
            rho_dot: 0.0,
            rho_dot_dynamics,
            boundary: true,
        });
    }

    // Quadratic forms of B = -V in the eigenbasis: <v, B v> = sum (-l_k) c_k^2.
    let cs = s.to_modal(&x1.clone())?;
    let cd = s.to_modal(&x2.clone())?;
    let sum_coeff = &cs + &cd;
    let diff_coeff = &cs - &cd;
    let mut a = 0.0;
    let mut c = 0.0;
    let mut d = 0.0;
    for (k, &lambda) in s.eigenvalues().iter().enumerate() {
        let b_k = -lambda;
        a += b_k * sum_coeff[k] * sum_coeff[k];
        c += b_k * sum_coeff[k] * diff_coeff[k];
        d += b_k * diff_coeff[k] * diff_coeff[k];
    }
    if d < 1e-14 {
        return Err(SalError::numeric(format!(
            "difference quadratic form degenerate for distinct particles: D = {d}"
        )));
    }
    let e = (a - c * c / d).max(0.0);

    let r = beta * d / 2.0;
    let t = beta * c / 2.0;
    let cosh_sum = r.cosh() + t.cosh();
    let xi = xi_certificate(r, t)?;
    let numerator = (1.0 - rho) * beta * r * e * cosh_sum
        + 2.0 * (1.0 + rho) * r * r * r.sinh()
        + 2.0 * (1.0 - rho) * xi;
    let rho_dot = -numerator / (2.0 * beta * r * cosh_sum);

    Ok(TwoParticleDerivative {
        rho,
        a,
        c,
        d,
        e,
        eta_x: -(beta * (c + d) / 4.0).tanh(),
        eta_y: (beta * (d - c) / 4.0).tanh(),
        rho_dot,
        rho_dot_dynamics,
        boundary: false,
    })
}

/// Outcome classification of a two-particle negative-definite run.
#[derive(Debug, Clone, PartialEq)]
pub enum TwoParticleStatus {
    /// Generic case: heading to `(sigma e_d, -sigma e_d)`.
    Converged { sigma: f64 },
    /// Initial data on the diagonal `x_1 = x_2`, excluded from the
    /// selection statement.
    DiagonalExcluded,
    /// Stationary at a sign-split equilibrium of a higher mode (an
    /// unstable exceptional state).
    ExceptionalEquilibrium { mode: usize },
}

/// Report of [`two_particle_limit_check`].
#[derive(Debug, Clone)]
pub struct TwoParticleReport {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub m_d: Vec<f64>,
    pub status: TwoParticleStatus,
    pub terminal_rho: f64,
    pub terminal_m_d: f64,
    /// Strict decrease of `rho` at the recorded times (tolerance 1e-10);
    /// only asserted for the generic case.
    pub rho_monotone: bool,
}

/// Checks a recorded two-particle trajectory against the negative-definite
/// selection picture: `rho` decreasing toward -1 and the averaged mass of
/// the last mode toward 1.
pub fn two_particle_limit_check(
    trajectory: &TrajectoryRecord,
    s: &Spectrum,
) -> Result<TwoParticleReport> {
    if trajectory.is_empty() {
        return Err(SalError::validation("trajectory record is empty"));
    }
    let first = &trajectory.configurations[0];
    if first.n() != 2 {
        return Err(SalError::validation(format!(
            "two-particle check requires n = 2, got n = {}",
            first.n()
        )));
    }
    let lambdas = s.eigenvalues();
    let d = s.dim();
    for (k, &lambda) in lambdas.iter().enumerate() {
        if lambda >= NEGATIVE_DEFINITE_TOL {
            return Err(SalError::validation(format!(
                "interaction matrix must be negative definite: lambda_{} = {lambda}",
                k + 1
            )));
        }
    }
    let gap = lambdas[d - 2] - lambdas[d - 1];
    if gap <= 1e-10 {
        return Err(SalError::validation(format!(
            "smallest eigenvalue must be simple: gap = {gap}"
        )));
    }

    let series: Vec<(f64, f64)> = trajectory
        .configurations
        .iter()
        .map(|cfg| {
            let rho = cfg.states().row(0).dot(&cfg.states().row(1));
            let coords = s.modal_coordinates(cfg.states());
            let m_d = 0.5 * (coords[(0, d - 1)].powi(2) + coords[(1, d - 1)].powi(2));
            (rho, m_d)
        })
        .collect();
    let rho: Vec<f64> = series.iter().map(|&(r, _)| r).collect();
    let m_d: Vec<f64> = series.iter().map(|&(_, m)| m).collect();

    let status = if rho[0] >= 1.0 - 1e-12 {
        TwoParticleStatus::DiagonalExcluded
    } else if rho[0] <= -1.0 + 1e-12 {
        // Already on the sign-split manifold; a pure higher mode stays put.
        let coords = s.modal_coordinates(first.states());
        let mut lead = 0;
        for k in 0..d {
            if coords[(0, k)].abs() > coords[(0, lead)].abs() {
                lead = k;
            }
        }
        if lead < d - 1 && coords[(0, lead)].abs() > 1.0 - 1e-9 {
            TwoParticleStatus::ExceptionalEquilibrium { mode: lead }
        } else {
            let last = trajectory.last();
            let sigma = s.modal_coordinates(last.states())[(0, d - 1)].signum();
            TwoParticleStatus::Converged { sigma }
        }
    } else {
        let last = trajectory.last();
        let sigma = s.modal_coordinates(last.states())[(0, d - 1)].signum();
        TwoParticleStatus::Converged { sigma }
    };

    let rho_monotone = rho.windows(2).all(|w| w[1] <= w[0] + 1e-10);

    Ok(TwoParticleReport {
        times: trajectory.times.clone(),
        terminal_rho: *rho.last().unwrap(),
        terminal_m_d: *m_d.last().unwrap(),
        rho,
        m_d,
        status,
        rho_monotone,
    })
}

/// Pairwise correlation observables `(rho_min, rho_max, rho_abs)` over all
/// unordered particle pairs.
pub fn pairwise_observables(cfg: &Configuration) -> Result<(f64, f64, f64)> {
    let n = cfg.n();
    if n < 2 {
        return Err(SalError::validation(format!(
            "pairwise observables require n >= 2, got n = {n}"
        )));
    }
    let gram = cfg.states() * cfg.states().transpose();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut abs_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let rho = gram[(i, j)].clamp(-1.0, 1.0);
            min = min.min(rho);
            max = max.max(rho);
            abs_sum += rho.abs();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((min, max, abs_sum / pairs))
}

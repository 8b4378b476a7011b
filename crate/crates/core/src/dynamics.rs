//! The self-attention particle flow on `(S^{d-1})^n`: attention weights,
//! vector field, interaction energy, and a fixed-step integrator.

use nalgebra::DMatrix;

use crate::error::{Result, SalError};
use crate::spectral::Spectrum;

/// Row norms of a valid configuration may deviate from 1 by at most this.
pub const ROW_NORM_TOL: f64 = 1e-9;

/// `n` particles on the unit sphere in `R^d` plus the attention sharpness.
///
/// Rows of `states` are the particles `x_i`. The sharpness `beta` absorbs
/// the conventional `1/sqrt(d)` score scaling; `beta = 0` is admitted and
/// yields uniform attention weights.
#[derive(Debug, Clone)]
pub struct Configuration {
    states: DMatrix<f64>,
    beta: f64,
}

impl Configuration {
    pub fn new(states: DMatrix<f64>, beta: f64) -> Result<Self> {
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(SalError::validation("configuration must be non-empty"));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(SalError::validation(format!(
                "sharpness beta must be finite and nonnegative, got {beta}"
            )));
        }
        for i in 0..states.nrows() {
            let norm = states.row(i).norm();
            if !norm.is_finite() || (norm - 1.0).abs() > ROW_NORM_TOL {
                return Err(SalError::validation(format!(
                    "particle {i} must lie on the unit sphere, |x_{i}| = {norm}"
                )));
            }
        }
        Ok(Configuration { states, beta })
    }

    /// Builds a configuration from rows given as slices, normalizing none.
    pub fn from_rows(rows: &[Vec<f64>], beta: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(SalError::validation("configuration must be non-empty"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(SalError::validation(
                "all particle rows must have the same dimension",
            ));
        }
        let states = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Configuration::new(states, beta)
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn d(&self) -> usize {
        self.states.ncols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.states.row(i).iter().copied().collect()
    }
}

/// Row-stochastic attention matrix together with the log normalizers.
///
/// `row_log_norms[i]` stores `log Z_{beta,i}`, the log of the softmax
/// denominator of row `i`, recovered exactly from the max-subtracted sum.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub weights: DMatrix<f64>,
    pub row_log_norms: Vec<f64>,
}

/// Attention scores `beta * <x_i, V x_j>` for every ordered pair.
fn score_matrix(cfg: &Configuration, s: &Spectrum) -> DMatrix<f64> {
    let vx = cfg.states() * s.matrix(); // row j holds (V x_j)^T
    let mut scores = cfg.states() * vx.transpose();
    scores *= cfg.beta();
    scores
}

/// Softmax attention weights `K_ij = exp(beta <x_i, V x_j>) / Z_{beta,i}`,
/// computed with per-row max subtraction.
pub fn attention_weights(cfg: &Configuration, s: &Spectrum) -> Result<AttentionWeights> {
    check_dims(cfg, s)?;
    let mut scores = score_matrix(cfg, s);
    let n = cfg.n();
    let mut row_log_norms = Vec::with_capacity(n);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            let sc = scores[(i, j)];
            if !sc.is_finite() {
                return Err(SalError::numeric(format!(
                    "non-finite attention score at (i, j) = ({i}, {j}): {sc}"
                )));
            }
            if sc > max {
                max = sc;
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            let w = (scores[(i, j)] - max).exp();
            scores[(i, j)] = w;
            sum += w;
        }
        for j in 0..n {
            scores[(i, j)] /= sum;
        }
        row_log_norms.push(max + sum.ln());
    }
    Ok(AttentionWeights {
        weights: scores,
        row_log_norms,
    })
}

/// Tangent velocities of the flow: row `i` is
/// `v_i = sum_j K_ij V x_j - phi_i x_i` with `phi_i = <x_i, sum_j K_ij V x_j>`.
pub fn vector_field(cfg: &Configuration, s: &Spectrum) -> Result<DMatrix<f64>> {
    let weights = attention_weights(cfg, s)?;
    Ok(vector_field_with_weights(cfg, s, &weights.weights))
}

fn vector_field_with_weights(
    cfg: &Configuration,
    s: &Spectrum,
    weights: &DMatrix<f64>,
) -> DMatrix<f64> {
    let vx = cfg.states() * s.matrix();
    let mut field = weights * vx; // row i: sum_j K_ij (V x_j)^T
    for i in 0..cfg.n() {
        let phi = field.row(i).dot(&cfg.states().row(i));
        let scaled = cfg.states().row(i) * phi;
        let mut row = field.row_mut(i);
        row -= scaled;
    }
    field
}

/// Interaction energy `E_beta = (1/(2 beta)) sum_ij exp(beta <x_i, V x_j>)`,
/// evaluated through a max-subtracted exponential sum.
pub fn energy(cfg: &Configuration, s: &Spectrum) -> Result<f64> {
    if cfg.beta() <= 0.0 {
        return Err(SalError::validation(format!(
            "energy requires beta > 0, got {}",
            cfg.beta()
        )));
    }
    check_dims(cfg, s)?;
    let scores = score_matrix(cfg, s);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SalError::numeric("non-finite attention score in energy"));
    }
    let sum: f64 = scores.iter().map(|sc| (sc - max).exp()).sum();
    Ok((max + sum.ln()).exp() / (2.0 * cfg.beta()))
}

/// Integration output: snapshot times, configurations, and energies.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub configurations: Vec<Configuration>,
    pub energies: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Configuration {
        self.configurations.last().expect("record is never empty")
    }

    /// Structural invariants: strictly increasing times, one snapshot and
    /// one energy per time.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.configurations.len() || self.times.len() != self.energies.len()
        {
            return Err(SalError::validation(
                "trajectory record arrays must have equal length",
            ));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SalError::validation(
                "trajectory times must be strictly increasing",
            ));
        }
        Ok(())
    }
}

/// Integrates the flow with classical RK4 in the ambient space, renormalizing
/// every particle row back to the sphere after each step.
///
/// Snapshots are taken at `t = 0`, every `record_every`-th step, and at the
/// final step. The final time is the largest step multiple `<= t_end`
/// (within rounding), so it is within one `dt` of `t_end`.
pub fn integrate(
    cfg0: &Configuration,
    s: &Spectrum,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SalError::validation(format!(
            "step size must be positive, got {dt}"
        )));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(SalError::validation(format!(
            "end time must be nonnegative, got {t_end}"
        )));
    }
    if record_every == 0 {
        return Err(SalError::validation("record cadence must be at least 1"));
    }
    check_dims(cfg0, s)?;

    let n_steps = (t_end / dt + 1e-9).floor() as usize;
    let beta = cfg0.beta();
    let mut states = cfg0.states().clone();

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        configurations: Vec::new(),
        energies: Vec::new(),
    };
    let snapshot = |states: &DMatrix<f64>, t: f64, record: &mut TrajectoryRecord| -> Result<()> {
        let cfg = Configuration::new(states.clone(), beta)?;
        let e = energy(&cfg, s)?;
        record.times.push(t);
        record.configurations.push(cfg);
        record.energies.push(e);
        Ok(())
    };
    snapshot(&states, 0.0, &mut record)?;

    for step in 1..=n_steps {
        rk4_step(&mut states, s, beta, dt);
        renormalize_rows(&mut states);
        if states.iter().any(|x| !x.is_finite()) {
            return Err(SalError::numeric(format!(
                "non-finite state encountered; last valid time t = {}",
                (step - 1) as f64 * dt
            )));
        }
        if step % record_every == 0 || step == n_steps {
            snapshot(&states, step as f64 * dt, &mut record)?;
        }
    }
    Ok(record)
}

/// One RK4 step in the ambient space; callers renormalize afterwards.
fn rk4_step(states: &mut DMatrix<f64>, s: &Spectrum, beta: f64, dt: f64) {
    let eval = |x: &DMatrix<f64>| raw_field(x, s, beta);
    let k1 = eval(states);
    let k2 = eval(&(&*states + &k1 * (dt / 2.0)));
    let k3 = eval(&(&*states + &k2 * (dt / 2.0)));
    let k4 = eval(&(&*states + &k3 * dt));
    *states += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

/// Vector field evaluated on a raw state matrix (intermediate RK4 stages are
/// slightly off the sphere, which the softmax tolerates).
fn raw_field(states: &DMatrix<f64>, s: &Spectrum, beta: f64) -> DMatrix<f64> {
    let n = states.nrows();
    let vx = states * s.matrix();
    let mut scores = states * vx.transpose();
    scores *= beta;
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            if scores[(i, j)] > max {
                max = scores[(i, j)];
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            let w = (scores[(i, j)] - max).exp();
            scores[(i, j)] = w;
            sum += w;
        }
        for j in 0..n {
            scores[(i, j)] /= sum;
        }
    }
    let mut field = scores * vx;
    for i in 0..n {
        let phi = field.row(i).dot(&states.row(i));
        let scaled = states.row(i) * phi;
        let mut row = field.row_mut(i);
        row -= scaled;
    }
    field
}

pub(crate) fn renormalize_rows(states: &mut DMatrix<f64>) {
    for i in 0..states.nrows() {
        let norm = states.row(i).norm();
        let mut row = states.row_mut(i);
        row /= norm;
    }
}

/// Norm drift of a single un-renormalized RK4 step; the local error of the
/// scheme, useful for step-order diagnostics.
pub fn single_step_norm_drift(cfg: &Configuration, s: &Spectrum, dt: f64) -> f64 {
    let mut states = cfg.states().clone();
    rk4_step(&mut states, s, cfg.beta(), dt);
    (0..states.nrows())
        .map(|i| (states.row(i).norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn check_dims(cfg: &Configuration, s: &Spectrum) -> Result<()> {
    if cfg.d() != s.dim() {
        return Err(SalError::validation(format!(
            "configuration dimension {} does not match spectrum dimension {}",
            cfg.d(),
            s.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use nalgebra::DVector;

    pub(crate) fn random_config(rng: &mut Rng, n: usize, d: usize, beta: f64) -> Configuration {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(d)).collect();
        Configuration::from_rows(&rows, beta).unwrap()
    }

    fn random_spectrum(rng: &mut Rng, d: usize) -> Spectrum {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let x = 4.0 * rng.uniform() - 2.0;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        Spectrum::decompose_symmetric(&m).unwrap()
    }

    #[test]
    fn zero_sharpness_gives_uniform_weights() {
        let mut rng = Rng::new(1);
        let cfg = random_config(&mut rng, 5, 3, 0.0);
        let s = Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).unwrap();
        let w = attention_weights(&cfg, &s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((w.weights[(i, j)] - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identical_particles_give_uniform_weights() {
        let mut rng = Rng::new(2);
        let u = rng.unit_vector(4);
        let rows = vec![u.clone(); 6];
        let cfg = Configuration::from_rows(&rows, 2.5).unwrap();
        let s = Spectrum::from_eigenvalues(&[2.0, 1.0, -1.0, -2.0]).unwrap();
        let w = attention_weights(&cfg, &s).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((w.weights[(i, j)] - 1.0 / 6.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn antipodal_pair_matches_two_particle_softmax() {
        // x1 = e_p, x2 = -e_p: K_11 = e^{beta lambda_p} / (e^{beta lambda_p} + e^{-beta lambda_p}).
        let lambda_p = 1.3;
        let beta = 0.7;
        let s = Spectrum::from_eigenvalues(&[lambda_p, -0.4]).unwrap();
        let cfg = Configuration::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], beta).unwrap();
        let w = attention_weights(&cfg, &s).unwrap();
        let expected =
            (beta * lambda_p).exp() / ((beta * lambda_p).exp() + (-beta * lambda_p).exp());
        assert!((w.weights[(0, 0)] - expected).abs() < 1e-14);
        assert!((w.weights[(1, 1)] - expected).abs() < 1e-14);
    }

    #[test]
    fn weights_are_row_stochastic() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let d = 2 + (rng.next_u64() % 5) as usize;
            let n = 2 + (rng.next_u64() % 6) as usize;
            let beta = 5.0 * rng.uniform();
            let cfg = random_config(&mut rng, n, d, beta);
            let s = random_spectrum(&mut rng, d);
            let w = attention_weights(&cfg, &s).unwrap();
            for i in 0..n {
                let sum: f64 = (0..n).map(|j| w.weights[(i, j)]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for j in 0..n {
                    let k = w.weights[(i, j)];
                    assert!((0.0..=1.0).contains(&k));
                }
            }
        }
    }

    #[test]
    fn log_norms_match_direct_sum() {
        let mut rng = Rng::new(17);
        let cfg = random_config(&mut rng, 4, 3, 1.2);
        let s = random_spectrum(&mut rng, 3);
        let w = attention_weights(&cfg, &s).unwrap();
        for i in 0..4 {
            let direct: f64 = (0..4)
                .map(|j| {
                    (cfg.beta()
                        * cfg
                            .states()
                            .row(i)
                            .dot(&(s.matrix() * cfg.states().row(j).transpose()).transpose()))
                    .exp()
                })
                .sum();
            assert!((w.row_log_norms[i] - direct.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn overflowing_scores_report_location() {
        let cfg = Configuration::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e308).unwrap();
        let s = Spectrum::from_eigenvalues(&[1e30, -1e30]).unwrap();
        let err = attention_weights(&cfg, &s).unwrap_err();
        assert!(err.to_string().contains("(0, 0)"), "got: {err}");
    }

    #[test]
    fn pure_mode_sign_patterns_are_equilibria() {
        let s = Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).unwrap();
        for pattern in [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, 1.0],
        ] {
            for p in 0..3 {
                let rows: Vec<Vec<f64>> = pattern
                    .iter()
                    .map(|&sgn| {
                        let mut r = vec![0.0; 3];
                        r[p] = sgn;
                        r
                    })
                    .collect();
                let cfg = Configuration::from_rows(&rows, 1.0).unwrap();
                let field = vector_field(&cfg, &s).unwrap();
                assert!(field.abs().max() < 1e-14, "mode {p} pattern {pattern:?}");
            }
        }
    }

    #[test]
    fn single_particle_reduces_to_consensus_field() {
        // In modal coordinates the n = 1 field is c_k (lambda_k - sum_l lambda_l c_l^2).
        let lambdas = [1.5, -0.3, 0.8];
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        let mut rng = Rng::new(9);
        let c = rng.unit_vector(3);
        let cfg = Configuration::from_rows(std::slice::from_ref(&c), 1.0).unwrap();
        let field = vector_field(&cfg, &s).unwrap();
        let phi: f64 = (0..3).map(|k| lambdas[k] * c[k] * c[k]).sum();
        for k in 0..3 {
            let expected = c[k] * (lambdas[k] - phi);
            assert!((field[(0, k)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn field_is_tangent_on_random_configurations() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let d = 2 + (rng.next_u64() % 5) as usize;
            let n = 1 + (rng.next_u64() % 7) as usize;
            let beta = 3.0 * rng.uniform();
            let cfg = random_config(&mut rng, n, d, beta);
            let s = random_spectrum(&mut rng, d);
            let field = vector_field(&cfg, &s).unwrap();
            for i in 0..n {
                let dot = field.row(i).dot(&cfg.states().row(i));
                assert!(dot.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permuting_particles_permutes_the_field() {
        let mut rng = Rng::new(6);
        let n = 5;
        let cfg = random_config(&mut rng, n, 3, 1.7);
        let s = random_spectrum(&mut rng, 3);
        let field = vector_field(&cfg, &s).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| cfg.row(i)).collect();
        let permuted = Configuration::from_rows(&rows, 1.7).unwrap();
        let permuted_field = vector_field(&permuted, &s).unwrap();
        // Softmax sums run in particle order, so equality holds to rounding.
        for (new_i, &old_i) in perm.iter().enumerate() {
            for k in 0..3 {
                assert!((permuted_field[(new_i, k)] - field[(old_i, k)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_matrix_energy_is_n_squared_over_two_beta() {
        let mut rng = Rng::new(8);
        let cfg = random_config(&mut rng, 4, 3, 2.0);
        let s = Spectrum::from_eigenvalues(&[0.0, 0.0, 0.0]).unwrap();
        let e = energy(&cfg, &s).unwrap();
        assert!((e - 16.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_particle_energy_is_single_term() {
        let lambdas = [0.9, -0.2];
        let beta = 1.4;
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        let cfg = Configuration::from_rows(&[vec![1.0, 0.0]], beta).unwrap();
        let e = energy(&cfg, &s).unwrap();
        assert!((e - (beta * lambdas[0]).exp() / (2.0 * beta)).abs() < 1e-14);
    }

    #[test]
    fn energy_rejects_nonpositive_beta() {
        let cfg = Configuration::from_rows(&[vec![1.0, 0.0]], 0.0).unwrap();
        let s = Spectrum::from_eigenvalues(&[1.0, 0.0]).unwrap();
        assert!(energy(&cfg, &s).is_err());
    }

    #[test]
    fn zero_time_integration_records_initial_state_only() {
        let mut rng = Rng::new(10);
        let cfg = random_config(&mut rng, 3, 3, 1.0);
        let s = Spectrum::from_eigenvalues(&[1.0, 0.0, -1.0]).unwrap();
        let record = integrate(&cfg, &s, 0.0, 1e-2, 10).unwrap();
        assert_eq!(record.len(), 1);
        assert_eq!(record.times[0], 0.0);
        assert!(
            (record.configurations[0].states() - cfg.states())
                .abs()
                .max()
                == 0.0
        );
    }

    #[test]
    fn consensus_run_matches_closed_form_point() {
        // Consensus data with V = diag(1, 0) and c(0) = (1/sqrt 2, 1/sqrt 2):
        // p_1(t) = e^{2t} / (e^{2t} + 1), so p_1(1) is about 0.880797.
        let s = Spectrum::from_eigenvalues(&[1.0, 0.0]).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let rows = vec![vec![inv_sqrt2, inv_sqrt2]; 3];
        let cfg = Configuration::from_rows(&rows, 1.0).unwrap();
        let record = integrate(&cfg, &s, 1.0, 1e-3, 100).unwrap();
        let last = record.last();
        let p1 = last.states()[(0, 0)].powi(2);
        let expected = (2.0f64).exp() / ((2.0f64).exp() + 1.0);
        assert!((expected - 0.880_797).abs() < 1e-6);
        assert!(
            (p1 - expected).abs() < 1e-6,
            "p1 = {p1}, expected {expected}"
        );
    }

    #[test]
    fn pure_mode_equilibrium_is_constant_in_time() {
        let s = Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).unwrap();
        let rows = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ];
        let cfg = Configuration::from_rows(&rows, 2.0).unwrap();
        let record = integrate(&cfg, &s, 5.0, 1e-2, 50).unwrap();
        for snap in &record.configurations {
            assert!((snap.states() - cfg.states()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn norms_stay_on_sphere_over_long_horizon() {
        let mut rng = Rng::new(12);
        let cfg = random_config(&mut rng, 6, 3, 1.0);
        let s = Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).unwrap();
        let record = integrate(&cfg, &s, 50.0, 1e-2, 100).unwrap();
        for snap in &record.configurations {
            for i in 0..snap.n() {
                assert!((snap.states().row(i).norm() - 1.0).abs() < 1e-9);
            }
        }
        record.validate().unwrap();
    }

    #[test]
    fn single_step_drift_is_fifth_order() {
        let mut rng = Rng::new(13);
        let cfg = random_config(&mut rng, 5, 3, 1.0);
        let s = random_spectrum(&mut rng, 3);
        let coarse = single_step_norm_drift(&cfg, &s, 0.05);
        let fine = single_step_norm_drift(&cfg, &s, 0.025);
        assert!(coarse > 1e-13, "drift too small to resolve: {coarse}");
        // Fifth-order local error contracts by 32 when dt halves; allow slack.
        assert!(
            fine < coarse / 16.0,
            "drift ratio not fifth order: coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn energy_is_nondecreasing_along_trajectories() {
        let mut rng = Rng::new(14);
        for _ in 0..5 {
            let d = 2 + (rng.next_u64() % 3) as usize;
            let beta = 0.5 + 2.0 * rng.uniform();
            let cfg = random_config(&mut rng, 5, d, beta);
            let s = random_spectrum(&mut rng, d);
            let record = integrate(&cfg, &s, 10.0, 1e-2, 10).unwrap();
            for pair in record.energies.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "energy decreased: {pair:?}");
            }
        }
    }

    #[test]
    fn modal_consistency_with_basis_change() {
        // The ambient field mapped through the basis equals the modal field.
        let mut rng = Rng::new(15);
        for _ in 0..20 {
            let d = 2 + (rng.next_u64() % 4) as usize;
            let n = 1 + (rng.next_u64() % 5) as usize;
            let beta = 3.0 * rng.uniform();
            let cfg = random_config(&mut rng, n, d, beta);
            let s = random_spectrum(&mut rng, d);
            let ambient = vector_field(&cfg, &s).unwrap();
            let modal_of_ambient = &ambient * s.basis();

            let coords = crate::modal::ModalCoordinates::from_configuration(&cfg, &s).unwrap();
            let modal = crate::modal::modal_field(&coords, beta).unwrap();
            assert!((modal_of_ambient - modal).abs().max() < 1e-12);
        }
    }

    #[test]
    fn integrate_rejects_bad_steps() {
        let cfg = Configuration::from_rows(&[vec![1.0, 0.0]], 1.0).unwrap();
        let s = Spectrum::from_eigenvalues(&[1.0, 0.0]).unwrap();
        assert!(integrate(&cfg, &s, 1.0, 0.0, 1).is_err());
        assert!(integrate(&cfg, &s, -1.0, 1e-2, 1).is_err());
        assert!(integrate(&cfg, &s, 1.0, 1e-2, 0).is_err());
    }

    #[test]
    fn to_modal_round_trip_through_vectors() {
        let s = Spectrum::from_eigenvalues(&[1.0, -1.0]).unwrap();
        let x = DVector::from_column_slice(&[0.6, 0.8]);
        let c = s.to_modal(&x).unwrap();
        let back = s.to_ambient(&c).unwrap();
        assert!((back - x).abs().max() < 1e-12);
    }
}

//! Reduced dynamics on the consensus and balanced bipolar invariant
//! manifolds: closed forms, replicator fields, and asymptotic predictors.

use nalgebra::DVector;

use crate::dynamics::Configuration;
use crate::error::{Result, SalError};

/// Initial masses below this threshold are treated as off-support.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Relative tolerance for detecting ties among extreme eigenvalues, so that
/// eigenvalue multiplicities are honored by the limit predictors.
pub const EIGENVALUE_TIE_TOL: f64 = 1e-10;
/// Tolerance of the bipolar-manifold membership test.
pub const BALANCE_TOL: f64 = 1e-8;

/// State of a reduced (consensus or bipolar) system: simplex masses `p`,
/// the weighted average `M = sum_k lambda_k p_k`, and `alpha = tanh(beta M)`.
///
/// `signs` is present only for bipolar states, recording the two groups.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub p: Vec<f64>,
    pub signs: Option<Vec<i8>>,
    pub m: f64,
    pub alpha: f64,
}

impl ReducedState {
    pub fn new(p: Vec<f64>, lambdas: &[f64], beta: f64, signs: Option<Vec<i8>>) -> Result<Self> {
        check_simplex(&p, 1e-10)?;
        if p.len() != lambdas.len() {
            return Err(SalError::validation(format!(
                "mass vector has {} entries, spectrum has {}",
                p.len(),
                lambdas.len()
            )));
        }
        if let Some(s) = &signs {
            if s.iter().any(|&x| x != 1 && x != -1) {
                return Err(SalError::validation("signs must be +1 or -1"));
            }
        }
        let m = weighted_average(&p, lambdas);
        Ok(ReducedState {
            p,
            signs,
            m,
            alpha: (beta * m).tanh(),
        })
    }
}

fn check_simplex(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(SalError::validation("mass vector must be non-empty"));
    }
    if p.iter().any(|&x| !x.is_finite() || x < -tol) {
        return Err(SalError::validation(format!(
            "mass vector must be nonnegative, got {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(SalError::validation(format!(
            "mass vector must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

fn weighted_average(p: &[f64], lambdas: &[f64]) -> f64 {
    p.iter().zip(lambdas).map(|(pk, lk)| pk * lk).sum()
}

/// Closed-form consensus masses
/// `p_k(t) = p_k(0) e^{2 lambda_k t} / sum_l p_l(0) e^{2 lambda_l t}`,
/// evaluated with max-exponent stabilization.
pub fn consensus_closed_form(p0: &[f64], lambdas: &[f64], t: f64) -> Result<Vec<f64>> {
    check_simplex(p0, 1e-10)?;
    if p0.len() != lambdas.len() {
        return Err(SalError::validation("mass/eigenvalue length mismatch"));
    }
    if t.is_nan() || t < 0.0 {
        return Err(SalError::validation(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    // Work with log weights 2 lambda_k t + log p_k(0) and subtract the max;
    // required for t around 50 with spectral gaps around 4.
    let mut log_w = vec![f64::NEG_INFINITY; p0.len()];
    let mut max = f64::NEG_INFINITY;
    for k in 0..p0.len() {
        if p0[k] > 0.0 {
            log_w[k] = 2.0 * lambdas[k] * t + p0[k].ln();
            if log_w[k] > max {
                max = log_w[k];
            }
        }
    }
    let mut out: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// Signed consensus coefficients: each `c_k(t)` is the closed-form square
/// root carrying the sign of `c_k(0)`.
pub fn consensus_coefficients(c0: &[f64], lambdas: &[f64], t: f64) -> Result<Vec<f64>> {
    let p0: Vec<f64> = c0.iter().map(|c| c * c).collect();
    let p = consensus_closed_form(&p0, lambdas, t)?;
    Ok(p.iter()
        .zip(c0)
        .map(|(&pk, &ck)| pk.sqrt().copysign(if ck == 0.0 { 1.0 } else { ck }))
        .collect())
}

/// Consensus replicator field `dp_k/dt = 2 p_k (lambda_k - sum_l lambda_l p_l)`.
pub fn consensus_field(p: &[f64], lambdas: &[f64]) -> Vec<f64> {
    let m = weighted_average(p, lambdas);
    p.iter()
        .zip(lambdas)
        .map(|(&pk, &lk)| 2.0 * pk * (lk - m))
        .collect()
}

/// Limit of the consensus masses: renormalized initial mass on the set of
/// largest on-support eigenvalues, zero elsewhere.
pub fn consensus_limit(p0: &[f64], lambdas: &[f64]) -> Result<Vec<f64>> {
    check_simplex(p0, 1e-10)?;
    let support: Vec<usize> = (0..p0.len()).filter(|&k| p0[k] > SUPPORT_TOL).collect();
    if support.is_empty() {
        return Err(SalError::validation("initial mass has empty support"));
    }
    let lambda_star = support
        .iter()
        .map(|&k| lambdas[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&k| tie(lambdas[k], lambda_star))
        .collect();
    let total: f64 = winners.iter().map(|&k| p0[k]).sum();
    let mut out = vec![0.0; p0.len()];
    for &k in &winners {
        out[k] = p0[k] / total;
    }
    Ok(out)
}

fn tie(lambda: f64, extreme: f64) -> bool {
    (lambda - extreme).abs() <= EIGENVALUE_TIE_TOL * extreme.abs().max(1.0)
}

/// Velocities of the balanced bipolar reduction.
#[derive(Debug, Clone)]
pub struct BipolarDerivative {
    pub p_dot: Vec<f64>,
    pub m_dot: f64,
}

/// Bipolar replicator field `dp_k/dt = 2 p_k alpha(M) (lambda_k - M)` with
/// `dM/dt = 2 alpha(M) sum_k p_k (lambda_k - M)^2`.
///
/// The returned `m_dot` comes from the quadratic identity and is cross
/// checked internally against `sum_k lambda_k dp_k/dt`.
pub fn bipolar_field(
    state: &ReducedState,
    lambdas: &[f64],
    beta: f64,
) -> Result<BipolarDerivative> {
    if state.p.len() != lambdas.len() {
        return Err(SalError::validation("mass/eigenvalue length mismatch"));
    }
    let m = weighted_average(&state.p, lambdas);
    if (m - state.m).abs() > 1e-12 {
        return Err(SalError::validation(format!(
            "state M = {} does not match sum lambda_k p_k = {m}",
            state.m
        )));
    }
    let alpha = (beta * m).tanh();
    if (alpha - state.alpha).abs() > 1e-12 {
        return Err(SalError::validation(format!(
            "state alpha = {} does not match tanh(beta M) = {alpha}",
            state.alpha
        )));
    }
    let p_dot: Vec<f64> = state
        .p
        .iter()
        .zip(lambdas)
        .map(|(&pk, &lk)| 2.0 * pk * alpha * (lk - m))
        .collect();
    let m_dot = 2.0
        * alpha
        * state
            .p
            .iter()
            .zip(lambdas)
            .map(|(&pk, &lk)| pk * (lk - m) * (lk - m))
            .sum::<f64>();
    let direct: f64 = p_dot.iter().zip(lambdas).map(|(&dp, &lk)| dp * lk).sum();
    if (m_dot - direct).abs() > 1e-12 {
        return Err(SalError::numeric(format!(
            "dM/dt identity broke: quadratic form {m_dot} vs direct sum {direct}"
        )));
    }
    Ok(BipolarDerivative { p_dot, m_dot })
}

/// Predicted limit of the bipolar reduction.
#[derive(Debug, Clone)]
pub struct BipolarLimit {
    pub p_infinity: Vec<f64>,
    pub m_infinity: f64,
}

/// Case split on the sign of `M(0)`: positive drives the mass onto the
/// largest on-support eigenvalues, negative onto the smallest, zero is
/// stationary.
pub fn bipolar_limit(p0: &[f64], lambdas: &[f64], _beta: f64) -> Result<BipolarLimit> {
    check_simplex(p0, 1e-10)?;
    if p0.len() != lambdas.len() {
        return Err(SalError::validation("mass/eigenvalue length mismatch"));
    }
    let support: Vec<usize> = (0..p0.len()).filter(|&k| p0[k] > SUPPORT_TOL).collect();
    if support.is_empty() {
        return Err(SalError::validation("initial mass has empty support"));
    }
    let m0 = weighted_average(p0, lambdas);
    let scale = lambdas.iter().fold(0.0f64, |a, &l| a.max(l.abs())).max(1.0);
    if m0.abs() <= 1e-14 * scale {
        return Ok(BipolarLimit {
            p_infinity: p0.to_vec(),
            m_infinity: m0,
        });
    }
    let extreme = if m0 > 0.0 {
        support
            .iter()
            .map(|&k| lambdas[k])
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        support
            .iter()
            .map(|&k| lambdas[k])
            .fold(f64::INFINITY, f64::min)
    };
    let winners: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&k| tie(lambdas[k], extreme))
        .collect();
    let total: f64 = winners.iter().map(|&k| p0[k]).sum();
    let mut p_infinity = vec![0.0; p0.len()];
    for &k in &winners {
        p_infinity[k] = p0[k] / total;
    }
    Ok(BipolarLimit {
        p_infinity,
        m_infinity: extreme,
    })
}

/// Tests whether a configuration lies on the balanced bipolar manifold
/// (all particles at `s_i u` with equally many signs).
///
/// Returns the common profile `u` with its first nonzero component made
/// positive, and the sign pattern. `None` for odd particle counts or any
/// deviation beyond [`BALANCE_TOL`].
pub fn check_bipolar_balance(cfg: &Configuration) -> Option<(DVector<f64>, Vec<i8>)> {
    let n = cfg.n();
    if !n.is_multiple_of(2) {
        return None;
    }
    let first: DVector<f64> = DVector::from_vec(cfg.row(0));
    // Canonical sign: first component of u with magnitude above tolerance
    // is positive.
    let lead = first.iter().position(|&x| x.abs() > BALANCE_TOL)?;
    let u = if first[lead] < 0.0 { -first } else { first };

    let mut signs = Vec::with_capacity(n);
    let mut n_plus = 0usize;
    for i in 0..n {
        let row = DVector::from_vec(cfg.row(i));
        let plus_dev = (&row - &u).amax();
        let minus_dev = (&row + &u).amax();
        if plus_dev <= BALANCE_TOL {
            signs.push(1);
            n_plus += 1;
        } else if minus_dev <= BALANCE_TOL {
            signs.push(-1);
        } else {
            return None;
        }
    }
    if 2 * n_plus != n {
        return None;
    }
    Some((u, signs))
}

/// RK4 integration of the consensus replicator field in mass coordinates.
pub fn integrate_consensus(
    p0: &[f64],
    lambdas: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    integrate_simplex(p0, t_end, dt, |p| consensus_field(p, lambdas))
}

/// RK4 integration of the bipolar replicator field in mass coordinates.
pub fn integrate_bipolar(
    p0: &[f64],
    lambdas: &[f64],
    beta: f64,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    integrate_simplex(p0, t_end, dt, |p| {
        let m = weighted_average(p, lambdas);
        let alpha = (beta * m).tanh();
        p.iter()
            .zip(lambdas)
            .map(|(&pk, &lk)| 2.0 * pk * alpha * (lk - m))
            .collect()
    })
}

fn integrate_simplex(
    p0: &[f64],
    t_end: f64,
    dt: f64,
    field: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Vec<(f64, Vec<f64>)>> {
    check_simplex(p0, 1e-10)?;
    if dt.is_nan() || dt <= 0.0 || t_end.is_nan() || t_end < 0.0 {
        return Err(SalError::validation("need dt > 0 and t_end >= 0"));
    }
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut p = p0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, p.clone()));
    let combine = |p: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        p.iter().zip(k).map(|(&a, &b)| a + h * b).collect()
    };
    for step in 1..=steps {
        let k1 = field(&p);
        let k2 = field(&combine(&p, &k1, dt / 2.0));
        let k3 = field(&combine(&p, &k2, dt / 2.0));
        let k4 = field(&combine(&p, &k3, dt));
        for k in 0..p.len() {
            p[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        out.push((step as f64 * dt, p.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, Configuration};
    use crate::modal::averaged_masses_ambient;
    use crate::rng::Rng;
    use crate::spectral::Spectrum;

    #[test]
    fn closed_form_at_zero_time_is_initial_mass() {
        let p0 = [0.2, 0.5, 0.3];
        let p = consensus_closed_form(&p0, &[1.0, -0.5, 0.3], 0.0).unwrap();
        for k in 0..3 {
            assert!((p[k] - p0[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_hand_value() {
        let p = consensus_closed_form(&[0.5, 0.5], &[1.0, 0.0], 1.0).unwrap();
        let expected = (2.0f64).exp() / ((2.0f64).exp() + 1.0);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((expected - 0.880_797).abs() < 1e-6);
    }

    #[test]
    fn closed_form_stays_on_simplex_at_large_time() {
        // Spectral gap ~ 4 and t = 50 exercise the stabilized form.
        let p0 = [0.25, 0.25, 0.25, 0.25];
        let lambdas = [2.0, 1.0, -1.0, -2.0];
        let p = consensus_closed_form(&p0, &lambdas, 50.0).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn long_time_mass_concentrates_on_the_support_maximum() {
        // Mode 0 has the largest eigenvalue but starts with zero mass, so
        // the winner is the largest eigenvalue on the support.
        let p0 = [0.0, 0.1, 0.6, 0.3];
        let lambdas = [5.0, 1.0, 0.5, -0.5];
        let p = consensus_closed_form(&p0, &lambdas, 50.0).unwrap();
        let limit = consensus_limit(&p0, &lambdas).unwrap();
        assert_eq!(limit, vec![0.0, 1.0, 0.0, 0.0]);
        for k in 0..4 {
            assert!((p[k] - limit[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn consensus_limit_splits_ties_proportionally() {
        let p0 = [0.2, 0.3, 0.5];
        let lambdas = [1.0, 1.0, -1.0];
        let limit = consensus_limit(&p0, &lambdas).unwrap();
        assert!((limit[0] - 0.4).abs() < 1e-12);
        assert!((limit[1] - 0.6).abs() < 1e-12);
        assert_eq!(limit[2], 0.0);
    }

    #[test]
    fn consensus_field_examples() {
        // Vertex is an equilibrium.
        let f = consensus_field(&[1.0, 0.0], &[1.0, 0.0]);
        assert!(f.iter().all(|&x| x == 0.0));
        // Hand evaluation at the midpoint.
        let f = consensus_field(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((f[0] - 0.5).abs() < 1e-15);
        assert!((f[1] + 0.5).abs() < 1e-15);
        // Components always sum to zero.
        let f = consensus_field(&[0.2, 0.3, 0.5], &[1.0, -2.0, 0.7]);
        assert!(f.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn integrated_consensus_field_matches_closed_form() {
        let p0 = [0.4, 0.35, 0.25];
        let lambdas = [1.2, -0.3, 0.4];
        let record = integrate_consensus(&p0, &lambdas, 5.0, 1e-3).unwrap();
        let (t, p) = record.last().unwrap();
        let exact = consensus_closed_form(&p0, &lambdas, *t).unwrap();
        for k in 0..3 {
            assert!((p[k] - exact[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn sign_preservation_of_consensus_coefficients() {
        let c0 = [-0.6, 0.8];
        let lambdas = [1.0, -1.0];
        for t in [0.0, 0.5, 2.0, 10.0] {
            let c = consensus_coefficients(&c0, &lambdas, t).unwrap();
            assert!(c[0] <= 0.0 && c[1] >= 0.0);
            let norm: f64 = c.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bipolar_field_is_stationary_at_zero_average() {
        let p0 = vec![0.5, 0.5];
        let lambdas = [1.0, -1.0];
        let state = ReducedState::new(p0, &lambdas, 2.0, None).unwrap();
        assert_eq!(state.m, 0.0);
        let d = bipolar_field(&state, &lambdas, 2.0).unwrap();
        assert!(d.p_dot.iter().all(|&x| x == 0.0));
        assert_eq!(d.m_dot, 0.0);
    }

    #[test]
    fn bipolar_field_vanishes_at_vertices() {
        let lambdas = [-1.0, -3.0];
        let state = ReducedState::new(vec![1.0, 0.0], &lambdas, 1.0, None).unwrap();
        let d = bipolar_field(&state, &lambdas, 1.0).unwrap();
        assert!(d.p_dot.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_definite_interior_has_strictly_decreasing_average() {
        let lambdas = [-0.5, -1.5, -2.5];
        let mut rng = Rng::new(31);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let state = ReducedState::new(p, &lambdas, 1.3, None).unwrap();
            let d = bipolar_field(&state, &lambdas, 1.3).unwrap();
            assert!(d.m_dot < 0.0);
            assert!(d.m_dot.signum() == state.m.signum());
        }
    }

    #[test]
    fn bipolar_limit_cases() {
        // Negative initial average selects the smallest eigenvalue.
        let l = bipolar_limit(&[0.9, 0.1], &[-1.0, -3.0], 1.0).unwrap();
        assert_eq!(l.p_infinity, vec![0.0, 1.0]);
        assert_eq!(l.m_infinity, -3.0);
        // Zero initial average is stationary.
        let l = bipolar_limit(&[0.5, 0.5], &[1.0, -1.0], 1.0).unwrap();
        assert_eq!(l.p_infinity, vec![0.5, 0.5]);
        assert_eq!(l.m_infinity, 0.0);
        // Positive initial average selects the largest eigenvalue.
        let p0 = [0.5, 0.3, 0.2];
        let lambdas = [2.0, 1.0, -1.0];
        let m0: f64 = p0.iter().zip(&lambdas).map(|(p, l)| p * l).sum();
        assert!(m0 > 0.0);
        let l = bipolar_limit(&p0, &lambdas, 1.0).unwrap();
        assert_eq!(l.p_infinity, vec![1.0, 0.0, 0.0]);
        assert_eq!(l.m_infinity, 2.0);
    }

    #[test]
    fn balance_detector_examples() {
        let mut rng = Rng::new(32);
        let u = rng.unit_vector(3);
        let minus: Vec<f64> = u.iter().map(|x| -x).collect();

        let pair = Configuration::from_rows(&[u.clone(), minus.clone()], 1.0).unwrap();
        let (profile, signs) = check_bipolar_balance(&pair).unwrap();
        assert_eq!(signs.len(), 2);
        assert_eq!(signs[0] * signs[1], -1);
        // Canonical profile has a positive leading component.
        assert!(profile[profile.iter().position(|&x| x.abs() > 1e-8).unwrap()] > 0.0);

        let unbalanced =
            Configuration::from_rows(&[u.clone(), u.clone(), u.clone(), minus.clone()], 1.0)
                .unwrap();
        assert!(check_bipolar_balance(&unbalanced).is_none());

        let mut noisy = u.clone();
        noisy[0] += 1e-3;
        let norm: f64 = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
        let noisy: Vec<f64> = noisy.iter().map(|x| x / norm).collect();
        let perturbed = Configuration::from_rows(&[noisy, minus.clone()], 1.0).unwrap();
        assert!(check_bipolar_balance(&perturbed).is_none());

        let odd = Configuration::from_rows(&[u.clone(), minus, u], 1.0).unwrap();
        assert!(check_bipolar_balance(&odd).is_none());
    }

    #[test]
    fn full_dynamics_keeps_consensus_exactly() {
        let mut rng = Rng::new(33);
        let s = Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).unwrap();
        let row = rng.unit_vector(3);
        let cfg = Configuration::from_rows(&vec![row; 5], 1.0).unwrap();
        let record = integrate(&cfg, &s, 20.0, 1e-2, 100).unwrap();
        for snap in &record.configurations {
            let states = snap.states();
            for i in 1..snap.n() {
                let dev = (states.row(i) - states.row(0)).amax();
                assert!(dev < 1e-8, "consensus broken by {dev}");
            }
        }
    }

    #[test]
    fn full_dynamics_keeps_balanced_bipolar_detectable() {
        let mut rng = Rng::new(34);
        let s = Spectrum::from_eigenvalues(&[-0.5, -1.5, -2.5]).unwrap();
        let u = rng.unit_vector(3);
        let minus: Vec<f64> = u.iter().map(|x| -x).collect();
        let cfg = Configuration::from_rows(&[u.clone(), minus.clone(), u, minus], 1.0).unwrap();
        let record = integrate(&cfg, &s, 20.0, 1e-2, 100).unwrap();
        for snap in &record.configurations {
            assert!(check_bipolar_balance(snap).is_some());
        }
    }

    #[test]
    fn full_consensus_run_tracks_closed_form_masses() {
        let mut rng = Rng::new(35);
        let lambdas = [1.1, -0.4, 0.6];
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        let row = rng.unit_vector(3);
        let p0: Vec<f64> = row.iter().map(|c| c * c).collect();
        let cfg = Configuration::from_rows(&vec![row; 3], 1.0).unwrap();
        let record = integrate(&cfg, &s, 10.0, 5e-3, 200).unwrap();
        for (idx, &t) in record.times.iter().enumerate() {
            let exact = consensus_closed_form(&p0, &lambdas, t).unwrap();
            let sim = averaged_masses_ambient(&record.configurations[idx], &s);
            for k in 0..3 {
                if p0[k] > SUPPORT_TOL {
                    let rel = (sim[k] - exact[k]).abs() / exact[k];
                    assert!(rel < 1e-6, "t = {t}, mode {k}: rel error {rel}");
                }
            }
        }
    }

    #[test]
    fn full_bipolar_run_tracks_reduced_masses_and_monotone_average() {
        let mut rng = Rng::new(36);
        let lambdas = [-0.5, -1.5, -2.5];
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        for n in [2usize, 4] {
            let u = rng.unit_vector(3);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let sign = if i < n / 2 { 1.0 } else { -1.0 };
                    u.iter().map(|x| sign * x).collect()
                })
                .collect();
            let cfg = Configuration::from_rows(&rows, 1.0).unwrap();
            let p0: Vec<f64> = u.iter().map(|c| c * c).collect();
            let record = integrate(&cfg, &s, 20.0, 2e-3, 500).unwrap();
            let reduced = integrate_bipolar(&p0, &lambdas, 1.0, 20.0, 2e-3).unwrap();

            let mut previous_m = f64::INFINITY;
            for (idx, &t) in record.times.iter().enumerate() {
                let sim = averaged_masses_ambient(&record.configurations[idx], &s);
                let step = (t / 2e-3).round() as usize;
                let (rt, rp) = &reduced[step];
                assert!((rt - t).abs() < 1e-9);
                for k in 0..3 {
                    assert!((sim[k] - rp[k]).abs() < 1e-6, "n = {n}, t = {t}, k = {k}");
                }
                let m: f64 = sim.iter().zip(&lambdas).map(|(p, l)| p * l).sum();
                assert!(m <= previous_m + 1e-10, "M increased at t = {t}");
                assert!(m < 0.0);
                previous_m = m;
            }
        }
    }
}

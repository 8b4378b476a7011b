//! Eigenbasis reformulation of the flow: the coefficient ODE in matrix form
//! and the token-wise replicator variables.

use nalgebra::DMatrix;

use crate::dynamics::{Configuration, ROW_NORM_TOL};
use crate::error::{Result, SalError};
use crate::spectral::Spectrum;

/// Coefficients below this magnitude are treated as exactly off-support;
/// the replicator fitness divides by the coefficient.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Modal coefficient matrix `C` (rows `c_i = B^T x_i`) tied to its spectrum.
#[derive(Debug, Clone)]
pub struct ModalCoordinates<'a> {
    coeffs: DMatrix<f64>,
    spectrum: &'a Spectrum,
}

impl<'a> ModalCoordinates<'a> {
    pub fn new(coeffs: DMatrix<f64>, spectrum: &'a Spectrum) -> Result<Self> {
        if coeffs.ncols() != spectrum.dim() {
            return Err(SalError::validation(format!(
                "coefficient matrix has {} columns, spectrum has dimension {}",
                coeffs.ncols(),
                spectrum.dim()
            )));
        }
        for i in 0..coeffs.nrows() {
            let norm = coeffs.row(i).norm();
            if !norm.is_finite() || (norm - 1.0).abs() > ROW_NORM_TOL {
                return Err(SalError::validation(format!(
                    "coefficient row {i} must have unit norm, |c_{i}| = {norm}"
                )));
            }
        }
        Ok(ModalCoordinates { coeffs, spectrum })
    }

    /// Modal view of an ambient configuration: `C = X B`.
    pub fn from_configuration(cfg: &Configuration, spectrum: &'a Spectrum) -> Result<Self> {
        ModalCoordinates::new(spectrum.modal_coordinates(cfg.states()), spectrum)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn d(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// Token-wise modal masses `a_{i,k} = c_{i,k}^2` with replicator fitness.
///
/// `fitness` is row-major `n x d`; entries are `None` where the mode is off
/// support (the fitness would divide by a vanishing coefficient).
#[derive(Debug, Clone)]
pub struct ModalMasses {
    pub masses: DMatrix<f64>,
    pub fitness: Vec<Option<f64>>,
    pub mean_fitness: Vec<f64>,
}

impl ModalMasses {
    pub fn fitness_at(&self, i: usize, k: usize, d: usize) -> Option<f64> {
        self.fitness[i * d + k]
    }
}

/// Attention weights evaluated from modal coefficients:
/// `K_ij = softmax_j(beta * sum_l lambda_l c_il c_jl)`.
fn modal_weights(coords: &ModalCoordinates<'_>, beta: f64) -> Result<DMatrix<f64>> {
    let c = coords.coeffs();
    let n = c.nrows();
    let lambdas = coords.spectrum().eigenvalues();
    let mut scaled = c.clone();
    for (k, &lambda) in lambdas.iter().enumerate() {
        let mut col = scaled.column_mut(k);
        col *= lambda;
    }
    let mut scores = c * scaled.transpose();
    scores *= beta;
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            let sc = scores[(i, j)];
            if !sc.is_finite() {
                return Err(SalError::numeric(format!(
                    "non-finite modal attention score at (i, j) = ({i}, {j})"
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
    }
    Ok(scores)
}

/// Modal coefficient field `dC/dt = K C Lambda - Diag(K C Lambda C^T) C`.
pub fn modal_field(coords: &ModalCoordinates<'_>, beta: f64) -> Result<DMatrix<f64>> {
    let weights = modal_weights(coords, beta)?;
    Ok(modal_field_with_weights(coords, &weights))
}

fn modal_field_with_weights(coords: &ModalCoordinates<'_>, weights: &DMatrix<f64>) -> DMatrix<f64> {
    let c = coords.coeffs();
    let lambdas = coords.spectrum().eigenvalues();
    let mut driven = weights * c; // G_ik = sum_j K_ij c_jk
    for (k, &lambda) in lambdas.iter().enumerate() {
        let mut col = driven.column_mut(k);
        col *= lambda;
    }
    // driven now holds (K C Lambda); subtract the row-wise projection.
    let mut field = driven;
    for i in 0..c.nrows() {
        let phi = field.row(i).dot(&c.row(i));
        let scaled = c.row(i) * phi;
        let mut row = field.row_mut(i);
        row -= scaled;
    }
    field
}

/// Replicator view of the modal dynamics.
///
/// Returns the masses with their fitness values and the mass velocities
/// `da_{i,k}/dt = 2 a_{i,k} (f_{i,k} - mean_f_i)` on the support, zero off
/// the support.
pub fn replicator_view(
    coords: &ModalCoordinates<'_>,
    beta: f64,
) -> Result<(ModalMasses, DMatrix<f64>)> {
    let c = coords.coeffs();
    let (n, d) = c.shape();
    let lambdas = coords.spectrum().eigenvalues();
    let weights = modal_weights(coords, beta)?;
    let driven = &weights * c; // G_ik = sum_j K_ij c_jk

    let masses = DMatrix::from_fn(n, d, |i, k| c[(i, k)] * c[(i, k)]);
    let mut fitness = vec![None; n * d];
    let mut mean_fitness = vec![0.0; n];
    let mut mass_dot = DMatrix::zeros(n, d);

    for i in 0..n {
        let mut phi = 0.0;
        for k in 0..d {
            phi += lambdas[k] * c[(i, k)] * driven[(i, k)];
        }
        mean_fitness[i] = phi;
        for k in 0..d {
            if c[(i, k)].abs() > SUPPORT_TOL {
                let f = lambdas[k] * driven[(i, k)] / c[(i, k)];
                fitness[i * d + k] = Some(f);
                mass_dot[(i, k)] = 2.0 * masses[(i, k)] * (f - phi);
            }
        }
    }

    Ok((
        ModalMasses {
            masses,
            fitness,
            mean_fitness,
        },
        mass_dot,
    ))
}

/// Averaged modal masses `m_k = (1/n) sum_i c_{i,k}^2`.
pub fn averaged_masses(coords: &ModalCoordinates<'_>) -> Vec<f64> {
    averaged_masses_of(coords.coeffs())
}

/// Averaged masses of a raw coefficient matrix.
pub fn averaged_masses_of(coeffs: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = coeffs.shape();
    let mut m = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            m[k] += coeffs[(i, k)] * coeffs[(i, k)];
        }
    }
    for v in m.iter_mut() {
        *v /= n as f64;
    }
    m
}

/// Averaged masses of an ambient configuration under a spectrum.
pub fn averaged_masses_ambient(cfg: &Configuration, spectrum: &Spectrum) -> Vec<f64> {
    averaged_masses_of(&spectrum.modal_coordinates(cfg.states()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

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

    fn random_coords(rng: &mut Rng, n: usize, d: usize) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(d)).collect();
        DMatrix::from_fn(n, d, |i, j| rows[i][j])
    }

    #[test]
    fn pure_mode_row_has_zero_field() {
        let s = Spectrum::from_eigenvalues(&[1.3, -0.4, 0.2]).unwrap();
        let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let field = modal_field(&coords, 2.0).unwrap();
        assert!(field.abs().max() < 1e-14);
    }

    #[test]
    fn consensus_rows_follow_single_particle_field() {
        let lambdas = [1.5, -0.5, 0.3];
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        let mut rng = Rng::new(21);
        let c_row = rng.unit_vector(3);
        let n = 4;
        let c = DMatrix::from_fn(n, 3, |_, j| c_row[j]);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let field = modal_field(&coords, 1.1).unwrap();
        let phi: f64 = (0..3).map(|k| lambdas[k] * c_row[k] * c_row[k]).sum();
        for i in 0..n {
            for k in 0..3 {
                let expected = c_row[k] * (lambdas[k] - phi);
                assert!((field[(i, k)] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn agrees_with_ambient_field_through_basis_change() {
        let mut rng = Rng::new(22);
        for _ in 0..200 {
            let d = 2 + (rng.next_u64() % 4) as usize;
            let n = 1 + (rng.next_u64() % 5) as usize;
            let beta = 3.0 * rng.uniform();
            let s = random_spectrum(&mut rng, d);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(d)).collect();
            let cfg = Configuration::from_rows(&rows, beta).unwrap();

            let ambient = crate::dynamics::vector_field(&cfg, &s).unwrap();
            let pulled = &ambient * s.basis();
            let coords = ModalCoordinates::from_configuration(&cfg, &s).unwrap();
            let modal = modal_field(&coords, beta).unwrap();
            assert!((pulled - modal).abs().max() < 1e-12);
        }
    }

    #[test]
    fn modal_rows_are_tangent() {
        let mut rng = Rng::new(23);
        let s = random_spectrum(&mut rng, 4);
        let c = random_coords(&mut rng, 6, 4);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let field = modal_field(&coords, 1.3).unwrap();
        for i in 0..6 {
            assert!(field.row(i).dot(&coords.coeffs().row(i)).abs() < 1e-10);
        }
    }

    #[test]
    fn replicator_chain_rule_identity() {
        // On the support: da/dt = 2 c dc/dt within 1e-10.
        let mut rng = Rng::new(24);
        for _ in 0..100 {
            let d = 2 + (rng.next_u64() % 4) as usize;
            let n = 1 + (rng.next_u64() % 5) as usize;
            let beta = 2.0 * rng.uniform();
            let s = random_spectrum(&mut rng, d);
            let c = random_coords(&mut rng, n, d);
            let coords = ModalCoordinates::new(c, &s).unwrap();
            let field = modal_field(&coords, beta).unwrap();
            let (_, mass_dot) = replicator_view(&coords, beta).unwrap();
            for i in 0..n {
                for k in 0..d {
                    let chain = 2.0 * coords.coeffs()[(i, k)] * field[(i, k)];
                    assert!((mass_dot[(i, k)] - chain).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn mass_velocities_sum_to_zero_per_token() {
        let mut rng = Rng::new(25);
        let s = random_spectrum(&mut rng, 5);
        let c = random_coords(&mut rng, 4, 5);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let (_, mass_dot) = replicator_view(&coords, 1.7).unwrap();
        for i in 0..4 {
            let sum: f64 = (0..5).map(|k| mass_dot[(i, k)]).sum();
            assert!(sum.abs() < 1e-12);
        }
    }

    #[test]
    fn pure_mode_has_zero_mass_velocity() {
        let s = Spectrum::from_eigenvalues(&[0.7, -0.7]).unwrap();
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let (masses, mass_dot) = replicator_view(&coords, 1.0).unwrap();
        assert!(mass_dot.abs().max() < 1e-14);
        // Off-support fitness is undefined, masses stay serialization-safe.
        assert!(masses.fitness_at(0, 1, 2).is_none());
        assert!(masses.fitness_at(0, 0, 2).is_some());
    }

    #[test]
    fn mean_fitness_matches_mass_weighted_fitness() {
        let mut rng = Rng::new(26);
        let s = random_spectrum(&mut rng, 3);
        let c = random_coords(&mut rng, 5, 3);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let (masses, _) = replicator_view(&coords, 0.9).unwrap();
        for i in 0..5 {
            let mut weighted = 0.0;
            let mut all_defined = true;
            for k in 0..3 {
                match masses.fitness_at(i, k, 3) {
                    Some(f) => weighted += masses.masses[(i, k)] * f,
                    None => all_defined = false,
                }
            }
            if all_defined {
                assert!((weighted - masses.mean_fitness[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn averaged_masses_examples() {
        let s = Spectrum::from_eigenvalues(&[1.0, 0.5, -0.5]).unwrap();
        let all_last = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0]);
        let coords = ModalCoordinates::new(all_last, &s).unwrap();
        assert_eq!(averaged_masses(&coords), vec![0.0, 0.0, 1.0]);

        let two_pure = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let coords = ModalCoordinates::new(two_pure, &s).unwrap();
        let m = averaged_masses(&coords);
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((m[1] - 0.5).abs() < 1e-15);
        assert!(m[2].abs() < 1e-15);
    }

    #[test]
    fn averaged_masses_sum_to_one() {
        let mut rng = Rng::new(27);
        let s = random_spectrum(&mut rng, 4);
        let c = random_coords(&mut rng, 7, 4);
        let coords = ModalCoordinates::new(c, &s).unwrap();
        let m = averaged_masses(&coords);
        let sum: f64 = m.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn averaged_masses_do_not_close() {
        // Fixture: two coefficient matrices with identical averaged masses
        // but different averaged-mass velocities, so no ODE in (m_k) alone
        // can reproduce both.
        let angle: f64 = 0.3;
        let (c, sn) = (angle.cos(), angle.sin());
        let s = Spectrum::from_eigenvalues(&[1.0, -1.0]).unwrap();
        let beta = 1.0;

        let aligned = DMatrix::from_row_slice(2, 2, &[c, sn, c, sn]);
        let mirrored = DMatrix::from_row_slice(2, 2, &[c, sn, c, -sn]);

        let coords_a = ModalCoordinates::new(aligned, &s).unwrap();
        let coords_b = ModalCoordinates::new(mirrored, &s).unwrap();

        let m_a = averaged_masses(&coords_a);
        let m_b = averaged_masses(&coords_b);
        for k in 0..2 {
            assert_eq!(m_a[k], m_b[k]);
        }

        let (_, dot_a) = replicator_view(&coords_a, beta).unwrap();
        let (_, dot_b) = replicator_view(&coords_b, beta).unwrap();
        let mdot = |dot: &DMatrix<f64>, k: usize| (dot[(0, k)] + dot[(1, k)]) / 2.0;
        let gap = (mdot(&dot_a, 0) - mdot(&dot_b, 0)).abs();
        assert!(gap > 0.05, "witness velocities too close: gap = {gap}");
    }

    #[test]
    fn simplex_preserved_without_renormalization() {
        // Integrating the raw modal field (no projection back to the sphere)
        // keeps each mass row on the simplex to integrator accuracy.
        let lambdas = [1.5, 0.5, -0.5];
        let s = Spectrum::from_eigenvalues(&lambdas).unwrap();
        let mut rng = Rng::new(28);
        let mut c = random_coords(&mut rng, 4, 3);
        let dt = 5e-3;
        let steps = (20.0 / dt) as usize;
        let beta = 1.0;
        for _ in 0..steps {
            let eval = |m: &DMatrix<f64>| {
                let coords = ModalCoordinates {
                    coeffs: m.clone(),
                    spectrum: &s,
                };
                modal_field(&coords, beta).unwrap()
            };
            let k1 = eval(&c);
            let k2 = eval(&(&c + &k1 * (dt / 2.0)));
            let k3 = eval(&(&c + &k2 * (dt / 2.0)));
            let k4 = eval(&(&c + &k3 * dt));
            c += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        for i in 0..4 {
            let total: f64 = (0..3).map(|k| c[(i, k)] * c[(i, k)]).sum();
            assert!((total - 1.0).abs() < 1e-8, "row {i} drifted: {total}");
        }
    }
}

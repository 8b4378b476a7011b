//! Spectral decomposition of the symmetric interaction matrix and the
//! change of variables between ambient and eigenbasis coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SalError};

/// Maximum admissible asymmetry `|V_ij - V_ji|` of the input matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Orthonormality / reconstruction tolerance of a valid decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-10;
/// Off-diagonal Frobenius norm at which the Jacobi sweep stops.
const JACOBI_OFF_TOL: f64 = 1e-13;
/// Cyclic Jacobi sweep limit; convergence is quadratic so this is generous.
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition `V = B diag(lambda) B^T` of a symmetric matrix.
///
/// `basis` holds the orthonormal eigenvectors as columns, in the same order
/// as `eigenvalues`. The eigenvalue order is whatever the constructor
/// produced (`decompose_symmetric` sorts descending, `from_eigenvalues`
/// keeps the caller's order); no ordering is assumed elsewhere.
#[derive(Debug, Clone)]
pub struct Spectrum {
    dim: usize,
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
    /// `basis * diag(eigenvalues) * basis^T`, cached so that the dynamics
    /// and the modal formulation evaluate the same floating-point matrix.
    matrix: DMatrix<f64>,
}

impl Spectrum {
    /// Decomposes a symmetric matrix with cyclic Jacobi rotations.
    ///
    /// Eigenvalues are returned sorted descending, and each eigenvector is
    /// sign-fixed so its largest-magnitude component is positive.
    pub fn decompose_symmetric(v: &DMatrix<f64>) -> Result<Spectrum> {
        let (rows, cols) = v.shape();
        if rows != cols {
            return Err(SalError::validation(format!(
                "interaction matrix must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 {
            return Err(SalError::validation("interaction matrix must be non-empty"));
        }
        for i in 0..rows {
            for j in (i + 1)..cols {
                let gap = (v[(i, j)] - v[(j, i)]).abs();
                if !gap.is_finite() || gap > SYMMETRY_TOL {
                    return Err(SalError::validation(format!(
                        "interaction matrix must be symmetric (V = V^T): \
                         V[{i}][{j}] = {} but V[{j}][{i}] = {}",
                        v[(i, j)],
                        v[(j, i)]
                    )));
                }
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SalError::validation(
                "interaction matrix entries must be finite",
            ));
        }

        let (mut eigenvalues, mut basis) = jacobi_eigen(v)?;

        // Canonical output: descending eigenvalues, deterministic signs.
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());
        eigenvalues = order.iter().map(|&k| eigenvalues[k]).collect();
        basis = DMatrix::from_columns(&order.iter().map(|&k| basis.column(k)).collect::<Vec<_>>());
        fix_column_signs(&mut basis);

        let spectrum = Spectrum::assemble(eigenvalues, basis);
        spectrum.check_reconstructs(v)?;
        spectrum.validate()?;
        Ok(spectrum)
    }

    /// Spectrum of a diagonal matrix: identity basis, eigenvalue order as
    /// given (the `"diag"` config shorthand).
    pub fn from_eigenvalues(lambdas: &[f64]) -> Result<Spectrum> {
        if lambdas.is_empty() {
            return Err(SalError::validation("eigenvalue list must be non-empty"));
        }
        if lambdas.iter().any(|x| !x.is_finite()) {
            return Err(SalError::validation("eigenvalues must be finite"));
        }
        let dim = lambdas.len();
        Ok(Spectrum::assemble(
            lambdas.to_vec(),
            DMatrix::identity(dim, dim),
        ))
    }

    /// Builds a spectrum from an explicit basis, validating orthonormality.
    pub fn from_parts(eigenvalues: Vec<f64>, basis: DMatrix<f64>) -> Result<Spectrum> {
        if basis.nrows() != basis.ncols() || basis.nrows() != eigenvalues.len() {
            return Err(SalError::validation(format!(
                "basis must be {n}x{n} to match {n} eigenvalues, got {r}x{c}",
                n = eigenvalues.len(),
                r = basis.nrows(),
                c = basis.ncols()
            )));
        }
        let spectrum = Spectrum::assemble(eigenvalues, basis);
        spectrum.validate()?;
        Ok(spectrum)
    }

    fn assemble(eigenvalues: Vec<f64>, basis: DMatrix<f64>) -> Spectrum {
        let dim = eigenvalues.len();
        let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(&eigenvalues));
        let matrix = &basis * lambda * basis.transpose();
        Spectrum {
            dim,
            eigenvalues,
            basis,
            matrix,
        }
    }

    /// Checks orthonormality of the basis and that the stored matrix is the
    /// eigen-reconstruction, both within `DECOMPOSITION_TOL`.
    pub fn validate(&self) -> Result<()> {
        let gram = self.basis.transpose() * &self.basis;
        let identity = DMatrix::<f64>::identity(self.dim, self.dim);
        let ortho_err = (gram - identity).abs().max();
        if ortho_err > DECOMPOSITION_TOL {
            return Err(SalError::numeric(format!(
                "eigenbasis is not orthonormal: max |B^T B - I| = {ortho_err:.3e}"
            )));
        }
        Ok(())
    }

    fn check_reconstructs(&self, v: &DMatrix<f64>) -> Result<()> {
        let err = (&self.matrix - v).abs().max();
        if err > DECOMPOSITION_TOL {
            return Err(SalError::numeric(format!(
                "eigendecomposition does not reconstruct the input: \
                 max |B diag(lambda) B^T - V| = {err:.3e}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// The interaction matrix `B diag(lambda) B^T` used by the dynamics.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Coefficients of a unit vector in the eigenbasis: `c = B^T x`.
    pub fn to_modal(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(SalError::validation(format!(
                "vector has dimension {}, spectrum has dimension {}",
                x.len(),
                self.dim
            )));
        }
        let norm = x.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(SalError::validation(format!(
                "input to the modal map must be a unit vector, |x| = {norm}"
            )));
        }
        Ok(self.basis.transpose() * x)
    }

    /// Inverse of [`Spectrum::to_modal`]: `x = B c`.
    pub fn to_ambient(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.dim {
            return Err(SalError::validation(format!(
                "coefficient vector has dimension {}, spectrum has dimension {}",
                c.len(),
                self.dim
            )));
        }
        Ok(&self.basis * c)
    }

    /// Row-wise modal coordinates of an `n x d` state matrix: `C = X B`.
    pub fn modal_coordinates(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        states * &self.basis
    }

    /// Row-wise inverse of [`Spectrum::modal_coordinates`]: `X = C B^T`.
    pub fn ambient_states(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        coeffs * self.basis.transpose()
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps all upper-triangle pivots in row order, annihilating each with a
/// plane rotation, until the off-diagonal Frobenius norm falls below
/// `JACOBI_OFF_TOL`. Returns unsorted eigenvalues and eigenvector columns.
fn jacobi_eigen(v: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = v.nrows();
    // Work on the symmetrized input so a tolerated asymmetry cannot bias
    // the rotations.
    let mut a = DMatrix::from_fn(n, n, |i, j| 0.5 * (v[(i, j)] + v[(j, i)]));
    let mut basis = DMatrix::<f64>::identity(n, n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < JACOBI_OFF_TOL {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle from the standard stable formulas.
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                // Pivot is analytically zero after the rotation.
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let bkp = basis[(k, p)];
                    let bkq = basis[(k, q)];
                    basis[(k, p)] = c * bkp - s * bkq;
                    basis[(k, q)] = s * bkp + c * bkq;
                }
            }
        }
    }

    let residual = off_diagonal_norm(&a);
    if residual > JACOBI_OFF_TOL {
        return Err(SalError::numeric(format!(
            "Jacobi iteration did not converge within {JACOBI_MAX_SWEEPS} sweeps: \
             off-diagonal norm {residual:.3e}"
        )));
    }
    Ok((a.diagonal().iter().copied().collect(), basis))
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Makes the largest-magnitude component of each column positive, breaking
/// the inherent sign ambiguity of eigenvectors deterministically.
fn fix_column_signs(basis: &mut DMatrix<f64>) {
    for j in 0..basis.ncols() {
        let mut lead = 0;
        let mut best = 0.0;
        for i in 0..basis.nrows() {
            let mag = basis[(i, j)].abs();
            if mag > best {
                best = mag;
                lead = i;
            }
        }
        if basis[(lead, j)] < 0.0 {
            for i in 0..basis.nrows() {
                basis[(i, j)] = -basis[(i, j)];
            }
        }
    }
}

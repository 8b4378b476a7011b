//! Shared fixtures for the benchmark targets.

use nalgebra::DMatrix;
use sal_core::dynamics::Configuration;
use sal_core::rng::Rng;
use sal_core::spectral::Spectrum;

/// Deterministic ensemble on the sphere for the flow benchmarks.
pub fn bench_configuration(n: usize, d: usize, beta: f64, seed: u64) -> Configuration {
    let mut rng = Rng::new(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(d)).collect();
    Configuration::from_rows(&rows, beta).expect("unit rows")
}

/// Random symmetric matrix with entries in [-2, 2].
pub fn bench_symmetric(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = Rng::new(seed);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = 4.0 * rng.uniform() - 2.0;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// Positive-dominant spectrum used across the benchmarks.
pub fn bench_spectrum() -> Spectrum {
    Spectrum::from_eigenvalues(&[1.5, 0.5, -0.5]).expect("valid eigenvalues")
}

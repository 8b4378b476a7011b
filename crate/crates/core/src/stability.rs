//! Local stability of pure-mode equilibria `x_i = s_i e_p`: analytic rates
//! for homogeneous and sign-split patterns, the sharpness-dependent
//! threshold, and an independent finite-difference Jacobian oracle.

use nalgebra::{Complex, DMatrix, Schur};

use crate::dynamics::{vector_field, Configuration};
use crate::error::{Result, SalError};
use crate::rng::Rng;
use crate::spectral::Spectrum;

/// Quantities within this margin of zero make a verdict marginal; the
/// stability criteria are strict inequalities.
pub const MARGINAL_TOL: f64 = 1e-12;

/// Sign assignment of the particles with the group counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignPattern {
    signs: Vec<i8>,
    n_plus: usize,
    n_minus: usize,
}

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.is_empty() {
            return Err(SalError::validation("sign pattern must be non-empty"));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(SalError::validation("signs must be +1 or -1"));
        }
        let n_plus = signs.iter().filter(|&&s| s == 1).count();
        let n_minus = signs.len() - n_plus;
        Ok(SignPattern {
            signs,
            n_plus,
            n_minus,
        })
    }

    /// Parses a pattern like `"+-++"`.
    pub fn parse(text: &str) -> Result<Self> {
        let signs: Result<Vec<i8>> = text
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(SalError::validation(format!(
                    "sign pattern may contain only '+' and '-', got '{other}'"
                ))),
            })
            .collect();
        SignPattern::new(signs?)
    }

    /// `n_plus` ones followed by `n_minus` minus-ones.
    pub fn split(n_plus: usize, n_minus: usize) -> Result<Self> {
        let mut signs = vec![1i8; n_plus];
        signs.extend(std::iter::repeat_n(-1i8, n_minus));
        SignPattern::new(signs)
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn n(&self) -> usize {
        self.signs.len()
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn is_constant(&self) -> bool {
        self.n_plus == 0 || self.n_minus == 0
    }

    /// Group imbalance `r = n_plus / n_minus`.
    pub fn ratio(&self) -> Result<f64> {
        if self.n_minus == 0 {
            return Err(SalError::validation(
                "ratio requires at least one particle in the minus group",
            ));
        }
        Ok(self.n_plus as f64 / self.n_minus as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Stable => write!(f, "stable"),
            Verdict::Unstable => write!(f, "unstable"),
            Verdict::Marginal => write!(f, "marginal"),
        }
    }
}

/// Verdict from a list of linearization rates: any positive rate is
/// unstable, any rate at zero (within [`MARGINAL_TOL`]) is marginal.
fn verdict_from_rates(rates: impl Iterator<Item = f64> + Clone) -> Verdict {
    if rates.clone().any(|r| r > MARGINAL_TOL) {
        Verdict::Unstable
    } else if rates.clone().any(|r| r.abs() <= MARGINAL_TOL) {
        Verdict::Marginal
    } else {
        Verdict::Stable
    }
}

/// Linear rates of one transverse mode at a homogeneous pure state.
#[derive(Debug, Clone, Copy)]
pub struct TransverseRates {
    pub mode: usize,
    /// Growth rate of the mean component, `lambda_k - lambda_p`.
    pub mean_rate: f64,
    /// Growth rate of the `n - 1` fluctuation components, `-lambda_p`.
    pub fluctuation_rate: f64,
}

#[derive(Debug, Clone)]
pub struct HomogeneousReport {
    pub mode_index: usize,
    pub verdict: Verdict,
    pub rates: Vec<TransverseRates>,
}

/// Stability of the homogeneous pure state `x_i = e_p`: stable iff
/// `lambda_p > 0` and `lambda_k < lambda_p` for all `k != p`.
pub fn homogeneous_stability(p: usize, lambdas: &[f64]) -> Result<HomogeneousReport> {
    if p >= lambdas.len() {
        return Err(SalError::validation(format!(
            "mode index {p} out of range for {} eigenvalues",
            lambdas.len()
        )));
    }
    let rates: Vec<TransverseRates> = (0..lambdas.len())
        .filter(|&k| k != p)
        .map(|k| TransverseRates {
            mode: k,
            mean_rate: lambdas[k] - lambdas[p],
            fluctuation_rate: -lambdas[p],
        })
        .collect();
    let verdict = verdict_from_rates(
        rates
            .iter()
            .flat_map(|r| [r.mean_rate, r.fluctuation_rate])
            .collect::<Vec<_>>()
            .into_iter(),
    );
    Ok(HomogeneousReport {
        mode_index: p,
        verdict,
        rates,
    })
}

/// The 2x2 mean block of one transverse mode at a sign-split state.
#[derive(Debug, Clone, Copy)]
pub struct TransverseBlock {
    pub mode: usize,
    /// Row-major entries of `B_k`.
    pub entries: [[f64; 2]; 2],
    pub trace: f64,
    pub det: f64,
    /// Real eigenvalues of `B_k` (the off-diagonal product is nonnegative,
    /// so the discriminant cannot be negative).
    pub eigenvalues: [f64; 2],
}

impl TransverseBlock {
    fn new(mode: usize, entries: [[f64; 2]; 2]) -> Self {
        let trace = entries[0][0] + entries[1][1];
        let det = entries[0][0] * entries[1][1] - entries[0][1] * entries[1][0];
        // Discriminant in the subtraction-free form (a - d)^2 + 4 b c.
        let diff = entries[0][0] - entries[1][1];
        let disc = (diff * diff + 4.0 * entries[0][1] * entries[1][0]).max(0.0);
        let half_gap = disc.sqrt() / 2.0;
        let mid = trace / 2.0;
        TransverseBlock {
            mode,
            entries,
            trace,
            det,
            eigenvalues: [mid - half_gap, mid + half_gap],
        }
    }
}

/// Full analytic description of a sign-split pure state's linearization.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub mode_index: usize,
    pub a_plus: f64,
    pub b_plus: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub blocks: Vec<TransverseBlock>,
    pub verdict: Verdict,
    pub stable: bool,
    /// Threshold `sigma(c_beta, r)`; transverse eigenvalues must stay below
    /// `lambda_p * sigma` for stability.
    pub threshold_sigma: f64,
    pub c_beta: f64,
}

/// Equilibrium attention weights and group rates of a sign-split state.
fn sign_split_constants(
    lambda_p: f64,
    beta: f64,
    n_plus: usize,
    n_minus: usize,
) -> (f64, f64, f64, f64, f64, f64) {
    let np = n_plus as f64;
    let nm = n_minus as f64;
    let e_plus = (beta * lambda_p).exp();
    let e_minus = (-beta * lambda_p).exp();
    let denom_plus = np * e_plus + nm * e_minus;
    let denom_minus = nm * e_plus + np * e_minus;
    let a_plus = e_plus / denom_plus;
    let b_plus = e_minus / denom_plus;
    let a_minus = e_plus / denom_minus;
    let b_minus = e_minus / denom_minus;
    let gamma_plus = lambda_p * (np * a_plus - nm * b_plus);
    let gamma_minus = lambda_p * (nm * a_minus - np * b_minus);
    (a_plus, b_plus, a_minus, b_minus, gamma_plus, gamma_minus)
}

/// Analytic stability report for the sign-split pure state `x_i = s_i e_p`.
///
/// Stable iff `gamma_+ > 0`, `gamma_- > 0`, and every transverse block has
/// `tr(B_k) < 0` and `det(B_k) > 0`; all inequalities strict, with values
/// inside [`MARGINAL_TOL`] of zero reported as marginal.
pub fn sign_split_report(
    p: usize,
    lambdas: &[f64],
    beta: f64,
    pattern: &SignPattern,
) -> Result<StabilityReport> {
    if p >= lambdas.len() {
        return Err(SalError::validation(format!(
            "mode index {p} out of range for {} eigenvalues",
            lambdas.len()
        )));
    }
    if pattern.is_constant() {
        return Err(SalError::validation(
            "sign pattern must contain both signs; use the homogeneous analysis otherwise",
        ));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(SalError::validation(format!(
            "sharpness beta must be positive, got {beta}"
        )));
    }
    let lambda_p = lambdas[p];
    let (np, nm) = (pattern.n_plus(), pattern.n_minus());
    let (a_plus, b_plus, a_minus, b_minus, gamma_plus, gamma_minus) =
        sign_split_constants(lambda_p, beta, np, nm);

    let blocks: Vec<TransverseBlock> = (0..lambdas.len())
        .filter(|&k| k != p)
        .map(|k| {
            let lk = lambdas[k];
            TransverseBlock::new(
                k,
                [
                    [
                        lk * np as f64 * a_plus - gamma_plus,
                        lk * nm as f64 * b_plus,
                    ],
                    [
                        lk * np as f64 * b_minus,
                        lk * nm as f64 * a_minus - gamma_minus,
                    ],
                ],
            )
        })
        .collect();

    // Stability quantities that must all be strictly positive.
    let quantities: Vec<f64> = [gamma_plus, gamma_minus]
        .into_iter()
        .chain(blocks.iter().flat_map(|b| [-b.trace, b.det]))
        .collect();
    let verdict = if quantities.iter().any(|&q| q < -MARGINAL_TOL) {
        Verdict::Unstable
    } else if quantities.iter().any(|&q| q.abs() <= MARGINAL_TOL) {
        Verdict::Marginal
    } else {
        Verdict::Stable
    };

    let r = pattern.ratio()?;
    Ok(StabilityReport {
        mode_index: p,
        a_plus,
        b_plus,
        a_minus,
        b_minus,
        gamma_plus,
        gamma_minus,
        blocks,
        verdict,
        stable: verdict == Verdict::Stable,
        threshold_sigma: sigma_from_exponent(beta * lambda_p, r),
        c_beta: (2.0 * beta * lambda_p).exp(),
    })
}

/// Threshold `sigma(c, r) = (c - r)(c r - 1) / (r (c^2 - 1))`.
pub fn sigma_threshold(c_beta: f64, r: f64) -> f64 {
    (c_beta - r) * (c_beta * r - 1.0) / (r * (c_beta * c_beta - 1.0))
}

/// Same threshold evaluated from the exponent `beta * lambda_p`, written in
/// terms of `expm1(2 beta lambda_p)` so small exponents keep full accuracy
/// and `r = 1` collapses exactly to `tanh(beta lambda_p)`.
fn sigma_from_exponent(beta_lambda: f64, r: f64) -> f64 {
    let cm1 = (2.0 * beta_lambda).exp_m1(); // c - 1
    let c = cm1 + 1.0;
    let numerator = (cm1 + (1.0 - r)) * (r * cm1 + (r - 1.0));
    let denominator = r * cm1 * (c + 1.0);
    numerator / denominator
}

/// One sample of the stability threshold curve.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPoint {
    pub beta: f64,
    /// Upper bound `lambda_p * sigma(c_beta, r)` on transverse eigenvalues.
    pub sigma_bound: f64,
    pub is_endpoint: bool,
    /// Set when the formula has a pole at this grid point (`beta = 0` with
    /// `r != 1`) and the value is the one-sided limit.
    pub is_pole_limit: bool,
}

#[derive(Debug, Clone)]
pub struct ThresholdCurve {
    pub lambda_p: f64,
    pub r: f64,
    /// Sharpness at which the stability window first opens,
    /// `|ln r| / (2 |lambda_p|)`; the threshold vanishes there.
    pub beta_star: f64,
    pub points: Vec<ThresholdPoint>,
}

/// Samples `beta -> lambda_p * sigma(c_beta, r)` over a sharpness grid.
pub fn threshold_curve(lambda_p: f64, r: f64, beta_grid: &[f64]) -> Result<ThresholdCurve> {
    if lambda_p == 0.0 || !lambda_p.is_finite() {
        return Err(SalError::validation(
            "threshold curve requires a nonzero selected eigenvalue",
        ));
    }
    if r.is_nan() || r <= 0.0 || !r.is_finite() {
        return Err(SalError::validation(format!(
            "group ratio must be positive, got {r}"
        )));
    }
    let beta_star = r.ln().abs() / (2.0 * lambda_p.abs());
    let points = beta_grid
        .iter()
        .map(|&beta| {
            if beta.is_nan() || beta < 0.0 {
                return Err(SalError::validation(format!(
                    "sharpness grid must be nonnegative, got {beta}"
                )));
            }
            let is_endpoint = (beta - beta_star).abs() <= 1e-12;
            if beta == 0.0 {
                // c_beta = 1: continuous limit 0 for r = 1, otherwise a pole
                // approached one-sidedly from the admissible side.
                let point = if r == 1.0 {
                    ThresholdPoint {
                        beta,
                        sigma_bound: 0.0,
                        is_endpoint,
                        is_pole_limit: false,
                    }
                } else {
                    ThresholdPoint {
                        beta,
                        sigma_bound: f64::NEG_INFINITY,
                        is_endpoint,
                        is_pole_limit: true,
                    }
                };
                return Ok(point);
            }
            Ok(ThresholdPoint {
                beta,
                sigma_bound: lambda_p * sigma_from_exponent(beta * lambda_p, r),
                is_endpoint,
                is_pole_limit: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdCurve {
        lambda_p,
        r,
        beta_star,
        points,
    })
}

/// Eigenvalue multiset of the linearization at a pure-mode equilibrium.
///
/// For a nonconstant pattern each transverse mode `k != p` contributes
/// `-gamma_+` with multiplicity `n_+ - 1`, `-gamma_-` with multiplicity
/// `n_- - 1`, and the two eigenvalues of `B_k`. For a constant pattern it
/// contributes `lambda_k - lambda_p` once and `-lambda_p` with multiplicity
/// `n - 1`. Returned sorted ascending.
pub fn equilibrium_spectrum(
    p: usize,
    lambdas: &[f64],
    beta: f64,
    pattern: &SignPattern,
) -> Result<Vec<f64>> {
    if p >= lambdas.len() {
        return Err(SalError::validation(format!(
            "mode index {p} out of range for {} eigenvalues",
            lambdas.len()
        )));
    }
    let n = pattern.n();
    let mut spectrum = Vec::with_capacity((lambdas.len() - 1) * n);
    if pattern.is_constant() {
        for (k, &lk) in lambdas.iter().enumerate() {
            if k == p {
                continue;
            }
            spectrum.push(lk - lambdas[p]);
            spectrum.extend(std::iter::repeat_n(-lambdas[p], n - 1));
        }
    } else {
        let report = sign_split_report(p, lambdas, beta, pattern)?;
        for block in &report.blocks {
            spectrum.extend(std::iter::repeat_n(
                -report.gamma_plus,
                pattern.n_plus() - 1,
            ));
            spectrum.extend(std::iter::repeat_n(
                -report.gamma_minus,
                pattern.n_minus() - 1,
            ));
            spectrum.extend_from_slice(&block.eigenvalues);
        }
    }
    spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(spectrum)
}

/// Recognized pure-mode equilibrium: the common mode and the sign pattern.
#[derive(Debug, Clone)]
pub struct PureModeState {
    pub mode: usize,
    pub pattern: SignPattern,
}

/// Identifies `x_i = s_i e_p` structure in a configuration, within `tol`
/// measured in modal coordinates.
pub fn detect_pure_mode(cfg: &Configuration, s: &Spectrum, tol: f64) -> Result<PureModeState> {
    let coords = s.modal_coordinates(cfg.states());
    let d = s.dim();
    let mut mode = None;
    let mut signs = Vec::with_capacity(cfg.n());
    for i in 0..cfg.n() {
        let mut lead = 0;
        for k in 0..d {
            if coords[(i, k)].abs() > coords[(i, lead)].abs() {
                lead = k;
            }
        }
        if (coords[(i, lead)].abs() - 1.0).abs() > tol {
            return Err(SalError::validation(format!(
                "particle {i} is not on a pure mode: |c| = {}",
                coords[(i, lead)].abs()
            )));
        }
        for k in 0..d {
            if k != lead && coords[(i, k)].abs() > tol {
                return Err(SalError::validation(format!(
                    "particle {i} has residual mass on mode {k}"
                )));
            }
        }
        match mode {
            None => mode = Some(lead),
            Some(m) if m == lead => {}
            Some(m) => {
                return Err(SalError::validation(format!(
                    "particles occupy different modes {m} and {lead}"
                )))
            }
        }
        signs.push(if coords[(i, lead)] > 0.0 { 1 } else { -1 });
    }
    Ok(PureModeState {
        mode: mode.expect("configuration is non-empty"),
        pattern: SignPattern::new(signs)?,
    })
}

/// Eigenvalues of the finite-difference Jacobian of the flow restricted to
/// the tangent space at a pure-mode equilibrium.
///
/// Central differences of step `h` are taken along every tangent direction
/// `e_k` (`k != p`) at every particle, the response is projected back onto
/// the tangent coordinates, and the resulting `n(d-1)` square matrix is
/// diagonalized. Matches the analytic spectrum within `max(1e-5, 10 h^2)`.
pub fn jacobian_oracle(cfg: &Configuration, s: &Spectrum, h: f64) -> Result<Vec<Complex<f64>>> {
    if !(1e-7..=1e-4).contains(&h) {
        return Err(SalError::validation(format!(
            "finite-difference step must lie in [1e-7, 1e-4], got {h}"
        )));
    }
    let state = detect_pure_mode(cfg, s, 1e-10)?;
    let p = state.mode;
    let n = cfg.n();
    let d = s.dim();
    if d < 2 {
        return Ok(Vec::new());
    }
    let transverse: Vec<usize> = (0..d).filter(|&k| k != p).collect();
    let size = n * transverse.len();
    let mut jac = DMatrix::<f64>::zeros(size, size);

    let base = cfg.states().clone();
    let probe = |j: usize, l: usize, step: f64| -> Result<DMatrix<f64>> {
        let mut states = base.clone();
        for k in 0..d {
            states[(j, k)] += step * s.basis()[(k, l)];
        }
        let norm = states.row(j).norm();
        {
            let mut row = states.row_mut(j);
            row /= norm;
        }
        let perturbed = Configuration::new(states, cfg.beta())?;
        vector_field(&perturbed, s)
    };

    for (col_block, &l) in transverse.iter().enumerate() {
        for j in 0..n {
            let col = j * transverse.len() + col_block;
            let plus = probe(j, l, h)?;
            let minus = probe(j, l, -h)?;
            let diff = (plus - minus) / (2.0 * h);
            // Project the response onto the tangent coordinates: modal
            // components of every row, dropping the e_p component.
            let modal = diff * s.basis();
            for (row_block, &k) in transverse.iter().enumerate() {
                for i in 0..n {
                    jac[(i * transverse.len() + row_block, col)] = modal[(i, k)];
                }
            }
        }
    }

    bounded_eigenvalues(jac)
}

/// Eigenvalues through a Schur decomposition with a bounded iteration count.
///
/// These Jacobians carry eigenvalues of high multiplicity, which stalls the
/// QR deflation test at machine epsilon. The decomposition is retried over a
/// ladder of deflation tolerances; even the loosest rung perturbs the
/// eigenvalues by orders of magnitude less than the oracle's own
/// finite-difference error. A deterministic random rotation (an exact
/// similarity) is the last resort.
fn bounded_eigenvalues(jac: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let size = jac.nrows();
    if size == 0 {
        return Ok(Vec::new());
    }
    let max_iterations = 2000 * size.max(25);
    let ladder = [f64::EPSILON, 1e-13, 1e-11, 1e-9];
    for eps in ladder {
        if let Some(schur) = Schur::try_new(jac.clone(), eps, max_iterations) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    let mut rng = Rng::new(0x5ca1_ab1e);
    for _ in 0..4 {
        let rotation = random_orthogonal(size, &mut rng);
        let conjugated = rotation.transpose() * &jac * &rotation;
        if let Some(schur) = Schur::try_new(conjugated, 1e-11, max_iterations) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(SalError::numeric(
        "eigenvalue iteration did not converge for the finite-difference Jacobian",
    ))
}

fn random_orthogonal(size: usize, rng: &mut Rng) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(size, size, |_, _| {
        let (a, _) = rng.normal_pair();
        a
    });
    gaussian.qr().q()
}

/// Greatest deviation when matching an oracle eigenvalue multiset against an
/// analytic (real) one; `None` when the counts differ.
pub fn spectra_match_error(oracle: &[Complex<f64>], analytic: &[f64]) -> Option<f64> {
    if oracle.len() != analytic.len() {
        return None;
    }
    let mut oracle_sorted: Vec<Complex<f64>> = oracle.to_vec();
    oracle_sorted.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let mut analytic_sorted = analytic.to_vec();
    analytic_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut worst = 0.0f64;
    for (o, a) in oracle_sorted.iter().zip(&analytic_sorted) {
        worst = worst.max((o.re - a).abs()).max(o.im.abs());
    }
    Some(worst)
}

/// Configuration of the pure-mode equilibrium `x_i = s_i e_p` in ambient
/// coordinates.
pub fn pure_mode_configuration(
    s: &Spectrum,
    p: usize,
    pattern: &SignPattern,
    beta: f64,
) -> Result<Configuration> {
    if p >= s.dim() {
        return Err(SalError::validation(format!(
            "mode index {p} out of range for dimension {}",
            s.dim()
        )));
    }
    let rows: Vec<Vec<f64>> = pattern
        .signs()
        .iter()
        .map(|&sgn| {
            (0..s.dim())
                .map(|k| f64::from(sgn) * s.basis()[(k, p)])
                .collect()
        })
        .collect();
    Configuration::from_rows(&rows, beta)
}

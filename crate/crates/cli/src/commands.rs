use std::path::Path;

use sal_core::dynamics::{integrate, Configuration};
use sal_core::error::{Result, SalError};
use sal_core::experiments::{run_experiment, sample_initial, ExperimentSpec};
use sal_core::io::{
    read_states_csv, write_energy_csv, write_masses_csv, write_observables_csv,
    write_threshold_csv, write_trajectory_csv, InitialSpec, SimulateConfig,
};
use sal_core::reduced::{
    bipolar_limit, consensus_closed_form, consensus_limit, integrate_bipolar, integrate_consensus,
};
use sal_core::stability::{homogeneous_stability, sign_split_report, threshold_curve, SignPattern};
use sal_core::verify;

use crate::{ExperimentArgs, ReducedArgs, SimulateArgs, StabilityArgs, ThresholdArgs, VerifyArgs};

/// Seed precedence: command-line flag, then SAL_SEED, then the config file.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Ok(text) = std::env::var("SAL_SEED") {
        return text.trim().parse::<u64>().map_err(|e| {
            SalError::validation(format!("SAL_SEED must be an unsigned integer: {e}"))
        });
    }
    Ok(config.unwrap_or(0))
}

pub fn simulate(args: SimulateArgs) -> Result<i32> {
    let mut config = SimulateConfig::from_file(&args.config)?;
    if let Some(beta) = args.beta {
        config.beta = beta;
    }
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    if let Some(t_end) = args.t_end {
        config.t_end = t_end;
    }
    if let Some(every) = args.record_every {
        config.record_every = every;
    }

    let spectrum = config.v.to_spectrum()?;
    let states = match &config.initial {
        InitialSpec::Inline { states } => states.clone(),
        InitialSpec::File { states_file } => read_states_csv(states_file)?,
        InitialSpec::Sampled {
            sampler,
            n,
            delta,
            seed,
        } => {
            let seed = resolve_seed(args.seed, seed.or(config.seed))?;
            let coeffs = sample_initial(*sampler, *n, spectrum.dim(), delta.unwrap_or(0.1), seed)?;
            let ambient = spectrum.ambient_states(&coeffs);
            (0..ambient.nrows())
                .map(|i| ambient.row(i).iter().copied().collect())
                .collect()
        }
    };
    let cfg = Configuration::from_rows(&states, config.beta)?;
    let record = integrate(
        &cfg,
        &spectrum,
        config.t_end,
        config.dt,
        config.record_every,
    )?;

    write_trajectory_csv(&args.out_dir.join("trajectory.csv"), &record)?;
    write_energy_csv(&args.out_dir.join("energy.csv"), &record)?;
    write_observables_csv(&args.out_dir.join("observables.csv"), &record, &spectrum)?;
    write_masses_csv(&args.out_dir.join("masses.csv"), &record, &spectrum)?;
    println!(
        "integrated n = {}, d = {} to t = {} ({} snapshots) -> {}",
        cfg.n(),
        cfg.d(),
        record.times.last().unwrap(),
        record.len(),
        args.out_dir.display()
    );
    Ok(0)
}

fn check_simplex_arg(p0: &[f64]) -> Result<()> {
    let sum: f64 = p0.iter().sum();
    if p0.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-10 {
        return Err(SalError::validation(format!(
            "--p0 must be a probability vector, got {p0:?} (sum {sum})"
        )));
    }
    Ok(())
}

pub fn reduced(args: ReducedArgs) -> Result<i32> {
    check_simplex_arg(&args.p0)?;
    if args.p0.len() != args.lambdas.len() {
        return Err(SalError::validation(
            "--p0 and --lambdas must have equal length",
        ));
    }
    let d = args.lambdas.len();
    match args.manifold.as_str() {
        "consensus" => {
            let series = integrate_consensus(&args.p0, &args.lambdas, args.t_end, args.dt)?;
            let path = args.out_dir.join("reduced_consensus.csv");
            write_simplex_csv(&path, &series, d, None)?;
            let (t_last, p_last) = series.last().unwrap();
            let exact = consensus_closed_form(&args.p0, &args.lambdas, *t_last)?;
            let limit = consensus_limit(&args.p0, &args.lambdas)?;
            let gap = p_last
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            println!("terminal t = {t_last}");
            println!("integrated p = {p_last:?}");
            println!("closed-form p = {exact:?} (max gap {gap:.3e})");
            println!("predicted limit = {limit:?}");
        }
        "bipolar" => {
            let series =
                integrate_bipolar(&args.p0, &args.lambdas, args.beta, args.t_end, args.dt)?;
            let path = args.out_dir.join("reduced_bipolar.csv");
            write_simplex_csv(&path, &series, d, Some(&args.lambdas))?;
            let (t_last, p_last) = series.last().unwrap();
            let limit = bipolar_limit(&args.p0, &args.lambdas, args.beta)?;
            let m_last: f64 = p_last.iter().zip(&args.lambdas).map(|(p, l)| p * l).sum();
            println!("terminal t = {t_last}");
            println!("integrated p = {p_last:?}, M = {m_last}");
            println!(
                "predicted limit p = {:?}, M -> {}",
                limit.p_infinity, limit.m_infinity
            );
        }
        other => {
            return Err(SalError::validation(format!(
                "unknown manifold '{other}'; use consensus or bipolar"
            )))
        }
    }
    Ok(0)
}

fn write_simplex_csv(
    path: &Path,
    series: &[(f64, Vec<f64>)],
    d: usize,
    lambdas: Option<&[f64]>,
) -> Result<()> {
    use std::io::Write;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                SalError::validation(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let file = std::fs::File::create(path)
        .map_err(|e| SalError::validation(format!("cannot create {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let err = |e: std::io::Error| SalError::validation(format!("write failed: {e}"));
    write!(out, "t").map_err(err)?;
    for k in 1..=d {
        write!(out, ",p_{k}").map_err(err)?;
    }
    if lambdas.is_some() {
        write!(out, ",M").map_err(err)?;
    }
    writeln!(out).map_err(err)?;
    for (t, p) in series {
        write!(out, "{t}").map_err(err)?;
        for v in p {
            write!(out, ",{v}").map_err(err)?;
        }
        if let Some(lambdas) = lambdas {
            let m: f64 = p.iter().zip(lambdas).map(|(p, l)| p * l).sum();
            write!(out, ",{m}").map_err(err)?;
        }
        writeln!(out).map_err(err)?;
    }
    out.flush().map_err(err)
}

fn print_homogeneous(p_display: usize, lambdas: &[f64]) -> Result<()> {
    let report = homogeneous_stability(p_display - 1, lambdas)?;
    println!(
        "state: homogeneous pure mode p = {p_display} (lambda_p = {})",
        lambdas[p_display - 1]
    );
    for rate in &report.rates {
        println!(
            "mode k = {}: mean rate {} fluctuation rate {}",
            rate.mode + 1,
            rate.mean_rate,
            rate.fluctuation_rate
        );
    }
    println!("verdict: {}", report.verdict);
    Ok(())
}

pub fn stability(args: StabilityArgs) -> Result<i32> {
    // The report path needs eigenvalues; a pure curve export can run from
    // --lambda-p alone.
    let mut ratio_from_pattern = None;
    if let Some(lambdas) = &args.lambdas {
        if args.p == 0 || args.p > lambdas.len() {
            return Err(SalError::validation(format!(
                "--p must be a 1-based mode index in 1..={}",
                lambdas.len()
            )));
        }
        let p = args.p - 1;
        let lambda_p = lambdas[p];
        match &args.pattern {
            Some(text) => {
                let pattern = SignPattern::parse(text)?;
                if pattern.is_constant() {
                    return Err(SalError::validation(
                        "sign pattern must contain both signs; omit --pattern for the \
                         homogeneous analysis",
                    ));
                } else {
                    let report = sign_split_report(p, lambdas, args.beta, &pattern)?;
                    println!(
                        "state: sign-split pure mode p = {} (lambda_p = {lambda_p}), \
                         n+ = {}, n- = {}",
                        args.p,
                        pattern.n_plus(),
                        pattern.n_minus()
                    );
                    println!(
                        "a+ = {}  b+ = {}  a- = {}  b- = {}",
                        report.a_plus, report.b_plus, report.a_minus, report.b_minus
                    );
                    println!(
                        "gamma+ = {}  gamma- = {}",
                        report.gamma_plus, report.gamma_minus
                    );
                    println!(
                        "c_beta = {}  sigma = {}  bound lambda_p*sigma = {}",
                        report.c_beta,
                        report.threshold_sigma,
                        lambda_p * report.threshold_sigma
                    );
                    for block in &report.blocks {
                        println!(
                            "mode k = {}: tr = {} det = {} eigenvalues = [{}, {}]",
                            block.mode + 1,
                            block.trace,
                            block.det,
                            block.eigenvalues[0],
                            block.eigenvalues[1]
                        );
                    }
                    println!("verdict: {}", report.verdict);
                    ratio_from_pattern = Some(pattern.ratio()?);
                }
            }
            None => print_homogeneous(args.p, lambdas)?,
        }
    } else if !args.curve {
        return Err(SalError::validation(
            "nothing to do: provide --lambdas for a report or --curve for the threshold export",
        ));
    }

    if args.curve {
        let lambda_p = match (args.lambda_p, &args.lambdas) {
            (Some(value), _) => value,
            (None, Some(lambdas)) => lambdas[args.p - 1],
            (None, None) => {
                return Err(SalError::validation(
                    "--curve needs --lambda-p or --lambdas to fix the selected eigenvalue",
                ))
            }
        };
        let r = match args.r.or(ratio_from_pattern) {
            Some(r) => r,
            None => {
                return Err(SalError::validation(
                    "--curve needs --r or a nonconstant --pattern to fix the group ratio",
                ))
            }
        };
        if r.is_nan() || r <= 0.0 {
            return Err(SalError::validation(format!(
                "group ratio must be positive, got {r}"
            )));
        }
        let grid = linspace(args.beta_min, args.beta_max, args.points)?;
        let beta_star = r.ln().abs() / (2.0 * lambda_p.abs());
        let curve = threshold_curve(lambda_p, r, &with_endpoint(grid, beta_star))?;
        let path = args.out_dir.join("threshold.csv");
        write_threshold_csv(&path, &curve)?;
        println!(
            "threshold curve written to {} (beta_star = {})",
            path.display(),
            curve.beta_star
        );
    }
    Ok(0)
}

fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || hi <= lo || lo.is_nan() || hi.is_nan() {
        return Err(SalError::validation(
            "grid needs at least two points and beta_max > beta_min",
        ));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + i as f64 * step).collect())
}

/// Inserts the window endpoint into the grid (sorted) when it lies inside
/// the range, so the exported curve carries its marker row.
fn with_endpoint(mut grid: Vec<f64>, beta_star: f64) -> Vec<f64> {
    let lo = *grid.first().unwrap();
    let hi = *grid.last().unwrap();
    if beta_star >= lo && beta_star <= hi && grid.iter().all(|&b| (b - beta_star).abs() > 1e-12) {
        grid.push(beta_star);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    grid
}

pub fn verify(args: VerifyArgs) -> Result<i32> {
    let checks = match args.suite.to_lowercase().as_str() {
        "consensus-closed-form" => {
            verify::consensus_closed_form_suite(args.trials.unwrap_or(20), args.seed, 10.0, 5e-3)?
        }
        "bipolar-m" => verify::bipolar_suite(args.trials.unwrap_or(12), args.seed, 20.0, 2e-3)?,
        "cone" => verify::cone_suite(
            args.n,
            args.beta,
            args.delta,
            args.trials.unwrap_or(100),
            args.seed,
            &args.lambdas,
            args.t_end,
            args.dt,
            args.out_dir.as_deref(),
        )?,
        "rho-monotone" => verify::rho_monotone_suite(args.trials.unwrap_or(500), args.seed)?,
        "spectrum-oracle" => verify::spectrum_oracle_suite(args.trials.unwrap_or(50), args.seed)?,
        other => {
            return Err(SalError::validation(format!(
                "unknown suite '{other}'; available: consensus-closed-form, bipolar-M, \
                 cone, rho-monotone, spectrum-oracle"
            )))
        }
    };
    println!("suite={}", args.suite);
    let mut failed = 0usize;
    for check in &checks {
        let status = if check.pass { "pass" } else { "fail" };
        if !check.pass {
            failed += 1;
        }
        println!(
            "check={} status={status} detail=\"{}\"",
            check.name, check.detail
        );
    }
    let verdict = if failed == 0 { "pass" } else { "fail" };
    println!("verdict={verdict} checks={} failed={failed}", checks.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

pub fn experiment(args: ExperimentArgs) -> Result<i32> {
    let mut spec = ExperimentSpec::from_file(&args.spec)?;
    spec.seed = resolve_seed(args.seed, Some(spec.seed))?;
    let panels = run_experiment(&spec, Some(&args.out_dir))?;
    for panel in &panels {
        println!(
            "beta = {}: {} trials recorded, {} aborted, outputs in {}",
            panel.beta,
            panel.summary.trials,
            panel.aborted.len(),
            args.out_dir.display()
        );
        for (trial, reason) in &panel.aborted {
            eprintln!("trial {trial} aborted: {reason}");
        }
    }
    let aborted: usize = panels.iter().map(|p| p.aborted.len()).sum();
    Ok(if aborted == 0 { 0 } else { 3 })
}

pub fn threshold(args: ThresholdArgs) -> Result<i32> {
    let grid = linspace(args.beta_min, args.beta_max, args.points)?;
    for &r in &args.r {
        if r.is_nan() || r <= 0.0 {
            return Err(SalError::validation(format!(
                "group ratio must be positive, got {r}"
            )));
        }
        let beta_star = r.ln().abs() / (2.0 * args.lambda_p.abs());
        let curve = threshold_curve(args.lambda_p, r, &with_endpoint(grid.clone(), beta_star))?;
        let tag = format!("{r}").replace('.', "p");
        let path = args.out_dir.join(format!("threshold_r{tag}.csv"));
        write_threshold_csv(&path, &curve)?;
        println!(
            "r = {r}: beta_star = {}, curve written to {}",
            curve.beta_star,
            path.display()
        );
    }
    Ok(0)
}

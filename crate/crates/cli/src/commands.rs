use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use hte_core::adversarial::{
    fixed_adversary, indistinguishability_check, random_adversary, sampled_holder_excess,
    AdversarialInstance,
};
use hte_core::bench::{
    diagonal_curve, fit_rate, query_grid, read_dataset_csv, resolve, run_experiment, run_resolved,
    write_dataset_csv, write_plot_csv, write_results_csv, write_summary_csv, ExperimentResult,
    Tuning,
};
use hte_core::fixed_design::{interpolation_weights, weight_bounds_check, GridDesign};
use hte_core::functions::FunctionSpec;
use hte_core::holder::counterexample_intervals;
use hte_core::synth::{sample_scenario, DensitySpec, DesignSpec, ScenarioConfig};
use hte_core::theory::{
    calibrate_constant, fixed_rate_exponent, random_rate_exponent, verify_minimal_inequality,
    Density1d,
};
use hte_core::{HolderSpec, HteError, ObservationSet, RngSeed, Stream};
use rand::Rng;
use serde::Serialize;

use crate::config::{config_error, estimator_list, ExperimentArgs};
use crate::CliError;

fn runtime(e: HteError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| io_error(&path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_error(&dir.join(name), e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&dir.join(name), e))
}

pub fn simulate(args: &ExperimentArgs, out: &Path) -> Result<(), CliError> {
    let exp = args.build()?;
    let data = sample_scenario(&exp.scenario).map_err(runtime)?;
    write_dataset_csv(create(out, "dataset.csv")?, &data).map_err(runtime)?;
    write_json(out, "scenario.json", &exp.scenario)?;
    println!(
        "wrote {} control and {} treatment rows to {}",
        data.control().len(),
        data.treatment().len(),
        out.join("dataset.csv").display()
    );
    Ok(())
}

/// Scenario used only for its noise level, `κ` and design when estimating on
/// a data file without a scenario.
fn scenario_for_data(data: &ObservationSet, sigma: f64, kappa: f64) -> ScenarioConfig {
    ScenarioConfig {
        design: DesignSpec::Random {
            control: DensitySpec::Uniform,
            treatment: DensitySpec::Uniform,
            n_treatment: Some(data.treatment().len()),
        },
        mu0: FunctionSpec::Zero,
        tau: FunctionSpec::Zero,
        sigma,
        n: data.control().len(),
        d: data.dimension(),
        kappa,
        seed: RngSeed(0),
    }
}

pub fn estimate(
    data_path: &Path,
    args: &ExperimentArgs,
    sigma: Option<f64>,
    estimators: Option<&str>,
    grid: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let file = File::open(data_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", data_path.display())))?;
    let data = read_dataset_csv(file)
        .map_err(|e| CliError::Config(format!("{}: {e}", data_path.display())))?;
    let (scenario, tuning, listed) = if args.scenario.is_some() {
        let mut exp = args.build()?;
        if let Some(s) = sigma {
            exp.scenario.sigma = s;
        }
        (exp.scenario, exp.tuning, exp.estimators)
    } else {
        let sigma = sigma.unwrap_or(1.0);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(CliError::Config(format!(
                "--sigma must be >= 0, got {sigma}"
            )));
        }
        if !(args.kappa >= 1.0) {
            return Err(CliError::Config(format!(
                "--kappa must be >= 1, got {}",
                args.kappa
            )));
        }
        let tuning = args.tuning.apply(Tuning::default())?;
        (scenario_for_data(&data, sigma, args.kappa), tuning, None)
    };
    if scenario.d != data.dimension() {
        return Err(CliError::Config(format!(
            "scenario has d = {}, data has {} covariates",
            scenario.d,
            data.dimension()
        )));
    }
    let specs = estimator_list(estimators, listed.as_deref(), "selected")?;
    let queries = query_grid(data.dimension(), grid);
    let mut columns = Vec::with_capacity(specs.len());
    for spec in &specs {
        let resolved = resolve(spec, &tuning, &scenario, &data).map_err(config_error)?;
        let est = run_resolved(&resolved, &scenario, &data, &queries).map_err(runtime)?;
        println!("{} {}", spec.name(), resolved.describe());
        columns.push(est);
    }
    let path = out.join("estimates.csv");
    let mut w = create(out, "estimates.csv")?;
    let mut header: Vec<String> = (1..=data.dimension()).map(|j| format!("x_{j}")).collect();
    header.extend(specs.iter().map(|s| s.name().to_string()));
    let mut text = header.join(",");
    text.push('\n');
    for (i, q) in queries.iter().enumerate() {
        let mut row: Vec<String> = q.coords().iter().map(|v| v.to_string()).collect();
        row.extend(columns.iter().map(|c| c[i].to_string()));
        text.push_str(&row.join(","));
        text.push('\n');
    }
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&path, e))?;
    Ok(())
}

fn default_estimators(scenario: &ScenarioConfig) -> &'static str {
    match scenario.design {
        DesignSpec::Grid { .. } => "fixed",
        DesignSpec::Random { .. } => "selected,full,knn,kernel",
    }
}

fn print_summary(results: &[ExperimentResult]) {
    println!(
        "{:<10} {:>12} {:>12} {:>6}",
        "estimator", "rmse", "l1_error", "reps"
    );
    for r in results {
        println!(
            "{:<10} {:>12.6} {:>12.6} {:>6}",
            r.estimator, r.rmse, r.l1_error, r.replications
        );
    }
}

pub fn benchmark(
    args: &ExperimentArgs,
    reps: Option<usize>,
    estimators: Option<&str>,
    grid: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let exp = args.build()?;
    let specs = estimator_list(
        estimators,
        exp.estimators.as_deref(),
        default_estimators(&exp.scenario),
    )?;
    let reps = reps.or(exp.replications).unwrap_or(100);
    if reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    let probe = sample_scenario(&exp.scenario).map_err(runtime)?;
    for spec in &specs {
        resolve(spec, &exp.tuning, &exp.scenario, &probe).map_err(config_error)?;
    }
    let results =
        run_experiment(&exp.scenario, &specs, &exp.tuning, reps, grid).map_err(runtime)?;
    write_results_csv(create(out, "results.csv")?, &results).map_err(runtime)?;
    write_summary_csv(create(out, "summary.csv")?, &results).map_err(runtime)?;
    let mut truth_written = false;
    for spec in &specs {
        let (s, est, truth) =
            diagonal_curve(&exp.scenario, spec, &exp.tuning, 0).map_err(runtime)?;
        let rows: Vec<(f64, f64)> = s.iter().copied().zip(est).collect();
        write_plot_csv(
            create(out, &format!("curve_{}.csv", spec.name()))?,
            ["s", "tau_hat"],
            &rows,
        )
        .map_err(runtime)?;
        if !truth_written {
            let rows: Vec<(f64, f64)> = s.iter().copied().zip(truth).collect();
            write_plot_csv(create(out, "curve_truth.csv")?, ["s", "tau"], &rows)
                .map_err(runtime)?;
            truth_written = true;
        }
    }
    write_json(out, "scenario.json", &exp.scenario)?;
    print_summary(&results);
    Ok(())
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    let r = (n as f64).powf(1.0 / d as f64).round() as usize;
    (r.saturating_sub(1)..=r + 1).find(|&m| m > 0 && m.checked_pow(d as u32) == Some(n))
}

/// The base scenario at control size `n`. Grid designs keep `m‖Δ‖_∞` fixed,
/// and a comb with one cell per grid node keeps that alignment.
fn scenario_at(base: &ScenarioConfig, n: usize) -> Result<ScenarioConfig, CliError> {
    let mut sc = base.clone();
    sc.n = n;
    if let DesignSpec::Grid { m, shift } = &base.design {
        let m2 = integer_root(n, base.d).ok_or_else(|| {
            CliError::Config(format!("n = {n} is not a perfect {}-th power", base.d))
        })?;
        let ratio = m2 as f64 / *m as f64;
        sc.design = DesignSpec::Grid {
            m: m2,
            shift: shift.iter().map(|s| s / ratio).collect(),
        };
        if let FunctionSpec::Comb { cells, .. } = &mut sc.mu0 {
            if *cells == *m {
                *cells = m2;
            }
        }
    }
    sc.validate().map_err(config_error)?;
    Ok(sc)
}

/// Slope of the reference rate in `n` at fixed `σ` and fixed `m‖Δ‖_∞`.
fn reference_exponent(sc: &ScenarioConfig, tuning: &Tuning) -> Option<f64> {
    let c = if sc.sigma > 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    };
    let (bm, bt) = (tuning.beta_mu, tuning.beta_tau);
    let e = match &sc.design {
        DesignSpec::Random { .. } => random_rate_exponent(sc.d, bm, bt.min(1.0), c),
        DesignSpec::Grid { shift, .. } => {
            let noise = fixed_rate_exponent(sc.d, f64::INFINITY, bt, 0.0, c);
            if shift.iter().all(|&s| s == 0.0) {
                noise
            } else {
                fixed_rate_exponent(sc.d, bm, bt, 0.0, c)
            }
        }
    };
    e.is_finite().then_some(e)
}

#[allow(clippy::too_many_arguments)]
pub fn rates(
    args: &ExperimentArgs,
    ns: &str,
    reps: Option<usize>,
    estimators: Option<&str>,
    exponent: Option<f64>,
    tolerance: f64,
    grid: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let exp = args.build()?;
    let specs = estimator_list(
        estimators,
        exp.estimators.as_deref(),
        default_estimators(&exp.scenario),
    )?;
    let spec = specs[0];
    let ns: Vec<usize> = ns
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--ns: {e}")))?;
    let reps = reps.or(exp.replications).unwrap_or(50);
    if reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    let scenarios: Vec<ScenarioConfig> = ns
        .iter()
        .map(|&n| scenario_at(&exp.scenario, n))
        .collect::<Result<_, _>>()?;
    let target = exponent
        .or_else(|| reference_exponent(&exp.scenario, &exp.tuning))
        .ok_or_else(|| {
            CliError::Config("no reference rate for σ = 0 without a shift; pass --exponent".into())
        })?;
    let mut points = Vec::with_capacity(ns.len());
    for (n, sc) in ns.iter().zip(&scenarios) {
        let res = run_experiment(sc, &[spec], &exp.tuning, reps, grid).map_err(runtime)?;
        println!("n = {n:>7}  rmse = {:.6}", res[0].rmse);
        points.push((*n, res[0].rmse));
    }
    let report = fit_rate(&points, target, tolerance).map_err(config_error)?;
    let rows: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (n as f64, e)).collect();
    write_plot_csv(create(out, "rates.csv")?, ["n", "rmse"], &rows).map_err(runtime)?;
    write_json(out, "rate_report.json", &report)?;
    println!(
        "{} slope {:.4}, target {:.4} ± {}: {}",
        spec.name(),
        report.fitted_slope,
        report.theoretical_exponent,
        report.tolerance,
        if report.pass { "pass" } else { "fail" }
    );
    Ok(())
}

#[derive(Serialize)]
struct MinimalRow {
    density: String,
    lambda: f64,
    lhs: f64,
    bound: f64,
    holds: bool,
}

#[derive(Serialize)]
struct AdversaryRow {
    instance: String,
    objective: f64,
    max_constraint_violation: f64,
    indistinguishability: f64,
    holder_excess_mu0: f64,
    holder_excess_tau: f64,
}

#[derive(Serialize)]
struct TheoryReport {
    calibrated_constant: Option<f64>,
    minimal_inequality: Vec<MinimalRow>,
    counterexample: [[f64; 2]; 2],
    counterexample_disjoint: bool,
    weight_draws: usize,
    weight_bound_failures: usize,
    max_moment_residual: f64,
    adversaries: Vec<AdversaryRow>,
    pass: bool,
}

fn weight_sweep(seed: u64, draws: usize) -> (usize, f64) {
    let mut rng = RngSeed(seed).rng(Stream::Functions);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let t = rng.random_range(1..=4usize);
        let m = rng.random_range(t.max(2)..=100usize);
        let delta = rng.random_range(0.0..=0.5 / m as f64);
        let x = rng.random_range(0..m) as f64 / m as f64;
        let mut nodes: Vec<usize> = (0..m).collect();
        let gap = |j: usize| (j as f64 / m as f64 + delta - x).abs();
        nodes.sort_by(|&a, &b| gap(a).total_cmp(&gap(b)).then(a.cmp(&b)));
        let z: Vec<f64> = nodes[..t]
            .iter()
            .map(|&j| j as f64 / m as f64 + delta)
            .collect();
        let w = interpolation_weights(x, &z).expect("grid nodes are distinct");
        for p in 0..t as i32 {
            let s: f64 = w
                .iter()
                .zip(&z)
                .map(|(wi, zi)| wi * ((zi - x) * m as f64).powi(p))
                .sum();
            worst = worst.max((s - if p == 0 { 1.0 } else { 0.0 }).abs());
        }
        if !weight_bounds_check(&w, m, delta, t) {
            failures += 1;
        }
    }
    (failures, worst)
}

fn adversary_row(
    label: String,
    inst: &AdversarialInstance,
    data: &ObservationSet,
    betas: (f64, f64),
    seed: u64,
) -> Result<AdversaryRow, CliError> {
    let mut rng = RngSeed(seed).rng(Stream::Bootstrap);
    let ball_mu = HolderSpec::new(inst.dimension, betas.0, 1.0).map_err(runtime)?;
    let ball_tau = HolderSpec::new(inst.dimension, betas.1, 1.0).map_err(runtime)?;
    Ok(AdversaryRow {
        instance: label,
        objective: inst.certificate.objective,
        max_constraint_violation: inst.certificate.max_constraint_violation,
        indistinguishability: indistinguishability_check(inst, data),
        holder_excess_mu0: sampled_holder_excess(&inst.mu0, &ball_mu, 1000, &mut rng),
        holder_excess_tau: sampled_holder_excess(&inst.tau, &ball_tau, 1000, &mut rng),
    })
}

pub fn check_theory(seed: u64, out: &Path) -> Result<(), CliError> {
    let family = Density1d::builtin_family();
    let densities: Vec<Density1d> = family.iter().map(|(_, f)| f.clone()).collect();
    let lambdas = [1.0, 10.0, 100.0, 1000.0];
    let c = calibrate_constant(&densities, &lambdas);
    let mut minimal = Vec::new();
    for (name, f) in &family {
        for &lambda in &lambdas {
            let chk = verify_minimal_inequality(f, lambda, c.unwrap_or(1.0)).map_err(runtime)?;
            minimal.push(MinimalRow {
                density: name.clone(),
                lambda,
                lhs: chk.lhs,
                bound: chk.bound,
                holds: chk.holds,
            });
        }
    }

    let (a, b) = counterexample_intervals();
    let (weight_failures, moment) = weight_sweep(seed, 1000);

    let mut adversaries = Vec::new();
    for (m, d) in [(20usize, 1usize), (8, 2)] {
        let design = GridDesign::new(m, vec![0.5 / m as f64; d]).map_err(runtime)?;
        let inst = fixed_adversary(&design, 0.5, 1.0).map_err(runtime)?;
        let grid = ScenarioConfig {
            design: DesignSpec::Grid {
                m,
                shift: design.shift().to_vec(),
            },
            mu0: FunctionSpec::Zero,
            tau: FunctionSpec::Zero,
            sigma: 0.0,
            n: design.n(),
            d,
            kappa: 1.0,
            seed: RngSeed(seed),
        };
        let data = sample_scenario(&grid).map_err(runtime)?;
        adversaries.push(adversary_row(
            format!("fixed_m{m}_d{d}"),
            &inst,
            &data,
            (0.5, 1.0),
            seed,
        )?);
    }
    for n in [50usize, 200] {
        let sc = ScenarioConfig {
            design: DesignSpec::Random {
                control: DensitySpec::Uniform,
                treatment: DensitySpec::Uniform,
                n_treatment: None,
            },
            mu0: FunctionSpec::Zero,
            tau: FunctionSpec::Zero,
            sigma: 0.0,
            n,
            d: 1,
            kappa: 1.0,
            seed: RngSeed(seed),
        };
        let data = sample_scenario(&sc).map_err(runtime)?;
        let inst = random_adversary(&data, 1.0, 1.0).map_err(runtime)?;
        adversaries.push(adversary_row(
            format!("random_n{n}_d1"),
            &inst,
            &data,
            (1.0, 1.0),
            seed,
        )?);
    }

    let adversaries_ok = adversaries.iter().all(|r| {
        r.max_constraint_violation <= 1e-9
            && r.indistinguishability <= 1e-9
            && r.holder_excess_mu0 <= 1e-12
            && r.holder_excess_tau <= 1e-12
    });
    let report = TheoryReport {
        calibrated_constant: c,
        counterexample: [[a.lo, a.hi], [b.lo, b.hi]],
        counterexample_disjoint: a.is_disjoint(&b),
        weight_draws: 1000,
        weight_bound_failures: weight_failures,
        max_moment_residual: moment,
        pass: c.is_some()
            && minimal.iter().all(|r| r.holds)
            && a.is_disjoint(&b)
            && weight_failures == 0
            && moment <= 1e-10
            && adversaries_ok,
        minimal_inequality: minimal,
        adversaries,
    };
    write_json(out, "check_theory.json", &report)?;

    match c {
        Some(c) => println!(
            "minimal-function inequality: C = {c}, {} checks hold",
            report.minimal_inequality.len()
        ),
        None => println!("minimal-function inequality: no constant up to 2^30 works"),
    }
    println!(
        "divided-difference counterexample: [{}, {}] and [{}, {}], disjoint: {}",
        a.lo, a.hi, b.lo, b.hi, report.counterexample_disjoint
    );
    println!(
        "weight bounds: {} failures in {} draws, moment residual {:.2e}",
        weight_failures, report.weight_draws, moment
    );
    for r in &report.adversaries {
        println!(
            "{}: ‖τ‖₁ = {:.3e}, violation {:.1e}, Hölder excess ({:.1e}, {:.1e})",
            r.instance,
            r.objective,
            r.max_constraint_violation,
            r.holder_excess_mu0,
            r.holder_excess_tau
        );
    }
    if report.pass {
        println!("all checks pass");
        Ok(())
    } else {
        Err(CliError::Runtime(
            "one or more theory checks failed; see check_theory.json".into(),
        ))
    }
}

//! Monte-Carlo harness: replicated experiments, error metrics, log-log rate
//! fits, bootstrap comparisons and CSV output.

use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{estimate_differencing, estimate_full_matching, BaselineConfig};
use crate::domain::{Covariate, Observation, ObservationSet, RngSeed, Stream};
use crate::error::{invalid, HteError, Result};
use crate::fixed_design::{default_bandwidth, FixedConfig, FixedDesignEstimator};
use crate::random_design::{
    select_parameters_scaled, RandomConfig, RandomDesignEstimator, SelectionInput,
};
use crate::synth::{sample_scenario_with_truth, ScenarioConfig};

/// Smoothness assumptions and multipliers on the rate-optimal tuning rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tuning {
    pub beta_mu: f64,
    pub beta_tau: f64,
    pub bandwidth_const: f64,
    pub m1_const: f64,
    pub m2_const: f64,
    pub k_const: f64,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            beta_mu: 0.5,
            beta_tau: 1.0,
            bandwidth_const: 1.0,
            m1_const: 1.0,
            m2_const: 1.0,
            k_const: 1.0,
        }
    }
}

/// An estimator and its optional fixed parameters; missing parameters are
/// set by the tuning rules from `n`, `σ`, `κ` and the smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Selected {
        #[serde(default)]
        m1: Option<usize>,
        #[serde(default)]
        m2: Option<usize>,
    },
    Full {
        #[serde(default)]
        m1: Option<usize>,
    },
    Knn {
        #[serde(default)]
        k: Option<usize>,
    },
    Kernel {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    Fixed {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
}

impl EstimatorSpec {
    pub const NAMES: [&'static str; 5] = ["selected", "full", "knn", "kernel", "fixed"];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Selected { .. } => "selected",
            EstimatorSpec::Full { .. } => "full",
            EstimatorSpec::Knn { .. } => "knn",
            EstimatorSpec::Kernel { .. } => "kernel",
            EstimatorSpec::Fixed { .. } => "fixed",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.trim() {
            "selected" => EstimatorSpec::Selected { m1: None, m2: None },
            "full" => EstimatorSpec::Full { m1: None },
            "knn" => EstimatorSpec::Knn { k: None },
            "kernel" => EstimatorSpec::Kernel { bandwidth: None },
            "fixed" => EstimatorSpec::Fixed { bandwidth: None },
            other => {
                return Err(invalid(
                    "estimators",
                    format!(
                        "unknown estimator `{other}`; expected one of {}",
                        Self::NAMES.join(", ")
                    ),
                ))
            }
        })
    }

    /// Comma-separated names, e.g. `selected,knn`.
    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        let specs: Vec<Self> = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Self::from_name)
            .collect::<Result<_>>()?;
        if specs.is_empty() {
            return Err(invalid("estimators", "empty list"));
        }
        Ok(specs)
    }
}

/// Parameters an estimator ended up using on one data set.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Selected(RandomConfig),
    Full(usize),
    Knn(usize),
    Kernel(f64),
    Fixed(FixedConfig),
}

impl Resolved {
    /// `key=value` pairs joined by `;`.
    pub fn describe(&self) -> String {
        match self {
            Resolved::Selected(c) => format!("m1={};m2={}", c.m1, c.m2),
            Resolved::Full(m1) => format!("m1={m1}"),
            Resolved::Knn(k) => format!("k={k}"),
            Resolved::Kernel(h) => format!("h={h}"),
            Resolved::Fixed(c) => format!("h={};t={}", c.bandwidth, c.stencil()),
        }
    }
}

fn rounded(x: f64) -> usize {
    if x.is_finite() && x > 0.0 {
        (x + 0.5).floor() as usize
    } else {
        0
    }
}

/// Applies the tuning rules for `spec` to a concrete sample.
pub fn resolve(
    spec: &EstimatorSpec,
    tuning: &Tuning,
    scenario: &ScenarioConfig,
    data: &ObservationSet,
) -> Result<Resolved> {
    let n = data.control().len();
    let n1 = data.treatment().len();
    let d = data.dimension() as f64;
    let sigma = scenario.sigma;
    let selection = || {
        select_parameters_scaled(
            SelectionInput {
                n,
                d: data.dimension(),
                beta_mu: tuning.beta_mu,
                beta_tau: tuning.beta_tau,
                kappa: scenario.kappa,
            },
            sigma,
            tuning.m1_const,
            tuning.m2_const,
        )
    };
    Ok(match *spec {
        EstimatorSpec::Selected { m1, m2 } => {
            let (m1, m2) = match (m1, m2) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    let sel = selection()?;
                    (m1.unwrap_or(sel.m1), m2.unwrap_or(sel.m2))
                }
            };
            Resolved::Selected(RandomConfig::new(m1, m2, scenario.kappa)?)
        }
        EstimatorSpec::Full { m1 } => Resolved::Full(match m1 {
            Some(m) => m,
            None => selection()?.m1,
        }),
        EstimatorSpec::Knn { k } => {
            let k = k.unwrap_or_else(|| {
                let b = tuning.beta_mu;
                let raw = tuning.k_const
                    * (n as f64).powf(2.0 * b / (2.0 * b + d))
                    * sigma.powf(2.0 * d / (2.0 * b + d));
                rounded(raw).clamp(1, n.min(n1).max(1))
            });
            Resolved::Knn(k)
        }
        EstimatorSpec::Kernel { bandwidth } => {
            let h = bandwidth.unwrap_or_else(|| {
                let b = tuning.beta_mu;
                let raw =
                    tuning.bandwidth_const * (sigma * sigma / n as f64).powf(1.0 / (2.0 * b + d));
                raw.max((n as f64).powf(-1.0 / d)).min(0.5)
            });
            Resolved::Kernel(h)
        }
        EstimatorSpec::Fixed { bandwidth } => {
            let h = bandwidth.unwrap_or_else(|| {
                (tuning.bandwidth_const * default_bandwidth(n, data.dimension(), tuning.beta_tau))
                    .min(0.5)
            });
            Resolved::Fixed(FixedConfig::new(tuning.beta_mu, tuning.beta_tau, h)?)
        }
    })
}

/// Runs a resolved estimator at `queries`.
pub fn run_resolved(
    resolved: &Resolved,
    scenario: &ScenarioConfig,
    data: &ObservationSet,
    queries: &[Covariate],
) -> Result<Vec<f64>> {
    match resolved {
        Resolved::Selected(cfg) => RandomDesignEstimator::fit(data, cfg)?.predict_many(queries),
        Resolved::Full(m1) => estimate_full_matching(data, *m1, queries),
        Resolved::Knn(k) => estimate_differencing(data, &BaselineConfig::knn(*k), queries),
        Resolved::Kernel(h) => estimate_differencing(data, &BaselineConfig::kernel(*h), queries),
        Resolved::Fixed(cfg) => {
            let design = scenario.grid_design().ok_or_else(|| {
                HteError::DesignMismatch("the grid estimator needs a grid design".into())
            })?;
            FixedDesignEstimator::fit(data, &design, cfg)?.predict_many(queries)
        }
    }
}

/// Midpoint query grid: 512 points for `d = 1`, `64²` for `d = 2` and about
/// 4096 points beyond, unless `per_axis` is given.
pub fn query_grid(d: usize, per_axis: Option<usize>) -> Vec<Covariate> {
    let k = per_axis.unwrap_or(match d {
        1 => 512,
        2 => 64,
        _ => (4096f64.powf(1.0 / d as f64).round() as usize).max(2),
    });
    let total = k.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let coords = (0..d)
                .map(|_| {
                    let i = rem % k;
                    rem /= k;
                    (i as f64 + 0.5) / k as f64
                })
                .collect();
            Covariate::new(coords).expect("midpoints lie in the unit cube")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    /// Mean squared error over the query grid.
    pub mse: f64,
    pub rmse: f64,
    /// `g₀`-weighted mean absolute error over the query grid.
    pub l1_error: f64,
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario_digest: String,
    pub estimator: String,
    pub estimator_digest: String,
    pub replications: usize,
    /// `sqrt` of the replication-averaged mean squared error.
    pub rmse: f64,
    pub l1_error: f64,
    pub per_replication: Vec<ReplicationRecord>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    pub fn mse_values(&self) -> Vec<f64> {
        self.per_replication.iter().map(|r| r.mse).collect()
    }
}

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).unwrap_or_default();
    Sha256::digest(&json)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything one replication needs, computed once per experiment.
struct Plan<'a> {
    scenario: &'a ScenarioConfig,
    estimators: &'a [EstimatorSpec],
    tuning: &'a Tuning,
    queries: Vec<Covariate>,
    weights: Vec<f64>,
}

impl Plan<'_> {
    fn replicate(&self, rep: usize) -> Result<Vec<ReplicationRecord>> {
        let scenario = self
            .scenario
            .with_seed(self.scenario.seed.derive(rep as u64));
        let sample = sample_scenario_with_truth(&scenario)?;
        let truth: Vec<f64> = self
            .queries
            .iter()
            .map(|q| sample.tau.eval(q.coords()))
            .collect();
        self.estimators
            .iter()
            .map(|spec| {
                let resolved = resolve(spec, self.tuning, &scenario, &sample.data)?;
                let est = run_resolved(&resolved, &scenario, &sample.data, &self.queries)?;
                let nq = self.queries.len() as f64;
                let mut sq = 0.0;
                let mut l1 = 0.0;
                for ((e, t), w) in est.iter().zip(&truth).zip(&self.weights) {
                    let err = e - t;
                    sq += err * err;
                    l1 += w * err.abs();
                }
                Ok(ReplicationRecord {
                    replication: rep,
                    mse: sq / nq,
                    rmse: (sq / nq).sqrt(),
                    l1_error: l1 / nq,
                    params: resolved.describe(),
                })
            })
            .collect()
    }
}

#[cfg(feature = "parallel")]
fn map_reps<F>(reps: usize, f: F) -> Vec<Result<Vec<ReplicationRecord>>>
where
    F: Fn(usize) -> Result<Vec<ReplicationRecord>> + Sync + Send,
{
    use rayon::prelude::*;
    (0..reps).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_reps<F>(reps: usize, f: F) -> Vec<Result<Vec<ReplicationRecord>>>
where
    F: Fn(usize) -> Result<Vec<ReplicationRecord>>,
{
    (0..reps).map(f).collect()
}

/// Runs `replications` independent draws of `scenario` and scores every
/// estimator on each. Replication `r` uses the seed `scenario.seed.derive(r)`,
/// and all reductions run in replication order, so results do not depend on
/// scheduling.
pub fn run_experiment(
    scenario: &ScenarioConfig,
    estimators: &[EstimatorSpec],
    tuning: &Tuning,
    replications: usize,
    query_grid_size: Option<usize>,
) -> Result<Vec<ExperimentResult>> {
    scenario.validate()?;
    if replications == 0 {
        return Err(invalid("replications", "must be positive"));
    }
    if estimators.is_empty() {
        return Err(invalid("estimators", "empty list"));
    }
    let start = Instant::now();
    let queries = query_grid(scenario.d, query_grid_size);
    let g0 = scenario.control_density();
    let weights = queries.iter().map(|q| g0.pdf(q.coords())).collect();
    let plan = Plan {
        scenario,
        estimators,
        tuning,
        queries,
        weights,
    };
    let outcomes = map_reps(replications, |rep| plan.replicate(rep));
    let mut rows: Vec<Vec<ReplicationRecord>> = Vec::with_capacity(replications);
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        rows.push(outcome.map_err(|e| HteError::Replication {
            replication: rep,
            source: Box::new(e),
        })?);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let scenario_digest = digest(scenario);
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let per: Vec<ReplicationRecord> = rows.iter().map(|r| r[k].clone()).collect();
            let reps = per.len() as f64;
            let mse = per.iter().map(|r| r.mse).sum::<f64>() / reps;
            let l1 = per.iter().map(|r| r.l1_error).sum::<f64>() / reps;
            ExperimentResult {
                scenario_digest: scenario_digest.clone(),
                estimator: spec.name().to_string(),
                estimator_digest: digest(&(spec, tuning)),
                replications,
                rmse: mse.sqrt(),
                l1_error: l1,
                per_replication: per,
                wall_time_secs: elapsed,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub grid: Vec<(usize, f64)>,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub theoretical_exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Least-squares slope of `log(error)` against `log(n)`. Needs at least four
/// distinct `n` spanning a decade, and positive errors.
pub fn fit_rate(
    points: &[(usize, f64)],
    theoretical_exponent: f64,
    tolerance: f64,
) -> Result<RateReport> {
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 {
        return Err(HteError::DegenerateGrid(format!(
            "{} distinct sizes, need 4",
            ns.len()
        )));
    }
    if (*ns.last().unwrap() as f64) < 10.0 * ns[0] as f64 {
        return Err(HteError::DegenerateGrid(
            "sizes span less than a decade".into(),
        ));
    }
    if let Some(bad) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(HteError::DegenerateGrid(format!(
            "non-positive error {} at n = {}",
            bad.1, bad.0
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateReport {
        grid: points.to_vec(),
        fitted_slope: slope,
        intercept: my - slope * mx,
        theoretical_exponent,
        tolerance,
        pass: (slope - theoretical_exponent).abs() <= tolerance,
    })
}

/// RMSE of one estimator at each `n`, with the scenario built by `make`.
pub fn rate_sweep(
    make: impl Fn(usize) -> ScenarioConfig,
    ns: &[usize],
    estimator: &EstimatorSpec,
    tuning: &Tuning,
    replications: usize,
    query_grid_size: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            let res = run_experiment(
                &make(n),
                std::slice::from_ref(estimator),
                tuning,
                replications,
                query_grid_size,
            )?;
            Ok((n, res[0].rmse))
        })
        .collect()
}

/// Fraction of paired bootstrap resamples of the replications in which the
/// RMSE from `a` is strictly below the RMSE from `b`.
pub fn bootstrap_less(
    a_mse: &[f64],
    b_mse: &[f64],
    resamples: usize,
    seed: RngSeed,
) -> Result<f64> {
    if a_mse.len() != b_mse.len() || a_mse.is_empty() {
        return Err(invalid("mse", "need equally many paired replications"));
    }
    if resamples == 0 {
        return Err(invalid("resamples", "must be positive"));
    }
    let n = a_mse.len();
    let mut rng = seed.rng(Stream::Bootstrap);
    let mut wins = 0usize;
    for _ in 0..resamples {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            sa += a_mse[i];
            sb += b_mse[i];
        }
        if sa < sb {
            wins += 1;
        }
    }
    Ok(wins as f64 / resamples as f64)
}

/// `τ̂` along the diagonal `x = (s, …, s)` at 512 midpoints, from the sample
/// of replication `replication`; also returns the true `τ` there.
pub fn diagonal_curve(
    scenario: &ScenarioConfig,
    spec: &EstimatorSpec,
    tuning: &Tuning,
    replication: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let scenario = scenario.with_seed(scenario.seed.derive(replication as u64));
    let sample = sample_scenario_with_truth(&scenario)?;
    let s: Vec<f64> = (0..512).map(|i| (i as f64 + 0.5) / 512.0).collect();
    let queries: Vec<Covariate> = s
        .iter()
        .map(|&v| Covariate::new(vec![v; scenario.d]))
        .collect::<Result<_>>()?;
    let resolved = resolve(spec, tuning, &scenario, &sample.data)?;
    let est = run_resolved(&resolved, &scenario, &sample.data, &queries)?;
    let truth = queries
        .iter()
        .map(|q| sample.tau.eval(q.coords()))
        .collect();
    Ok((s, est, truth))
}

pub fn write_results_csv<W: Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "estimator",
        "replication",
        "rmse",
        "l1_error",
        "mse",
        "params",
    ])?;
    for r in results {
        for rep in &r.per_replication {
            w.write_record([
                r.estimator.clone(),
                rep.replication.to_string(),
                rep.rmse.to_string(),
                rep.l1_error.to_string(),
                rep.mse.to_string(),
                rep.params.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "estimator",
        "estimator_digest",
        "scenario_digest",
        "replications",
        "rmse",
        "l1_error",
    ])?;
    for r in results {
        w.write_record([
            r.estimator.clone(),
            r.estimator_digest.clone(),
            r.scenario_digest.clone(),
            r.replications.to_string(),
            r.rmse.to_string(),
            r.l1_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column CSV with a header row.
pub fn write_plot_csv<W: Write>(out: W, header: [&str; 2], rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `group, x_1, …, x_d, y`; controls first.
pub fn write_dataset_csv<W: Write>(out: W, data: &ObservationSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group".to_string()];
    header.extend((1..=data.dimension()).map(|j| format!("x_{j}")));
    header.push("y".into());
    w.write_record(&header)?;
    for (group, obs) in [("0", data.control()), ("1", data.treatment())] {
        for o in obs {
            let mut rec = vec![group.to_string()];
            rec.extend(o.x.coords().iter().map(|v| v.to_string()));
            rec.push(o.y.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<ObservationSet> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let d = headers
        .len()
        .checked_sub(2)
        .filter(|&d| d > 0)
        .ok_or_else(|| HteError::Io("dataset needs columns group, x_1, …, x_d, y".into()))?;
    if &headers[0] != "group" || &headers[d + 1] != "y" {
        return Err(HteError::Io(
            "dataset header must read group, x_1, …, x_d, y".into(),
        ));
    }
    let (mut control, mut treatment) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| HteError::Io(format!("row {}: column {}: {e}", line + 2, i + 1)))
        };
        let coords = (1..=d).map(num).collect::<Result<Vec<_>>>()?;
        let obs = Observation::new(Covariate::new(coords)?, num(d + 1)?);
        match rec[0].trim() {
            "0" => control.push(obs),
            "1" => treatment.push(obs),
            g => {
                return Err(HteError::Io(format!(
                    "row {}: group must be 0 or 1, got `{g}`",
                    line + 2
                )))
            }
        }
    }
    ObservationSet::new(d, control, treatment)
}

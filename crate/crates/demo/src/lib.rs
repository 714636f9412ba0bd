//! JSON-returning operations behind the browser demo. The same functions are
//! exported to JavaScript through `wasm-bindgen` on `wasm32` targets.

use hte_core::bench::{resolve, run_resolved, EstimatorSpec, Tuning};
use hte_core::random_design::{select_parameters, RegimeSelection};
use hte_core::synth::{benchmark_scenario, sample_scenario_with_truth};
use hte_core::theory::{fixed_rate_exponent, random_rate_exponent};
use hte_core::{Covariate, HteError, RngSeed};
use serde::Serialize;

const CURVE_POINTS: usize = 256;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub estimator: String,
    pub params: String,
    pub values: Vec<f64>,
    pub rmse: f64,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    pub curves: Vec<Curve>,
    pub sigma: f64,
    pub control: Vec<[f64; 2]>,
    pub treatment: Vec<[f64; 2]>,
}

/// One draw of the one-dimensional benchmark scenario with the named
/// estimators evaluated on a grid of `[0, 1]`.
pub fn simulate(n: usize, kappa: f64, seed: u64, estimators: &str) -> Result<Simulation, HteError> {
    let scenario = benchmark_scenario(n, 1, kappa, RngSeed(seed));
    let sample = sample_scenario_with_truth(&scenario)?;
    let x: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| (i as f64 + 0.5) / CURVE_POINTS as f64)
        .collect();
    let queries: Vec<Covariate> = x
        .iter()
        .map(|&v| Covariate::scalar(v))
        .collect::<Result<_, _>>()?;
    let truth: Vec<f64> = x.iter().map(|&v| sample.tau.eval(&[v])).collect();
    let tuning = Tuning::default();
    let mut curves = Vec::new();
    for spec in EstimatorSpec::parse_list(estimators)? {
        let resolved = resolve(&spec, &tuning, &scenario, &sample.data)?;
        let values = run_resolved(&resolved, &scenario, &sample.data, &queries)?;
        let mse = values
            .iter()
            .zip(&truth)
            .map(|(e, t)| (e - t) * (e - t))
            .sum::<f64>()
            / x.len() as f64;
        curves.push(Curve {
            estimator: spec.name().to_string(),
            params: resolved.describe(),
            values,
            rmse: mse.sqrt(),
        });
    }
    let points =
        |obs: &[hte_core::Observation]| obs.iter().map(|o| [o.x.coords()[0], o.y]).collect();
    Ok(Simulation {
        control: points(sample.data.control()),
        treatment: points(sample.data.treatment()),
        x,
        truth,
        curves,
        sigma: scenario.sigma,
    })
}

pub fn regime(
    n: usize,
    d: usize,
    beta_mu: f64,
    beta_tau: f64,
    kappa: f64,
    sigma: f64,
) -> Result<RegimeSelection, HteError> {
    select_parameters(n, d, beta_mu, beta_tau, kappa, sigma)
}

#[derive(Debug, Serialize)]
pub struct ExponentCurve {
    /// Noise exponent `c` in `σ = n^c`.
    pub c: Vec<f64>,
    pub random: Vec<f64>,
    /// Grid design with `n^{1/d}‖Δ‖_∞` held constant.
    pub fixed: Vec<f64>,
}

pub fn exponents(
    d: usize,
    beta_mu: f64,
    beta_tau: f64,
    steps: usize,
) -> Result<ExponentCurve, HteError> {
    if d == 0 || steps < 2 {
        return Err(HteError::InvalidParameter {
            name: "steps",
            reason: "need d >= 1 and at least two steps".into(),
        });
    }
    if !(beta_mu > 0.0 && beta_mu <= beta_tau && beta_tau <= 1.0) {
        return Err(HteError::InvalidParameter {
            name: "beta",
            reason: "need 0 < beta_mu <= beta_tau <= 1".into(),
        });
    }
    let c: Vec<f64> = (0..steps)
        .map(|i| -1.0 + 2.0 * i as f64 / (steps - 1) as f64)
        .collect();
    Ok(ExponentCurve {
        random: c
            .iter()
            .map(|&c| random_rate_exponent(d, beta_mu, beta_tau, c))
            .collect(),
        fixed: c
            .iter()
            .map(|&c| fixed_rate_exponent(d, beta_mu, beta_tau, 0.0, c))
            .collect(),
        c,
    })
}

fn to_json<T: Serialize>(r: Result<T, HteError>) -> Result<String, String> {
    r.map_err(|e| e.to_string())
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
}

pub fn simulate_json(n: usize, kappa: f64, seed: u64, estimators: &str) -> Result<String, String> {
    to_json(simulate(n, kappa, seed, estimators))
}

pub fn regime_json(
    n: usize,
    d: usize,
    beta_mu: f64,
    beta_tau: f64,
    kappa: f64,
    sigma: f64,
) -> Result<String, String> {
    to_json(regime(n, d, beta_mu, beta_tau, kappa, sigma))
}

pub fn exponents_json(
    d: usize,
    beta_mu: f64,
    beta_tau: f64,
    steps: usize,
) -> Result<String, String> {
    to_json(exponents(d, beta_mu, beta_tau, steps))
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn simulate(n: usize, kappa: f64, seed: u32, estimators: &str) -> Result<String, JsError> {
        super::simulate_json(n, kappa, seed as u64, estimators).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn regime(
        n: usize,
        d: usize,
        beta_mu: f64,
        beta_tau: f64,
        kappa: f64,
        sigma: f64,
    ) -> Result<String, JsError> {
        super::regime_json(n, d, beta_mu, beta_tau, kappa, sigma).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn exponents(
        d: usize,
        beta_mu: f64,
        beta_tau: f64,
        steps: usize,
    ) -> Result<String, JsError> {
        super::exponents_json(d, beta_mu, beta_tau, steps).map_err(|e| JsError::new(&e))
    }
}

//! Synthetic scenarios: grid designs with a shift, and random designs whose
//! covariate densities are piecewise constant in `x₁` and uniform in the
//! remaining coordinates.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, Observation, ObservationSet, RngSeed, Stream};
use crate::error::{invalid, Result};
use crate::fixed_design::GridDesign;
use crate::functions::{Function, FunctionSpec};

/// Covariate density on `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    /// Density `values[k]` for `x₁ ∈ [breaks[k], breaks[k+1])`, uniform in the
    /// other coordinates. `breaks` runs from 0 to 1.
    PiecewiseX1 {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DensitySpec {
    /// `g₀` of the benchmark scenario: `2κ/(κ+1)` on `x₁ ≤ 1/2`, `2/(κ+1)` above.
    pub fn benchmark_control(kappa: f64) -> Self {
        DensitySpec::PiecewiseX1 {
            breaks: vec![0.0, 0.5, 1.0],
            values: vec![2.0 * kappa / (kappa + 1.0), 2.0 / (kappa + 1.0)],
        }
    }

    /// `g₁ = 2 − g₀`.
    pub fn benchmark_treatment(kappa: f64) -> Self {
        DensitySpec::PiecewiseX1 {
            breaks: vec![0.0, 0.5, 1.0],
            values: vec![2.0 / (kappa + 1.0), 2.0 * kappa / (kappa + 1.0)],
        }
    }

    fn pieces(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DensitySpec::Uniform => (vec![0.0, 1.0], vec![1.0]),
            DensitySpec::PiecewiseX1 { breaks, values } => (breaks.clone(), values.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (breaks, values) = self.pieces();
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(invalid("breaks", "need one more break than values"));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(invalid("breaks", "must start at 0 and end at 1"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("breaks", "must be strictly increasing"));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("values", "densities must be positive"));
        }
        let mass: f64 = breaks
            .windows(2)
            .zip(&values)
            .map(|(w, v)| (w[1] - w[0]) * v)
            .sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "values",
                format!("density integrates to {mass}, not 1"),
            ));
        }
        Ok(())
    }

    /// Density at `x` (depends on `x₁` only).
    pub fn pdf(&self, x: &[f64]) -> f64 {
        let (breaks, values) = self.pieces();
        let x1 = x[0];
        if !(0.0..=1.0).contains(&x1) {
            return 0.0;
        }
        let k = breaks[1..]
            .iter()
            .position(|&b| x1 < b)
            .unwrap_or(values.len() - 1);
        values[k]
    }

    /// Marginal CDF of `x₁`.
    pub fn cdf_x1(&self, t: f64) -> f64 {
        let (breaks, values) = self.pieces();
        let t = t.clamp(0.0, 1.0);
        breaks
            .windows(2)
            .zip(&values)
            .map(|(w, v)| v * (t.min(w[1]) - w[0]).max(0.0))
            .sum()
    }

    /// Inverse of [`Self::cdf_x1`].
    pub fn quantile_x1(&self, p: f64) -> f64 {
        let (breaks, values) = self.pieces();
        let mut acc = 0.0;
        for (w, v) in breaks.windows(2).zip(&values) {
            let mass = v * (w[1] - w[0]);
            if p <= acc + mass {
                return (w[0] + (p - acc) / v).clamp(w[0], w[1]);
            }
            acc += mass;
        }
        1.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Covariate {
        let mut coords = Vec::with_capacity(d);
        coords.push(self.quantile_x1(rng.random::<f64>()));
        for _ in 1..d {
            coords.push(rng.random::<f64>());
        }
        Covariate::new(coords).expect("samples lie in the unit cube")
    }
}

/// `max(g₀/g₁, g₁/g₀)` over `[0, 1]^d`, exact for the piecewise family.
pub fn density_ratio_bound(g0: &DensitySpec, g1: &DensitySpec) -> f64 {
    let (b0, _) = g0.pieces();
    let (b1, _) = g1.pieces();
    let mut breaks: Vec<f64> = b0.into_iter().chain(b1).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
        .windows(2)
        .map(|w| {
            let mid = [0.5 * (w[0] + w[1])];
            let (a, b) = (g0.pdf(&mid), g1.pdf(&mid));
            (a / b).max(b / a)
        })
        .fold(1.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSpec {
    Grid {
        m: usize,
        shift: Vec<f64>,
    },
    Random {
        control: DensitySpec,
        treatment: DensitySpec,
        /// Treatment group size when it differs from the control size `n`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_treatment: Option<usize>,
    },
}

/// Complete description of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub design: DesignSpec,
    pub mu0: FunctionSpec,
    pub tau: FunctionSpec,
    pub sigma: f64,
    pub n: usize,
    pub d: usize,
    pub kappa: f64,
    pub seed: RngSeed,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("n", "sample size and dimension must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(
                "sigma",
                format!("must be finite and >= 0, got {}", self.sigma),
            ));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(invalid(
                "kappa",
                format!("must be >= 1, got {}", self.kappa),
            ));
        }
        self.mu0.validate()?;
        self.tau.validate()?;
        match &self.design {
            DesignSpec::Grid { m, shift } => {
                let grid = GridDesign::new(*m, shift.clone())?;
                if grid.dimension() != self.d {
                    return Err(invalid("shift", "length must equal d"));
                }
                if grid.n() != self.n {
                    return Err(invalid(
                        "n",
                        format!("grid has {} points, n is {}", grid.n(), self.n),
                    ));
                }
            }
            DesignSpec::Random {
                control,
                treatment,
                n_treatment,
            } => {
                control.validate()?;
                treatment.validate()?;
                if n_treatment == &Some(0) {
                    return Err(invalid("n_treatment", "must be positive"));
                }
                let ratio = density_ratio_bound(control, treatment);
                if ratio > self.kappa * (1.0 + 1e-12) {
                    return Err(invalid(
                        "kappa",
                        format!("density ratio {ratio} exceeds kappa = {}", self.kappa),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn grid_design(&self) -> Option<GridDesign> {
        match &self.design {
            DesignSpec::Grid { m, shift } => GridDesign::new(*m, shift.clone()).ok(),
            DesignSpec::Random { .. } => None,
        }
    }

    /// Control density `g₀`; uniform for grid designs.
    pub fn control_density(&self) -> DensitySpec {
        match &self.design {
            DesignSpec::Random { control, .. } => control.clone(),
            DesignSpec::Grid { .. } => DensitySpec::Uniform,
        }
    }

    pub fn with_seed(&self, seed: RngSeed) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// The benchmark scenario: Gaussian-mixture baseline, smooth Gaussian effect,
/// densities with ratio `κ` across `x₁ = 1/2`, and `σ = 2/√n`.
pub fn benchmark_scenario(n: usize, d: usize, kappa: f64, seed: RngSeed) -> ScenarioConfig {
    ScenarioConfig {
        design: DesignSpec::Random {
            control: DensitySpec::benchmark_control(kappa),
            treatment: DensitySpec::benchmark_treatment(kappa),
            n_treatment: None,
        },
        mu0: FunctionSpec::benchmark_baseline(),
        tau: FunctionSpec::benchmark_effect(),
        sigma: 2.0 / (n.max(1) as f64).sqrt(),
        n,
        d,
        kappa,
        seed,
    }
}

/// A sampled data set with the regression functions that generated it.
#[derive(Debug, Clone)]
pub struct Sample {
    pub data: ObservationSet,
    pub mu0: Function,
    pub tau: Function,
}

impl Sample {
    pub fn mu1(&self, x: &[f64]) -> f64 {
        self.mu0.eval(x) + self.tau.eval(x)
    }
}

/// Draws a data set and returns it together with the realized functions.
pub fn sample_scenario_with_truth(config: &ScenarioConfig) -> Result<Sample> {
    config.validate()?;
    let mut frng = config.seed.rng(Stream::Functions);
    let mu0 = config.mu0.instantiate(&mut frng)?;
    let tau = config.tau.instantiate(&mut frng)?;
    let (xc, xt) = match &config.design {
        DesignSpec::Grid { m, shift } => {
            let grid = GridDesign::new(*m, shift.clone())?;
            (grid.control_grid(), grid.treatment_grid())
        }
        DesignSpec::Random {
            control,
            treatment,
            n_treatment,
        } => {
            let mut rc = config.seed.rng(Stream::ControlCovariates);
            let mut rt = config.seed.rng(Stream::TreatmentCovariates);
            let xc = (0..config.n)
                .map(|_| control.sample(config.d, &mut rc))
                .collect();
            let nt = n_treatment.unwrap_or(config.n);
            let xt = (0..nt)
                .map(|_| treatment.sample(config.d, &mut rt))
                .collect();
            (xc, xt)
        }
    };
    let noise = Normal::new(0.0, config.sigma).map_err(|e| invalid("sigma", e.to_string()))?;
    let draw = |xs: Vec<Covariate>, stream: Stream, f: &dyn Fn(&[f64]) -> f64| {
        let mut rng = config.seed.rng(stream);
        xs.into_iter()
            .map(|x| {
                let mean = f(x.coords());
                let y = if config.sigma > 0.0 {
                    mean + noise.sample(&mut rng)
                } else {
                    mean
                };
                Observation::new(x, y)
            })
            .collect::<Vec<_>>()
    };
    let control = draw(xc, Stream::ControlNoise, &|x| mu0.eval(x));
    let treatment = draw(xt, Stream::TreatmentNoise, &|x| mu0.eval(x) + tau.eval(x));
    let data = ObservationSet::new(config.d, control, treatment)?;
    Ok(Sample { data, mu0, tau })
}

pub fn sample_scenario(config: &ScenarioConfig) -> Result<ObservationSet> {
    Ok(sample_scenario_with_truth(config)?.data)
}

//! Reference rate formulas (unit constants) and a numerical check of the
//! minimal-function inequality for one-dimensional densities.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, HteError, Result};
use crate::random_design::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInput {
    pub n: usize,
    pub d: usize,
    pub beta_mu: f64,
    pub beta_tau: f64,
    pub sigma: f64,
    /// Density-ratio bound (random design).
    #[serde(default)]
    pub kappa: Option<f64>,
    /// `‖Δ‖_∞` (fixed design).
    #[serde(default)]
    pub delta_inf: Option<f64>,
}

impl RateInput {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n", "sample size and dimension must be positive"));
        }
        if !(self.beta_mu > 0.0 && self.beta_tau > 0.0) {
            return Err(invalid("beta", "smoothness must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma", "must be >= 0"));
        }
        Ok(())
    }
}

/// `n^{−β_μ/d} (n^{1/d}‖Δ‖_∞)^{β_μ∧1} + (σ²/n)^{β_τ/(2β_τ+d)}`.
pub fn fixed_rate(input: &RateInput) -> Result<f64> {
    input.validate()?;
    let delta = input
        .delta_inf
        .ok_or_else(|| invalid("delta_inf", "required for the grid rate"))?;
    if !(delta >= 0.0) {
        return Err(invalid("delta_inf", "must be >= 0"));
    }
    let n = input.n as f64;
    let d = input.d as f64;
    let bias = n.powf(-input.beta_mu / d) * (n.powf(1.0 / d) * delta).powf(input.beta_mu.min(1.0));
    let noise = (input.sigma * input.sigma / n).powf(input.beta_tau / (2.0 * input.beta_tau + d));
    Ok(bias + noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomRate {
    pub total: f64,
    pub terms: [f64; 3],
    pub dominant: Regime,
}

/// The three terms `(κ/n²)^{1/(d s)}`, `(κσ²/n²)^{1/(2 + d s)}` and
/// `(κσ²/n)^{β_τ/(2β_τ+d)}` with `s = 1/β_μ + 1/β_τ`.
pub fn random_rate(input: &RateInput) -> Result<RandomRate> {
    input.validate()?;
    let kappa = input
        .kappa
        .ok_or_else(|| invalid("kappa", "required for the random-design rate"))?;
    if input.beta_tau > 1.0 {
        return Err(HteError::SmoothnessTooHigh {
            beta: input.beta_tau,
            context: "random-design rate needs beta_tau <= 1",
        });
    }
    if !(kappa >= 1.0) {
        return Err(invalid("kappa", "must be >= 1"));
    }
    let n = input.n as f64;
    if kappa > n {
        return Err(invalid("kappa", format!("{kappa} exceeds n = {n}")));
    }
    let d = input.d as f64;
    let s = 1.0 / input.beta_mu + 1.0 / input.beta_tau;
    let s2 = input.sigma * input.sigma;
    let bt = input.beta_tau;
    let terms = [
        (kappa / (n * n)).powf(1.0 / (d * s)),
        (kappa * s2 / (n * n)).powf(1.0 / (2.0 + d * s)),
        (kappa * s2 / n).powf(bt / (2.0 * bt + d)),
    ];
    let mut k = 0;
    for i in 1..3 {
        if terms[i] > terms[k] {
            k = i;
        }
    }
    let dominant = [Regime::LowNoise, Regime::Intermediate, Regime::HighNoise][k];
    Ok(RandomRate {
        total: terms.iter().sum(),
        terms,
        dominant,
    })
}

/// Exponent `e` of `n^e` for the dominant random-design term when `κ` is
/// constant and `σ = n^c`.
pub fn random_rate_exponent(d: usize, beta_mu: f64, beta_tau: f64, c: f64) -> f64 {
    let d = d as f64;
    let s = 1.0 / beta_mu + 1.0 / beta_tau;
    let e1 = -2.0 / (d * s);
    let e2 = (2.0 * c - 2.0) / (2.0 + d * s);
    let e3 = (2.0 * c - 1.0) * beta_tau / (2.0 * beta_tau + d);
    e1.max(e2).max(e3)
}

/// Exponent of the grid rate for `σ = n^c` and `n^{1/d}‖Δ‖_∞ = n^a`.
pub fn fixed_rate_exponent(d: usize, beta_mu: f64, beta_tau: f64, a: f64, c: f64) -> f64 {
    let d = d as f64;
    let bias = -beta_mu / d + a * beta_mu.min(1.0);
    let noise = (2.0 * c - 1.0) * beta_tau / (2.0 * beta_tau + d);
    bias.max(noise)
}

/// One-dimensional densities on `[0, 1]` with closed-form CDFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density1d {
    Uniform,
    /// Value `values[k]` on `[breaks[k], breaks[k+1])`; zero values allowed.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// `(1 − weight)` uniform plus `weight` spread uniformly over
    /// `[center − width/2, center + width/2]`.
    SpikeFloor {
        weight: f64,
        center: f64,
        width: f64,
    },
    /// `f(x) = 2x`.
    Ramp,
}

impl Density1d {
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            Density1d::Uniform => 1.0,
            Density1d::Piecewise { breaks, values } => {
                let k = breaks[1..]
                    .iter()
                    .position(|&b| x < b)
                    .unwrap_or(values.len() - 1);
                values[k]
            }
            Density1d::SpikeFloor {
                weight,
                center,
                width,
            } => {
                let inside = (x - center).abs() <= 0.5 * width;
                (1.0 - weight) + if inside { weight / width } else { 0.0 }
            }
            Density1d::Ramp => 2.0 * x,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Density1d::Uniform => x,
            Density1d::Piecewise { breaks, values } => breaks
                .windows(2)
                .zip(values)
                .map(|(w, v)| v * (x.min(w[1]) - w[0]).max(0.0))
                .sum(),
            Density1d::SpikeFloor {
                weight,
                center,
                width,
            } => {
                let lo = center - 0.5 * width;
                let covered = (x - lo).clamp(0.0, *width);
                (1.0 - weight) * x + weight * covered / width
            }
            Density1d::Ramp => x * x,
        }
    }

    /// `∫_{[a, b] ∩ [0, 1]} f`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    /// The densities the inequality check is calibrated on.
    pub fn builtin_family() -> Vec<(String, Density1d)> {
        vec![
            ("uniform".into(), Density1d::Uniform),
            (
                "two_level".into(),
                Density1d::Piecewise {
                    breaks: vec![0.0, 0.5, 1.0],
                    values: vec![1.6, 0.4],
                },
            ),
            (
                "half_empty".into(),
                Density1d::Piecewise {
                    breaks: vec![0.0, 0.5, 1.0],
                    values: vec![0.0, 2.0],
                },
            ),
            (
                "spike_floor_10".into(),
                Density1d::SpikeFloor {
                    weight: 0.1,
                    center: 0.3,
                    width: 0.01,
                },
            ),
            (
                "spike_floor_50".into(),
                Density1d::SpikeFloor {
                    weight: 0.5,
                    center: 0.7,
                    width: 0.002,
                },
            ),
            ("ramp".into(), Density1d::Ramp),
        ]
    }
}

/// `count` radii log-spaced on `[10⁻⁴, √d]`, ending exactly at `√d`.
pub fn radius_grid(d: usize, count: usize) -> Vec<f64> {
    let hi = (d as f64).sqrt();
    let (la, lb) = (1e-4f64.ln(), hi.ln());
    let mut r: Vec<f64> = (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count.max(2) - 1) as f64).exp())
        .collect();
    if let Some(last) = r.last_mut() {
        *last = hi;
    }
    r
}

/// `min_r (∫_{x−r}^{x+r} f) / (2r)` over `r_grid`, with `f = 0` off `[0, 1]`.
pub fn minimal_function(density: &Density1d, x: f64, r_grid: &[f64]) -> f64 {
    r_grid
        .iter()
        .map(|&r| density.mass(x - r, x + r) / (2.0 * r))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lambda: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `e^{−λ/(eC)}` for `λ < eC`, else `C/λ`.
pub fn minimal_bound(lambda: f64, c: f64) -> f64 {
    let ec = std::f64::consts::E * c;
    if lambda < ec {
        (-lambda / ec).exp()
    } else {
        c / lambda
    }
}

/// Quadrature nodes for the left-hand side.
const LHS_NODES: usize = 2000;

/// `∫ f e^{−λ m[f]}` by the midpoint rule, compared with the two-branch bound.
pub fn verify_minimal_inequality(
    density: &Density1d,
    lambda: f64,
    c: f64,
) -> Result<InequalityCheck> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    let lhs = minimal_lhs(density, &[lambda])[0];
    let bound = minimal_bound(lambda, c);
    Ok(InequalityCheck {
        lambda,
        lhs,
        bound,
        holds: lhs <= bound * (1.0 + 1e-12),
    })
}

/// Left-hand sides for several `λ`, sharing the minimal-function evaluations.
pub fn minimal_lhs(density: &Density1d, lambdas: &[f64]) -> Vec<f64> {
    let radii = radius_grid(1, 1000);
    let step = 1.0 / LHS_NODES as f64;
    let mut sums = vec![0.0; lambdas.len()];
    for i in 0..LHS_NODES {
        let x = (i as f64 + 0.5) * step;
        let f = density.pdf(x);
        if f == 0.0 {
            continue;
        }
        let m = minimal_function(density, x, &radii);
        for (s, &l) in sums.iter_mut().zip(lambdas) {
            *s += f * (-l * m).exp();
        }
    }
    sums.into_iter().map(|s| s * step).collect()
}

/// Smallest power of two `C` for which the inequality holds for every density
/// and every `λ`; `None` if none up to `2^30` works.
pub fn calibrate_constant(densities: &[Density1d], lambdas: &[f64]) -> Option<f64> {
    let lhs: Vec<Vec<f64>> = densities.iter().map(|f| minimal_lhs(f, lambdas)).collect();
    (-10..=30).map(|k| 2f64.powi(k)).find(|&c| {
        lhs.iter().all(|row| {
            row.iter()
                .zip(lambdas)
                .all(|(&l, &lambda)| l <= minimal_bound(lambda, c) * (1.0 + 1e-12))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(n: usize, d: usize, bm: f64, bt: f64, sigma: f64) -> RateInput {
        RateInput {
            n,
            d,
            beta_mu: bm,
            beta_tau: bt,
            sigma,
            kappa: Some(1.0),
            delta_inf: Some(0.0),
        }
    }

    #[test]
    fn fixed_rate_examples() {
        assert_eq!(fixed_rate(&input(1000, 1, 0.5, 1.0, 0.0)).unwrap(), 0.0);
        let mut i = input(1000, 1, 0.5, 1.0, 0.0);
        i.delta_inf = Some(1.0 / 2000.0);
        assert!((fixed_rate(&i).unwrap() - 1000f64.powf(-0.5) * 0.5f64.sqrt()).abs() < 1e-15);
        assert!((fixed_rate(&input(1000, 1, 1.0, 1.0, 1.0)).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn random_rate_examples() {
        let r = random_rate(&input(1_000_000, 1, 1.0, 1.0, 1.0)).unwrap();
        assert!((r.terms[2] - 0.01).abs() < 1e-12);
        assert!((r.terms[1] - 1e-3).abs() < 1e-12);
        assert!((r.terms[0] - 1e-6).abs() < 1e-15);
        assert_eq!(r.dominant, Regime::HighNoise);
        let r = random_rate(&input(500, 2, 0.5, 1.0, 0.0)).unwrap();
        assert_eq!(r.terms[1..], [0.0, 0.0]);
        assert!((r.terms[0] - (1.0 / 250_000f64).powf(1.0 / 6.0)).abs() < 1e-15);
        assert!(random_rate(&input(500, 2, 0.5, 1.5, 0.0)).is_err());
        let mut big = input(5, 1, 0.5, 1.0, 0.0);
        big.kappa = Some(6.0);
        assert!(random_rate(&big).is_err());
    }

    /// Number of linear pieces of `c ↦ exponent(c)` on a fine grid.
    fn pieces(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> usize {
        let n = 4000;
        let h = (hi - lo) / n as f64;
        let slopes: Vec<f64> = (0..n)
            .map(|i| (f(lo + (i + 1) as f64 * h) - f(lo + i as f64 * h)) / h)
            .collect();
        1 + slopes
            .windows(2)
            .filter(|w| (w[0] - w[1]).abs() > 1e-6)
            .count()
            - slopes
                .windows(3)
                .filter(|w| (w[0] - w[1]).abs() > 1e-6 && (w[1] - w[2]).abs() > 1e-6)
                .count()
    }

    #[test]
    fn exponent_profiles_have_the_expected_number_of_regimes() {
        assert_eq!(
            pieces(|c| random_rate_exponent(2, 0.4, 1.0, c), -1.0, 1.0),
            3
        );
        // with σ = n^{-c}, c ∈ [0, 1], β_μ = 0.8 shows all three regimes
        assert_eq!(
            pieces(|c| random_rate_exponent(2, 0.8, 1.0, -c), 0.0, 1.0),
            3
        );
        for bm in [0.4, 0.6, 0.8] {
            let p = pieces(|c| fixed_rate_exponent(2, bm, 1.0, 0.0, -c), 0.0, 1.0);
            assert!(p <= 2);
        }
    }

    #[test]
    fn exponent_matches_rate_formula() {
        let (d, bm, bt, c) = (2, 0.6, 1.0, -0.3);
        let e = random_rate_exponent(d, bm, bt, c);
        let at = |n: f64| random_rate(&input(n as usize, d, bm, bt, n.powf(c))).unwrap();
        let slope = (at(1e12).terms.iter().cloned().fold(0.0, f64::max).ln()
            - at(1e6).terms.iter().cloned().fold(0.0, f64::max).ln())
            / (1e12f64.ln() - 1e6f64.ln());
        assert!((slope - e).abs() < 1e-9);
    }

    #[test]
    fn minimal_function_examples() {
        let radii = radius_grid(1, 1000);
        assert_eq!(*radii.last().unwrap(), 1.0);
        assert!((minimal_function(&Density1d::Uniform, 0.5, &radii) - 0.5).abs() < 1e-15);
        let empty = Density1d::Piecewise {
            breaks: vec![0.0, 0.5, 1.0],
            values: vec![0.0, 2.0],
        };
        assert!(minimal_function(&empty, 0.25, &radii) < 1e-12);
        for (_, f) in Density1d::builtin_family() {
            for x in [0.13, 0.41, 0.77] {
                assert!(minimal_function(&f, x, &radii) <= f.pdf(x) + 1e-9);
            }
        }
    }

    #[test]
    fn uniform_lhs_is_exact() {
        for lambda in [1.0, 10.0, 100.0, 1000.0] {
            let chk = verify_minimal_inequality(&Density1d::Uniform, lambda, 1.0).unwrap();
            let exact = (-lambda / 2.0).exp();
            assert!(
                (chk.lhs - exact).abs() <= 1e-12 * exact,
                "{} vs {}",
                chk.lhs,
                exact
            );
        }
    }

    #[test]
    fn small_lambda_limit() {
        let chk = verify_minimal_inequality(&Density1d::Ramp, 1e-6, 1.0).unwrap();
        assert!((chk.lhs - 1.0).abs() < 1e-5);
        assert!(chk.holds);
    }

    #[test]
    fn densities_integrate_to_one() {
        for (name, f) in Density1d::builtin_family() {
            assert!((f.cdf(1.0) - 1.0).abs() < 1e-12, "{name}");
            let n = 100_000;
            let q: f64 = (0..n)
                .map(|i| f.pdf((i as f64 + 0.5) / n as f64))
                .sum::<f64>()
                / n as f64;
            assert!((q - 1.0).abs() < 1e-3, "{name} {q}");
        }
    }
}

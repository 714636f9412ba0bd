//! Two-stage selected-matching estimator for random designs.
//!
//! Stage one takes the `m₁` controls nearest to the query. Each of them is
//! matched to its nearest treatment point, and stage two keeps the `m₂` pairs
//! with the shortest matching distance. The estimate is the average of the
//! kept outcome differences.

use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, ObservationSet};
use crate::error::{invalid, HteError, Result};
use crate::neighbors::{KdTree, Neighbor};

/// Neighbor counts for the selected-matching estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub m1: usize,
    pub m2: usize,
    pub kappa: f64,
}

impl RandomConfig {
    pub fn new(m1: usize, m2: usize, kappa: f64) -> Result<Self> {
        let cfg = Self { m1, m2, kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `m₂ = m₁`: every stage-one pair is kept.
    pub fn full_matching(m1: usize) -> Result<Self> {
        Self::new(m1, m1, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(invalid(
                "kappa",
                format!("must be >= 1, got {}", self.kappa),
            ));
        }
        if self.m2 == 0 {
            return Err(invalid("m2", "must be positive"));
        }
        if self.m2 > self.m1 {
            return Err(invalid(
                "m2",
                format!("{} exceeds m1 = {}", self.m2, self.m1),
            ));
        }
        if (self.m1 as f64) < self.kappa * self.m2 as f64 * (1.0 - 1e-12) {
            return Err(invalid(
                "m1",
                format!(
                    "need m1 >= kappa * m2, got {} < {} * {}",
                    self.m1, self.kappa, self.m2
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowNoise,
    Intermediate,
    HighNoise,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::LowNoise => "low_noise",
            Regime::Intermediate => "intermediate",
            Regime::HighNoise => "high_noise",
        }
    }
}

/// Output of [`select_parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSelection {
    pub m1: usize,
    pub m2: usize,
    pub regime: Regime,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Smoothness and size inputs shared by the selection formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionInput {
    pub n: usize,
    pub d: usize,
    pub beta_mu: f64,
    pub beta_tau: f64,
    pub kappa: f64,
}

impl SelectionInput {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n", "sample size and dimension must be positive"));
        }
        if self.beta_tau > 1.0 {
            return Err(HteError::SmoothnessTooHigh {
                beta: self.beta_tau,
                context: "selected matching needs beta_tau <= 1",
            });
        }
        if !(self.beta_mu > 0.0 && self.beta_mu <= self.beta_tau) {
            return Err(invalid(
                "beta_mu",
                format!("need 0 < beta_mu <= beta_tau, got {}", self.beta_mu),
            ));
        }
        if !(self.kappa >= 1.0) {
            return Err(invalid(
                "kappa",
                format!("must be >= 1, got {}", self.kappa),
            ));
        }
        if self.kappa > self.n as f64 {
            return Err(invalid(
                "kappa",
                format!("{} exceeds n = {}", self.kappa, self.n),
            ));
        }
        Ok(())
    }

    /// `(σ₁, σ₂)`.
    pub fn thresholds(&self) -> (f64, f64) {
        let n = self.n as f64;
        let d = self.d as f64;
        let (bm, bt, k) = (self.beta_mu, self.beta_tau, self.kappa);
        let s1 = (k / (n * n)).powf(1.0 / (d * (1.0 / bm + 1.0 / bt)));
        let s2 = n.powf((bt - bm) / (2.0 * bt) - bm / d) / k.sqrt();
        (s1, s2)
    }

    pub fn regime(&self, sigma: f64) -> Regime {
        let (s1, s2) = self.thresholds();
        if sigma <= s1 {
            Regime::LowNoise
        } else if sigma <= s2 {
            Regime::Intermediate
        } else {
            Regime::HighNoise
        }
    }

    /// Unrounded `(m₁, m₂)` from the closed form of `regime` at noise `sigma`.
    pub fn branch_values(&self, regime: Regime, sigma: f64) -> (f64, f64) {
        let n = self.n as f64;
        let d = self.d as f64;
        let (bm, bt, k) = (self.beta_mu, self.beta_tau, self.kappa);
        match regime {
            Regime::LowNoise => (k.powf(bm / (bt + bm)) * n.powf((bt - bm) / (bt + bm)), 1.0),
            Regime::Intermediate => {
                let den = 2.0 * bm * bt + d * (bm + bt);
                let m1 = n * (k * sigma * sigma / (n * n)).powf(d * bm / den);
                let m2 =
                    (n * n / k).powf(2.0 * bm * bt / den) * sigma.powf(2.0 * d * (bm + bt) / den);
                (m1, m2)
            }
            Regime::HighNoise => {
                let e = 2.0 * bt + d;
                let m1 = n.powf(2.0 * bt / e) * (sigma * sigma * k).powf(d / e);
                let m2 = (n / k).powf(2.0 * bt / e) * sigma.powf(2.0 * d / e);
                (m1, m2)
            }
        }
    }
}

fn round_half_up(x: f64) -> usize {
    if x.is_finite() && x > 0.0 {
        (x + 0.5).floor() as usize
    } else {
        0
    }
}

/// `(m₁, m₂)` from the regime table, with multipliers `m1_const` and
/// `m2_const` applied before rounding.
pub fn select_parameters_scaled(
    input: SelectionInput,
    sigma: f64,
    m1_const: f64,
    m2_const: f64,
) -> Result<RegimeSelection> {
    input.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    for (name, c) in [("m1_const", m1_const), ("m2_const", m2_const)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {c}")));
        }
    }
    let (sigma1, sigma2) = input.thresholds();
    let regime = input.regime(sigma);
    let (raw1, raw2) = input.branch_values(regime, sigma);
    let mut m1 = round_half_up(m1_const * raw1);
    let mut m2 = round_half_up(m2_const * raw2);
    let log_floor = (input.n as f64).ln().ceil().max(1.0) as usize;
    m2 = m2.max(log_floor);
    m1 = m1.max((input.kappa * m2 as f64).ceil() as usize);
    m1 = m1.min(input.n);
    // The upper clamp can undo m1 >= kappa m2 when n is tiny; shrink m2 then.
    m2 = m2
        .min((m1 as f64 / input.kappa).floor().max(1.0) as usize)
        .min(m1);
    Ok(RegimeSelection {
        m1,
        m2,
        regime,
        sigma1,
        sigma2,
    })
}

pub fn select_parameters(
    n: usize,
    d: usize,
    beta_mu: f64,
    beta_tau: f64,
    kappa: f64,
    sigma: f64,
) -> Result<RegimeSelection> {
    select_parameters_scaled(
        SelectionInput {
            n,
            d,
            beta_mu,
            beta_tau,
            kappa,
        },
        sigma,
        1.0,
        1.0,
    )
}

/// Per-query matching record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingDiagnostics {
    /// `m₂`-th smallest stage-two matching distance.
    pub d1: f64,
    /// Distance from the query to its `m₁`-th nearest control.
    pub d2: f64,
    /// Stage-one control indices, nearest first.
    pub stage1_indices: Vec<usize>,
    /// Kept control indices ordered by matching distance.
    pub kept_indices: Vec<usize>,
    /// Treatment index matched to each kept control.
    pub matched_indices: Vec<usize>,
}

/// Search structures for repeated queries against one sample.
#[derive(Debug, Clone)]
pub struct RandomDesignEstimator {
    config: RandomConfig,
    dimension: usize,
    controls: KdTree,
    /// Nearest treatment point of every control.
    matches: Vec<Neighbor>,
    /// `Y¹_{j(i)} − Y⁰_i` for every control `i`.
    differences: Vec<f64>,
}

impl RandomDesignEstimator {
    pub fn fit(data: &ObservationSet, config: &RandomConfig) -> Result<Self> {
        config.validate()?;
        if data.treatment().is_empty() || data.control().is_empty() {
            return Err(HteError::EmptyPointSet);
        }
        if config.m1 > data.control().len() {
            return Err(HteError::TooManyNeighbors {
                k: config.m1,
                available: data.control().len(),
            });
        }
        let controls = KdTree::new(&data.control_covariates())?;
        let treated = KdTree::new(&data.treatment_covariates())?;
        let mut matches = Vec::with_capacity(data.control().len());
        let mut differences = Vec::with_capacity(data.control().len());
        for obs in data.control() {
            let nb = treated.nearest(obs.x.coords())?;
            differences.push(data.treatment()[nb.index].y - obs.y);
            matches.push(nb);
        }
        Ok(Self {
            config: *config,
            dimension: data.dimension(),
            controls,
            matches,
            differences,
        })
    }

    pub fn config(&self) -> &RandomConfig {
        &self.config
    }

    /// Nearest treatment point of each control, in control order.
    pub fn matches(&self) -> &[Neighbor] {
        &self.matches
    }

    /// Stage-one neighbors and the kept subset ordered by `(d_i, i)`.
    fn select(&self, query: &[f64]) -> Result<(Vec<Neighbor>, Vec<usize>)> {
        if query.len() != self.dimension {
            return Err(HteError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        let stage1 = self.controls.k_nearest(query, self.config.m1)?;
        let mut ranked: Vec<usize> = stage1.iter().map(|n| n.index).collect();
        ranked.sort_by(|&a, &b| {
            self.matches[a]
                .distance
                .total_cmp(&self.matches[b].distance)
                .then(a.cmp(&b))
        });
        ranked.truncate(self.config.m2);
        Ok((stage1, ranked))
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        let (_, mut kept) = self.select(query)?;
        // Sum in control-index order so the result does not depend on the
        // ranking's internal ordering.
        kept.sort_unstable();
        let sum: f64 = kept.iter().map(|&i| self.differences[i]).sum();
        Ok(sum / kept.len() as f64)
    }

    pub fn predict_many(&self, queries: &[Covariate]) -> Result<Vec<f64>> {
        queries.iter().map(|q| self.predict(q.coords())).collect()
    }

    pub fn diagnostics(&self, query: &[f64]) -> Result<MatchingDiagnostics> {
        let (stage1, kept) = self.select(query)?;
        let d1 = kept.last().map_or(0.0, |&i| self.matches[i].distance);
        let d2 = stage1.last().map_or(0.0, |n| n.distance);
        Ok(MatchingDiagnostics {
            d1,
            d2,
            stage1_indices: stage1.iter().map(|n| n.index).collect(),
            matched_indices: kept.iter().map(|&i| self.matches[i].index).collect(),
            kept_indices: kept,
        })
    }
}

/// Selected-matching estimate `τ̂(x₀)` at each query.
pub fn estimate_random(
    data: &ObservationSet,
    config: &RandomConfig,
    queries: &[Covariate],
) -> Result<Vec<f64>> {
    RandomDesignEstimator::fit(data, config)?.predict_many(queries)
}

pub fn matching_diagnostics(
    data: &ObservationSet,
    config: &RandomConfig,
    query: &Covariate,
) -> Result<MatchingDiagnostics> {
    RandomDesignEstimator::fit(data, config)?.diagnostics(query.coords())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Observation;

    fn four_point() -> ObservationSet {
        let obs = |x: f64, y: f64| Observation::new(Covariate::scalar(x).unwrap(), y);
        let control = [0.1, 0.4, 0.6, 0.9].iter().map(|&x| obs(x, 0.0)).collect();
        let treatment = [0.12, 0.45, 0.58, 0.95]
            .iter()
            .map(|&x| obs(x, x))
            .collect();
        ObservationSet::new(1, control, treatment).unwrap()
    }

    #[test]
    fn hand_traced_example() {
        let data = four_point();
        let cfg = RandomConfig::new(2, 1, 1.0).unwrap();
        let q = Covariate::scalar(0.5).unwrap();
        let est = estimate_random(&data, &cfg, std::slice::from_ref(&q)).unwrap();
        assert_eq!(est, vec![0.58]);
        let diag = matching_diagnostics(&data, &cfg, &q).unwrap();
        assert!((diag.d1 - 0.02).abs() < 1e-12);
        assert!((diag.d2 - 0.1).abs() < 1e-12);
        assert_eq!(diag.kept_indices, vec![2]);
        assert_eq!(diag.matched_indices, vec![2]);
        let full = RandomConfig::full_matching(2).unwrap();
        let est = estimate_random(&data, &full, &[q]).unwrap();
        assert!((est[0] - 0.515).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RandomConfig::new(4, 2, 2.0).is_ok());
        assert!(RandomConfig::new(3, 2, 2.0).is_err());
        assert!(RandomConfig::new(2, 3, 1.0).is_err());
        assert!(RandomConfig::new(2, 0, 1.0).is_err());
        assert!(RandomConfig::new(2, 1, 0.5).is_err());
        let data = four_point();
        let q = [Covariate::scalar(0.5).unwrap()];
        assert!(matches!(
            estimate_random(&data, &RandomConfig::new(5, 1, 1.0).unwrap(), &q),
            Err(HteError::TooManyNeighbors { k: 5, available: 4 })
        ));
        let no_treat = ObservationSet::new(1, data.control().to_vec(), vec![]).unwrap();
        assert!(estimate_random(&no_treat, &RandomConfig::new(1, 1, 1.0).unwrap(), &q).is_err());
    }

    #[test]
    fn overlapping_groups_have_zero_d1() {
        let obs = |x: f64| Observation::new(Covariate::scalar(x).unwrap(), x);
        let xs = [0.05, 0.3, 0.31, 0.7, 0.99];
        let data = ObservationSet::new(
            1,
            xs.iter().map(|&x| obs(x)).collect(),
            xs.iter().map(|&x| obs(x)).collect(),
        )
        .unwrap();
        let cfg = RandomConfig::new(3, 2, 1.0).unwrap();
        let diag = matching_diagnostics(&data, &cfg, &Covariate::scalar(0.4).unwrap()).unwrap();
        assert_eq!(diag.d1, 0.0);
        let full = RandomConfig::full_matching(3).unwrap();
        let diag = matching_diagnostics(&data, &full, &Covariate::scalar(0.4).unwrap()).unwrap();
        assert_eq!(diag.kept_indices.len(), 3);
    }

    #[test]
    fn selection_high_noise_example() {
        let sel = select_parameters(1000, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sel.regime, Regime::HighNoise);
        assert!((sel.sigma2 - 1e-3).abs() < 1e-15);
        assert_eq!((sel.m1, sel.m2), (100, 100));
    }

    #[test]
    fn selection_low_noise_clamps() {
        let n = 1000;
        let sel = select_parameters(n, 1, 0.5, 1.0, 3.0, 0.0).unwrap();
        assert_eq!(sel.regime, Regime::LowNoise);
        let floor = (n as f64).ln().ceil() as usize;
        assert_eq!(sel.m2, floor);
        let raw = 3f64.powf(0.5 / 1.5) * (n as f64).powf(0.5 / 1.5);
        let expected = ((raw + 0.5).floor() as usize).max((3.0 * floor as f64).ceil() as usize);
        assert_eq!(sel.m1, expected);
    }

    #[test]
    fn selection_branches_meet_at_sigma2() {
        let input = SelectionInput {
            n: 1_000_000,
            d: 1,
            beta_mu: 0.5,
            beta_tau: 1.0,
            kappa: 2.0,
        };
        let (_, s2) = input.thresholds();
        let a = input.branch_values(Regime::Intermediate, s2);
        let b = input.branch_values(Regime::HighNoise, s2);
        for r in [a.0 / b.0, a.1 / b.1] {
            assert!((0.125..=8.0).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn selection_errors() {
        assert!(matches!(
            select_parameters(100, 1, 1.0, 1.5, 1.0, 1.0),
            Err(HteError::SmoothnessTooHigh { .. })
        ));
        assert!(select_parameters(10, 1, 1.0, 1.0, 11.0, 1.0).is_err());
        assert!(select_parameters(10, 1, 1.0, 0.5, 1.0, 1.0).is_err());
    }
}

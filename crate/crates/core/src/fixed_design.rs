//! Grid-design estimator.
//!
//! Control covariates sit on `{0, 1/m, …, (m−1)/m}^d` and treatment covariates
//! on the same grid shifted by `Δ`. For each control point the treatment
//! outcome is interpolated from the `t^d` surrounding treatment points with
//! tensor-product weights (`t = ⌊β_μ⌋ + 1`), and the HTE is the
//! Nadaraya–Watson smooth of the pseudo-differences `Ŷ¹(X⁰_i) − Y⁰_i` with a
//! kernel of order `⌊β_τ⌋`.

use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, ObservationSet};
use crate::error::{invalid, HteError, Result};
use crate::kernels::{make_kernel, Kernel};

/// Coordinates within this distance of a grid node are treated as on it.
const GRID_TOLERANCE: f64 = 1e-9;

/// Control grid `{0, 1/m, …}^d` and its shifted treatment copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDesign {
    m: usize,
    shift: Vec<f64>,
}

impl GridDesign {
    /// `shift` components must lie in `[0, 1/(2m)]`, which keeps the
    /// treatment grid inside the unit cube.
    pub fn new(m: usize, shift: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if shift.is_empty() {
            return Err(invalid("shift", "needs one component per dimension"));
        }
        let limit = 0.5 / m as f64;
        for &s in &shift {
            if !(0.0..=limit).contains(&s) {
                return Err(invalid(
                    "shift",
                    format!("component {s} outside [0, 1/(2m)] = [0, {limit}]"),
                ));
            }
        }
        Ok(Self { m, shift })
    }

    /// Design with `n = m^d` points per group; `n` must be a perfect power.
    pub fn from_n(n: usize, shift: Vec<f64>) -> Result<Self> {
        let d = shift.len();
        if d == 0 {
            return Err(invalid("shift", "needs one component per dimension"));
        }
        let m = integer_root(n, d)
            .ok_or_else(|| invalid("n", format!("{n} is not a perfect {d}-th power")))?;
        Self::new(m, shift)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dimension(&self) -> usize {
        self.shift.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// `‖Δ‖_∞`.
    pub fn shift_norm(&self) -> f64 {
        self.shift.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    pub fn n(&self) -> usize {
        self.m.pow(self.dimension() as u32)
    }

    pub fn control_coord(&self, k: usize) -> f64 {
        k as f64 / self.m as f64
    }

    pub fn treatment_coord(&self, axis: usize, k: usize) -> f64 {
        k as f64 / self.m as f64 + self.shift[axis]
    }

    /// Per-axis grid indices of flat index `flat` (axis 0 varies fastest).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        (0..self.dimension())
            .map(|_| {
                let k = flat % self.m;
                flat /= self.m;
                k
            })
            .collect()
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &k| acc * self.m + k)
    }

    pub fn control_grid(&self) -> Vec<Covariate> {
        (0..self.n())
            .map(|f| {
                let coords = self
                    .unflatten(f)
                    .iter()
                    .map(|&k| self.control_coord(k))
                    .collect();
                Covariate::new(coords).expect("grid lies in the unit cube")
            })
            .collect()
    }

    pub fn treatment_grid(&self) -> Vec<Covariate> {
        (0..self.n())
            .map(|f| {
                let coords = self
                    .unflatten(f)
                    .iter()
                    .enumerate()
                    .map(|(axis, &k)| self.treatment_coord(axis, k))
                    .collect();
                Covariate::new(coords).expect("shift keeps the grid in the unit cube")
            })
            .collect()
    }

    fn locate(&self, coords: &[f64], shift: impl Fn(usize) -> f64) -> Option<usize> {
        let mut idx = Vec::with_capacity(coords.len());
        for (axis, &x) in coords.iter().enumerate() {
            let u = (x - shift(axis)) * self.m as f64;
            let k = u.round();
            if (u - k).abs() > GRID_TOLERANCE * self.m as f64 || k < 0.0 || k >= self.m as f64 {
                return None;
            }
            idx.push(k as usize);
        }
        Some(self.flatten(&idx))
    }

    fn locate_control(&self, coords: &[f64]) -> Option<usize> {
        self.locate(coords, |_| 0.0)
    }

    fn locate_treatment(&self, coords: &[f64]) -> Option<usize> {
        self.locate(coords, |axis| self.shift[axis])
    }
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&m| m > 0 && m.checked_pow(d as u32) == Some(n))
}

/// Smoothness assumptions and bandwidth for the grid estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedConfig {
    pub beta_mu: f64,
    pub beta_tau: f64,
    pub bandwidth: f64,
}

impl FixedConfig {
    pub fn new(beta_mu: f64, beta_tau: f64, bandwidth: f64) -> Result<Self> {
        let cfg = Self {
            beta_mu,
            beta_tau,
            bandwidth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_mu > 0.0 && self.beta_mu <= self.beta_tau && self.beta_tau.is_finite()) {
            return Err(invalid(
                "beta",
                format!(
                    "need 0 < beta_mu <= beta_tau, got ({}, {})",
                    self.beta_mu, self.beta_tau
                ),
            ));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 1.0) {
            return Err(invalid(
                "bandwidth",
                format!("must lie in (0, 1), got {}", self.bandwidth),
            ));
        }
        Ok(())
    }

    /// Interpolation stencil width per axis, `⌊β_μ⌋ + 1`.
    pub fn stencil(&self) -> usize {
        self.beta_mu.floor() as usize + 1
    }

    pub fn kernel_order(&self) -> usize {
        self.beta_tau.floor() as usize
    }
}

/// Weights `w` with `Σ_i w_i (z_i − x)^ℓ = 1(ℓ = 0)` for `ℓ < t`, i.e. the
/// solution of the `t × t` Vandermonde system, in Lagrange form
/// `w_i = Π_{j≠i} (x − z_j)/(z_i − z_j)`.
pub fn interpolation_weights(x: f64, grid_coords: &[f64]) -> Result<Vec<f64>> {
    if grid_coords.is_empty() {
        return Err(invalid("grid_coords", "need at least one node"));
    }
    let mut weights = Vec::with_capacity(grid_coords.len());
    for (i, &zi) in grid_coords.iter().enumerate() {
        let mut w = 1.0;
        for (j, &zj) in grid_coords.iter().enumerate() {
            if i != j {
                let gap = zi - zj;
                if gap == 0.0 {
                    return Err(HteError::Singular(format!(
                        "duplicate interpolation nodes at positions {j} and {i}"
                    )));
                }
                w *= (x - zj) / gap;
            }
        }
        weights.push(w);
    }
    Ok(weights)
}

/// Whether nearest-first ordered weights respect `|w_0| ≤ 1 + t(t+1)^{t−1}`
/// and `|w_j| ≤ (t+1)^{t−1}·mΔ` for `j ≥ 1`.
pub fn weight_bounds_check(weights: &[f64], m: usize, delta: f64, t: usize) -> bool {
    let Some((first, rest)) = weights.split_first() else {
        return false;
    };
    let base = ((t + 1) as f64).powi(t as i32 - 1);
    let w0_bound = 1.0 + t as f64 * base;
    let wj_bound = base * m as f64 * delta;
    let slack = 1e-12;
    first.abs() <= w0_bound + slack && rest.iter().all(|w| w.abs() <= wj_bound + slack)
}

/// The `t` treatment-grid indices nearest to control index `k` along an axis
/// with shift `delta`, nearest first (ties towards the lower index).
fn axis_stencil(m: usize, delta: f64, k: usize, t: usize) -> Vec<usize> {
    let x = k as f64 / m as f64;
    let lo = k.saturating_sub(t);
    let hi = (k + t).min(m - 1);
    let mut cand: Vec<(f64, usize)> = (lo..=hi)
        .map(|j| (((j as f64 / m as f64) + delta - x).abs(), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().take(t).map(|(_, j)| j).collect()
}

/// Interpolation stencils and weights along one axis, for every control index.
#[derive(Debug, Clone)]
struct AxisTable {
    nodes: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl AxisTable {
    fn new(design: &GridDesign, axis: usize, t: usize) -> Result<Self> {
        let m = design.m();
        let delta = design.shift()[axis];
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for k in 0..m {
            let stencil = axis_stencil(m, delta, k, t);
            let coords: Vec<f64> = stencil
                .iter()
                .map(|&j| design.treatment_coord(axis, j))
                .collect();
            weights.push(interpolation_weights(design.control_coord(k), &coords)?);
            nodes.push(stencil);
        }
        Ok(Self { nodes, weights })
    }
}

/// Control and treatment outcomes arranged by flat grid index.
struct GridOutcomes {
    control: Vec<f64>,
    treatment: Vec<f64>,
    /// Flat grid index of each control observation, in data order.
    control_slots: Vec<usize>,
}

fn arrange(data: &ObservationSet, design: &GridDesign) -> Result<GridOutcomes> {
    if data.dimension() != design.dimension() {
        return Err(HteError::DimensionMismatch {
            expected: design.dimension(),
            got: data.dimension(),
        });
    }
    let n = design.n();
    if data.control().len() != n || data.treatment().len() != n {
        return Err(HteError::DesignMismatch(format!(
            "expected {n} points per group, got {} control and {} treatment",
            data.control().len(),
            data.treatment().len()
        )));
    }
    let mut control = vec![f64::NAN; n];
    let mut treatment = vec![f64::NAN; n];
    let mut seen_c = vec![false; n];
    let mut seen_t = vec![false; n];
    let mut control_slots = Vec::with_capacity(n);
    for (i, obs) in data.control().iter().enumerate() {
        let slot = design.locate_control(obs.x.coords()).ok_or_else(|| {
            HteError::DesignMismatch(format!("control point {i} is off the grid"))
        })?;
        if std::mem::replace(&mut seen_c[slot], true) {
            return Err(HteError::DesignMismatch(format!(
                "control grid node {slot} repeated"
            )));
        }
        control[slot] = obs.y;
        control_slots.push(slot);
    }
    for (i, obs) in data.treatment().iter().enumerate() {
        let slot = design.locate_treatment(obs.x.coords()).ok_or_else(|| {
            HteError::DesignMismatch(format!("treatment point {i} is off the shifted grid"))
        })?;
        if std::mem::replace(&mut seen_t[slot], true) {
            return Err(HteError::DesignMismatch(format!(
                "treatment grid node {slot} repeated"
            )));
        }
        treatment[slot] = obs.y;
    }
    Ok(GridOutcomes {
        control,
        treatment,
        control_slots,
    })
}

fn pseudo_by_slot(design: &GridDesign, treatment: &[f64], t: usize) -> Result<Vec<f64>> {
    if t > design.m() {
        return Err(invalid(
            "beta_mu",
            format!(
                "stencil of {t} points exceeds the {} grid points per axis",
                design.m()
            ),
        ));
    }
    let d = design.dimension();
    let tables: Vec<AxisTable> = (0..d)
        .map(|axis| AxisTable::new(design, axis, t))
        .collect::<Result<_>>()?;
    let stencil_size = t.pow(d as u32);
    let mut out = Vec::with_capacity(design.n());
    let mut node = vec![0usize; d];
    for flat in 0..design.n() {
        let idx = design.unflatten(flat);
        let mut total = 0.0;
        for s in 0..stencil_size {
            let mut rem = s;
            let mut w = 1.0;
            for axis in 0..d {
                let a = rem % t;
                rem /= t;
                node[axis] = tables[axis].nodes[idx[axis]][a];
                w *= tables[axis].weights[idx[axis]][a];
            }
            total += w * treatment[design.flatten(&node)];
        }
        out.push(total);
    }
    Ok(out)
}

/// Interpolated treatment outcome `Ŷ¹(X⁰_i)` for every control observation,
/// in the order of `data.control()`.
pub fn pseudo_observations(
    data: &ObservationSet,
    design: &GridDesign,
    config: &FixedConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let grid = arrange(data, design)?;
    let by_slot = pseudo_by_slot(design, &grid.treatment, config.stencil())?;
    Ok(grid.control_slots.iter().map(|&s| by_slot[s]).collect())
}

/// A fitted grid-design estimator, evaluable at arbitrary query points.
#[derive(Debug, Clone)]
pub struct FixedDesignEstimator {
    design: GridDesign,
    kernel: Kernel,
    bandwidth: f64,
    /// Pseudo-differences `Ŷ¹ − Y⁰` by flat control-grid index.
    differences: Vec<f64>,
}

impl FixedDesignEstimator {
    pub fn fit(data: &ObservationSet, design: &GridDesign, config: &FixedConfig) -> Result<Self> {
        config.validate()?;
        let grid = arrange(data, design)?;
        let pseudo = pseudo_by_slot(design, &grid.treatment, config.stencil())?;
        let differences = pseudo
            .iter()
            .zip(&grid.control)
            .map(|(p, y)| p - y)
            .collect();
        Ok(Self::from_differences(
            design.clone(),
            make_kernel(config.kernel_order(), design.dimension())?,
            config.bandwidth,
            differences,
        ))
    }

    pub(crate) fn from_differences(
        design: GridDesign,
        kernel: Kernel,
        bandwidth: f64,
        differences: Vec<f64>,
    ) -> Self {
        Self {
            design,
            kernel,
            bandwidth,
            differences,
        }
    }

    pub fn differences(&self) -> &[f64] {
        &self.differences
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        let d = self.design.dimension();
        if query.len() != d {
            return Err(HteError::DimensionMismatch {
                expected: d,
                got: query.len(),
            });
        }
        let m = self.design.m();
        let mf = m as f64;
        let h = self.bandwidth;
        // Per-axis index window covering the kernel support.
        let ranges: Vec<(usize, usize)> = query
            .iter()
            .map(|&q| {
                let lo = ((q - h) * mf).ceil().max(0.0) as usize;
                let hi = (((q + h) * mf).floor().max(-1.0) as isize).min(m as isize - 1);
                (lo, hi.max(-1) as usize)
            })
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        if ranges.iter().all(|&(lo, hi)| hi != usize::MAX && lo <= hi) {
            let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
            let mut point = vec![0.0; d];
            'outer: loop {
                for (p, &k) in point.iter_mut().zip(&idx) {
                    *p = self.design.control_coord(k);
                }
                let w = self.kernel.weight(&point, query, h);
                if w != 0.0 {
                    num += w * self.differences[self.design.flatten(&idx)];
                    den += w;
                }
                for axis in 0..d {
                    if idx[axis] < ranges[axis].1 {
                        idx[axis] += 1;
                        continue 'outer;
                    }
                    idx[axis] = ranges[axis].0;
                }
                break;
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Ok(self.differences[self.nearest_control(query)])
        }
    }

    /// Flat index of the control node nearest to `query` (lower index on ties).
    fn nearest_control(&self, query: &[f64]) -> usize {
        let m = self.design.m();
        let idx: Vec<usize> = query
            .iter()
            .map(|&q| {
                let below = ((q * m as f64).floor().max(0.0) as usize).min(m - 1);
                let above = (below + 1).min(m - 1);
                let db = (q - self.design.control_coord(below)).abs();
                let da = (q - self.design.control_coord(above)).abs();
                if da < db {
                    above
                } else {
                    below
                }
            })
            .collect();
        self.design.flatten(&idx)
    }

    pub fn predict_many(&self, queries: &[Covariate]) -> Result<Vec<f64>> {
        queries.iter().map(|q| self.predict(q.coords())).collect()
    }
}

/// `τ̂(x₀)` at each query: Nadaraya–Watson smoothing of the pseudo-differences.
/// A query whose kernel window holds no positive total weight takes the
/// pseudo-difference of its nearest control node.
pub fn estimate_fixed(
    data: &ObservationSet,
    design: &GridDesign,
    config: &FixedConfig,
    queries: &[Covariate],
) -> Result<Vec<f64>> {
    FixedDesignEstimator::fit(data, design, config)?.predict_many(queries)
}

/// `n^{−1/(2β_τ + d)}`, capped at 0.5 so that it is a valid bandwidth.
pub fn default_bandwidth(n: usize, d: usize, beta_tau: f64) -> f64 {
    let n = n.max(1) as f64;
    n.powf(-1.0 / (2.0 * beta_tau + d as f64)).min(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Observation;
    use proptest::prelude::*;

    fn grid_data(
        design: &GridDesign,
        mu0: impl Fn(&[f64]) -> f64,
        mu1: impl Fn(&[f64]) -> f64,
    ) -> ObservationSet {
        let control = design
            .control_grid()
            .into_iter()
            .map(|x| {
                let y = mu0(x.coords());
                Observation::new(x, y)
            })
            .collect();
        let treatment = design
            .treatment_grid()
            .into_iter()
            .map(|x| {
                let y = mu1(x.coords());
                Observation::new(x, y)
            })
            .collect();
        ObservationSet::new(design.dimension(), control, treatment).unwrap()
    }

    #[test]
    fn design_validation() {
        assert!(GridDesign::new(4, vec![0.125]).is_ok());
        assert!(GridDesign::new(4, vec![0.13]).is_err());
        assert!(GridDesign::new(4, vec![-0.01]).is_err());
        assert_eq!(GridDesign::from_n(100, vec![0.0, 0.0]).unwrap().m(), 10);
        assert!(GridDesign::from_n(50, vec![0.0, 0.0]).is_err());
        let g = GridDesign::new(4, vec![0.1]).unwrap();
        let t: Vec<f64> = g.treatment_grid().iter().map(|c| c.coords()[0]).collect();
        let expected = [0.1, 0.35, 0.6, 0.85];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        assert!(FixedConfig::new(1.0, 0.5, 0.1).is_err());
        assert!(FixedConfig::new(0.5, 1.0, 1.0).is_err());
        let c = FixedConfig::new(1.5, 2.5, 0.2).unwrap();
        assert_eq!(c.stencil(), 2);
        assert_eq!(c.kernel_order(), 2);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(interpolation_weights(0.37, &[0.9]).unwrap(), vec![1.0]);
        let w = interpolation_weights(0.5, &[0.53, 0.43]).unwrap();
        assert!((w[0] - 0.7).abs() < 1e-12 && (w[1] - 0.3).abs() < 1e-12);
        let w = interpolation_weights(0.4, &[0.4, 0.5, 0.3]).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            interpolation_weights(0.4, &[0.3, 0.3]),
            Err(HteError::Singular(_))
        ));
    }

    #[test]
    fn weight_bound_examples() {
        assert!(weight_bounds_check(&[1.0], 17, 0.01, 1));
        assert!(weight_bounds_check(&[0.7, 0.3], 10, 0.03, 2));
        assert!(!weight_bounds_check(&[0.7, 0.95], 10, 0.03, 2));
    }

    #[test]
    fn stencil_is_nearest_first_and_one_sided_at_edges() {
        assert_eq!(axis_stencil(10, 0.03, 5, 3), vec![5, 4, 6]);
        assert_eq!(axis_stencil(10, 0.03, 0, 3), vec![0, 1, 2]);
        assert_eq!(axis_stencil(10, 0.03, 9, 3), vec![9, 8, 7]);
        // exact tie at delta = 1/(2m): lower index first
        assert_eq!(axis_stencil(4, 0.125, 2, 2), vec![1, 2]);
    }

    #[test]
    fn perfect_matching_reproduces_treatment_outcome() {
        let design = GridDesign::new(6, vec![0.0, 0.0]).unwrap();
        let data = grid_data(&design, |x| x[0].sin(), |x| (3.0 * x[1]).cos() + x[0]);
        for beta_mu in [0.5, 1.5, 2.5] {
            let cfg = FixedConfig::new(beta_mu, 3.0, 0.3).unwrap();
            let pseudo = pseudo_observations(&data, &design, &cfg).unwrap();
            for (p, obs) in pseudo.iter().zip(data.control()) {
                let x = obs.x.coords();
                assert_eq!(*p, (3.0 * x[1]).cos() + x[0]);
            }
        }
    }

    #[test]
    fn hand_traced_quadratic_bias() {
        let design = GridDesign::new(10, vec![0.03]).unwrap();
        let data = grid_data(&design, |_| 0.0, |x| x[0] * x[0]);
        let cfg = FixedConfig::new(1.5, 1.5, 0.2).unwrap();
        let pseudo = pseudo_observations(&data, &design, &cfg).unwrap();
        let expected = 0.7 * 0.53f64.powi(2) + 0.3 * 0.43f64.powi(2);
        assert!((pseudo[5] - expected).abs() < 1e-12);
        assert!((pseudo[5] - 0.25 - 0.0021).abs() < 1e-12);
    }

    #[test]
    fn off_grid_data_is_rejected() {
        let design = GridDesign::new(4, vec![0.1]).unwrap();
        let other = GridDesign::new(4, vec![0.05]).unwrap();
        let data = grid_data(&other, |_| 0.0, |_| 0.0);
        let cfg = FixedConfig::new(0.5, 1.0, 0.3).unwrap();
        assert!(matches!(
            pseudo_observations(&data, &design, &cfg),
            Err(HteError::DesignMismatch(_))
        ));
        let small = GridDesign::new(3, vec![0.1]).unwrap();
        assert!(pseudo_observations(&data, &small, &cfg).is_err());
    }

    #[test]
    fn constant_pseudo_differences_are_reproduced() {
        let design = GridDesign::new(8, vec![0.05, 0.02]).unwrap();
        let data = grid_data(
            &design,
            |x| 5.0 * x[0] + 2.0 * x[1],
            |x| 5.0 * x[0] + 2.0 * x[1] + 1.25,
        );
        let cfg = FixedConfig::new(1.0, 1.0, 0.2).unwrap();
        let queries: Vec<Covariate> = [[0.0, 0.0], [0.3, 0.7], [0.99, 0.5], [1.0, 1.0]]
            .iter()
            .map(|q| Covariate::new(q.to_vec()).unwrap())
            .collect();
        for v in estimate_fixed(&data, &design, &cfg, &queries).unwrap() {
            assert!((v - 1.25).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn linear_effect_recovered_at_interior_on_grid_queries() {
        // NW with a symmetric kernel reproduces linear functions at interior
        // on-grid points where the window is symmetric.
        let design = GridDesign::new(50, vec![0.0]).unwrap();
        let data = grid_data(&design, |_| 0.0, |x| x[0]);
        let cfg = FixedConfig::new(1.0, 1.0, 0.1).unwrap();
        let est = FixedDesignEstimator::fit(&data, &design, &cfg).unwrap();
        for k in [10, 25, 40] {
            let q = k as f64 / 50.0;
            // direct NW oracle
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..50 {
                let x = j as f64 / 50.0;
                let u: f64 = (x - q) / 0.1;
                let w = if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                };
                num += w * x;
                den += w;
            }
            let got = est.predict(&[q]).unwrap();
            assert!((got - num / den).abs() < 1e-12);
            assert!((got - q).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_window_falls_back_to_nearest_node() {
        let design = GridDesign::new(4, vec![0.0]).unwrap();
        let data = grid_data(&design, |_| 0.0, |x| 10.0 * x[0]);
        let cfg = FixedConfig::new(0.5, 1.0, 0.01).unwrap();
        let est = FixedDesignEstimator::fit(&data, &design, &cfg).unwrap();
        assert_eq!(est.predict(&[0.3]).unwrap(), 2.5);
        // midpoint tie between 0.25 and 0.5 resolves to the lower node
        assert_eq!(est.predict(&[0.375]).unwrap(), 2.5);
        assert_eq!(est.predict(&[1.0]).unwrap(), 7.5);
    }

    #[test]
    fn default_bandwidth_examples() {
        assert_eq!(default_bandwidth(1, 1, 1.0), 0.5);
        assert!((default_bandwidth(1000, 1, 1.0) - 0.1).abs() < 1e-12);
        assert!((default_bandwidth(1_000_000, 2, 1.0) - 10f64.powf(-1.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_satisfy_moment_equations(
            x in 0.0f64..1.0,
            offsets in prop::collection::btree_set(-20i32..20, 1..6),
            scale in 0.01f64..0.2,
        ) {
            let nodes: Vec<f64> = offsets.iter().map(|&o| x + o as f64 * scale / 7.0 + 0.001).collect();
            let w = interpolation_weights(x, &nodes).unwrap();
            for l in 0..nodes.len() {
                let s: f64 = w.iter().zip(&nodes).map(|(wi, z)| wi * (z - x).powi(l as i32)).sum();
                let target = if l == 0 { 1.0 } else { 0.0 };
                prop_assert!((s - target).abs() < 1e-10, "l={} s={}", l, s);
            }
        }

        #[test]
        fn nw_is_equivariant_under_constant_shift(c in -5.0f64..5.0, q in 0.0f64..1.0) {
            let design = GridDesign::new(12, vec![0.02]).unwrap();
            let base = grid_data(&design, |x| x[0].sin(), |x| (2.0 * x[0]).cos());
            let shifted = grid_data(&design, |x| x[0].sin(), |x| (2.0 * x[0]).cos() + c);
            let cfg = FixedConfig::new(0.5, 1.0, 0.2).unwrap();
            let a = FixedDesignEstimator::fit(&base, &design, &cfg).unwrap().predict(&[q]).unwrap();
            let b = FixedDesignEstimator::fit(&shifted, &design, &cfg).unwrap().predict(&[q]).unwrap();
            prop_assert!((b - a - c).abs() < 1e-12);
        }
    }
}

//! Lower-bound instances: nonzero `(μ₀, τ)` pairs whose noiseless outcomes
//! vanish at every observed covariate, so the data cannot tell them apart
//! from the all-zero pair.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, HolderSpec, ObservationSet};
use crate::error::{invalid, HteError, Result};
use crate::fixed_design::GridDesign;
use crate::functions::{cell_position, Function};
use crate::holder::{holder_quotient, HolderExtension, ValueSpec};
use crate::neighbors::{distance_unchecked, KdTree};

/// Fraction of the Hölder radius the instances are scaled to.
pub const MARGIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Quadrature estimate of `‖τ‖₁` over `[0, 1]^d`.
    pub objective: f64,
    /// Largest `|μ₀(X⁰_i)|` or `|μ₀(X¹_i) + τ(X¹_i)|`.
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub mu0: Function,
    pub tau: Function,
    pub certificate: Certificate,
    /// The scale `c` applied to the unscaled construction.
    pub scale: f64,
    pub dimension: usize,
}

/// `0` below 0, `1` above 1, and `e^{−1/t} / (e^{−1/t} + e^{−1/(1−t)})` between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// One-dimensional plateau bump: 1 on `[1/4, 3/4]`, 0 at the endpoints.
pub fn plateau_bump(x: f64) -> f64 {
    smooth_step(4.0 * x) * smooth_step(4.0 * (1.0 - x))
}

/// `h(x) = Π_j plateau_bump(x_j)`.
pub fn bump(x: &[f64]) -> f64 {
    x.iter().map(|&v| plateau_bump(v)).product()
}

/// Upper bound on the Lipschitz constant of [`plateau_bump`].
fn bump_lipschitz() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| {
        let n = 200_000;
        let step = 1.0 / n as f64;
        let max = (0..n)
            .map(|i| (smooth_step((i + 1) as f64 * step) - smooth_step(i as f64 * step)) / step)
            .fold(0.0, f64::max);
        4.0 * max * 1.01
    })
}

/// Midpoint-rule `∫_{[0,1]^d} |f|`: 1000 nodes per axis in `d = 1`, 100 in
/// `d = 2`, and about `10⁵` nodes in total beyond.
pub fn l1_norm(f: &Function, d: usize) -> f64 {
    let per_axis = match d {
        1 => 1000,
        2 => 100,
        _ => (1e5f64.powf(1.0 / d as f64).floor() as usize).max(2),
    };
    let step = 1.0 / per_axis as f64;
    let total = per_axis.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        for xi in x.iter_mut() {
            *xi = ((rem % per_axis) as f64 + 0.5) * step;
            rem /= per_axis;
        }
        sum += f.eval(&x).abs();
    }
    sum / total as f64
}

/// Largest `|f(x)| ` or `|f(x) + g(x)|` over the control and treatment
/// covariates: zero certifies that `(f, g)` reproduces noiseless all-zero
/// data.
fn residual(mu0: &Function, tau: &Function, data: &ObservationSet) -> f64 {
    let c = data.control().iter().map(|o| mu0.eval(o.x.coords()).abs());
    let t = data
        .treatment()
        .iter()
        .map(|o| (mu0.eval(o.x.coords()) + tau.eval(o.x.coords())).abs());
    c.chain(t).fold(0.0, f64::max)
}

/// Grid-design instance. Along the axis of largest shift, each control cell
/// `[k/m, (k+1)/m]` carries the bump `c m^{−b} [u(1−u)]^b` with `b = β_μ ∧ 1`,
/// which vanishes on the control grid and equals `c m^{−b} g(mΔ)` on the
/// treatment grid; `τ` is minus that constant. Both are damped by the
/// plateau bump `h`.
pub fn fixed_adversary(
    design: &GridDesign,
    beta_mu: f64,
    beta_tau: f64,
) -> Result<AdversarialInstance> {
    if !(beta_mu > 0.0 && beta_mu <= beta_tau) {
        return Err(invalid("beta_mu", "need 0 < beta_mu <= beta_tau"));
    }
    let d = design.dimension();
    let m = design.m();
    let b = beta_mu.min(1.0);
    let axis = (0..d)
        .max_by(|&i, &j| {
            design.shift()[i]
                .abs()
                .total_cmp(&design.shift()[j].abs())
                .then(j.cmp(&i))
        })
        .unwrap_or(0);
    let mdelta = m as f64 * design.shift()[axis];
    let mf = m as f64;
    // Hölder bounds of the unscaled pieces with radius 1.
    let lip_h = bump_lipschitz() * (d as f64).sqrt();
    let amp = mf.powf(-b) * (mdelta * (1.0 - mdelta)).max(0.0).powf(b);
    let mu_bound = 1.0 + (4.0 * mf).powf(-b) * lip_h.powf(b);
    let tau_bound = amp * lip_h.powf(beta_tau.min(1.0));
    let scale = MARGIN / mu_bound.max(tau_bound);

    let profile = move |x: &[f64]| {
        let (_, u) = cell_position(x[axis], m);
        mf.powf(-b) * (u * (1.0 - u)).powf(b)
    };
    let mu0 = Function::new("fixed_adversary_mu0", move |x| scale * bump(x) * profile(x));
    let tau_amp = scale * amp;
    let tau = Function::new("fixed_adversary_tau", move |x| -tau_amp * bump(x));

    let data = grid_zero_data(design)?;
    let certificate = Certificate {
        objective: l1_norm(&tau, d),
        max_constraint_violation: residual(&mu0, &tau, &data),
    };
    Ok(AdversarialInstance {
        mu0,
        tau,
        certificate,
        scale,
        dimension: d,
    })
}

fn grid_zero_data(design: &GridDesign) -> Result<ObservationSet> {
    let zero = |xs: Vec<Covariate>| {
        xs.into_iter()
            .map(|x| crate::domain::Observation::new(x, 0.0))
            .collect()
    };
    ObservationSet::new(
        design.dimension(),
        zero(design.control_grid()),
        zero(design.treatment_grid()),
    )
}

/// Value specifications of the random-design instance before scaling:
/// `μ₀ = 0` on controls and `μ₀ = −τ = v_i` on treatments, with
/// `v_i = min_j (‖X¹_i − X¹_j‖^{β_τ} + min_k ‖X¹_j − X⁰_k‖^{β_μ})`.
pub fn random_adversary_values(
    data: &ObservationSet,
    beta_mu: f64,
    beta_tau: f64,
) -> Result<Vec<f64>> {
    if data.control().is_empty() || data.treatment().is_empty() {
        return Err(HteError::EmptyPointSet);
    }
    let controls = KdTree::new(&data.control_covariates())?;
    let treated = data.treatment_covariates();
    let gap: Vec<f64> = treated
        .iter()
        .map(|x| controls.nearest(x).map(|n| n.distance.powf(beta_mu)))
        .collect::<Result<_>>()?;
    Ok(treated
        .iter()
        .map(|xi| {
            treated
                .iter()
                .zip(&gap)
                .map(|(xj, g)| distance_unchecked(xi, xj).powf(beta_tau) + g)
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Random-design instance: the scaled value specifications extended to the
/// cube by envelope midpoints, with the scale set to `0.9` over the larger
/// Hölder quotient of the two specifications.
pub fn random_adversary(
    data: &ObservationSet,
    beta_mu: f64,
    beta_tau: f64,
) -> Result<AdversarialInstance> {
    if beta_tau > 1.0 {
        return Err(HteError::SmoothnessTooHigh {
            beta: beta_tau,
            context: "envelope extension needs beta <= 1",
        });
    }
    if !(beta_mu > 0.0 && beta_mu <= beta_tau) {
        return Err(invalid("beta_mu", "need 0 < beta_mu <= beta_tau"));
    }
    let d = data.dimension();
    let v = random_adversary_values(data, beta_mu, beta_tau)?;
    let build = |c: f64| -> Result<(ValueSpec, ValueSpec)> {
        let mut mu_pts: Vec<(Covariate, f64)> =
            data.control().iter().map(|o| (o.x.clone(), 0.0)).collect();
        let mut tau_pts = Vec::with_capacity(v.len());
        for (o, vi) in data.treatment().iter().zip(&v) {
            mu_pts.push((o.x.clone(), c * vi));
            tau_pts.push((o.x.clone(), -c * vi));
        }
        Ok((dedup(mu_pts)?, dedup(tau_pts)?))
    };
    let (mu_raw, tau_raw) = build(1.0)?;
    let quotient = holder_quotient(&mu_raw, beta_mu).max(holder_quotient(&tau_raw, beta_tau));
    let scale = if quotient > 0.0 {
        MARGIN / quotient
    } else {
        MARGIN
    };
    let (mu_spec, tau_spec) = build(scale)?;
    let mu_ext = HolderExtension::new(mu_spec, HolderSpec::new(d, beta_mu, 1.0)?)?;
    let tau_ext = HolderExtension::new(tau_spec, HolderSpec::new(d, beta_tau, 1.0)?)?;
    let mu0 = Function::new("random_adversary_mu0", move |x| {
        mu_ext.evaluate_unchecked(x)
    });
    let tau = Function::new("random_adversary_tau", move |x| {
        tau_ext.evaluate_unchecked(x)
    });
    let certificate = Certificate {
        objective: l1_norm(&tau, d),
        max_constraint_violation: residual(&mu0, &tau, data),
    };
    Ok(AdversarialInstance {
        mu0,
        tau,
        certificate,
        scale,
        dimension: d,
    })
}

/// Drops exact repeats of a covariate; repeated covariates always carry the
/// same value here because `v_i` is a function of `X¹_i` alone and vanishes
/// on controls.
fn dedup(mut pts: Vec<(Covariate, f64)>) -> Result<ValueSpec> {
    pts.sort_by(|a, b| {
        a.0.coords()
            .iter()
            .zip(b.0.coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup_by(|a, b| a.0 == b.0);
    ValueSpec::new(pts)
}

/// Largest noiseless outcome the instance produces at the observed covariates.
pub fn indistinguishability_check(instance: &AdversarialInstance, data: &ObservationSet) -> f64 {
    residual(&instance.mu0, &instance.tau, data)
}

/// Largest excess `|f(x) − f(y)| − L‖x − y‖^β` over `pairs` random pairs,
/// half of them at small separations; `≤ 0` means no violation was found.
pub fn sampled_holder_excess<R: Rng + ?Sized>(
    f: &Function,
    ball: &HolderSpec,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let d = ball.dimension;
    let mut worst = f64::NEG_INFINITY;
    for p in 0..pairs {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = if p % 2 == 0 {
            (0..d).map(|_| rng.random::<f64>()).collect()
        } else {
            let scale = 10f64.powf(-rng.random_range(1.0..6.0));
            x.iter()
                .map(|&xi| (xi + scale * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0))
                .collect()
        };
        let r = distance_unchecked(&x, &y);
        let excess = (f.eval(&x) - f.eval(&y)).abs() - ball.radius * r.powf(ball.beta);
        worst = worst.max(excess);
    }
    worst
}

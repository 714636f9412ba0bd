//! Hölder-ball feasibility and extension for smoothness `beta ≤ 1`, plus the
//! divided-difference counterexample showing why the pairwise criterion does
//! not generalise to `beta ≥ 2`.
//!
//! For `beta ≤ 1` a value specification `{(x_i, y_i)}` extends to a function
//! of the ball iff every pair satisfies `|y_i − y_j| ≤ L‖x_i − x_j‖^beta`. Any
//! value between the lower envelope `max_j (y_j − L‖x_j − q‖^beta)` and the
//! upper envelope `min_i (y_i + L‖x_i − q‖^beta)` is admissible at `q`; the
//! extension here takes their midpoint.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, HolderSpec};
use crate::error::{invalid, HteError, Result};
use crate::neighbors::distance_unchecked;

/// Additive slack on pairwise Hölder checks.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Prescribed covariate/value pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(Covariate, f64)>", into = "Vec<(Covariate, f64)>")]
pub struct ValueSpec {
    points: Vec<(Covariate, f64)>,
}

impl ValueSpec {
    /// Rejects mixed dimensions and repeated covariates carrying different
    /// values. Exact repeats of a pair are kept; they constrain nothing.
    pub fn new(points: Vec<(Covariate, f64)>) -> Result<Self> {
        if let Some((first, _)) = points.first() {
            let dim = first.dim();
            for (i, (x, y)) in points.iter().enumerate() {
                if x.dim() != dim {
                    return Err(HteError::DimensionMismatch {
                        expected: dim,
                        got: x.dim(),
                    });
                }
                if !y.is_finite() {
                    return Err(invalid("value", format!("non-finite value at {i}")));
                }
                for (x2, y2) in &points[..i] {
                    if x2 == x && y2 != y {
                        return Err(HteError::DuplicatePoint { index: i });
                    }
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(Covariate, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.points.first().map(|(x, _)| x.dim())
    }
}

impl TryFrom<Vec<(Covariate, f64)>> for ValueSpec {
    type Error = HteError;

    fn try_from(points: Vec<(Covariate, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ValueSpec> for Vec<(Covariate, f64)> {
    fn from(spec: ValueSpec) -> Self {
        spec.points
    }
}

fn require_low_smoothness(ball: &HolderSpec) -> Result<()> {
    if ball.beta > 1.0 {
        return Err(HteError::SmoothnessTooHigh {
            beta: ball.beta,
            context: "the pairwise Hölder criterion only characterises beta <= 1",
        });
    }
    Ok(())
}

fn check_dimension(spec: &ValueSpec, ball: &HolderSpec) -> Result<()> {
    match spec.dimension() {
        Some(d) if d != ball.dimension => Err(HteError::DimensionMismatch {
            expected: ball.dimension,
            got: d,
        }),
        _ => Ok(()),
    }
}

/// Worst pairwise violation `|y_i − y_j| − L‖x_i − x_j‖^beta` and its pair.
/// Negative or zero when the specification is feasible without slack.
pub fn max_violation(spec: &ValueSpec, ball: &HolderSpec) -> Option<(usize, usize, f64)> {
    let pts = spec.points();
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..pts.len() {
        for j in 0..i {
            let dist = distance_unchecked(pts[i].0.coords(), pts[j].0.coords());
            let excess = (pts[i].1 - pts[j].1).abs() - ball.radius * dist.powf(ball.beta);
            if worst.is_none_or(|(_, _, w)| excess > w) {
                worst = Some((i, j, excess));
            }
        }
    }
    worst
}

/// Largest quotient `|y_i − y_j| / ‖x_i − x_j‖^beta` over distinct pairs, i.e.
/// the smallest radius for which the specification is feasible.
pub fn holder_quotient(spec: &ValueSpec, beta: f64) -> f64 {
    let pts = spec.points();
    let mut q: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let dist = distance_unchecked(pts[i].0.coords(), pts[j].0.coords());
            if dist > 0.0 {
                q = q.max((pts[i].1 - pts[j].1).abs() / dist.powf(beta));
            }
        }
    }
    q
}

/// Whether some member of the ball interpolates `spec`.
pub fn is_holder_feasible(spec: &ValueSpec, ball: &HolderSpec) -> Result<bool> {
    require_low_smoothness(ball)?;
    check_dimension(spec, ball)?;
    Ok(max_violation(spec, ball).is_none_or(|(_, _, e)| e <= FEASIBILITY_SLACK))
}

/// The envelope-midpoint extension of a feasible specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderExtension {
    spec: ValueSpec,
    ball: HolderSpec,
}

impl HolderExtension {
    pub fn new(spec: ValueSpec, ball: HolderSpec) -> Result<Self> {
        require_low_smoothness(&ball)?;
        check_dimension(&spec, &ball)?;
        if spec.is_empty() {
            return Err(HteError::EmptyPointSet);
        }
        if let Some((i, j, excess)) = max_violation(&spec, &ball) {
            if excess > FEASIBILITY_SLACK {
                return Err(HteError::InfeasibleSpec { i, j, excess });
            }
        }
        Ok(Self { spec, ball })
    }

    pub fn spec(&self) -> &ValueSpec {
        &self.spec
    }

    pub fn ball(&self) -> &HolderSpec {
        &self.ball
    }

    /// `(lower, upper)` envelopes at `query`.
    pub fn envelopes(&self, query: &[f64]) -> Result<(f64, f64)> {
        if query.len() != self.ball.dimension {
            return Err(HteError::DimensionMismatch {
                expected: self.ball.dimension,
                got: query.len(),
            });
        }
        Ok(self.envelopes_unchecked(query))
    }

    fn envelopes_unchecked(&self, query: &[f64]) -> (f64, f64) {
        let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
        for (x, y) in self.spec.points() {
            let r = self.ball.radius * distance_unchecked(x.coords(), query).powf(self.ball.beta);
            upper = upper.min(y + r);
            lower = lower.max(y - r);
        }
        (lower, upper)
    }

    pub fn evaluate(&self, query: &[f64]) -> Result<f64> {
        let (lo, hi) = self.envelopes(query)?;
        Ok(0.5 * (lo + hi))
    }

    /// Evaluation without the dimension check, for hot loops over validated
    /// points.
    pub(crate) fn evaluate_unchecked(&self, query: &[f64]) -> f64 {
        let (lo, hi) = self.envelopes_unchecked(query);
        0.5 * (lo + hi)
    }
}

/// Value at `query` of the envelope-midpoint extension of `spec`.
///
/// Revalidates the specification on each call; build a [`HolderExtension`]
/// once when evaluating at many points.
pub fn extend_holder(spec: &ValueSpec, ball: &HolderSpec, query: &Covariate) -> Result<f64> {
    HolderExtension::new(spec.clone(), *ball)?.evaluate(query.coords())
}

/// `f[x_0, …, x_m] = Σ_i f(x_i) Π_{j≠i} 1/(x_i − x_j)`.
pub fn divided_difference(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(HteError::EmptyPointSet);
    }
    check_distinct(points.iter().map(|p| p.0))?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &(xi, fi))| {
            let denom: f64 = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &(xj, _))| xi - xj)
                .product();
            fi / denom
        })
        .sum())
}

fn check_distinct(xs: impl Iterator<Item = f64> + Clone) -> Result<()> {
    for (i, a) in xs.clone().enumerate() {
        if xs.clone().take(i).any(|b| b == a) {
            return Err(HteError::DuplicatePoint { index: i });
        }
    }
    Ok(())
}

/// Divided difference in exact rational arithmetic.
pub fn divided_difference_exact(points: &[(Ratio<i64>, Ratio<i64>)]) -> Result<Ratio<i64>> {
    if points.is_empty() {
        return Err(HteError::EmptyPointSet);
    }
    let mut total = Ratio::from_integer(0);
    for (i, &(xi, fi)) in points.iter().enumerate() {
        let mut denom = Ratio::from_integer(1);
        for (j, &(xj, _)) in points.iter().enumerate() {
            if j != i {
                if xi == xj {
                    return Err(HteError::DuplicatePoint { index: i.max(j) });
                }
                denom *= xi - xj;
            }
        }
        total += fi / denom;
    }
    Ok(total)
}

/// A closed real interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_disjoint(&self, other: &Interval) -> bool {
        self.hi < other.lo || other.hi < self.lo
    }
}

/// Values of `f(0)` compatible with each constraint of the
/// `f(−3) = f(−1) = 1, f(1) = f(3) = 0` example: `|f[−3,−1,0]| ≤ 1/8` and
/// `|f[0,1,3]| ≤ 1/8`. The two intervals are disjoint.
pub fn counterexample_intervals() -> (Interval, Interval) {
    let int = |v: i64| Ratio::from_integer(v);
    let bound = Ratio::new(1, 8);
    // Each divided difference is affine in f(0) = v; recover slope and offset.
    let solve = |fixed: [(i64, i64); 2]| -> Interval {
        let eval = |v: i64| {
            let mut pts: Vec<_> = fixed.iter().map(|&(x, f)| (int(x), int(f))).collect();
            pts.push((int(0), int(v)));
            divided_difference_exact(&pts).expect("abscissae are distinct")
        };
        let offset = eval(0);
        let slope = eval(1) - offset;
        let a = (-bound - offset) / slope;
        let b = (bound - offset) / slope;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Interval {
            lo: ratio_to_f64(lo),
            hi: ratio_to_f64(hi),
        }
    };
    (solve([(-3, 1), (-1, 1)]), solve([(1, 0), (3, 0)]))
}

fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Covariate {
        Covariate::scalar(x).unwrap()
    }

    fn spec(pairs: &[(f64, f64)]) -> ValueSpec {
        ValueSpec::new(pairs.iter().map(|&(x, y)| (c(x), y)).collect()).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let ball1 = HolderSpec::new(1, 1.0, 1.0).unwrap();
        assert!(is_holder_feasible(&spec(&[(0.0, 0.0), (1.0, 1.0)]), &ball1).unwrap());
        let ball_half = HolderSpec::new(1, 0.5, 1.0).unwrap();
        assert!(!is_holder_feasible(&spec(&[(0.0, 0.0), (0.25, 1.0)]), &ball_half).unwrap());
        assert!(is_holder_feasible(&spec(&[(0.3, 100.0)]), &ball_half).unwrap());
    }

    #[test]
    fn smoothness_above_one_is_rejected() {
        let ball = HolderSpec::new(1, 1.5, 1.0).unwrap();
        assert!(matches!(
            is_holder_feasible(&spec(&[(0.0, 0.0)]), &ball),
            Err(HteError::SmoothnessTooHigh { .. })
        ));
        assert!(HolderExtension::new(spec(&[(0.0, 0.0)]), ball).is_err());
    }

    #[test]
    fn conflicting_duplicates_rejected() {
        assert!(matches!(
            ValueSpec::new(vec![(c(0.2), 1.0), (c(0.2), 2.0)]),
            Err(HteError::DuplicatePoint { index: 1 })
        ));
        assert!(ValueSpec::new(vec![(c(0.2), 1.0), (c(0.2), 1.0)]).is_ok());
    }

    #[test]
    fn extension_examples() {
        let ball = HolderSpec::new(1, 1.0, 1.0).unwrap();
        assert_eq!(
            extend_holder(&spec(&[(0.5, 3.0)]), &ball, &c(0.5)).unwrap(),
            3.0
        );
        let ext = HolderExtension::new(spec(&[(0.0, 0.0), (1.0, 0.0)]), ball).unwrap();
        let (lo, hi) = ext.envelopes(&[0.5]).unwrap();
        assert_eq!((lo, hi), (-0.5, 0.5));
        assert_eq!(ext.evaluate(&[0.5]).unwrap(), 0.0);
        assert!(matches!(
            extend_holder(&spec(&[(0.0, 0.0), (0.1, 1.0)]), &ball, &c(0.5)),
            Err(HteError::InfeasibleSpec { .. })
        ));
    }

    fn random_feasible(rng: &mut ChaCha8Rng, d: usize, n: usize, ball: &HolderSpec) -> ValueSpec {
        // Sample a known member of the ball (scaled distance to an anchor set)
        // at random points, which makes the specification feasible by
        // construction.
        let anchors: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let signs: Vec<f64> = (0..3)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let pts = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let y = anchors
                    .iter()
                    .zip(&signs)
                    .map(|(a, s)| s * distance_unchecked(a, &x).powf(ball.beta))
                    .sum::<f64>()
                    * ball.radius
                    / 3.0;
                (Covariate::new(x).unwrap(), y)
            })
            .collect();
        ValueSpec::new(pts).unwrap()
    }

    #[test]
    fn extension_interpolates_and_is_holder() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let d = 1 + trial % 3;
            let beta = [0.3, 0.7, 1.0][trial % 3];
            let ball = HolderSpec::new(d, beta, 1.5).unwrap();
            let spec = random_feasible(&mut rng, d, 25, &ball);
            let ext = HolderExtension::new(spec.clone(), ball).unwrap();
            for (x, y) in spec.points() {
                assert!((ext.evaluate(x.coords()).unwrap() - y).abs() <= 1e-12);
            }
            for _ in 0..1000 {
                let q: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let r: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let lhs = (ext.evaluate(&q).unwrap() - ext.evaluate(&r).unwrap()).abs();
                let rhs = ball.radius * distance_unchecked(&q, &r).powf(beta);
                assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn divided_difference_examples() {
        assert_eq!(divided_difference(&[(0.0, 5.0)]).unwrap(), 5.0);
        assert_eq!(divided_difference(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 1.0);
        for v in [-2.0, 0.0, 0.5, 3.0] {
            let dd = divided_difference(&[(-3.0, 1.0), (-1.0, 1.0), (0.0, v)]).unwrap();
            assert!((dd - (v / 3.0 - 1.0 / 3.0)).abs() < 1e-15);
        }
        assert!(matches!(
            divided_difference(&[(1.0, 0.0), (1.0, 2.0)]),
            Err(HteError::DuplicatePoint { index: 1 })
        ));
    }

    #[test]
    fn divided_difference_annihilates_low_degree_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..7 {
            let coeffs: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut xs: Vec<f64> = Vec::new();
            while xs.len() < m + 1 {
                let x = rng.random_range(-3.0..3.0);
                if xs.iter().all(|&y: &f64| (y - x).abs() > 0.2) {
                    xs.push(x);
                }
            }
            // degree m-1 polynomial at m+1 points
            let pts: Vec<(f64, f64)> = xs
                .iter()
                .map(|&x| (x, coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)))
                .collect();
            assert!(divided_difference(&pts).unwrap().abs() < 1e-9, "m={m}");
        }
    }

    #[test]
    fn counterexample_is_exact_and_disjoint() {
        let (first, second) = counterexample_intervals();
        assert_eq!(
            first,
            Interval {
                lo: 0.625,
                hi: 1.375
            }
        );
        assert_eq!(
            second,
            Interval {
                lo: -0.375,
                hi: 0.375
            }
        );
        assert!(first.is_disjoint(&second));
        // v = 1 satisfies the first constraint only, v = 0 the second only.
        let dd1 = |v: f64| divided_difference(&[(-3.0, 1.0), (-1.0, 1.0), (0.0, v)]).unwrap();
        let dd2 = |v: f64| divided_difference(&[(0.0, v), (1.0, 0.0), (3.0, 0.0)]).unwrap();
        assert!(dd1(1.0).abs() <= 0.125 && dd2(1.0).abs() > 0.125);
        assert!(dd1(0.0).abs() > 0.125 && dd2(0.0).abs() <= 0.125);
    }
}

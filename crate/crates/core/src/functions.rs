//! Regression-function handles.
//!
//! [`FunctionSpec`] is the serializable description used in scenario files.
//! Randomized specs are turned into a concrete [`Function`] per replication
//! with [`FunctionSpec::instantiate`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::HolderSpec;
use crate::error::{invalid, Result};
use crate::holder::{HolderExtension, ValueSpec};

type Eval = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A real function on `[0, 1]^d`, cheap to clone.
#[derive(Clone)]
pub struct Function {
    label: Arc<str>,
    eval: Arc<Eval>,
}

impl Function {
    pub fn new(
        label: impl Into<Arc<str>>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn add(&self, other: &Function) -> Function {
        let (a, b) = (self.clone(), other.clone());
        Function::new(format!("{}+{}", a.label, b.label), move |x| {
            a.eval(x) + b.eval(x)
        })
    }
}

impl fmt::Debug for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Function({})", self.label)
    }
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.eval, &other.eval)
    }
}

/// The scalar argument used by the one-dimensional profiles in any dimension:
/// `√d (x̄ − 1/2) + 1/2`, which is `x` itself when `d = 1`.
pub fn projected_argument(x: &[f64]) -> f64 {
    if x.len() == 1 {
        return x[0];
    }
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    d.sqrt() * (mean - 0.5) + 0.5
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Serializable function description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    Zero,
    Constant {
        value: f64,
    },
    Linear {
        intercept: f64,
        slope: Vec<f64>,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `Σ w φ_{mean, sd²}(s)` of the projected argument `s`.
    GaussianMixture {
        components: Vec<GaussianComponent>,
    },
    /// `amplitude · sin(2π frequency · s + phase)` of the projected argument.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Bumps `amplitude · a_k · cells^{−β} [4u(1−u)]^β` on each of `cells`
    /// equal cells of `x₁`, where `u` is the position inside cell `k`. The
    /// bump heights `a_k` are 1, or uniform on `[1/2, 1]` when `random_heights`.
    Comb {
        cells: usize,
        beta: f64,
        amplitude: f64,
        #[serde(default)]
        random_heights: bool,
    },
    /// Envelope-midpoint extension of a Hölder-feasible value specification.
    Holder {
        values: ValueSpec,
        ball: HolderSpec,
    },
    #[serde(skip)]
    Custom(Function),
}

impl FunctionSpec {
    /// The two regression profiles of the benchmark scenario.
    pub fn benchmark_baseline() -> Self {
        FunctionSpec::GaussianMixture {
            components: vec![
                GaussianComponent {
                    weight: 2.0,
                    mean: 0.1,
                    sd: 0.15,
                },
                GaussianComponent {
                    weight: 2.5,
                    mean: 0.4,
                    sd: 0.05,
                },
                GaussianComponent {
                    weight: 4.0,
                    mean: 0.8,
                    sd: 0.1,
                },
            ],
        }
    }

    /// `φ_{0,1}(2s − 1) = ½ φ_{½,¼}(s)`.
    pub fn benchmark_effect() -> Self {
        FunctionSpec::GaussianMixture {
            components: vec![GaussianComponent {
                weight: 0.5,
                mean: 0.5,
                sd: 0.5,
            }],
        }
    }

    /// Whether instantiation consumes randomness.
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            FunctionSpec::Comb {
                random_heights: true,
                ..
            }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::GaussianMixture { components } => {
                if components.iter().any(|c| !(c.sd > 0.0)) {
                    return Err(invalid("sd", "mixture components need positive sd"));
                }
            }
            FunctionSpec::Comb { cells, beta, .. } => {
                if *cells == 0 {
                    return Err(invalid("cells", "must be positive"));
                }
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(invalid(
                        "beta",
                        format!("comb needs beta in (0, 1], got {beta}"),
                    ));
                }
            }
            FunctionSpec::Holder { values, ball } => {
                HolderExtension::new(values.clone(), *ball)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn instantiate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Function> {
        self.validate()?;
        Ok(match self {
            FunctionSpec::Zero => Function::zero(),
            FunctionSpec::Constant { value } => {
                let v = *value;
                Function::new("constant", move |_| v)
            }
            FunctionSpec::Linear { intercept, slope } => {
                let (a, b) = (*intercept, slope.clone());
                Function::new("linear", move |x| {
                    a + b.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
                })
            }
            FunctionSpec::Polynomial { terms } => {
                let terms = terms.clone();
                Function::new("polynomial", move |x| {
                    terms
                        .iter()
                        .map(|t| {
                            t.powers
                                .iter()
                                .zip(x)
                                .fold(t.coeff, |acc, (&p, &xi)| acc * xi.powi(p as i32))
                        })
                        .sum()
                })
            }
            FunctionSpec::GaussianMixture { components } => {
                let comps = components.clone();
                Function::new("gaussian_mixture", move |x| {
                    let s = projected_argument(x);
                    comps
                        .iter()
                        .map(|c| c.weight * normal_pdf(s, c.mean, c.sd))
                        .sum()
                })
            }
            FunctionSpec::Sine {
                amplitude,
                frequency,
                phase,
            } => {
                let (a, f, p) = (*amplitude, *frequency, *phase);
                Function::new("sine", move |x| {
                    a * (2.0 * std::f64::consts::PI * f * projected_argument(x) + p).sin()
                })
            }
            FunctionSpec::Comb {
                cells,
                beta,
                amplitude,
                random_heights,
            } => {
                let heights: Vec<f64> = if *random_heights {
                    (0..*cells).map(|_| rng.random_range(0.5..=1.0)).collect()
                } else {
                    vec![1.0; *cells]
                };
                let scale = amplitude * (*cells as f64).powf(-beta);
                let (m, b) = (*cells, *beta);
                Function::new("comb", move |x| {
                    let (k, u) = cell_position(x[0], m);
                    scale * heights[k] * (4.0 * u * (1.0 - u)).powf(b)
                })
            }
            FunctionSpec::Holder { values, ball } => {
                let ext = HolderExtension::new(values.clone(), *ball)?;
                Function::new("holder_extension", move |x| ext.evaluate_unchecked(x))
            }
            FunctionSpec::Custom(f) => f.clone(),
        })
    }
}

/// Cell index `k` and in-cell position `u ∈ [0, 1]` of `x` on a partition of
/// `[0, 1]` into `m` cells. Positions within a few ulps of a cell edge snap to
/// the edge so that grid nodes `k/m` land exactly on `u ∈ {0, 1}`.
pub fn cell_position(x: f64, m: usize) -> (usize, f64) {
    let v = x * m as f64;
    let k = (v.floor().max(0.0) as usize).min(m - 1);
    let mut u = v - k as f64;
    let eps = 8.0 * f64::EPSILON * v.abs().max(1.0);
    if u.abs() <= eps {
        u = 0.0;
    } else if (1.0 - u).abs() <= eps {
        u = 1.0;
    }
    (k, u.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Covariate, RngSeed, Stream};

    fn inst(spec: &FunctionSpec) -> Function {
        spec.instantiate(&mut RngSeed(1).rng(Stream::Functions))
            .unwrap()
    }

    #[test]
    fn benchmark_profiles() {
        let mu0 = inst(&FunctionSpec::benchmark_baseline());
        let s2pi = (2.0 * std::f64::consts::PI).sqrt();
        let by_hand = 2.0 / (0.15 * s2pi) * (-2.0f64).exp()
            + 2.5 / (0.05 * s2pi)
            + 4.0 / (0.1 * s2pi) * (-8.0f64).exp();
        assert!((mu0.eval(&[0.4]) - by_hand).abs() < 1e-12);
        assert!((mu0.eval(&[0.4]) - 20.67).abs() < 0.01);
        let tau = inst(&FunctionSpec::benchmark_effect());
        assert!((tau.eval(&[0.5]) - 1.0 / s2pi).abs() < 1e-15);
        for x in [0.0, 0.2, 0.9] {
            let z: f64 = 2.0 * x - 1.0;
            assert!((tau.eval(&[x]) - (-0.5 * z * z).exp() / s2pi).abs() < 1e-15);
        }
    }

    #[test]
    fn projected_argument_examples() {
        assert_eq!(projected_argument(&[0.3]), 0.3);
        assert!((projected_argument(&[0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((projected_argument(&[1.0, 1.0]) - (2f64.sqrt() * 0.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn comb_vanishes_on_cell_edges() {
        let spec = FunctionSpec::Comb {
            cells: 37,
            beta: 0.5,
            amplitude: 1.0,
            random_heights: true,
        };
        let f = inst(&spec);
        for k in 0..=37 {
            assert_eq!(f.eval(&[k as f64 / 37.0]), 0.0);
        }
        let mid = f.eval(&[0.5 / 37.0]);
        assert!(mid > 0.0 && mid <= 37f64.powf(-0.5) + 1e-15);
    }

    #[test]
    fn serde_round_trip_and_custom_skip() {
        let spec = FunctionSpec::benchmark_baseline();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<FunctionSpec>(&json).unwrap(), spec);
        let c: FunctionSpec = serde_json::from_str(r#"{"kind":"constant","value":2.0}"#).unwrap();
        assert_eq!(inst(&c).eval(&[0.1]), 2.0);
        let custom = FunctionSpec::Custom(Function::zero());
        assert!(serde_json::to_string(&custom).is_err());
    }

    #[test]
    fn polynomial_and_holder_specs() {
        let p = FunctionSpec::Polynomial {
            terms: vec![
                Monomial {
                    coeff: 2.0,
                    powers: vec![2, 1],
                },
                Monomial {
                    coeff: -1.0,
                    powers: vec![0, 0],
                },
            ],
        };
        assert!((inst(&p).eval(&[0.5, 0.4]) - (2.0 * 0.25 * 0.4 - 1.0)).abs() < 1e-15);
        let values = ValueSpec::new(vec![
            (Covariate::scalar(0.0).unwrap(), 0.0),
            (Covariate::scalar(1.0).unwrap(), 0.5),
        ])
        .unwrap();
        let h = FunctionSpec::Holder {
            values,
            ball: HolderSpec::new(1, 1.0, 1.0).unwrap(),
        };
        assert_eq!(inst(&h).eval(&[1.0]), 0.5);
    }
}

//! Comparison estimators: full matching and the two differencing smoothers.

use serde::{Deserialize, Serialize};

use crate::domain::{Covariate, Observation, ObservationSet};
use crate::error::{invalid, HteError, Result};
use crate::kernels::{make_kernel, Kernel};
use crate::neighbors::KdTree;
use crate::random_design::{estimate_random, RandomConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    FullMatching,
    KnnDiff,
    KernelDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub variant: BaselineVariant,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub m1: Option<usize>,
    /// Kernel order for `kernel_diff`; 1 (Epanechnikov) when absent.
    #[serde(default)]
    pub kernel_order: Option<usize>,
}

impl BaselineConfig {
    pub fn full_matching(m1: usize) -> Self {
        Self {
            variant: BaselineVariant::FullMatching,
            k: None,
            bandwidth: None,
            m1: Some(m1),
            kernel_order: None,
        }
    }

    pub fn knn(k: usize) -> Self {
        Self {
            variant: BaselineVariant::KnnDiff,
            k: Some(k),
            bandwidth: None,
            m1: None,
            kernel_order: None,
        }
    }

    pub fn kernel(bandwidth: f64) -> Self {
        Self {
            variant: BaselineVariant::KernelDiff,
            k: None,
            bandwidth: Some(bandwidth),
            m1: None,
            kernel_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            BaselineVariant::FullMatching => match self.m1 {
                Some(m) if m > 0 => Ok(()),
                _ => Err(invalid("m1", "full matching needs a positive m1")),
            },
            BaselineVariant::KnnDiff => match self.k {
                Some(k) if k > 0 => Ok(()),
                _ => Err(invalid("k", "knn differencing needs a positive k")),
            },
            BaselineVariant::KernelDiff => match self.bandwidth {
                Some(h) if h > 0.0 && h.is_finite() => Ok(()),
                _ => Err(invalid(
                    "bandwidth",
                    "kernel differencing needs a positive bandwidth",
                )),
            },
        }
    }
}

/// Selected matching with every stage-one pair kept.
pub fn estimate_full_matching(
    data: &ObservationSet,
    m1: usize,
    queries: &[Covariate],
) -> Result<Vec<f64>> {
    estimate_random(data, &RandomConfig::full_matching(m1)?, queries)
}

/// One-group regression smoother.
#[derive(Debug, Clone)]
enum Smoother {
    Knn {
        tree: KdTree,
        y: Vec<f64>,
        k: usize,
    },
    Kernel {
        tree: KdTree,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        kernel: Kernel,
        h: f64,
    },
}

impl Smoother {
    fn fit(group: &[Observation], dimension: usize, config: &BaselineConfig) -> Result<Self> {
        if group.is_empty() {
            return Err(HteError::EmptyPointSet);
        }
        let points: Vec<&[f64]> = group.iter().map(|o| o.x.coords()).collect();
        let tree = KdTree::new(&points)?;
        let y = group.iter().map(|o| o.y).collect();
        match config.variant {
            BaselineVariant::KnnDiff => {
                let k = config.k.unwrap_or(0);
                if k > group.len() {
                    return Err(HteError::TooManyNeighbors {
                        k,
                        available: group.len(),
                    });
                }
                Ok(Smoother::Knn { tree, y, k })
            }
            BaselineVariant::KernelDiff => Ok(Smoother::Kernel {
                tree,
                x: points.iter().map(|p| p.to_vec()).collect(),
                y,
                kernel: make_kernel(config.kernel_order.unwrap_or(1), dimension)?,
                h: config.bandwidth.unwrap_or(0.0),
            }),
            BaselineVariant::FullMatching => unreachable!("full matching is not a smoother"),
        }
    }

    fn predict(&self, query: &[f64]) -> Result<f64> {
        match self {
            Smoother::Knn { tree, y, k } => {
                let mut idx: Vec<usize> =
                    tree.k_nearest(query, *k)?.iter().map(|n| n.index).collect();
                idx.sort_unstable();
                Ok(idx.iter().map(|&i| y[i]).sum::<f64>() / *k as f64)
            }
            Smoother::Kernel {
                tree,
                x,
                y,
                kernel,
                h,
            } => {
                let mut num = 0.0;
                let mut den = 0.0;
                for (xi, yi) in x.iter().zip(y) {
                    let w = kernel.weight(xi, query, *h);
                    if w != 0.0 {
                        num += w * yi;
                        den += w;
                    }
                }
                if den > 0.0 {
                    Ok(num / den)
                } else {
                    Ok(y[tree.nearest(query)?.index])
                }
            }
        }
    }
}

/// `μ̂₁(x₀) − μ̂₀(x₀)` with each regression fitted on its own group.
pub fn estimate_differencing(
    data: &ObservationSet,
    config: &BaselineConfig,
    queries: &[Covariate],
) -> Result<Vec<f64>> {
    config.validate()?;
    if config.variant == BaselineVariant::FullMatching {
        return estimate_full_matching(data, config.m1.unwrap_or(0), queries);
    }
    let s0 = Smoother::fit(data.control(), data.dimension(), config)?;
    let s1 = Smoother::fit(data.treatment(), data.dimension(), config)?;
    queries
        .iter()
        .map(|q| {
            if q.dim() != data.dimension() {
                return Err(HteError::DimensionMismatch {
                    expected: data.dimension(),
                    got: q.dim(),
                });
            }
            Ok(s1.predict(q.coords())? - s0.predict(q.coords())?)
        })
        .collect()
}

//! Compactly supported product kernels of arbitrary order.
//!
//! Order 0 is the box kernel `1/2 · 1(|u| ≤ 1)`. For order `k ≥ 1` the 1-d
//! factor is `p(u²) · (3/4)(1 − u²)` on `[−1, 1]`, with `p` of degree
//! `⌊k/2⌋` fixed by the even moment equations; odd moments vanish by
//! symmetry. Order 1 is the Epanechnikov kernel, orders 2–3 give
//! `(15/32)(3 − 10u² + 7u⁴)`.

use serde::{Deserialize, Serialize};

use crate::error::{HteError, Result};

/// Support radius in bandwidth units.
pub const SUPPORT_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    order: usize,
    dimension: usize,
    /// Coefficients of `p` in powers of `u²`; empty for the box kernel.
    even_coeffs: Vec<f64>,
}

impl Kernel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support_radius(&self) -> f64 {
        SUPPORT_RADIUS
    }

    /// The 1-d factor `κ(u)`.
    pub fn eval_1d(&self, u: f64) -> f64 {
        if u.abs() > SUPPORT_RADIUS {
            return 0.0;
        }
        if self.even_coeffs.is_empty() {
            return 0.5;
        }
        let u2 = u * u;
        let p = self
            .even_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * u2 + c);
        p * 0.75 * (1.0 - u2)
    }

    /// `K(point) = Π_j κ(point_j)`.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dimension {
            return Err(HteError::DimensionMismatch {
                expected: self.dimension,
                got: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        let mut value = 1.0;
        for &u in point {
            value *= self.eval_1d(u);
            if value == 0.0 {
                break;
            }
        }
        value
    }

    /// Kernel weight of `x` for a query `center` at bandwidth `h`.
    pub(crate) fn weight(&self, x: &[f64], center: &[f64], h: f64) -> f64 {
        let mut value = 1.0;
        for (a, b) in x.iter().zip(center) {
            value *= self.eval_1d((a - b) / h);
            if value == 0.0 {
                break;
            }
        }
        value
    }
}

/// Product kernel of the requested order in `dimension` variables.
pub fn make_kernel(order: usize, dimension: usize) -> Result<Kernel> {
    if dimension == 0 {
        return Err(crate::error::invalid("dimension", "must be positive"));
    }
    let even_coeffs = if order == 0 {
        Vec::new()
    } else {
        epanechnikov_weighted_coeffs(order / 2)?
    };
    Ok(Kernel {
        order,
        dimension,
        even_coeffs,
    })
}

/// `kernel_eval(kernel, point)`.
pub fn kernel_eval(kernel: &Kernel, point: &[f64]) -> Result<f64> {
    kernel.eval(point)
}

/// Solve `Σ_j c_j M_{i+j} = 1(i = 0)`, `i, j = 0..=q`, where
/// `M_s = ∫ u^{2s} (3/4)(1 − u²) du = 3 / ((2s + 1)(2s + 3))`.
fn epanechnikov_weighted_coeffs(q: usize) -> Result<Vec<f64>> {
    let n = q + 1;
    let moment = |s: usize| 3.0 / (((2 * s + 1) * (2 * s + 3)) as f64);
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| moment(i + j)).collect();
            row.push(if i == 0 { 1.0 } else { 0.0 });
            row
        })
        .collect();
    solve_augmented(&mut a)
}

/// Gaussian elimination with partial pivoting on an augmented `n × (n+1)`
/// matrix.
pub(crate) fn solve_augmented(a: &mut [Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 {
            return Err(HteError::Singular(format!("zero pivot in column {col}")));
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= factor * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - s) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson rule on [-1, 1] with `n` (even) intervals.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(-1.0 + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn box_and_epanechnikov_values() {
        let k0 = make_kernel(0, 1).unwrap();
        assert_eq!(kernel_eval(&k0, &[0.0]).unwrap(), 0.5);
        let k1 = make_kernel(1, 1).unwrap();
        assert!((kernel_eval(&k1, &[0.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!((k1.eval_1d(0.5) - 0.75 * 0.75).abs() < 1e-15);
        for k in [&k0, &k1] {
            assert_eq!(k.eval(&[1.2]).unwrap(), 0.0);
            assert_eq!(k.eval(&[-1.0000001]).unwrap(), 0.0);
        }
        assert!(k1.eval(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn fourth_order_closed_form() {
        let k = make_kernel(3, 1).unwrap();
        for u in [-0.9f64, -0.3, 0.0, 0.4, 0.8] {
            let expected = 15.0 / 32.0 * (3.0 - 10.0 * u * u + 7.0 * u.powi(4));
            assert!((k.eval_1d(u) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_moments() {
        for order in 0..=6 {
            let k = make_kernel(order, 1).unwrap();
            // 10^4 quadrature nodes
            let mass = simpson(|u| k.eval_1d(u), 10_000);
            assert!((mass - 1.0).abs() < 1e-6, "order {order} mass {mass}");
            for l in 1..=order {
                let m = simpson(|u| u.powi(l as i32) * k.eval_1d(u), 10_000);
                assert!(m.abs() < 1e-6, "order {order} moment {l} = {m}");
            }
        }
    }

    #[test]
    fn directional_moments_multivariate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 2..=3 {
            for order in [1usize, 3] {
                let k = make_kernel(order, d).unwrap();
                let n = if d == 2 { 200 } else { 60 };
                let h = 2.0 / n as f64;
                let w = |i: usize| {
                    if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    }
                };
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut moments = vec![0.0; order + 1];
                let mut idx = vec![0usize; d];
                loop {
                    let x: Vec<f64> = idx.iter().map(|&i| -1.0 + i as f64 * h).collect();
                    let weight: f64 = idx.iter().map(|&i| w(i) * h / 3.0).product();
                    let kv = k.eval(&x).unwrap();
                    let proj: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
                    for (l, m) in moments.iter_mut().enumerate() {
                        *m += weight * kv * proj.powi(l as i32);
                    }
                    let mut axis = 0;
                    while axis < d {
                        idx[axis] += 1;
                        if idx[axis] <= n {
                            break;
                        }
                        idx[axis] = 0;
                        axis += 1;
                    }
                    if axis == d {
                        break;
                    }
                }
                assert!((moments[0] - 1.0).abs() < 1e-4, "d={d} order={order}");
                for (l, m) in moments.iter().enumerate().skip(1) {
                    assert!(m.abs() < 1e-4, "d={d} order={order} l={l} m={m}");
                }
            }
        }
    }

    #[test]
    fn product_structure_is_exact() {
        let k = make_kernel(3, 3).unwrap();
        let p = [0.1, -0.4, 0.7];
        let prod: f64 = p.iter().map(|&u| k.eval_1d(u)).product();
        assert_eq!(k.eval(&p).unwrap(), prod);
    }
}

//! Exact Euclidean nearest-neighbor search.
//!
//! Every query orders candidates by the key `(distance, index)`, where the
//! distance is exactly the value returned by [`euclidean_distance`]. Equal
//! distances are therefore resolved towards the smaller original index, both
//! in the brute-force routine and in the k-d tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{HteError, Result};

/// `‖a − b‖₂`.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HteError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a, b))
}

#[inline]
pub(crate) fn distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A neighbor returned by a search, with its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Indices of the `k` points closest to `query`, nearest first.
///
/// Brute force over all points; see [`KdTree`] for repeated queries.
pub fn k_nearest<P: AsRef<[f64]>>(query: &[f64], points: &[P], k: usize) -> Result<Vec<usize>> {
    Ok(k_nearest_with_distances(query, points, k)?
        .into_iter()
        .map(|n| n.index)
        .collect())
}

pub fn k_nearest_with_distances<P: AsRef<[f64]>>(
    query: &[f64],
    points: &[P],
    k: usize,
) -> Result<Vec<Neighbor>> {
    check_query(points.len(), k)?;
    let mut all = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let distance = euclidean_distance(query, p.as_ref())?;
        all.push(Neighbor { index, distance });
    }
    if k < all.len() {
        all.select_nth_unstable(k - 1);
        all.truncate(k);
    }
    all.sort_unstable();
    Ok(all)
}

fn check_query(available: usize, k: usize) -> Result<()> {
    if available == 0 {
        return Err(HteError::EmptyPointSet);
    }
    if k == 0 {
        return Err(crate::error::invalid("k", "must be positive"));
    }
    if k > available {
        return Err(HteError::TooManyNeighbors { k, available });
    }
    Ok(())
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static k-d tree over a point set, answering exact k-nearest queries with
/// the same ordering as [`k_nearest`].
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    /// Point indices, permuted so that each leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(HteError::EmptyPointSet)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(HteError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        let mut tree = KdTree {
            dim,
            coords,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, points.len(), 0);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split along the axis of largest spread.
        let axis = (0..self.dim)
            .max_by(|&a, &b| {
                self.spread(start, end, a)
                    .total_cmp(&self.spread(start, end, b))
            })
            .unwrap_or(depth % self.dim);
        let mid = start + (end - start) / 2;
        let (dim, coords) = (self.dim, &self.coords);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis])
        });
        let value = self.coords[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn spread(&self, start: usize, end: usize, axis: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            let v = self.coords[i * self.dim + axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    /// The single nearest point.
    pub fn nearest(&self, query: &[f64]) -> Result<Neighbor> {
        Ok(self.k_nearest(query, 1)?[0])
    }

    /// The `k` nearest points, nearest first.
    pub fn k_nearest(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        check_query(self.len(), k)?;
        if query.len() != self.dim {
            return Err(HteError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        Ok(heap.into_sorted_vec())
    }

    fn search(&self, node: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Neighbor {
                        index,
                        distance: distance_unchecked(query, self.point(index)),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, k, heap);
                // The plane distance is a lower bound on every distance in the
                // far subtree; the relative slack keeps exact ties reachable
                // despite rounding in the square root.
                let must_visit = heap.len() < k
                    || heap
                        .peek()
                        .is_some_and(|w| diff.abs() <= w.distance * (1.0 + 1e-12) + 1e-300);
                if must_visit {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((euclidean_distance(&[0.0, 0.0], &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        assert!((euclidean_distance(&[0.1], &[0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert!(euclidean_distance(&[0.1], &[0.4, 0.2]).is_err());
    }

    #[test]
    fn k_nearest_examples() {
        let pts = [[0.1], [0.4], [0.6], [0.9]];
        assert_eq!(k_nearest(&[0.5], &pts, 2).unwrap(), vec![1, 2]);
        let tie = [[0.6], [0.4]];
        // equal distance 0.1 up to rounding; ordering must still follow the key
        let got = k_nearest(&[0.5], &tie, 2).unwrap();
        let d0 = euclidean_distance(&[0.5], &[0.6]).unwrap();
        let d1 = euclidean_distance(&[0.5], &[0.4]).unwrap();
        let expected = if d0 <= d1 { vec![0, 1] } else { vec![1, 0] };
        assert_eq!(got, expected);
        let exact_tie = [[0.75], [0.25]];
        assert_eq!(k_nearest(&[0.5], &exact_tie, 2).unwrap(), vec![0, 1]);
        assert_eq!(k_nearest(&[0.6], &pts, 1).unwrap(), vec![2]);
    }

    #[test]
    fn k_nearest_errors() {
        let empty: [[f64; 1]; 0] = [];
        assert_eq!(k_nearest(&[0.5], &empty, 1), Err(HteError::EmptyPointSet));
        assert!(matches!(
            k_nearest(&[0.5], &[[0.1]], 2),
            Err(HteError::TooManyNeighbors { k: 2, available: 1 })
        ));
    }

    #[test]
    fn kd_tree_handles_duplicates_with_index_order() {
        let pts: Vec<[f64; 2]> = (0..100).map(|i| [(i % 5) as f64 / 4.0, 0.5]).collect();
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.k_nearest(&[0.0, 0.5], 20).unwrap();
        let brute = k_nearest_with_distances(&[0.0, 0.5], &pts, 20).unwrap();
        assert_eq!(got, brute);
        assert_eq!(got[0].index, 0);
        assert_eq!(got[1].index, 5);
    }

    fn points_strategy() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..4).prop_flat_map(|d| {
            (
                Just(d),
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), 1..120),
                prop::collection::vec(0.0f64..1.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn distances_non_decreasing((_d, pts, q) in points_strategy(), k in 1usize..200) {
            let k = k.min(pts.len());
            let nn = k_nearest_with_distances(&q, &pts, k).unwrap();
            for w in nn.windows(2) {
                prop_assert!(w[0].distance <= w[1].distance);
            }
        }

        #[test]
        fn full_k_is_permutation((_d, pts, q) in points_strategy()) {
            let mut idx = k_nearest(&q, &pts, pts.len()).unwrap();
            idx.sort_unstable();
            prop_assert_eq!(idx, (0..pts.len()).collect::<Vec<_>>());
        }

        #[test]
        fn triangle_inequality(a in prop::collection::vec(0.0f64..1.0, 3),
                               b in prop::collection::vec(0.0f64..1.0, 3),
                               c in prop::collection::vec(0.0f64..1.0, 3)) {
            let ab = euclidean_distance(&a, &b).unwrap();
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
        }

        #[test]
        fn kd_tree_matches_brute_force((_d, pts, q) in points_strategy(), k in 1usize..40) {
            let k = k.min(pts.len());
            let tree = KdTree::new(&pts).unwrap();
            prop_assert_eq!(tree.k_nearest(&q, k).unwrap(), k_nearest_with_distances(&q, &pts, k).unwrap());
        }
    }
}

//! Exact k-nearest-neighbour search over the training points.
//!
//! Points live in a kd-tree for low dimensions and are scanned linearly above
//! [`TREE_MAX_DIM`]. Inserted points go to a pending buffer that is scanned
//! alongside the tree until it grows large enough to trigger a rebuild.
//! Results are always exact, with ties broken by the smaller point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::data::DistanceMetric;
use crate::error::{Error, Result};

/// Above this dimension the index falls back to a flat scan.
pub const TREE_MAX_DIM: usize = 20;

const LEAF_SIZE: usize = 12;
const MIN_PENDING_BEFORE_REBUILD: usize = 64;

/// A training point at a given distance from a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
}

impl Neighbor {
    fn cmp_key(&self, other: &Self) -> Ordering {
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
        self.cmp_key(other)
    }
}

/// Snapshot of the instrumented counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryStats {
    /// Number of k-nearest queries issued.
    pub knn_queries: u64,
    /// Total neighbours returned across those queries.
    pub neighbors_returned: u64,
    /// Point-to-point distance evaluations performed internally.
    pub distance_evals: u64,
}

#[derive(Debug, Default)]
struct Counters {
    knn_queries: AtomicU64,
    neighbors_returned: AtomicU64,
    distance_evals: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> QueryStats {
        QueryStats {
            knn_queries: self.knn_queries.load(AtomicOrdering::Relaxed),
            neighbors_returned: self.neighbors_returned.load(AtomicOrdering::Relaxed),
            distance_evals: self.distance_evals.load(AtomicOrdering::Relaxed),
        }
    }

    fn reset(&self) {
        self.knn_queries.store(0, AtomicOrdering::Relaxed);
        self.neighbors_returned.store(0, AtomicOrdering::Relaxed);
        self.distance_evals.store(0, AtomicOrdering::Relaxed);
    }
}

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

#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<Node>,
    /// Point indices permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
}

impl KdTree {
    fn build(coords: &[f64], dim: usize, count: usize) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..count).collect(),
        };
        if count > 0 {
            tree.build_node(coords, dim, 0, count);
        }
        tree
    }

    fn build_node(&mut self, coords: &[f64], dim: usize, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the axis of widest spread.
        let mut best_axis = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for axis in 0..dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| coords[i * dim + axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            // All points coincide; splitting cannot separate them.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let axis = best_axis;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis])
        });
        let value = coords[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(coords, dim, start, mid);
        let right = self.build_node(coords, dim, mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }
}

/// Bounded max-heap collecting the k best candidates.
struct Candidates {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Candidates {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, cand: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(top) = self.heap.peek() {
            if cand < *top {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    /// Distance a subtree must beat to matter, infinite until the heap is full.
    fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |n| n.distance)
        }
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}

/// Exact nearest-neighbour index over points stored by value.
///
/// Queries take `&self` and may run concurrently; [`NeighborIndex::insert`]
/// takes `&mut self`.
#[derive(Debug)]
pub struct NeighborIndex {
    metric: DistanceMetric,
    dim: usize,
    coords: Vec<f64>,
    tree: Option<KdTree>,
    /// Points `[0, tree_len)` are in the tree, the rest are pending.
    tree_len: usize,
    nearest: Option<Vec<Neighbor>>,
    counters: Counters,
}

impl Clone for NeighborIndex {
    fn clone(&self) -> Self {
        NeighborIndex {
            metric: self.metric,
            dim: self.dim,
            coords: self.coords.clone(),
            tree: self.tree.clone(),
            tree_len: self.tree_len,
            nearest: self.nearest.clone(),
            counters: Counters::default(),
        }
    }
}

impl NeighborIndex {
    pub fn new<'a, I>(points: I, dim: usize, metric: DistanceMetric) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        metric.validate()?;
        if dim == 0 {
            return Err(Error::usage("index dimension must be >= 1"));
        }
        let mut coords = Vec::new();
        for (i, p) in points.into_iter().enumerate() {
            if p.len() != dim {
                return Err(Error::usage(format!(
                    "dimension mismatch at point {i}: {} vs {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        let mut index = NeighborIndex {
            metric,
            dim,
            coords,
            tree: None,
            tree_len: 0,
            nearest: None,
            counters: Counters::default(),
        };
        index.rebuild();
        Ok(index)
    }

    pub fn from_dataset(data: &crate::data::LabeledDataset, metric: DistanceMetric) -> Result<Self> {
        Self::new(data.points(), data.dim(), metric)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// True when queries go through the kd-tree rather than a flat scan.
    pub fn uses_tree(&self) -> bool {
        self.tree.is_some()
    }

    pub fn stats(&self) -> QueryStats {
        self.counters.snapshot()
    }

    pub fn reset_stats(&self) {
        self.counters.reset();
    }

    fn rebuild(&mut self) {
        let n = self.len();
        if self.dim <= TREE_MAX_DIM && n > LEAF_SIZE {
            self.tree = Some(KdTree::build(&self.coords, self.dim, n));
            self.tree_len = n;
        } else {
            self.tree = None;
            self.tree_len = 0;
        }
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::usage(format!(
                "dimension mismatch: query has {} coordinates, index has {}",
                q.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// The `k` smallest distances from `q` to the indexed points, ascending.
    pub fn k_smallest_distances(&self, q: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.k_smallest_excluding(q, k, None)
    }

    /// As [`Self::k_smallest_distances`] but never returns point `exclude`.
    pub fn k_smallest_excluding(
        &self,
        q: &[f64],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<Neighbor>> {
        self.check_dim(q)?;
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k == 0 {
            return Err(Error::usage("k must be positive"));
        }
        if k > available {
            return Err(Error::usage(format!(
                "k = {k} exceeds the {available} available training points"
            )));
        }
        let mut cands = Candidates::new(k);
        let mut evals = 0u64;
        if let Some(tree) = &self.tree {
            self.search_tree(tree, 0, q, exclude, &mut cands, &mut evals);
        }
        for i in self.tree_len..self.len() {
            if Some(i) != exclude {
                evals += 1;
                cands.offer(Neighbor {
                    distance: self.metric.eval(q, self.point(i)),
                    index: i,
                });
            }
        }
        let out = cands.into_sorted();
        self.counters.knn_queries.fetch_add(1, AtomicOrdering::Relaxed);
        self.counters
            .neighbors_returned
            .fetch_add(out.len() as u64, AtomicOrdering::Relaxed);
        self.counters
            .distance_evals
            .fetch_add(evals, AtomicOrdering::Relaxed);
        Ok(out)
    }

    fn search_tree(
        &self,
        tree: &KdTree,
        node: usize,
        q: &[f64],
        exclude: Option<usize>,
        cands: &mut Candidates,
        evals: &mut u64,
    ) {
        match tree.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &tree.order[start..end] {
                    if Some(i) != exclude {
                        *evals += 1;
                        cands.offer(Neighbor {
                            distance: self.metric.eval(q, self.point(i)),
                            index: i,
                        });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_tree(tree, near, q, exclude, cands, evals);
                // The axis gap lower-bounds every Minkowski distance; equality
                // must still be explored so index tie-breaking stays exact.
                if diff.abs() <= cands.bound() {
                    self.search_tree(tree, far, q, exclude, cands, evals);
                }
            }
        }
    }

    /// Closest other indexed point to point `i`. With duplicates present the
    /// distance can be zero.
    pub fn nearest_within_training(&self, i: usize) -> Result<Neighbor> {
        if self.len() < 2 {
            return Err(Error::usage("need at least 2 points"));
        }
        if i >= self.len() {
            return Err(Error::usage(format!("index {i} out of range")));
        }
        if let Some(nearest) = &self.nearest {
            return Ok(nearest[i]);
        }
        Ok(self.k_smallest_excluding(self.point(i), 1, Some(i))?[0])
    }

    /// Starts maintaining every point's nearest other point so that
    /// [`Self::insert`] can report which of them changed.
    pub fn track_nearest(&mut self) -> Result<()> {
        if self.nearest.is_some() {
            return Ok(());
        }
        if self.len() < 2 {
            return Err(Error::usage("need at least 2 points to track nearest neighbours"));
        }
        let nearest = (0..self.len())
            .map(|i| self.k_smallest_excluding(self.point(i), 1, Some(i)).map(|v| v[0]))
            .collect::<Result<Vec<_>>>()?;
        self.nearest = Some(nearest);
        Ok(())
    }

    pub fn tracks_nearest(&self) -> bool {
        self.nearest.is_some()
    }

    /// Cached nearest-other-point distances, if tracking is enabled.
    pub fn nearest_distances(&self) -> Option<Vec<f64>> {
        self.nearest
            .as_ref()
            .map(|v| v.iter().map(|n| n.distance).collect())
    }

    /// Adds `x` to the index and returns the indices of existing points whose
    /// nearest-other distance strictly decreased. The change set is empty when
    /// nearest tracking is off.
    pub fn insert(&mut self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("inserted point has a non-finite coordinate"));
        }
        let new_index = self.len();
        let mut changed = Vec::new();
        if let Some(mut nearest) = self.nearest.take() {
            let mut own = Neighbor {
                distance: f64::INFINITY,
                index: usize::MAX,
            };
            for (i, entry) in nearest.iter_mut().enumerate() {
                let d = self.metric.eval(x, self.point(i));
                if d < entry.distance {
                    *entry = Neighbor {
                        distance: d,
                        index: new_index,
                    };
                    changed.push(i);
                }
                let cand = Neighbor { distance: d, index: i };
                if cand < own {
                    own = cand;
                }
            }
            self.counters
                .distance_evals
                .fetch_add(new_index as u64, AtomicOrdering::Relaxed);
            nearest.push(own);
            self.nearest = Some(nearest);
        }
        self.coords.extend_from_slice(x);
        let pending = self.len() - self.tree_len;
        if pending > MIN_PENDING_BEFORE_REBUILD.max(self.tree_len / 8) {
            self.rebuild();
        }
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec<f64>], q: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| Neighbor {
                distance: DistanceMetric::Euclidean.eval(q, p),
                index: i,
            })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    fn index_of(points: &[Vec<f64>]) -> NeighborIndex {
        let dim = points[0].len();
        NeighborIndex::new(points.iter().map(Vec::as_slice), dim, DistanceMetric::Euclidean).unwrap()
    }

    #[test]
    fn small_example() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0]];
        let idx = index_of(&pts);
        let got = idx.k_smallest_distances(&[0.1, 0.0], 2).unwrap();
        assert_eq!(got[0].index, 0);
        assert!((got[0].distance - 0.1).abs() < 1e-15);
        assert_eq!(got[1].index, 1);
        assert!((got[1].distance - 0.9).abs() < 1e-15);

        let got = idx.k_smallest_distances(&[5.0, 5.0], 1).unwrap();
        assert_eq!(got, vec![Neighbor { distance: 0.0, index: 2 }]);
        assert!(idx.k_smallest_distances(&[0.0, 0.0], 4).is_err());
        assert!(idx.k_smallest_distances(&[0.0], 1).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0]).collect();
        let idx = index_of(&pts);
        let got = idx.k_smallest_distances(&[0.0, 0.0], 5).unwrap();
        let ids: Vec<usize> = got.iter().map(|n| n.index).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn nearest_within_training_examples() {
        let idx = index_of(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(idx.nearest_within_training(0).unwrap(), Neighbor { distance: 5.0, index: 1 });
        let idx = index_of(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0]]);
        assert_eq!(idx.nearest_within_training(0).unwrap(), Neighbor { distance: 0.0, index: 2 });
        assert_eq!(idx.nearest_within_training(2).unwrap(), Neighbor { distance: 0.0, index: 0 });
    }

    #[test]
    fn insert_change_sets() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
        let mut idx = index_of(&pts);
        idx.track_nearest().unwrap();
        assert!(idx.insert(&[100.0, 100.0]).unwrap().is_empty());
        let changed = idx.insert(&[0.0, 2.0]).unwrap();
        assert_eq!(changed, vec![2]);
        assert_eq!(idx.nearest_within_training(2).unwrap().distance, 0.0);
        assert_eq!(idx.nearest_within_training(4).unwrap(), Neighbor { distance: 0.0, index: 2 });
        assert!(idx.insert(&[1.0]).is_err());
    }

    #[test]
    fn high_dimension_uses_flat_scan() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64; 25]).collect();
        let idx = index_of(&pts);
        assert!(!idx.uses_tree());
        assert_eq!(idx.k_smallest_distances(&[3.2; 25], 1).unwrap()[0].index, 3);
    }

    #[test]
    fn counters_track_queries() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let idx = index_of(&pts);
        idx.reset_stats();
        idx.k_smallest_distances(&[10.0], 7).unwrap();
        let s = idx.stats();
        assert_eq!(s.knn_queries, 1);
        assert_eq!(s.neighbors_returned, 7);
        assert!(s.distance_evals < 100);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn knn_matches_brute_force(
            pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..300),
            q in prop::collection::vec(-12.0f64..12.0, 3),
            k_frac in 0.0f64..1.0,
        ) {
            let idx = index_of(&pts);
            let k = 1 + ((pts.len() - 1) as f64 * k_frac) as usize;
            prop_assert_eq!(idx.k_smallest_distances(&q, k).unwrap(), brute(&pts, &q, k, None));
        }

        #[test]
        fn knn_exact_on_integer_grid_with_ties(
            pts in prop::collection::vec(prop::collection::vec(0i32..4, 2), 2..200),
            q in prop::collection::vec(0i32..4, 2),
            k in 1usize..20,
        ) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect();
            let q: Vec<f64> = q.into_iter().map(f64::from).collect();
            let k = k.min(pts.len());
            let idx = index_of(&pts);
            prop_assert_eq!(idx.k_smallest_distances(&q, k).unwrap(), brute(&pts, &q, k, None));
        }

        #[test]
        fn insert_preserves_exactness(
            base in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..80),
            extra in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 0..150),
            q in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let mut idx = index_of(&base);
            idx.track_nearest().unwrap();
            let mut all = base.clone();
            for x in &extra {
                let before: Vec<f64> = idx.nearest_distances().unwrap();
                let changed = idx.insert(x).unwrap();
                let expect: Vec<usize> = all.iter().enumerate()
                    .filter(|(i, p)| DistanceMetric::Euclidean.eval(x, p) < before[*i])
                    .map(|(i, _)| i).collect();
                prop_assert_eq!(changed, expect);
                all.push(x.clone());
            }
            let k = all.len().min(9);
            prop_assert_eq!(idx.k_smallest_distances(&q, k).unwrap(), brute(&all, &q, k, None));
            for i in 0..all.len() {
                let expect = brute(&all, &all[i], 1, Some(i))[0];
                prop_assert_eq!(idx.nearest_within_training(i).unwrap().distance, expect.distance);
            }
        }
    }
}

//! Exact neighbor search over a sequence of k-d trees built on suffixes of the
//! sample ordering.
//!
//! Tree `r` of a [`TreeSequence`] holds the samples with (zero-based) indices
//! `r·L .. n`. A symmetric row sweep that only needs columns `j ≥ i` can then
//! query the smallest tree that still contains every such `j`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::cloud::{dist2, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// A search result: global sample index and squared Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborHit {
    pub index: usize,
    pub dist2: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        lo: u32,
        hi: u32,
    },
    Split {
        dim: u32,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Classical k-d tree: splitting coordinate cycles with depth, median split.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    /// Global sample indices in tree order.
    index: Vec<u32>,
    /// Coordinates copied in tree order.
    coords: Vec<f64>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds a tree over the samples `first..cloud.len()`.
    pub fn build_suffix(cloud: &PointCloud, first: usize) -> Self {
        let dim = cloud.dim();
        let mut index: Vec<u32> = (first as u32..cloud.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * index.len() / LEAF_SIZE + 1);
        if !index.is_empty() {
            build_node(cloud, &mut index, 0, 0, &mut nodes);
        }
        let mut coords = Vec::with_capacity(index.len() * dim);
        for &i in &index {
            coords.extend_from_slice(cloud.point(i as usize));
        }
        Self {
            dim,
            index,
            coords,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// All samples with `dist2 < r2` and global index `≥ min_index`, unordered.
    pub fn radius_into(&self, query: &[f64], r2: f64, min_index: usize, out: &mut Vec<NeighborHit>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut offsets = vec![0.0; self.dim];
        self.radius_rec(0, query, r2, min_index as u32, 0.0, &mut offsets, out);
    }

    #[allow(clippy::too_many_arguments)]
    fn radius_rec(
        &self,
        node: usize,
        q: &[f64],
        r2: f64,
        min_index: u32,
        rd: f64,
        offsets: &mut [f64],
        out: &mut Vec<NeighborHit>,
    ) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for slot in lo as usize..hi as usize {
                    let gi = self.index[slot];
                    if gi < min_index {
                        continue;
                    }
                    let d2 = dist2(q, &self.coords[slot * self.dim..(slot + 1) * self.dim]);
                    if d2 < r2 {
                        out.push(NeighborHit {
                            index: gi as usize,
                            dist2: d2,
                        });
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let d = dim as usize;
                let diff = q[d] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near as usize, q, r2, min_index, rd, offsets, out);
                let old = offsets[d];
                let far_rd = rd - old * old + diff * diff;
                if far_rd < r2 {
                    offsets[d] = diff;
                    self.radius_rec(far as usize, q, r2, min_index, far_rd, offsets, out);
                    offsets[d] = old;
                }
            }
        }
    }

    /// The `k` nearest samples to `query`, skipping global index `exclude`.
    /// Ties at equal distance go to the smaller index.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<NeighborHit> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            let mut offsets = vec![0.0; self.dim];
            let exclude = exclude.map(|e| e as u32);
            self.nearest_rec(0, query, k, exclude, 0.0, &mut offsets, &mut heap);
        }
        let mut hits: Vec<Candidate> = heap.into_vec();
        hits.sort();
        hits.into_iter()
            .map(|c| NeighborHit {
                index: c.index as usize,
                dist2: c.dist2,
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn nearest_rec(
        &self,
        node: usize,
        q: &[f64],
        k: usize,
        exclude: Option<u32>,
        rd: f64,
        offsets: &mut [f64],
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for slot in lo as usize..hi as usize {
                    let gi = self.index[slot];
                    if Some(gi) == exclude {
                        continue;
                    }
                    let cand = Candidate {
                        dist2: dist2(q, &self.coords[slot * self.dim..(slot + 1) * self.dim]),
                        index: gi,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap holds k items") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let d = dim as usize;
                let diff = q[d] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near as usize, q, k, exclude, rd, offsets, heap);
                let old = offsets[d];
                let far_rd = rd - old * old + diff * diff;
                // `<=` keeps equal-distance candidates with smaller indices reachable.
                let visit = heap.len() < k || far_rd <= heap.peek().map_or(f64::INFINITY, |c| c.dist2);
                if visit {
                    offsets[d] = diff;
                    self.nearest_rec(far as usize, q, k, exclude, far_rd, offsets, heap);
                    offsets[d] = old;
                }
            }
        }
    }
}

fn build_node(cloud: &PointCloud, index: &mut [u32], offset: usize, depth: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len();
    if index.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            lo: offset as u32,
            hi: (offset + index.len()) as u32,
        });
        return id as u32;
    }
    let dim = depth % cloud.dim();
    let mid = index.len() / 2;
    index.select_nth_unstable_by(mid, |&a, &b| {
        let ca = cloud.point(a as usize)[dim];
        let cb = cloud.point(b as usize)[dim];
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let value = cloud.point(index[mid] as usize)[dim];
    nodes.push(Node::Leaf { lo: 0, hi: 0 });
    let (lo, hi) = index.split_at_mut(mid);
    let left = build_node(cloud, lo, offset, depth + 1, nodes);
    let right = build_node(cloud, hi, offset + mid, depth + 1, nodes);
    nodes[id] = Node::Split {
        dim: dim as u32,
        value,
        left,
        right,
    };
    id as u32
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

/// Where a k-nearest-neighbor query is anchored.
#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    /// Sample `i` itself: it is rank 0 and never reported.
    Sample(usize),
    /// An arbitrary point of the ambient space.
    Point(&'a [f64]),
}

/// k-d trees `T_0 … T_t` where `T_r` holds samples `r·lag .. n`.
#[derive(Debug, Clone)]
pub struct TreeSequence {
    trees: Vec<KdTree>,
    lag: usize,
    n: usize,
    dim: usize,
}

impl TreeSequence {
    /// Builds the sequence for a requested tree count `1 ≤ t < n`, with
    /// lag `L = ⌊n/t⌋`. The number of trees actually built is `t' + 1` where
    /// `t'` is the largest integer with `t'·L < n`.
    pub fn build(cloud: &PointCloud, tree_count: usize) -> Result<Self> {
        let n = cloud.len();
        if tree_count < 1 || tree_count >= n {
            return Err(Error::Parameter(format!(
                "tree count must satisfy 1 <= t < n (t = {tree_count}, n = {n})"
            )));
        }
        let lag = n / tree_count;
        let extra = (n - 1) / lag;
        let trees = (0..=extra)
            .into_par_iter()
            .map(|r| KdTree::build_suffix(cloud, r * lag))
            .collect();
        Ok(Self {
            trees,
            lag,
            n,
            dim: cloud.dim(),
        })
    }

    /// Clamps a requested tree count into the valid range for `n` samples.
    /// A single sample gets one degenerate tree.
    pub fn build_clamped(cloud: &PointCloud, tree_count: usize) -> Self {
        let n = cloud.len();
        if n == 1 {
            return Self {
                trees: vec![KdTree::build_suffix(cloud, 0)],
                lag: 1,
                n,
                dim: cloud.dim(),
            };
        }
        Self::build(cloud, tree_count.clamp(1, n - 1)).expect("clamped tree count is valid")
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Number of trees built (`t' + 1`).
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[KdTree] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.len() != self.n || cloud.dim() != self.dim {
            return Err(Error::Structural(format!(
                "tree sequence built over {}×{} samples, cloud is {}×{}",
                self.n,
                self.dim,
                cloud.len(),
                cloud.dim()
            )));
        }
        Ok(())
    }

    /// Exactly the samples `j ≥ i` with `‖x_i − x_j‖² < r2`, sorted by index.
    /// Includes the self-hit `j = i`.
    pub fn radius_query_suffix(&self, cloud: &PointCloud, i: usize, r2: f64) -> Result<Vec<NeighborHit>> {
        if i >= self.n {
            return Err(Error::Parameter(format!("sample index {i} out of range (n = {})", self.n)));
        }
        let mut hits = Vec::new();
        self.suffix_into(cloud, i, r2, &mut hits);
        Ok(hits)
    }

    pub(crate) fn suffix_into(&self, cloud: &PointCloud, i: usize, r2: f64, hits: &mut Vec<NeighborHit>) {
        self.suffix_unsorted_into(cloud, i, r2, hits);
        hits.sort_unstable_by_key(|h| h.index);
    }

    /// As [`Self::suffix_into`] but in tree traversal order, which is fixed
    /// for a given sequence.
    pub(crate) fn suffix_unsorted_into(&self, cloud: &PointCloud, i: usize, r2: f64, hits: &mut Vec<NeighborHit>) {
        hits.clear();
        let r = (i / self.lag).min(self.trees.len() - 1);
        self.trees[r].radius_into(cloud.point(i), r2, i, hits);
    }

    /// All samples within squared radius `r2` of an arbitrary point, sorted by index.
    pub fn radius_query_point(&self, x: &[f64], r2: f64) -> Vec<NeighborHit> {
        let mut hits = Vec::new();
        self.trees[0].radius_into(x, r2, 0, &mut hits);
        hits.sort_unstable_by_key(|h| h.index);
        hits
    }

    /// The `k` nearest samples by Euclidean distance, nearest first, ties to
    /// the smaller index. A [`Query::Sample`] never reports the sample itself.
    pub fn k_nearest(&self, cloud: &PointCloud, query: Query<'_>, k: usize) -> Result<Vec<NeighborHit>> {
        match query {
            Query::Sample(i) => {
                if i >= self.n {
                    return Err(Error::Parameter(format!("sample index {i} out of range (n = {})", self.n)));
                }
                if k < 1 || k > self.n - 1 {
                    return Err(Error::Parameter(format!(
                        "on-sample k-nearest query needs 1 <= k <= n-1 (k = {k}, n = {})",
                        self.n
                    )));
                }
                Ok(self.trees[0].nearest(cloud.point(i), k, Some(i)))
            }
            Query::Point(x) => {
                if x.len() != self.dim {
                    return Err(Error::LengthMismatch {
                        expected: self.dim,
                        got: x.len(),
                    });
                }
                if k < 1 || k > self.n {
                    return Err(Error::Parameter(format!(
                        "k-nearest query needs 1 <= k <= n (k = {k}, n = {})",
                        self.n
                    )));
                }
                Ok(self.trees[0].nearest(x, k, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line() -> PointCloud {
        PointCloud::from_rows(&[[0.0], [1.0], [2.0]]).unwrap()
    }

    fn random_cloud(n: usize, m: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n * m).map(|_| rng.random::<f64>()).collect(), m).unwrap()
    }

    fn scan_suffix(cloud: &PointCloud, i: usize, r2: f64) -> Vec<NeighborHit> {
        (i..cloud.len())
            .filter_map(|j| {
                let d2 = dist2(cloud.point(i), cloud.point(j));
                (d2 < r2).then_some(NeighborHit { index: j, dist2: d2 })
            })
            .collect()
    }

    #[test]
    fn lag_and_tree_count() {
        let c = PointCloud::new((0..10).map(|x| x as f64).collect(), 1).unwrap();
        let seq = TreeSequence::build(&c, 3).unwrap();
        assert_eq!(seq.lag(), 3);
        assert_eq!(seq.tree_count(), 4);
        let sizes: Vec<usize> = seq.trees().iter().map(KdTree::len).collect();
        assert_eq!(sizes, vec![10, 7, 4, 1]);

        let c4 = PointCloud::new(vec![0.0, 1.0, 2.0, 3.0], 1).unwrap();
        let seq = TreeSequence::build(&c4, 1).unwrap();
        assert_eq!(seq.lag(), 4);
        assert_eq!(seq.tree_count(), 1);
        assert_eq!(seq.trees()[0].len(), 4);
    }

    #[test]
    fn tree_count_out_of_range() {
        let c = line();
        assert!(TreeSequence::build(&c, 0).is_err());
        assert!(TreeSequence::build(&c, 3).is_err());
        assert!(TreeSequence::build(&c, 2).is_ok());
    }

    #[test]
    fn suffix_query_on_a_line() {
        let c = line();
        let seq = TreeSequence::build(&c, 1).unwrap();
        let hits = seq.radius_query_suffix(&c, 0, 1.5).unwrap();
        assert_eq!(
            hits,
            vec![NeighborHit { index: 0, dist2: 0.0 }, NeighborHit { index: 1, dist2: 1.0 }]
        );
        let hits = seq.radius_query_suffix(&c, 2, 100.0).unwrap();
        assert_eq!(hits, vec![NeighborHit { index: 2, dist2: 0.0 }]);
        assert!(seq.radius_query_suffix(&c, 3, 1.0).is_err());
    }

    #[test]
    fn radius_boundary_is_strict() {
        let c = line();
        let seq = TreeSequence::build(&c, 1).unwrap();
        let hits = seq.radius_query_suffix(&c, 0, 1.0).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn knn_on_a_line() {
        let c = line();
        let seq = TreeSequence::build(&c, 1).unwrap();
        let hits = seq.k_nearest(&c, Query::Sample(1), 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(hits.iter().map(|h| h.dist2).collect::<Vec<_>>(), vec![1.0, 1.0]);

        let hits = seq.k_nearest(&c, Query::Point(&[0.4]), 1).unwrap();
        assert_eq!(hits[0].index, 0);

        assert!(seq.k_nearest(&c, Query::Sample(1), 3).is_err());
        assert!(seq.k_nearest(&c, Query::Point(&[0.4]), 3).is_ok());
    }

    #[test]
    fn duplicates_produce_zero_distance_hits() {
        let c = PointCloud::from_rows(&[[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        let seq = TreeSequence::build(&c, 2).unwrap();
        let hits = seq.radius_query_suffix(&c, 0, 0.5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[1].dist2, 0.0);
        let nn = seq.k_nearest(&c, Query::Sample(0), 1).unwrap();
        assert_eq!(nn[0], NeighborHit { index: 1, dist2: 0.0 });
    }

    #[test]
    fn every_suffix_tree_matches_scan() {
        let c = random_cloud(2000, 2, 7);
        let seq = TreeSequence::build(&c, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for tree_id in 0..seq.tree_count() {
            let first = tree_id * seq.lag();
            let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let r2 = 0.002 + 0.01 * rng.random::<f64>();
            let mut got = Vec::new();
            seq.trees()[tree_id].radius_into(&q, r2, 0, &mut got);
            got.sort_unstable_by_key(|h| h.index);
            let want: Vec<usize> = (first..c.len()).filter(|&j| dist2(&q, c.point(j)) < r2).collect();
            assert_eq!(got.iter().map(|h| h.index).collect::<Vec<_>>(), want, "tree {tree_id}");
        }
    }

    #[test]
    fn suffix_queries_match_scan_for_any_tree_count() {
        let c = random_cloud(500, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let seqs: Vec<TreeSequence> = [1, 7, 50, 499].iter().map(|&t| TreeSequence::build(&c, t).unwrap()).collect();
        for _ in 0..50 {
            let i = rng.random_range(0..c.len());
            let r2 = 0.05 * rng.random::<f64>();
            let want = scan_suffix(&c, i, r2);
            for seq in &seqs {
                assert_eq!(seq.radius_query_suffix(&c, i, r2).unwrap(), want);
            }
        }
    }

    #[test]
    fn knn_matches_full_sort() {
        let c = random_cloud(1000, 2, 5);
        let seq = TreeSequence::build(&c, 10).unwrap();
        for i in (0..c.len()).step_by(37) {
            let mut all: Vec<(f64, usize)> = (0..c.len())
                .filter(|&j| j != i)
                .map(|j| (dist2(c.point(i), c.point(j)), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = seq.k_nearest(&c, Query::Sample(i), 25).unwrap();
            let want: Vec<usize> = all[..25].iter().map(|p| p.1).collect();
            assert_eq!(got.iter().map(|h| h.index).collect::<Vec<_>>(), want);
        }
    }

    #[test]
    fn knn_ties_prefer_smaller_index() {
        // Points on a square lattice: many exact ties.
        let rows: Vec<[f64; 2]> = (0..100).map(|k| [(k % 10) as f64, (k / 10) as f64]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        let seq = TreeSequence::build(&c, 3).unwrap();
        for i in 0..100 {
            let mut all: Vec<(f64, usize)> = (0..100)
                .filter(|&j| j != i)
                .map(|j| (dist2(c.point(i), c.point(j)), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = seq.k_nearest(&c, Query::Sample(i), 9).unwrap();
            let want: Vec<usize> = all[..9].iter().map(|p| p.1).collect();
            assert_eq!(got.iter().map(|h| h.index).collect::<Vec<_>>(), want, "sample {i}");
        }
    }
}

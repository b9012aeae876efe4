//! Exact k-d tree over a fixed point set.
//!
//! Every query is exact: the tree returns what a linear scan over the points
//! would, comparing squared distances computed as `(p - q).norm_squared()`
//! and breaking ties by the lowest point index.

use nalgebra::Vector3;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

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

/// Immutable nearest-neighbor index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vector3<f64>>,
    /// Point indices, permuted so that every leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A `(distance^2, index)` candidate, ordered lexicographically.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.d2 < other.d2 || (self.d2 == other.d2 && self.index < other.index)
    }
}

impl SpatialIndex {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = self.points[self.order[start]];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] == 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest point to `q` as `(index, distance)`.
    pub fn nearest(&self, q: &Vector3<f64>) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.search_nearest(0, q, &mut best);
        Ok((best.index, best.d2.sqrt()))
    }

    /// Nearest point to `q` if its distance is at most `radius`.
    ///
    /// The result equals `nearest(q)` filtered by `distance <= radius`; the
    /// radius only prunes the search.
    pub fn nearest_within(&self, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        // Inflate the pruning bound slightly so the final comparison on the
        // rooted distance is the only one that decides membership.
        let bound = radius * (1.0 + 1e-9) + 1e-300;
        let mut best = Candidate {
            d2: bound * bound,
            index: usize::MAX,
        };
        self.search_nearest(0, q, &mut best);
        if best.index == usize::MAX {
            return None;
        }
        let d = best.d2.sqrt();
        (d <= radius).then_some((best.index, d))
    }

    fn search_nearest(&self, node: usize, q: &Vector3<f64>, best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if c.beats(best) {
                        *best = c;
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
                self.search_nearest(near, q, best);
                if diff * diff <= best.d2 {
                    self.search_nearest(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(distance, index)`, as
    /// `(index, distance)` pairs.
    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.search_knn(0, q, k, &mut heap);
        Ok(heap.into_iter().map(|c| (c.index, c.d2.sqrt())).collect())
    }

    fn search_knn(&self, node: usize, q: &Vector3<f64>, k: usize, found: &mut Vec<Candidate>) {
        let worst = |found: &Vec<Candidate>| {
            if found.len() < k {
                f64::INFINITY
            } else {
                found[k - 1].d2
            }
        };
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if found.len() == k && !c.beats(&found[k - 1]) {
                        continue;
                    }
                    let pos = found.partition_point(|f| f.beats(&c));
                    found.insert(pos, c);
                    found.truncate(k);
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
                self.search_knn(near, q, k, found);
                if diff * diff <= worst(found) {
                    self.search_knn(far, q, k, found);
                }
            }
        }
    }

    /// Indices of all points with `(p - center).norm() <= radius`, ascending.
    pub fn within_radius(&self, center: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            let bound = radius * (1.0 + 1e-9);
            self.search_radius(0, center, radius, bound * bound, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn search_radius(
        &self,
        node: usize,
        c: &Vector3<f64>,
        radius: f64,
        bound2: f64,
        out: &mut Vec<usize>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - c).norm() <= radius),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = c[axis] - value;
                if diff < 0.0 || diff * diff <= bound2 {
                    self.search_radius(left, c, radius, bound2, out);
                }
                if diff >= 0.0 || diff * diff <= bound2 {
                    self.search_radius(right, c, radius, bound2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    fn linear_nearest(points: &[Vector3<f64>], q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    fn random_points(n: usize, seed: u64, scale: f64) -> Vec<Vector3<f64>> {
        let mut rng = GaussianStream::new(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.uniform_range(-scale, scale),
                    rng.uniform_range(-scale, scale),
                    rng.uniform_range(-scale, scale),
                )
            })
            .collect()
    }

    #[test]
    fn empty_index_errors() {
        let idx = SpatialIndex::new(&[]);
        assert!(matches!(idx.nearest(&Vector3::zeros()), Err(Error::EmptyIndex)));
        assert!(idx.nearest_within(&Vector3::zeros(), 1.0).is_none());
        assert!(idx.knn(&Vector3::zeros(), 3).is_err());
    }

    #[test]
    fn single_point() {
        let idx = SpatialIndex::new(&[Vector3::new(1.0, 2.0, 3.0)]);
        let (i, d) = idx.nearest(&Vector3::new(-5.0, 0.0, 9.0)).unwrap();
        assert_eq!(i, 0);
        assert!((d - (36.0f64 + 4.0 + 36.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_node_query_is_exact() {
        let mut pts = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                for z in 0..5 {
                    pts.push(Vector3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let idx = SpatialIndex::new(&pts);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(idx.nearest(p).unwrap(), (i, 0.0));
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // Duplicates plus a grid where midpoints are equidistant to two nodes.
        let mut pts = vec![Vector3::new(0.0, 0.0, 0.0); 40];
        pts.extend((0..40).map(|i| Vector3::new(i as f64, 0.0, 0.0)));
        let idx = SpatialIndex::new(&pts);
        assert_eq!(idx.nearest(&Vector3::new(0.0, 0.0, 0.0)).unwrap().0, 0);
        for i in 1..39 {
            let q = Vector3::new(i as f64 + 0.5, 0.0, 0.0);
            assert_eq!(idx.nearest(&q).unwrap(), linear_nearest(&pts, &q));
        }
    }

    #[test]
    fn matches_linear_scan() {
        let pts = random_points(1000, 11, 5.0);
        let queries = random_points(1000, 12, 6.0);
        let idx = SpatialIndex::new(&pts);
        for q in &queries {
            assert_eq!(idx.nearest(q).unwrap(), linear_nearest(&pts, q));
        }
    }

    #[test]
    fn nearest_within_is_filtered_nearest() {
        let pts = random_points(500, 5, 3.0);
        let idx = SpatialIndex::new(&pts);
        for q in &random_points(500, 6, 3.5) {
            let full = idx.nearest(q).unwrap();
            let r = 0.4;
            let got = idx.nearest_within(q, r);
            if full.1 <= r {
                assert_eq!(got, Some(full));
            } else {
                assert_eq!(got, None);
            }
        }
    }

    #[test]
    fn knn_matches_sorted_scan() {
        let pts = random_points(400, 21, 2.0);
        let idx = SpatialIndex::new(&pts);
        for q in &random_points(50, 22, 2.0) {
            let mut all: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let want: Vec<(usize, f64)> =
                all.iter().take(11).map(|&(i, d2)| (i, d2.sqrt())).collect();
            assert_eq!(idx.knn(q, 11).unwrap(), want);
        }
    }

    #[test]
    fn within_radius_matches_filter() {
        let pts = random_points(2000, 31, 10.0);
        let idx = SpatialIndex::new(&pts);
        let c = Vector3::new(1.0, -2.0, 0.5);
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| (pts[i] - c).norm() <= 4.5)
            .collect();
        assert_eq!(idx.within_radius(&c, 4.5), want);
    }
}

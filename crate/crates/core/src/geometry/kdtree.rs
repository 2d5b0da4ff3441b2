use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{dist2, Point};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Static 2-d tree over a point cloud, stored as an implicit balanced tree
/// in a permutation array. Immutable once built.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    perm: Vec<usize>,
    // split axis of the subtree whose median sits at this position
    axis: Vec<u8>,
}

/// Candidate ordered by (squared distance, index); the heap keeps the worst on top.
#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            perm: (0..points.len()).collect(),
            axis: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in &self.perm[lo..hi] {
            for a in 0..2 {
                min[a] = min[a].min(self.points[i][a]);
                max[a] = max[a].max(self.points[i][a]);
            }
        }
        let axis = usize::from(max[1] - min[1] > max[0] - min[0]);
        let mid = lo + (hi - lo) / 2;
        let pts = &self.points;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        self.axis[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Indices and distances of the `n` nearest points, ascending by distance
    /// with ties broken by ascending index.
    pub fn knn(&self, query: &Point, n: usize) -> Result<Vec<(usize, f64)>> {
        if n > self.len() {
            return Err(Error::StencilTooLarge { requested: n, available: self.len() });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(n + 1);
        self.search(query, n, 0, self.len(), &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found.into_iter().map(|c| (c.index, c.d2.sqrt())).collect())
    }

    /// Nearest point; panics on an empty tree.
    pub fn nearest(&self, query: &Point) -> (usize, f64) {
        self.knn(query, 1).expect("non-empty tree")[0]
    }

    fn offer(heap: &mut BinaryHeap<Candidate>, n: usize, c: Candidate) {
        if heap.len() < n {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }

    fn search(&self, q: &Point, n: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.perm[lo..hi] {
                Self::offer(heap, n, Candidate { d2: dist2(q, &self.points[i]), index: i });
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = usize::from(self.axis[mid]);
        let i = self.perm[mid];
        Self::offer(heap, n, Candidate { d2: dist2(q, &self.points[i]), index: i });

        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, n, near.0, near.1, heap);
        // equal distances must still be visited so index tie-breaks are exact
        if heap.len() < n || diff * diff <= heap.peek().unwrap().d2 {
            self.search(q, n, far.0, far.1, heap);
        }
    }
}

//! Static 3D k-d tree with exact nearest-neighbor queries.
//!
//! Nodes split at the median of the axis with the widest spread; leaves hold
//! at most [`LEAF_SIZE`] points. Queries break distance ties toward the
//! smallest original point index, so results match a linear scan exactly.

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::scalar::{Real, Vec3};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
enum Node<T> {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: T,
        /// Index of the right child; the left child is the next node.
        right: u32,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree<T: Real = f64> {
    nodes: Vec<Node<T>>,
    /// Points in tree order.
    points: Vec<Vec3<T>>,
    /// Original index of each entry of `points`.
    perm: Vec<u32>,
}

/// Per-query counters, for checking that queries stay sublinear.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: usize,
    pub points_tested: usize,
}

impl<T: Real> KdTree<T> {
    pub fn build(cloud: &PointCloud<T>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud("k-d tree build"));
        }
        if cloud.len() > u32::MAX as usize {
            return Err(Error::invalid("k-d tree supports at most u32::MAX points"));
        }
        let src = cloud.points();
        let mut perm: Vec<u32> = (0..src.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * src.len() / LEAF_SIZE + 1);
        build_rec(src, &mut perm, 0, &mut nodes);
        let points = perm.iter().map(|&i| src[i as usize]).collect();
        Ok(Self {
            nodes,
            points,
            perm,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nearest stored point to `q`: `(original index, squared distance)`.
    pub fn nearest(&self, q: Vec3<T>) -> (usize, T) {
        let mut stats = QueryStats::default();
        self.nearest_with_stats(q, &mut stats)
    }

    pub fn nearest_with_stats(&self, q: Vec3<T>, stats: &mut QueryStats) -> (usize, T) {
        let mut best = (u32::MAX, T::infinity());
        self.search(0, q, &mut best, stats);
        (best.0 as usize, best.1)
    }

    fn search(&self, node: usize, q: Vec3<T>, best: &mut (u32, T), stats: &mut QueryStats) {
        stats.nodes_visited += 1;
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start as usize..end as usize {
                    stats.points_tested += 1;
                    let p = self.points[i];
                    let dx = q[0] - p[0];
                    let dy = q[1] - p[1];
                    let dz = q[2] - p[2];
                    let d = dx * dx + dy * dy + dz * dz;
                    let idx = self.perm[i];
                    if d < best.1 || (d == best.1 && idx < best.0) {
                        *best = (idx, d);
                    }
                }
            }
            Node::Split { axis, value, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= T::zero() {
                    (node + 1, right as usize)
                } else {
                    (right as usize, node + 1)
                };
                self.search(near, q, best, stats);
                // `<=` keeps equidistant candidates with smaller indices reachable.
                if diff * diff <= best.1 {
                    self.search(far, q, best, stats);
                }
            }
        }
    }
}

fn build_rec<T: Real>(src: &[Vec3<T>], perm: &mut [u32], offset: usize, nodes: &mut Vec<Node<T>>) {
    let n = perm.len();
    if n <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + n) as u32,
        });
        return;
    }
    let mut lo = [T::infinity(); 3];
    let mut hi = [T::neg_infinity(); 3];
    for &i in perm.iter() {
        let p = src[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| {
            (hi[a] - lo[a])
                .partial_cmp(&(hi[b] - lo[b]))
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap();
    if hi[axis] == lo[axis] {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + n) as u32,
        });
        return;
    }
    let mid = n / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| {
        src[a as usize][axis]
            .partial_cmp(&src[b as usize][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let value = src[perm[mid] as usize][axis];
    let me = nodes.len();
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        right: 0,
    });
    let (left, right) = perm.split_at_mut(mid);
    build_rec(src, left, offset, nodes);
    let right_idx = nodes.len() as u32;
    if let Node::Split { right, .. } = &mut nodes[me] {
        *right = right_idx;
    }
    build_rec(src, right, offset + mid, nodes);
}

/// Linear-scan nearest neighbor with the same tie rule; the test oracle for
/// [`KdTree::nearest`] and the engine behind brute-force Chamfer.
pub fn nearest_brute<T: Real>(points: &[Vec3<T>], q: Vec3<T>) -> (usize, T) {
    let mut best = (usize::MAX, T::infinity());
    for (i, p) in points.iter().enumerate() {
        let dx = q[0] - p[0];
        let dy = q[1] - p[1];
        let dz = q[2] - p[2];
        let d = dx * dx + dy * dy + dz * dz;
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

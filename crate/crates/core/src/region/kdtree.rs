//! Exact k-nearest-neighbor search over a static point set.
//!
//! Neighbors are ordered by `(squared distance, index)`, so equidistant
//! points resolve to the lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    root: Node,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut order, 0);
        Self { points, order, root }
    }

    fn build_node(points: &[Vec3], order: &mut [usize], offset: usize) -> Node {
        if order.len() <= LEAF_SIZE {
            return Node::Leaf { start: offset, end: offset + order.len() };
        }
        let mut lo = points[order[0]];
        let mut hi = lo;
        for &i in order.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[order[mid]][axis];
        let (l, r) = order.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, l, offset)),
            right: Box::new(Self::build_node(points, r, offset + mid)),
        }
    }

    /// The `k` nearest points to `query` as `(squared distance, index)`,
    /// closest first.
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, query, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.dist2, c.index)).collect()
    }

    fn search(&self, node: &Node, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let c = Candidate { dist2: (self.points[i] - q).norm_squared(), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Equal distance still has to be visited: a lower index may tie.
                if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3, k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_including_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // lattice points produce many exact ties
        let mut points: Vec<Vec3> = (0..400)
            .map(|_| {
                Vec3::new(rng.random_range(0..6) as f64, rng.random_range(0..6) as f64, rng.random_range(0..6) as f64)
                    * 0.1
            })
            .collect();
        points.extend((0..300).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())));
        let tree = KdTree::build(&points);
        for _ in 0..300 {
            let q = Vec3::new(rng.random_range(0..6) as f64 * 0.1, rng.random(), rng.random_range(0..6) as f64 * 0.1);
            for k in [1, 3, 8, 20] {
                assert_eq!(tree.nearest(&q, k), brute(&points, &q, k));
            }
        }
    }
}

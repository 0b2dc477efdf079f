//! Exact nearest-neighbour index over a static 3-D point set.

use nalgebra::Vector3;

use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

/// k-d tree returning the exact nearest point; equidistant candidates are
/// resolved to the lowest original index.
#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Vector3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vector3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        // placeholder, patched once both children exist
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let first = self.points[self.order[start]];
        let (mut lo, mut hi) = (first, first);
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let ext = hi - lo;
        let mut axis = 0;
        for k in 1..3 {
            if ext[k] > ext[axis] {
                axis = k;
            }
        }
        axis
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    /// Index and squared distance of the nearest point, `None` when empty.
    pub fn nearest(&self, query: &Vector3<T>) -> Option<(usize, T)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, crate::scalar::lit::<T>(f64::INFINITY));
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Vector3<T>, best: &mut (usize, T)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Exhaustive nearest-point search with the same tie-breaking rule.
pub fn nearest_linear<T: Real>(points: &[Vector3<T>], query: &Vector3<T>) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        match best {
            Some((_, b)) if d2 >= b => {}
            _ => best = Some((i, d2)),
        }
    }
    best
}

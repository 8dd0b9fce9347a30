//! Axis-aligned bounding volume hierarchy over world-space triangles.

use crate::num::{Real, Vec3};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Aabb<T: Real> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(T::INFINITY),
            max: Vec3::repeat(T::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3<T>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, other: &Aabb<T>) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    /// Entry distance of the ray into the box, if it enters before `t_max`.
    fn entry(&self, origin: &Vec3<T>, inv_dir: &Vec3<T>, t_min: T, t_max: T) -> Option<T> {
        let mut lo = t_min;
        let mut hi = t_max;
        for a in 0..3 {
            if inv_dir[a].finite() {
                let t0 = (self.min[a] - origin[a]) * inv_dir[a];
                let t1 = (self.max[a] - origin[a]) * inv_dir[a];
                let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                lo = lo.max(near);
                hi = hi.min(far);
            } else if origin[a] < self.min[a] || origin[a] > self.max[a] {
                return None;
            }
        }
        (lo <= hi).then_some(lo)
    }
}

struct Node<T: Real> {
    bounds: Aabb<T>,
    /// Leaf: first entry in `order`. Interior: index of the left child (right is `left + 1`).
    start: u32,
    /// Number of triangles for a leaf, zero for interior nodes.
    count: u32,
}

pub(crate) struct Bvh<T: Real> {
    nodes: Vec<Node<T>>,
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl<T: Real> Bvh<T> {
    pub fn build(tris: &[[Vec3<T>; 3]]) -> Self {
        let mut bvh = Bvh { nodes: Vec::new(), order: (0..tris.len() as u32).collect() };
        if tris.is_empty() {
            return bvh;
        }
        let boxes: Vec<Aabb<T>> = tris
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                t.iter().for_each(|p| b.grow(p));
                // pad so slab tests never reject hits that land on a face of the box
                let scale = b.min.abs().max().max(b.max.abs().max()) + T::one();
                let pad = Vec3::repeat(T::default_epsilon() * T::lit(64.0) * scale);
                b.min -= pad;
                b.max += pad;
                b
            })
            .collect();
        let centroids: Vec<Vec3<T>> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / T::lit(3.0)).collect();
        bvh.nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
        bvh.split(0, 0, tris.len(), &boxes, &centroids);
        bvh
    }

    fn split(&mut self, node: usize, start: usize, end: usize, boxes: &[Aabb<T>], centroids: &[Vec3<T>]) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &i in &self.order[start..end] {
            bounds.merge(&boxes[i as usize]);
            cbounds.grow(&centroids[i as usize]);
        }
        self.nodes[node].bounds = bounds;
        let extent = cbounds.max - cbounds.min;
        if end - start <= LEAF_SIZE || extent.max() <= T::zero() {
            self.nodes[node].start = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let axis = extent.imax();
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let left = self.nodes.len();
        self.nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
        self.nodes.push(Node { bounds: Aabb::empty(), start: 0, count: 0 });
        self.nodes[node].start = left as u32;
        self.split(left, start, mid, boxes, centroids);
        self.split(left + 1, mid, end, boxes, centroids);
    }

    /// Finds the closest accepted triangle hit in `(t_min, t_max)`.
    ///
    /// `test` returns the hit distance for a triangle index, or `None`.
    /// Ties in distance resolve to the lowest triangle index, so the result
    /// equals a linear scan over all triangles.
    pub fn closest<F>(&self, origin: &Vec3<T>, dir: &Vec3<T>, t_min: T, t_max: T, mut test: F) -> Option<(usize, T)>
    where
        F: FnMut(usize) -> Option<T>,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| T::one() / d);
        let mut best: Option<(usize, T)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let limit = best.map_or(t_max, |b| b.1);
            match node.bounds.entry(origin, &inv, t_min, limit) {
                Some(_) => {}
                None => continue,
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &tri in &self.order[s..s + node.count as usize] {
                    let tri = tri as usize;
                    if let Some(t) = test(tri) {
                        if t > t_min && t < t_max {
                            let better = match best {
                                None => true,
                                Some((bi, bt)) => t < bt || (t == bt && tri < bi),
                            };
                            if better {
                                best = Some((tri, t));
                            }
                        }
                    }
                }
            } else {
                let l = node.start as usize;
                let el = self.nodes[l].bounds.entry(origin, &inv, t_min, limit);
                let er = self.nodes[l + 1].bounds.entry(origin, &inv, t_min, limit);
                // push the farther child first so the nearer one is visited first
                match (el, er) {
                    (Some(a), Some(b)) if b < a => {
                        stack.push(l);
                        stack.push(l + 1);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(l + 1);
                        stack.push(l);
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(l + 1),
                    (None, None) => {}
                }
            }
        }
        best
    }
}

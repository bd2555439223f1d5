//! Bounding volume hierarchy over axis-aligned boxes.
//!
//! Used twice: over boundary triangles for ray/mesh intersection and over
//! tetrahedra as the fallback path of point location.

use alloc::vec::Vec;

use crate::math::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;
const STACK_DEPTH: usize = 96;

#[derive(Debug, Clone, Copy)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Index of the left child for inner nodes (right child is `first + 1`),
    /// or of the first primitive slot for leaves.
    pub first: u32,
    /// Number of primitives; zero marks an inner node.
    pub count: u32,
}

impl BvhNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Primitive ids in leaf order.
    prims: Vec<u32>,
}

impl Bvh {
    /// Builds a hierarchy over the given primitive boxes by recursive median
    /// splits along the widest centroid axis.
    pub fn build(boxes: &[Aabb]) -> Self {
        let mut prims: Vec<u32> = (0..boxes.len() as u32).collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if boxes.is_empty() {
            return Bvh { nodes, prims };
        }
        nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
        // (node index, start, end)
        let mut work: Vec<(usize, usize, usize)> = alloc::vec![(0, 0, boxes.len())];
        while let Some((node, start, end)) = work.pop() {
            let slice = &mut prims[start..end];
            let bounds = slice.iter().fold(Aabb::EMPTY, |b, &p| b.union(boxes[p as usize]));
            nodes[node].bounds = bounds;
            if end - start <= LEAF_SIZE {
                nodes[node].first = start as u32;
                nodes[node].count = (end - start) as u32;
                continue;
            }
            let cbounds = slice.iter().fold(Aabb::EMPTY, |b, &p| b.grow(centroids[p as usize]));
            let ext = cbounds.extent();
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = slice.len() / 2;
            slice.select_nth_unstable_by(mid, |&a, &b| {
                centroids[a as usize][axis]
                    .partial_cmp(&centroids[b as usize][axis])
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let left = nodes.len();
            nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
            nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
            nodes[node].first = left as u32;
            nodes[node].count = 0;
            work.push((left + 1, start + mid, end));
            work.push((left, start, start + mid));
        }
        Bvh { nodes, prims }
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn leaf_prims(&self, node: &BvhNode) -> &[u32] {
        &self.prims[node.first as usize..(node.first + node.count) as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes.first().map(|n| n.bounds).unwrap_or(Aabb::EMPTY)
    }

    /// Visits every primitive whose box contains `p` (inflated by `eps`)
    /// until `visit` returns `Some`.
    pub fn find_point<T>(&self, p: Vec3, eps: f64, mut visit: impl FnMut(u32) -> Option<T>) -> Option<T> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut stack = [0u32; STACK_DEPTH];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.contains(p, eps) {
                continue;
            }
            if node.is_leaf() {
                for &prim in self.leaf_prims(node) {
                    if let Some(found) = visit(prim) {
                        return Some(found);
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        None
    }

    /// Visits every primitive whose box overlaps the ray segment `[t_min, t_max]`.
    pub fn for_each_on_ray(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64, mut visit: impl FnMut(u32)) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0u32; STACK_DEPTH];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let inflated = Aabb::new(node.bounds.min - Vec3::splat(1e-9), node.bounds.max + Vec3::splat(1e-9));
            if inflated.ray_overlap(origin, inv, t_min, t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                for &prim in self.leaf_prims(node) {
                    visit(prim);
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
    }
}

//! Bounding-volume hierarchy over triangle bounding boxes, used to prune
//! closest-point queries.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    min: Vector3<f64>,
    max: Vector3<f64>,
    /// Child node indexes for interior nodes.
    children: Option<(u32, u32)>,
    /// Range into the permuted triangle order for leaves.
    start: u32,
    count: u32,
}

/// Static median-split BVH. Leaves reference contiguous runs of the
/// permuted triangle index list.
#[derive(Debug, Clone, Default)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    /// Build over per-triangle bounding boxes, splitting at the centroid
    /// median of the largest axis.
    pub fn build(boxes: &[(Vector3<f64>, Vector3<f64>)]) -> Self {
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..boxes.len() as u32).collect(),
        };
        if boxes.is_empty() {
            return bvh;
        }
        let centroids: Vec<Vector3<f64>> =
            boxes.iter().map(|(lo, hi)| (lo + hi) * 0.5).collect();
        bvh.split(0, boxes.len(), boxes, &centroids);
        bvh
    }

    fn split(
        &mut self,
        start: usize,
        count: usize,
        boxes: &[(Vector3<f64>, Vector3<f64>)],
        centroids: &[Vector3<f64>],
    ) -> u32 {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..start + count] {
            min = min.inf(&boxes[t as usize].0);
            max = max.sup(&boxes[t as usize].1);
        }
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            min,
            max,
            children: None,
            start: start as u32,
            count: count as u32,
        });
        if count > LEAF_SIZE {
            let extent = max - min;
            let axis = extent.imax();
            self.order[start..start + count]
                .sort_unstable_by(|&a, &b| {
                    centroids[a as usize][axis]
                        .partial_cmp(&centroids[b as usize][axis])
                        .unwrap()
                });
            let half = count / 2;
            let left = self.split(start, half, boxes, centroids);
            let right = self.split(start + half, count - half, boxes, centroids);
            self.nodes[node_id as usize].children = Some((left, right));
        }
        node_id
    }

    /// Visit candidate triangles nearest-subtree-first. `visit` receives a
    /// triangle index and the current best squared distance and returns
    /// the (possibly improved) best squared distance; subtrees farther
    /// than the current best are pruned.
    pub fn for_closest(&self, p: Vector3<f64>, mut visit: impl FnMut(u32, f64) -> f64) {
        if self.nodes.is_empty() {
            return;
        }
        let mut best = f64::INFINITY;
        let mut stack: Vec<(u32, f64)> = vec![(0, self.aabb_dist_sq(0, p))];
        while let Some((node_id, d2)) = stack.pop() {
            if d2 >= best {
                continue;
            }
            let node = &self.nodes[node_id as usize];
            match node.children {
                Some((l, r)) => {
                    let dl = self.aabb_dist_sq(l, p);
                    let dr = self.aabb_dist_sq(r, p);
                    // Push the nearer child last so it pops first.
                    if dl < dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
                None => {
                    for &t in &self.order[node.start as usize..(node.start + node.count) as usize]
                    {
                        best = visit(t, best);
                    }
                }
            }
        }
    }

    fn aabb_dist_sq(&self, node: u32, p: Vector3<f64>) -> f64 {
        let n = &self.nodes[node as usize];
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = (n.min[k] - p[k]).max(p[k] - n.max[k]).max(0.0);
            d2 += v * v;
        }
        d2
    }
}

//! Watertight-or-not triangle meshes with signed distance queries.
//!
//! The sign of the distance is decided by the angle-weighted pseudonormal of
//! the closest feature (face, edge or vertex), so it stays correct near
//! edges and corners where a plain face normal would flip erratically. An
//! internal BVH prunes the closest-point search.

pub mod stl;

mod bvh;

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

use crate::sdf::SignedDistance;
use bvh::Bvh;

/// Errors produced while constructing a triangle mesh.
#[derive(Debug, Error)]
pub enum TriMeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {0} references vertex {1} out of {2}")]
    IndexOutOfRange(usize, u32, usize),
    #[error("all triangles are degenerate")]
    AllDegenerate,
}

/// The surface feature a closest point landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Triangle interior; carries the triangle index.
    Face(u32),
    /// Shared edge, keyed by its sorted vertex pair.
    Edge(u32, u32),
    /// Mesh vertex.
    Vertex(u32),
}

/// Result of a signed distance query.
#[derive(Debug, Clone, Copy)]
pub struct SignedDistanceResult {
    /// Signed distance; negative inside the surface.
    pub distance: f64,
    /// Closest point on the mesh.
    pub closest_point: Vector3<f64>,
    /// Feature the closest point lies on.
    pub feature: Feature,
}

/// Indexed triangle mesh with precomputed angle-weighted pseudonormals and
/// a BVH for closest-point queries.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    /// Unit face normals; zero for degenerate (zero-area) triangles.
    face_normals: Vec<Vector3<f64>>,
    /// Angle-weighted vertex pseudonormals (unnormalized).
    vertex_normals: Vec<Vector3<f64>>,
    /// Edge pseudonormals (sum of adjacent face normals), keyed by the
    /// sorted vertex pair. Border edges carry their single face normal.
    edge_normals: HashMap<(u32, u32), Vector3<f64>>,
    bvh: Bvh,
}

impl TriangleMesh {
    /// Build a mesh from an indexed vertex/triangle list. Degenerate
    /// (zero-area) triangles are kept for distance queries but skipped
    /// when accumulating pseudonormals.
    pub fn build(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, TriMeshError> {
        if triangles.is_empty() {
            return Err(TriMeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v as usize >= vertices.len() {
                    return Err(TriMeshError::IndexOutOfRange(t, v, vertices.len()));
                }
            }
        }

        let mut face_normals = Vec::with_capacity(triangles.len());
        let mut vertex_normals = vec![Vector3::zeros(); vertices.len()];
        let mut edge_normals: HashMap<(u32, u32), Vector3<f64>> = HashMap::new();
        let mut any_area = false;

        for tri in &triangles {
            let [a, b, c] = [
                vertices[tri[0] as usize],
                vertices[tri[1] as usize],
                vertices[tri[2] as usize],
            ];
            let cross = (b - a).cross(&(c - a));
            let area2 = cross.norm();
            if area2 <= f64::MIN_POSITIVE.sqrt() {
                face_normals.push(Vector3::zeros());
                continue;
            }
            any_area = true;
            let n = cross / area2;
            face_normals.push(n);
            for k in 0..3 {
                let v = tri[k] as usize;
                let p = vertices[v];
                let e0 = (vertices[tri[(k + 1) % 3] as usize] - p).normalize();
                let e1 = (vertices[tri[(k + 2) % 3] as usize] - p).normalize();
                let angle = e0.dot(&e1).clamp(-1.0, 1.0).acos();
                vertex_normals[v] += angle * n;
            }
            for k in 0..3 {
                let key = edge_key(tri[k], tri[(k + 1) % 3]);
                *edge_normals.entry(key).or_insert_with(Vector3::zeros) += n;
            }
        }
        if !any_area {
            return Err(TriMeshError::AllDegenerate);
        }

        // Degenerate triangles were skipped above, so their normals never
        // reached the accumulators; a dangling (unwelded) copy of a shared
        // edge simply keeps the one normal it saw.
        let boxes: Vec<_> = triangles
            .iter()
            .map(|tri| {
                let a = vertices[tri[0] as usize];
                let b = vertices[tri[1] as usize];
                let c = vertices[tri[2] as usize];
                (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
            })
            .collect();
        let bvh = Bvh::build(&boxes);

        Ok(TriangleMesh {
            vertices,
            triangles,
            face_normals,
            vertex_normals,
            edge_normals,
            bvh,
        })
    }

    /// Build from a triangle soup, welding vertices that quantize to the
    /// same cell of a grid sized `tolerance` (default: 1e-6 of the
    /// bounding-box diagonal).
    pub fn from_soup(
        soup: &[[Vector3<f64>; 3]],
        tolerance: Option<f64>,
    ) -> Result<Self, TriMeshError> {
        if soup.is_empty() {
            return Err(TriMeshError::Empty);
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for tri in soup {
            for p in tri {
                min = min.inf(p);
                max = max.sup(p);
            }
        }
        let tol = tolerance.unwrap_or_else(|| 1e-6 * (max - min).norm());
        let quantum = if tol > 0.0 { tol } else { f64::MIN_POSITIVE };

        let mut lookup: HashMap<(i64, i64, i64), u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(soup.len());
        for tri in soup {
            let mut ids = [0u32; 3];
            for (k, p) in tri.iter().enumerate() {
                let key = (
                    (p.x / quantum).round() as i64,
                    (p.y / quantum).round() as i64,
                    (p.z / quantum).round() as i64,
                );
                ids[k] = *lookup.entry(key).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() as u32 - 1
                });
            }
            triangles.push(ids);
        }
        Self::build(vertices, triangles)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Axis-aligned bounding box of all vertices.
    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            min = min.inf(p);
            max = max.sup(p);
        }
        (min, max)
    }

    /// Copy of the mesh with the given triangles removed (vertex list is
    /// kept as-is). Useful for building leaky test surfaces.
    pub fn without_triangles(&self, remove: &[usize]) -> Result<Self, TriMeshError> {
        let triangles: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .enumerate()
            .filter(|(t, _)| !remove.contains(t))
            .map(|(_, tri)| *tri)
            .collect();
        Self::build(self.vertices.clone(), triangles)
    }

    /// Signed distance with the closest point and feature. The sign comes
    /// from the pseudonormal of the closest feature: negative when the
    /// query point is on the inner side.
    pub fn signed_distance_query(&self, p: Vector3<f64>) -> SignedDistanceResult {
        let mut best_d2 = f64::INFINITY;
        let mut best_point = Vector3::zeros();
        let mut best_feature = Feature::Face(0);
        self.bvh.for_closest(p, |t, best| {
            let tri = self.triangles[t as usize];
            let (cp, feature) = self.closest_on_triangle(p, t, tri);
            let d2 = (p - cp).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best_point = cp;
                best_feature = feature;
            }
            best.min(d2)
        });

        let normal = match best_feature {
            Feature::Face(t) => self.face_normals[t as usize],
            Feature::Edge(a, b) => self
                .edge_normals
                .get(&(a, b))
                .copied()
                .unwrap_or_else(Vector3::zeros),
            Feature::Vertex(v) => self.vertex_normals[v as usize],
        };
        let offset = p - best_point;
        let sign = if normal.dot(&offset) < 0.0 { -1.0 } else { 1.0 };
        SignedDistanceResult {
            distance: sign * best_d2.sqrt(),
            closest_point: best_point,
            feature: best_feature,
        }
    }

    /// Closest point on triangle `t` together with the feature it lies on,
    /// classified by barycentric region.
    fn closest_on_triangle(
        &self,
        p: Vector3<f64>,
        t: u32,
        tri: [u32; 3],
    ) -> (Vector3<f64>, Feature) {
        let a = self.vertices[tri[0] as usize];
        let b = self.vertices[tri[1] as usize];
        let c = self.vertices[tri[2] as usize];

        if self.face_normals[t as usize] == Vector3::zeros() {
            return closest_on_degenerate(p, tri, [a, b, c]);
        }

        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return (a, Feature::Vertex(tri[0]));
        }

        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return (b, Feature::Vertex(tri[1]));
        }

        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let t01 = d1 / (d1 - d3);
            return (a + ab * t01, Feature::Edge(tri[0].min(tri[1]), tri[0].max(tri[1])));
        }

        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return (c, Feature::Vertex(tri[2]));
        }

        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let t02 = d2 / (d2 - d6);
            return (a + ac * t02, Feature::Edge(tri[0].min(tri[2]), tri[0].max(tri[2])));
        }

        let va = d3 * d6 - d4 * d5;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let t12 = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            return (
                b + (c - b) * t12,
                Feature::Edge(tri[1].min(tri[2]), tri[1].max(tri[2])),
            );
        }

        let denom = 1.0 / (va + vb + vc);
        let v = vb * denom;
        let w = vc * denom;
        (a + ab * v + ac * w, Feature::Face(t))
    }
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Closest point on a zero-area triangle: best point over its three edge
/// segments, classified as an edge or vertex feature.
fn closest_on_degenerate(
    p: Vector3<f64>,
    tri: [u32; 3],
    corners: [Vector3<f64>; 3],
) -> (Vector3<f64>, Feature) {
    let mut best_d2 = f64::INFINITY;
    let mut best = (corners[0], Feature::Vertex(tri[0]));
    for k in 0..3 {
        let (i, j) = (k, (k + 1) % 3);
        let (a, b) = (corners[i], corners[j]);
        let ab = b - a;
        let len2 = ab.norm_squared();
        let (cp, feature) = if len2 == 0.0 {
            (a, Feature::Vertex(tri[i]))
        } else {
            let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
            if t == 0.0 {
                (a, Feature::Vertex(tri[i]))
            } else if t == 1.0 {
                (b, Feature::Vertex(tri[j]))
            } else {
                (a + ab * t, Feature::Edge(tri[i].min(tri[j]), tri[i].max(tri[j])))
            }
        };
        let d2 = (p - cp).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = (cp, feature);
        }
    }
    best
}

impl SignedDistance<3> for TriangleMesh {
    fn signed_distance(&self, p: crate::geometry::Position<3>) -> f64 {
        self.signed_distance_query(p).distance
    }
}

/// Axis-aligned box surface as 12 triangles with outward winding.
pub fn box_mesh(min: Vector3<f64>, max: Vector3<f64>) -> TriangleMesh {
    let v = |x: bool, y: bool, z: bool| {
        Vector3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    let corners = [
        v(false, false, false), // 0
        v(true, false, false),  // 1
        v(true, true, false),   // 2
        v(false, true, false),  // 3
        v(false, false, true),  // 4
        v(true, false, true),   // 5
        v(true, true, true),    // 6
        v(false, true, true),   // 7
    ];
    let quads: [[u32; 4]; 6] = [
        [0, 3, 2, 1], // -z
        [4, 5, 6, 7], // +z
        [0, 1, 5, 4], // -y
        [2, 3, 7, 6], // +y
        [0, 4, 7, 3], // -x
        [1, 2, 6, 5], // +x
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriangleMesh::build(corners.to_vec(), triangles).expect("box mesh is well formed")
}

/// Icosphere: regular icosahedron refined by `subdivisions` rounds of edge
/// midpoint splitting, with every vertex projected onto the sphere.
pub fn icosphere(center: Vector3<f64>, radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let mut vertices: Vec<Vector3<f64>> = raw
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mid = [0u32; 3];
            for k in 0..3 {
                let key = edge_key(tri[k], tri[(k + 1) % 3]);
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[key.0 as usize] + vertices[key.1 as usize]).normalize();
                    vertices.push(m);
                    vertices.len() as u32 - 1
                });
            }
            next.push([tri[0], mid[0], mid[2]]);
            next.push([tri[1], mid[1], mid[0]]);
            next.push([tri[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
    }

    for v in &mut vertices {
        *v = center + *v * radius;
    }
    TriangleMesh::build(vertices, triangles).expect("icosphere is well formed")
}

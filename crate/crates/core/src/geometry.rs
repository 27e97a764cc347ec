//! Point clouds, triangle meshes, 9-DOF poses, a KD index and the chamfer family.
//!
//! Conventions: +z is up, yaw rotates about z, and a pose maps a canonical
//! point `p` to `R (s * p) + t` with `R = Rz(rz) Ry(ry) Rx(rx)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Point3};

/// Lower bound on the number of surface samples drawn for tiny boxes.
pub const MIN_SURFACE_SAMPLES: usize = 64;

/// Default point density per cubic meter of box volume.
pub const DEFAULT_SAMPLE_DENSITY: f64 = 25_000.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(|p| p.is_finite()));
        PointCloud { points }
    }

    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn try_new(points: Vec<Point3>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| (lo.min(*p), hi.max(*p))))
    }

    /// Keeps at most `max` points using a fixed stride, preserving order.
    pub fn strided(&self, max: usize) -> PointCloud {
        if self.points.len() <= max || max == 0 {
            return self.clone();
        }
        let n = self.points.len();
        let points = (0..max).map(|i| self.points[i * n / max]).collect();
        PointCloud { points }
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
    pub category: Option<String>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= vertices.len() {
                    return Err(Error::IndexOutOfRange { triangle: t, index, vertices: vertices.len() });
                }
            }
        }
        Ok(TriangleMesh { vertices, triangles, category: None })
    }

    pub fn empty() -> Self {
        TriangleMesh::default()
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| (lo.min(*p), hi.max(*p))))
    }

    /// Appends another mesh's triangles.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    /// Applies `pose` to every vertex.
    pub fn transformed(&self, pose: &Pose) -> TriangleMesh {
        let xf = pose.transform();
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| xf.apply(v)).collect(),
            triangles: self.triangles.clone(),
            category: self.category.clone(),
        }
    }

    /// Maps the bounding box onto `[-0.5, 0.5]^3`, axis by axis. Flat axes are
    /// only centered.
    pub fn normalized_to_unit_box(&self) -> TriangleMesh {
        let Some((lo, hi)) = self.bounds() else {
            return self.clone();
        };
        let center = (lo + hi) * 0.5;
        let ext = hi - lo;
        let inv = |e: f64| if e > 0.0 { 1.0 / e } else { 1.0 };
        let scale = Point3::new(inv(ext.x), inv(ext.y), inv(ext.z));
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| (v - center).component_mul(scale)).collect(),
            triangles: self.triangles.clone(),
            category: self.category.clone(),
        }
    }

    /// FNV-1a over vertex bit patterns and indices; stable across runs and platforms.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for v in &self.vertices {
            eat(&v.x.to_bits().to_le_bytes());
            eat(&v.y.to_bits().to_le_bytes());
            eat(&v.z.to_bits().to_le_bytes());
        }
        for t in &self.triangles {
            for i in t {
                eat(&i.to_le_bytes());
            }
        }
        h
    }

    /// Axis-aligned cuboid with 12 outward-wound triangles.
    pub fn cuboid(lo: Point3, hi: Point3) -> TriangleMesh {
        let v = |x: bool, y: bool, z: bool| {
            Point3::new(if x { hi.x } else { lo.x }, if y { hi.y } else { lo.y }, if z { hi.z } else { lo.z })
        };
        let vertices = alloc::vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let triangles = alloc::vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriangleMesh { vertices, triangles, category: None }
    }

    /// Closed vertical prism approximating a (possibly tapered) cylinder.
    pub fn prism(center: Point3, radius_bottom: f64, radius_top: f64, height: f64, segments: usize) -> TriangleMesh {
        let segments = segments.max(3);
        let mut vertices = Vec::with_capacity(2 * segments + 2);
        for (r, z) in [(radius_bottom, center.z), (radius_top, center.z + height)] {
            for i in 0..segments {
                let a = 2.0 * core::f64::consts::PI * i as f64 / segments as f64;
                vertices.push(Point3::new(center.x + r * math::cos(a), center.y + r * math::sin(a), z));
            }
        }
        let bottom_c = vertices.len() as u32;
        vertices.push(center);
        let top_c = vertices.len() as u32;
        vertices.push(Point3::new(center.x, center.y, center.z + height));
        let n = segments as u32;
        let mut triangles = Vec::with_capacity(4 * segments);
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([i, j, n + j]);
            triangles.push([i, n + j, n + i]);
            triangles.push([bottom_c, j, i]);
            triangles.push([top_c, n + i, n + j]);
        }
        TriangleMesh { vertices, triangles, category: None }
    }

    /// Axis-aligned rectangle in the plane `z = z`, spanning `lo..hi` in x and y.
    pub fn quad_z(lo: (f64, f64), hi: (f64, f64), z: f64) -> TriangleMesh {
        let vertices = alloc::vec![
            Point3::new(lo.0, lo.1, z),
            Point3::new(hi.0, lo.1, z),
            Point3::new(hi.0, hi.1, z),
            Point3::new(lo.0, hi.1, z),
        ];
        TriangleMesh { vertices, triangles: alloc::vec![[0, 1, 2], [0, 2, 3]], category: None }
    }
}

/// 9-DOF placement: per-axis scale, Euler XYZ rotation (radians) and translation (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub scale: Point3,
    pub rotation: Point3,
    pub translation: Point3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { scale: Point3::new(1.0, 1.0, 1.0), rotation: Point3::ZERO, translation: Point3::ZERO };

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.rotation.is_finite() && self.translation.is_finite()) {
            return Err(Error::InvalidPose("non-finite parameter"));
        }
        if self.scale.x <= 0.0 || self.scale.y <= 0.0 || self.scale.z <= 0.0 {
            return Err(Error::InvalidPose("scale must be positive"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        Mat3::rot_z(self.rotation.z).mul_mat(&Mat3::rot_y(self.rotation.y)).mul_mat(&Mat3::rot_x(self.rotation.x))
    }

    pub fn transform(&self) -> Transform {
        Transform { rotation: self.rotation_matrix(), scale: self.scale, translation: self.translation }
    }

    /// The same placement spun about the vertical axis through its own origin.
    pub fn rotated_about_z(&self, angle: f64) -> Pose {
        Pose { rotation: Point3::new(self.rotation.x, self.rotation.y, self.rotation.z + angle), ..*self }
    }

    /// Parameters in the order scale xyz, rotation xyz, translation xyz.
    pub fn to_params(&self) -> [f64; 9] {
        let (s, r, t) = (self.scale, self.rotation, self.translation);
        [s.x, s.y, s.z, r.x, r.y, r.z, t.x, t.y, t.z]
    }

    pub fn from_params(p: &[f64; 9]) -> Pose {
        Pose {
            scale: Point3::new(p[0], p[1], p[2]),
            rotation: Point3::new(p[3], p[4], p[5]),
            translation: Point3::new(p[6], p[7], p[8]),
        }
    }
}

/// A pose with its rotation matrix precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Transform {
    pub rotation: Mat3,
    pub scale: Point3,
    pub translation: Point3,
}

impl Transform {
    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation.mul_vec(p.component_mul(self.scale)) + self.translation
    }

    /// Rotates back and removes the translation, leaving the point in the
    /// scaled canonical frame (i.e. `s * p` for a point produced by `apply`).
    #[inline]
    pub fn unrotate(&self, p: Point3) -> Point3 {
        self.rotation.transpose().mul_vec(p - self.translation)
    }

    #[inline]
    pub fn apply_inverse(&self, p: Point3) -> Point3 {
        self.unrotate(p).component_div(self.scale)
    }
}

pub fn apply_pose(pose: &Pose, cloud: &PointCloud) -> PointCloud {
    let xf = pose.transform();
    PointCloud::new(cloud.iter().map(|&p| xf.apply(p)).collect())
}

/// Oriented 3D box with yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrientedBox {
    pub center: Point3,
    pub extents: Point3,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Point3, extents: Point3, yaw: f64) -> Result<Self> {
        let b = OrientedBox { center, extents, yaw };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center.is_finite() && self.extents.is_finite() && self.yaw.is_finite()) {
            return Err(Error::NonFinite("oriented box"));
        }
        if self.extents.x <= 0.0 || self.extents.y <= 0.0 || self.extents.z <= 0.0 {
            return Err(Error::InvalidArgument("box extents must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    /// Pose that places a unit-box canonical model exactly into this box.
    pub fn pose(&self) -> Pose {
        Pose { scale: self.extents, rotation: Point3::new(0.0, 0.0, self.yaw), translation: self.center }
    }

    /// The box pose spun by `angle_deg` about the vertical axis. Near quarter
    /// turns the horizontal extents are exchanged so the model still fills
    /// the same footprint.
    pub fn rotated_pose(&self, angle_deg: f64) -> Pose {
        let a = angle_deg * (core::f64::consts::PI / 180.0);
        let mut scale = self.extents;
        if math::abs(math::sin(a)) > math::abs(math::cos(a)) + 1e-9 {
            core::mem::swap(&mut scale.x, &mut scale.y);
        }
        Pose { scale, rotation: Point3::new(0.0, 0.0, self.yaw + a), translation: self.center }
    }
}

/// `max(round(m * sx * sy * sz), MIN_SURFACE_SAMPLES)`.
pub fn sample_count(extents: Point3, density: f64) -> usize {
    let n = math::round(density * extents.x * extents.y * extents.z);
    if n.is_finite() && n > MIN_SURFACE_SAMPLES as f64 {
        n as usize
    } else {
        MIN_SURFACE_SAMPLES
    }
}

/// Area-uniform surface samples with the count set by the box volume.
pub fn sample_surface(mesh: &TriangleMesh, bbox: &OrientedBox, density: f64, seed: u64) -> Result<PointCloud> {
    if !(density > 0.0) {
        return Err(Error::InvalidArgument("sample density must be positive".into()));
    }
    sample_surface_n(mesh, sample_count(bbox.extents, density), seed)
}

/// Exactly `n` area-uniform surface samples.
pub fn sample_surface_n(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh);
    }
    let last = cumulative.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        // zero-area triangles share their predecessor's cumulative value and are never picked
        let tri = cumulative.partition_point(|&c| c <= u).min(last);
        let [a, b, c] = mesh.triangle(tri);
        let r1 = math::sqrt(rng.random::<f64>());
        let r2 = rng.random::<f64>();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    Ok(PointCloud::new(points))
}

const KD_LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct KdNode {
    start: u32,
    end: u32,
    /// `u8::MAX` marks a leaf.
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

/// Immutable KD index over a point cloud. Query results report indices into
/// the original cloud.
#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<Point3>,
    original: Vec<u32>,
    /// Inverse of `original`.
    slot: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl KdIndex {
    pub fn build(cloud: &PointCloud) -> KdIndex {
        let mut order: Vec<u32> = (0..cloud.len() as u32).collect();
        let mut nodes = Vec::new();
        if !cloud.is_empty() {
            build_node(cloud.points(), &mut order, 0, cloud.len(), &mut nodes);
        }
        let points = order.iter().map(|&i| cloud.points()[i as usize]).collect();
        let mut slot = vec![0u32; order.len()];
        for (s, &o) in order.iter().enumerate() {
            slot[o as usize] = s as u32;
        }
        KdIndex { points, original: order, slot, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point: `(original index, Euclidean distance)`.
    pub fn nearest(&self, q: Point3) -> Option<(usize, f64)> {
        self.nearest_weighted(q, Point3::splat(1.0))
    }

    /// Nearest point under the axis-weighted metric
    /// `sqrt(sum_i (w_i (p_i - q_i))^2)`. Weights must be positive.
    ///
    /// With an index over canonical samples `c`, the posed distance
    /// `|R (s * c) + t - p|` equals this metric with `w = s` and
    /// `q = (R^T (p - t)) / s`.
    pub fn nearest_weighted(&self, q: Point3, w: Point3) -> Option<(usize, f64)> {
        self.nearest_weighted_hinted(q, w, None)
    }

    /// [`KdIndex::nearest_weighted`] seeded with a guess (an original index),
    /// typically the answer for a nearby previous query. The distance does not
    /// depend on the guess; among equidistant points the index may.
    pub fn nearest_weighted_hinted(&self, q: Point3, w: Point3, hint: Option<usize>) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        if let Some(&s) = hint.and_then(|h| self.slot.get(h)) {
            let p = self.points[s as usize];
            best = (s as usize, (p - q).component_mul(w).norm_squared());
        }
        self.search(0, q, w, 0.0, &mut [0.0; 3], &mut best);
        Some((self.original[best.0] as usize, math::sqrt(best.1)))
    }

    /// `off` holds the per-axis weighted offsets from `q` to the node's cell
    /// and `rd` their squared sum, a lower bound on any distance inside it.
    fn search(&self, node: usize, q: Point3, w: Point3, rd: f64, off: &mut [f64; 3], best: &mut (usize, f64)) {
        let n = &self.nodes[node];
        if n.axis == u8::MAX {
            for i in n.start as usize..n.end as usize {
                let p = self.points[i];
                let dx = w.x * (p.x - q.x);
                let dy = w.y * (p.y - q.y);
                let dz = w.z * (p.z - q.z);
                let d = dx * dx + dy * dy + dz * dz;
                if d < best.1 {
                    *best = (i, d);
                }
            }
            return;
        }
        let axis = n.axis as usize;
        let diff = w[axis] * (q[axis] - n.split);
        let (near, far) = if diff <= 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near as usize, q, w, rd, off, best);
        let old = off[axis];
        let far_rd = rd - old * old + diff * diff;
        if far_rd < best.1 {
            off[axis] = diff;
            self.search(far as usize, q, w, far_rd, off, best);
            off[axis] = old;
        }
    }
}

fn build_node(points: &[Point3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<KdNode>) -> u32 {
    let id = nodes.len() as u32;
    nodes.push(KdNode { start: start as u32, end: end as u32, axis: u8::MAX, split: 0.0, left: 0, right: 0 });
    if end - start <= KD_LEAF_SIZE {
        return id;
    }
    let slice = &mut order[start..end];
    let (mut lo, mut hi) = (points[slice[0] as usize], points[slice[0] as usize]);
    for &i in slice.iter() {
        lo = lo.min(points[i as usize]);
        hi = hi.max(points[i as usize]);
    }
    let spread = hi - lo;
    let axis = if spread.x >= spread.y && spread.x >= spread.z {
        0
    } else if spread.y >= spread.z {
        1
    } else {
        2
    };
    if spread[axis] <= 0.0 {
        // all points coincide
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a as usize][axis].total_cmp(&points[b as usize][axis]).then(a.cmp(&b)));
    let split = points[slice[mid] as usize][axis];
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    let n = &mut nodes[id as usize];
    n.axis = axis as u8;
    n.split = split;
    n.left = left;
    n.right = right;
    id
}

/// Mean distance from each point of `from` to its nearest neighbour in `to`.
pub fn single_direction_chamfer(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(mean_nearest_distance(from, &KdIndex::build(to)))
}

/// Like [`single_direction_chamfer`] but reuses a prebuilt index of the target set.
pub fn mean_nearest_distance(from: &PointCloud, to: &KdIndex) -> f64 {
    let mut hint = None;
    let sum: f64 = from
        .iter()
        .map(|&p| match to.nearest_weighted_hinted(p, Point3::splat(1.0), hint) {
            Some((i, d)) => {
                hint = Some(i);
                d
            }
            None => f64::INFINITY,
        })
        .sum();
    sum / from.len() as f64
}

/// Symmetric chamfer distance with plain Euclidean point distances.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    Ok(single_direction_chamfer(p, q)? + single_direction_chamfer(q, p)?)
}

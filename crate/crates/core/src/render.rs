//! Deterministic pinhole z-buffer rasterizer.
//!
//! Camera frame follows the usual vision convention: x right, y down, z
//! forward. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and is sampled at its
//! center. Depth is the camera-frame z of the nearest surface.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Pose, TriangleMesh};
use crate::math::{self, Mat3, Point3};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Point3,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Mat3,
        translation: Point3,
        near: f64,
        far: f64,
    ) -> Result<Camera> {
        let cam = Camera { fx, fy, cx, cy, width, height, rotation, translation, near, far };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidCamera("need 0 < near < far"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("empty image"));
        }
        if !self.rotation.is_rotation(1e-9) {
            return Err(Error::InvalidCamera("world-to-camera rotation is not rigid"));
        }
        if !self.translation.is_finite() || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidCamera("non-finite parameter"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with `up` giving the image's upward direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Point3,
        target: Point3,
        up: Point3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Camera> {
        let forward = target - eye;
        let fwd_norm = forward.norm();
        if !(fwd_norm > 0.0) {
            return Err(Error::InvalidCamera("eye and target coincide"));
        }
        let f = forward * (1.0 / fwd_norm);
        let right = f.cross(up);
        let right_norm = right.norm();
        if !(right_norm > 1e-12) {
            return Err(Error::InvalidCamera("up vector parallel to viewing direction"));
        }
        let r = right * (1.0 / right_norm);
        let d = f.cross(r);
        let rotation = Mat3::from_rows(r, d, f);
        let translation = -rotation.mul_vec(eye);
        Camera::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, rotation, translation, near, far)
    }

    #[inline]
    pub fn world_to_camera(&self, p: Point3) -> Point3 {
        self.rotation.mul_vec(p) + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: Point3) -> Point3 {
        self.rotation.transpose().mul_vec(p - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn eye(&self) -> Point3 {
        self.camera_to_world(Point3::ZERO)
    }

    /// Continuous image coordinates and depth of a world point in front of the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy, c.z))
    }

    /// World point seen through the center of pixel `(px, py)` at the given depth.
    pub fn unproject(&self, px: usize, py: usize, depth: f64) -> Point3 {
        let u = px as f64 + 0.5;
        let v = py as f64 + 0.5;
        let c = Point3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        self.camera_to_world(c)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Per-pixel depth in meters; invalid pixels hold NaN.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    depth: Vec<f32>,
}

impl PartialEq for DepthMap {
    /// Bitwise comparison, so NaN sentinels compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.near.to_bits() == other.near.to_bits()
            && self.far.to_bits() == other.far.to_bits()
            && self.depth.len() == other.depth.len()
            && self.depth.iter().zip(&other.depth).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize, near: f64, far: f64) -> DepthMap {
        DepthMap { width, height, near, far, depth: vec![f32::NAN; width * height] }
    }

    pub fn from_raw(width: usize, height: usize, near: f64, far: f64, depth: Vec<f32>) -> Result<DepthMap> {
        if depth.len() != width * height {
            return Err(Error::InvalidArgument(alloc::format!(
                "depth buffer has {} values, expected {}x{}",
                depth.len(),
                width,
                height
            )));
        }
        if depth.iter().any(|d| d.is_infinite()) {
            return Err(Error::NonFinite("depth map"));
        }
        Ok(DepthMap { width, height, near, far, depth })
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.depth
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.depth
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<f32> {
        let d = self.depth[i];
        if d.is_nan() {
            None
        } else {
            Some(d)
        }
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        !self.depth[i].is_nan()
    }

    pub fn valid_mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.depth.iter().map(|d| !d.is_nan()).collect() }
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| !d.is_nan()).count()
    }

    fn check_same_dims(&self, other: &DepthMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch { expected: (self.width, self.height), found: (other.width, other.height) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Mask {
        Mask { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Mask> {
        if bits.len() != width * height {
            return Err(Error::InvalidArgument(alloc::format!("mask has {} bits, expected {}x{}", bits.len(), width, height)));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_same_dims(&self, other: &Mask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch { expected: (self.width, self.height), found: (other.width, other.height) });
        }
        Ok(())
    }
}

/// Renders the posed mesh. No back-face culling; triangles are clipped at
/// the near plane and fragments beyond the far plane are dropped.
pub fn rasterize(mesh: &TriangleMesh, pose: &Pose, cam: &Camera) -> (DepthMap, Mask) {
    let mut zbuf = vec![f64::INFINITY; cam.pixel_count()];
    let xf = pose.transform();
    let cam_verts: Vec<Point3> = mesh.vertices().iter().map(|&v| cam.world_to_camera(xf.apply(v))).collect();
    let mut poly: Vec<Point3> = Vec::with_capacity(4);
    for tri in mesh.triangles() {
        let verts = [cam_verts[tri[0] as usize], cam_verts[tri[1] as usize], cam_verts[tri[2] as usize]];
        if verts.iter().all(|v| v.z < cam.near) {
            continue;
        }
        if verts.iter().all(|v| v.z >= cam.near) {
            raster_triangle(cam, &mut zbuf, verts[0], verts[1], verts[2]);
            continue;
        }
        clip_near(&verts, cam.near, &mut poly);
        for k in 1..poly.len().saturating_sub(1) {
            raster_triangle(cam, &mut zbuf, poly[0], poly[k], poly[k + 1]);
        }
    }
    let mut bits = vec![false; zbuf.len()];
    let depth = zbuf
        .iter()
        .zip(bits.iter_mut())
        .map(|(&z, bit)| {
            if z.is_finite() {
                *bit = true;
                z as f32
            } else {
                f32::NAN
            }
        })
        .collect();
    (
        DepthMap { width: cam.width, height: cam.height, near: cam.near, far: cam.far, depth },
        Mask { width: cam.width, height: cam.height, bits },
    )
}

/// Sutherland-Hodgman against the plane `z = near`.
fn clip_near(verts: &[Point3; 3], near: f64, out: &mut Vec<Point3>) {
    out.clear();
    for i in 0..3 {
        let a = verts[i];
        let b = verts[(i + 1) % 3];
        let a_in = a.z >= near;
        let b_in = b.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = near;
            out.push(p);
        }
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

fn raster_triangle(cam: &Camera, zbuf: &mut [f64], a: Point3, b: Point3, c: Point3) {
    let proj = |p: Point3| (cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy, 1.0 / p.z);
    let (ax, ay, aiz) = proj(a);
    let (bx, by, biz) = proj(b);
    let (cx, cy, ciz) = proj(c);
    let area = edge(ax, ay, bx, by, cx, cy);
    if !(math::abs(area) > 1e-12) || !area.is_finite() {
        return;
    }
    let min_x = ax.min(bx).min(cx);
    let max_x = ax.max(bx).max(cx);
    let min_y = ay.min(by).min(cy);
    let max_y = ay.max(by).max(cy);
    let w = cam.width as f64;
    let h = cam.height as f64;
    if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
        return;
    }
    // pixel i is sampled at i + 0.5
    let x0 = math::floor(min_x - 0.5).max(0.0) as usize;
    let y0 = math::floor(min_y - 0.5).max(0.0) as usize;
    let x1 = (math::floor(max_x - 0.5).min(w - 1.0)).max(-1.0);
    let y1 = (math::floor(max_y - 0.5).min(h - 1.0)).max(-1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let inv_area = 1.0 / area;
    for py in y0..=y1 {
        let sy = py as f64 + 0.5;
        let row = py * cam.width;
        for px in x0..=x1 {
            let sx = px as f64 + 0.5;
            let w0 = edge(bx, by, cx, cy, sx, sy) * inv_area;
            let w1 = edge(cx, cy, ax, ay, sx, sy) * inv_area;
            let w2 = edge(ax, ay, bx, by, sx, sy) * inv_area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let iz = w0 * aiz + w1 * biz + w2 * ciz;
            let z = (1.0 / iz).max(cam.near);
            if !(z <= cam.far) {
                continue;
            }
            let slot = &mut zbuf[row + px];
            if z < *slot {
                *slot = z;
            }
        }
    }
}

/// Per-pixel nearest of two depth maps; a pixel valid in only one input takes that value.
pub fn composite_min(a: &DepthMap, b: &DepthMap) -> Result<DepthMap> {
    Ok(composite_with_winner(a, b)?.0)
}

/// Composites `candidate` over `background` and also reports the pixels
/// where the candidate is the visible surface (ties go to the candidate).
pub fn composite_with_winner(background: &DepthMap, candidate: &DepthMap) -> Result<(DepthMap, Mask)> {
    background.check_same_dims(candidate)?;
    let mut bits = vec![false; background.depth.len()];
    let depth = background
        .depth
        .iter()
        .zip(&candidate.depth)
        .zip(bits.iter_mut())
        .map(|((&bg, &cand), win)| {
            if cand.is_nan() {
                bg
            } else if bg.is_nan() || cand <= bg {
                *win = true;
                cand
            } else {
                bg
            }
        })
        .collect();
    Ok((
        DepthMap { width: background.width, height: background.height, near: background.near, far: background.far, depth },
        Mask { width: background.width, height: background.height, bits },
    ))
}

/// Intersection over union; two empty masks score 1.
pub fn silhouette_iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

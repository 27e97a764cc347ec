//! Seeded generators for shape databases, scanned scenes with known ground
//! truth, and noisy box proposals.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::database::{ShapeDatabase, ShapeId, ShapeRecord};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, PointCloud, Pose, TriangleMesh};
use crate::math::{self, Point3};
use crate::objective::{Frame, Scene};
use crate::render::{composite_with_winner, rasterize, Camera, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShapeFamily {
    Box,
    Cylinder,
    Table,
    Chair,
    Shelf,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 5] =
        [ShapeFamily::Box, ShapeFamily::Cylinder, ShapeFamily::Table, ShapeFamily::Chair, ShapeFamily::Shelf];

    pub fn label(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Table => "table",
            ShapeFamily::Chair => "chair",
            ShapeFamily::Shelf => "shelf",
        }
    }

    pub fn parse(s: &str) -> Result<ShapeFamily> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.label() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown shape family '{s}'")))
    }

    /// Order of the discrete yaw symmetry of the family's shapes once they
    /// are stretched into a box, or `None` for rotationally symmetric ones.
    pub fn yaw_symmetry(self) -> Option<u32> {
        match self {
            ShapeFamily::Chair | ShapeFamily::Shelf => Some(1),
            ShapeFamily::Table | ShapeFamily::Box => Some(2),
            ShapeFamily::Cylinder => None,
        }
    }

    /// A random member, in arbitrary units (records normalize it).
    pub fn mesh(self, rng: &mut ChaCha8Rng) -> TriangleMesh {
        let mut m = TriangleMesh::empty();
        let c = TriangleMesh::cuboid;
        let p = Point3::new;
        match self {
            ShapeFamily::Box => {
                let depth = rng.random_range(0.5..1.5);
                let plinth = rng.random_range(0.0..0.25);
                let inset = rng.random_range(0.02..0.2);
                m.append(&c(p(0.0, 0.0, plinth), p(1.0, depth, 1.0)));
                if plinth > 0.02 {
                    m.append(&c(p(inset, inset, 0.0), p(1.0 - inset, depth - inset, plinth)));
                }
                if rng.random_bool(0.5) {
                    let lip = rng.random_range(0.02..0.08);
                    m.append(&c(p(-lip, -lip, 1.0), p(1.0 + lip, depth + lip, 1.0 + rng.random_range(0.03..0.1))));
                }
            }
            ShapeFamily::Cylinder => {
                let segments = rng.random_range(5..17);
                let r = 0.5;
                let taper = rng.random_range(0.35..1.3);
                let base = rng.random_range(0.0..0.2);
                if base > 0.03 {
                    m.append(&TriangleMesh::prism(Point3::ZERO, r, r, base, segments));
                    m.append(&TriangleMesh::prism(p(0.0, 0.0, base), r * rng.random_range(0.3..0.8), r * taper, 1.0, segments));
                } else {
                    m.append(&TriangleMesh::prism(Point3::ZERO, r, r * taper, 1.0, segments));
                }
            }
            ShapeFamily::Table => {
                let (w, d, h) = (1.0, rng.random_range(0.45..1.2), rng.random_range(0.4..1.1));
                let top = rng.random_range(0.03..0.15) * h;
                let leg = rng.random_range(0.04..0.14);
                let inset = rng.random_range(0.0..0.15);
                m.append(&c(p(0.0, 0.0, h - top), p(w, d, h)));
                legs(&mut m, w, d, h - top, leg, inset);
                if rng.random_bool(0.4) {
                    let z = rng.random_range(0.1..0.3) * h;
                    m.append(&c(p(inset, inset, z), p(w - inset, d - inset, z + 0.6 * top)));
                }
            }
            ShapeFamily::Chair => {
                let (w, d, h) = (1.0, rng.random_range(0.8..1.3), rng.random_range(1.4..2.2));
                let seat_z = rng.random_range(0.35..0.55) * h;
                let seat_t = rng.random_range(0.04..0.12);
                let leg = rng.random_range(0.05..0.14);
                let back_t = rng.random_range(0.05..0.14);
                let back_in = rng.random_range(0.0..0.2);
                m.append(&c(p(0.0, 0.0, seat_z), p(w, d, seat_z + seat_t)));
                legs(&mut m, w, d, seat_z, leg, 0.0);
                m.append(&c(p(back_in, d - back_t, seat_z + seat_t), p(w - back_in, d, h)));
                if rng.random_bool(0.35) {
                    let arm_z = seat_z + seat_t + rng.random_range(0.15..0.3) * (h - seat_z);
                    for x0 in [0.0, w - 0.08] {
                        m.append(&c(p(x0, 0.1 * d, arm_z), p(x0 + 0.08, d - back_t, arm_z + 0.05)));
                    }
                }
            }
            ShapeFamily::Shelf => {
                let (w, d, h) = (1.0, rng.random_range(0.25..0.7), rng.random_range(0.6..2.2));
                let boards = rng.random_range(2..7);
                let t = rng.random_range(0.02..0.06);
                let side = rng.random_range(0.02..0.08);
                m.append(&c(p(0.0, 0.0, 0.0), p(side, d, h)));
                m.append(&c(p(w - side, 0.0, 0.0), p(w, d, h)));
                m.append(&c(p(side, d - t, 0.0), p(w - side, d, h)));
                for b in 0..boards {
                    let z = (h - t) * b as f64 / (boards - 1) as f64;
                    m.append(&c(p(side, 0.0, z), p(w - side, d - t, z + t)));
                }
            }
        }
        m.with_category(self.label())
    }
}

fn legs(m: &mut TriangleMesh, w: f64, d: f64, top: f64, leg: f64, inset: f64) {
    for (x, y) in [(inset, inset), (w - inset - leg, inset), (inset, d - inset - leg), (w - inset - leg, d - inset - leg)] {
        m.append(&TriangleMesh::cuboid(Point3::new(x, y, 0.0), Point3::new(x + leg, y + leg, top)));
    }
}

/// `count` shapes with ids `0..count`, families assigned round-robin.
pub fn gen_database(families: &[ShapeFamily], count: usize, seed: u64) -> Result<ShapeDatabase> {
    if families.is_empty() || count == 0 {
        return Err(Error::InvalidArgument("need at least one family and one shape".into()));
    }
    let records = (0..count)
        .map(|i| {
            let family = families[i % families.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(seed, i as u64));
            ShapeRecord::new(ShapeId(i as u32), family.label(), &family.mesh(&mut rng), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    ShapeDatabase::new(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraRig {
    pub cameras: usize,
    pub ring_radius: f64,
    /// Camera height above the target's box center.
    pub height: f64,
    pub width: usize,
    pub image_height: usize,
    pub focal: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig { cameras: 14, ring_radius: 2.4, height: 0.9, width: 64, image_height: 48, focal: 56.0, near: 0.05, far: 12.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub gt_shape: ShapeId,
    pub gt_pose: Pose,
    /// The box handed to retrieval; may differ from the ground truth.
    pub proposal: OrientedBox,
    pub rig: CameraRig,
    pub sigma: f64,
    /// Probability that a camera gets an occluder in front of it.
    pub occluder_fraction: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.gt_pose.validate()?;
        self.proposal.validate()?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be non-negative".into()));
        }
        for (name, f) in [("occluder fraction", self.occluder_fraction), ("dropout", self.dropout)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidArgument(alloc::format!("{name} must lie in [0, 1)")));
            }
        }
        if self.rig.cameras == 0 {
            return Err(Error::NoFrames);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub shape: ShapeId,
    pub pose: Pose,
    /// Proposal rotation (degrees) under which the ground truth is a candidate.
    pub angle_deg: f64,
}

/// Bounds for [`perturb_box`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Perturbation {
    /// Radians.
    pub yaw_max: f64,
    pub trans_frac: f64,
    pub scale_frac: f64,
    pub axis_aligned: bool,
}

/// Options for drawing random scene specs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneOptions {
    pub rig: CameraRig,
    pub sigma: f64,
    pub occluder_fraction: f64,
    pub dropout: f64,
    pub pose_angles: Vec<f64>,
    /// Applied to the proposal only; the ground truth keeps the exact box.
    pub perturbation: Option<Perturbation>,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions {
            rig: CameraRig::default(),
            sigma: 0.0,
            occluder_fraction: 0.0,
            dropout: 0.0,
            pose_angles: vec![0.0, 90.0, 180.0, 270.0],
            perturbation: None,
        }
    }
}

/// Random ground truth: shape, box and the proposal rotation that reproduces it.
pub fn random_scene_spec(db: &ShapeDatabase, opts: &SceneOptions, seed: u64) -> Result<(SceneSpec, GroundTruth)> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if opts.pose_angles.is_empty() {
        return Err(Error::InvalidArgument("at least one pose angle is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(seed, 0x5ce0e));
    let ids = db.ids();
    let shape = ids[rng.random_range(0..ids.len())];
    let extents = Point3::new(rng.random_range(0.4..1.1), rng.random_range(0.4..1.1), rng.random_range(0.4..1.2));
    let center = Point3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), extents.z / 2.0);
    let yaw = rng.random_range(-PI..PI);
    let angle_deg = opts.pose_angles[rng.random_range(0..opts.pose_angles.len())];
    let exact = OrientedBox::new(center, extents, yaw)?;
    let pose = exact.rotated_pose(angle_deg);
    let proposal = match opts.perturbation {
        Some(p) => perturb_box(&exact, p.yaw_max, p.trans_frac, p.scale_frac, p.axis_aligned, math::mix_seed(seed, 0xb0c5))?,
        None => exact,
    };
    let spec = SceneSpec {
        gt_shape: shape,
        gt_pose: pose,
        proposal,
        rig: opts.rig,
        sigma: opts.sigma,
        occluder_fraction: opts.occluder_fraction,
        dropout: opts.dropout,
        seed,
    };
    Ok((spec, GroundTruth { shape, pose, angle_deg }))
}

const ROOM_HALF: f64 = 4.0;
const ROOM_HEIGHT: f64 = 3.0;

/// Renders the scene described by `spec`: a room, optional occluders and the
/// ground-truth model, seen by a ring of cameras.
pub fn gen_scene(db: &ShapeDatabase, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let record = db.get(spec.gt_shape)?;
    let rig = &spec.rig;
    let target_center = spec.gt_pose.translation;
    let target_radius = spec.gt_pose.scale.norm() / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(spec.seed, 1));
    let phase = rng.random_range(0.0..2.0 * PI);

    let mut cameras = Vec::with_capacity(rig.cameras);
    for i in 0..rig.cameras {
        let a = phase + 2.0 * PI * i as f64 / rig.cameras as f64;
        let eye = target_center + Point3::new(rig.ring_radius * math::cos(a), rig.ring_radius * math::sin(a), rig.height);
        let cam = Camera::look_at(
            eye,
            target_center,
            Point3::new(0.0, 0.0, 1.0),
            rig.focal,
            rig.focal,
            rig.width,
            rig.image_height,
            rig.near,
            rig.far,
        )?;
        cameras.push(cam);
    }

    let mut static_mesh =
        TriangleMesh::cuboid(Point3::new(-ROOM_HALF, -ROOM_HALF, 0.0), Point3::new(ROOM_HALF, ROOM_HALF, ROOM_HEIGHT));
    for cam in &cameras {
        if !rng.random_bool(spec.occluder_fraction) {
            continue;
        }
        let eye = cam.eye();
        let t = rng.random_range(0.35..0.6);
        let at = eye + (target_center - eye) * t;
        let half = Point3::new(rng.random_range(0.08..0.2), rng.random_range(0.08..0.2), rng.random_range(0.15..0.45));
        if (Point3::new(at.x, at.y, 0.0) - Point3::new(target_center.x, target_center.y, 0.0)).norm()
            < target_radius + half.x.max(half.y) * 1.5
        {
            continue;
        }
        static_mesh.append(&TriangleMesh::cuboid(at - half, at + half));
    }

    let noise = Normal::new(0.0, spec.sigma.max(f64::MIN_POSITIVE)).map_err(|_| Error::InvalidArgument("sigma".into()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(math::mix_seed(spec.seed, 2));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(math::mix_seed(spec.seed, 3));
    let mut points = Vec::new();
    let mut frames = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let (background, _) = rasterize(&static_mesh, &Pose::IDENTITY, &cam);
        let (target, _) = rasterize(&record.mesh, &spec.gt_pose, &cam);
        let (scan, target_mask) = composite_with_winner(&background, &target)?;
        let mut sensor_depth = scan.as_slice().to_vec();
        if spec.sigma > 0.0 {
            for d in sensor_depth.iter_mut().filter(|d| !d.is_nan()) {
                let v = *d as f64 + noise.sample(&mut noise_rng);
                *d = v.clamp(cam.near, cam.far) as f32;
            }
        }
        let sensor = DepthMap::from_raw(cam.width, cam.height, cam.near, cam.far, sensor_depth)?;
        for py in 0..cam.height {
            for px in 0..cam.width {
                let i = py * cam.width + px;
                if !target_mask.get(i) || !sensor.is_valid(i) {
                    continue;
                }
                if spec.dropout > 0.0 && drop_rng.random_bool(spec.dropout) {
                    continue;
                }
                points.push(cam.unproject(px, py, sensor.as_slice()[i] as f64));
            }
        }
        frames.push(Frame { camera: cam, background, scan, sensor, target_mask });
    }
    Ok(Scene {
        target_points: PointCloud::try_new(points)?,
        bbox: spec.proposal,
        frames,
        category_hint: Some(String::from(record.category.as_str())),
    })
}

/// Uniform perturbation of a box: yaw by up to `yaw_max` radians, center by
/// up to `trans_frac` of the extent per axis, extents by up to `scale_frac`.
/// In axis-aligned mode the yaw is dropped entirely.
pub fn perturb_box(
    bbox: &OrientedBox,
    yaw_max: f64,
    trans_frac: f64,
    scale_frac: f64,
    axis_aligned: bool,
    seed: u64,
) -> Result<OrientedBox> {
    bbox.validate()?;
    if yaw_max < 0.0 || trans_frac < 0.0 || !(0.0..1.0).contains(&scale_frac) {
        return Err(Error::InvalidArgument("perturbation magnitudes must be non-negative (scale below 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let e = bbox.extents;
    let center = bbox.center + Point3::new(sym(trans_frac) * e.x, sym(trans_frac) * e.y, sym(trans_frac) * e.z);
    let extents = Point3::new(e.x * (1.0 + sym(scale_frac)), e.y * (1.0 + sym(scale_frac)), e.z * (1.0 + sym(scale_frac)));
    let yaw = if axis_aligned { 0.0 } else { bbox.yaw + sym(yaw_max) };
    OrientedBox::new(center, extents, yaw)
}

/// Smallest yaw difference modulo the symmetry order.
pub fn yaw_error(a: f64, b: f64, symmetry: u32) -> f64 {
    let period = 2.0 * PI / symmetry.max(1) as f64;
    let d = math::abs(math::wrap_angle(a - b));
    let r = d % period;
    r.min(period - r)
}

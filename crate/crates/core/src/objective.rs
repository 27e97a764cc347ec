//! Candidate scoring: depth and silhouette render-and-compare terms, the
//! scan-to-model chamfer, and cheaper stand-in objectives.

use alloc::string::String;
use alloc::vec::Vec;

use crate::database::ShapeRecord;
use crate::error::{Error, Result};
use crate::geometry::{KdIndex, OrientedBox, PointCloud, Pose};
use crate::math::Point3;
use crate::render::{composite_with_winner, rasterize, silhouette_iou, Camera, DepthMap, Mask};
use crate::shapedesc::descriptor;

/// Target points kept for the chamfer terms.
pub const TARGET_POINT_CAP: usize = 2_500;

/// One observation of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub camera: Camera,
    /// Scan depth with the target removed; candidates are composited over it.
    pub background: DepthMap,
    /// Scan depth with the target present.
    pub scan: DepthMap,
    pub sensor: DepthMap,
    pub target_mask: Mask,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let dims = (self.camera.width, self.camera.height);
        for (w, h) in [
            (self.background.width, self.background.height),
            (self.scan.width, self.scan.height),
            (self.sensor.width, self.sensor.height),
            (self.target_mask.width, self.target_mask.height),
        ] {
            if (w, h) != dims {
                return Err(Error::DimensionMismatch { expected: dims, found: (w, h) });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub target_points: PointCloud,
    pub bbox: OrientedBox,
    pub frames: Vec<Frame>,
    pub category_hint: Option<String>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        self.frames.iter().try_for_each(Frame::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveWeights {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub lambda_sil: f64,
    pub lambda_cd: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { lambda_m: 0.6, lambda_s: 1.0, lambda_sil: 0.5, lambda_cd: 2.0 }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_m, self.lambda_s, self.lambda_sil, self.lambda_cd];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("objective weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ObjectiveKind {
    /// Depth + silhouette + scan-to-model chamfer.
    Rac,
    /// Symmetric chamfer between the target cloud and the posed model.
    Cd,
    /// Scan-to-model chamfer only.
    Mscd,
    /// Descriptor distance with the target expressed in the candidate's frame.
    Embed,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [ObjectiveKind::Rac, ObjectiveKind::Cd, ObjectiveKind::Mscd, ObjectiveKind::Embed];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Rac => "rac",
            ObjectiveKind::Cd => "cd",
            ObjectiveKind::Mscd => "mscd",
            ObjectiveKind::Embed => "embed",
        }
    }

    pub fn parse(s: &str) -> Result<ObjectiveKind> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown objective '{s}'")))
    }
}

/// Unweighted render-and-compare components. `depth` already carries the
/// per-map weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacTerms {
    pub depth: f64,
    pub silhouette: f64,
    pub chamfer: f64,
}

impl RacTerms {
    pub fn total(&self, w: &ObjectiveWeights) -> f64 {
        self.depth + w.lambda_sil * self.silhouette + w.lambda_cd * self.chamfer
    }
}

struct RenderTerms {
    depth: f64,
    silhouette: Option<f64>,
}

/// Renders the candidate into every frame once and accumulates both image terms.
fn render_terms(shape: &ShapeRecord, pose: &Pose, scene: &Scene, w: &ObjectiveWeights) -> Result<RenderTerms> {
    if scene.frames.is_empty() {
        return Err(Error::NoFrames);
    }
    pose.validate()?;
    let mut depth_sum = 0.0;
    let mut sil_sum = 0.0;
    let mut sil_frames = 0usize;
    for frame in &scene.frames {
        let (cand, _) = rasterize(&shape.mesh, pose, &frame.camera);
        let (dcad, wins) = composite_with_winner(&frame.background, &cand)?;
        depth_sum += frame_depth_term(&dcad, &frame.scan, &frame.sensor, w)?;
        if !frame.target_mask.is_empty() {
            sil_sum += 1.0 - silhouette_iou(&frame.target_mask, &wins)?;
            sil_frames += 1;
        }
    }
    Ok(RenderTerms {
        depth: depth_sum / scene.frames.len() as f64,
        silhouette: (sil_frames > 0).then(|| sil_sum / sil_frames as f64),
    })
}

/// Mean absolute depth error against each reference over its valid pixels.
/// Rendered holes count as the far plane.
fn frame_depth_term(dcad: &DepthMap, scan: &DepthMap, sensor: &DepthMap, w: &ObjectiveWeights) -> Result<f64> {
    let mut term = 0.0;
    for (reference, lambda) in [(scan, w.lambda_m), (sensor, w.lambda_s)] {
        if (reference.width, reference.height) != (dcad.width, dcad.height) {
            return Err(Error::DimensionMismatch {
                expected: (dcad.width, dcad.height),
                found: (reference.width, reference.height),
            });
        }
        let far = dcad.far;
        let (mut sum, mut valid) = (0.0, 0usize);
        for (&c, &r) in dcad.as_slice().iter().zip(reference.as_slice()) {
            if r.is_nan() {
                continue;
            }
            let c = if c.is_nan() { far } else { c as f64 };
            sum += crate::math::abs(c - r as f64);
            valid += 1;
        }
        if valid > 0 {
            term += lambda / valid as f64 * sum;
        }
    }
    Ok(term)
}

pub fn loss_depth(shape: &ShapeRecord, pose: &Pose, scene: &Scene, w: &ObjectiveWeights) -> Result<f64> {
    Ok(render_terms(shape, pose, scene, w)?.depth)
}

/// Mean `1 - IoU` over frames with a non-empty target silhouette. The
/// candidate silhouette only counts pixels where it wins the composite.
pub fn loss_silhouette(shape: &ShapeRecord, pose: &Pose, scene: &Scene) -> Result<f64> {
    render_terms(shape, pose, scene, &ObjectiveWeights::default())?.silhouette.ok_or(Error::NoTargetSilhouette)
}

/// Mean distance from the (capped) target cloud to the posed model surface.
pub fn loss_cd(shape: &ShapeRecord, pose: &Pose, scene: &Scene) -> Result<f64> {
    scan_to_model(&scene.target_points.strided(TARGET_POINT_CAP), shape, pose)
}

pub fn loss_rac(shape: &ShapeRecord, pose: &Pose, scene: &Scene, w: &ObjectiveWeights) -> Result<f64> {
    Ok(rac_terms(shape, pose, scene, &scene.target_points.strided(TARGET_POINT_CAP), w)?.total(w))
}

/// Descriptor distance between the model and the target cloud mapped into
/// the candidate's canonical frame.
pub fn loss_embedding(shape: &ShapeRecord, pose: &Pose, scene: &Scene) -> Result<f64> {
    embedding_distance(&scene.target_points, shape, pose)
}

fn rac_terms(shape: &ShapeRecord, pose: &Pose, scene: &Scene, target: &PointCloud, w: &ObjectiveWeights) -> Result<RacTerms> {
    let r = render_terms(shape, pose, scene, w)?;
    Ok(RacTerms {
        depth: r.depth,
        silhouette: r.silhouette.ok_or(Error::NoTargetSilhouette)?,
        chamfer: scan_to_model(target, shape, pose)?,
    })
}

/// Queries the model's canonical sample index under the pose-induced metric,
/// so no posed copy of the samples is built.
pub(crate) fn scan_to_model(target: &PointCloud, shape: &ShapeRecord, pose: &Pose) -> Result<f64> {
    if target.is_empty() || shape.samples().is_empty() {
        return Err(Error::EmptyCloud);
    }
    pose.validate()?;
    let xf = pose.transform();
    let index = shape.index();
    let mut sum = 0.0;
    let mut hint = None;
    for &p in target.iter() {
        let (i, d) = index.nearest_weighted_hinted(xf.apply_inverse(p), xf.scale, hint).ok_or(Error::EmptyCloud)?;
        hint = Some(i);
        sum += d;
    }
    Ok(sum / target.len() as f64)
}

/// Model samples are i.i.d., so a prefix of them is an unbiased subset.
fn model_to_scan(target_index: &KdIndex, shape: &ShapeRecord, pose: &Pose) -> Result<f64> {
    let xf = pose.transform();
    let samples = &shape.samples().points()[..shape.samples().len().min(TARGET_POINT_CAP)];
    let mut sum = 0.0;
    let mut hint = None;
    for &c in samples {
        let (i, d) = target_index.nearest_weighted_hinted(xf.apply(c), Point3::splat(1.0), hint).ok_or(Error::EmptyCloud)?;
        hint = Some(i);
        sum += d;
    }
    Ok(sum / samples.len() as f64)
}

fn embedding_distance(target: &PointCloud, shape: &ShapeRecord, pose: &Pose) -> Result<f64> {
    pose.validate()?;
    let xf = pose.transform();
    let canonical: PointCloud = target.iter().map(|&p| xf.apply_inverse(p)).collect();
    Ok(descriptor(&canonical)?.distance(shape.descriptor()))
}

/// A scene with the per-query caches every evaluation shares: the capped
/// target cloud and, for the symmetric chamfer, its KD index.
#[derive(Debug, Clone)]
pub struct PreparedScene<'s> {
    scene: &'s Scene,
    kind: ObjectiveKind,
    weights: ObjectiveWeights,
    target: PointCloud,
    target_index: Option<KdIndex>,
}

impl<'s> PreparedScene<'s> {
    pub fn new(scene: &'s Scene, kind: ObjectiveKind, weights: ObjectiveWeights) -> Result<PreparedScene<'s>> {
        weights.validate()?;
        scene.validate()?;
        let target = scene.target_points.strided(TARGET_POINT_CAP);
        if target.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if kind == ObjectiveKind::Rac {
            if scene.frames.is_empty() {
                return Err(Error::NoFrames);
            }
            if scene.frames.iter().all(|f| f.target_mask.is_empty()) {
                return Err(Error::NoTargetSilhouette);
            }
        }
        let target_index = (kind == ObjectiveKind::Cd).then(|| KdIndex::build(&target));
        Ok(PreparedScene { scene, kind, weights, target, target_index })
    }

    pub fn scene(&self) -> &'s Scene {
        self.scene
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }

    /// The capped target cloud used by the chamfer terms.
    pub fn target(&self) -> &PointCloud {
        &self.target
    }

    pub fn loss(&self, shape: &ShapeRecord, pose: &Pose) -> Result<f64> {
        match self.kind {
            ObjectiveKind::Rac => Ok(self.rac_terms(shape, pose)?.total(&self.weights)),
            ObjectiveKind::Mscd => scan_to_model(&self.target, shape, pose),
            ObjectiveKind::Cd => {
                let index = self.target_index.as_ref().ok_or(Error::EmptyCloud)?;
                Ok(scan_to_model(&self.target, shape, pose)? + model_to_scan(index, shape, pose)?)
            }
            ObjectiveKind::Embed => embedding_distance(&self.scene.target_points, shape, pose),
        }
    }

    pub fn rac_terms(&self, shape: &ShapeRecord, pose: &Pose) -> Result<RacTerms> {
        rac_terms(shape, pose, self.scene, &self.target, &self.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::ShapeId;
    use crate::geometry::{apply_pose, single_direction_chamfer, TriangleMesh};
    use crate::math::{Mat3, Point3};
    use alloc::vec;

    fn cube_record() -> ShapeRecord {
        let m = TriangleMesh::cuboid(Point3::splat(-0.5), Point3::splat(0.5));
        ShapeRecord::new(ShapeId(0), "box", &m, 1).unwrap()
    }

    fn one_pixel_scene(cand_depth: f32, scan: f32, sensor: f32) -> (Scene, DepthMap) {
        let cam = Camera::new(1.0, 1.0, 0.5, 0.5, 1, 1, Mat3::IDENTITY, Point3::ZERO, 0.1, 10.0).unwrap();
        let mk = |d: f32| DepthMap::from_raw(1, 1, 0.1, 10.0, vec![d]).unwrap();
        let frame = Frame {
            camera: cam,
            background: DepthMap::invalid(1, 1, 0.1, 10.0),
            scan: mk(scan),
            sensor: mk(sensor),
            target_mask: Mask::from_bits(1, 1, vec![true]).unwrap(),
        };
        let scene = Scene {
            target_points: PointCloud::new(vec![Point3::ZERO]),
            bbox: OrientedBox::new(Point3::ZERO, Point3::splat(1.0), 0.0).unwrap(),
            frames: vec![frame],
            category_hint: None,
        };
        (scene, mk(cand_depth))
    }

    #[test]
    fn one_pixel_depth_term_by_hand() {
        // |diff| = 0.5 against both references: 0.6 * 0.5 + 1.0 * 0.5
        let (scene, cand) = one_pixel_scene(2.0, 2.5, 1.5);
        let f = &scene.frames[0];
        let t = frame_depth_term(&cand, &f.scan, &f.sensor, &ObjectiveWeights::default()).unwrap();
        assert!((t - 0.8).abs() < 1e-12);
        let w2 = ObjectiveWeights { lambda_m: 1.2, ..Default::default() };
        let t2 = frame_depth_term(&cand, &f.scan, &f.sensor, &w2).unwrap();
        assert!((t2 - (1.2 * 0.5 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn identical_render_has_zero_depth_term() {
        let (scene, cand) = one_pixel_scene(2.0, 2.0, 2.0);
        let f = &scene.frames[0];
        assert_eq!(frame_depth_term(&cand, &f.scan, &f.sensor, &ObjectiveWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn holes_count_as_far_and_empty_references_contribute_nothing() {
        let (scene, _) = one_pixel_scene(0.0, 2.0, 2.0);
        let f = &scene.frames[0];
        let hole = DepthMap::invalid(1, 1, 0.1, 10.0);
        let t = frame_depth_term(&hole, &f.scan, &f.sensor, &ObjectiveWeights::default()).unwrap();
        assert!((t - 1.6 * 8.0).abs() < 1e-12);
        let empty = DepthMap::invalid(1, 1, 0.1, 10.0);
        assert_eq!(frame_depth_term(&hole, &empty, &empty, &ObjectiveWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn weighted_total_by_hand() {
        let t = RacTerms { depth: 0.1, silhouette: 0.2, chamfer: 0.05 };
        assert!((t.total(&ObjectiveWeights::default()) - 0.3).abs() < 1e-15);
        let worse = RacTerms { silhouette: 0.3, ..t };
        assert!(worse.total(&ObjectiveWeights::default()) > t.total(&ObjectiveWeights::default()));
        let heavier = ObjectiveWeights { lambda_cd: 3.0, ..Default::default() };
        assert!(t.total(&heavier) > t.total(&ObjectiveWeights::default()));
    }

    fn cube_scene(record: &ShapeRecord, gt: &Pose) -> Scene {
        let mut frames = Vec::new();
        for k in 0..4 {
            let a = k as f64 * core::f64::consts::FRAC_PI_2 + 0.3;
            let eye = Point3::new(3.0 * crate::math::cos(a), 3.0 * crate::math::sin(a), 1.5);
            let cam = Camera::look_at(eye, gt.translation, Point3::new(0.0, 0.0, 1.0), 40.0, 40.0, 48, 36, 0.1, 20.0).unwrap();
            let bg = DepthMap::invalid(48, 36, 0.1, 20.0);
            let (d, _) = rasterize(&record.mesh, gt, &cam);
            let (scan, mask) = composite_with_winner(&bg, &d).unwrap();
            frames.push(Frame { camera: cam, background: bg, scan: scan.clone(), sensor: scan, target_mask: mask });
        }
        Scene {
            target_points: apply_pose(gt, record.samples()),
            bbox: OrientedBox::new(gt.translation, gt.scale, gt.rotation.z).unwrap(),
            frames,
            category_hint: None,
        }
    }

    #[test]
    fn ground_truth_scores_zero_and_shift_is_penalized() {
        let r = cube_record();
        let gt = Pose {
            scale: Point3::new(0.8, 0.6, 0.5),
            rotation: Point3::new(0.0, 0.0, 0.4),
            translation: Point3::new(0.1, 0.0, 0.25),
        };
        let scene = cube_scene(&r, &gt);
        let w = ObjectiveWeights::default();
        assert_eq!(loss_depth(&r, &gt, &scene, &w).unwrap(), 0.0);
        assert_eq!(loss_silhouette(&r, &gt, &scene).unwrap(), 0.0);
        assert!(loss_cd(&r, &gt, &scene).unwrap() < 1e-9);
        let shifted = Pose { translation: gt.translation + Point3::new(0.2, 0.0, 0.0), ..gt };
        assert!(loss_rac(&r, &shifted, &scene, &w).unwrap() > loss_rac(&r, &gt, &scene, &w).unwrap() + 0.1);
        assert!(loss_embedding(&r, &gt, &scene).unwrap() < 1e-3);
    }

    #[test]
    fn silhouette_disjoint_and_missing() {
        let r = cube_record();
        let gt = Pose { scale: Point3::splat(0.5), rotation: Point3::ZERO, translation: Point3::ZERO };
        let mut scene = cube_scene(&r, &gt);
        let far_away = Pose { translation: Point3::new(0.0, 0.0, 50.0), ..gt };
        assert_eq!(loss_silhouette(&r, &far_away, &scene).unwrap(), 1.0);
        for f in &mut scene.frames {
            f.target_mask = Mask::empty(48, 36);
        }
        assert_eq!(loss_silhouette(&r, &gt, &scene), Err(Error::NoTargetSilhouette));
        assert_eq!(
            PreparedScene::new(&scene, ObjectiveKind::Rac, ObjectiveWeights::default()).unwrap_err(),
            Error::NoTargetSilhouette
        );
        scene.frames.clear();
        assert_eq!(loss_depth(&r, &gt, &scene, &ObjectiveWeights::default()), Err(Error::NoFrames));
    }

    #[test]
    fn chamfer_terms_match_brute_force() {
        let r = cube_record();
        let gt = Pose {
            scale: Point3::new(0.9, 0.5, 0.7),
            rotation: Point3::new(0.1, -0.2, 0.7),
            translation: Point3::new(1.0, 2.0, 0.3),
        };
        let mut scene = cube_scene(&r, &gt);
        scene.target_points = scene.target_points.strided(300);
        let shifted = Pose { translation: gt.translation + Point3::new(10.0, 0.0, 0.0), ..gt };
        let posed = apply_pose(&shifted, r.samples());
        let brute = |p: Point3| posed.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
        let oracle = scene.target_points.iter().map(|&p| brute(p)).sum::<f64>() / scene.target_points.len() as f64;
        let got = loss_cd(&r, &shifted, &scene).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        assert!((got - 10.0).abs() < 0.1 + 0.9, "{got}");
        let prepared = PreparedScene::new(&scene, ObjectiveKind::Cd, ObjectiveWeights::default()).unwrap();
        let sym = prepared.loss(&r, &shifted).unwrap();
        let prefix: PointCloud = posed.iter().take(TARGET_POINT_CAP).copied().collect();
        let expect = single_direction_chamfer(&scene.target_points, &posed).unwrap()
            + single_direction_chamfer(&prefix, &scene.target_points).unwrap();
        assert!((sym - expect).abs() <= 1e-9 * expect);
        let mscd = PreparedScene::new(&scene, ObjectiveKind::Mscd, ObjectiveWeights::default()).unwrap();
        let one = single_direction_chamfer(&scene.target_points, &posed).unwrap();
        assert!((mscd.loss(&r, &shifted).unwrap() - one).abs() <= 1e-9 * one);
    }

    #[test]
    fn unit_scale_translation_by_ten() {
        // target drawn from the model's own surface: the offset dominates
        let r = cube_record();
        let scene = Scene {
            target_points: r.samples().strided(2000),
            bbox: OrientedBox::new(Point3::ZERO, Point3::splat(1.0), 0.0).unwrap(),
            frames: Vec::new(),
            category_hint: None,
        };
        assert!(loss_cd(&r, &Pose::IDENTITY, &scene).unwrap() < 1e-12);
        let moved = Pose { translation: Point3::new(10.0, 0.0, 0.0), ..Pose::IDENTITY };
        let d = loss_cd(&r, &moved, &scene).unwrap();
        assert!((d - 10.0).abs() < 0.1 + 0.5, "{d}");
    }

    #[test]
    fn embedding_is_symmetric_and_orders_like_brute_force() {
        let shapes: Vec<ShapeRecord> = [(1.0, 1.0, 1.0), (4.0, 1.0, 1.0), (1.0, 0.2, 3.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| {
                let m = TriangleMesh::prism(Point3::ZERO, 0.5 * x, 0.2 * y, z, 3 + 2 * i);
                ShapeRecord::new(ShapeId(i as u32), "p", &m, 3).unwrap()
            })
            .collect();
        let scene = Scene {
            target_points: shapes[1].samples().clone(),
            bbox: OrientedBox::new(Point3::ZERO, Point3::splat(1.0), 0.0).unwrap(),
            frames: Vec::new(),
            category_hint: None,
        };
        let losses: Vec<f64> = shapes.iter().map(|s| loss_embedding(s, &Pose::IDENTITY, &scene).unwrap()).collect();
        let target_desc = descriptor(&scene.target_points).unwrap();
        for (s, l) in shapes.iter().zip(&losses) {
            let brute: f64 = target_desc.as_slice().iter().zip(s.descriptor().as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((l - crate::math::sqrt(brute)).abs() < 1e-12);
            assert_eq!(target_desc.distance(s.descriptor()), s.descriptor().distance(&target_desc));
        }
        assert_eq!(losses[1], 0.0);
    }

    #[test]
    fn evaluations_are_bit_identical() {
        let r = cube_record();
        let gt = Pose { scale: Point3::new(0.8, 0.6, 0.5), rotation: Point3::new(0.0, 0.0, 0.4), translation: Point3::ZERO };
        let scene = cube_scene(&r, &gt);
        let p = PreparedScene::new(&scene, ObjectiveKind::Rac, ObjectiveWeights::default()).unwrap();
        let off = gt.rotated_about_z(0.2);
        assert_eq!(p.loss(&r, &off).unwrap().to_bits(), p.loss(&r, &off).unwrap().to_bits());
    }

    #[test]
    fn objective_names_roundtrip() {
        for k in ObjectiveKind::ALL {
            assert_eq!(ObjectiveKind::parse(k.name()).unwrap(), k);
        }
        assert!(ObjectiveKind::parse("l2").is_err());
    }
}

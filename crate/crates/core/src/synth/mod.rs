//! Analytic synthetic scenes: the ground-truth oracle for the geometric
//! pipeline.
//!
//! Scenes are piecewise planar and rectilinear: infinite or image-bounded
//! planes plus axis-aligned boxes, in world coordinates. Rendering casts one
//! ray per pixel and keeps the nearest intersection, so ground-truth depth
//! follows closed-form plane and slab formulas rather than any mesh code
//! path. Surfaces carry a seeded band-limited value-noise texture evaluated
//! at the world-space hit point, which gives photometric losses real image
//! gradients and keeps the texture consistent across camera poses.
//!
//! [`sample_features`] draws point features anywhere on the surfaces and
//! line features along box silhouette edges, with exact analytic depths
//! plus optional Gaussian noise. [`ablation_run`] compares the three
//! completion strategies (points only, points plus lines, full mesh
//! interpolation) against the rendered ground truth.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::cdt::{prepare_sites, triangulate, DEFAULT_SNAP_TOLERANCE};
use crate::features::{FeatureSet, LineFeature, PointFeature};
use crate::image::{DepthMap, ImageBuffer};
use crate::meshdepth::{interpolate_mesh_depth, sparse_raster, InterpolationMode};
use crate::metrics::{evaluate, DeltaThresholds, EvalReport};
use crate::{Error, Result};

/// Depths a scene is allowed to produce, in meters.
pub const DEPTH_RANGE: (f64, f64) = (0.3, 20.0);

/// Camera description: intrinsics plus the camera-from-world pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

/// An infinite world plane `normal . X = offset`, optionally restricted to
/// a pixel-space rectangle `[u0, v0, u1, v1]` of the rendered view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_bounds: Option<[f64; 4]>,
    /// Untextured surfaces render flat and attract no random point
    /// features, the way a blank wall yields no interest points.
    #[serde(default = "default_true")]
    pub textured: bool,
}

/// An axis-aligned box given by center and half-extents, world coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub extents: [f64; 3],
    /// See [`PlaneSpec::textured`].
    #[serde(default = "default_true")]
    pub textured: bool,
}

fn default_true() -> bool {
    true
}

/// Procedural texture selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum TextureSpec {
    /// Band-limited value noise over world position: `octaves` lattice
    /// layers starting at spatial frequency `scale` (cycles per meter),
    /// scaled into the surface shade by `contrast`.
    ValueNoise { scale: f64, octaves: u32, contrast: f64 },
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec::ValueNoise { scale: 3.0, octaves: 3, contrast: 0.5 }
    }
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: CameraSpec,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub texture: TextureSpec,
    pub seed: u64,
    /// Pin the first four point features to the image corners so the
    /// feature hull covers the whole view.
    #[serde(default)]
    pub corner_features: bool,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() && self.boxes.is_empty() {
            return Err(Error::InvalidInput("scene has no surfaces".into()));
        }
        for (i, p) in self.planes.iter().enumerate() {
            let n = Vector3::from(p.normal);
            if !(n.norm() > 0.0 && n.iter().all(|v| v.is_finite()) && p.offset.is_finite()) {
                return Err(Error::InvalidInput(format!("plane {i} is degenerate")));
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.extents.iter().all(|e| e.is_finite() && *e > 0.0)
                && b.center.iter().all(|c| c.is_finite()))
            {
                return Err(Error::InvalidInput(format!("box {i} is degenerate")));
            }
        }
        let TextureSpec::ValueNoise { scale, octaves, contrast } = &self.texture;
        if !(*scale > 0.0 && *octaves >= 1 && (0.0..=1.0).contains(contrast)) {
            return Err(Error::InvalidInput("texture parameters out of range".into()));
        }
        Ok(())
    }
}

/// A single fronto-parallel wall at 2 m, every pixel depth exactly 2.0.
pub fn fronto_parallel_scene(width: usize, height: usize, seed: u64) -> SceneSpec {
    SceneSpec {
        camera: CameraSpec {
            intrinsics: default_intrinsics(width, height),
            pose: Pose::identity(),
        },
        planes: vec![PlaneSpec { normal: [0.0, 0.0, 1.0], offset: 2.0, image_bounds: None, textured: true }],
        boxes: vec![],
        texture: TextureSpec::default(),
        seed,
        corner_features: true,
    }
}

/// A box floating in front of a back wall: depth discontinuities along the
/// box silhouette, the workhorse scene for ablations and training.
pub fn box_wall_scene(width: usize, height: usize, seed: u64) -> SceneSpec {
    SceneSpec {
        camera: CameraSpec {
            intrinsics: default_intrinsics(width, height),
            pose: Pose::identity(),
        },
        planes: vec![PlaneSpec { normal: [0.0, 0.0, 1.0], offset: 3.0, image_bounds: None, textured: true }],
        boxes: vec![BoxSpec { center: [0.0, 0.15, 2.2], extents: [0.45, 0.4, 0.35], textured: false }],
        texture: TextureSpec::default(),
        seed,
        corner_features: true,
    }
}

fn default_intrinsics(width: usize, height: usize) -> Intrinsics {
    let f = 0.75 * width as f64;
    Intrinsics::new(
        f,
        f,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
        width,
        height,
    )
    .expect("preset intrinsics are valid")
}

struct Caster {
    origin: Vector3<f64>,
    rot_t: nalgebra::Matrix3<f64>,
}

struct Hit {
    depth: f64,
    surface: usize,
    point: Vector3<f64>,
}

impl Caster {
    fn new(camera: &CameraSpec) -> Caster {
        let rot_t = camera.pose.rotation().transpose();
        let origin = -(rot_t * camera.pose.translation());
        Caster { origin, rot_t }
    }

    /// Casts through a (possibly fractional) pixel; the returned depth is
    /// the camera-space z of the nearest hit.
    fn cast(&self, spec: &SceneSpec, u: f64, v: f64) -> Option<Hit> {
        let dir = self.rot_t * spec.camera.intrinsics.ray([u, v]);
        let mut best: Option<Hit> = None;
        let mut consider = |s: f64, surface: usize| {
            if s > 0.0 && best.as_ref().map_or(true, |b| s < b.depth) {
                best = Some(Hit { depth: s, surface, point: self.origin + s * dir });
            }
        };
        for (i, p) in spec.planes.iter().enumerate() {
            if let Some(b) = p.image_bounds {
                if u < b[0] || v < b[1] || u > b[2] || v > b[3] {
                    continue;
                }
            }
            let n = Vector3::from(p.normal);
            let denom = n.dot(&dir);
            if denom.abs() < 1e-15 {
                continue;
            }
            consider((p.offset - n.dot(&self.origin)) / denom, i);
        }
        for (i, b) in spec.boxes.iter().enumerate() {
            if let Some(s) = slab_entry(&self.origin, &dir, b) {
                consider(s, spec.planes.len() + i);
            }
        }
        best
    }
}

/// Entry distance of a ray into an axis-aligned box, if it hits from
/// outside.
fn slab_entry(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &BoxSpec) -> Option<f64> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for a in 0..3 {
        let lo = b.center[a] - b.extents[a];
        let hi = b.center[a] + b.extents[a];
        if dir[a] == 0.0 {
            if origin[a] < lo || origin[a] > hi {
                return None;
            }
            continue;
        }
        let t1 = (lo - origin[a]) / dir[a];
        let t2 = (hi - origin[a]) / dir[a];
        tmin = tmin.max(t1.min(t2));
        tmax = tmax.min(t1.max(t2));
    }
    if tmax >= tmin && tmin > 0.0 {
        Some(tmin)
    } else {
        None
    }
}

// SplitMix64-style lattice hash producing a uniform value in [0, 1).
fn hash3(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, p: Vector3<f64>) -> f64 {
    let base = p.map(|v| v.floor());
    let frac = p - base;
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let f = frac.map(fade);
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - f.z), (1, f.z)] {
        for (dy, wy) in [(0, 1.0 - f.y), (1, f.y)] {
            for (dx, wx) in [(0, 1.0 - f.x), (1, f.x)] {
                acc += wx * wy * wz * hash3(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

fn fbm(seed: u64, p: Vector3<f64>, octaves: u32) -> f64 {
    let mut acc = 0.0;
    let mut amp = 1.0;
    let mut norm = 0.0;
    let mut freq = 1.0;
    for o in 0..octaves {
        acc += amp * value_noise(seed.wrapping_add(o as u64), p * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    acc / norm
}

fn surface_textured(spec: &SceneSpec, surface: usize) -> bool {
    if surface < spec.planes.len() {
        spec.planes[surface].textured
    } else {
        spec.boxes[surface - spec.planes.len()].textured
    }
}

fn shade(spec: &SceneSpec, surface: usize, point: Vector3<f64>, channel: usize) -> f64 {
    let TextureSpec::ValueNoise { scale, octaves, contrast } = &spec.texture;
    let base = 0.35 + 0.4 * hash3(spec.seed ^ 0xBA5E, surface as i64, 17, 3);
    if !surface_textured(spec, surface) {
        return base;
    }
    let tex = fbm(
        spec.seed ^ ((channel as u64) << 32) ^ surface as u64,
        point * *scale,
        *octaves,
    );
    (base + contrast * (tex - 0.5)).clamp(0.0, 1.0)
}

/// Renders the scene: a texture image and the exact ground-truth depth.
///
/// Errors if any pixel's ray misses every surface or a depth leaves the
/// allowed [0.3, 20] m range; both are scene-specification mistakes.
pub fn render(spec: &SceneSpec) -> Result<(ImageBuffer, DepthMap)> {
    spec.validate()?;
    let k = &spec.camera.intrinsics;
    let (w, h) = (k.width(), k.height());
    let caster = Caster::new(&spec.camera);
    let mut rgb = vec![0.0; w * h * 3];
    let mut depth = DepthMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let hit = caster.cast(spec, x as f64, y as f64).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "scene invariant violated: ray through pixel ({x},{y}) misses every surface"
                ))
            })?;
            if hit.depth < DEPTH_RANGE.0 || hit.depth > DEPTH_RANGE.1 {
                return Err(Error::InvalidInput(format!(
                    "scene invariant violated: depth {} at pixel ({x},{y}) outside {:?}",
                    hit.depth, DEPTH_RANGE
                )));
            }
            for c in 0..3 {
                rgb[(y * w + x) * 3 + c] = shade(spec, hit.surface, hit.point, c);
            }
            depth.set(x, y, hit.depth);
        }
    }
    Ok((ImageBuffer::new(w, h, 3, rgb)?, depth))
}

/// A world-space box edge lying between a front-facing and a back-facing
/// face, i.e. a depth discontinuity in the image.
fn silhouette_edges(spec: &SceneSpec, caster: &Caster) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let mut edges = Vec::new();
    for b in &spec.boxes {
        let c = Vector3::from(b.center);
        let e = Vector3::from(b.extents);
        // Is the face with outward normal sign*axis front-facing?
        let front = |axis: usize, sign: f64| -> bool {
            let mut center = c;
            center[axis] += sign * e[axis];
            let mut normal = Vector3::zeros();
            normal[axis] = sign;
            normal.dot(&(center - caster.origin)) < 0.0
        };
        for axis in 0..3 {
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            for s1 in [-1.0, 1.0] {
                for s2 in [-1.0, 1.0] {
                    // Edge parallel to `axis`, adjacent to faces (a1, s1)
                    // and (a2, s2).
                    if front(a1, s1) != front(a2, s2) {
                        let mut lo = c;
                        let mut hi = c;
                        lo[axis] -= e[axis];
                        hi[axis] += e[axis];
                        for (p, _) in [(&mut lo, 0), (&mut hi, 1)] {
                            p[a1] = c[a1] + s1 * e[a1];
                            p[a2] = c[a2] + s2 * e[a2];
                        }
                        edges.push((lo, hi));
                    }
                }
            }
        }
    }
    edges
}

/// Projects a world point into the camera; pixel coordinates plus depth.
fn project_world(spec: &SceneSpec, p: Vector3<f64>) -> Result<([f64; 2], f64)> {
    let cam = spec.camera.pose.transform(p);
    spec.camera.intrinsics.project(cam)
}

/// True when nothing sits in front of the given depth along the pixel ray.
fn visible(spec: &SceneSpec, caster: &Caster, uv: [f64; 2], depth: f64) -> bool {
    match caster.cast(spec, uv[0], uv[1]) {
        Some(hit) => hit.depth >= depth - 1e-6,
        None => false,
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Samples a sparse feature set from the scene: `m_points` surface points
/// with exact ray-cast depths and `n_lines` sub-segments of box silhouette
/// edges with exact endpoint depths, all perturbed by Gaussian depth noise
/// of the given sigma. Deterministic under the scene seed.
pub fn sample_features(
    spec: &SceneSpec,
    m_points: usize,
    n_lines: usize,
    noise_sigma: f64,
) -> Result<FeatureSet> {
    spec.validate()?;
    if m_points + n_lines < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 features, requested {m_points} points + {n_lines} lines"
        )));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid noise sigma {noise_sigma}")));
    }
    let caster = Caster::new(&spec.camera);
    let k = &spec.camera.intrinsics;
    let (w, h) = (k.width() as f64 - 1.0, k.height() as f64 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = |z: f64, rng: &mut ChaCha8Rng| -> f64 {
        if noise_sigma > 0.0 {
            (z + noise_sigma * gaussian(rng)).max(0.05)
        } else {
            z
        }
    };

    let mut points = Vec::with_capacity(m_points);
    let mut fixed = Vec::new();
    if spec.corner_features && m_points >= 4 {
        fixed.extend([[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]]);
    }
    for i in 0..m_points {
        let (u, v, depth) = if i < fixed.len() {
            // Hull scaffolding: corner pins keep their depth even on an
            // untextured surface.
            let [u, v] = fixed[i];
            let hit = caster.cast(spec, u, v).ok_or_else(|| {
                Error::InvalidInput("corner ray misses the scene".into())
            })?;
            (u, v, hit.depth)
        } else {
            // Points come from textured regions only; rejection-sample
            // until one lands there.
            let mut found = None;
            for _attempt in 0..500 {
                let u = rng.gen_range(0.0..w);
                let v = rng.gen_range(0.0..h);
                let hit = caster.cast(spec, u, v).ok_or_else(|| {
                    Error::InvalidInput(format!("ray through ({u}, {v}) misses the scene"))
                })?;
                if surface_textured(spec, hit.surface) {
                    found = Some((u, v, hit.depth));
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::InvalidInput("no textured surface visible to sample points from".into())
            })?
        };
        points.push(PointFeature::new(u, v, noisy(depth, &mut rng))?);
    }

    let mut lines = Vec::with_capacity(n_lines);
    if n_lines > 0 {
        let edges = silhouette_edges(spec, &caster);
        if edges.is_empty() {
            return Err(Error::InvalidInput(
                "scene has no silhouette edges to sample lines from".into(),
            ));
        }
        for _ in 0..n_lines {
            let mut placed = false;
            for _attempt in 0..200 {
                let (a, b) = edges[rng.gen_range(0..edges.len())];
                let t0: f64 = rng.gen_range(0.0..0.55);
                let span: f64 = rng.gen_range(0.25..0.45);
                let t1 = (t0 + span).min(1.0);
                let p0 = a + t0 * (b - a);
                let p1 = a + t1 * (b - a);
                let Ok((uv0, z0)) = project_world(spec, p0) else { continue };
                let Ok((uv1, z1)) = project_world(spec, p1) else { continue };
                if !(k.contains(uv0) && k.contains(uv1)) {
                    continue;
                }
                let mid = [(uv0[0] + uv1[0]) / 2.0, (uv0[1] + uv1[1]) / 2.0];
                let zmid = (z0 + z1) / 2.0;
                if !(visible(spec, &caster, uv0, z0)
                    && visible(spec, &caster, uv1, z1)
                    && visible(spec, &caster, mid, zmid))
                {
                    continue;
                }
                lines.push(LineFeature::new(
                    uv0,
                    uv1,
                    noisy(z0, &mut rng),
                    noisy(z1, &mut rng),
                )?);
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::InvalidInput(
                    "could not place an unoccluded line feature on any silhouette edge".into(),
                ));
            }
        }
    }
    Ok(FeatureSet::new(points, lines))
}

/// Evaluation of the three completion strategies against ground truth.
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    /// Points only, rasterized and hole-filled by nearest valid depth.
    pub points_only: EvalReport,
    /// Points plus lines, same rasterize-and-fill completion.
    pub points_lines: EvalReport,
    /// Points plus lines with full mesh triangulation and planar
    /// interpolation, filled outside the hull.
    pub full_mesh: EvalReport,
}

/// Runs the three-way feature ablation on one scene, noise-free.
///
/// One feature set is sampled under the budget (a line counts as one
/// feature; 40 out of every 150 budget units go to lines when the scene
/// has silhouette edges, none otherwise). The splits then ablate how much
/// of that set each completion strategy uses: points only, points plus
/// lines, and points plus lines through the full mesh.
pub fn ablation_run(spec: &SceneSpec, budget: usize) -> Result<AblationOutcome> {
    let (_, gt) = render(spec)?;
    let k = &spec.camera.intrinsics;
    let (w, h) = (k.width(), k.height());
    let caster = Caster::new(&spec.camera);
    let n_lines = if silhouette_edges(spec, &caster).is_empty() {
        0
    } else {
        (budget * 4) / 15
    };
    let thresholds = DeltaThresholds::default();

    let complete_raster = |features: &FeatureSet| -> Result<DepthMap> {
        sparse_raster(features, w, h)?.fill_nearest()
    };

    let features = sample_features(spec, budget - n_lines, n_lines, 0.0)?;
    let points_subset = FeatureSet::new(features.points.clone(), Vec::new());

    let p_only = complete_raster(&points_subset)?;
    let p_l = complete_raster(&features)?;

    let prepared = prepare_sites(&features, DEFAULT_SNAP_TOLERANCE)?;
    let mesh = triangulate(&prepared)?;
    let rough = interpolate_mesh_depth(&mesh, k, InterpolationMode::Planar3d)?;
    let p_l_m = rough.depth.fill_nearest()?;

    Ok(AblationOutcome {
        points_only: evaluate(&p_only, &gt, &thresholds)?,
        points_lines: evaluate(&p_l, &gt, &thresholds)?,
        full_mesh: evaluate(&p_l_m, &gt, &thresholds)?,
    })
}

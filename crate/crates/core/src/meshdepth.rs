//! Dense depth from a triangulated feature mesh, plus direct rasterization
//! of sparse features.
//!
//! [`interpolate_mesh_depth`] scans each facet's pixel bounding box and
//! assigns every covered pixel center a depth, producing a rough depth map
//! and its validity mask. Two interpolation rules are supported:
//!
//! * [`InterpolationMode::Planar3d`]: intersect the viewing ray with the 3D
//!   plane through the facet's back-projected vertices. For a facet lying on
//!   a physical plane this reproduces the true surface depth, which is the
//!   mode the completion pipeline uses.
//! * [`InterpolationMode::BarycentricZ`]: barycentric combination of the
//!   vertex depths in image space. Cheaper and adequate for visualization,
//!   but biased on slanted surfaces.
//!
//! Facets are processed in index order and the first facet containing a
//! pixel claims it, so pixels on shared edges resolve exactly like
//! [`Mesh::locate`] (lowest facet index wins) and the output is
//! deterministic. Containment uses the same robust orientation predicate as
//! the triangulation itself.

use log::warn;

use crate::camera::Intrinsics;
use crate::cdt::predicates::orient2d;
use crate::cdt::Mesh;
use crate::features::FeatureSet;
use crate::image::{DepthMap, ValidMask};
use crate::Result;

/// How facet depth varies across its pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolationMode {
    /// Ray-plane intersection with the plane through the back-projected
    /// vertices.
    Planar3d,
    /// Image-space barycentric blend of the vertex depths.
    BarycentricZ,
}

/// A facet plane is considered degenerate when the cosine between its normal
/// and the viewing ray drops below this bound.
const DEGENERACY_COS: f64 = 1e-12;

/// Rough mesh depth: the rasterized depth, its mask, and the mesh it came
/// from.
#[derive(Debug, Clone)]
pub struct RoughMeshDepth {
    pub depth: DepthMap,
    pub mask: ValidMask,
    pub mesh: Mesh,
}

/// Rasterizes mesh facets into a depth map over the intrinsics' image grid.
///
/// Pixels outside the mesh hull stay invalid (depth 0). Facets whose plane
/// is degenerate with respect to the viewing direction are skipped with a
/// warning; the pixels they would claim stay invalid rather than falling
/// through to a higher-index facet.
pub fn interpolate_mesh_depth(
    mesh: &Mesh,
    k: &Intrinsics,
    mode: InterpolationMode,
) -> Result<RoughMeshDepth> {
    let (w, h) = (k.width(), k.height());
    let mut depth = DepthMap::zeros(w, h);
    let mut claimed = vec![false; w * h];

    for (fi, f) in mesh.facets().iter().enumerate() {
        let va = mesh.vertices()[f[0]];
        let vb = mesh.vertices()[f[1]];
        let vc = mesh.vertices()[f[2]];

        let x0 = va.pos[0].min(vb.pos[0]).min(vc.pos[0]).floor().max(0.0) as usize;
        let x1 = va.pos[0].max(vb.pos[0]).max(vc.pos[0]).ceil().min((w - 1) as f64) as usize;
        let y0 = va.pos[1].min(vb.pos[1]).min(vc.pos[1]).floor().max(0.0) as usize;
        let y1 = va.pos[1].max(vb.pos[1]).max(vc.pos[1]).ceil().min((h - 1) as f64) as usize;
        if x0 > x1 || y0 > y1 {
            continue;
        }

        let eval = match FacetInterp::build(mode, k, &va, &vb, &vc) {
            Some(e) => e,
            None => {
                warn!("skipping degenerate facet {fi}; its pixels stay invalid");
                // Still claim the facet's pixels so a later facet sharing a
                // boundary cannot take them over.
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        if !claimed[y * w + x]
                            && contains(va.pos, vb.pos, vc.pos, [x as f64, y as f64])
                        {
                            claimed[y * w + x] = true;
                        }
                    }
                }
                continue;
            }
        };

        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * w + x;
                if claimed[i] {
                    continue;
                }
                let p = [x as f64, y as f64];
                if !contains(va.pos, vb.pos, vc.pos, p) {
                    continue;
                }
                claimed[i] = true;
                let z = eval.depth_at(k, p);
                if z.is_finite() && z > 0.0 {
                    depth.set(x, y, z);
                }
            }
        }
    }

    let mask = depth.valid_mask();
    Ok(RoughMeshDepth {
        depth,
        mask,
        mesh: mesh.clone(),
    })
}

fn contains(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> bool {
    orient2d(a, b, p) >= 0 && orient2d(b, c, p) >= 0 && orient2d(c, a, p) >= 0
}

enum FacetInterp {
    /// Plane `n . X = d` in camera space; depth along the ray through a
    /// pixel is `d / (n . ray)`.
    Planar { n: nalgebra::Vector3<f64>, d: f64 },
    /// Barycentric weights from image-space areas relative to (a, b, c).
    /// Evaluated in affine form `za + wb (zb - za) + wc (zc - za)` so a
    /// constant depth field reproduces exactly despite weight round-off.
    Barycentric {
        a: [f64; 2],
        b: [f64; 2],
        c: [f64; 2],
        inv_area2: f64,
        za: f64,
        zb: f64,
        zc: f64,
    },
}

impl FacetInterp {
    fn build(
        mode: InterpolationMode,
        k: &Intrinsics,
        va: &crate::cdt::MeshVertex,
        vb: &crate::cdt::MeshVertex,
        vc: &crate::cdt::MeshVertex,
    ) -> Option<FacetInterp> {
        match mode {
            InterpolationMode::Planar3d => {
                let pa = k.back_project(va.pos, va.depth).ok()?;
                let pb = k.back_project(vb.pos, vb.depth).ok()?;
                let pc = k.back_project(vc.pos, vc.depth).ok()?;
                let n = (pb - pa).cross(&(pc - pa));
                let d = n.dot(&pa);
                let centroid = [
                    (va.pos[0] + vb.pos[0] + vc.pos[0]) / 3.0,
                    (va.pos[1] + vb.pos[1] + vc.pos[1]) / 3.0,
                ];
                let r = k.ray(centroid);
                let cosine = n.dot(&r).abs() / (n.norm() * r.norm());
                if !cosine.is_finite() || cosine < DEGENERACY_COS {
                    return None;
                }
                Some(FacetInterp::Planar { n, d })
            }
            InterpolationMode::BarycentricZ => {
                let area2 = (vb.pos[0] - va.pos[0]) * (vc.pos[1] - va.pos[1])
                    - (vb.pos[1] - va.pos[1]) * (vc.pos[0] - va.pos[0]);
                if !(area2.is_finite() && area2 != 0.0) {
                    return None;
                }
                Some(FacetInterp::Barycentric {
                    a: va.pos,
                    b: vb.pos,
                    c: vc.pos,
                    inv_area2: 1.0 / area2,
                    za: va.depth,
                    zb: vb.depth,
                    zc: vc.depth,
                })
            }
        }
    }

    fn depth_at(&self, k: &Intrinsics, p: [f64; 2]) -> f64 {
        match self {
            FacetInterp::Planar { n, d } => {
                let r = k.ray(p);
                let denom = n.dot(&r);
                let cosine = denom.abs() / (n.norm() * r.norm());
                if cosine < DEGENERACY_COS {
                    return 0.0;
                }
                d / denom
            }
            FacetInterp::Barycentric {
                a,
                b,
                c,
                inv_area2,
                za,
                zb,
                zc,
            } => {
                let cross = |p0: [f64; 2], p1: [f64; 2], q: [f64; 2]| {
                    (p1[0] - p0[0]) * (q[1] - p0[1]) - (p1[1] - p0[1]) * (q[0] - p0[0])
                };
                let wb = cross(*c, *a, p) * inv_area2;
                let wc = cross(*a, *b, p) * inv_area2;
                za + wb * (zb - za) + wc * (zc - za)
            }
        }
    }
}

/// Splats features into a depth map without meshing: each point marks its
/// nearest pixel, each line marks every pixel it crosses with the depth
/// linearly interpolated along the segment. When several features hit the
/// same pixel the smallest depth (nearest surface) wins.
pub fn sparse_raster(features: &FeatureSet, width: usize, height: usize) -> Result<DepthMap> {
    features.check_in_bounds(width, height)?;
    let mut depth = DepthMap::zeros(width, height);
    let put = |pos: [f64; 2], z: f64, depth: &mut DepthMap| {
        let x = (pos[0].round() as i64).clamp(0, (width - 1) as i64) as usize;
        let y = (pos[1].round() as i64).clamp(0, (height - 1) as i64) as usize;
        let cur = depth.get(x, y);
        if cur == 0.0 || z < cur {
            depth.set(x, y, z);
        }
    };
    for p in &features.points {
        put([p.u, p.v], p.z, &mut depth);
    }
    for l in &features.lines {
        let span = (l.end[0] - l.start[0])
            .abs()
            .max((l.end[1] - l.start[1]).abs());
        let steps = (span.ceil() as usize).max(1);
        for s in 0..=steps {
            let (pos, z) = l.at(s as f64 / steps as f64);
            put(pos, z, &mut depth);
        }
    }
    Ok(depth)
}

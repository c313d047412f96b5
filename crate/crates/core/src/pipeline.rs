//! Per-frame composition of the three depth stages: feature mesh
//! interpolation, learned refinement, and a pluggable dense estimator.
//!
//! [`complete_frame`] runs the stages in order and returns every
//! intermediate, so callers can stage the pipeline through files (the CLI
//! does) or consume it in process with bit-identical results. The
//! refinement stage is optional: with [`MdrConfig::Identity`] the refined
//! depth is the hole-filled mesh depth and no network runs, which keeps
//! the classical pipeline free of any learned component.

use std::fmt;

use crate::camera::Intrinsics;
use crate::cdt::{prepare_sites, triangulate};
use crate::features::FeatureSet;
use crate::image::{DepthMap, ImageBuffer, ValidMask};
use crate::losses::{LossWeights, SsimConfig};
use crate::mdr::{mdr_forward, MdrParams};
use crate::meshdepth::{interpolate_mesh_depth, InterpolationMode};
use crate::metrics::DeltaThresholds;
use crate::{Error, Result};

/// The dense estimator contract: consumes the image and refined depth,
/// produces the final per-pixel estimate with identical dimensions.
pub trait DepthEstimator {
    fn estimate(
        &self,
        image: &ImageBuffer,
        z_refined: &DepthMap,
        k: &Intrinsics,
    ) -> Result<DepthMap>;

    fn id(&self) -> &'static str;
}

/// Returns the refined depth unchanged; the default estimator.
pub struct Passthrough;

impl DepthEstimator for Passthrough {
    fn estimate(
        &self,
        _image: &ImageBuffer,
        z_refined: &DepthMap,
        _k: &Intrinsics,
    ) -> Result<DepthMap> {
        Ok(z_refined.clone())
    }

    fn id(&self) -> &'static str {
        "passthrough"
    }
}

/// Looks up an estimator implementation by its configured id.
pub fn estimator_by_id(id: &str) -> Result<Box<dyn DepthEstimator>> {
    match id {
        "passthrough" => Ok(Box::new(Passthrough)),
        other => Err(Error::InvalidInput(format!(
            "unknown estimator id {other:?} (available: passthrough)"
        ))),
    }
}

/// Refinement stage selection.
#[derive(Clone)]
pub enum MdrConfig {
    /// No network: refined depth = hole-filled mesh depth.
    Identity,
    /// Run the refinement network with these parameters.
    Params(MdrParams),
}

impl fmt::Debug for MdrConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdrConfig::Identity => f.write_str("Identity"),
            MdrConfig::Params(_) => f.write_str("Params(..)"),
        }
    }
}

/// Everything a frame run needs beyond its inputs. The loss, SSIM,
/// threshold, and seed fields are carried for evaluation plumbing; the
/// completion stages themselves use mode, snap tolerance, mdr, and
/// estimator.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: InterpolationMode,
    pub snap_tolerance: f64,
    pub mdr: MdrConfig,
    pub estimator: String,
    pub weights: LossWeights,
    pub ssim: SsimConfig,
    pub thresholds: DeltaThresholds,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: InterpolationMode::Planar3d,
            snap_tolerance: crate::cdt::DEFAULT_SNAP_TOLERANCE,
            mdr: MdrConfig::Identity,
            estimator: "passthrough".into(),
            weights: LossWeights::default(),
            ssim: SsimConfig::default(),
            thresholds: DeltaThresholds::default(),
            seed: 0,
        }
    }
}

/// All per-frame stage outputs.
#[derive(Debug, Clone)]
pub struct FrameOutputs {
    /// Mesh-interpolated depth, zero outside the feature hull.
    pub z_mesh: DepthMap,
    /// True where `z_mesh` carries a valid interpolated depth.
    pub mask: ValidMask,
    /// Refined depth, defined everywhere.
    pub z_refined: DepthMap,
    /// Final dense estimate, defined everywhere.
    pub z_dense: DepthMap,
}

/// Runs mesh interpolation, refinement, and the dense estimator on one
/// frame. Errors carry the failing stage's name.
pub fn complete_frame(
    image: &ImageBuffer,
    features: &FeatureSet,
    k: &Intrinsics,
    cfg: &PipelineConfig,
) -> Result<FrameOutputs> {
    if image.width() != k.width() || image.height() != k.height() {
        return Err(Error::Shape(format!(
            "image is {}x{} but intrinsics describe {}x{}",
            image.width(),
            image.height(),
            k.width(),
            k.height()
        )));
    }
    let prepared =
        prepare_sites(features, cfg.snap_tolerance).map_err(|e| e.in_stage("prepare"))?;
    let mesh = triangulate(&prepared).map_err(|e| e.in_stage("triangulate"))?;
    let rough =
        interpolate_mesh_depth(&mesh, k, cfg.mode).map_err(|e| e.in_stage("interpolate"))?;

    let z_refined = match &cfg.mdr {
        MdrConfig::Identity => rough
            .depth
            .fill_nearest()
            .map_err(|e| e.in_stage("refine"))?,
        MdrConfig::Params(params) => run_mdr_padded(image, &rough.depth, &rough.mask, params)
            .map_err(|e| e.in_stage("refine"))?,
    };

    let estimator =
        estimator_by_id(&cfg.estimator).map_err(|e| e.in_stage("estimate"))?;
    let z_dense = estimator
        .estimate(image, &z_refined, k)
        .map_err(|e| e.in_stage("estimate"))?;
    if z_dense.width() != image.width() || z_dense.height() != image.height() {
        return Err(Error::Contract(format!(
            "estimator {} changed dimensions to {}x{}",
            estimator.id(),
            z_dense.width(),
            z_dense.height()
        ))
        .in_stage("estimate"));
    }

    Ok(FrameOutputs {
        z_mesh: rough.depth,
        mask: rough.mask,
        z_refined,
        z_dense,
    })
}

/// Runs the refinement network on inputs padded to its 4-pixel divisibility
/// requirement (edge replication on the right and bottom), cropping the
/// result back to the frame size.
fn run_mdr_padded(
    image: &ImageBuffer,
    z_mesh: &DepthMap,
    mask: &ValidMask,
    params: &MdrParams,
) -> Result<DepthMap> {
    let (w, h) = (image.width(), image.height());
    let pw = w.div_ceil(4) * 4;
    let ph = h.div_ceil(4) * 4;
    if (pw, ph) == (w, h) {
        let (depth, _) = mdr_forward(image, z_mesh, mask, params)?;
        return Ok(depth);
    }
    let clamp = |x: usize, limit: usize| x.min(limit - 1);
    let p_image = ImageBuffer::from_fn(pw, ph, image.channels(), |x, y, c| {
        image.get(clamp(x, w), clamp(y, h), c)
    })?;
    let mut p_depth = DepthMap::zeros(pw, ph);
    let mut p_mask = vec![false; pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            let (sx, sy) = (clamp(x, w), clamp(y, h));
            p_depth.set(x, y, z_mesh.get(sx, sy));
            p_mask[y * pw + x] = mask.get(sx, sy);
        }
    }
    let p_mask = ValidMask::new(pw, ph, p_mask)?;
    let (depth, _) = mdr_forward(&p_image, &p_depth, &p_mask, params)?;
    let mut out = DepthMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, depth.get(x, y));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{fronto_parallel_scene, render, sample_features};

    #[test]
    fn identity_pipeline_reproduces_planar_scene_exactly() {
        let spec = fronto_parallel_scene(32, 24, 3);
        let (image, _) = render(&spec).unwrap();
        let features = sample_features(&spec, 12, 0, 0.0).unwrap();
        let k = &spec.camera.intrinsics;
        let out = complete_frame(&image, &features, k, &PipelineConfig::default()).unwrap();
        // Corner-pinned features make the hull cover every pixel; the plane
        // is exactly representable, so all stages agree everywhere.
        for y in 0..24 {
            for x in 0..32 {
                assert!(out.mask.get(x, y), "({x},{y}) outside hull");
                assert_eq!(out.z_mesh.get(x, y), 2.0);
                assert_eq!(out.z_refined.get(x, y), 2.0);
                assert_eq!(out.z_dense.get(x, y), 2.0);
            }
        }
    }

    #[test]
    fn dense_equals_mesh_on_masked_pixels_for_identity_config() {
        let spec = crate::synth::box_wall_scene(48, 36, 5);
        let (image, _) = render(&spec).unwrap();
        let features = sample_features(&spec, 30, 6, 0.0).unwrap();
        let k = &spec.camera.intrinsics;
        let out = complete_frame(&image, &features, k, &PipelineConfig::default()).unwrap();
        for y in 0..36 {
            for x in 0..48 {
                if out.mask.get(x, y) {
                    assert_eq!(out.z_dense.get(x, y), out.z_mesh.get(x, y));
                }
            }
        }
    }

    #[test]
    fn output_dims_match_input_for_non_divisible_sizes_with_network() {
        let spec = fronto_parallel_scene(30, 22, 8);
        let (image, _) = render(&spec).unwrap();
        let features = sample_features(&spec, 10, 0, 0.0).unwrap();
        let k = &spec.camera.intrinsics;
        let cfg = PipelineConfig {
            mdr: MdrConfig::Params(MdrParams::seeded(4)),
            ..PipelineConfig::default()
        };
        let out = complete_frame(&image, &features, k, &cfg).unwrap();
        assert_eq!((out.z_refined.width(), out.z_refined.height()), (30, 22));
        assert_eq!((out.z_dense.width(), out.z_dense.height()), (30, 22));
        assert!(out.z_dense.data().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn padded_network_run_matches_unpadded_on_divisible_sizes() {
        // 32x24 is already divisible by 4; the padding path must be a no-op.
        let spec = fronto_parallel_scene(32, 24, 9);
        let (image, _) = render(&spec).unwrap();
        let features = sample_features(&spec, 10, 0, 0.0).unwrap();
        let k = &spec.camera.intrinsics;
        let params = MdrParams::seeded(11);
        let cfg = PipelineConfig {
            mdr: MdrConfig::Params(params.clone()),
            ..PipelineConfig::default()
        };
        let out = complete_frame(&image, &features, k, &cfg).unwrap();
        let prepared = prepare_sites(&features, cfg.snap_tolerance).unwrap();
        let mesh = triangulate(&prepared).unwrap();
        let rough = interpolate_mesh_depth(&mesh, k, cfg.mode).unwrap();
        let (direct, _) = mdr_forward(&image, &rough.depth, &rough.mask, &params).unwrap();
        assert_eq!(out.z_refined.data(), direct.data());
    }

    #[test]
    fn refined_depth_is_hole_filled_mesh_depth_for_identity() {
        let spec = crate::synth::box_wall_scene(40, 28, 2);
        let (image, _) = render(&spec).unwrap();
        // Few features: the hull misses border pixels, leaving holes.
        let features = sample_features(&spec, 3, 3, 0.0).unwrap();
        let k = &spec.camera.intrinsics;
        let out = complete_frame(&image, &features, k, &PipelineConfig::default()).unwrap();
        let expect = out.z_mesh.fill_nearest().unwrap();
        assert_eq!(out.z_refined.data(), expect.data());
        assert!(out.z_refined.data().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn stage_errors_carry_the_stage_name() {
        let spec = fronto_parallel_scene(16, 16, 1);
        let (image, _) = render(&spec).unwrap();
        // Two merged sites cannot triangulate.
        let features = FeatureSet::new(
            vec![
                crate::features::PointFeature::new(1.0, 1.0, 1.0).unwrap(),
                crate::features::PointFeature::new(14.0, 14.0, 1.0).unwrap(),
            ],
            vec![],
        );
        let err = complete_frame(
            &image,
            &features,
            &spec.camera.intrinsics,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("stage prepare:"), "{err}");
        assert_eq!(err.category(), "degenerate");
    }

    #[test]
    fn unknown_estimator_rejected() {
        assert!(estimator_by_id("passthrough").is_ok());
        let err = match estimator_by_id("kbnet") {
            Err(e) => e,
            Ok(_) => panic!("unknown id accepted"),
        };
        assert_eq!(err.category(), "invalid-input");
    }

    #[test]
    fn mismatched_intrinsics_rejected() {
        let spec = fronto_parallel_scene(16, 16, 1);
        let (image, _) = render(&spec).unwrap();
        let features = sample_features(&spec, 5, 0, 0.0).unwrap();
        let k = Intrinsics::new(10.0, 10.0, 4.5, 4.5, 10, 10).unwrap();
        let err = complete_frame(&image, &features, &k, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.category(), "shape");
    }
}

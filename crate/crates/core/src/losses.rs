//! Unsupervised training losses for dense depth: photometric consistency
//! against pose-warped source frames, sparse feature consistency, and
//! edge-aware smoothness, combined by a weighted total.
//!
//! Conventions shared by every loss:
//!
//! * Images hold intensities in [0, 1]; multi-channel images are reduced by
//!   channel mean before SSIM and image-gradient terms, while the L1
//!   photometric term averages per channel.
//! * All reductions run in fixed row-major order, so results are bit-stable.
//! * Invalid data (holes, out-of-bounds warps) is excluded from the
//!   normalization rather than treated as zero error; a loss whose domain is
//!   empty reports an undefined-loss error instead of 0.

use serde::Serialize;

use crate::camera::{Intrinsics, Pose};
use crate::image::{DepthMap, ImageBuffer, ValidMask};
use crate::{Error, Result};

/// Weights for the total loss and the photometric sub-terms.
///
/// `w_p`, `w_s`, `w_l` scale the photometric, sparse-consistency, and
/// smoothness losses; `w1`, `w2` scale the L1 and SSIM parts inside the
/// photometric loss. All must be finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub w_p: f64,
    pub w_s: f64,
    pub w_l: f64,
    pub w1: f64,
    pub w2: f64,
}

impl LossWeights {
    pub fn new(w_p: f64, w_s: f64, w_l: f64, w1: f64, w2: f64) -> Result<Self> {
        for (name, v) in [("w_p", w_p), ("w_s", w_s), ("w_l", w_l), ("w1", w1), ("w2", w2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "loss weight {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self { w_p, w_s, w_l, w1, w2 })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_p: 1.0,
            w_s: 0.6,
            w_l: 0.04,
            w1: 0.15,
            w2: 0.95,
        }
    }
}

/// SSIM stability constants and box-window side length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub window: usize,
}

impl SsimConfig {
    pub fn new(c1: f64, c2: f64, window: usize) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "SSIM constants must be positive and finite, got c1={c1}, c2={c2}"
            )));
        }
        if window < 3 || window % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "SSIM window must be odd and at least 3, got {window}"
            )));
        }
        Ok(Self { c1, c2, window })
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            window: 3,
        }
    }
}

/// A source frame for photometric supervision: its image and camera pose.
#[derive(Debug, Clone)]
pub struct SourceFrame {
    pub image: ImageBuffer,
    pub pose: Pose,
}

/// The target frame plus the source frames it is photometrically compared
/// against.
///
/// Poses are camera-from-world transforms, so the warp from the target's
/// camera into a source camera composes `source.pose` with the inverse of
/// the target pose.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    target_image: ImageBuffer,
    target_sparse: DepthMap,
    target_pose: Pose,
    sources: Vec<SourceFrame>,
}

impl FrameWindow {
    pub fn new(
        target_image: ImageBuffer,
        target_sparse: DepthMap,
        target_pose: Pose,
        sources: Vec<SourceFrame>,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidInput(
                "a frame window needs at least one source frame".into(),
            ));
        }
        let (w, h) = (target_image.width(), target_image.height());
        if target_sparse.width() != w || target_sparse.height() != h {
            return Err(Error::Shape(format!(
                "sparse depth is {}x{} but the target image is {w}x{h}",
                target_sparse.width(),
                target_sparse.height()
            )));
        }
        for (i, s) in sources.iter().enumerate() {
            if s.image.width() != w
                || s.image.height() != h
                || s.image.channels() != target_image.channels()
            {
                return Err(Error::Shape(format!(
                    "source frame {i} is {}x{}x{} but the target is {w}x{h}x{}",
                    s.image.width(),
                    s.image.height(),
                    s.image.channels(),
                    target_image.channels()
                )));
            }
        }
        Ok(Self {
            target_image,
            target_sparse,
            target_pose,
            sources,
        })
    }

    pub fn target_image(&self) -> &ImageBuffer {
        &self.target_image
    }

    pub fn target_sparse(&self) -> &DepthMap {
        &self.target_sparse
    }

    pub fn target_pose(&self) -> &Pose {
        &self.target_pose
    }

    pub fn sources(&self) -> &[SourceFrame] {
        &self.sources
    }
}

/// Per-frame loss record emitted by the evaluation CLI.
#[derive(Debug, Clone, Serialize)]
pub struct LossBreakdown {
    pub l_p: f64,
    pub l_s: f64,
    pub l_l: f64,
    #[serde(rename = "L")]
    pub total: f64,
}

/// Reconstructs the target view from a source image: each target pixel with
/// valid depth is back-projected, moved by `pose_src_from_target`, projected
/// into the source camera, and bilinearly sampled.
///
/// Validity is false where the depth is invalid, the transformed point ends
/// up at or behind the source camera, or the reprojection leaves the source
/// image bounds; those pixels hold zeros in the warped image. Invalidity is
/// data, not failure; the only error is mismatched shapes.
pub fn warp_image(
    src_image: &ImageBuffer,
    depth_at_target: &DepthMap,
    pose_src_from_target: &Pose,
    k: &Intrinsics,
) -> Result<(ImageBuffer, ValidMask)> {
    let (w, h) = (depth_at_target.width(), depth_at_target.height());
    if src_image.width() != w || src_image.height() != h {
        return Err(Error::Shape(format!(
            "source image is {}x{} but the target depth is {w}x{h}",
            src_image.width(),
            src_image.height()
        )));
    }
    let ch = src_image.channels();
    let mut warped = ImageBuffer::filled(w, h, ch, 0.0)?;
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = depth_at_target.get(x, y);
            if d <= 0.0 {
                continue;
            }
            let p = k.back_project([x as f64, y as f64], d).expect("depth checked positive");
            let q = pose_src_from_target.transform(p);
            if q.z <= 0.0 {
                continue;
            }
            let (uv, _) = k.project(q).expect("z checked positive");
            if !k.contains(uv) {
                continue;
            }
            let sample = src_image
                .sample_bilinear(uv[0], uv[1])
                .expect("in-bounds sample");
            for (c, v) in sample.iter().enumerate() {
                warped.set(x, y, c, *v);
            }
            valid[y * w + x] = true;
        }
    }
    Ok((warped, ValidMask::new(w, h, valid)?))
}

/// Per-pixel structural similarity between two images over a box window.
///
/// Images are reduced to their channel mean first. Windows are truncated at
/// the borders, and window statistics are population moments (divide by the
/// pixel count, not count minus one). Returns a row-major map with values in
/// [-1, 1].
pub fn ssim_map(a: &ImageBuffer, b: &ImageBuffer, cfg: &SsimConfig) -> Result<Vec<f64>> {
    let (w, h) = (a.width(), a.height());
    if b.width() != w || b.height() != h {
        return Err(Error::Shape(format!(
            "SSIM inputs differ: {}x{} vs {w}x{h}",
            b.width(),
            b.height()
        )));
    }
    let ga = a.channel_mean();
    let gb = b.channel_mean();
    let r = (cfg.window / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let mut n = 0.0;
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let va = ga.get(xx as usize, yy as usize, 0);
                    let vb = gb.get(xx as usize, yy as usize, 0);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                    n += 1.0;
                }
            }
            let mu_a = sa / n;
            let mu_b = sb / n;
            let var_a = saa / n - mu_a * mu_a;
            let var_b = sbb / n - mu_b * mu_b;
            let cov = sab / n - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2);
            let den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2);
            out[(y as usize) * w + x as usize] = num / den;
        }
    }
    Ok(out)
}

/// Photometric loss between the target frame and each source frame warped
/// into the target view through `z_dense`.
///
/// For every warp-valid pixel of every source the per-pixel cost is
/// `w1 * meanChannels|I - Iw| + w2 * (1 - SSIM(I, Iw))`; the loss is the
/// mean over all such (pixel, source) pairs. Warp-invalid pixels are
/// replaced by the target's own values before SSIM so window statistics near
/// holes stay well defined, and are excluded from the mean. Errors when no
/// pixel of any source survives warping.
pub fn photometric_loss(
    frames: &FrameWindow,
    z_dense: &DepthMap,
    k: &Intrinsics,
    weights: &LossWeights,
    ssim_cfg: &SsimConfig,
) -> Result<f64> {
    let target = frames.target_image();
    let (w, h) = (target.width(), target.height());
    if z_dense.width() != w || z_dense.height() != h {
        return Err(Error::Shape(format!(
            "dense depth is {}x{} but the target image is {w}x{h}",
            z_dense.width(),
            z_dense.height()
        )));
    }
    let ch = target.channels();
    let target_from_world_inv = frames.target_pose().inverse();
    let mut sum = 0.0;
    let mut count = 0usize;
    for src in frames.sources() {
        let rel = src.pose.compose(&target_from_world_inv);
        let (warped, valid) = warp_image(&src.image, z_dense, &rel, k)?;
        let mut filled = warped.clone();
        for y in 0..h {
            for x in 0..w {
                if !valid.get(x, y) {
                    for c in 0..ch {
                        filled.set(x, y, c, target.get(x, y, c));
                    }
                }
            }
        }
        let ssim = ssim_map(target, &filled, ssim_cfg)?;
        for y in 0..h {
            for x in 0..w {
                if !valid.get(x, y) {
                    continue;
                }
                let mut l1 = 0.0;
                for c in 0..ch {
                    l1 += (target.get(x, y, c) - filled.get(x, y, c)).abs();
                }
                l1 /= ch as f64;
                sum += weights.w1 * l1 + weights.w2 * (1.0 - ssim[y * w + x]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Undefined(
            "photometric loss has no warp-valid pixels in any source frame".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Mean absolute residual between the dense depth and the sparse feature
/// depth over the pixels where features exist. Errors when no feature pixel
/// is valid.
pub fn sparse_consistency_loss(z_dense: &DepthMap, z_features: &DepthMap) -> Result<f64> {
    check_same_dims(z_dense, z_features)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (d, f) in z_dense.data().iter().zip(z_features.data()) {
        if *f > 0.0 {
            sum += (d - f).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Undefined(
            "sparse consistency loss has no valid feature pixels".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Gradient of [`sparse_consistency_loss`] with respect to the dense depth,
/// row-major. Zero where features are absent; the subgradient at an exact
/// tie is taken as 0.
pub fn sparse_consistency_grad(z_dense: &DepthMap, z_features: &DepthMap) -> Result<Vec<f64>> {
    check_same_dims(z_dense, z_features)?;
    let n = z_features.data().iter().filter(|f| **f > 0.0).count();
    if n == 0 {
        return Err(Error::Undefined(
            "sparse consistency loss has no valid feature pixels".into(),
        ));
    }
    let scale = 1.0 / n as f64;
    Ok(z_dense
        .data()
        .iter()
        .zip(z_features.data())
        .map(|(d, f)| {
            if *f > 0.0 {
                signum_zero(d - f) * scale
            } else {
                0.0
            }
        })
        .collect())
}

/// Edge-aware smoothness: forward differences of depth, each damped by the
/// exponential of the collocated image gradient magnitude, averaged over the
/// full pixel grid. Terms that would need a neighbor beyond the last row or
/// column are dropped rather than padded.
pub fn smoothness_loss(z_dense: &DepthMap, image: &ImageBuffer) -> Result<f64> {
    let (w, h) = shape_checked(z_dense, image)?;
    let g = image.channel_mean();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let di = (g.get(x + 1, y, 0) - g.get(x, y, 0)).abs();
                sum += (-di).exp() * (z_dense.get(x + 1, y) - z_dense.get(x, y)).abs();
            }
            if y + 1 < h {
                let di = (g.get(x, y + 1, 0) - g.get(x, y, 0)).abs();
                sum += (-di).exp() * (z_dense.get(x, y + 1) - z_dense.get(x, y)).abs();
            }
        }
    }
    Ok(sum / (w * h) as f64)
}

/// Gradient of [`smoothness_loss`] with respect to the dense depth,
/// row-major, with the subgradient at exact ties taken as 0.
pub fn smoothness_grad(z_dense: &DepthMap, image: &ImageBuffer) -> Result<Vec<f64>> {
    let (w, h) = shape_checked(z_dense, image)?;
    let g = image.channel_mean();
    let scale = 1.0 / (w * h) as f64;
    let mut grad = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let di = (g.get(x + 1, y, 0) - g.get(x, y, 0)).abs();
                let s = (-di).exp() * signum_zero(z_dense.get(x + 1, y) - z_dense.get(x, y));
                grad[y * w + x + 1] += s * scale;
                grad[y * w + x] -= s * scale;
            }
            if y + 1 < h {
                let di = (g.get(x, y + 1, 0) - g.get(x, y, 0)).abs();
                let s = (-di).exp() * signum_zero(z_dense.get(x, y + 1) - z_dense.get(x, y));
                grad[(y + 1) * w + x] += s * scale;
                grad[y * w + x] -= s * scale;
            }
        }
    }
    Ok(grad)
}

/// Weighted sum of the three loss components.
pub fn total_loss(l_p: f64, l_s: f64, l_l: f64, weights: &LossWeights) -> f64 {
    weights.w_p * l_p + weights.w_s * l_s + weights.w_l * l_l
}

fn signum_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_dims(a: &DepthMap, b: &DepthMap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "depth maps differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn shape_checked(z: &DepthMap, image: &ImageBuffer) -> Result<(usize, usize)> {
    if z.width() != image.width() || z.height() != image.height() {
        return Err(Error::Shape(format!(
            "depth is {}x{} but the image is {}x{}",
            z.width(),
            z.height(),
            image.width(),
            image.height()
        )));
    }
    Ok((z.width(), z.height()))
}

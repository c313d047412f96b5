//! On-disk formats: depth and image PNGs, feature and mesh JSON, network
//! parameter files, and the dataset manifest.
//!
//! Formats are chosen for lossless round trips:
//!
//! * depth is a 16-bit single-channel PNG storing `round(meters * 1000)`,
//!   value 0 meaning invalid, so any depth in (0, 65.535] m survives
//!   write-read bit-exactly after millimeter quantization;
//! * features are canonical JSON (`{"points": [[u, v, z], ...], "lines":
//!   [[u1, v1, z1, u2, v2, z2], ...]}`) whose shortest-float serialization
//!   re-serializes byte-identically after a parse;
//! * refinement parameters are a flat little-endian f64 vector plus a JSON
//!   sidecar recording tensor names and shapes, verified on load.
//!
//! A dataset is a directory with `manifest.json` at its root listing
//! intrinsics, the depth unit scale, and an ordered list of frames whose
//! paths are relative to that root.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::cdt::Mesh;
use crate::features::{FeatureSet, LineFeature, PointFeature};
use crate::image::{DepthMap, ImageBuffer};
use crate::mdr::MdrParams;
use crate::{Error, Result};

/// Millimeters per stored depth PNG unit, in meters.
pub const DEPTH_UNIT_SCALE: f64 = 0.001;

/// Manifest format version this build reads and writes.
pub const MANIFEST_VERSION: u32 = 1;

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Writes a depth map as a 16-bit grayscale PNG, `round(m * 1000)` per
/// pixel, 0 for invalid. Depths that quantize outside [1, 65535] mm fail.
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = depth.get(x, y);
            if d == 0.0 {
                pixels.push(0u16);
                continue;
            }
            let mm = (d * 1000.0).round();
            if !(1.0..=65535.0).contains(&mm) {
                return Err(Error::Format(format!(
                    "depth {d} m at ({x},{y}) does not fit the 16-bit millimeter range"
                )));
            }
            pixels.push(mm as u16);
        }
    }
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, pixels)
        .expect("buffer sized to dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

/// Reads a 16-bit grayscale depth PNG written by [`write_depth_png`].
pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 16-bit single-channel PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    // Divide rather than multiply by the scale: v / 1000.0 is the exact
    // inverse of the write-side round(d * 1000.0) quantization grid.
    let data = gray
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 1000.0)
        .collect();
    DepthMap::new(w, h, data)
}

/// Writes a 1- or 3-channel image with values in [0, 1] as an 8-bit PNG.
pub fn write_image_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    match img.channels() {
        1 => {
            let data: Vec<u8> = img.data().iter().copied().map(to_u8).collect();
            image::ImageBuffer::<image::Luma<u8>, _>::from_raw(w, h, data)
                .expect("buffer sized to dimensions")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| image_err(path, e))
        }
        3 => {
            let data: Vec<u8> = img.data().iter().copied().map(to_u8).collect();
            image::ImageBuffer::<image::Rgb<u8>, _>::from_raw(w, h, data)
                .expect("buffer sized to dimensions")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| image_err(path, e))
        }
        c => Err(Error::InvalidInput(format!(
            "cannot write a {c}-channel image as PNG"
        ))),
    }
}

/// Reads an 8-bit grayscale or RGB PNG into a [0, 1] float image.
pub fn read_image_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h, c, raw): (usize, usize, usize, Vec<u8>) = match img {
        image::DynamicImage::ImageLuma8(g) => {
            (g.width() as usize, g.height() as usize, 1, g.into_raw())
        }
        image::DynamicImage::ImageRgb8(g) => {
            (g.width() as usize, g.height() as usize, 3, g.into_raw())
        }
        other => {
            return Err(Error::Format(format!(
                "{}: expected 8-bit grayscale or RGB PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let data = raw.into_iter().map(|v| v as f64 / 255.0).collect();
    ImageBuffer::new(w, h, c, data)
}

#[derive(Serialize, Deserialize)]
struct FeaturesFile {
    points: Vec<[f64; 3]>,
    lines: Vec<[f64; 6]>,
}

/// Canonical JSON bytes for a feature set (ends with a newline).
pub fn features_to_json(features: &FeatureSet) -> String {
    let file = FeaturesFile {
        points: features.points.iter().map(|p| [p.u, p.v, p.z]).collect(),
        lines: features
            .lines
            .iter()
            .map(|l| [l.start[0], l.start[1], l.z_start, l.end[0], l.end[1], l.z_end])
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("plain arrays always serialize");
    s.push('\n');
    s
}

/// Parses the canonical feature JSON, validating depths and coordinates.
pub fn parse_features(text: &str) -> Result<FeatureSet> {
    let file: FeaturesFile = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("features JSON: {e}")))?;
    let mut points = Vec::with_capacity(file.points.len());
    for (i, [u, v, z]) in file.points.iter().copied().enumerate() {
        points.push(
            PointFeature::new(u, v, z)
                .map_err(|e| Error::Format(format!("points[{i}]: {e}")))?,
        );
    }
    let mut lines = Vec::with_capacity(file.lines.len());
    for (i, [u1, v1, z1, u2, v2, z2]) in file.lines.iter().copied().enumerate() {
        lines.push(
            LineFeature::new([u1, v1], [u2, v2], z1, z2)
                .map_err(|e| Error::Format(format!("lines[{i}]: {e}")))?,
        );
    }
    Ok(FeatureSet::new(points, lines))
}

pub fn write_features(path: &Path, features: &FeatureSet) -> Result<()> {
    fs::write(path, features_to_json(features)).map_err(Error::Io)
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let text = fs::read_to_string(path)?;
    parse_features(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Serialize)]
struct MeshVertexRec {
    pos: [f64; 2],
    depth: f64,
}

#[derive(Serialize)]
struct MeshEdgeRec {
    a: usize,
    b: usize,
    constrained: bool,
}

#[derive(Serialize)]
struct MeshFile {
    vertices: Vec<MeshVertexRec>,
    edges: Vec<MeshEdgeRec>,
    facets: Vec<[usize; 3]>,
}

/// JSON for a triangulated mesh: vertices with depths, edges with their
/// constrained flag, and counter-clockwise facet index triples.
pub fn mesh_to_json(mesh: &Mesh) -> String {
    let file = MeshFile {
        vertices: mesh
            .vertices()
            .iter()
            .map(|v| MeshVertexRec { pos: v.pos, depth: v.depth })
            .collect(),
        edges: mesh
            .edges()
            .iter()
            .map(|e| MeshEdgeRec { a: e.a, b: e.b, constrained: e.constrained })
            .collect(),
        facets: mesh.facets().to_vec(),
    };
    let mut s = serde_json::to_string(&file).expect("plain records always serialize");
    s.push('\n');
    s
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    fs::write(path, mesh_to_json(mesh)).map_err(Error::Io)
}

/// Color ramp anchors (dark violet to yellow) sampled at five evenly
/// spaced positions; values are linearly interpolated between anchors.
const COLORMAP: [[f64; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.229, 0.322, 0.546],
    [0.127, 0.566, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
];

fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLORMAP.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = COLORMAP[i][c] + f * (COLORMAP[i + 1][c] - COLORMAP[i][c]);
        out[c] = (v * 255.0).round() as u8;
    }
    out
}

/// Renders a depth map for inspection: valid depths mapped through the
/// fixed color ramp scaled to [min, max] valid depth (constant maps render
/// at the ramp start), invalid pixels black.
pub fn render_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let valid: Vec<f64> = depth.data().iter().copied().filter(|d| *d > 0.0).collect();
    let (lo, hi) = valid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(*d), hi.max(*d))
        });
    let mut data = vec![0u8; w * h * 3];
    for (i, d) in depth.data().iter().enumerate() {
        if *d <= 0.0 {
            continue;
        }
        let t = if hi > lo { (d - lo) / (hi - lo) } else { 0.0 };
        data[i * 3..i * 3 + 3].copy_from_slice(&colormap(t));
    }
    image::ImageBuffer::<image::Rgb<u8>, _>::from_raw(w as u32, h as u32, data)
        .expect("buffer sized to dimensions")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct ParamsSidecarTensor {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ParamsSidecar {
    version: u32,
    count: usize,
    tensors: Vec<ParamsSidecarTensor>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Saves refinement network parameters: the flat little-endian f64 vector
/// at `path` and a `<path>.json` sidecar with tensor names and shapes.
pub fn write_mdr_params(path: &Path, params: &MdrParams) -> Result<()> {
    let flat = params.flat();
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = ParamsSidecar {
        version: MANIFEST_VERSION,
        count: flat.len(),
        tensors: MdrParams::layout()
            .iter()
            .map(|(name, shape)| ParamsSidecarTensor {
                name: (*name).into(),
                shape: shape.to_vec(),
            })
            .collect(),
    };
    let mut f = fs::File::create(sidecar_path(path))?;
    let mut s = serde_json::to_string(&sidecar).expect("sidecar always serializes");
    s.push('\n');
    f.write_all(s.as_bytes())?;
    Ok(())
}

/// Loads parameters written by [`write_mdr_params`], verifying the sidecar
/// against the fixed architecture before touching the binary data.
pub fn read_mdr_params(path: &Path) -> Result<MdrParams> {
    let sc_path = sidecar_path(path);
    let text = fs::read_to_string(&sc_path)?;
    let sidecar: ParamsSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", sc_path.display())))?;
    if sidecar.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported parameter file version {}",
            sc_path.display(),
            sidecar.version
        )));
    }
    let layout = MdrParams::layout();
    let matches = sidecar.tensors.len() == layout.len()
        && sidecar
            .tensors
            .iter()
            .zip(layout.iter())
            .all(|(t, (name, shape))| t.name == *name && t.shape == *shape);
    if !matches {
        return Err(Error::Format(format!(
            "{}: tensor layout does not match this build's architecture",
            sc_path.display()
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != sidecar.count * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} bytes of f64 data, found {}",
            path.display(),
            sidecar.count * 8,
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    MdrParams::from_flat(&flat)
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    let mut s = serde_json::to_string(pose).expect("pose always serializes");
    s.push('\n');
    fs::write(path, s).map_err(Error::Io)
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Per-frame file references, relative to the dataset root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_depth: Option<String>,
    pub features: String,
    pub pose: String,
}

/// `manifest.json` at a dataset root: camera intrinsics shared by all
/// frames, the depth PNG unit scale, and the ordered frame list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub intrinsics: Intrinsics,
    pub depth_scale: f64,
    pub frames: Vec<FrameRecord>,
}

impl DatasetManifest {
    pub fn new(intrinsics: Intrinsics) -> DatasetManifest {
        DatasetManifest {
            version: MANIFEST_VERSION,
            intrinsics,
            depth_scale: DEPTH_UNIT_SCALE,
            frames: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest always serializes");
        s.push('\n');
        fs::write(path, s).map_err(Error::Io)
    }

    pub fn read(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path)?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                m.version
            )));
        }
        if m.depth_scale != DEPTH_UNIT_SCALE {
            return Err(Error::Format(format!(
                "{}: unsupported depth scale {} (this build reads millimeter PNGs)",
                path.display(),
                m.depth_scale
            )));
        }
        Ok(m)
    }
}

/// A frame's files loaded and parsed.
#[derive(Debug)]
pub struct LoadedFrame {
    pub image: ImageBuffer,
    pub gt_depth: Option<DepthMap>,
    pub features: FeatureSet,
    pub pose: Pose,
}

/// Loads one frame's image, optional ground truth, features, and pose,
/// resolving paths against the dataset root.
pub fn load_frame(root: &Path, rec: &FrameRecord) -> Result<LoadedFrame> {
    let image = read_image_png(&root.join(&rec.image))?;
    let gt_depth = rec
        .gt_depth
        .as_ref()
        .map(|p| read_depth_png(&root.join(p)))
        .transpose()?;
    let features = read_features(&root.join(&rec.features))?;
    let pose = read_pose(&root.join(&rec.pose))?;
    if let Some(gt) = &gt_depth {
        if gt.width() != image.width() || gt.height() != image.height() {
            return Err(Error::Format(format!(
                "frame {}: depth dimensions {}x{} do not match image {}x{}",
                rec.image,
                gt.width(),
                gt.height(),
                image.width(),
                image.height()
            )));
        }
    }
    Ok(LoadedFrame { image, gt_depth, features, pose })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn depth_png_round_trips_after_quantization() {
        let dir = tmp();
        let path = dir.path().join("d.png");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut data = vec![0.0; 16 * 12];
        for d in data.iter_mut() {
            if rng.gen_bool(0.8) {
                *d = rng.gen_range(0.001..65.0);
            }
        }
        let depth = DepthMap::new(16, 12, data.clone()).unwrap();
        write_depth_png(&path, &depth).unwrap();
        let back = read_depth_png(&path).unwrap();
        for (orig, got) in data.iter().zip(back.data()) {
            let quantized = if *orig == 0.0 {
                0.0
            } else {
                (orig * 1000.0).round() / 1000.0
            };
            assert_eq!(*got, quantized);
        }
        // And a second trip is bit-exact.
        let path2 = dir.path().join("d2.png");
        write_depth_png(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn depth_png_value_scale_and_invalids() {
        let dir = tmp();
        let path = dir.path().join("d.png");
        let depth = DepthMap::new(2, 1, vec![2.0, 0.0]).unwrap();
        write_depth_png(&path, &depth).unwrap();
        let img = image::open(&path).unwrap();
        let gray = match img {
            image::DynamicImage::ImageLuma16(g) => g,
            _ => panic!("not 16-bit"),
        };
        assert_eq!(gray.get_pixel(0, 0).0[0], 2000);
        assert_eq!(gray.get_pixel(1, 0).0[0], 0);
        let back = read_depth_png(&path).unwrap();
        assert_eq!(back.get(0, 0), 2.0);
        assert!(!back.valid_mask().get(1, 0));
    }

    #[test]
    fn wrong_depth_png_format_rejected() {
        let dir = tmp();
        let p8 = dir.path().join("lum8.png");
        image::ImageBuffer::<image::Luma<u8>, _>::from_raw(2, 2, vec![1, 2, 3, 4])
            .unwrap()
            .save_with_format(&p8, image::ImageFormat::Png)
            .unwrap();
        assert_eq!(read_depth_png(&p8).unwrap_err().category(), "format");

        let rgb = dir.path().join("rgb.png");
        image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(1, 1, vec![1, 2, 3])
            .unwrap()
            .save_with_format(&rgb, image::ImageFormat::Png)
            .unwrap();
        assert_eq!(read_depth_png(&rgb).unwrap_err().category(), "format");
    }

    #[test]
    fn out_of_range_depth_write_fails() {
        let dir = tmp();
        let depth = DepthMap::new(1, 1, vec![66.0]).unwrap();
        let err = write_depth_png(&dir.path().join("d.png"), &depth).unwrap_err();
        assert_eq!(err.category(), "format");
        let tiny = DepthMap::new(1, 1, vec![0.0004]).unwrap();
        assert!(write_depth_png(&dir.path().join("t.png"), &tiny).is_err());
    }

    #[test]
    fn features_json_round_trips_byte_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut points = Vec::new();
        let mut lines = Vec::new();
        for _ in 0..700 {
            points.push(
                PointFeature::new(
                    rng.gen_range(0.0..640.0),
                    rng.gen_range(0.0..480.0),
                    rng.gen_range(0.1..10.0),
                )
                .unwrap(),
            );
        }
        for _ in 0..300 {
            lines.push(
                LineFeature::new(
                    [rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)],
                    [rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)],
                    rng.gen_range(0.1..10.0),
                    rng.gen_range(0.1..10.0),
                )
                .unwrap(),
            );
        }
        let fs_in = FeatureSet::new(points, lines);
        let first = features_to_json(&fs_in);
        let parsed = parse_features(&first).unwrap();
        assert_eq!(features_to_json(&parsed), first);
        assert_eq!(parsed.points.len(), 700);
        assert_eq!(parsed.lines.len(), 300);
    }

    #[test]
    fn features_hand_examples() {
        let fs = parse_features(r#"{"points":[[10,20,1.5]],"lines":[]}"#).unwrap();
        assert_eq!(fs.points.len(), 1);
        assert_eq!((fs.points[0].u, fs.points[0].v, fs.points[0].z), (10.0, 20.0, 1.5));
        let empty = parse_features(r#"{"points":[],"lines":[]}"#).unwrap();
        assert!(empty.points.is_empty() && empty.lines.is_empty());
    }

    #[test]
    fn malformed_features_rejected_with_diagnostics() {
        let err = parse_features("{").unwrap_err();
        assert_eq!(err.category(), "format");
        let err = parse_features(r#"{"points":[[1,2,-3]],"lines":[]}"#).unwrap_err();
        assert_eq!(err.category(), "format");
        assert!(err.to_string().contains("points[0]"), "{err}");
        let err =
            parse_features(r#"{"points":[],"lines":[[0,0,1,1,1,-2]]}"#).unwrap_err();
        assert!(err.to_string().contains("lines[0]"), "{err}");
    }

    #[test]
    fn render_constant_and_two_value_maps() {
        let dir = tmp();
        let path = dir.path().join("r.png");
        let constant = DepthMap::new(3, 2, vec![2.0, 2.0, 2.0, 2.0, 0.0, 2.0]).unwrap();
        render_depth_png(&path, &constant).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        let mut colors: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 2, "uniform color plus black, got {colors:?}");
        assert!(colors.contains(&[0, 0, 0]));

        let two = DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        render_depth_png(&path, &two).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        let mut colors: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 2);
    }

    fn golden_fixture() -> DepthMap {
        let mut data = Vec::new();
        for i in 0..24 {
            data.push(match i {
                0 | 23 => 0.0,
                _ => 1.0 + 0.1 * i as f64,
            });
        }
        DepthMap::new(6, 4, data).unwrap()
    }

    fn golden_path() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/depth_render.png")
    }

    #[test]
    fn render_matches_golden_file() {
        let dir = tmp();
        let path = dir.path().join("g.png");
        render_depth_png(&path, &golden_fixture()).unwrap();
        let expect = fs::read(golden_path()).expect("golden file present in repo");
        assert_eq!(fs::read(&path).unwrap(), expect);
    }

    #[test]
    #[ignore = "writes the committed golden file; run once when the colormap changes"]
    fn regenerate_render_golden() {
        fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
        render_depth_png(&golden_path(), &golden_fixture()).unwrap();
    }

    #[test]
    fn mdr_params_round_trip_bit_exactly() {
        let dir = tmp();
        let path = dir.path().join("mdr.params");
        let params = MdrParams::seeded(42);
        write_mdr_params(&path, &params).unwrap();
        let back = read_mdr_params(&path).unwrap();
        assert_eq!(params.flat(), back.flat());
    }

    #[test]
    fn mdr_params_sidecar_mismatch_rejected() {
        let dir = tmp();
        let path = dir.path().join("mdr.params");
        write_mdr_params(&path, &MdrParams::seeded(1)).unwrap();
        let sc = sidecar_path(&path);
        let mangled = fs::read_to_string(&sc).unwrap().replace("image1", "imageX");
        fs::write(&sc, mangled).unwrap();
        assert_eq!(read_mdr_params(&path).unwrap_err().category(), "format");

        // Restore the sidecar but truncate the binary.
        write_mdr_params(&path, &MdrParams::seeded(1)).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert_eq!(read_mdr_params(&path).unwrap_err().category(), "format");
    }

    #[test]
    fn pose_round_trips() {
        let dir = tmp();
        let path = dir.path().join("pose.json");
        let pose = Pose::from_axis_angle([0.0, 1.0, 0.0], 0.3, [0.1, -0.2, 0.05]).unwrap();
        write_pose(&path, &pose).unwrap();
        let back = read_pose(&path).unwrap();
        assert_eq!(pose.rotation(), back.rotation());
        assert_eq!(pose.translation(), back.translation());
    }

    #[test]
    fn manifest_round_trip_and_version_check() {
        let dir = tmp();
        let path = dir.path().join("manifest.json");
        let k = Intrinsics::new(300.0, 300.0, 31.5, 23.5, 64, 48).unwrap();
        let mut m = DatasetManifest::new(k);
        m.frames.push(FrameRecord {
            image: "frames/000/image.png".into(),
            gt_depth: Some("frames/000/gt.png".into()),
            features: "frames/000/features.json".into(),
            pose: "frames/000/pose.json".into(),
        });
        m.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back.frames.len(), 1);
        assert_eq!(back.frames[0].image, "frames/000/image.png");
        assert_eq!(back.depth_scale, DEPTH_UNIT_SCALE);

        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
        fs::write(&path, text).unwrap();
        assert_eq!(DatasetManifest::read(&path).unwrap_err().category(), "format");
    }

    #[test]
    fn image_png_round_trips_at_8_bits() {
        let dir = tmp();
        let path = dir.path().join("img.png");
        let img = ImageBuffer::from_fn(5, 4, 3, |x, y, c| {
            ((x * 7 + y * 13 + c * 29) % 256) as f64 / 255.0
        })
        .unwrap();
        write_image_png(&path, &img).unwrap();
        let back = read_image_png(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(img.data(), back.data());
    }

    #[test]
    fn load_frame_checks_dimension_agreement() {
        let dir = tmp();
        let root = dir.path();
        fs::create_dir_all(root.join("f")).unwrap();
        let img = ImageBuffer::filled(8, 6, 3, 0.5).unwrap();
        write_image_png(&root.join("f/image.png"), &img).unwrap();
        let depth = DepthMap::new(4, 4, vec![1.0; 16]).unwrap();
        write_depth_png(&root.join("f/gt.png"), &depth).unwrap();
        let features = FeatureSet::new(
            vec![PointFeature::new(1.0, 1.0, 2.0).unwrap()],
            vec![],
        );
        write_features(&root.join("f/features.json"), &features).unwrap();
        write_pose(&root.join("f/pose.json"), &Pose::identity()).unwrap();
        let rec = FrameRecord {
            image: "f/image.png".into(),
            gt_depth: Some("f/gt.png".into()),
            features: "f/features.json".into(),
            pose: "f/pose.json".into(),
        };
        let err = load_frame(root, &rec).unwrap_err();
        assert_eq!(err.category(), "format");

        let rec_ok = FrameRecord { gt_depth: None, ..rec };
        let frame = load_frame(root, &rec_ok).unwrap();
        assert_eq!(frame.image.width(), 8);
        assert!(frame.gt_depth.is_none());
    }
}

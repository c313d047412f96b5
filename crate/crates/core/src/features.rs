//! Sparse visual features with metric depth: points and straight line
//! segments in image coordinates, as produced by a feature-based tracking
//! front end.

use crate::{Error, Result};

/// A single tracked point with its depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFeature {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl PointFeature {
    pub fn new(u: f64, v: f64, z: f64) -> Result<Self> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point feature coordinates must be finite, got ({u}, {v})"
            )));
        }
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidInput(format!(
                "point feature depth must be positive, got {z}"
            )));
        }
        Ok(PointFeature { u, v, z })
    }
}

/// A tracked line segment with depths at both endpoints; depth varies
/// linearly along the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFeature {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub z_start: f64,
    pub z_end: f64,
}

impl LineFeature {
    pub fn new(start: [f64; 2], end: [f64; 2], z_start: f64, z_end: f64) -> Result<Self> {
        if start.iter().chain(end.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "line feature endpoints must be finite".into(),
            ));
        }
        if start == end {
            return Err(Error::InvalidInput(format!(
                "line feature endpoints must differ, both are ({}, {})",
                start[0], start[1]
            )));
        }
        if !(z_start.is_finite() && z_start > 0.0 && z_end.is_finite() && z_end > 0.0) {
            return Err(Error::InvalidInput(format!(
                "line feature depths must be positive, got {z_start} and {z_end}"
            )));
        }
        Ok(LineFeature {
            start,
            end,
            z_start,
            z_end,
        })
    }

    /// Point and depth at parameter `t` in `[0, 1]` along the segment.
    pub fn at(&self, t: f64) -> ([f64; 2], f64) {
        (
            [
                self.start[0] + t * (self.end[0] - self.start[0]),
                self.start[1] + t * (self.end[1] - self.start[1]),
            ],
            self.z_start + t * (self.z_end - self.z_start),
        )
    }

    /// Segment length in pixels.
    pub fn length(&self) -> f64 {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        (dx * dx + dy * dy).sqrt()
    }
}

/// All features observed in one frame. May be empty; triangulation requires
/// at least three distinct sites and rejects smaller sets itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub points: Vec<PointFeature>,
    pub lines: Vec<LineFeature>,
}

impl FeatureSet {
    pub fn new(points: Vec<PointFeature>, lines: Vec<LineFeature>) -> Self {
        FeatureSet { points, lines }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.lines.is_empty()
    }

    /// Total feature count (each line counts once).
    pub fn len(&self) -> usize {
        self.points.len() + self.lines.len()
    }

    /// Checks that every coordinate lies inside `[0, w-1] x [0, h-1]`.
    pub fn check_in_bounds(&self, width: usize, height: usize) -> Result<()> {
        let u_max = (width - 1) as f64;
        let v_max = (height - 1) as f64;
        let ok = |u: f64, v: f64| u >= 0.0 && v >= 0.0 && u <= u_max && v <= v_max;
        for (i, p) in self.points.iter().enumerate() {
            if !ok(p.u, p.v) {
                return Err(Error::InvalidInput(format!(
                    "point feature {i} at ({}, {}) outside {width}x{height} image",
                    p.u, p.v
                )));
            }
        }
        for (i, l) in self.lines.iter().enumerate() {
            if !ok(l.start[0], l.start[1]) || !ok(l.end[0], l.end[1]) {
                return Err(Error::InvalidInput(format!(
                    "line feature {i} outside {width}x{height} image"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_validation() {
        assert!(PointFeature::new(1.0, 2.0, 3.0).is_ok());
        assert!(PointFeature::new(f64::NAN, 2.0, 3.0).is_err());
        assert!(PointFeature::new(1.0, 2.0, 0.0).is_err());
        assert!(PointFeature::new(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn line_validation_and_interpolation() {
        let l = LineFeature::new([0.0, 0.0], [4.0, 0.0], 1.0, 3.0).unwrap();
        let (p, z) = l.at(0.5);
        assert_eq!(p, [2.0, 0.0]);
        assert_eq!(z, 2.0);
        assert_eq!(l.length(), 4.0);
        assert!(LineFeature::new([1.0, 1.0], [1.0, 1.0], 1.0, 1.0).is_err());
        assert!(LineFeature::new([0.0, 0.0], [1.0, 0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn bounds_check() {
        let fs = FeatureSet::new(
            vec![PointFeature::new(639.0, 479.0, 1.0).unwrap()],
            vec![LineFeature::new([0.0, 0.0], [10.0, 10.0], 1.0, 2.0).unwrap()],
        );
        assert!(fs.check_in_bounds(640, 480).is_ok());
        assert!(fs.check_in_bounds(639, 480).is_err());
    }
}

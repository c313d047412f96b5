//! Raster containers: multi-channel intensity images, metric depth maps, and
//! boolean validity masks. All are row-major; image data is channel
//! interleaved (`(y * width + x) * channels + c`).

use crate::{Error, Result};

/// Multi-channel intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "image dims must be nonzero, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidInput(format!(
                "image intensities must be finite and in [0, 1], found {bad}"
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        ImageBuffer::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, c)`; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        ImageBuffer::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Collapses channels by arithmetic mean into a single-channel image.
    pub fn channel_mean(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height);
        for px in self.data.chunks_exact(self.channels) {
            data.push(px.iter().sum::<f64>() / self.channels as f64);
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear sample at a fractional pixel position. Returns one value per
    /// channel, or `None` if `(u, v)` falls outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<Vec<f64>> {
        if !(u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        // At the exact right/bottom border the fractional part is 0, so the
        // clamped second tap carries zero weight.
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let mut out = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let v00 = self.get(x0, y0, c);
            let v10 = self.get(x1, y0, c);
            let v01 = self.get(x0, y1, c);
            let v11 = self.get(x1, y1, c);
            let top = v00 + fx * (v10 - v00);
            let bot = v01 + fx * (v11 - v01);
            out.push(top + fy * (bot - top));
        }
        Some(out)
    }
}

/// Per-pixel metric depth in meters; `0.0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "depth map dims must be nonzero, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "depth data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "depths must be finite and non-negative (0 = invalid), found {bad}"
            )));
        }
        Ok(DepthMap {
            width,
            height,
            data,
        })
    }

    /// All-invalid map.
    pub fn zeros(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    /// Mask of pixels with positive depth.
    pub fn valid_mask(&self) -> ValidMask {
        ValidMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&d| d > 0.0).collect(),
        }
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    /// Fills every invalid pixel with the depth of its nearest valid pixel.
    ///
    /// "Nearest" is grid distance (4-connected breadth-first search from all
    /// valid pixels at once); among equally near sources the one reached
    /// first in row-major propagation order wins, which makes the result
    /// deterministic. Fails if the map contains no valid pixel at all.
    pub fn fill_nearest(&self) -> Result<DepthMap> {
        let mut out = self.data.clone();
        let mut queue = std::collections::VecDeque::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_valid(x, y) {
                    queue.push_back((x, y));
                }
            }
        }
        if queue.is_empty() {
            return Err(Error::Undefined(
                "cannot fill holes in an all-invalid depth map".into(),
            ));
        }
        while let Some((x, y)) = queue.pop_front() {
            let d = out[y * self.width + x];
            let mut visit = |nx: usize, ny: usize, queue: &mut std::collections::VecDeque<_>| {
                let i = ny * self.width + nx;
                if out[i] == 0.0 {
                    out[i] = d;
                    queue.push_back((nx, ny));
                }
            };
            if x > 0 {
                visit(x - 1, y, &mut queue);
            }
            if x + 1 < self.width {
                visit(x + 1, y, &mut queue);
            }
            if y > 0 {
                visit(x, y - 1, &mut queue);
            }
            if y + 1 < self.height {
                visit(x, y + 1, &mut queue);
            }
        }
        DepthMap::new(self.width, self.height, out)
    }
}

/// Per-pixel boolean validity companion to a [`DepthMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mask length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(ValidMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_validation() {
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0, 0.5, 1.0, 0.25]).is_ok());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0, 0.5, 1.5, 0.0]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ImageBuffer::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn bilinear_interpolates_and_respects_bounds() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(img.sample_bilinear(0.5, 0.5).unwrap()[0], 0.5);
        assert_eq!(img.sample_bilinear(0.0, 0.0).unwrap()[0], 0.0);
        assert_eq!(img.sample_bilinear(1.0, 1.0).unwrap()[0], 1.0);
        assert!(img.sample_bilinear(-0.001, 0.0).is_none());
        assert!(img.sample_bilinear(1.001, 0.0).is_none());
    }

    #[test]
    fn channel_mean_reduces() {
        let img = ImageBuffer::new(1, 1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let m = img.channel_mean();
        assert_eq!(m.channels(), 1);
        assert!((m.get(0, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_validation_and_mask() {
        let d = DepthMap::new(2, 2, vec![0.0, 1.0, 2.5, 0.0]).unwrap();
        assert_eq!(d.valid_count(), 2);
        let m = d.valid_mask();
        assert_eq!(m.data(), &[false, true, true, false]);
        assert!(DepthMap::new(2, 2, vec![-1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(DepthMap::new(2, 2, vec![f64::INFINITY, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn fill_nearest_copies_closest_valid_value() {
        // Single valid pixel floods everything.
        let mut d = DepthMap::zeros(5, 4);
        d.set(2, 1, 3.0);
        let f = d.fill_nearest().unwrap();
        assert!(f.data().iter().all(|&v| v == 3.0));

        // Two sources: each pixel takes the closer one; midline resolved
        // deterministically.
        let mut d = DepthMap::zeros(7, 1);
        d.set(0, 0, 1.0);
        d.set(6, 0, 9.0);
        let f = d.fill_nearest().unwrap();
        assert_eq!(f.data()[..3], [1.0, 1.0, 1.0]);
        assert_eq!(f.data()[4..], [9.0, 9.0, 9.0]);

        assert!(DepthMap::zeros(3, 3).fill_nearest().is_err());
    }

    #[test]
    fn fill_nearest_is_deterministic() {
        let mut d = DepthMap::zeros(16, 16);
        d.set(3, 3, 1.0);
        d.set(12, 3, 2.0);
        d.set(8, 14, 3.0);
        let a = d.fill_nearest().unwrap();
        let b = d.fill_nearest().unwrap();
        assert_eq!(a, b);
    }
}

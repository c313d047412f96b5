//! Feature-map primitives for the refinement network: 3x3 same-padding
//! convolution, ELU, complementary min/max pooling, and bilinear x2
//! upsampling, each with a matching reverse-mode backward.
//!
//! Feature maps are planar `[channel][row][column]` f64 buffers. Everything
//! here is scalar loops in fixed order, so forward and backward results are
//! bit-stable.

use crate::{Error, Result};

/// Planar multi-channel feature map.
#[derive(Debug, Clone)]
pub(crate) struct FeatMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatMap {
    pub fn zeros(c: usize, h: usize, w: usize) -> FeatMap {
        FeatMap { c, h, w, data: vec![0.0; c * h * w] }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Channel-concatenates maps of identical spatial dims.
    pub fn concat(parts: &[&FeatMap]) -> FeatMap {
        let (h, w) = (parts[0].h, parts[0].w);
        let c: usize = parts.iter().map(|p| p.c).sum();
        let mut data = Vec::with_capacity(c * h * w);
        for p in parts {
            debug_assert!(p.h == h && p.w == w);
            data.extend_from_slice(&p.data);
        }
        FeatMap { c, h, w, data }
    }

    /// Splits a gradient of a concatenation back into per-part gradients
    /// with the given channel counts.
    pub fn split(&self, channels: &[usize]) -> Vec<FeatMap> {
        debug_assert_eq!(channels.iter().sum::<usize>(), self.c);
        let plane = self.h * self.w;
        let mut out = Vec::with_capacity(channels.len());
        let mut offset = 0;
        for &c in channels {
            out.push(FeatMap {
                c,
                h: self.h,
                w: self.w,
                data: self.data[offset..offset + c * plane].to_vec(),
            });
            offset += c * plane;
        }
        out
    }
}

/// 3x3 convolution with zero padding 1, preserving spatial dims.
///
/// Weights are `[outC][inC][ky][kx]` row-major; one bias per output channel.
pub(crate) fn conv3x3(input: &FeatMap, w: &[f64], b: &[f64], out_c: usize) -> FeatMap {
    debug_assert_eq!(w.len(), out_c * input.c * 9);
    debug_assert_eq!(b.len(), out_c);
    let mut out = FeatMap::zeros(out_c, input.h, input.w);
    for oc in 0..out_c {
        for y in 0..input.h {
            for x in 0..input.w {
                let mut acc = b[oc];
                for ic in 0..input.c {
                    for ky in 0..3usize {
                        let yy = y as isize + ky as isize - 1;
                        if yy < 0 || yy >= input.h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let xx = x as isize + kx as isize - 1;
                            if xx < 0 || xx >= input.w as isize {
                                continue;
                            }
                            acc += w[((oc * input.c + ic) * 3 + ky) * 3 + kx]
                                * input.get(ic, yy as usize, xx as usize);
                        }
                    }
                }
                out.set(oc, y, x, acc);
            }
        }
    }
    out
}

/// Backward of [`conv3x3`]: gradients for the input, the weights, and the
/// biases given the upstream output gradient.
pub(crate) fn conv3x3_backward(
    input: &FeatMap,
    w: &[f64],
    out_c: usize,
    dout: &FeatMap,
) -> (FeatMap, Vec<f64>, Vec<f64>) {
    let mut dinput = FeatMap::zeros(input.c, input.h, input.w);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; out_c];
    for oc in 0..out_c {
        for y in 0..input.h {
            for x in 0..input.w {
                let g = dout.get(oc, y, x);
                if g == 0.0 {
                    continue;
                }
                db[oc] += g;
                for ic in 0..input.c {
                    for ky in 0..3usize {
                        let yy = y as isize + ky as isize - 1;
                        if yy < 0 || yy >= input.h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let xx = x as isize + kx as isize - 1;
                            if xx < 0 || xx >= input.w as isize {
                                continue;
                            }
                            let wi = ((oc * input.c + ic) * 3 + ky) * 3 + kx;
                            let ii = dinput.idx(ic, yy as usize, xx as usize);
                            dw[wi] += g * input.data[ii];
                            dinput.data[ii] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
    (dinput, dw, db)
}

/// Exponential linear unit with unit slope, applied elementwise. Smooth at
/// zero up to its first derivative, which keeps central finite differences
/// well behaved.
pub(crate) fn elu(input: &FeatMap) -> FeatMap {
    let mut out = input.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = v.exp_m1();
        }
    }
    out
}

/// Backward of [`elu`] given the pre-activation map.
pub(crate) fn elu_backward(pre: &FeatMap, dout: &FeatMap) -> FeatMap {
    let mut dpre = dout.clone();
    for (d, p) in dpre.data.iter_mut().zip(&pre.data) {
        if *p < 0.0 {
            *d *= p.exp();
        }
    }
    dpre
}

/// Complementary 2x2 stride-2 pooling: output channel `2c` is the max pool
/// of input channel `c` and channel `2c+1` is its min pool, halving the
/// spatial dims and doubling the channel count.
///
/// Also returns, per output element, the flat input index it came from, for
/// the backward routing. Ties resolve to the first element in row-major
/// window order.
pub(crate) fn parallel_pool(input: &FeatMap) -> Result<(FeatMap, Vec<usize>)> {
    if input.h % 2 != 0 || input.w % 2 != 0 {
        return Err(Error::Shape(format!(
            "parallel pooling needs even spatial dims, got {}x{}",
            input.w, input.h
        )));
    }
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = FeatMap::zeros(input.c * 2, oh, ow);
    let mut route = vec![0usize; out.data.len()];
    for c in 0..input.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut max_v = f64::NEG_INFINITY;
                let mut min_v = f64::INFINITY;
                let mut max_i = 0;
                let mut min_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = input.idx(c, oy * 2 + dy, ox * 2 + dx);
                        let v = input.data[i];
                        if v > max_v {
                            max_v = v;
                            max_i = i;
                        }
                        if v < min_v {
                            min_v = v;
                            min_i = i;
                        }
                    }
                }
                let mi = out.idx(2 * c, oy, ox);
                out.data[mi] = max_v;
                route[mi] = max_i;
                let ni = out.idx(2 * c + 1, oy, ox);
                out.data[ni] = min_v;
                route[ni] = min_i;
            }
        }
    }
    Ok((out, route))
}

/// Backward of [`parallel_pool`]: routes each output gradient to the input
/// element that produced it.
pub(crate) fn parallel_pool_backward(
    input_shape: (usize, usize, usize),
    route: &[usize],
    dout: &FeatMap,
) -> FeatMap {
    let (c, h, w) = input_shape;
    let mut dinput = FeatMap::zeros(c, h, w);
    for (g, src) in dout.data.iter().zip(route) {
        dinput.data[*src] += g;
    }
    dinput
}

/// Sampling tap for one upsampled output coordinate: two source indices and
/// the weight of the second one.
#[inline]
fn up_taps(out_i: usize, in_len: usize) -> (usize, usize, f64) {
    let src = (out_i as f64 + 0.5) / 2.0 - 0.5;
    let floor = src.floor();
    let t = src - floor;
    let i0 = (floor.max(0.0) as usize).min(in_len - 1);
    let i1 = ((floor as isize + 1).max(0) as usize).min(in_len - 1);
    (i0, i1, t)
}

/// Bilinear x2 upsampling with borders clamped, doubling both spatial dims.
pub(crate) fn upsample2x(input: &FeatMap) -> FeatMap {
    let (oh, ow) = (input.h * 2, input.w * 2);
    let mut out = FeatMap::zeros(input.c, oh, ow);
    for c in 0..input.c {
        for oy in 0..oh {
            let (y0, y1, ty) = up_taps(oy, input.h);
            for ox in 0..ow {
                let (x0, x1, tx) = up_taps(ox, input.w);
                let v00 = input.get(c, y0, x0);
                let v01 = input.get(c, y0, x1);
                let v10 = input.get(c, y1, x0);
                let v11 = input.get(c, y1, x1);
                let v = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01)
                    + ty * ((1.0 - tx) * v10 + tx * v11);
                out.set(c, oy, ox, v);
            }
        }
    }
    out
}

/// Backward of [`upsample2x`]: the transpose of the (linear) sampling map.
pub(crate) fn upsample2x_backward(input_shape: (usize, usize, usize), dout: &FeatMap) -> FeatMap {
    let (c, h, w) = input_shape;
    let mut dinput = FeatMap::zeros(c, h, w);
    for ch in 0..c {
        for oy in 0..dout.h {
            let (y0, y1, ty) = up_taps(oy, h);
            for ox in 0..dout.w {
                let (x0, x1, tx) = up_taps(ox, w);
                let g = dout.get(ch, oy, ox);
                if g == 0.0 {
                    continue;
                }
                let (i00, i01) = (dinput.idx(ch, y0, x0), dinput.idx(ch, y0, x1));
                let (i10, i11) = (dinput.idx(ch, y1, x0), dinput.idx(ch, y1, x1));
                dinput.data[i00] += g * (1.0 - ty) * (1.0 - tx);
                dinput.data[i01] += g * (1.0 - ty) * tx;
                dinput.data[i10] += g * ty * (1.0 - tx);
                dinput.data[i11] += g * ty * tx;
            }
        }
    }
    dinput
}

/// Numerically stable softplus, strictly positive for all finite inputs.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of softplus: the logistic sigmoid.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

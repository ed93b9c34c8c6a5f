//! Forward and backward numeric kernels behind the graph operations.
//!
//! Shapes are validated by the graph before these are called.

use crate::tensor::Tensor;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

/// Gradients of `a·b` given the upstream gradient `g` of shape `[m, n]`.
pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    let mut ga = vec![0.0; m * k];
    let mut gb = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
            let av = ad[i * k + p];
            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    (
        Tensor::from_parts(vec![m, k], ga),
        Tensor::from_parts(vec![k, n], gb),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    /// Input row/column for an output position and kernel offset, if it lands
    /// inside the unpadded input.
    #[inline]
    fn source(&self, out: usize, offset: usize, extent: usize) -> Option<usize> {
        let pos = out * self.stride + offset;
        (pos >= self.pad && pos - self.pad < extent).then(|| pos - self.pad)
    }
}

pub(crate) fn conv2d(input: &Tensor, kernel: &Tensor, geo: &ConvGeometry) -> Tensor {
    let (id, kd) = (input.data(), kernel.data());
    let mut out = vec![0.0; geo.cout * geo.oh * geo.ow];
    for co in 0..geo.cout {
        let plane = &mut out[co * geo.oh * geo.ow..(co + 1) * geo.oh * geo.ow];
        for ci in 0..geo.cin {
            let src = &id[ci * geo.h * geo.w..(ci + 1) * geo.h * geo.w];
            for ky in 0..geo.kh {
                for kx in 0..geo.kw {
                    let kv = kd[((co * geo.cin + ci) * geo.kh + ky) * geo.kw + kx];
                    for oy in 0..geo.oh {
                        let Some(iy) = geo.source(oy, ky, geo.h) else {
                            continue;
                        };
                        for ox in 0..geo.ow {
                            if let Some(ix) = geo.source(ox, kx, geo.w) {
                                plane[oy * geo.ow + ox] += kv * src[iy * geo.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![geo.cout, geo.oh, geo.ow], out)
}

/// Returns (input gradient if requested, kernel gradient if requested).
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    g: &Tensor,
    geo: &ConvGeometry,
    want_input: bool,
    want_kernel: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (id, kd, gd) = (input.data(), kernel.data(), g.data());
    let mut gi = want_input.then(|| vec![0.0; id.len()]);
    let mut gk = want_kernel.then(|| vec![0.0; kd.len()]);
    for co in 0..geo.cout {
        let gplane = &gd[co * geo.oh * geo.ow..(co + 1) * geo.oh * geo.ow];
        for ci in 0..geo.cin {
            let base = ci * geo.h * geo.w;
            for ky in 0..geo.kh {
                for kx in 0..geo.kw {
                    let kidx = ((co * geo.cin + ci) * geo.kh + ky) * geo.kw + kx;
                    let kv = kd[kidx];
                    let mut acc = 0.0;
                    for oy in 0..geo.oh {
                        let Some(iy) = geo.source(oy, ky, geo.h) else {
                            continue;
                        };
                        for ox in 0..geo.ow {
                            if let Some(ix) = geo.source(ox, kx, geo.w) {
                                let gv = gplane[oy * geo.ow + ox];
                                let src = base + iy * geo.w + ix;
                                acc += gv * id[src];
                                if let Some(gi) = gi.as_mut() {
                                    gi[src] += gv * kv;
                                }
                            }
                        }
                    }
                    if let Some(gk) = gk.as_mut() {
                        gk[kidx] += acc;
                    }
                }
            }
        }
    }
    (
        gi.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        gk.map(|d| Tensor::from_parts(kernel.shape().to_vec(), d)),
    )
}

pub(crate) fn pool_avg(input: &Tensor, window: usize) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / window, w / window);
    let scale = 1.0 / (window * window) as f64;
    let d = input.data();
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for dy in 0..window {
                    for dx in 0..window {
                        s += d[(ch * h + oy * window + dy) * w + ox * window + dx];
                    }
                }
                out[(ch * oh + oy) * ow + ox] = s * scale;
            }
        }
    }
    Tensor::from_parts(vec![c, oh, ow], out)
}

pub(crate) fn pool_avg_backward(input_shape: &[usize], g: &Tensor, window: usize) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h / window, w / window);
    let scale = 1.0 / (window * window) as f64;
    let gd = g.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * h + y) * w + x] = gd[(ch * oh + y / window) * ow + x / window] * scale;
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), out)
}

pub(crate) fn global_pool_avg(input: &Tensor) -> Tensor {
    let c = input.shape()[0];
    let plane = input.len() / c;
    let data = input
        .data()
        .chunks(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::from_parts(vec![c], data)
}

/// Per-element stable binary cross-entropy with logits:
/// `max(z, 0) - z·t + ln(1 + exp(-|z|))`.
pub(crate) fn bce_term(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

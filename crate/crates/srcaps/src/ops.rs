//! Numeric kernels over [`Tensor4`]. These are plain value-level functions;
//! the gradient tape wraps them and the evaluation metrics reuse them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Output spatial extent of a convolution along one axis.
pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::usage(format!(
            "input extent {input} with padding {pad} is smaller than kernel {k}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// 2-D cross-correlation with zero padding, the standard convolution layer.
///
/// `x` is `(n, in_ch, h, w)`, `kernel` is `(out_ch, in_ch, k, k)`, `bias`
/// holds one value per output channel when present.
pub fn conv2d<T: Scalar>(
    x: &Tensor4<T>,
    kernel: &Tensor4<T>,
    bias: Option<&[T]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor4<T>> {
    let xs = x.shape();
    let ks = kernel.shape();
    if xs.ch != ks.ch {
        return Err(Error::config(format!(
            "conv2d channel mismatch: input has {} channels, kernel expects {} (input {}, kernel {})",
            xs.ch, ks.ch, xs, ks
        )));
    }
    if ks.h != ks.w {
        return Err(Error::config(format!("conv2d kernel must be square, got {ks}")));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be positive".to_string()));
    }
    if let Some(b) = bias {
        if b.len() != ks.n {
            return Err(Error::config(format!(
                "conv2d bias length {} does not match {} output channels",
                b.len(),
                ks.n
            )));
        }
    }
    if !kernel.is_all_finite() {
        return Err(Error::numeric("conv2d kernel contains non-finite values"));
    }
    let k = ks.h;
    let oh = conv_out_dim(xs.h, k, stride, pad)?;
    let ow = conv_out_dim(xs.w, k, stride, pad)?;
    let out_shape = Shape4::new(xs.n, ks.n, oh, ow);
    let mut out = vec![T::zero(); out_shape.count()];

    for b in 0..xs.n {
        for oc in 0..ks.n {
            let out_plane = &mut out[(b * ks.n + oc) * oh * ow..][..oh * ow];
            if let Some(bias) = bias {
                for v in out_plane.iter_mut() {
                    *v = bias[oc];
                }
            }
            for ic in 0..xs.ch {
                let x_plane = x.plane(b, ic);
                let k_plane = kernel.plane(oc, ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = k_plane[ky * k + kx];
                        accumulate_shifted(
                            out_plane, x_plane, wv, oh, ow, xs.h, xs.w, stride, pad, ky, kx,
                        );
                    }
                }
            }
        }
    }
    Tensor4::new(out_shape, out)
}

/// `out[oy, ox] += wv * x[oy*stride + ky - pad, ox*stride + kx - pad]` over
/// the valid range. The stride-1 case runs on contiguous slices.
#[inline]
#[allow(clippy::too_many_arguments)]
fn accumulate_shifted<T: Scalar>(
    out: &mut [T],
    x: &[T],
    wv: T,
    oh: usize,
    ow: usize,
    ih: usize,
    iw: usize,
    stride: usize,
    pad: usize,
    ky: usize,
    kx: usize,
) {
    if wv == T::zero() {
        return;
    }
    for oy in 0..oh {
        let iy = (oy * stride + ky) as isize - pad as isize;
        if iy < 0 || iy >= ih as isize {
            continue;
        }
        let x_row = &x[iy as usize * iw..][..iw];
        let out_row = &mut out[oy * ow..][..ow];
        if stride == 1 {
            // ix = ox + kx - pad must lie in [0, iw)
            let shift = kx as isize - pad as isize;
            let ox_lo = (-shift).max(0) as usize;
            let ox_hi = ((iw as isize - shift).min(ow as isize)).max(0) as usize;
            if ox_lo >= ox_hi {
                continue;
            }
            let x_seg = &x_row[(ox_lo as isize + shift) as usize..][..ox_hi - ox_lo];
            for (o, &xv) in out_row[ox_lo..ox_hi].iter_mut().zip(x_seg) {
                *o = *o + wv * xv;
            }
        } else {
            for (ox, o) in out_row.iter_mut().enumerate() {
                let ix = (ox * stride + kx) as isize - pad as isize;
                if ix >= 0 && ix < iw as isize {
                    *o = *o + wv * x_row[ix as usize];
                }
            }
        }
    }
}

/// Gradient of [`conv2d`] with respect to its input.
pub fn conv2d_grad_input<T: Scalar>(
    grad_out: &Tensor4<T>,
    kernel: &Tensor4<T>,
    input_shape: Shape4,
    stride: usize,
    pad: usize,
) -> Tensor4<T> {
    let gs = grad_out.shape();
    let ks = kernel.shape();
    let k = ks.h;
    let mut gx = vec![T::zero(); input_shape.count()];
    let plane = input_shape.h * input_shape.w;
    for b in 0..gs.n {
        for oc in 0..gs.ch {
            let g_plane = grad_out.plane(b, oc);
            for ic in 0..input_shape.ch {
                let gx_plane = &mut gx[(b * input_shape.ch + ic) * plane..][..plane];
                let k_plane = kernel.plane(oc, ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = k_plane[ky * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        scatter_shifted(
                            gx_plane,
                            g_plane,
                            wv,
                            gs.h,
                            gs.w,
                            input_shape.h,
                            input_shape.w,
                            stride,
                            pad,
                            ky,
                            kx,
                        );
                    }
                }
            }
        }
    }
    Tensor4::new(input_shape, gx).expect("shape consistent by construction")
}

/// `gx[oy*stride + ky - pad, ox*stride + kx - pad] += wv * g[oy, ox]`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn scatter_shifted<T: Scalar>(
    gx: &mut [T],
    g: &[T],
    wv: T,
    oh: usize,
    ow: usize,
    ih: usize,
    iw: usize,
    stride: usize,
    pad: usize,
    ky: usize,
    kx: usize,
) {
    for oy in 0..oh {
        let iy = (oy * stride + ky) as isize - pad as isize;
        if iy < 0 || iy >= ih as isize {
            continue;
        }
        let gx_row = &mut gx[iy as usize * iw..][..iw];
        let g_row = &g[oy * ow..][..ow];
        if stride == 1 {
            let shift = kx as isize - pad as isize;
            let ox_lo = (-shift).max(0) as usize;
            let ox_hi = ((iw as isize - shift).min(ow as isize)).max(0) as usize;
            if ox_lo >= ox_hi {
                continue;
            }
            let gx_seg = &mut gx_row[(ox_lo as isize + shift) as usize..][..ox_hi - ox_lo];
            for (d, &gv) in gx_seg.iter_mut().zip(&g_row[ox_lo..ox_hi]) {
                *d = *d + wv * gv;
            }
        } else {
            for (ox, &gv) in g_row.iter().enumerate() {
                let ix = (ox * stride + kx) as isize - pad as isize;
                if ix >= 0 && ix < iw as isize {
                    gx_row[ix as usize] = gx_row[ix as usize] + wv * gv;
                }
            }
        }
    }
}

/// Gradient of [`conv2d`] with respect to the kernel.
pub fn conv2d_grad_kernel<T: Scalar>(
    grad_out: &Tensor4<T>,
    x: &Tensor4<T>,
    kernel_shape: Shape4,
    stride: usize,
    pad: usize,
) -> Tensor4<T> {
    let gs = grad_out.shape();
    let xs = x.shape();
    let k = kernel_shape.h;
    let mut gw = vec![T::zero(); kernel_shape.count()];
    for b in 0..gs.n {
        for oc in 0..gs.ch {
            let g_plane = grad_out.plane(b, oc);
            for ic in 0..xs.ch {
                let x_plane = x.plane(b, ic);
                let gw_plane = &mut gw[(oc * xs.ch + ic) * k * k..][..k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = T::zero();
                        for oy in 0..gs.h {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= xs.h as isize {
                                continue;
                            }
                            let x_row = &x_plane[iy as usize * xs.w..][..xs.w];
                            let g_row = &g_plane[oy * gs.w..][..gs.w];
                            if stride == 1 {
                                let shift = kx as isize - pad as isize;
                                let ox_lo = (-shift).max(0) as usize;
                                let ox_hi =
                                    ((xs.w as isize - shift).min(gs.w as isize)).max(0) as usize;
                                if ox_lo >= ox_hi {
                                    continue;
                                }
                                let x_seg = &x_row[(ox_lo as isize + shift) as usize..]
                                    [..ox_hi - ox_lo];
                                for (&gv, &xv) in g_row[ox_lo..ox_hi].iter().zip(x_seg) {
                                    acc = acc + gv * xv;
                                }
                            } else {
                                for (ox, &gv) in g_row.iter().enumerate() {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix >= 0 && ix < xs.w as isize {
                                        acc = acc + gv * x_row[ix as usize];
                                    }
                                }
                            }
                        }
                        gw_plane[ky * k + kx] = gw_plane[ky * k + kx] + acc;
                    }
                }
            }
        }
    }
    Tensor4::new(kernel_shape, gw).expect("shape consistent by construction")
}

/// Gradient of [`conv2d`] with respect to the per-output-channel bias.
pub fn conv2d_grad_bias<T: Scalar>(grad_out: &Tensor4<T>) -> Vec<T> {
    let gs = grad_out.shape();
    let mut gb = vec![T::zero(); gs.ch];
    for b in 0..gs.n {
        for (oc, g) in gb.iter_mut().enumerate() {
            for &v in grad_out.plane(b, oc) {
                *g = *g + v;
            }
        }
    }
    gb
}

/// Square filter window applied per channel (no cross-channel mixing).
#[derive(Clone, Debug)]
pub struct Window<T> {
    pub k: usize,
    pub weights: Vec<T>,
}

impl<T: Scalar> Window<T> {
    pub fn new(k: usize, weights: Vec<T>) -> Self {
        assert_eq!(weights.len(), k * k);
        Window { k, weights }
    }

    /// Normalized 2-D Gaussian, the SSIM window.
    pub fn gaussian(k: usize, sigma: f64) -> Self {
        let c = (k as f64 - 1.0) / 2.0;
        let mut w = Vec::with_capacity(k * k);
        let mut sum = 0.0;
        for y in 0..k {
            for x in 0..k {
                let dy = y as f64 - c;
                let dx = x as f64 - c;
                let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                sum += v;
                w.push(v);
            }
        }
        Window::new(k, w.into_iter().map(|v| T::of(v / sum)).collect())
    }

    pub fn sobel_x() -> Self {
        let w = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
        Window::new(3, w.iter().map(|&v| T::of(v)).collect())
    }

    pub fn sobel_y() -> Self {
        let w = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
        Window::new(3, w.iter().map(|&v| T::of(v)).collect())
    }
}

/// Per-channel valid-mode correlation with a fixed window. Output shrinks by
/// `k - 1` in each spatial dimension.
pub fn filter2d_valid<T: Scalar>(x: &Tensor4<T>, win: &Window<T>) -> Result<Tensor4<T>> {
    let xs = x.shape();
    let k = win.k;
    if xs.h < k || xs.w < k {
        return Err(Error::usage(format!(
            "image {}x{} is smaller than the {k}x{k} filter window",
            xs.h, xs.w
        )));
    }
    let oh = xs.h - k + 1;
    let ow = xs.w - k + 1;
    let out_shape = Shape4::new(xs.n, xs.ch, oh, ow);
    let mut out = vec![T::zero(); out_shape.count()];
    for b in 0..xs.n {
        for c in 0..xs.ch {
            let x_plane = x.plane(b, c);
            let out_plane = &mut out[(b * xs.ch + c) * oh * ow..][..oh * ow];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = win.weights[ky * k + kx];
                    for oy in 0..oh {
                        let x_seg = &x_plane[(oy + ky) * xs.w + kx..][..ow];
                        let out_row = &mut out_plane[oy * ow..][..ow];
                        for (o, &xv) in out_row.iter_mut().zip(x_seg) {
                            *o = *o + wv * xv;
                        }
                    }
                }
            }
        }
    }
    Tensor4::new(out_shape, out)
}

/// Adjoint of [`filter2d_valid`]: scatters the output gradient back onto the
/// input support.
pub fn filter2d_valid_grad<T: Scalar>(
    grad_out: &Tensor4<T>,
    win: &Window<T>,
    input_shape: Shape4,
) -> Tensor4<T> {
    let gs = grad_out.shape();
    let k = win.k;
    let mut gx = vec![T::zero(); input_shape.count()];
    let plane = input_shape.h * input_shape.w;
    for b in 0..gs.n {
        for c in 0..gs.ch {
            let g_plane = grad_out.plane(b, c);
            let gx_plane = &mut gx[(b * input_shape.ch + c) * plane..][..plane];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = win.weights[ky * k + kx];
                    for oy in 0..gs.h {
                        let g_row = &g_plane[oy * gs.w..][..gs.w];
                        let gx_seg = &mut gx_plane[(oy + ky) * input_shape.w + kx..][..gs.w];
                        for (d, &gv) in gx_seg.iter_mut().zip(g_row) {
                            *d = *d + wv * gv;
                        }
                    }
                }
            }
        }
    }
    Tensor4::new(input_shape, gx).expect("shape consistent by construction")
}

/// Edge-replicating pad by `p` pixels on every side.
pub fn pad_replicate<T: Scalar>(x: &Tensor4<T>, p: usize) -> Tensor4<T> {
    let xs = x.shape();
    let out_shape = Shape4::new(xs.n, xs.ch, xs.h + 2 * p, xs.w + 2 * p);
    Tensor4::from_fn(out_shape, |b, c, y, x_| {
        let sy = y.saturating_sub(p).min(xs.h - 1);
        let sx = x_.saturating_sub(p).min(xs.w - 1);
        x.at(b, c, sy, sx)
    })
}

/// Adjoint of [`pad_replicate`]: folds border gradients back onto the edge
/// pixels they were copied from.
pub fn pad_replicate_grad<T: Scalar>(
    grad_out: &Tensor4<T>,
    p: usize,
    input_shape: Shape4,
) -> Tensor4<T> {
    let gs = grad_out.shape();
    let mut gx = Tensor4::zeros(input_shape);
    {
        let data = gx.data_mut();
        for b in 0..gs.n {
            for c in 0..gs.ch {
                for y in 0..gs.h {
                    let sy = y.saturating_sub(p).min(input_shape.h - 1);
                    for x in 0..gs.w {
                        let sx = x.saturating_sub(p).min(input_shape.w - 1);
                        let i = ((b * input_shape.ch + c) * input_shape.h + sy) * input_shape.w + sx;
                        data[i] = data[i] + grad_out.at(b, c, y, x);
                    }
                }
            }
        }
    }
    gx
}

/// 2x2 mean pooling with stride 2; trailing odd rows/columns are dropped.
pub fn avg_pool2<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let xs = x.shape();
    if xs.h < 2 || xs.w < 2 {
        return Err(Error::usage(format!(
            "cannot halve a {}x{} image",
            xs.h, xs.w
        )));
    }
    let oh = xs.h / 2;
    let ow = xs.w / 2;
    let quarter = T::of(0.25);
    let out = Tensor4::from_fn(Shape4::new(xs.n, xs.ch, oh, ow), |b, c, y, x_| {
        let (sy, sx) = (2 * y, 2 * x_);
        (x.at(b, c, sy, sx) + x.at(b, c, sy, sx + 1) + x.at(b, c, sy + 1, sx)
            + x.at(b, c, sy + 1, sx + 1))
            * quarter
    });
    Ok(out)
}

pub fn avg_pool2_grad<T: Scalar>(grad_out: &Tensor4<T>, input_shape: Shape4) -> Tensor4<T> {
    let gs = grad_out.shape();
    let quarter = T::of(0.25);
    Tensor4::from_fn(input_shape, |b, c, y, x| {
        if y / 2 < gs.h && x / 2 < gs.w {
            grad_out.at(b, c, y / 2, x / 2) * quarter
        } else {
            T::zero()
        }
    })
}

/// Sub-pixel rearrangement: channel `c*r*r + dy*r + dx` at `(y, x)` moves to
/// channel `c` at `(r*y + dy, r*x + dx)`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let xs = x.shape();
    if r == 0 {
        return Err(Error::config("pixel_shuffle factor must be positive"));
    }
    if !xs.ch.is_multiple_of(r * r) {
        return Err(Error::config(format!(
            "pixel_shuffle: {} channels not divisible by r^2 = {}",
            xs.ch,
            r * r
        )));
    }
    let oc = xs.ch / (r * r);
    let out = Tensor4::from_fn(Shape4::new(xs.n, oc, xs.h * r, xs.w * r), |b, c, y, x_| {
        let (sy, dy) = (y / r, y % r);
        let (sx, dx) = (x_ / r, x_ % r);
        x.at(b, c * r * r + dy * r + dx, sy, sx)
    });
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its gradient.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let xs = x.shape();
    if !xs.h.is_multiple_of(r) || !xs.w.is_multiple_of(r) {
        return Err(Error::config(format!(
            "pixel_unshuffle: {}x{} not divisible by {r}",
            xs.h, xs.w
        )));
    }
    let out = Tensor4::from_fn(
        Shape4::new(xs.n, xs.ch * r * r, xs.h / r, xs.w / r),
        |b, c, y, x_| {
            let base = c / (r * r);
            let rem = c % (r * r);
            let (dy, dx) = (rem / r, rem % r);
            x.at(b, base, y * r + dy, x_ * r + dx)
        },
    );
    Ok(out)
}

/// Supported elementwise activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Relu,
    LeakyRelu,
    PRelu,
    Hardswish,
    Mish,
    TanhExp,
    /// Pass-through, used when an activation stage is disabled.
    Identity,
}

impl ActKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActKind::Relu),
            "leakyrelu" | "leaky_relu" => Ok(ActKind::LeakyRelu),
            "prelu" => Ok(ActKind::PRelu),
            "hardswish" => Ok(ActKind::Hardswish),
            "mish" => Ok(ActKind::Mish),
            "tanhexp" | "tanh_exp" => Ok(ActKind::TanhExp),
            "identity" | "none" => Ok(ActKind::Identity),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActKind::Relu => "relu",
            ActKind::LeakyRelu => "leakyrelu",
            ActKind::PRelu => "prelu",
            ActKind::Hardswish => "hardswish",
            ActKind::Mish => "mish",
            ActKind::TanhExp => "tanhexp",
            ActKind::Identity => "identity",
        }
    }

    /// Negative-side slope of the leaky variants. PReLU runs with its usual
    /// 0.25 initial slope kept fixed; the activation contract here is a pure
    /// elementwise map.
    fn slope(&self) -> f64 {
        match self {
            ActKind::LeakyRelu => 0.01,
            ActKind::PRelu => 0.25,
            _ => 0.0,
        }
    }

    pub fn value<T: Scalar>(&self, x: T) -> T {
        match self {
            ActKind::Identity => x,
            ActKind::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            ActKind::LeakyRelu | ActKind::PRelu => {
                if x > T::zero() {
                    x
                } else {
                    T::of(self.slope()) * x
                }
            }
            ActKind::Hardswish => {
                let three = T::of(3.0);
                if x <= -three {
                    T::zero()
                } else if x >= three {
                    x
                } else {
                    x * (x + three) / T::of(6.0)
                }
            }
            ActKind::Mish => x * softplus(x).tanh(),
            ActKind::TanhExp => x * x.exp().tanh(),
        }
    }

    /// Derivative with the subgradient at kinks fixed to the negative-side
    /// branch (0 for ReLU, matching the stated convention).
    pub fn deriv<T: Scalar>(&self, x: T) -> T {
        match self {
            ActKind::Identity => T::one(),
            ActKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActKind::LeakyRelu | ActKind::PRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of(self.slope())
                }
            }
            ActKind::Hardswish => {
                let three = T::of(3.0);
                if x <= -three {
                    T::zero()
                } else if x >= three {
                    T::one()
                } else {
                    (T::of(2.0) * x + three) / T::of(6.0)
                }
            }
            ActKind::Mish => {
                let sp = softplus(x);
                let t = sp.tanh();
                let sig = T::one() / (T::one() + (-x).exp());
                t + x * (T::one() - t * t) * sig
            }
            ActKind::TanhExp => {
                let e = x.exp();
                let t = e.tanh();
                t + x * e * (T::one() - t * t)
            }
        }
    }
}

/// Numerically safe log(1 + exp(x)).
pub fn softplus<T: Scalar>(x: T) -> T {
    let cap = T::of(30.0);
    if x > cap {
        x
    } else {
        x.exp().ln_1p()
    }
}

//! Independent naive implementations used as oracles by the integration
//! suites. These deliberately take the slow, definition-literal route and
//! share no code with the library's computation paths.

#![allow(dead_code)]

use rand::Rng;
use srcaps::ops::ActKind;
use srcaps::tensor::{Shape4, Tensor4};

pub type TensorD = Tensor4<f64>;

/// Definition-literal convolution: quadruple loop, zero padding.
pub fn naive_conv2d(
    x: &TensorD,
    w: &TensorD,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> TensorD {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    Tensor4::from_fn(Shape4::new(xs.n, ws.n, oh, ow), |b, oc, oy, ox| {
        let mut acc = bias.map(|bv| bv[oc]).unwrap_or(0.0);
        for ic in 0..xs.ch {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy >= 0 && iy < xs.h as isize && ix >= 0 && ix < xs.w as isize {
                        acc += x.at(b, ic, iy as usize, ix as usize) * w.at(oc, ic, ky, kx);
                    }
                }
            }
        }
        acc
    })
}

/// Definition-literal sub-pixel rearrangement.
pub fn naive_pixel_shuffle(x: &TensorD, r: usize) -> TensorD {
    let s = x.shape();
    let oc = s.ch / (r * r);
    let mut out = Tensor4::zeros(Shape4::new(s.n, oc, s.h * r, s.w * r));
    {
        let data = out.data_mut();
        let (oh, ow) = (s.h * r, s.w * r);
        for b in 0..s.n {
            for c in 0..oc {
                for y in 0..s.h {
                    for x_ in 0..s.w {
                        for dy in 0..r {
                            for dx in 0..r {
                                let src = x.at(b, c * r * r + dy * r + dx, y, x_);
                                let i = ((b * oc + c) * oh + (r * y + dy)) * ow + (r * x_ + dx);
                                data[i] = src;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-output-channel weight normalization computed directly.
pub fn naive_weight_norm(v: &TensorD, g: &[f64]) -> TensorD {
    let s = v.shape();
    let per = s.ch * s.h * s.w;
    let mut out = v.clone();
    {
        let data = out.data_mut();
        for oc in 0..s.n {
            let slice = &mut data[oc * per..(oc + 1) * per];
            let norm: f64 = slice.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in slice.iter_mut() {
                *x = g[oc] * *x / norm;
            }
        }
    }
    out
}

pub fn naive_squash_vec(s: &[f64], sq: f64) -> Vec<f64> {
    let norm_sq: f64 = s.iter().map(|x| x * x).sum();
    if norm_sq == 0.0 {
        return vec![0.0; s.len()];
    }
    let norm = norm_sq.sqrt();
    let factor = (norm_sq / (sq + norm_sq)) / norm;
    s.iter().map(|&x| x * factor).collect()
}

/// Channel slice of one capsule type as a standalone tensor.
fn type_slice(x: &TensorD, t: usize, d: usize) -> TensorD {
    let s = x.shape();
    Tensor4::from_fn(Shape4::new(s.n, d, s.h, s.w), |b, c, y, x_| {
        x.at(b, t * d + c, y, x_)
    })
}

/// Explicit routing-sum capsule layer: loop over input types i and output
/// types j, convolve with the shared pair kernel, weight by 1/M, sum, and
/// squash per position.
#[allow(clippy::too_many_arguments)]
pub fn naive_caps_layer(
    x: &TensorD,
    pair_kernel: &dyn Fn(usize, usize) -> TensorD,
    c_in: usize,
    c_out: usize,
    d_in: usize,
    d_out: usize,
    stride: usize,
    pad: usize,
    sq: f64,
    squash_enabled: bool,
) -> TensorD {
    let coupling = 1.0 / c_out as f64;
    let mut per_type: Vec<TensorD> = Vec::with_capacity(c_out);
    for j in 0..c_out {
        let mut s_j: Option<TensorD> = None;
        for i in 0..c_in {
            let votes = naive_conv2d(&type_slice(x, i, d_in), &pair_kernel(i, j), None, stride, pad);
            let weighted = votes.map(|v| v * coupling);
            s_j = Some(match s_j {
                Some(acc) => acc.zip_map(&weighted, |a, b| a + b).unwrap(),
                None => weighted,
            });
        }
        let s_j = s_j.unwrap();
        let out_j = if squash_enabled {
            let sh = s_j.shape();
            let mut out = s_j.clone();
            {
                let data = out.data_mut();
                for b in 0..sh.n {
                    for y in 0..sh.h {
                        for x_ in 0..sh.w {
                            let vecv: Vec<f64> =
                                (0..d_out).map(|c| s_j.at(b, c, y, x_)).collect();
                            let squashed = naive_squash_vec(&vecv, sq);
                            for (c, val) in squashed.into_iter().enumerate() {
                                data[((b * d_out + c) * sh.h + y) * sh.w + x_] = val;
                            }
                        }
                    }
                }
            }
            out
        } else {
            s_j
        };
        per_type.push(out_j);
    }
    // concatenate the output types along channels
    let s0 = per_type[0].shape();
    Tensor4::from_fn(
        Shape4::new(s0.n, c_out * d_out, s0.h, s0.w),
        |b, c, y, x_| per_type[c / d_out].at(b, c % d_out, y, x_),
    )
}

pub struct NaiveSsim {
    pub ssim: TensorD,
    pub l: TensorD,
    pub cs: TensorD,
}

/// Sliding-window SSIM computed per window from the weighted-moment
/// definitions (not the blurred-moments identity the library uses).
pub fn naive_ssim_maps(
    x: &TensorD,
    y: &TensorD,
    window: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
) -> NaiveSsim {
    let s = x.shape();
    let oh = s.h - window + 1;
    let ow = s.w - window + 1;
    // window weights
    let center = (window as f64 - 1.0) / 2.0;
    let mut wts = vec![0.0; window * window];
    let mut sum = 0.0;
    for wy in 0..window {
        for wx in 0..window {
            let dy = wy as f64 - center;
            let dx = wx as f64 - center;
            let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            wts[wy * window + wx] = v;
            sum += v;
        }
    }
    for v in &mut wts {
        *v /= sum;
    }

    let shape = Shape4::new(s.n, s.ch, oh, ow);
    let mut l = Tensor4::zeros(shape);
    let mut cs = Tensor4::zeros(shape);
    let mut ssim = Tensor4::zeros(shape);
    for b in 0..s.n {
        for c in 0..s.ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut mu_x = 0.0;
                    let mut mu_y = 0.0;
                    for wy in 0..window {
                        for wx in 0..window {
                            let w = wts[wy * window + wx];
                            mu_x += w * x.at(b, c, oy + wy, ox + wx);
                            mu_y += w * y.at(b, c, oy + wy, ox + wx);
                        }
                    }
                    let mut var_x = 0.0;
                    let mut var_y = 0.0;
                    let mut cov = 0.0;
                    for wy in 0..window {
                        for wx in 0..window {
                            let w = wts[wy * window + wx];
                            let dx = x.at(b, c, oy + wy, ox + wx) - mu_x;
                            let dy = y.at(b, c, oy + wy, ox + wx) - mu_y;
                            var_x += w * dx * dx;
                            var_y += w * dy * dy;
                            cov += w * dx * dy;
                        }
                    }
                    let lv = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
                    let csv = (2.0 * cov + c2) / (var_x + var_y + c2);
                    let i = ((b * s.ch + c) * oh + oy) * ow + ox;
                    l.data_mut()[i] = lv;
                    cs.data_mut()[i] = csv;
                    ssim.data_mut()[i] = lv * csv;
                }
            }
        }
    }
    NaiveSsim { ssim, l, cs }
}

fn naive_halve(x: &TensorD) -> TensorD {
    let s = x.shape();
    Tensor4::from_fn(Shape4::new(s.n, s.ch, s.h / 2, s.w / 2), |b, c, y, x_| {
        (x.at(b, c, 2 * y, 2 * x_)
            + x.at(b, c, 2 * y, 2 * x_ + 1)
            + x.at(b, c, 2 * y + 1, 2 * x_)
            + x.at(b, c, 2 * y + 1, 2 * x_ + 1))
            / 4.0
    })
}

fn mean_of(t: &TensorD) -> f64 {
    t.iter().sum::<f64>() / t.shape().count() as f64
}

/// From-scratch multiscale score over the naive SSIM maps.
#[allow(clippy::too_many_arguments)]
pub fn naive_ms_ssim(
    x: &TensorD,
    y: &TensorD,
    window: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
    weights: &[f64],
) -> f64 {
    let scales = weights.len();
    let mut cur_x = x.clone();
    let mut cur_y = y.clone();
    let mut score = 1.0;
    for (scale, &w) in weights.iter().enumerate() {
        let maps = naive_ssim_maps(&cur_x, &cur_y, window, sigma, c1, c2);
        let factor = if scale + 1 == scales {
            mean_of(&maps.ssim)
        } else {
            mean_of(&maps.cs)
        };
        score *= if w == 1.0 {
            factor
        } else {
            factor.max(0.0).powf(w)
        };
        if scale + 1 != scales {
            cur_x = naive_halve(&cur_x);
            cur_y = naive_halve(&cur_y);
        }
    }
    score
}

pub fn naive_activation(x: &TensorD, kind: ActKind) -> TensorD {
    x.map(|v| kind.value(v))
}

pub fn rand_tensor<R: Rng>(shape: Shape4, lo: f64, hi: f64, rng: &mut R) -> TensorD {
    Tensor4::rand_uniform(shape, lo, hi, rng)
}

pub fn max_abs_diff(a: &TensorD, b: &TensorD) -> f64 {
    srcaps::check::max_abs_diff(a, b)
}

/// Fresh unique directory under the system temp dir.
pub fn temp_dir(tag: &str) -> std::path::PathBuf {
    use std::sync::atomic::{AtomicU32, Ordering};
    static COUNTER: AtomicU32 = AtomicU32::new(0);
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "srcaps-{tag}-{}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

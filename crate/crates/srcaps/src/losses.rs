//! Training objectives with a uniform differentiability contract: L1, MSE,
//! SSIM, MS-SSIM, the L1/MS-SSIM mix, the two-parameter robust loss
//! (fixed or with learnable latents), Sobel-edge L1, and the 3-component
//! region-weighted losses.
//!
//! All losses take tape variables holding images on the internal 0..1 scale
//! (region segmentation runs on luminance) and return a scalar variable.

use crate::error::{Error, Result};
use crate::metrics::{
    self, RegionThresholds, RegionWeights, SsimParams, LUMA_WEIGHTS, REGIONS,
};
use crate::ops::Window;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape4, Tensor4};

/// Mean absolute difference over all elements.
pub fn l1<T: Scalar>(tape: &mut Tape<T>, sr: Var, hr: Var) -> Result<Var> {
    let d = tape.sub(sr, hr)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// Mean squared difference over all elements.
pub fn mse_loss<T: Scalar>(tape: &mut Tape<T>, sr: Var, hr: Var) -> Result<Var> {
    let d = tape.sub(sr, hr)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// SSIM factor maps on the tape; same layout as the metric-side
/// [`metrics::ssim_maps`] (valid mode, per channel).
pub fn ssim_maps_t<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    y: Var,
    p: &SsimParams,
) -> Result<(Var, Var, Var)> {
    if x.shape != y.shape {
        return Err(Error::usage(format!(
            "ssim shape mismatch: {} vs {}",
            x.shape, y.shape
        )));
    }
    if x.shape.h < p.window || x.shape.w < p.window {
        return Err(Error::usage(format!(
            "image {}x{} is smaller than the ssim window {}",
            x.shape.h, x.shape.w, p.window
        )));
    }
    let win = Window::<T>::gaussian(p.window, p.sigma);
    let mu_x = tape.filter2d(x, &win)?;
    let mu_y = tape.filter2d(y, &win)?;
    let xx = tape.mul(x, x)?;
    let yy = tape.mul(y, y)?;
    let xy = tape.mul(x, y)?;
    let e_xx = tape.filter2d(xx, &win)?;
    let e_yy = tape.filter2d(yy, &win)?;
    let e_xy = tape.filter2d(xy, &win)?;
    let mu_xx = tape.mul(mu_x, mu_x)?;
    let mu_yy = tape.mul(mu_y, mu_y)?;
    let mu_xy = tape.mul(mu_x, mu_y)?;
    let sigma_x = tape.sub(e_xx, mu_xx)?;
    let sigma_y = tape.sub(e_yy, mu_yy)?;
    let cov = tape.sub(e_xy, mu_xy)?;

    let c1 = p.c1();
    let c2 = p.c2();
    let l_num0 = tape.scale(mu_xy, 2.0);
    let l_num = tape.add_scalar(l_num0, c1);
    let l_den0 = tape.add(mu_xx, mu_yy)?;
    let l_den = tape.add_scalar(l_den0, c1);
    let l = tape.div(l_num, l_den)?;

    let cs_num0 = tape.scale(cov, 2.0);
    let cs_num = tape.add_scalar(cs_num0, c2);
    let cs_den0 = tape.add(sigma_x, sigma_y)?;
    let cs_den = tape.add_scalar(cs_den0, c2);
    let cs = tape.div(cs_num, cs_den)?;

    let ssim = tape.mul(l, cs)?;
    Ok((ssim, l, cs))
}

/// `1 - mean(SSIM map)`.
pub fn ssim_loss<T: Scalar>(tape: &mut Tape<T>, sr: Var, hr: Var, p: &SsimParams) -> Result<Var> {
    let (ssim, _, _) = ssim_maps_t(tape, sr, hr, p)?;
    let m = tape.mean(ssim);
    let neg = tape.scale(m, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Multi-scale SSIM loss: scales below the coarsest contribute the mean of
/// their contrast-structure map, the coarsest contributes the mean of the
/// full SSIM map (luminance only there), each raised to its exponent.
pub fn ms_ssim_loss<T: Scalar>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    p: &SsimParams,
) -> Result<Var> {
    let feasible = p.max_feasible_scales(sr.shape.h, sr.shape.w);
    if feasible < p.scales {
        return Err(Error::usage(format!(
            "image {}x{} supports at most {} ms-ssim scales, {} requested",
            sr.shape.h, sr.shape.w, feasible, p.scales
        )));
    }
    let mut cur_x = sr;
    let mut cur_y = hr;
    let mut product: Option<Var> = None;
    for scale in 0..p.scales {
        let (ssim, _, cs) = ssim_maps_t(tape, cur_x, cur_y, p)?;
        let factor_map = if scale + 1 == p.scales { ssim } else { cs };
        let mean = tape.mean(factor_map);
        // unit exponent stays an exact identity, so one scale degenerates
        // to plain ssim
        let powed = if p.weights[scale] == 1.0 {
            mean
        } else {
            tape.powf_pos(mean, p.weights[scale])
        };
        product = Some(match product {
            Some(acc) => tape.mul(acc, powed)?,
            None => powed,
        });
        if scale + 1 != p.scales {
            cur_x = tape.avg_pool2(cur_x)?;
            cur_y = tape.avg_pool2(cur_y)?;
        }
    }
    let score = product.expect("at least one scale");
    let neg = tape.scale(score, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Weighted sum of L1 and the MS-SSIM loss. A zero weight skips that
/// component entirely.
pub fn mix_l1_msssim<T: Scalar>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    w_l1: f64,
    w_msssim: f64,
    p: &SsimParams,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    if w_l1 != 0.0 {
        let a = l1(tape, sr, hr)?;
        total = Some(tape.scale(a, w_l1));
    }
    if w_msssim != 0.0 {
        let m = ms_ssim_loss(tape, sr, hr, p)?;
        let scaled = tape.scale(m, w_msssim);
        total = Some(match total {
            Some(t) => tape.add(t, scaled)?,
            None => scaled,
        });
    }
    total.ok_or_else(|| Error::config("mix loss needs at least one non-zero weight"))
}

/// Snap tolerance around the special robustness values.
const ALPHA_EPS: f64 = 1e-5;

impl<T: Scalar> Tape<T> {
    /// Mean of the two-parameter robust loss over the elements of `diff`
    /// (`diff = hr - sr`). `alpha` and `c` are scalar variables so the loss
    /// parameters can be trained jointly with the model; `c` must be
    /// positive.
    ///
    /// The four-branch piecewise form is used: quadratic at `alpha = 2`,
    /// log at `alpha = 0`, Welsch at `alpha = -inf`, and the general branch
    /// elsewhere. Branches within `1e-5` of the special values evaluate via
    /// the special-case formula, which the general branch approaches
    /// continuously.
    pub fn barron_mean(&mut self, diff: Var, alpha: Var, c: Var) -> Result<Var> {
        if !alpha.shape.is_scalar() || !c.shape.is_scalar() {
            return Err(Error::usage("barron alpha and c must be scalar variables"));
        }
        let a = self.value(alpha).data()[0].as_f64();
        let cv = self.value(c).data()[0].as_f64();
        if cv <= 0.0 {
            return Err(Error::config(format!(
                "barron scale c must be positive, got {cv}"
            )));
        }
        let xv = self.value(diff).clone();
        let count = diff.shape.count() as f64;

        let mut total = 0.0f64;
        for &x in xv.iter() {
            total += barron_rho(x.as_f64(), a, cv);
        }
        let value = Tensor4::scalar_value(T::of(total / count));
        let needs = self.needs(diff) || self.needs(alpha) || self.needs(c);
        let d_shape = diff.shape;
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                let gv = g.data()[0].as_f64() / count;
                let mut gd = vec![T::zero(); d_shape.count()];
                let mut ga = 0.0f64;
                let mut gc = 0.0f64;
                for (i, &x) in xv.iter().enumerate() {
                    let (dx, da, dc) = barron_grads(x.as_f64(), a, cv);
                    gd[i] = T::of(gv * dx);
                    ga += gv * da;
                    gc += gv * dc;
                }
                vec![
                    (diff.id, Tensor4::new(d_shape, gd).expect("shape ok")),
                    (alpha.id, Tensor4::scalar_value(T::of(ga))),
                    (c.id, Tensor4::scalar_value(T::of(gc))),
                ]
            })),
        ))
    }
}

/// Pointwise robust loss value.
fn barron_rho(x: f64, alpha: f64, c: f64) -> f64 {
    let u = (x / c) * (x / c);
    if alpha == f64::NEG_INFINITY {
        return 1.0 - (-0.5 * u).exp();
    }
    if (alpha - 2.0).abs() <= ALPHA_EPS {
        return 0.5 * u;
    }
    if alpha.abs() <= ALPHA_EPS {
        return (0.5 * u).ln_1p();
    }
    let b = (2.0 - alpha).abs();
    (b / alpha) * ((u / b + 1.0).powf(alpha / 2.0) - 1.0)
}

/// Pointwise derivatives (d/dx, d/dalpha, d/dc) of the robust loss.
fn barron_grads(x: f64, alpha: f64, c: f64) -> (f64, f64, f64) {
    let u = (x / c) * (x / c);
    if alpha == f64::NEG_INFINITY {
        let e = (-0.5 * u).exp();
        return (x / (c * c) * e, 0.0, -(u / c) * e);
    }
    if (alpha - 2.0).abs() <= ALPHA_EPS {
        let dx = x / (c * c);
        let dc = -u / c;
        // alpha derivative via the general branch with the gap floored
        let da = barron_dalpha(u, if alpha < 2.0 { 2.0 - ALPHA_EPS } else { 2.0 + ALPHA_EPS });
        return (dx, da, dc);
    }
    if alpha.abs() <= ALPHA_EPS {
        let dx = 2.0 * x / (x * x + 2.0 * c * c);
        let dc = -2.0 * x * x / (c * (x * x + 2.0 * c * c));
        let da = barron_dalpha(u, if alpha >= 0.0 { ALPHA_EPS } else { -ALPHA_EPS });
        return (dx, da, dc);
    }
    let b = (2.0 - alpha).abs();
    let base = u / b + 1.0;
    let pw = base.powf(alpha / 2.0 - 1.0);
    let dx = x / (c * c) * pw;
    let dc = -(u / c) * pw;
    (dx, barron_dalpha(u, alpha), dc)
}

/// d rho / d alpha on the general branch.
fn barron_dalpha(u: f64, alpha: f64) -> f64 {
    let s = if alpha < 2.0 { -1.0 } else { 1.0 };
    let b = (2.0 - alpha).abs();
    let base = u / b + 1.0;
    let e = base.powf(alpha / 2.0);
    let d_front = (s * alpha - b) / (alpha * alpha);
    let d_ln = 0.5 * base.ln() - s * alpha * u / (2.0 * b * (u + b));
    d_front * (e - 1.0) + (b / alpha) * e * d_ln
}

/// Fixed robustness/scale parameters, or the learnable configuration.
#[derive(Clone, Copy, Debug)]
pub struct BarronParams {
    pub alpha: f64,
    pub c: f64,
    pub learnable: bool,
}

impl BarronParams {
    pub fn fixed(alpha: f64, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::config(format!(
                "barron scale c must be positive, got {c}"
            )));
        }
        Ok(BarronParams {
            alpha,
            c,
            learnable: false,
        })
    }

    /// The adaptive configuration: latents initialized so training starts
    /// from the smooth-L1 member of the family.
    pub fn adaptive() -> Self {
        BarronParams {
            alpha: 1.0,
            c: 0.01,
            learnable: true,
        }
    }
}

/// Unconstrained latents of the adaptive loss, mapped through smooth
/// monotone bijections: `alpha = 2 * sigmoid(a)` onto (0, 2) and
/// `c = c_init * exp(s)` onto (0, inf).
#[derive(Clone, Debug)]
pub struct BarronLatents<T> {
    pub alpha_latent: Tensor4<T>,
    pub c_latent: Tensor4<T>,
    pub c_init: f64,
}

/// Tape handles of the registered latents.
#[derive(Clone, Copy, Debug)]
pub struct BarronLatentVars {
    pub alpha_latent: Var,
    pub c_latent: Var,
}

impl<T: Scalar> BarronLatents<T> {
    pub fn new(alpha_init: f64, c_init: f64) -> Result<Self> {
        if !(0.0 < alpha_init && alpha_init < 2.0) {
            return Err(Error::config(format!(
                "adaptive alpha must start inside (0, 2), got {alpha_init}"
            )));
        }
        if c_init <= 0.0 {
            return Err(Error::config(format!(
                "adaptive c must start positive, got {c_init}"
            )));
        }
        let half = alpha_init / 2.0;
        let a = (half / (1.0 - half)).ln();
        Ok(BarronLatents {
            alpha_latent: Tensor4::scalar_value(T::of(a)),
            c_latent: Tensor4::scalar_value(T::zero()),
            c_init,
        })
    }

    pub fn register(&self, tape: &mut Tape<T>) -> BarronLatentVars {
        BarronLatentVars {
            alpha_latent: tape.leaf(self.alpha_latent.clone(), true),
            c_latent: tape.leaf(self.c_latent.clone(), true),
        }
    }

    /// Map registered latents to the constrained (alpha, c) variables.
    pub fn map(&self, tape: &mut Tape<T>, vars: &BarronLatentVars) -> (Var, Var) {
        let sig = tape.sigmoid(vars.alpha_latent);
        let alpha = tape.scale(sig, 2.0);
        let e = tape.exp(vars.c_latent);
        let c = tape.scale(e, self.c_init);
        (alpha, c)
    }

    pub fn alpha(&self) -> f64 {
        let a = self.alpha_latent.data()[0].as_f64();
        2.0 / (1.0 + (-a).exp())
    }

    pub fn c(&self) -> f64 {
        self.c_init * self.c_latent.data()[0].as_f64().exp()
    }

    pub fn visit(&self, f: &mut dyn FnMut(String, &Tensor4<T>)) {
        f("loss.alpha_latent".to_string(), &self.alpha_latent);
        f("loss.c_latent".to_string(), &self.c_latent);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor4<T>)) {
        f("loss.alpha_latent".to_string(), &mut self.alpha_latent);
        f("loss.c_latent".to_string(), &mut self.c_latent);
    }
}

/// Robust loss with explicit (fixed or already-mapped) alpha and c.
pub fn barron_loss<T: Scalar>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    alpha: Var,
    c: Var,
) -> Result<Var> {
    let diff = tape.sub(hr, sr)?;
    tape.barron_mean(diff, alpha, c)
}

/// Luminance of an RGB variable via a fixed 1x1 convolution.
pub fn luminance_t<T: Scalar>(tape: &mut Tape<T>, rgb: Var) -> Result<Var> {
    if rgb.shape.ch != 3 {
        return Err(Error::usage(format!(
            "luminance expects 3 channels, got {}",
            rgb.shape.ch
        )));
    }
    let kernel = Tensor4::new(
        Shape4::new(1, 3, 1, 1),
        LUMA_WEIGHTS.iter().map(|&w| T::of(w)).collect(),
    )?;
    let k = tape.constant(kernel);
    tape.conv2d(rgb, k, None, 1, 0)
}

/// Sobel gradient magnitude of a single-channel variable, replicate-padded
/// to preserve the extent.
pub fn sobel_t<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    if x.shape.ch != 1 {
        return Err(Error::usage(format!(
            "sobel expects a single channel, got {}",
            x.shape.ch
        )));
    }
    let padded = tape.pad_replicate(x, 1);
    let gx = tape.filter2d(padded, &Window::sobel_x())?;
    let gy = tape.filter2d(padded, &Window::sobel_y())?;
    tape.hypot(gx, gy)
}

/// Pixel L1 plus L1 between Sobel edge maps of the luminance channels.
pub fn sobel_edge_loss<T: Scalar>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    w_pixels: f64,
    w_edges: f64,
) -> Result<Var> {
    if sr.shape != hr.shape {
        return Err(Error::usage(format!(
            "sobel edge loss shape mismatch: {} vs {}",
            sr.shape, hr.shape
        )));
    }
    let pixel = l1(tape, sr, hr)?;
    let pixel_term = tape.scale(pixel, w_pixels);
    let sr_l = luminance_t(tape, sr)?;
    let hr_l = luminance_t(tape, hr)?;
    let sr_e = sobel_t(tape, sr_l)?;
    let hr_e = sobel_t(tape, hr_l)?;
    let edge = l1(tape, sr_e, hr_e)?;
    let edge_term = tape.scale(edge, w_edges);
    tape.add(pixel_term, edge_term)
}

/// Distortion used inside each region of the region-weighted loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionBase {
    /// Mean squared error (the 3-PSNR flavor).
    PsnrLike,
    /// `1 - SSIM` (the 3-SSIM flavor).
    SsimLike,
}

/// Region-weighted loss: the reference image's luminance is segmented into
/// edge/texture/smooth regions and the per-region base distortion is
/// combined by the weights, normalized over non-empty regions.
pub fn region_weighted_loss<T: Scalar>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    weights: &RegionWeights,
    base: RegionBase,
    thresholds: RegionThresholds,
    ssim: &SsimParams,
) -> Result<Var> {
    if sr.shape != hr.shape {
        return Err(Error::usage(format!(
            "region loss shape mismatch: {} vs {}",
            sr.shape, hr.shape
        )));
    }
    if weights.edge + weights.texture + weights.smooth <= 0.0 {
        return Err(Error::config("region loss weights must not all be zero"));
    }
    let hr_value = tape.value(hr).clone();
    let hr_lum = metrics::luminance(&hr_value)?;
    let masks: Vec<_> = (0..hr_value.shape().n)
        .map(|b| {
            let plane = Tensor4::from_fn(
                Shape4::new(1, 1, hr_value.shape().h, hr_value.shape().w),
                |_, _, y, x| hr_lum.at(b, 0, y, x),
            );
            metrics::segment_regions(&plane, thresholds)
        })
        .collect::<Result<Vec<_>>>()?;

    // Per-region error map times a 0/1 mask, meaned over the region support.
    let (err_map, map_shape, off) = match base {
        RegionBase::PsnrLike => {
            let d = tape.sub(sr, hr)?;
            let sq = tape.mul(d, d)?;
            (sq, sr.shape, 0usize)
        }
        RegionBase::SsimLike => {
            let (ssim_map, _, _) = ssim_maps_t(tape, sr, hr, ssim)?;
            let neg = tape.scale(ssim_map, -1.0);
            let one_minus = tape.add_scalar(neg, 1.0);
            (one_minus, one_minus.shape, (ssim.window - 1) / 2)
        }
    };

    let mut num: Option<Var> = None;
    let mut total_weight = 0.0;
    for region in REGIONS {
        let w = weights.get(region);
        let mut count = 0usize;
        let mask = Tensor4::from_fn(map_shape, |b, _, y, x| {
            if masks[b].label(y + off, x + off) == region {
                count += 1;
                T::one()
            } else {
                T::zero()
            }
        });
        // from_fn visits every channel; count per spatial support once
        let count = count;
        if count == 0 {
            continue;
        }
        total_weight += w;
        if w == 0.0 {
            continue;
        }
        let mask_var = tape.constant(mask);
        let masked = tape.mul(err_map, mask_var)?;
        let sum = tape.sum(masked);
        let region_mean = tape.scale(sum, 1.0 / count as f64);
        let weighted = tape.scale(region_mean, w);
        num = Some(match num {
            Some(acc) => tape.add(acc, weighted)?,
            None => weighted,
        });
    }
    match num {
        Some(acc) if total_weight > 0.0 => Ok(tape.scale(acc, 1.0 / total_weight)),
        // every non-empty region carries zero weight
        _ => Ok(tape.constant(Tensor4::scalar_value(T::zero()))),
    }
}

/// Which training objective to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    Mse,
    Ssim,
    MsSsim,
    Mix,
    Barron,
    Adaptive,
    SobelEdge,
    Psnr3,
    Ssim3,
}

impl LossKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "mse" | "l2" => Ok(LossKind::Mse),
            "ssim" => Ok(LossKind::Ssim),
            "msssim" | "ms_ssim" | "ms-ssim" => Ok(LossKind::MsSsim),
            "mix" => Ok(LossKind::Mix),
            "barron" | "general" => Ok(LossKind::Barron),
            "adaptive" => Ok(LossKind::Adaptive),
            "sobel" | "sobel_edge" => Ok(LossKind::SobelEdge),
            "psnr3" | "3psnr" | "3-psnr" => Ok(LossKind::Psnr3),
            "ssim3" | "3ssim" | "3-ssim" => Ok(LossKind::Ssim3),
            other => Err(Error::config(format!(
                "unknown loss '{other}' (expected one of l1, mse, ssim, msssim, mix, barron, adaptive, sobel, psnr3, ssim3)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::Mse => "mse",
            LossKind::Ssim => "ssim",
            LossKind::MsSsim => "msssim",
            LossKind::Mix => "mix",
            LossKind::Barron => "barron",
            LossKind::Adaptive => "adaptive",
            LossKind::SobelEdge => "sobel",
            LossKind::Psnr3 => "psnr3",
            LossKind::Ssim3 => "ssim3",
        }
    }
}

/// A loss selection with its parameters, as expressed in the run
/// configuration.
#[derive(Clone, Debug)]
pub struct LossSpec {
    pub kind: LossKind,
    pub ssim: SsimParams,
    pub mix_w_l1: f64,
    pub mix_w_msssim: f64,
    pub barron: BarronParams,
    pub sobel_w_pixels: f64,
    pub sobel_w_edges: f64,
    pub region_weights_psnr3: RegionWeights,
    pub region_weights_ssim3: RegionWeights,
    pub thresholds: RegionThresholds,
}

impl Default for LossSpec {
    /// The default training objective is the adaptive robust loss.
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Adaptive,
            ssim: SsimParams::loss_default(),
            mix_w_l1: 0.16,
            mix_w_msssim: 0.84,
            barron: BarronParams::adaptive(),
            sobel_w_pixels: 1.0,
            sobel_w_edges: 1.0,
            region_weights_psnr3: RegionWeights::psnr3_default(),
            region_weights_ssim3: RegionWeights::ssim3_default(),
            thresholds: RegionThresholds::default(),
        }
    }
}

impl LossSpec {
    pub fn of_kind(kind: LossKind) -> Self {
        LossSpec {
            kind,
            ..Default::default()
        }
    }

    /// Whether this objective trains latent loss parameters.
    pub fn needs_latents(&self) -> bool {
        self.kind == LossKind::Adaptive && self.barron.learnable
    }

    /// Evaluate the selected objective. `latents` must be provided exactly
    /// when [`LossSpec::needs_latents`] is true.
    pub fn compute<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        sr: Var,
        hr: Var,
        latents: Option<(&BarronLatents<T>, &BarronLatentVars)>,
    ) -> Result<Var> {
        match self.kind {
            LossKind::L1 => l1(tape, sr, hr),
            LossKind::Mse => mse_loss(tape, sr, hr),
            LossKind::Ssim => ssim_loss(tape, sr, hr, &self.ssim),
            LossKind::MsSsim => ms_ssim_loss(tape, sr, hr, &self.ssim),
            LossKind::Mix => mix_l1_msssim(tape, sr, hr, self.mix_w_l1, self.mix_w_msssim, &self.ssim),
            LossKind::Barron => {
                let alpha = tape.constant(Tensor4::scalar_value(T::of(self.barron.alpha)));
                let c = tape.constant(Tensor4::scalar_value(T::of(self.barron.c)));
                barron_loss(tape, sr, hr, alpha, c)
            }
            LossKind::Adaptive => {
                let (lat, vars) = latents.ok_or_else(|| {
                    Error::usage("adaptive loss requires registered latents")
                })?;
                let (alpha, c) = lat.map(tape, vars);
                barron_loss(tape, sr, hr, alpha, c)
            }
            LossKind::SobelEdge => {
                sobel_edge_loss(tape, sr, hr, self.sobel_w_pixels, self.sobel_w_edges)
            }
            LossKind::Psnr3 => region_weighted_loss(
                tape,
                sr,
                hr,
                &self.region_weights_psnr3,
                RegionBase::PsnrLike,
                self.thresholds,
                &self.ssim,
            ),
            LossKind::Ssim3 => region_weighted_loss(
                tape,
                sr,
                hr,
                &self.region_weights_ssim3,
                RegionBase::SsimLike,
                self.thresholds,
                &self.ssim,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(
        h: usize,
        w: usize,
        seed: u64,
        ch: usize,
    ) -> (Tape<f64>, Var, Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor4::rand_uniform(Shape4::new(1, ch, h, w), 0.0, 1.0, &mut rng);
        let b = Tensor4::rand_uniform(Shape4::new(1, ch, h, w), 0.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let sr = tape.leaf(a, true);
        let hr = tape.constant(b);
        (tape, sr, hr)
    }

    fn loss_value(tape: &mut Tape<f64>, v: Var) -> f64 {
        tape.value(v).data()[0]
    }

    #[test]
    fn l1_examples() {
        let (mut tape, sr, hr) = pair(4, 4, 1, 3);
        let same = l1(&mut tape, sr, sr).unwrap();
        assert_eq!(loss_value(&mut tape, same), 0.0);

        let off = tape.add_scalar(hr, 3.0);
        let three = l1(&mut tape, off, hr).unwrap();
        assert!((loss_value(&mut tape, three) - 3.0).abs() < 1e-12);

        let v = l1(&mut tape, sr, hr).unwrap();
        let a = tape.value(sr).clone();
        let b = tape.value(hr).clone();
        let manual: f64 = a
            .iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>()
            / a.shape().count() as f64;
        assert!((loss_value(&mut tape, v) - manual).abs() < 1e-12);
    }

    #[test]
    fn ssim_loss_zero_at_identity_and_bounded() {
        let (mut tape, sr, hr) = pair(16, 16, 2, 1);
        let zero = ssim_loss(&mut tape, sr, sr, &SsimParams::loss_default()).unwrap();
        assert!(loss_value(&mut tape, zero).abs() < 1e-12);
        let v = ssim_loss(&mut tape, sr, hr, &SsimParams::loss_default()).unwrap();
        let lv = loss_value(&mut tape, v);
        assert!((0.0..=2.0).contains(&lv));
    }

    #[test]
    fn ssim_losses_are_symmetric() {
        let (mut tape, sr, hr) = pair(16, 16, 3, 1);
        let p = SsimParams::loss_default();
        let ab = ssim_loss(&mut tape, sr, hr, &p).unwrap();
        let ba = ssim_loss(&mut tape, hr, sr, &p).unwrap();
        assert!((loss_value(&mut tape, ab) - loss_value(&mut tape, ba)).abs() < 1e-12);
    }

    #[test]
    fn ms_ssim_single_scale_degenerates_to_ssim() {
        let (mut tape, sr, hr) = pair(16, 16, 4, 1);
        let p = SsimParams::loss_default().with_scales(1).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        let ms = ms_ssim_loss(&mut tape, sr, hr, &p).unwrap();
        let ss = ssim_loss(&mut tape, sr, hr, &p).unwrap();
        assert!((loss_value(&mut tape, ms) - loss_value(&mut tape, ss)).abs() < 1e-10);
    }

    #[test]
    fn ms_ssim_zero_at_identity_and_errors_on_small_images() {
        let (mut tape, sr, _) = pair(64, 64, 5, 1);
        let p = SsimParams::loss_default().with_scales(3).unwrap();
        let v = ms_ssim_loss(&mut tape, sr, sr, &p).unwrap();
        assert!(loss_value(&mut tape, v).abs() < 1e-10);

        let (mut tape2, sr2, hr2) = pair(16, 16, 6, 1);
        let p5 = SsimParams::loss_default();
        let err = ms_ssim_loss(&mut tape2, sr2, hr2, &p5).unwrap_err();
        assert!(err.to_string().contains("at most 1"));
    }

    #[test]
    fn mix_recombines_and_degenerates() {
        let (mut tape, sr, hr) = pair(64, 64, 7, 1);
        let p = SsimParams::loss_default().with_scales(2).unwrap();
        let mixed = mix_l1_msssim(&mut tape, sr, hr, 0.16, 0.84, &p).unwrap();
        let a = l1(&mut tape, sr, hr).unwrap();
        let m = ms_ssim_loss(&mut tape, sr, hr, &p).unwrap();
        let expect = 0.16 * loss_value(&mut tape, a) + 0.84 * loss_value(&mut tape, m);
        assert!((loss_value(&mut tape, mixed) - expect).abs() < 1e-12);

        // (1, 0) reduces to plain L1 even where ms-ssim would be infeasible
        let (mut tape2, sr2, hr2) = pair(8, 8, 8, 1);
        let l1_only = mix_l1_msssim(&mut tape2, sr2, hr2, 1.0, 0.0, &p).unwrap();
        let plain = l1(&mut tape2, sr2, hr2).unwrap();
        assert_eq!(
            loss_value(&mut tape2, l1_only),
            loss_value(&mut tape2, plain)
        );
    }

    #[test]
    fn barron_spot_values() {
        // alpha = 2, c = 1, x = 3 -> 4.5
        assert!((barron_rho(3.0, 2.0, 1.0) - 4.5).abs() < 1e-12);
        // alpha = 1, c = 1, x = 1 -> sqrt(2) - 1
        assert!((barron_rho(1.0, 1.0, 1.0) - (2.0f64.sqrt() - 1.0)).abs() < 1e-12);
        // x = 0 contributes 0 for every alpha
        for a in [-5.0, 0.0, 0.5, 1.0, 1.999, 2.0, f64::NEG_INFINITY] {
            assert_eq!(barron_rho(0.0, a, 0.7), 0.0);
        }
    }

    #[test]
    fn barron_general_converges_to_quadratic() {
        // Direct evaluation of the general branch as alpha approaches 2
        // from below. The gap decays like eps*ln(1/eps): about 3.4e-5 at
        // eps = 1e-6 and below 1e-6 by eps = 1e-8.
        let general = |x: f64, alpha: f64| {
            let b = 2.0 - alpha;
            let u = x * x;
            (b / alpha) * ((u / b + 1.0).powf(alpha / 2.0) - 1.0)
        };
        for i in 0..=30 {
            let x = -3.0 + 0.2 * i as f64;
            let gap6 = (general(x, 2.0 - 1e-6) - 0.5 * x * x).abs();
            let gap7 = (general(x, 2.0 - 1e-7) - 0.5 * x * x).abs();
            let gap8 = (general(x, 2.0 - 1e-8) - 0.5 * x * x).abs();
            assert!(gap6 < 5e-5, "x={x}: {gap6}");
            assert!(gap7 <= gap6 + 1e-12, "x={x}: not shrinking");
            assert!(gap8 < 1e-6, "x={x}: {gap8}");
        }
        // inside the snap zone the implementation is exactly quadratic
        assert_eq!(barron_rho(3.0, 2.0 - 1e-6, 1.0), 4.5);
    }

    #[test]
    fn barron_rejects_nonpositive_scale() {
        let (mut tape, sr, hr) = pair(4, 4, 9, 1);
        let alpha = tape.constant(Tensor4::scalar_value(1.0));
        let c = tape.constant(Tensor4::scalar_value(0.0));
        assert!(barron_loss(&mut tape, sr, hr, alpha, c).is_err());
        assert!(BarronParams::fixed(1.0, -1.0).is_err());
    }

    #[test]
    fn barron_latents_map_into_open_intervals() {
        let lat = BarronLatents::<f64>::new(1.0, 0.01).unwrap();
        assert!((lat.alpha() - 1.0).abs() < 1e-12);
        assert!((lat.c() - 0.01).abs() < 1e-15);
        // magnitudes far beyond anything training reaches
        for extreme in [-20.0, 20.0] {
            let mut shifted = lat.clone();
            shifted.alpha_latent = Tensor4::scalar_value(extreme);
            shifted.c_latent = Tensor4::scalar_value(extreme);
            assert!(shifted.alpha() < 2.0 && shifted.alpha() > 0.0);
            assert!(shifted.c() > 0.0);
        }
    }

    #[test]
    fn sobel_edge_loss_constant_offset_has_zero_edge_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let hr = Tensor4::rand_uniform(Shape4::new(1, 3, 8, 8), 0.2, 0.8, &mut rng);
        let sr = hr.map(|v| v + 0.1);
        let mut tape = Tape::new();
        let srv = tape.constant(sr);
        let hrv = tape.constant(hr);
        let both = sobel_edge_loss(&mut tape, srv, hrv, 1.0, 1.0).unwrap();
        let pixels_only = sobel_edge_loss(&mut tape, srv, hrv, 1.0, 0.0).unwrap();
        let b = loss_value(&mut tape, both);
        let p = loss_value(&mut tape, pixels_only);
        assert!((b - p).abs() < 1e-9, "edge term should vanish: {b} vs {p}");
        assert!((p - 0.1).abs() < 1e-9);
    }

    #[test]
    fn region_loss_zero_at_identity_and_smooth_on_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hr = Tensor4::rand_uniform(Shape4::new(1, 3, 16, 16), 0.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let hrv = tape.constant(hr);
        let zero = region_weighted_loss(
            &mut tape,
            hrv,
            hrv,
            &RegionWeights::psnr3_default(),
            RegionBase::PsnrLike,
            RegionThresholds::default(),
            &SsimParams::loss_default(),
        )
        .unwrap();
        assert!(loss_value(&mut tape, zero).abs() < 1e-15);

        // constant reference: everything is smooth, loss = smooth-region mse
        let flat = Tensor4::full(Shape4::new(1, 3, 8, 8), 0.5);
        let noisy = flat.map(|v| v + 0.25);
        let mut tape2 = Tape::new();
        let srv = tape2.constant(noisy);
        let hrv2 = tape2.constant(flat);
        let v = region_weighted_loss(
            &mut tape2,
            srv,
            hrv2,
            &RegionWeights::new(0.3, 0.3, 0.4).unwrap(),
            RegionBase::PsnrLike,
            RegionThresholds::default(),
            &SsimParams::loss_default(),
        )
        .unwrap();
        assert!((loss_value(&mut tape2, v) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn region_loss_edge_only_weights_ignore_smooth_pixels() {
        // step image: edges at the step, smooth elsewhere
        let hr = Tensor4::from_fn(Shape4::new(1, 3, 12, 12), |_, _, _, x| {
            if x < 6 {
                0.1
            } else {
                0.9
            }
        });
        // corrupt only a smooth column far from the step
        let sr = Tensor4::from_fn(Shape4::new(1, 3, 12, 12), |_, c, y, x| {
            let v = hr.at(0, c, y, x);
            if x == 0 {
                v + 0.3
            } else {
                v
            }
        });
        let mut tape = Tape::new();
        let srv = tape.constant(sr);
        let hrv = tape.constant(hr);
        let v = region_weighted_loss(
            &mut tape,
            srv,
            hrv,
            &RegionWeights::ssim3_default(),
            RegionBase::PsnrLike,
            RegionThresholds::default(),
            &SsimParams::loss_default(),
        )
        .unwrap();
        assert!(loss_value(&mut tape, v).abs() < 1e-15);
    }

    #[test]
    fn every_loss_kind_is_zero_at_identity_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let img = Tensor4::rand_uniform(Shape4::new(1, 3, 48, 48), 0.05, 0.95, &mut rng);
        let other = Tensor4::rand_uniform(Shape4::new(1, 3, 48, 48), 0.05, 0.95, &mut rng);
        let latents = BarronLatents::<f64>::new(1.0, 0.01).unwrap();
        for kind in [
            LossKind::L1,
            LossKind::Mse,
            LossKind::Ssim,
            LossKind::MsSsim,
            LossKind::Mix,
            LossKind::Barron,
            LossKind::Adaptive,
            LossKind::SobelEdge,
            LossKind::Psnr3,
            LossKind::Ssim3,
        ] {
            let mut spec = LossSpec::of_kind(kind);
            spec.barron.learnable = kind == LossKind::Adaptive;
            spec.ssim = spec.ssim.with_scales(2).unwrap();
            let mut tape = Tape::new();
            let a = tape.constant(img.clone());
            let b = tape.constant(other.clone());
            let vars = latents.register(&mut tape);
            let lat = spec.needs_latents().then_some((&latents, &vars));
            let zero = spec.compute(&mut tape, a, a, lat).unwrap();
            let zv = tape.value(zero).data()[0];
            assert!(zv.abs() < 1e-10, "{kind:?} at identity gives {zv}");
            let lat = spec.needs_latents().then_some((&latents, &vars));
            let v = spec.compute(&mut tape, a, b, lat).unwrap();
            let lv = tape.value(v).data()[0];
            assert!(lv >= 0.0, "{kind:?} negative: {lv}");
        }
    }

    #[test]
    fn loss_mode_ssim_agrees_with_metric_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor4::<f64>::rand_uniform(Shape4::new(1, 1, 20, 20), 0.0, 255.0, &mut rng);
        let y = Tensor4::<f64>::rand_uniform(Shape4::new(1, 1, 20, 20), 0.0, 255.0, &mut rng);
        let p = crate::metrics::SsimParams::metric_default();
        let metric = crate::metrics::ssim_maps(&x, &y, &p).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let yv = tape.constant(y);
        let (smap, _, _) = ssim_maps_t(&mut tape, xv, yv, &p).unwrap();
        assert!(crate::check::max_abs_diff(tape.value(smap), &metric.ssim) < 1e-6);
    }

    #[test]
    fn mix_degenerate_weights_reproduce_each_component() {
        let (mut tape, sr, hr) = pair(64, 64, 41, 1);
        let p = SsimParams::loss_default().with_scales(2).unwrap();
        let ms_only = mix_l1_msssim(&mut tape, sr, hr, 0.0, 1.0, &p).unwrap();
        let ms = ms_ssim_loss(&mut tape, sr, hr, &p).unwrap();
        assert_eq!(loss_value(&mut tape, ms_only), loss_value(&mut tape, ms));
    }

    #[test]
    fn loss_spec_parse_and_defaults() {
        assert_eq!(LossKind::parse("MS-SSIM").unwrap(), LossKind::MsSsim);
        assert!(LossKind::parse("nope").is_err());
        let spec = LossSpec::default();
        assert_eq!(spec.kind, LossKind::Adaptive);
        assert!(spec.needs_latents());
        assert!((spec.mix_w_l1 - 0.16).abs() < 1e-12);
        assert!((spec.mix_w_msssim - 0.84).abs() < 1e-12);
    }
}

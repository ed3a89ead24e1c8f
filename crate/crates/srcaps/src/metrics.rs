//! Evaluation measures: luminance extraction, MSE/PSNR, SSIM and MS-SSIM,
//! Sobel gradients, three-component region segmentation and the weighted
//! 3-PSNR / 3-SSIM variants, plus the per-dataset evaluation report.
//!
//! Everything here is value-level (no gradients) and runs on the 0..255
//! pixel scale.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops::{self, Window};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// BT.601 full-range luminance weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Y channel of an RGB image: `0.299 R + 0.587 G + 0.114 B`.
pub fn luminance<T: Scalar>(image: &Tensor4<T>) -> Result<Tensor4<T>> {
    let s = image.shape();
    if s.ch != 3 {
        return Err(Error::usage(format!(
            "luminance expects 3 channels, got {}",
            s.ch
        )));
    }
    let w: [T; 3] = [
        T::of(LUMA_WEIGHTS[0]),
        T::of(LUMA_WEIGHTS[1]),
        T::of(LUMA_WEIGHTS[2]),
    ];
    Ok(Tensor4::from_fn(Shape4::new(s.n, 1, s.h, s.w), |b, _, y, x| {
        w[0] * image.at(b, 0, y, x) + w[1] * image.at(b, 1, y, x) + w[2] * image.at(b, 2, y, x)
    }))
}

/// Mean squared difference over all elements of two same-shaped tensors.
pub fn mse<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!(
            "mse shape mismatch: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.shape().count() as f64)
}

/// Peak signal-to-noise ratio in decibels on the 0..255 scale. Identical
/// inputs give `+inf`.
pub fn psnr_of_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

pub fn psnr<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<f64> {
    Ok(psnr_of_mse(mse(a, b)?))
}

/// PSNR of the luminance channels of two RGB images.
pub fn psnr_luma<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<f64> {
    psnr(&luminance(a)?, &luminance(b)?)
}

/// Sobel gradient magnitude with replicate padding, so the output matches
/// the input extent.
pub fn sobel_mag<T: Scalar>(image: &Tensor4<T>) -> Result<Tensor4<T>> {
    if image.shape().ch != 1 {
        return Err(Error::usage(format!(
            "sobel expects a single channel, got {}",
            image.shape().ch
        )));
    }
    let padded = ops::pad_replicate(image, 1);
    let gx = ops::filter2d_valid(&padded, &Window::sobel_x())?;
    let gy = ops::filter2d_valid(&padded, &Window::sobel_y())?;
    gx.zip_map(&gy, |a, b| (a * a + b * b).sqrt())
}

/// Per-pixel region label of the three-component decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Edge,
    Texture,
    Smooth,
}

pub const REGIONS: [Region; 3] = [Region::Edge, Region::Texture, Region::Smooth];

/// Fractions of the maximum Sobel magnitude that delimit the regions.
#[derive(Clone, Copy, Debug)]
pub struct RegionThresholds {
    pub edge_frac: f64,
    pub smooth_frac: f64,
}

impl Default for RegionThresholds {
    fn default() -> Self {
        RegionThresholds {
            edge_frac: 0.12,
            smooth_frac: 0.06,
        }
    }
}

/// Total, exclusive labeling of every pixel as edge, texture or smooth.
#[derive(Clone, Debug)]
pub struct RegionMask {
    pub labels: Vec<Region>,
    pub h: usize,
    pub w: usize,
    pub t_edge: f64,
    pub t_texture: f64,
    pub g_max: f64,
}

impl RegionMask {
    pub fn label(&self, y: usize, x: usize) -> Region {
        self.labels[y * self.w + x]
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|&&r| r == region).count()
    }
}

/// Segment a luminance image by Sobel magnitude: edge above
/// `edge_frac * g_max`, smooth below `smooth_frac * g_max`, texture between.
/// A constant image (zero gradient everywhere) is all smooth.
pub fn segment_regions<T: Scalar>(
    hr_luminance: &Tensor4<T>,
    thresholds: RegionThresholds,
) -> Result<RegionMask> {
    let g = sobel_mag(hr_luminance)?;
    let s = g.shape();
    let g_max = g.iter().fold(0.0f64, |m, &v| m.max(v.as_f64()));
    let t_edge = thresholds.edge_frac * g_max;
    let t_texture = thresholds.smooth_frac * g_max;
    let labels = if g_max == 0.0 {
        vec![Region::Smooth; s.h * s.w]
    } else {
        g.iter()
            .map(|&v| {
                let v = v.as_f64();
                if v > t_edge {
                    Region::Edge
                } else if v < t_texture {
                    Region::Smooth
                } else {
                    Region::Texture
                }
            })
            .collect()
    };
    Ok(RegionMask {
        labels,
        h: s.h,
        w: s.w,
        t_edge,
        t_texture,
        g_max,
    })
}

/// Per-region weights of the 3-component metrics, ordered
/// (edge, texture, smooth).
#[derive(Clone, Copy, Debug)]
pub struct RegionWeights {
    pub edge: f64,
    pub texture: f64,
    pub smooth: f64,
}

impl RegionWeights {
    pub fn new(edge: f64, texture: f64, smooth: f64) -> Result<Self> {
        if edge < 0.0 || texture < 0.0 || smooth < 0.0 {
            return Err(Error::config("region weights must be non-negative"));
        }
        if edge + texture + smooth <= 0.0 {
            return Err(Error::config("at least one region weight must be positive"));
        }
        Ok(RegionWeights {
            edge,
            texture,
            smooth,
        })
    }

    /// The published best-performing 3-PSNR weights.
    pub fn psnr3_default() -> Self {
        RegionWeights {
            edge: 0.7,
            texture: 0.15,
            smooth: 0.15,
        }
    }

    /// The published best-performing 3-SSIM weights.
    pub fn ssim3_default() -> Self {
        RegionWeights {
            edge: 1.0,
            texture: 0.0,
            smooth: 0.0,
        }
    }

    pub fn get(&self, region: Region) -> f64 {
        match region {
            Region::Edge => self.edge,
            Region::Texture => self.texture,
            Region::Smooth => self.smooth,
        }
    }
}

/// Weighted combination over non-empty regions:
/// `sum(w_r * v_r) / sum(w_r)` with empty regions excluded from both sums.
/// Returns 0 when every non-empty region has zero weight.
fn combine_regions(values: &[(Region, Option<f64>)], weights: &RegionWeights) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(region, value) in values {
        if let Some(v) = value {
            let w = weights.get(region);
            num += w * v;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// 3-PSNR: PSNR of the region-weighted luminance MSE.
pub fn weighted_psnr_3<T: Scalar>(
    sr: &Tensor4<T>,
    hr: &Tensor4<T>,
    weights: &RegionWeights,
    thresholds: RegionThresholds,
) -> Result<f64> {
    if sr.shape() != hr.shape() {
        return Err(Error::usage(format!(
            "3-psnr shape mismatch: {} vs {}",
            sr.shape(),
            hr.shape()
        )));
    }
    let sr_l = luminance(sr)?;
    let hr_l = luminance(hr)?;
    let mask = segment_regions(&hr_l, thresholds)?;
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let s = sr_l.shape();
    for b in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let r = mask.label(y, x) as usize;
                let d = sr_l.at(b, 0, y, x).as_f64() - hr_l.at(b, 0, y, x).as_f64();
                sums[r] += d * d;
                counts[r] += 1;
            }
        }
    }
    let values: Vec<(Region, Option<f64>)> = REGIONS
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            (
                r,
                if counts[i] > 0 {
                    Some(sums[i] / counts[i] as f64)
                } else {
                    None
                },
            )
        })
        .collect();
    Ok(psnr_of_mse(combine_regions(&values, weights)))
}

/// Parameters of the structural-similarity family.
#[derive(Clone, Debug)]
pub struct SsimParams {
    /// Gaussian window size (odd).
    pub window: usize,
    pub sigma: f64,
    /// Pixel value range the stabilizers scale with: 255 for metric use,
    /// 1 for losses on internally scaled images.
    pub data_range: f64,
    /// Number of dyadic scales for MS-SSIM.
    pub scales: usize,
    /// Per-scale exponents; the luminance exponent equals the last entry.
    /// Normalized to sum to 1 on construction.
    pub weights: Vec<f64>,
}

/// The canonical five-scale MS-SSIM exponents.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

impl SsimParams {
    pub fn new(window: usize, sigma: f64, data_range: f64, scales: usize) -> Result<Self> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(Error::config(format!(
                "ssim window must be odd and >= 3, got {window}"
            )));
        }
        if sigma <= 0.0 || data_range <= 0.0 {
            return Err(Error::config("ssim sigma and data range must be positive"));
        }
        if scales == 0 || scales > MSSSIM_WEIGHTS.len() {
            return Err(Error::config(format!(
                "ms-ssim supports 1..={} scales, got {scales}",
                MSSSIM_WEIGHTS.len()
            )));
        }
        let mut weights: Vec<f64> = MSSSIM_WEIGHTS[..scales].to_vec();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Ok(SsimParams {
            window,
            sigma,
            data_range,
            scales,
            weights,
        })
    }

    /// Metric defaults: 11-tap window, sigma 1.5, 0..255 range, 5 scales.
    pub fn metric_default() -> Self {
        Self::new(11, 1.5, 255.0, 5).expect("default parameters are valid")
    }

    /// Loss defaults on the internal 0..1 scale.
    pub fn loss_default() -> Self {
        Self::new(11, 1.5, 1.0, 5).expect("default parameters are valid")
    }

    pub fn with_scales(self, scales: usize) -> Result<Self> {
        Self::new(self.window, self.sigma, self.data_range, scales)
    }

    /// Override the per-scale exponents (they are re-normalized to sum 1).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.scales || weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::config(
                "ms-ssim weights must be positive, one per scale",
            ));
        }
        let sum: f64 = weights.iter().sum();
        self.weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(self)
    }

    pub fn c1(&self) -> f64 {
        (0.01 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (0.03 * self.data_range).powi(2)
    }

    /// Largest scale count the image extent supports:
    /// dims must stay >= window after `scales - 1` halvings.
    pub fn max_feasible_scales(&self, h: usize, w: usize) -> usize {
        let mut m = 0;
        let (mut h, mut w) = (h, w);
        while h >= self.window && w >= self.window && m < MSSSIM_WEIGHTS.len() {
            m += 1;
            h /= 2;
            w /= 2;
        }
        m
    }
}

/// The SSIM factor maps of one comparison: the product map and the separate
/// luminance and contrast-structure factors (the latter feeds MS-SSIM).
pub struct SsimMaps<T> {
    pub ssim: Tensor4<T>,
    pub l: Tensor4<T>,
    pub cs: Tensor4<T>,
}

/// Local-statistics SSIM over a Gaussian window, valid mode (the map is
/// `window - 1` smaller than the input in each spatial dimension).
pub fn ssim_maps<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>, p: &SsimParams) -> Result<SsimMaps<T>> {
    if x.shape() != y.shape() {
        return Err(Error::usage(format!(
            "ssim shape mismatch: {} vs {}",
            x.shape(),
            y.shape()
        )));
    }
    if x.shape().h < p.window || x.shape().w < p.window {
        return Err(Error::usage(format!(
            "image {}x{} is smaller than the ssim window {}",
            x.shape().h,
            x.shape().w,
            p.window
        )));
    }
    let win = Window::<T>::gaussian(p.window, p.sigma);
    let mu_x = ops::filter2d_valid(x, &win)?;
    let mu_y = ops::filter2d_valid(y, &win)?;
    let xx = ops::filter2d_valid(&x.zip_map(x, |a, b| a * b)?, &win)?;
    let yy = ops::filter2d_valid(&y.zip_map(y, |a, b| a * b)?, &win)?;
    let xy = ops::filter2d_valid(&x.zip_map(y, |a, b| a * b)?, &win)?;

    let c1 = T::of(p.c1());
    let c2 = T::of(p.c2());
    let two = T::of(2.0);
    let shape = mu_x.shape();
    let mut l = Tensor4::zeros(shape);
    let mut cs = Tensor4::zeros(shape);
    let mut ssim = Tensor4::zeros(shape);
    for (i, ld) in l.data_mut().iter_mut().enumerate() {
        let mx = mu_x.data()[i];
        let my = mu_y.data()[i];
        *ld = (two * mx * my + c1) / (mx * mx + my * my + c1);
    }
    for (i, cd) in cs.data_mut().iter_mut().enumerate() {
        let mx = mu_x.data()[i];
        let my = mu_y.data()[i];
        let sx = xx.data()[i] - mx * mx;
        let sy = yy.data()[i] - my * my;
        let sxy = xy.data()[i] - mx * my;
        *cd = (two * sxy + c2) / (sx + sy + c2);
    }
    for (i, sd) in ssim.data_mut().iter_mut().enumerate() {
        *sd = l.data()[i] * cs.data()[i];
    }
    Ok(SsimMaps { ssim, l, cs })
}

fn tensor_mean<T: Scalar>(t: &Tensor4<T>) -> f64 {
    t.iter().map(|&v| v.as_f64()).sum::<f64>() / t.shape().count() as f64
}

/// Mean SSIM over all valid window positions (and channels).
pub fn ssim_value<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>, p: &SsimParams) -> Result<f64> {
    Ok(tensor_mean(&ssim_maps(x, y, p)?.ssim))
}

/// Multi-scale SSIM. Scales below the coarsest contribute the mean of their
/// contrast-structure map; the coarsest scale contributes the mean of the
/// full SSIM map (luminance enters only there). Factors are floored at zero
/// before exponentiation.
pub fn ms_ssim_value<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>, p: &SsimParams) -> Result<f64> {
    let feasible = p.max_feasible_scales(x.shape().h, x.shape().w);
    if feasible < p.scales {
        return Err(Error::usage(format!(
            "image {}x{} supports at most {} ms-ssim scales, {} requested",
            x.shape().h,
            x.shape().w,
            feasible,
            p.scales
        )));
    }
    let mut cur_x = x.clone();
    let mut cur_y = y.clone();
    let mut score = 1.0f64;
    for scale in 0..p.scales {
        let maps = ssim_maps(&cur_x, &cur_y, p)?;
        let factor = if scale + 1 == p.scales {
            tensor_mean(&maps.ssim)
        } else {
            tensor_mean(&maps.cs)
        };
        score *= if p.weights[scale] == 1.0 {
            factor
        } else {
            factor.max(0.0).powf(p.weights[scale])
        };
        if scale + 1 != p.scales {
            cur_x = ops::avg_pool2(&cur_x)?;
            cur_y = ops::avg_pool2(&cur_y)?;
        }
    }
    Ok(score)
}

/// 3-SSIM: region-weighted mean of the luminance SSIM map. The map is
/// aligned to the region mask by the window half-width offset.
pub fn weighted_ssim_3<T: Scalar>(
    sr: &Tensor4<T>,
    hr: &Tensor4<T>,
    weights: &RegionWeights,
    thresholds: RegionThresholds,
    p: &SsimParams,
) -> Result<f64> {
    if sr.shape() != hr.shape() {
        return Err(Error::usage(format!(
            "3-ssim shape mismatch: {} vs {}",
            sr.shape(),
            hr.shape()
        )));
    }
    let sr_l = luminance(sr)?;
    let hr_l = luminance(hr)?;
    let mask = segment_regions(&hr_l, thresholds)?;
    let maps = ssim_maps(&sr_l, &hr_l, p)?;
    let off = (p.window - 1) / 2;
    let s = maps.ssim.shape();
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for b in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let r = mask.label(y + off, x + off) as usize;
                sums[r] += maps.ssim.at(b, 0, y, x).as_f64();
                counts[r] += 1;
            }
        }
    }
    let values: Vec<(Region, Option<f64>)> = REGIONS
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            (
                r,
                if counts[i] > 0 {
                    Some(sums[i] / counts[i] as f64)
                } else {
                    None
                },
            )
        })
        .collect();
    Ok(combine_regions(&values, weights))
}

/// Which channels full-image PSNR / SSIM / MS-SSIM run on. The 3-component
/// metrics always use luminance for segmentation and comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    Rgb,
    Luminance,
}

impl ChannelMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(ChannelMode::Rgb),
            "luminance" | "luma" | "y" => Ok(ChannelMode::Luminance),
            other => Err(Error::config(format!("unknown channel mode '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelMode::Rgb => "rgb",
            ChannelMode::Luminance => "luminance",
        }
    }
}

/// Settings of a dataset evaluation run.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub channel: ChannelMode,
    /// Pixels cropped from each side of both images before any metric.
    pub border_crop: usize,
    pub thresholds: RegionThresholds,
    pub psnr3_weights: RegionWeights,
    pub ssim3_weights: RegionWeights,
    pub ssim: SsimParams,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            channel: ChannelMode::Rgb,
            border_crop: 0,
            thresholds: RegionThresholds::default(),
            psnr3_weights: RegionWeights::psnr3_default(),
            ssim3_weights: RegionWeights::ssim3_default(),
            ssim: SsimParams::metric_default(),
        }
    }
}

pub fn crop_border<T: Scalar>(t: &Tensor4<T>, px: usize) -> Result<Tensor4<T>> {
    if px == 0 {
        return Ok(t.clone());
    }
    let s = t.shape();
    if s.h <= 2 * px || s.w <= 2 * px {
        return Err(Error::usage(format!(
            "cannot crop {px} border pixels from a {}x{} image",
            s.h, s.w
        )));
    }
    Ok(Tensor4::from_fn(
        Shape4::new(s.n, s.ch, s.h - 2 * px, s.w - 2 * px),
        |b, c, y, x| t.at(b, c, y + px, x + px),
    ))
}

/// One evaluated image.
#[derive(Clone, Debug)]
pub struct EvalRow {
    pub image: String,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub psnr3: f64,
    pub ssim3: f64,
    /// Reserved column for externally computed perceptual-difference values.
    pub flip: Option<f64>,
}

/// Full metric comparison of one SR/HR pair under the given settings.
/// MS-SSIM automatically uses the largest feasible scale count (up to the
/// configured one) so small images remain evaluable.
pub fn evaluate_pair<T: Scalar>(
    image: &str,
    sr: &Tensor4<T>,
    hr: &Tensor4<T>,
    settings: &EvalSettings,
) -> Result<EvalRow> {
    if sr.shape() != hr.shape() {
        return Err(Error::usage(format!(
            "evaluate {image}: shape mismatch {} vs {}",
            sr.shape(),
            hr.shape()
        )));
    }
    let sr = crop_border(sr, settings.border_crop)?;
    let hr = crop_border(hr, settings.border_crop)?;
    let (sr_m, hr_m) = match settings.channel {
        ChannelMode::Rgb => (sr.clone(), hr.clone()),
        ChannelMode::Luminance => (luminance(&sr)?, luminance(&hr)?),
    };
    let feasible = settings
        .ssim
        .max_feasible_scales(sr_m.shape().h, sr_m.shape().w);
    if feasible == 0 {
        return Err(Error::usage(format!(
            "evaluate {image}: image smaller than the ssim window"
        )));
    }
    let ms_params = settings
        .ssim
        .clone()
        .with_scales(feasible.min(settings.ssim.scales))?;
    Ok(EvalRow {
        image: image.to_string(),
        psnr: psnr(&sr_m, &hr_m)?,
        ssim: ssim_value(&sr_m, &hr_m, &settings.ssim)?,
        ms_ssim: ms_ssim_value(&sr_m, &hr_m, &ms_params)?,
        psnr3: weighted_psnr_3(&sr, &hr, &settings.psnr3_weights, settings.thresholds)?,
        ssim3: weighted_ssim_3(
            &sr,
            &hr,
            &settings.ssim3_weights,
            settings.thresholds,
            &settings.ssim,
        )?,
        flip: None,
    })
}

/// Per-image and aggregate results of a dataset run.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub dataset: String,
    pub scale: usize,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(dataset: impl Into<String>, scale: usize) -> Self {
        EvalReport {
            dataset: dataset.into(),
            scale,
            rows: Vec::new(),
        }
    }

    fn mean(&self, f: impl Fn(&EvalRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(&f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_psnr(&self) -> f64 {
        self.mean(|r| r.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        self.mean(|r| r.ssim)
    }

    pub fn mean_ms_ssim(&self) -> f64 {
        self.mean(|r| r.ms_ssim)
    }

    pub fn mean_psnr3(&self) -> f64 {
        self.mean(|r| r.psnr3)
    }

    pub fn mean_ssim3(&self) -> f64 {
        self.mean(|r| r.ssim3)
    }

    /// Comma-separated table, one row per image. PSNR of identical images
    /// serializes as the literal `inf`.
    pub fn to_csv(&self) -> String {
        let has_flip = self.rows.iter().any(|r| r.flip.is_some());
        let mut out = String::from("image,psnr,ssim,ms_ssim,psnr3,ssim3");
        if has_flip {
            out.push_str(",flip");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.image, r.psnr, r.ssim, r.ms_ssim, r.psnr3, r.ssim3
            );
            if has_flip {
                let _ = match r.flip {
                    Some(v) => write!(out, ",{v}"),
                    None => write!(out, ","),
                };
            }
            out.push('\n');
        }
        out
    }

    /// Flat key-value summary of the aggregates.
    pub fn summary_text(&self) -> String {
        format!(
            "dataset = {}\nscale = {}\nimages = {}\nmean_psnr = {}\nmean_ssim = {}\nmean_ms_ssim = {}\nmean_psnr3 = {}\nmean_ssim3 = {}\n",
            self.dataset,
            self.scale,
            self.rows.len(),
            self.mean_psnr(),
            self.mean_ssim(),
            self.mean_ms_ssim(),
            self.mean_psnr3(),
            self.mean_ssim3()
        )
    }
}

//! Flat key-value run configuration: a plain-text file with dotted
//! namespaces (`model.blocks = 7`, `loss.name = "adaptive"`), merged with
//! command-line overrides. Unknown keys are rejected, every violation
//! reported at once, and the resolved configuration serializes back to the
//! same format so any run is re-derivable from its artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::{BarronParams, LossKind, LossSpec};
use crate::metrics::{ChannelMode, EvalSettings, RegionWeights, SsimParams};
use crate::model::ModelConfig;
use crate::ops::ActKind;
use crate::train::TrainConfig;

/// Dataset location and split names.
#[derive(Clone, Debug)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    pub train_split: String,
    /// `None` disables validation.
    pub val_split: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            train_split: "train".to_string(),
            val_split: Some("valid".to_string()),
        }
    }
}

/// The merged view of everything a run needs.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossSpec,
    pub data: DataConfig,
    pub eval: EvalSettings,
}

/// Parse the `key = value` lines of a configuration text. `#` starts a
/// comment; values may be double-quoted. Duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected 'key = value'", lineno + 1));
            continue;
        };
        let key = key.trim().to_string();
        let mut value = value.trim().to_string();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = value[1..value.len() - 1].to_string();
        }
        if map.insert(key.clone(), value).is_some() {
            problems.push(format!("line {}: duplicate key '{key}'", lineno + 1));
        }
    }
    if problems.is_empty() {
        Ok(map)
    } else {
        Err(Error::config(problems.join("; ")))
    }
}

/// Short aliases accepted on input; the canonical name is what
/// [`RunConfig::to_text`] emits.
fn canonical_key(key: &str) -> String {
    match key {
        "model.B" => "model.blocks",
        "model.L" => "model.layers",
        "model.c" => "model.caps",
        "model.F" => "model.filters",
        "model.k" => "model.kernel",
        "model.r" => "model.scale",
        "loss" => "loss.name",
        other => other,
    }
    .to_string()
}

struct KvReader {
    map: BTreeMap<String, String>,
    problems: Vec<String>,
}

impl KvReader {
    fn new(map: BTreeMap<String, String>) -> Self {
        let map = map
            .into_iter()
            .map(|(k, v)| (canonical_key(&k), v))
            .collect();
        KvReader {
            map,
            problems: Vec::new(),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn set_usize(&mut self, key: &str, slot: &mut usize) {
        if let Some(v) = self.take(key) {
            match v.parse() {
                Ok(x) => *slot = x,
                Err(_) => self.problems.push(format!("{key}: '{v}' is not an integer")),
            }
        }
    }

    fn set_u64(&mut self, key: &str, slot: &mut u64) {
        if let Some(v) = self.take(key) {
            match v.parse() {
                Ok(x) => *slot = x,
                Err(_) => self.problems.push(format!("{key}: '{v}' is not an integer")),
            }
        }
    }

    fn set_f64(&mut self, key: &str, slot: &mut f64) {
        if let Some(v) = self.take(key) {
            match v.parse() {
                Ok(x) => *slot = x,
                Err(_) => self.problems.push(format!("{key}: '{v}' is not a number")),
            }
        }
    }

    fn set_bool(&mut self, key: &str, slot: &mut bool) {
        if let Some(v) = self.take(key) {
            match v.as_str() {
                "true" | "1" | "yes" => *slot = true,
                "false" | "0" | "no" => *slot = false,
                _ => self.problems.push(format!("{key}: '{v}' is not a boolean")),
            }
        }
    }

    fn finish(mut self) -> Result<()> {
        for key in self.map.keys() {
            self.problems.push(format!("unknown key '{key}'"));
        }
        if self.problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(self.problems.join("; ")))
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_kv(parse_kv(text)?)?;
        Ok(cfg)
    }

    /// Apply `key = value` overrides on top of the current configuration.
    /// Every violated key is reported.
    pub fn apply_kv(&mut self, map: BTreeMap<String, String>) -> Result<()> {
        let mut r = KvReader::new(map);

        r.set_usize("model.blocks", &mut self.model.blocks);
        r.set_usize("model.layers", &mut self.model.layers);
        r.set_usize("model.caps", &mut self.model.caps);
        r.set_usize("model.filters", &mut self.model.filters);
        r.set_usize("model.kernel", &mut self.model.kernel);
        r.set_usize("model.stride", &mut self.model.stride);
        r.set_usize("model.scale", &mut self.model.scale);
        r.set_f64("model.res_scale", &mut self.model.res_scale);
        r.set_f64("model.sq", &mut self.model.sq);
        r.set_bool("model.caps_squash", &mut self.model.caps_squash);
        r.set_bool("model.caps_act", &mut self.model.caps_act);
        if let Some(v) = r.take("model.act") {
            match ActKind::parse(&v) {
                Ok(a) => self.model.act = a,
                Err(e) => r.problems.push(e.to_string()),
            }
        }

        r.set_usize("train.epochs", &mut self.train.epochs);
        r.set_usize("train.batch", &mut self.train.batch);
        r.set_f64("train.lr", &mut self.train.lr);
        r.set_usize("train.lr_halve_every", &mut self.train.lr_halve_every);
        r.set_f64("train.beta1", &mut self.train.beta1);
        r.set_f64("train.beta2", &mut self.train.beta2);
        r.set_f64("train.eps", &mut self.train.eps);
        r.set_u64("seed", &mut self.train.seed);
        r.set_usize("train.patch_size", &mut self.train.patch_size);
        r.set_bool("train.augment", &mut self.train.augment);
        r.set_usize("train.val_every", &mut self.train.val_every);
        r.set_usize("train.checkpoint_every", &mut self.train.checkpoint_every);
        r.set_bool("train.deterministic", &mut self.train.deterministic);
        if let Some(v) = r.take("train.grad_clip") {
            if v == "none" {
                self.train.grad_clip = None;
            } else {
                match v.parse() {
                    Ok(x) => self.train.grad_clip = Some(x),
                    Err(_) => r
                        .problems
                        .push(format!("train.grad_clip: '{v}' is not a number or 'none'")),
                }
            }
        }

        if let Some(v) = r.take("loss.name") {
            match LossKind::parse(&v) {
                Ok(k) => {
                    self.loss.kind = k;
                    self.loss.barron.learnable = k == LossKind::Adaptive;
                }
                Err(e) => r.problems.push(e.to_string()),
            }
        }
        r.set_f64("mix.w_l1", &mut self.loss.mix_w_l1);
        r.set_f64("mix.w_msssim", &mut self.loss.mix_w_msssim);
        r.set_f64("barron.alpha", &mut self.loss.barron.alpha);
        r.set_f64("barron.c", &mut self.loss.barron.c);
        r.set_f64("sobel.w_pixels", &mut self.loss.sobel_w_pixels);
        r.set_f64("sobel.w_edges", &mut self.loss.sobel_w_edges);
        let mut psnr3 = [
            self.loss.region_weights_psnr3.edge,
            self.loss.region_weights_psnr3.texture,
            self.loss.region_weights_psnr3.smooth,
        ];
        r.set_f64("region.psnr3.w_edge", &mut psnr3[0]);
        r.set_f64("region.psnr3.w_texture", &mut psnr3[1]);
        r.set_f64("region.psnr3.w_smooth", &mut psnr3[2]);
        let mut ssim3 = [
            self.loss.region_weights_ssim3.edge,
            self.loss.region_weights_ssim3.texture,
            self.loss.region_weights_ssim3.smooth,
        ];
        r.set_f64("region.ssim3.w_edge", &mut ssim3[0]);
        r.set_f64("region.ssim3.w_texture", &mut ssim3[1]);
        r.set_f64("region.ssim3.w_smooth", &mut ssim3[2]);
        match RegionWeights::new(psnr3[0], psnr3[1], psnr3[2]) {
            Ok(w) => self.loss.region_weights_psnr3 = w,
            Err(e) => r.problems.push(e.to_string()),
        }
        match RegionWeights::new(ssim3[0], ssim3[1], ssim3[2]) {
            Ok(w) => self.loss.region_weights_ssim3 = w,
            Err(e) => r.problems.push(e.to_string()),
        }
        let mut thresholds = self.loss.thresholds;
        r.set_f64("region.edge_frac", &mut thresholds.edge_frac);
        r.set_f64("region.smooth_frac", &mut thresholds.smooth_frac);
        self.loss.thresholds = thresholds;
        self.eval.thresholds = thresholds;

        let mut win = self.loss.ssim.window;
        let mut sigma = self.loss.ssim.sigma;
        let mut scales = self.loss.ssim.scales;
        r.set_usize("ssim.window", &mut win);
        r.set_f64("ssim.sigma", &mut sigma);
        r.set_usize("ssim.scales", &mut scales);
        match SsimParams::new(win, sigma, 1.0, scales) {
            Ok(p) => self.loss.ssim = p,
            Err(e) => r.problems.push(e.to_string()),
        }

        if let Some(v) = r.take("data.root") {
            self.data.root = if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        }
        if let Some(v) = r.take("data.train_split") {
            self.data.train_split = v;
        }
        if let Some(v) = r.take("data.val_split") {
            self.data.val_split = if v == "none" || v.is_empty() { None } else { Some(v) };
        }

        if let Some(v) = r.take("eval.channel") {
            match ChannelMode::parse(&v) {
                Ok(m) => self.eval.channel = m,
                Err(e) => r.problems.push(e.to_string()),
            }
        }
        r.set_usize("eval.border_crop", &mut self.eval.border_crop);

        r.finish()
    }

    /// Deterministic resolved snapshot; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("barron.alpha", self.loss.barron.alpha.to_string());
        kv("barron.c", self.loss.barron.c.to_string());
        kv(
            "data.root",
            self.data
                .root
                .as_ref()
                .map(|p| format!("\"{}\"", p.display()))
                .unwrap_or_else(|| "\"\"".to_string()),
        );
        kv("data.train_split", format!("\"{}\"", self.data.train_split));
        kv(
            "data.val_split",
            format!(
                "\"{}\"",
                self.data.val_split.clone().unwrap_or_else(|| "none".into())
            ),
        );
        kv("eval.border_crop", self.eval.border_crop.to_string());
        kv("eval.channel", self.eval.channel.name().to_string());
        kv("loss.name", self.loss.kind.name().to_string());
        kv("mix.w_l1", self.loss.mix_w_l1.to_string());
        kv("mix.w_msssim", self.loss.mix_w_msssim.to_string());
        kv("model.act", self.model.act.name().to_string());
        kv("model.blocks", self.model.blocks.to_string());
        kv("model.caps", self.model.caps.to_string());
        kv("model.caps_act", self.model.caps_act.to_string());
        kv("model.caps_squash", self.model.caps_squash.to_string());
        kv("model.filters", self.model.filters.to_string());
        kv("model.kernel", self.model.kernel.to_string());
        kv("model.layers", self.model.layers.to_string());
        kv("model.res_scale", self.model.res_scale.to_string());
        kv("model.scale", self.model.scale.to_string());
        kv("model.sq", self.model.sq.to_string());
        kv("model.stride", self.model.stride.to_string());
        kv("region.edge_frac", self.loss.thresholds.edge_frac.to_string());
        kv(
            "region.psnr3.w_edge",
            self.loss.region_weights_psnr3.edge.to_string(),
        );
        kv(
            "region.psnr3.w_smooth",
            self.loss.region_weights_psnr3.smooth.to_string(),
        );
        kv(
            "region.psnr3.w_texture",
            self.loss.region_weights_psnr3.texture.to_string(),
        );
        kv(
            "region.smooth_frac",
            self.loss.thresholds.smooth_frac.to_string(),
        );
        kv(
            "region.ssim3.w_edge",
            self.loss.region_weights_ssim3.edge.to_string(),
        );
        kv(
            "region.ssim3.w_smooth",
            self.loss.region_weights_ssim3.smooth.to_string(),
        );
        kv(
            "region.ssim3.w_texture",
            self.loss.region_weights_ssim3.texture.to_string(),
        );
        kv("seed", self.train.seed.to_string());
        kv("sobel.w_edges", self.loss.sobel_w_edges.to_string());
        kv("sobel.w_pixels", self.loss.sobel_w_pixels.to_string());
        kv("ssim.scales", self.loss.ssim.scales.to_string());
        kv("ssim.sigma", self.loss.ssim.sigma.to_string());
        kv("ssim.window", self.loss.ssim.window.to_string());
        kv("train.augment", self.train.augment.to_string());
        kv("train.batch", self.train.batch.to_string());
        kv("train.beta1", self.train.beta1.to_string());
        kv("train.beta2", self.train.beta2.to_string());
        kv(
            "train.checkpoint_every",
            self.train.checkpoint_every.to_string(),
        );
        kv(
            "train.deterministic",
            self.train.deterministic.to_string(),
        );
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.eps", self.train.eps.to_string());
        kv(
            "train.grad_clip",
            self.train
                .grad_clip
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".to_string()),
        );
        kv("train.lr", self.train.lr.to_string());
        kv(
            "train.lr_halve_every",
            self.train.lr_halve_every.to_string(),
        );
        kv("train.patch_size", self.train.patch_size.to_string());
        kv("train.val_every", self.train.val_every.to_string());
        s
    }

    /// Build the fixed/learnable robust-loss parameters consistent with the
    /// selected kind.
    pub fn barron_params(&self) -> Result<BarronParams> {
        if self.loss.kind == LossKind::Adaptive {
            Ok(BarronParams::adaptive())
        } else {
            BarronParams::fixed(self.loss.barron.alpha, self.loss.barron.c)
        }
    }
}

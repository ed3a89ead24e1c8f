//! The full super-resolution network: initial convolution, a stack of
//! residual dense capsule blocks, trailing convolution with a global
//! residual back to the first feature map, and the sub-pixel upsampling
//! tail. Also the checkpoint container.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::capsules::{Rdcb, RdcbVars};
use crate::error::{Error, Result};
use crate::nn::{ConvLayer, ConvVars};
use crate::ops::ActKind;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape4, Tensor4};

/// Architecture hyperparameters.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    /// Residual dense capsule blocks.
    pub blocks: usize,
    /// Capsule layers per block.
    pub layers: usize,
    /// Capsule types per layer.
    pub caps: usize,
    /// Feature channels throughout the trunk.
    pub filters: usize,
    /// Convolution kernel size (odd, same-padded).
    pub kernel: usize,
    pub stride: usize,
    pub act: ActKind,
    /// Scale applied to each block's fused branch.
    pub res_scale: f64,
    /// Squashing constant.
    pub sq: f64,
    /// Upscaling factor.
    pub scale: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// Open switches: the squash inside capsule layers and the activation
    /// after them can be disabled independently.
    pub caps_squash: bool,
    pub caps_act: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 7,
            layers: 3,
            caps: 4,
            filters: 128,
            kernel: 3,
            stride: 1,
            act: ActKind::Relu,
            res_scale: 0.25,
            sq: 1.0,
            scale: 4,
            in_ch: 3,
            out_ch: 3,
            caps_squash: true,
            caps_act: true,
        }
    }
}

impl ModelConfig {
    /// A small configuration for smoke tests and toy runs.
    pub fn tiny() -> Self {
        ModelConfig {
            blocks: 2,
            layers: 2,
            caps: 2,
            filters: 32,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.blocks == 0 {
            problems.push("blocks must be >= 1".to_string());
        }
        if self.layers == 0 {
            problems.push("layers must be >= 1".to_string());
        }
        if self.caps == 0 {
            problems.push("caps must be >= 1".to_string());
        } else if !self.filters.is_multiple_of(self.caps) {
            problems.push(format!(
                "filters {} not divisible by caps {}",
                self.filters, self.caps
            ));
        }
        if self.kernel.is_multiple_of(2) || self.kernel == 0 {
            problems.push(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.stride != 1 {
            problems.push(format!(
                "stride must be 1 to preserve block shapes, got {}",
                self.stride
            ));
        }
        if !(0.0..=1.0).contains(&self.res_scale) {
            problems.push(format!("res_scale must lie in [0, 1], got {}", self.res_scale));
        }
        if self.sq <= 0.0 {
            problems.push(format!("sq must be positive, got {}", self.sq));
        }
        if !matches!(self.scale, 2..=4) {
            problems.push(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.in_ch == 0 || self.out_ch == 0 {
            problems.push("channel counts must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    fn same_pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Sub-pixel stages for the configured scale: shuffle factors per stage.
    fn up_factors(&self) -> Vec<usize> {
        match self.scale {
            2 => vec![2],
            3 => vec![3],
            _ => vec![2, 2],
        }
    }
}

/// Parameter counts per module plus a receptive-field estimate.
#[derive(Clone, Debug)]
pub struct ModelSummary {
    pub total: usize,
    pub per_module: Vec<(String, usize)>,
    /// Approximate receptive field in low-resolution pixels.
    pub receptive_field: usize,
}

/// Tape handles for all model parameters within one step.
pub struct ModelVars {
    pub head: ConvVars,
    pub blocks: Vec<RdcbVars>,
    pub trail: ConvVars,
    pub up: Vec<ConvVars>,
    pub out: ConvVars,
}

/// The assembled model. Parameters are owned `f32`/`f64` tensors; each
/// training step registers them on a fresh tape.
#[derive(Clone, Debug)]
pub struct SrCaps<T> {
    pub cfg: ModelConfig,
    pub seed: u64,
    head: ConvLayer<T>,
    blocks: Vec<Rdcb<T>>,
    trail: ConvLayer<T>,
    up_stages: Vec<ConvLayer<T>>,
    up_factors: Vec<usize>,
    out: ConvLayer<T>,
}

impl<T: Scalar> SrCaps<T> {
    /// Deterministic construction: identical seed and config give bitwise
    /// identical parameters.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pad = cfg.same_pad();
        let head = ConvLayer::init(cfg.filters, cfg.in_ch, cfg.kernel, 1, pad, &mut rng);
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for _ in 0..cfg.blocks {
            let mut block = Rdcb::init(
                cfg.layers,
                cfg.caps,
                cfg.filters,
                cfg.kernel,
                cfg.sq,
                cfg.res_scale,
                cfg.act,
                &mut rng,
            )?;
            block.act_enabled = cfg.caps_act;
            for layer in &mut block.layers {
                layer.squash_enabled = cfg.caps_squash;
            }
            blocks.push(block);
        }
        let trail = ConvLayer::init(cfg.filters, cfg.filters, cfg.kernel, 1, pad, &mut rng);
        let up_factors = cfg.up_factors();
        let up_stages = up_factors
            .iter()
            .map(|&f| {
                ConvLayer::init(
                    cfg.filters * f * f,
                    cfg.filters,
                    cfg.kernel,
                    1,
                    pad,
                    &mut rng,
                )
            })
            .collect();
        let out = ConvLayer::init(cfg.out_ch, cfg.filters, cfg.kernel, 1, pad, &mut rng);
        Ok(SrCaps {
            cfg,
            seed,
            head,
            blocks,
            trail,
            up_stages,
            up_factors,
            out,
        })
    }

    pub fn summary(&self) -> ModelSummary {
        let mut per_module = vec![("head".to_string(), self.head.param_count())];
        for (i, b) in self.blocks.iter().enumerate() {
            per_module.push((format!("block{i}"), b.param_count()));
        }
        per_module.push(("trail".to_string(), self.trail.param_count()));
        for (i, s) in self.up_stages.iter().enumerate() {
            per_module.push((format!("up{i}"), s.param_count()));
        }
        per_module.push(("out".to_string(), self.out.param_count()));
        let total = per_module.iter().map(|(_, c)| c).sum();

        // Each same-padded kxk conv widens the field by k-1 at its working
        // resolution; upsampling divides the contribution in input pixels.
        let k1 = self.cfg.kernel - 1;
        let trunk_convs = 1 + self.cfg.blocks * self.cfg.layers + 1;
        let mut rf = 1 + k1 * trunk_convs;
        let mut res = 1usize;
        for &f in &self.up_factors {
            rf += k1.div_ceil(res);
            res *= f;
        }
        rf += k1.div_ceil(res);
        ModelSummary {
            total,
            per_module,
            receptive_field: rf,
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> ModelVars {
        ModelVars {
            head: self.head.register(tape),
            blocks: self.blocks.iter().map(|b| b.register(tape)).collect(),
            trail: self.trail.register(tape),
            up: self.up_stages.iter().map(|s| s.register(tape)).collect(),
            out: self.out.register(tape),
        }
    }

    pub fn register_frozen(&self, tape: &mut Tape<T>) -> ModelVars {
        ModelVars {
            head: self.head.register_frozen(tape),
            blocks: self
                .blocks
                .iter()
                .map(|b| b.register_frozen(tape))
                .collect(),
            trail: self.trail.register_frozen(tape),
            up: self
                .up_stages
                .iter()
                .map(|s| s.register_frozen(tape))
                .collect(),
            out: self.out.register_frozen(tape),
        }
    }

    /// Upsampling tail applied to a trunk feature map.
    pub fn upnet(&self, tape: &mut Tape<T>, vars: &ModelVars, features: Var) -> Result<Var> {
        if features.shape.ch != self.cfg.filters {
            return Err(Error::config(format!(
                "upnet expects {} channels, got {}",
                self.cfg.filters, features.shape.ch
            )));
        }
        let mut x = features;
        for (stage, (layer, &factor)) in self
            .up_stages
            .iter()
            .zip(&self.up_factors)
            .enumerate()
        {
            let conv = layer.forward(tape, &vars.up[stage], x)?;
            let shuffled = tape.pixel_shuffle(conv, factor)?;
            x = tape.activation(shuffled, self.cfg.act);
        }
        self.out.forward(tape, &vars.out, x)
    }

    /// Forward pass on the internal 0..1 scale: takes a 0..255 input
    /// variable, returns the unclamped super-resolved variable in 0..1.
    pub fn forward(&self, tape: &mut Tape<T>, vars: &ModelVars, lr: Var) -> Result<Var> {
        if lr.shape.ch != self.cfg.in_ch {
            return Err(Error::usage(format!(
                "model expects {} input channels, got {}",
                self.cfg.in_ch, lr.shape.ch
            )));
        }
        if lr.shape.h < self.cfg.kernel || lr.shape.w < self.cfg.kernel {
            return Err(Error::usage(format!(
                "input {}x{} is smaller than the {} kernel",
                lr.shape.h, lr.shape.w, self.cfg.kernel
            )));
        }
        let scaled = tape.scale(lr, 1.0 / 255.0);
        let pre = self.head.forward(tape, &vars.head, scaled)?;
        let f0 = tape.activation(pre, self.cfg.act);
        let mut h = f0;
        for (block, bvars) in self.blocks.iter().zip(&vars.blocks) {
            h = block.forward(tape, bvars, h)?;
        }
        let trailed = self.trail.forward(tape, &vars.trail, h)?;
        let fused = tape.add(trailed, f0)?;
        self.upnet(tape, vars, fused)
    }

    /// Inference: 0..255 input tensor to a clamped 0..255 output tensor of
    /// `scale` times the spatial extent.
    pub fn infer(&self, lr: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut tape = Tape::new();
        let vars = self.register_frozen(&mut tape);
        let input = tape.constant(lr.clone());
        let sr = self.forward(&mut tape, &vars, input)?;
        let hi = T::of(255.0);
        Ok(tape
            .value(sr)
            .map(|v| (v * hi).max(T::zero()).min(hi)))
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor4<T>)) {
        self.head.visit("head", f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("block{i}"), f);
        }
        self.trail.visit("trail", f);
        for (i, s) in self.up_stages.iter().enumerate() {
            s.visit(&format!("up{i}"), f);
        }
        self.out.visit("out", f);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor4<T>)) {
        self.head.visit_mut("head", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("block{i}"), f);
        }
        self.trail.visit_mut("trail", f);
        for (i, s) in self.up_stages.iter_mut().enumerate() {
            s.visit_mut(&format!("up{i}"), f);
        }
        self.out.visit_mut("out", f);
    }

    /// Ordered tape handles matching [`SrCaps::visit_params`] order.
    pub fn ordered_vars(vars: &ModelVars) -> Vec<Var> {
        let mut list = Vec::new();
        let push_conv = |list: &mut Vec<Var>, cv: &ConvVars| {
            list.push(cv.v);
            list.push(cv.g);
            list.push(cv.bias);
        };
        push_conv(&mut list, &vars.head);
        for b in &vars.blocks {
            for &k in &b.layers {
                list.push(k);
            }
            push_conv(&mut list, &b.fusion);
        }
        push_conv(&mut list, &vars.trail);
        for s in &vars.up {
            push_conv(&mut list, s);
        }
        push_conv(&mut list, &vars.out);
        list
    }

    /// Load parameter values by name, reporting every mismatch.
    pub fn load_params(&mut self, named: &[(String, Tensor4<T>)]) -> Result<()> {
        use std::collections::BTreeMap;
        let mut incoming: BTreeMap<&str, &Tensor4<T>> =
            named.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut problems = Vec::new();
        self.visit_params_mut(&mut |name, param| {
            match incoming.remove(name.as_str()) {
                Some(t) if t.shape() == param.shape() => *param = t.clone(),
                Some(t) => problems.push(format!(
                    "{name}: checkpoint shape {} vs model shape {}",
                    t.shape(),
                    param.shape()
                )),
                None => problems.push(format!("{name}: missing from checkpoint")),
            }
        });
        for (name, _) in incoming {
            problems.push(format!("{name}: not a model parameter"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(problems.join("; ")))
        }
    }
}

/// Serialized training state: config echo, seed, progress counters, named
/// parameter tensors in declared order, and optionally the optimizer
/// moments. Little-endian, length-prefixed, magic `SRCAPS1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config_text: String,
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
    pub params: Vec<(String, Tensor4<T>)>,
    pub optim: Option<OptimSnapshot<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimSnapshot<T> {
    pub t: u64,
    /// First and second moment per parameter, in parameter order.
    pub moments: Vec<(Tensor4<T>, Tensor4<T>)>,
}

const MAGIC: &[u8; 7] = b"SRCAPS1";

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(std::mem::size_of::<T>() as u8);
        let cfg = self.config_text.as_bytes();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, tensor) in &self.params {
            write_name(&mut out, name);
            write_tensor(&mut out, tensor);
        }
        match &self.optim {
            None => out.push(0),
            Some(snap) => {
                out.push(1);
                out.extend_from_slice(&snap.t.to_le_bytes());
                for (m, v) in &snap.moments {
                    write_tensor(&mut out, m);
                    write_tensor(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(7)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let width = r.take(1)?[0] as usize;
        if width != std::mem::size_of::<T>() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {width}-byte scalars, expected {}",
                std::mem::size_of::<T>()
            )));
        }
        let cfg_len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(cfg_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("config block not utf-8: {e}")))?;
        let seed = r.u64()?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.name()?;
            let tensor = r.tensor::<T>()?;
            params.push((name, tensor));
        }
        let optim = match r.take(1)?[0] {
            0 => None,
            1 => {
                let t = r.u64()?;
                let mut moments = Vec::with_capacity(count);
                for _ in 0..count {
                    let m = r.tensor::<T>()?;
                    let v = r.tensor::<T>()?;
                    moments.push((m, v));
                }
                Some(OptimSnapshot { t, moments })
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "bad optimizer-presence byte {other}"
                )))
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config_text,
            seed,
            epoch,
            step,
            params,
            optim,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn write_tensor<T: Scalar>(out: &mut Vec<u8>, t: &Tensor4<T>) {
    let s = t.shape();
    for d in [s.n, s.ch, s.h, s.w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    if std::mem::size_of::<T>() == 4 {
        for &v in t.iter() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    } else {
        for &v in t.iter() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("parameter name not utf-8: {e}")))
    }

    fn tensor<T: Scalar>(&mut self) -> Result<Tensor4<T>> {
        let n = self.u32()? as usize;
        let ch = self.u32()? as usize;
        let h = self.u32()? as usize;
        let w = self.u32()? as usize;
        let shape = Shape4::new(n, ch, h, w);
        let count = n
            .checked_mul(ch)
            .and_then(|v| v.checked_mul(h))
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::Checkpoint("tensor shape overflow".into()))?;
        let width = std::mem::size_of::<T>();
        let raw = self.take(count * width)?;
        let data: Vec<T> = if width == 4 {
            raw.chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect()
        } else {
            raw.chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
                .collect()
        };
        Tensor4::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_parameter_count_is_pinned() {
        let model = SrCaps::<f32>::build(ModelConfig::default(), 0).unwrap();
        let summary = model.summary();
        assert_eq!(summary.total, 4_779_014);
        let parts: usize = summary.per_module.iter().map(|(_, c)| c).sum();
        assert_eq!(parts, summary.total);
    }

    #[test]
    fn invalid_configs_are_rejected_with_reasons() {
        let bad = ModelConfig {
            blocks: 0,
            ..Default::default()
        };
        let err = SrCaps::<f32>::build(bad, 0).unwrap_err().to_string();
        assert!(err.contains("blocks"));

        let bad = ModelConfig {
            caps: 3,
            filters: 128,
            scale: 5,
            ..Default::default()
        };
        let err = SrCaps::<f32>::build(bad, 0).unwrap_err().to_string();
        assert!(err.contains("divisible") && err.contains("scale"));
    }

    #[test]
    fn tiny_config_runs_forward() {
        let cfg = ModelConfig {
            scale: 4,
            ..ModelConfig::tiny()
        };
        let model = SrCaps::<f32>::build(cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lr = Tensor4::rand_uniform(Shape4::new(1, 3, 16, 16), 0.0, 255.0, &mut rng);
        let sr = model.infer(&lr).unwrap();
        assert_eq!(sr.shape(), Shape4::new(1, 3, 64, 64));
        assert!(sr.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn forward_shapes_match_scale() {
        for (scale, h, w) in [(4usize, 32usize, 32usize), (2, 10, 14), (3, 9, 11)] {
            let cfg = ModelConfig {
                scale,
                blocks: 1,
                layers: 1,
                caps: 2,
                filters: 8,
                ..Default::default()
            };
            let model = SrCaps::<f32>::build(cfg, 3).unwrap();
            let lr = Tensor4::zeros(Shape4::new(1, 3, h, w));
            let sr = model.infer(&lr).unwrap();
            assert_eq!(sr.shape(), Shape4::new(1, 3, scale * h, scale * w));
        }
    }

    #[test]
    fn zero_trailing_conv_reduces_to_upnet_of_first_features() {
        let cfg = ModelConfig {
            blocks: 2,
            layers: 1,
            caps: 2,
            filters: 8,
            scale: 2,
            ..Default::default()
        };
        let mut model = SrCaps::<f64>::build(cfg, 4).unwrap();
        // zero the trailing conv entirely: t = 0 + f0
        model.trail.g = Tensor4::zeros(model.trail.g.shape());
        model.trail.bias = Tensor4::zeros(model.trail.bias.shape());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lr = Tensor4::rand_uniform(Shape4::new(1, 3, 8, 8), 0.0, 255.0, &mut rng);

        let mut tape = Tape::new();
        let vars = model.register_frozen(&mut tape);
        let input = tape.constant(lr.clone());
        let full = model.forward(&mut tape, &vars, input).unwrap();

        // reference: upnet applied to the first feature map only
        let scaled = tape.scale(input, 1.0 / 255.0);
        let pre = model.head.forward(&mut tape, &vars.head, scaled).unwrap();
        let f0 = tape.activation(pre, model.cfg.act);
        let reference = model.upnet(&mut tape, &vars, f0).unwrap();

        let diff = crate::check::max_abs_diff(tape.value(full), tape.value(reference));
        assert!(diff < 1e-12, "max diff {diff}");
    }

    #[test]
    fn deterministic_build_and_forward() {
        let cfg = ModelConfig {
            blocks: 1,
            layers: 1,
            caps: 2,
            filters: 8,
            scale: 2,
            ..Default::default()
        };
        let a = SrCaps::<f32>::build(cfg.clone(), 42).unwrap();
        let b = SrCaps::<f32>::build(cfg, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lr = Tensor4::rand_uniform(Shape4::new(1, 3, 8, 8), 0.0, 255.0, &mut rng);
        let sa = a.infer(&lr).unwrap();
        let sb = b.infer(&lr).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn fully_convolutional_tiles_agree_away_from_borders() {
        let cfg = ModelConfig {
            blocks: 1,
            layers: 1,
            caps: 2,
            filters: 8,
            scale: 2,
            ..Default::default()
        };
        let model = SrCaps::<f64>::build(cfg, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let full_in = Tensor4::rand_uniform(Shape4::new(1, 3, 24, 24), 0.0, 255.0, &mut rng);
        let full_out = model.infer(&full_in).unwrap();

        // two overlapping 16x16 tiles; compare deep interiors only
        for &off in &[0usize, 8] {
            let tile = Tensor4::from_fn(Shape4::new(1, 3, 16, 16), |b, c, y, x| {
                full_in.at(b, c, y + off, x + off)
            });
            let tile_out = model.infer(&tile).unwrap();
            let inset = 5; // beyond the receptive halo of the trunk
            let mut worst = 0.0f64;
            for c in 0..3 {
                for y in inset..16 - inset {
                    for x in inset..16 - inset {
                        let full_v = full_out.at(0, c, 2 * (y + off), 2 * (x + off));
                        let tile_v = tile_out.at(0, c, 2 * y, 2 * x);
                        worst = worst.max((full_v - tile_v).abs());
                    }
                }
            }
            assert!(worst < 1e-9, "tile at {off}: interior disagreement {worst}");
        }
    }

    #[test]
    fn forward_scales_dims_across_the_contract_range() {
        let cfg = ModelConfig {
            blocks: 1,
            layers: 1,
            caps: 2,
            filters: 8,
            scale: 4,
            ..Default::default()
        };
        let model = SrCaps::<f32>::build(cfg, 23).unwrap();
        for (h, w) in [(8, 8), (8, 64), (33, 17), (64, 64)] {
            let sr = model.infer(&Tensor4::zeros(Shape4::new(1, 3, h, w))).unwrap();
            assert_eq!(sr.shape(), Shape4::new(1, 3, 4 * h, 4 * w));
        }
    }

    #[test]
    fn small_inputs_are_rejected() {
        let model = SrCaps::<f32>::build(
            ModelConfig {
                blocks: 1,
                layers: 1,
                caps: 2,
                filters: 8,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let lr = Tensor4::zeros(Shape4::new(1, 3, 2, 2));
        assert!(matches!(model.infer(&lr), Err(Error::Usage(_))));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let model = SrCaps::<f32>::build(
            ModelConfig {
                blocks: 1,
                layers: 1,
                caps: 2,
                filters: 8,
                ..Default::default()
            },
            7,
        )
        .unwrap();
        let mut params = Vec::new();
        model.visit_params(&mut |name, t| params.push((name, t.clone())));
        let ck = Checkpoint {
            config_text: "model.filters = 8\n".to_string(),
            seed: 7,
            epoch: 3,
            step: 12,
            params,
            optim: None,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(ck, back);
        assert_eq!(bytes, back.to_bytes());
        assert!(bytes.starts_with(b"SRCAPS1"));
    }

    #[test]
    fn load_params_reports_every_mismatch() {
        let mut model = SrCaps::<f32>::build(
            ModelConfig {
                blocks: 1,
                layers: 1,
                caps: 2,
                filters: 8,
                ..Default::default()
            },
            8,
        )
        .unwrap();
        let mut params = Vec::new();
        model.visit_params(&mut |name, t| params.push((name, t.clone())));
        // corrupt one shape, drop one entry, add a stranger
        params[0].1 = Tensor4::zeros(Shape4::new(1, 1, 1, 1));
        params.remove(1);
        params.push(("stranger".to_string(), Tensor4::zeros(Shape4::new(1, 1, 1, 1))));
        let err = model.load_params(&params).unwrap_err().to_string();
        assert!(err.contains("checkpoint shape"));
        assert!(err.contains("missing from checkpoint"));
        assert!(err.contains("stranger"));
    }
}

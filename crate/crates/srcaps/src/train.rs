//! Adam-based training engine: the halving learning-rate schedule, the
//! epoch loop (one random patch per image per epoch), periodic validation
//! on full images, and checkpoint emission.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, sample_patch, stack_batch, Dataset};
use crate::error::{Error, Result};
use crate::losses::{BarronLatents, LossSpec};
use crate::metrics::{self, EvalSettings};
use crate::model::{Checkpoint, OptimSnapshot, SrCaps};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor4;

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halve_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// HR patch edge length.
    pub patch_size: usize,
    pub augment: bool,
    /// Validate every this many epochs (0 disables periodic validation).
    pub val_every: usize,
    /// Emit a periodic checkpoint every this many epochs (0: only final).
    pub checkpoint_every: usize,
    pub deterministic: bool,
    /// Optional max-norm gradient clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch: 16,
            lr: 1e-4,
            lr_halve_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            patch_size: 128,
            augment: false,
            val_every: 25,
            checkpoint_every: 0,
            deterministic: true,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch == 0 {
            problems.push("batch must be positive".to_string());
        }
        if self.lr <= 0.0 {
            problems.push("lr must be positive".to_string());
        }
        if self.lr_halve_every == 0 {
            problems.push("lr halving period must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("betas must lie in [0, 1)".to_string());
        }
        if self.eps <= 0.0 {
            problems.push("eps must be positive".to_string());
        }
        if self.patch_size == 0 {
            problems.push("patch size must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// Step-decayed learning rate: `lr * 0.5^(epoch / period)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr * 0.5f64.powi((epoch / cfg.lr_halve_every) as i32)
}

/// Per-parameter Adam accumulators.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Tensor4<T>>,
    pub v: Vec<Tensor4<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_params(params: &[Tensor4<T>]) -> Self {
        AdamState {
            t: 0,
            m: params.iter().map(|p| Tensor4::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor4::zeros(p.shape())).collect(),
        }
    }

    pub fn snapshot(&self) -> OptimSnapshot<T> {
        OptimSnapshot {
            t: self.t,
            moments: self
                .m
                .iter()
                .cloned()
                .zip(self.v.iter().cloned())
                .collect(),
        }
    }

    pub fn from_snapshot(snap: OptimSnapshot<T>) -> Self {
        let (m, v) = snap.moments.into_iter().unzip();
        AdamState { t: snap.t, m, v }
    }
}

/// One bias-corrected Adam update of a single tensor. `t` is the step count
/// after incrementing. Rejects non-finite gradients, naming the parameter.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Scalar>(
    name: &str,
    param: &mut Tensor4<T>,
    grad: &Tensor4<T>,
    m: &mut Tensor4<T>,
    v: &mut Tensor4<T>,
    t: u64,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grad.is_all_finite() {
        return Err(Error::numeric(format!(
            "non-finite gradient for parameter {name}"
        )));
    }
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let bc1 = T::of(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::of(1.0 - cfg.beta2.powi(t as i32));
    let lr_t = T::of(lr);
    let eps = T::of(cfg.eps);
    let pd = param.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..pd.len() {
        let g = grad.data()[i];
        md[i] = b1 * md[i] + (one - b1) * g;
        vd[i] = b2 * vd[i] + (one - b2) * g * g;
        let mhat = md[i] / bc1;
        let vhat = vd[i] / bc2;
        pd[i] = pd[i] - lr_t * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// One line of the metric history.
#[derive(Clone, Debug)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub val_msssim: Option<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,step,lr,train_loss,val_psnr,val_ssim,val_msssim";

impl HistoryRecord {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            self.lr,
            self.train_loss,
            opt(self.val_psnr),
            opt(self.val_ssim),
            opt(self.val_msssim)
        )
    }
}

/// Why a checkpoint is being emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Periodic,
    /// Best validation MS-SSIM so far.
    Best,
    Final,
    /// Emitted before halting on a non-finite loss.
    Emergency,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-epoch randomness derived from the run seed, so resuming
/// at epoch `k` regenerates exactly the same patch stream without replaying
/// earlier epochs.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ (epoch as u64).wrapping_mul(0x5851_F42D_4C95_7F2D),
    ))
}

/// Everything a training run needs. Exactly one step mutates parameters at
/// a time; validation reads the parameters between steps.
pub struct TrainSession<'a, T: Scalar> {
    pub model: &'a mut SrCaps<T>,
    pub latents: Option<&'a mut BarronLatents<T>>,
    pub loss: &'a LossSpec,
    pub data: &'a Dataset<T>,
    pub val: Option<&'a Dataset<T>>,
    pub cfg: &'a TrainConfig,
    /// Resolved configuration snapshot embedded into checkpoints.
    pub config_echo: String,
}

/// Result of a completed run.
pub struct TrainOutput<T> {
    pub history: Vec<HistoryRecord>,
    pub last: Checkpoint<T>,
    pub best: Option<Checkpoint<T>>,
}

impl<'a, T: Scalar> TrainSession<'a, T> {
    fn collect_params(&mut self) -> Vec<Tensor4<T>> {
        let mut params = Vec::new();
        self.model.visit_params(&mut |_, t| params.push(t.clone()));
        if let Some(lat) = &self.latents {
            lat.visit(&mut |_, t| params.push(t.clone()));
        }
        params
    }

    fn param_names(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        self.model.visit_params(&mut |n, _| names.push(n));
        if let Some(lat) = &self.latents {
            lat.visit(&mut |n, _| names.push(n));
        }
        names
    }

    fn make_checkpoint(&mut self, epoch: u64, step: u64, optim: &AdamState<T>) -> Checkpoint<T> {
        let mut params = Vec::new();
        self.model
            .visit_params(&mut |n, t| params.push((n, t.clone())));
        if let Some(lat) = &self.latents {
            lat.visit(&mut |n, t| params.push((n, t.clone())));
        }
        Checkpoint {
            config_text: self.config_echo.clone(),
            seed: self.cfg.seed,
            epoch,
            step,
            params,
            optim: Some(optim.snapshot()),
        }
    }

    fn validate_model(&self) -> Result<(f64, f64, f64)> {
        let val = self.val.expect("caller checks presence");
        let settings = EvalSettings::default();
        let (mut psnr, mut ssim, mut msssim) = (0.0, 0.0, 0.0);
        for pair in &val.pairs {
            let sr = self.model.infer(&pair.lr)?;
            // provided pairs may carry a ragged edge; compare the common area
            let hr = if pair.hr.shape() == sr.shape() {
                pair.hr.clone()
            } else {
                crate::data::crop(&pair.hr, 0, 0, sr.shape().h, sr.shape().w)?
            };
            let row =
                metrics::evaluate_pair(&pair.name, &sr.cast::<f64>(), &hr.cast::<f64>(), &settings)?;
            psnr += row.psnr;
            ssim += row.ssim;
            msssim += row.ms_ssim;
        }
        let n = val.pairs.len() as f64;
        Ok((psnr / n, ssim / n, msssim / n))
    }

    /// Run from `start_epoch` (0 for a fresh model) to `cfg.epochs`.
    /// `resume_optim` restores the optimizer accumulators when continuing
    /// from a checkpoint.
    pub fn run(
        mut self,
        start_epoch: usize,
        resume_optim: Option<OptimSnapshot<T>>,
        on_record: &mut dyn FnMut(&HistoryRecord) -> Result<()>,
        on_checkpoint: &mut dyn FnMut(&Checkpoint<T>, CheckpointKind) -> Result<()>,
    ) -> Result<TrainOutput<T>> {
        self.cfg.validate()?;
        if self.data.pairs.is_empty() {
            return Err(Error::usage("training dataset is empty"));
        }
        if !self.cfg.patch_size.is_multiple_of(self.data.scale) {
            return Err(Error::config(format!(
                "patch size {} not divisible by scale {}",
                self.cfg.patch_size, self.data.scale
            )));
        }
        if self.loss.needs_latents() != self.latents.is_some() {
            return Err(Error::usage(
                "loss/latent mismatch: the adaptive loss requires latents, others must not have them",
            ));
        }

        // images too small for the patch are excluded once, with a warning
        let lr_ps = self.cfg.patch_size / self.data.scale;
        let mut pool: Vec<usize> = Vec::new();
        for (i, pair) in self.data.pairs.iter().enumerate() {
            let usable_h = (pair.hr.shape().h / self.data.scale).min(pair.lr.shape().h);
            let usable_w = (pair.hr.shape().w / self.data.scale).min(pair.lr.shape().w);
            if usable_h >= lr_ps && usable_w >= lr_ps {
                pool.push(i);
            } else {
                eprintln!(
                    "warning: {} is smaller than a {} patch at scale {}, skipping",
                    pair.name, self.cfg.patch_size, self.data.scale
                );
            }
        }
        if pool.is_empty() {
            return Err(Error::usage(format!(
                "no image large enough for {}-pixel patches",
                self.cfg.patch_size
            )));
        }

        let names = self.param_names();
        let params0 = self.collect_params();
        let mut optim = match resume_optim {
            Some(snap) => {
                if snap.moments.len() != params0.len() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer state holds {} tensors, model has {}",
                        snap.moments.len(),
                        params0.len()
                    )));
                }
                AdamState::from_snapshot(snap)
            }
            None => AdamState::for_params(&params0),
        };

        let mut history = Vec::new();
        let mut global_step = optim.t;
        let mut best: Option<(f64, Checkpoint<T>)> = None;
        let scale_to_01 = T::of(1.0 / 255.0);

        for epoch in start_epoch..self.cfg.epochs {
            let lr_now = lr_at(epoch, self.cfg);
            let mut rng = epoch_rng(self.cfg.seed, epoch);
            let mut order = pool.clone();
            order.shuffle(&mut rng);

            let mut epoch_records: Vec<HistoryRecord> = Vec::new();
            for chunk in order.chunks(self.cfg.batch) {
                let mut lr_items = Vec::with_capacity(chunk.len());
                let mut hr_items = Vec::with_capacity(chunk.len());
                for &idx in chunk {
                    let patch = sample_patch(
                        &self.data.pairs[idx],
                        self.cfg.patch_size,
                        self.data.scale,
                        &mut rng,
                    )?;
                    let patch = augment(patch, self.cfg.augment, &mut rng);
                    lr_items.push(patch.lr);
                    hr_items.push(patch.hr.map(|v| v * scale_to_01));
                }
                let lr_batch = stack_batch(&lr_items)?;
                let hr_batch = stack_batch(&hr_items)?;

                let mut tape = Tape::new();
                let vars = self.model.register(&mut tape);
                let lat_vars = self.latents.as_ref().map(|l| l.register(&mut tape));
                let lr_var = tape.constant(lr_batch);
                let hr_var = tape.constant(hr_batch);
                let sr = self.model.forward(&mut tape, &vars, lr_var)?;
                let loss = match (&self.latents, &lat_vars) {
                    (Some(lat), Some(lv)) => {
                        self.loss.compute(&mut tape, sr, hr_var, Some((lat, lv)))?
                    }
                    _ => self.loss.compute(&mut tape, sr, hr_var, None)?,
                };
                let loss_value = tape.value(loss).scalar()?.as_f64();
                if !loss_value.is_finite() {
                    let ck = self.make_checkpoint(epoch as u64, global_step, &optim);
                    on_checkpoint(&ck, CheckpointKind::Emergency)?;
                    return Err(Error::numeric(format!(
                        "non-finite loss {loss_value} at epoch {epoch} step {global_step}; emergency checkpoint written"
                    )));
                }
                tape.backward(loss)?;

                let mut ordered = SrCaps::<T>::ordered_vars(&vars);
                if let Some(lv) = &lat_vars {
                    ordered.push(lv.alpha_latent);
                    ordered.push(lv.c_latent);
                }
                let mut grads: Vec<Tensor4<T>> = ordered
                    .iter()
                    .map(|&v| match tape.grad(v) {
                        Some(g) => g.clone(),
                        None => Tensor4::zeros(v.shape),
                    })
                    .collect();

                if let Some(max_norm) = self.cfg.grad_clip {
                    let total: f64 = grads
                        .iter()
                        .flat_map(|g| g.iter())
                        .map(|&v| v.as_f64() * v.as_f64())
                        .sum();
                    let norm = total.sqrt();
                    if norm > max_norm {
                        let s = T::of(max_norm / norm);
                        for g in &mut grads {
                            *g = g.map(|v| v * s);
                        }
                    }
                }

                optim.t += 1;
                global_step += 1;
                let t = optim.t;
                let mut idx = 0usize;
                let mut update_err: Option<Error> = None;
                {
                    let cfg = self.cfg;
                    let names = &names;
                    let grads = &grads;
                    let optim_m = &mut optim.m;
                    let optim_v = &mut optim.v;
                    let mut apply = |name: String, p: &mut Tensor4<T>| {
                        if update_err.is_some() {
                            return;
                        }
                        debug_assert_eq!(names[idx], name);
                        if let Err(e) = adam_update(
                            &name,
                            p,
                            &grads[idx],
                            &mut optim_m[idx],
                            &mut optim_v[idx],
                            t,
                            lr_now,
                            cfg,
                        ) {
                            update_err = Some(e);
                        }
                        idx += 1;
                    };
                    self.model.visit_params_mut(&mut apply);
                    if let Some(lat) = &mut self.latents {
                        lat.visit_mut(&mut apply);
                    }
                }
                if let Some(e) = update_err {
                    return Err(match e {
                        Error::Numeric(msg) => {
                            Error::numeric(format!("{msg} at epoch {epoch} step {global_step}"))
                        }
                        other => other,
                    });
                }

                epoch_records.push(HistoryRecord {
                    epoch,
                    step: global_step,
                    lr: lr_now,
                    train_loss: loss_value,
                    val_psnr: None,
                    val_ssim: None,
                    val_msssim: None,
                });
            }

            // periodic validation attaches to the epoch's last record
            let validate_now = self.val.is_some()
                && self.cfg.val_every > 0
                && ((epoch + 1) % self.cfg.val_every == 0 || epoch + 1 == self.cfg.epochs);
            if validate_now {
                let (p, s, m) = self.validate_model()?;
                if let Some(last) = epoch_records.last_mut() {
                    last.val_psnr = Some(p);
                    last.val_ssim = Some(s);
                    last.val_msssim = Some(m);
                }
                let improved = best.as_ref().map(|(b, _)| m > *b).unwrap_or(true);
                if improved {
                    let ck = self.make_checkpoint(epoch as u64 + 1, global_step, &optim);
                    on_checkpoint(&ck, CheckpointKind::Best)?;
                    best = Some((m, ck));
                }
            }
            for r in &epoch_records {
                on_record(r)?;
            }
            history.extend(epoch_records);

            if self.cfg.checkpoint_every > 0 && (epoch + 1) % self.cfg.checkpoint_every == 0 {
                let ck = self.make_checkpoint(epoch as u64 + 1, global_step, &optim);
                on_checkpoint(&ck, CheckpointKind::Periodic)?;
            }
        }

        let last = self.make_checkpoint(self.cfg.epochs as u64, global_step, &optim);
        on_checkpoint(&last, CheckpointKind::Final)?;
        Ok(TrainOutput {
            history,
            last,
            best: best.map(|(_, ck)| ck),
        })
    }
}

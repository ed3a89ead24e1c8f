//! Capsule primitives: the squashing nonlinearity, convolutional capsule
//! layers with shared per-pair kernels and constant (no-routing) coupling,
//! and the residual dense capsule block built from them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ConvLayer, ConvVars};
use crate::ops::ActKind;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape4, Tensor4};

/// A feature map reinterpreted as capsules: `types` capsule types, each a
/// `dims`-dimensional pose vector, stored as contiguous channel groups.
#[derive(Clone, Debug)]
pub struct CapsuleState<T> {
    base: Tensor4<T>,
    types: usize,
    dims: usize,
}

impl<T: Scalar> CapsuleState<T> {
    pub fn new(base: Tensor4<T>, types: usize) -> Result<Self> {
        let ch = base.shape().ch;
        if types == 0 || !ch.is_multiple_of(types) {
            return Err(Error::config(format!(
                "cannot view {ch} channels as {types} capsule types"
            )));
        }
        let dims = ch / types;
        Ok(CapsuleState { base, types, dims })
    }

    pub fn base(&self) -> &Tensor4<T> {
        &self.base
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
}

/// Constant coupling coefficient of the no-routing scheme: every vote is
/// weighted `1/M`, `M` being the receiving layer's capsule count.
pub fn coupling(m: usize) -> f64 {
    1.0 / m as f64
}

impl<T: Scalar> Tape<T> {
    /// Vector squashing applied per spatial position to each capsule's
    /// `d`-dimensional pose: `v = (|s|^2 / (sq + |s|^2)) * s / |s|`.
    ///
    /// The output norm stays below 1, the direction is preserved, and the
    /// zero vector maps to zero (with zero gradient, its analytic limit).
    pub fn squash(&mut self, x: Var, types: usize, sq: f64) -> Result<Var> {
        if sq <= 0.0 {
            return Err(Error::config(format!(
                "squashing constant must be positive, got {sq}"
            )));
        }
        let shape = x.shape;
        if types == 0 || !shape.ch.is_multiple_of(types) {
            return Err(Error::config(format!(
                "squash: {} channels not divisible into {} capsule types",
                shape.ch, types
            )));
        }
        let dims = shape.ch / types;
        let plane = shape.h * shape.w;
        let chan_stride = plane;
        let sqv = T::of(sq);
        let xv = self.value(x).clone();

        let mut out = vec![T::zero(); shape.count()];
        {
            let xd = xv.data();
            for b in 0..shape.n {
                for t in 0..types {
                    let base = (b * shape.ch + t * dims) * plane;
                    for p in 0..plane {
                        let mut q = T::zero();
                        for j in 0..dims {
                            let v = xd[base + j * chan_stride + p];
                            q = q + v * v;
                        }
                        let factor = if q > T::zero() {
                            q.sqrt() / (sqv + q)
                        } else {
                            T::zero()
                        };
                        for j in 0..dims {
                            let i = base + j * chan_stride + p;
                            out[i] = xd[i] * factor;
                        }
                    }
                }
            }
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor4::new(shape, out)?,
            needs,
            Some(Box::new(move |g| {
                let xd = xv.data();
                let gd = g.data();
                let mut gx = vec![T::zero(); shape.count()];
                let two = T::of(2.0);
                for b in 0..shape.n {
                    for t in 0..types {
                        let base = (b * shape.ch + t * dims) * plane;
                        for p in 0..plane {
                            let mut q = T::zero();
                            let mut dot = T::zero();
                            for j in 0..dims {
                                let i = base + j * chan_stride + p;
                                q = q + xd[i] * xd[i];
                                dot = dot + xd[i] * gd[i];
                            }
                            if q <= T::zero() {
                                continue; // squash has zero Jacobian at the origin
                            }
                            let root = q.sqrt();
                            let denom = sqv + q;
                            let factor = root / denom;
                            // d factor / d q
                            let dfactor = (sqv - q) / (two * root * denom * denom);
                            for j in 0..dims {
                                let i = base + j * chan_stride + p;
                                gx[i] = factor * gd[i] + two * xd[i] * dfactor * dot;
                            }
                        }
                    }
                }
                vec![(x.id, Tensor4::new(shape, gx).expect("shape ok"))]
            })),
        ))
    }
}

/// Convolutional capsule layer. One shared kernel per (input type, output
/// type) pair transforms that input type's pose tensor into votes; votes
/// are combined with the constant `1/M` coupling and squashed.
///
/// The pair kernels are stored as one `(c_out*d_out, c_in*d_in, k, k)`
/// tensor whose `(j, i)` channel block is the kernel for pair `(i, j)`;
/// spatial sharing is inherent to the convolution.
#[derive(Clone, Debug)]
pub struct CapsLayer<T> {
    pub kernel: Tensor4<T>,
    pub c_in: usize,
    pub c_out: usize,
    /// Squashing constant.
    pub sq: f64,
    pub stride: usize,
    pub pad: usize,
    /// Open switch: disable the squash to run the layer as a plain grouped
    /// vote sum.
    pub squash_enabled: bool,
}

impl<T: Scalar> CapsLayer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        c_in: usize,
        d_in: usize,
        c_out: usize,
        d_out: usize,
        k: usize,
        sq: f64,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let in_ch = c_in * d_in;
        let bound = (1.0 / (in_ch * k * k) as f64).sqrt();
        let kernel =
            Tensor4::rand_uniform(Shape4::new(c_out * d_out, in_ch, k, k), -bound, bound, rng);
        CapsLayer {
            kernel,
            c_in,
            c_out,
            sq,
            stride,
            pad,
            squash_enabled: true,
        }
    }

    pub fn d_in(&self) -> usize {
        self.kernel.shape().ch / self.c_in
    }

    pub fn d_out(&self) -> usize {
        self.kernel.shape().n / self.c_out
    }

    /// The shared kernel of pair `(i, j)` as a standalone
    /// `(d_out, d_in, k, k)` tensor.
    pub fn pair_kernel(&self, i: usize, j: usize) -> Tensor4<T> {
        let d_in = self.d_in();
        let d_out = self.d_out();
        let k = self.kernel.shape().h;
        Tensor4::from_fn(Shape4::new(d_out, d_in, k, k), |od, id, ky, kx| {
            self.kernel.at(j * d_out + od, i * d_in + id, ky, kx)
        })
    }

    pub fn param_count(&self) -> usize {
        self.kernel.shape().count()
    }

    pub fn register(&self, tape: &mut Tape<T>) -> Var {
        tape.leaf(self.kernel.clone(), true)
    }

    pub fn register_frozen(&self, tape: &mut Tape<T>) -> Var {
        tape.constant(self.kernel.clone())
    }

    /// Forward on the tape. `x` holds `c_in * d_in` channels; the output
    /// holds `c_out * d_out` channels, squashed per capsule vector.
    pub fn forward(&self, tape: &mut Tape<T>, kernel: Var, x: Var) -> Result<Var> {
        if x.shape.ch != self.kernel.shape().ch {
            return Err(Error::config(format!(
                "capsule layer expects {} channels ({} types), got {}",
                self.kernel.shape().ch,
                self.c_in,
                x.shape.ch
            )));
        }
        let votes = tape.conv2d(x, kernel, None, self.stride, self.pad)?;
        let s = tape.scale(votes, coupling(self.c_out));
        if self.squash_enabled {
            tape.squash(s, self.c_out, self.sq)
        } else {
            Ok(s)
        }
    }

    /// Value-level forward over a [`CapsuleState`], for callers outside a
    /// training step.
    pub fn forward_state(&self, input: &CapsuleState<T>) -> Result<CapsuleState<T>> {
        if input.types() != self.c_in {
            return Err(Error::config(format!(
                "capsule count mismatch: input has {} types, layer expects {}",
                input.types(),
                self.c_in
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(input.base().clone());
        let k = self.register_frozen(&mut tape);
        let y = self.forward(&mut tape, k, x)?;
        CapsuleState::new(tape.value(y).clone(), self.c_out)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor4<T>)) {
        f(format!("{prefix}.kernel"), &self.kernel);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor4<T>)) {
        f(format!("{prefix}.kernel"), &mut self.kernel);
    }
}

/// Residual dense capsule block: `L` residually connected capsule layers,
/// dense concatenation of their outputs, a 1x1 fusion convolution, residual
/// scaling, and the block-input residual.
#[derive(Clone, Debug)]
pub struct Rdcb<T> {
    pub layers: Vec<CapsLayer<T>>,
    pub fusion: ConvLayer<T>,
    pub res_scale: f64,
    pub act: ActKind,
    /// Open switch: drop the activation after each capsule layer.
    pub act_enabled: bool,
}

pub struct RdcbVars {
    pub layers: Vec<Var>,
    pub fusion: ConvVars,
}

impl<T: Scalar> Rdcb<T> {
    /// Block over `filters` channels seen as `caps` capsule types of
    /// `filters / caps` dimensions each.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        layers: usize,
        caps: usize,
        filters: usize,
        k: usize,
        sq: f64,
        res_scale: f64,
        act: ActKind,
        rng: &mut R,
    ) -> Result<Self> {
        if caps == 0 || !filters.is_multiple_of(caps) {
            return Err(Error::config(format!(
                "filters {filters} not divisible by capsule count {caps}"
            )));
        }
        if layers == 0 {
            return Err(Error::config("block needs at least one capsule layer"));
        }
        if k.is_multiple_of(2) {
            return Err(Error::config(format!(
                "kernel size must be odd for same-padding, got {k}"
            )));
        }
        let d = filters / caps;
        let pad = (k - 1) / 2;
        let caps_layers = (0..layers)
            .map(|_| CapsLayer::init(caps, d, caps, d, k, sq, 1, pad, rng))
            .collect();
        let fusion = ConvLayer::init(filters, layers * filters, 1, 1, 0, rng);
        Ok(Rdcb {
            layers: caps_layers,
            fusion,
            res_scale,
            act,
            act_enabled: true,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum::<usize>() + self.fusion.param_count()
    }

    pub fn register(&self, tape: &mut Tape<T>) -> RdcbVars {
        RdcbVars {
            layers: self.layers.iter().map(|l| l.register(tape)).collect(),
            fusion: self.fusion.register(tape),
        }
    }

    pub fn register_frozen(&self, tape: &mut Tape<T>) -> RdcbVars {
        RdcbVars {
            layers: self.layers.iter().map(|l| l.register_frozen(tape)).collect(),
            fusion: self.fusion.register_frozen(tape),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, vars: &RdcbVars, input: Var) -> Result<Var> {
        let mut cur = input;
        let mut dense = Vec::with_capacity(self.layers.len());
        for (layer, &kvar) in self.layers.iter().zip(&vars.layers) {
            let mut y = layer.forward(tape, kvar, cur)?;
            if self.act_enabled {
                y = tape.activation(y, self.act);
            }
            let with_res = tape.add(y, cur)?;
            dense.push(with_res);
            cur = with_res;
        }
        let cat = tape.concat_ch(&dense)?;
        let fused = self.fusion.forward(tape, &vars.fusion, cat)?;
        let scaled = tape.scale(fused, self.res_scale);
        tape.add(scaled, input)
    }

    /// Value-level forward for callers outside a training step.
    pub fn forward_value(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let vars = self.register_frozen(&mut tape);
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor4<T>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("{prefix}.caps{i}"), f);
        }
        self.fusion.visit(&format!("{prefix}.fusion"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor4<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("{prefix}.caps{i}"), f);
        }
        self.fusion.visit_mut(&format!("{prefix}.fusion"), f);
    }
}

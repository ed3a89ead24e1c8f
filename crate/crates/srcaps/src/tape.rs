//! Reverse-mode gradient tape.
//!
//! Operations record their result and a backward closure onto a [`Tape`];
//! [`Tape::backward`] walks the recording in reverse, pushing the upstream
//! gradient through each closure and accumulating persistent gradients on
//! the leaves that asked for them. Repeated backward calls accumulate, so a
//! fresh tape per training step is the expected usage.

use crate::error::{Error, Result};
use crate::ops::{self, ActKind, Window};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    pub(crate) id: usize,
    pub shape: Shape4,
}

type BackFn<T> = Box<dyn Fn(&Tensor4<T>) -> Vec<(usize, Tensor4<T>)>>;

struct Node<T: Scalar> {
    value: Tensor4<T>,
    /// Gradient must flow through this node to reach some requiring leaf.
    needs: bool,
    /// Leaf that accumulates a persistent gradient.
    requires: bool,
    grad: Option<Tensor4<T>>,
    back: Option<BackFn<T>>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Register an input tensor. With `requires_grad` set, [`Tape::grad`]
    /// holds its accumulated gradient after backward passes.
    pub fn leaf(&mut self, value: Tensor4<T>, requires_grad: bool) -> Var {
        let shape = value.shape();
        self.nodes.push(Node {
            value,
            needs: requires_grad,
            requires: requires_grad,
            grad: None,
            back: None,
        });
        Var {
            id: self.nodes.len() - 1,
            shape,
        }
    }

    /// Register a tensor that never receives gradients.
    pub fn constant(&mut self, value: Tensor4<T>) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn push(&mut self, value: Tensor4<T>, needs: bool, back: Option<BackFn<T>>) -> Var {
        let shape = value.shape();
        self.nodes.push(Node {
            value,
            needs,
            requires: false,
            grad: None,
            back: if needs { back } else { None },
        });
        Var {
            id: self.nodes.len() - 1,
            shape,
        }
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.id].needs
    }

    pub fn value(&self, v: Var) -> &Tensor4<T> {
        &self.nodes[v.id].value
    }

    /// Accumulated gradient of a `requires_grad` leaf, if backward has run.
    pub fn grad(&self, v: Var) -> Option<&Tensor4<T>> {
        self.nodes[v.id].grad.as_ref()
    }

    pub fn zero_grad(&mut self, v: Var) {
        self.nodes[v.id].grad = None;
    }

    /// Reverse pass from a scalar loss. Every `requires_grad` leaf reachable
    /// from `loss` receives (accumulates) its gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !loss.shape.is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {}",
                loss.shape
            )));
        }
        let mut pending: Vec<Option<Tensor4<T>>> = Vec::with_capacity(loss.id + 1);
        pending.resize(loss.id + 1, None);
        pending[loss.id] = Some(Tensor4::ones(Shape4::new(1, 1, 1, 1)));

        for id in (0..=loss.id).rev() {
            let Some(g) = pending[id].take() else { continue };
            if !self.nodes[id].needs {
                continue;
            }
            if let Some(back) = &self.nodes[id].back {
                for (pid, contrib) in back(&g) {
                    if !self.nodes[pid].needs {
                        continue;
                    }
                    match &mut pending[pid] {
                        Some(acc) => acc.add_assign(&contrib)?,
                        slot => *slot = Some(contrib),
                    }
                }
            }
            if self.nodes[id].requires {
                match &mut self.nodes[id].grad {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn check_same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if a.shape != b.shape {
            return Err(Error::usage(format!(
                "{op}: shape mismatch {} vs {}",
                a.shape, b.shape
            )));
        }
        Ok(())
    }

    // --- elementwise arithmetic ---

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(a.id, g.clone()), (b.id, g.clone())]
            })),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(a.id, g.clone()), (b.id, g.map(|v| -v))]
            })),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "mul")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = av.zip_map(&bv, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![
                    (a.id, g.zip_map(&bv, |gv, y| gv * y).expect("shape ok")),
                    (b.id, g.zip_map(&av, |gv, x| gv * x).expect("shape ok")),
                ]
            })),
        ))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "div")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = av.zip_map(&bv, |x, y| x / y)?;
        let out = value.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                let ga = g.zip_map(&bv, |gv, y| gv / y).expect("shape ok");
                // d(a/b)/db = -a/b^2 = -(a/b)/b
                let gb = g
                    .zip_map(&out, |gv, q| gv * q)
                    .and_then(|t| t.zip_map(&bv, |v, y| -(v / y)))
                    .expect("shape ok");
                vec![(a.id, ga), (b.id, gb)]
            })),
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let sv = T::of(s);
        let value = self.value(a).map(|x| x * sv);
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| vec![(a.id, g.map(|v| v * sv))])),
        )
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let sv = T::of(s);
        let value = self.value(a).map(|x| x + sv);
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| vec![(a.id, g.clone())])),
        )
    }

    // --- elementwise nonlinearities ---

    pub fn abs(&mut self, a: Var) -> Var {
        let av = self.value(a).clone();
        let value = av.map(|x| x.abs());
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                // subgradient 0 at the origin
                let ga = g
                    .zip_map(&av, |gv, x| {
                        if x > T::zero() {
                            gv
                        } else if x < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .expect("shape ok");
                vec![(a.id, ga)]
            })),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.exp());
        let out = value.clone();
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(a.id, g.zip_map(&out, |gv, y| gv * y).expect("shape ok"))]
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        let out = value.clone();
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(
                    a.id,
                    g.zip_map(&out, |gv, y| gv * y * (T::one() - y)).expect("shape ok"),
                )]
            })),
        )
    }

    /// `max(x, eps)^e` with a fixed exponent; gradient is zero below the
    /// floor. Keeps fractional powers of near-zero factors well defined.
    pub fn powf_pos(&mut self, a: Var, e: f64) -> Var {
        let eps = T::of(1e-12);
        let ev = T::of(e);
        let av = self.value(a).clone();
        let value = av.map(|x| x.max(eps).powf(ev));
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                let ga = g
                    .zip_map(&av, |gv, x| {
                        if x > eps {
                            gv * ev * x.powf(ev - T::one())
                        } else {
                            T::zero()
                        }
                    })
                    .expect("shape ok");
                vec![(a.id, ga)]
            })),
        )
    }

    /// Elementwise `sqrt(a^2 + b^2)` with zero gradient where the magnitude
    /// vanishes (both operands zero).
    pub fn hypot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "hypot")?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = av.zip_map(&bv, |x, y| (x * x + y * y).sqrt())?;
        let out = value.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                let ratio = |num: &Tensor4<T>| {
                    g.zip_map(num, |gv, n| gv * n)
                        .and_then(|t| {
                            t.zip_map(&out, |v, m| if m > T::zero() { v / m } else { T::zero() })
                        })
                        .expect("shape ok")
                };
                vec![(a.id, ratio(&av)), (b.id, ratio(&bv))]
            })),
        ))
    }

    pub fn activation(&mut self, a: Var, kind: ActKind) -> Var {
        let av = self.value(a).clone();
        let value = av.map(|x| kind.value(x));
        let needs = self.needs(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(
                    a.id,
                    g.zip_map(&av, |gv, x| gv * kind.deriv(x)).expect("shape ok"),
                )]
            })),
        )
    }

    // --- reductions ---

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self
            .value(a)
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let needs = self.needs(a);
        let shape = a.shape;
        self.push(
            Tensor4::scalar_value(total),
            needs,
            Some(Box::new(move |g| {
                let gv = g.data()[0];
                vec![(a.id, Tensor4::full(shape, gv))]
            })),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let count = a.shape.count() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / count)
    }

    // --- shape operations ---

    pub fn concat_ch(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::usage("concat_ch of zero tensors"));
        }
        let first = parts[0].shape;
        let mut total_ch = 0;
        for p in parts {
            if p.shape.n != first.n || p.shape.h != first.h || p.shape.w != first.w {
                return Err(Error::usage(format!(
                    "concat_ch: incompatible shapes {} vs {}",
                    first, p.shape
                )));
            }
            total_ch += p.shape.ch;
        }
        let out_shape = Shape4::new(first.n, total_ch, first.h, first.w);
        let plane = first.h * first.w;
        let mut data = vec![T::zero(); out_shape.count()];
        let mut offset = 0;
        for p in parts {
            let v = self.value(*p);
            for b in 0..first.n {
                for c in 0..p.shape.ch {
                    let dst_start = ((b * total_ch) + offset + c) * plane;
                    data[dst_start..dst_start + plane].copy_from_slice(v.plane(b, c));
                }
            }
            offset += p.shape.ch;
        }
        let needs = parts.iter().any(|p| self.needs(*p));
        let parts_meta: Vec<(usize, usize)> = parts.iter().map(|p| (p.id, p.shape.ch)).collect();
        Ok(self.push(
            Tensor4::new(out_shape, data)?,
            needs,
            Some(Box::new(move |g| {
                let mut res = Vec::with_capacity(parts_meta.len());
                let mut offset = 0;
                for &(pid, ch) in &parts_meta {
                    let shape = Shape4::new(first.n, ch, first.h, first.w);
                    let mut part = vec![T::zero(); shape.count()];
                    for b in 0..first.n {
                        for c in 0..ch {
                            let src = g.plane(b, offset + c);
                            let dst_start = (b * ch + c) * plane;
                            part[dst_start..dst_start + plane].copy_from_slice(src);
                        }
                    }
                    res.push((pid, Tensor4::new(shape, part).expect("shape ok")));
                    offset += ch;
                }
                res
            })),
        ))
    }

    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let value = ops::pixel_shuffle(self.value(a), r)?;
        let needs = self.needs(a);
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(a.id, ops::pixel_unshuffle(g, r).expect("inverse of valid shuffle"))]
            })),
        ))
    }

    // --- structured operations ---

    /// Standard convolution layer. `bias` is per-output-channel, shaped
    /// `(out_ch, 1, 1, 1)`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        if let Some(b) = bias {
            if b.shape.n != kernel.shape.n || b.shape.count() != kernel.shape.n {
                return Err(Error::config(format!(
                    "conv2d bias shape {} does not match {} output channels",
                    b.shape, kernel.shape.n
                )));
            }
        }
        let xv = self.value(x).clone();
        let kv = self.value(kernel).clone();
        let bias_data = bias.map(|b| self.value(b).data().to_vec());
        let value = ops::conv2d(&xv, &kv, bias_data.as_deref(), stride, pad)?;
        let needs =
            self.needs(x) || self.needs(kernel) || bias.map(|b| self.needs(b)).unwrap_or(false);
        let x_shape = x.shape;
        let k_shape = kernel.shape;
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                let mut res = vec![
                    (x.id, ops::conv2d_grad_input(g, &kv, x_shape, stride, pad)),
                    (
                        kernel.id,
                        ops::conv2d_grad_kernel(g, &xv, k_shape, stride, pad),
                    ),
                ];
                if let Some(b) = bias {
                    let gb = ops::conv2d_grad_bias(g);
                    res.push((
                        b.id,
                        Tensor4::new(b.shape, gb).expect("bias shape verified"),
                    ));
                }
                res
            })),
        ))
    }

    /// Weight normalization: per output channel, `w = g * v / ||v||`. After
    /// it, the Euclidean norm of each output channel's effective kernel is
    /// exactly `g`.
    pub fn weight_norm(&mut self, v: Var, gain: Var) -> Result<Var> {
        if gain.shape.n != v.shape.n || gain.shape.count() != v.shape.n {
            return Err(Error::config(format!(
                "weight_norm gain shape {} does not match {} output channels",
                gain.shape, v.shape.n
            )));
        }
        let vv = self.value(v).clone();
        let gv = self.value(gain).clone();
        let per = v.shape.ch * v.shape.h * v.shape.w;
        let mut norms = Vec::with_capacity(v.shape.n);
        for oc in 0..v.shape.n {
            let slice = &vv.data()[oc * per..(oc + 1) * per];
            let norm = slice
                .iter()
                .fold(T::zero(), |acc, &x| acc + x * x)
                .sqrt();
            if norm == T::zero() {
                return Err(Error::numeric(format!(
                    "weight_norm: direction tensor of output channel {oc} has zero norm"
                )));
            }
            norms.push(norm);
        }
        let mut out = vec![T::zero(); v.shape.count()];
        for oc in 0..v.shape.n {
            let s = gv.data()[oc] / norms[oc];
            for (o, &x) in out[oc * per..(oc + 1) * per]
                .iter_mut()
                .zip(&vv.data()[oc * per..(oc + 1) * per])
            {
                *o = x * s;
            }
        }
        let needs = self.needs(v) || self.needs(gain);
        let v_shape = v.shape;
        let g_shape = gain.shape;
        Ok(self.push(
            Tensor4::new(v_shape, out)?,
            needs,
            Some(Box::new(move |g| {
                let mut gv_out = vec![T::zero(); v_shape.count()];
                let mut gg_out = vec![T::zero(); v_shape.n];
                for oc in 0..v_shape.n {
                    let vs = &vv.data()[oc * per..(oc + 1) * per];
                    let gs = &g.data()[oc * per..(oc + 1) * per];
                    let norm = norms[oc];
                    let inv = T::one() / norm;
                    // unit direction dot upstream gradient
                    let dot = vs
                        .iter()
                        .zip(gs)
                        .fold(T::zero(), |acc, (&x, &u)| acc + x * u)
                        * inv;
                    gg_out[oc] = dot;
                    let scale = gv.data()[oc] * inv;
                    for i in 0..per {
                        let vhat = vs[i] * inv;
                        gv_out[oc * per + i] = scale * (gs[i] - vhat * dot);
                    }
                }
                vec![
                    (v.id, Tensor4::new(v_shape, gv_out).expect("shape ok")),
                    (gain.id, Tensor4::new(g_shape, gg_out).expect("shape ok")),
                ]
            })),
        ))
    }

    /// Per-channel valid-mode filtering with a fixed (non-learned) window.
    pub fn filter2d(&mut self, x: Var, win: &Window<T>) -> Result<Var> {
        let value = ops::filter2d_valid(self.value(x), win)?;
        let needs = self.needs(x);
        let win = win.clone();
        let x_shape = x.shape;
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(x.id, ops::filter2d_valid_grad(g, &win, x_shape))]
            })),
        ))
    }

    pub fn pad_replicate(&mut self, x: Var, p: usize) -> Var {
        let value = ops::pad_replicate(self.value(x), p);
        let needs = self.needs(x);
        let x_shape = x.shape;
        self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(x.id, ops::pad_replicate_grad(g, p, x_shape))]
            })),
        )
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let value = ops::avg_pool2(self.value(x))?;
        let needs = self.needs(x);
        let x_shape = x.shape;
        Ok(self.push(
            value,
            needs,
            Some(Box::new(move |g| {
                vec![(x.id, ops::avg_pool2_grad(g, x_shape))]
            })),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor4::rand_uniform(
            Shape4::new(2, 3, 4, 4),
            -1.0,
            1.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        ), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert!(tape.grad(x).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn repeated_backward_accumulates_exactly() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor4::full(Shape4::new(1, 1, 2, 2), 3.0), true);
        let y = tape.mul(x, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        let first: Vec<f64> = tape.grad(x).unwrap().data().to_vec();
        tape.backward(s).unwrap();
        let second: Vec<f64> = tape.grad(x).unwrap().data().to_vec();
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor4::ones(Shape4::new(1, 1, 2, 2)), true);
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor4::ones(Shape4::new(1, 1, 2, 2)), true);
        let c = tape.constant(Tensor4::full(Shape4::new(1, 1, 2, 2), 2.0));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert!(tape.grad(x).unwrap().iter().all(|&v| v == 2.0));
    }
}

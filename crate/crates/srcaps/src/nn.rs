//! Weight-normalized convolution layer, the building block of every
//! convolution-based stage in the model.

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape4, Tensor4};

/// Parameters of one weight-normalized convolution: a direction kernel `v`,
/// a per-output-channel gain `g` (the effective kernel is `g * v / ||v||`),
/// and a per-output-channel bias.
#[derive(Clone, Debug)]
pub struct ConvLayer<T> {
    pub v: Tensor4<T>,
    pub g: Tensor4<T>,
    pub bias: Tensor4<T>,
    pub stride: usize,
    pub pad: usize,
}

/// Tape handles for one layer's parameters within a training step.
#[derive(Clone, Copy, Debug)]
pub struct ConvVars {
    pub v: Var,
    pub g: Var,
    pub bias: Var,
}

impl<T: Scalar> ConvLayer<T> {
    /// Fan-in uniform initialization: `v ~ U(-s, s)` with
    /// `s = sqrt(1 / (in_ch * k^2))`, gain set to `||v||` per output channel
    /// (so normalization starts as the identity) and zero bias.
    pub fn init<R: Rng>(out_ch: usize, in_ch: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        let bound = (1.0 / (in_ch * k * k) as f64).sqrt();
        let v = Tensor4::rand_uniform(Shape4::new(out_ch, in_ch, k, k), -bound, bound, rng);
        let per = in_ch * k * k;
        let g_data: Vec<T> = (0..out_ch)
            .map(|oc| {
                v.data()[oc * per..(oc + 1) * per]
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + x * x)
                    .sqrt()
            })
            .collect();
        let g = Tensor4::new(Shape4::new(out_ch, 1, 1, 1), g_data).expect("gain shape");
        let bias = Tensor4::zeros(Shape4::new(out_ch, 1, 1, 1));
        ConvLayer { v, g, bias, stride, pad }
    }

    pub fn out_channels(&self) -> usize {
        self.v.shape().n
    }

    pub fn param_count(&self) -> usize {
        self.v.shape().count() + self.g.shape().count() + self.bias.shape().count()
    }

    pub fn register(&self, tape: &mut Tape<T>) -> ConvVars {
        ConvVars {
            v: tape.leaf(self.v.clone(), true),
            g: tape.leaf(self.g.clone(), true),
            bias: tape.leaf(self.bias.clone(), true),
        }
    }

    /// Register parameters as constants, for inference-style forwards where
    /// no parameter gradients are wanted.
    pub fn register_frozen(&self, tape: &mut Tape<T>) -> ConvVars {
        ConvVars {
            v: tape.constant(self.v.clone()),
            g: tape.constant(self.g.clone()),
            bias: tape.constant(self.bias.clone()),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, vars: &ConvVars, x: Var) -> Result<Var> {
        let w = tape.weight_norm(vars.v, vars.g)?;
        tape.conv2d(x, w, Some(vars.bias), self.stride, self.pad)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor4<T>)) {
        f(format!("{prefix}.v"), &self.v);
        f(format!("{prefix}.g"), &self.g);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor4<T>)) {
        f(format!("{prefix}.v"), &mut self.v);
        f(format!("{prefix}.g"), &mut self.g);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn effective_kernel(v: &Tensor4<f64>, g: &Tensor4<f64>) -> Tensor4<f64> {
        let mut tape = Tape::<f64>::new();
        let vv = tape.constant(v.clone());
        let gv = tape.constant(g.clone());
        let w = tape.weight_norm(vv, gv).unwrap();
        tape.value(w).clone()
    }

    #[test]
    fn gain_equal_to_norm_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = ConvLayer::<f64>::init(4, 3, 3, 1, 1, &mut rng);
        let w = effective_kernel(&layer.v, &layer.g);
        assert!(max_abs_diff(&w, &layer.v) < 1e-12);
    }

    #[test]
    fn direction_only_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer = ConvLayer::<f64>::init(2, 2, 3, 1, 1, &mut rng);
        let w1 = effective_kernel(&layer.v, &layer.g);
        let scaled = layer.v.map(|x| x * 10.0);
        let w2 = effective_kernel(&scaled, &layer.g);
        assert!(max_abs_diff(&w1, &w2) < 1e-12);
    }

    #[test]
    fn gain_two_norm_four_halves_direction() {
        // all-2 direction over 4 elements has norm 4
        let v = Tensor4::<f64>::full(Shape4::new(1, 1, 2, 2), 2.0);
        let g = Tensor4::scalar_value(2.0);
        let w = effective_kernel(&v, &g);
        let expected = v.map(|x| x / 2.0);
        assert!(max_abs_diff(&w, &expected) < 1e-12);
    }

    #[test]
    fn effective_norm_equals_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = ConvLayer::<f64>::init(3, 2, 3, 1, 1, &mut rng);
        layer.g = Tensor4::new(
            Shape4::new(3, 1, 1, 1),
            vec![0.5, 1.5, 2.5],
        )
        .unwrap();
        let w = effective_kernel(&layer.v, &layer.g);
        let per = 2 * 3 * 3;
        for oc in 0..3 {
            let norm: f64 = w.data()[oc * per..(oc + 1) * per]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!((norm - layer.g.data()[oc]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_direction_is_rejected() {
        let v = Tensor4::<f64>::zeros(Shape4::new(1, 1, 3, 3));
        let g = Tensor4::scalar_value(1.0);
        let mut tape = Tape::<f64>::new();
        let vv = tape.constant(v);
        let gv = tape.constant(g);
        assert!(tape.weight_norm(vv, gv).is_err());
    }
}

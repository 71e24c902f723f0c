use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, Rng};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

/// Dense feedforward network with all parameters in one flat buffer.
///
/// Layer `l` owns a row-major `(fan_out, fan_in)` weight block followed by a
/// `fan_out` bias block. The flat layout makes optimizer steps, target-network
/// averaging, finite differences and checkpointing plain slice operations.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<T>,
    slots: Vec<LayerSlot>,
}

/// Per-layer activations recorded by [`Mlp::forward_trace`]; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub activations: Vec<Array2<T>>,
}

impl<T> ForwardTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations
            .last()
            .expect("trace holds at least the input")
    }
}

fn layout(layer_sizes: &[usize]) -> (Vec<LayerSlot>, usize) {
    let mut slots = Vec::with_capacity(layer_sizes.len().saturating_sub(1));
    let mut offset = 0;
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let weight_offset = offset;
        let bias_offset = weight_offset + fan_in * fan_out;
        offset = bias_offset + fan_out;
        slots.push(LayerSlot {
            fan_in,
            fan_out,
            weight_offset,
            bias_offset,
        });
    }
    (slots, offset)
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network; mostly useful as a starting point for hand-built tests.
    pub fn zeros(layer_sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return invalid(format!(
                "an mlp needs at least an input and an output layer, got sizes {layer_sizes:?}"
            ));
        }
        if layer_sizes.contains(&0) {
            return invalid(format!("layer sizes must be positive, got {layer_sizes:?}"));
        }
        if hidden == Activation::Identity && layer_sizes.len() > 2 {
            log::debug!("mlp with identity hidden activation is a linear map");
        }
        if output == Activation::Relu {
            return invalid("output activation must be identity or tanh");
        }
        let (slots, total) = layout(layer_sizes);
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            hidden,
            output,
            params: vec![T::zero(); total],
            slots,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden, output)?;
        for slot in net.slots.clone() {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for p in &mut net.params[slot.weight_offset..slot.bias_offset] {
                *p = T::of(rng.random_range(-limit..limit));
            }
        }
        Ok(net)
    }

    pub fn with_seed(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self> {
        Self::new(layer_sizes, hidden, output, &mut rng::seeded(seed))
    }

    pub fn from_params(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        params: Vec<T>,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden, output)?;
        if params.len() != net.params.len() {
            return invalid(format!(
                "expected {} parameters for sizes {layer_sizes:?}, got {}",
                net.params.len(),
                params.len()
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.slots.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, T> {
        let s = self.slots[layer];
        ArrayView2::from_shape(
            (s.fan_out, s.fan_in),
            &self.params[s.weight_offset..s.bias_offset],
        )
        .expect("slot layout matches buffer")
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, T> {
        let s = self.slots[layer];
        ArrayViewMut2::from_shape(
            (s.fan_out, s.fan_in),
            &mut self.params[s.weight_offset..s.bias_offset],
        )
        .expect("slot layout matches buffer")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, T> {
        let s = self.slots[layer];
        ArrayView1::from(&self.params[s.bias_offset..s.bias_offset + s.fan_out])
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, T> {
        let s = self.slots[layer];
        ArrayViewMut1::from(&mut self.params[s.bias_offset..s.bias_offset + s.fan_out])
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.slots.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return invalid(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.weight(layer).t());
        z += &self.bias(layer);
        let act = self.activation_of(layer);
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    /// Evaluates a batch (one sample per row).
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = self.layer_forward(0, &x);
        for layer in 1..self.slots.len() {
            h = self.layer_forward(layer, &h.view());
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| crate::SgfdError::InvalidArgument(e.to_string()))?;
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_trace(&self, x: ArrayView2<T>) -> Result<ForwardTrace<T>> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.slots.len() + 1);
        activations.push(x.to_owned());
        for layer in 0..self.slots.len() {
            let next = self.layer_forward(layer, &activations[layer].view());
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    /// Reverse pass for `<upstream, output>` summed over the batch.
    ///
    /// Returns the flat parameter gradient (same layout as [`Mlp::params`]) and the
    /// gradient with respect to every input row.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        upstream: ArrayView2<T>,
    ) -> Result<(Vec<T>, Array2<T>)> {
        let mut grads = vec![T::zero(); self.params.len()];
        let input_grad = self.backward_impl(trace, upstream, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Like [`Mlp::backward`] but skips parameter gradients.
    pub fn input_gradient(
        &self,
        trace: &ForwardTrace<T>,
        upstream: ArrayView2<T>,
    ) -> Result<Array2<T>> {
        self.backward_impl(trace, upstream, None)
    }

    fn backward_impl(
        &self,
        trace: &ForwardTrace<T>,
        upstream: ArrayView2<T>,
        mut grads: Option<&mut Vec<T>>,
    ) -> Result<Array2<T>> {
        let out = trace.output();
        if trace.activations.len() != self.slots.len() + 1
            || upstream.dim() != out.dim()
            || trace.activations[0].ncols() != self.input_dim()
        {
            return invalid(format!(
                "upstream gradient shape {:?} does not match network output {:?}",
                upstream.dim(),
                out.dim()
            ));
        }
        let mut delta = upstream.to_owned();
        for layer in (0..self.slots.len()).rev() {
            let act = self.activation_of(layer);
            if act != Activation::Identity {
                ndarray::Zip::from(&mut delta)
                    .and(&trace.activations[layer + 1])
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
            }
            let input = &trace.activations[layer];
            if let Some(grads) = grads.as_deref_mut() {
                let s = self.slots[layer];
                let gw = delta.t().dot(input);
                let mut gw_view = ArrayViewMut2::from_shape(
                    (s.fan_out, s.fan_in),
                    &mut grads[s.weight_offset..s.bias_offset],
                )
                .expect("slot layout matches buffer");
                gw_view.assign(&gw);
                let gb = delta.sum_axis(Axis(0));
                grads[s.bias_offset..s.bias_offset + s.fan_out]
                    .iter_mut()
                    .zip(gb.iter())
                    .for_each(|(g, &v)| *g = v);
            }
            delta = delta.dot(&self.weight(layer));
        }
        Ok(delta)
    }

    /// Single-sample reverse pass: gradients of `<upstream, f(x)>`.
    pub fn backward_single(&self, x: &[T], upstream: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let xv = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| crate::SgfdError::InvalidArgument(e.to_string()))?;
        let trace = self.forward_trace(xv)?;
        let uv = ArrayView2::from_shape((1, upstream.len()), upstream)
            .map_err(|e| crate::SgfdError::InvalidArgument(e.to_string()))?;
        let (grads, input) = self.backward(&trace, uv)?;
        Ok((grads, input.into_raw_vec_and_offset().0))
    }

    /// `target <- tau * self + (1 - tau) * target`, parameter by parameter.
    pub fn blend_into(&self, target: &mut Mlp<T>, tau: T) -> Result<()> {
        if target.layer_sizes != self.layer_sizes {
            return invalid("target network has a different architecture");
        }
        let keep = T::one() - tau;
        for (t, &s) in target.params.iter_mut().zip(&self.params) {
            *t = tau * s + keep * *t;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layer_sizes: self.layer_sizes.clone(),
            hidden: self.hidden,
            output: self.output,
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
            slots: self.slots.clone(),
        }
    }
}

/// Row-major `(rows, cols)` copy of a slice of vectors.
pub fn stack_rows<T: Scalar>(rows: &[Vec<T>]) -> Result<Array2<T>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return invalid("rows have unequal lengths");
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("shape checked"))
}

#[cfg(test)]
mod tests {
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use ndarray::array;

    fn finite_difference_check(net: &Mlp<f64>, x: &[f64], upstream: &[f64]) -> f64 {
        let (grads, input_grad) = net.backward_single(x, upstream).unwrap();
        let objective = |n: &Mlp<f64>, x: &[f64]| -> f64 {
            n.forward(x)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-6);
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (objective(&plus, x) - objective(&minus, x)) / (2.0 * h);
            worst = worst.max(rel(fd, grads[i]));
        }
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let fd = (objective(net, &xp) - objective(net, &xm)) / (2.0 * h);
            worst = worst.max(rel(fd, input_grad[i]));
        }
        worst
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a =
            Mlp::<f64>::with_seed(&[4, 128, 3], Activation::Relu, Activation::Identity, 7).unwrap();
        let b =
            Mlp::<f64>::with_seed(&[4, 128, 3], Activation::Relu, Activation::Identity, 7).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(a.bias(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        assert!(Mlp::<f64>::with_seed(&[4], Activation::Relu, Activation::Identity, 1).is_err());
        assert!(Mlp::<f64>::with_seed(&[], Activation::Relu, Activation::Identity, 1).is_err());
        assert!(
            Mlp::<f64>::with_seed(&[3, 0, 1], Activation::Relu, Activation::Identity, 1).is_err()
        );
    }

    #[test]
    fn weight_shapes_chain() {
        let net =
            Mlp::<f64>::with_seed(&[2, 128, 2], Activation::Relu, Activation::Identity, 0).unwrap();
        assert_eq!(net.weight(0).dim(), (128, 2));
        assert_eq!(net.weight(1).dim(), (2, 128));
        assert_eq!(net.num_params(), 128 * 2 + 128 + 2 * 128 + 2);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let mut net = Mlp::<f64>::zeros(&[3, 3], Activation::Relu, Activation::Identity).unwrap();
        net.weight_mut(0).assign(&Array2::eye(3));
        assert_eq!(
            net.forward(&[0.5, -1.0, 2.0]).unwrap(),
            vec![0.5, -1.0, 2.0]
        );
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let net =
            Mlp::<f64>::with_seed(&[3, 5, 2], Activation::Tanh, Activation::Identity, 11).unwrap();
        let x = [1.0, -1.0, 0.5];
        let w0 = net.weight(0);
        let b0 = net.bias(0);
        let w1 = net.weight(1);
        let b1 = net.bias(1);
        let mut hidden = [0.0; 5];
        for (r, h) in hidden.iter_mut().enumerate() {
            let mut acc = b0[r];
            for c in 0..3 {
                acc += w0[[r, c]] * x[c];
            }
            *h = acc.tanh();
        }
        let mut expected = [0.0; 2];
        for (r, e) in expected.iter_mut().enumerate() {
            let mut acc = b1[r];
            for c in 0..5 {
                acc += w1[[r, c]] * hidden[c];
            }
            *e = acc;
        }
        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net =
            Mlp::<f64>::with_seed(&[3, 2], Activation::Relu, Activation::Identity, 0).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_layer_gradients_have_closed_form() {
        let mut net = Mlp::<f64>::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        net.weight_mut(0)
            .assign(&array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
        let x = [0.3, -0.7, 2.0];
        let g = [1.5, -2.0];
        let (grads, input_grad) = net.backward_single(&x, &g).unwrap();
        // dW = g x^T, db = g, dx = W^T g
        for r in 0..2 {
            for c in 0..3 {
                assert!((grads[r * 3 + c] - g[r] * x[c]).abs() < 1e-15);
            }
        }
        assert_eq!(&grads[6..8], &g);
        let expected = [1.0 * 1.5 + 1.0 * 2.0, 2.0 * 1.5 - 0.5 * 2.0, 3.0 * 1.5];
        for (a, b) in input_grad.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net =
            Mlp::<f64>::with_seed(&[3, 8, 2], Activation::Tanh, Activation::Identity, 2).unwrap();
        let (grads, input_grad) = net.backward_single(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        assert!(input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tanh_net_gradients_match_finite_differences() {
        let net = Mlp::<f64>::with_seed(&[3, 8, 2], Activation::Tanh, Activation::Tanh, 5).unwrap();
        let worst = finite_difference_check(&net, &[0.4, -1.2, 0.9], &[0.7, -1.3]);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let net =
            Mlp::<f64>::with_seed(&[3, 4, 2], Activation::Relu, Activation::Identity, 0).unwrap();
        assert!(net.backward_single(&[0.0, 0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn blend_endpoints() {
        let main =
            Mlp::<f64>::with_seed(&[2, 3, 1], Activation::Relu, Activation::Identity, 1).unwrap();
        let original =
            Mlp::<f64>::with_seed(&[2, 3, 1], Activation::Relu, Activation::Identity, 2).unwrap();
        let mut target = original.clone();
        main.blend_into(&mut target, 0.0).unwrap();
        assert_eq!(target, original);
        main.blend_into(&mut target, 1.0).unwrap();
        assert_eq!(target.params(), main.params());
    }

    #[test]
    fn batch_forward_matches_rowwise() {
        let net = Mlp::<f32>::with_seed(&[2, 6, 3], Activation::Relu, Activation::Tanh, 9).unwrap();
        let x = array![[0.1f32, 0.2], [-1.0, 3.0], [0.0, 0.0]];
        let batch = net.forward_batch(x.view()).unwrap();
        for (r, row) in x.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in batch.row(r).iter().zip(single) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

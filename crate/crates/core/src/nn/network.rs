use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::activation::{ActivationKind, ActivationTag};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shape and wiring of one layer, without parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationTag,
    /// Earlier layer whose weight matrix this layer uses transposed.
    pub tied_to: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    /// `out_dim x in_dim` matrix owned by the layer.
    Owned(Array2<f64>),
    /// Transpose of the weight owned by the referenced layer.
    Tied(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationKind,
    pub weight: Weight,
    pub bias: Array1<f64>,
}

impl Layer {
    /// Fully connected layer; dimensions come from `weight`.
    pub fn dense(weight: Array2<f64>, bias: Array1<f64>, activation: ActivationKind) -> Self {
        let (out_dim, in_dim) = weight.dim();
        Layer {
            in_dim,
            out_dim,
            activation,
            weight: Weight::Owned(weight),
            bias,
        }
    }

    /// Layer reusing the transposed weight of layer `partner`.
    pub fn tied(
        partner: usize,
        in_dim: usize,
        out_dim: usize,
        bias: Array1<f64>,
        activation: ActivationKind,
    ) -> Self {
        Layer {
            in_dim,
            out_dim,
            activation,
            weight: Weight::Tied(partner),
            bias,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            activation: self.activation.tag(),
            tied_to: match self.weight {
                Weight::Tied(k) => Some(k),
                Weight::Owned(_) => None,
            },
        }
    }

    fn param_count(&self) -> usize {
        let w = match self.weight {
            Weight::Owned(_) => self.in_dim * self.out_dim,
            Weight::Tied(_) => 0,
        };
        w + self.out_dim + self.activation.param_count()
    }
}

/// Parameters of a dense feed-forward network.
///
/// The flattened parameter vector visits layers in order; within a layer it
/// holds the owned weight (row-major), then the bias, then the dual-pathway
/// thresholds. Tied layers contribute no weight entries.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

/// Activations recorded by [`NetworkParams::forward`] for use in backprop.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    preactivations: Vec<Array2<f64>>,
    digest: u64,
}

impl ForwardCache {
    /// Pre-activations of layer `l`, one row per sample.
    pub fn preactivation(&self, l: usize) -> ArrayView2<'_, f64> {
        self.preactivations[l].view()
    }

    /// Input fed to layer `l`, one row per sample.
    pub fn layer_input(&self, l: usize) -> ArrayView2<'_, f64> {
        self.inputs[l].view()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

fn fnv1a(acc: u64, word: u64) -> u64 {
    let mut h = acc;
    for byte in word.to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NumericFailure(format!(
            "non-finite value in {what} at flat index {i}"
        ))),
        None => Ok(()),
    }
}

impl NetworkParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let params = NetworkParams { layers };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Contract("network has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::Contract(format!("layer {l} has a zero dimension")));
            }
            if l > 0 && self.layers[l - 1].out_dim != layer.in_dim {
                return Err(Error::dims("layer chain", self.layers[l - 1].out_dim, layer.in_dim));
            }
            match &layer.weight {
                Weight::Owned(w) => {
                    if w.dim() != (layer.out_dim, layer.in_dim) {
                        return Err(Error::Contract(format!(
                            "layer {l} weight is {:?}, expected ({}, {})",
                            w.dim(),
                            layer.out_dim,
                            layer.in_dim
                        )));
                    }
                }
                Weight::Tied(k) => {
                    let partner = self.layers.get(*k).filter(|_| *k < l).ok_or_else(|| {
                        Error::Contract(format!("layer {l} is tied to invalid layer {k}"))
                    })?;
                    if matches!(partner.weight, Weight::Tied(_)) {
                        return Err(Error::Contract(format!(
                            "layer {l} is tied to layer {k}, which is itself tied"
                        )));
                    }
                    if partner.in_dim != layer.out_dim || partner.out_dim != layer.in_dim {
                        return Err(Error::Contract(format!(
                            "tied layer {l} must have dimensions swapped relative to layer {k}"
                        )));
                    }
                }
            }
            if layer.bias.len() != layer.out_dim {
                return Err(Error::dims("bias length", layer.out_dim, layer.bias.len()));
            }
            if let Some(t) = layer.activation.thresholds() {
                if t.len() != layer.out_dim {
                    return Err(Error::dims("threshold count", layer.out_dim, t.len()));
                }
            }
        }
        check_finite(self.flatten(), "network parameters")
    }

    /// Randomly initialised network for `specs`.
    ///
    /// Owned weights are uniform in `±sqrt(6 / (fan_in + fan_out))`; biases
    /// and thresholds start at zero.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let layers = specs
            .iter()
            .map(|s| {
                let activation = ActivationKind::from_tag(s.activation, s.out_dim);
                let bias = Array1::zeros(s.out_dim);
                match s.tied_to {
                    Some(k) => Layer::tied(k, s.in_dim, s.out_dim, bias, activation),
                    None => {
                        let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
                        let w = Array2::from_shape_simple_fn((s.out_dim, s.in_dim), || {
                            rng.uniform_range(-limit, limit)
                        });
                        Layer::dense(w, bias, activation)
                    }
                }
            })
            .collect();
        NetworkParams::new(layers)
    }

    /// Layer specs of a perceptron `input -> hidden... -> output` with a
    /// linear output layer.
    pub fn mlp_specs(input: usize, hidden: &[usize], output: usize, act: ActivationTag) -> Vec<LayerSpec> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let last = dims.len() - 2;
        dims.windows(2)
            .enumerate()
            .map(|(l, w)| LayerSpec {
                in_dim: w[0],
                out_dim: w[1],
                activation: if l == last { ActivationTag::Linear } else { act },
                tied_to: None,
            })
            .collect()
    }

    /// Single-hidden-layer autoencoder whose decoder is the encoder transposed.
    pub fn tied_autoencoder_specs(dim: usize, hidden: usize, act: ActivationTag) -> Vec<LayerSpec> {
        vec![
            LayerSpec {
                in_dim: dim,
                out_dim: hidden,
                activation: act,
                tied_to: None,
            },
            LayerSpec {
                in_dim: hidden,
                out_dim: dim,
                activation: ActivationTag::Linear,
                tied_to: Some(0),
            },
        ]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Effective `out_dim x in_dim` weight of layer `l`, resolving ties.
    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        match &self.layers[l].weight {
            Weight::Owned(w) => w.view(),
            Weight::Tied(k) => match &self.layers[*k].weight {
                Weight::Owned(w) => w.t(),
                Weight::Tied(_) => unreachable!("validated: ties are one level deep"),
            },
        }
    }

    /// Copy of the network with every hidden layer switched to `tag`.
    ///
    /// Weights and biases are kept; new dual-pathway thresholds are zero.
    pub fn with_hidden_activation(&self, tag: ActivationTag) -> Self {
        let last = self.layers.len() - 1;
        let mut out = self.clone();
        for layer in &mut out.layers[..last] {
            if layer.activation.tag() != tag {
                layer.activation = ActivationKind::from_tag(tag, layer.out_dim);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            if let Weight::Owned(w) = &layer.weight {
                flat.extend(w.iter().copied());
            }
            flat.extend(layer.bias.iter().copied());
            if let Some(t) = layer.activation.thresholds() {
                flat.extend(t.iter().copied());
            }
        }
        flat
    }

    /// Overwrites every parameter from a flat vector in [`flatten`](Self::flatten) order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dims("flat parameter vector", self.param_count(), flat.len()));
        }
        let mut pos = 0;
        let mut take = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = flat[pos];
                pos += 1;
            }
        };
        for layer in &mut self.layers {
            if let Weight::Owned(w) = &mut layer.weight {
                take(&mut w.iter_mut());
            }
            take(&mut layer.bias.iter_mut());
            if let Some(t) = layer.activation.thresholds_mut() {
                take(&mut t.iter_mut());
            }
        }
        Ok(())
    }

    /// Network with the same structure as `self` and parameters from `flat`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    /// Hash of the parameter bits; ties a forward cache to its parameters.
    pub fn digest(&self) -> u64 {
        let mut h = 0xCBF2_9CE4_8422_2325;
        for layer in &self.layers {
            h = fnv1a(h, (layer.in_dim as u64) << 32 | layer.out_dim as u64);
        }
        for v in self.flatten() {
            h = fnv1a(h, v.to_bits());
        }
        h
    }

    fn layer_forward(&self, l: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weight(l).t());
        z += &self.layers[l].bias;
        z
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("network input columns", self.input_dim(), x.ncols()));
        }
        Ok(())
    }

    /// Network outputs for a batch of inputs, one sample per row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = self.layer_forward(l, a.view());
            a = layer.activation.apply_batch(z.view());
        }
        check_finite(a.iter().copied(), "network output")?;
        Ok(a)
    }

    /// Forward pass keeping everything [`backward`](Self::backward) needs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut preactivations = Vec::with_capacity(n);
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = self.layer_forward(l, a.view());
            check_finite(z.iter().copied(), "pre-activations")
                .map_err(|e| Error::NumericFailure(format!("layer {l}: {e}")))?;
            let next = layer.activation.apply_batch(z.view());
            inputs.push(a);
            preactivations.push(z);
            a = next;
        }
        let cache = ForwardCache {
            inputs,
            preactivations,
            digest: self.digest(),
        };
        Ok((a, cache))
    }

    /// Gradient of the loss with respect to every free parameter.
    ///
    /// `dy` is dLoss/dOutput for the batch that produced `cache`. The result
    /// follows the flattened-parameter order; a tied weight block receives the
    /// sum of the gradients of both layers that use it.
    pub fn backward(&self, cache: &ForwardCache, dy: ArrayView2<f64>) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.layers.len() || cache.digest != self.digest() {
            return Err(Error::Contract(
                "forward cache was produced by different parameters".into(),
            ));
        }
        let batch = cache.batch_size();
        if dy.dim() != (batch, self.output_dim()) {
            return Err(Error::Contract(format!(
                "output gradient is {:?}, expected ({}, {})",
                dy.dim(),
                batch,
                self.output_dim()
            )));
        }

        let n = self.layers.len();
        let mut weight_grads: Vec<Option<Array2<f64>>> = self
            .layers
            .iter()
            .map(|layer| match layer.weight {
                Weight::Owned(_) => Some(Array2::zeros((layer.out_dim, layer.in_dim))),
                Weight::Tied(_) => None,
            })
            .collect();
        let mut bias_grads = vec![Array1::<f64>::zeros(0); n];
        let mut threshold_grads: Vec<Option<Array1<f64>>> = vec![None; n];

        let mut upstream = dy.to_owned();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (dz, dt) = layer
                .activation
                .backprop_batch(cache.preactivations[l].view(), upstream.view());
            let dw = dz.t().dot(&cache.inputs[l]);
            match layer.weight {
                Weight::Owned(_) => *weight_grads[l].as_mut().expect("owned") += &dw,
                Weight::Tied(k) => *weight_grads[k].as_mut().expect("owned partner") += &dw.t(),
            }
            bias_grads[l] = dz.sum_axis(Axis(0));
            threshold_grads[l] = dt;
            if l > 0 {
                upstream = dz.dot(&self.weight(l));
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..n {
            if let Some(g) = &weight_grads[l] {
                flat.extend(g.iter().copied());
            }
            flat.extend(bias_grads[l].iter().copied());
            if let Some(t) = &threshold_grads[l] {
                flat.extend(t.iter().copied());
            }
        }
        Ok(flat)
    }
}

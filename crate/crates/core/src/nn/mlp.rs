use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
        }
    }

    /// Multiply `grad` by the derivative, expressed through the activation output `y`.
    fn backprop(self, y: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.zip_mut_with(y, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_mut_with(y, |g, &y| *g *= 1.0 - y * y),
            Activation::Sigmoid => grad.zip_mut_with(y, |g, &y| *g *= y * (1.0 - y)),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: &[usize],
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            output_dim,
            hidden_layers: hidden_layers.to_vec(),
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.input_dim > 0 && self.output_dim > 0, || "network dims must be positive".into())?;
        ensure(self.hidden_layers.iter().all(|w| *w > 0), || "hidden widths must be positive".into())?;
        ensure(matches!(self.hidden_activation, Activation::Relu | Activation::Tanh), || {
            format!("hidden activation {:?} not in {{relu, tanh}}", self.hidden_activation)
        })?;
        ensure(
            matches!(self.output_activation, Activation::Identity | Activation::Tanh | Activation::Sigmoid),
            || format!("output activation {:?} not in {{identity, tanh, sigmoid}}", self.output_activation),
        )
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_layers);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One dense layer; `weight` is `fan_in x fan_out` so a batch maps as `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer { weight: Array2::zeros((i, o)), bias: Array1::zeros(o) })
            .collect();
        Self { layers }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, last layer scaled by `final_scale`.
    pub fn init(spec: &MlpSpec, final_scale: f64, rng: &mut Rng) -> Self {
        let shapes = spec.layer_shapes();
        let n = shapes.len();
        let layers = shapes
            .into_iter()
            .enumerate()
            .map(|(k, (i, o))| {
                let bound = 1.0 / (i as f64).sqrt();
                let scale = if k + 1 == n { final_scale } else { 1.0 };
                let mut draw = || scale * rng.random_range(-bound..=bound);
                let weight = Array2::from_shape_simple_fn((i, o), &mut draw);
                let bias = Array1::from_shape_simple_fn(o, &mut draw);
                Layer { weight, bias }
            })
            .collect();
        Self { layers }
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim())
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Parameters in layer order: weights row-major, then bias.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }
}

/// Per-layer outputs kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[k+1]` is layer `k`'s output.
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, final_scale: f64, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let params = MlpParams::init(&spec, final_scale, rng);
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        ensure(MlpParams::zeros(&spec).same_shape(&params), || "parameter shapes do not match spec".into())?;
        ensure(params.all_finite(), || "parameters must be finite".into())?;
        Ok(Self { spec, params })
    }

    fn check_batch(&self, x: &ArrayView2<f64>) -> Result<()> {
        ensure(x.ncols() == self.spec.input_dim, || {
            format!("input width {} does not match input_dim {}", x.ncols(), self.spec.input_dim)
        })
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&x)?;
        let mut activations = Vec::with_capacity(self.params.layers.len() + 1);
        activations.push(x.to_owned());
        for (k, layer) in self.params.layers.iter().enumerate() {
            let mut z = activations[k].dot(&layer.weight);
            z += &layer.bias;
            self.spec.activation(k).apply(&mut z);
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&x)?;
        let mut h = x.to_owned();
        for (k, layer) in self.params.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            self.spec.activation(k).apply(&mut z);
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure(input.iter().all(|v| v.is_finite()), || "non-finite network input".into())?;
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass: gradients of `sum(upstream * output)` with respect to
    /// the parameters and to the input batch.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<(MlpParams, Array2<f64>)> {
        self.backward_impl(cache, upstream, false)
    }

    /// Like [`Mlp::backward_batch`], but `upstream` is taken with respect to
    /// the output layer's pre-activation. Used for sigmoid/BCE training,
    /// where the logit gradient is simply `p - y`.
    pub fn backward_from_logits(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<(MlpParams, Array2<f64>)> {
        self.backward_impl(cache, upstream, true)
    }

    fn backward_impl(&self, cache: &ForwardCache, upstream: ArrayView2<f64>, skip_output: bool) -> Result<(MlpParams, Array2<f64>)> {
        let out = cache.output();
        ensure(upstream.dim() == out.dim(), || {
            format!("upstream gradient shape {:?} does not match output {:?}", upstream.dim(), out.dim())
        })?;
        if upstream.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite upstream gradient".into()));
        }
        let n = self.params.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = upstream.to_owned();
        for k in (0..n).rev() {
            if !(skip_output && k == n - 1) {
                self.spec.activation(k).backprop(&cache.activations[k + 1], &mut g);
            }
            let weight = cache.activations[k].t().dot(&g);
            let bias = g.sum_axis(Axis(0));
            let next = g.dot(&self.params.layers[k].weight.t());
            grads.push(Layer { weight, bias });
            g = next;
        }
        grads.reverse();
        Ok((MlpParams { layers: grads }, g))
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(MlpParams, Vec<f64>)> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Contract(e.to_string()))?;
        let cache = self.forward_cached(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|e| Error::Contract(e.to_string()))?;
        let (grads, dx) = self.backward_batch(&cache, up)?;
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }
}

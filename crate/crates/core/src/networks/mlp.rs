use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Activation, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Nonlinearity applied after the last layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputActivation {
    None,
    Sigmoid,
    Tanh,
}

impl OutputActivation {
    fn activation(self) -> Option<Activation> {
        match self {
            OutputActivation::None => None,
            OutputActivation::Sigmoid => Some(Activation::Sigmoid),
            OutputActivation::Tanh => Some(Activation::Tanh),
        }
    }
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::None => "none",
            OutputActivation::Sigmoid => "sigmoid",
            OutputActivation::Tanh => "tanh",
        })
    }
}

impl FromStr for OutputActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(OutputActivation::None),
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            "tanh" => Ok(OutputActivation::Tanh),
            other => Err(Error::parse(format!("unknown output activation `{other}`"))),
        }
    }
}

/// Layer shapes of a dense network.
///
/// Text form: `2,32,32,2;tanh;none`, with an optional trailing
/// `;affine_input` marking a first layer that has no nonlinearity (the
/// latent reparameterization of a GM-GAN member).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden: Activation,
    output: OutputActivation,
    affine_input: bool,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden: Activation,
        output: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::contract(
                "an MLP needs at least input and output sizes",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::contract(format!(
                "zero layer size in {layer_sizes:?}"
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden,
            output,
            affine_input: false,
        })
    }

    /// Default generator: `[2, 32, 32, 2]`, tanh hidden, linear output.
    pub fn default_generator() -> Self {
        MlpSpec::new(vec![2, 32, 32, 2], Activation::Tanh, OutputActivation::None).unwrap()
    }

    /// Default critic: `[2, 32, 32, 1]`, leaky relu hidden.
    pub fn default_critic(output: OutputActivation) -> Self {
        MlpSpec::new(vec![2, 32, 32, 1], Activation::LeakyRelu(0.2), output).unwrap()
    }

    pub fn with_affine_input(mut self) -> Self {
        self.affine_input = true;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn affine_input(&self) -> bool {
        self.affine_input
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `(n_in, n_out)` of layer `i`.
    pub fn layer_dims(&self, i: usize) -> (usize, usize) {
        (self.layer_sizes[i], self.layer_sizes[i + 1])
    }

    pub fn activation_after(&self, i: usize) -> Option<Activation> {
        if i + 1 == self.num_layers() {
            self.output.activation()
        } else if i == 0 && self.affine_input {
            None
        } else {
            Some(self.hidden)
        }
    }

    /// Dense parameter count including biases.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offset of layer `i`'s weight block in the flat layout.
    pub fn layer_offset(&self, i: usize) -> usize {
        self.layer_sizes[..=i]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Same depth and activations, every hidden layer of width `h`.
    pub fn with_hidden_width(&self, h: usize) -> Result<Self> {
        let mut sizes = self.layer_sizes.clone();
        let last = sizes.len() - 1;
        for s in &mut sizes[1..last] {
            *s = h;
        }
        let mut spec = MlpSpec::new(sizes, self.hidden, self.output)?;
        spec.affine_input = self.affine_input;
        Ok(spec)
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        write!(f, "{};{};{}", sizes.join(","), self.hidden, self.output)?;
        if self.affine_input {
            write!(f, ";affine_input")?;
        }
        Ok(())
    }
}

impl FromStr for MlpSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(';').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::parse(format!(
                "expected `sizes;hidden;output`, got `{s}`"
            )));
        }
        let sizes = parts[0]
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(format!("bad layer size `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut spec = MlpSpec::new(sizes, parts[1].parse()?, parts[2].parse()?)?;
        match parts.get(3) {
            None => {}
            Some(&"affine_input") => spec.affine_input = true,
            Some(other) => return Err(Error::parse(format!("unknown spec flag `{other}`"))),
        }
        Ok(spec)
    }
}

/// Flat parameters of one network: per layer, the `n_in × n_out` weight
/// (row-major) followed by the `n_out` bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::shape(
                "param_vector",
                format!(
                    "spec {spec} needs {} values, got {}",
                    spec.param_count(),
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("param_vector"));
        }
        Ok(ParamVector { spec, values })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        ParamVector {
            spec,
            values: vec![0.0; n],
        }
    }

    /// Uniform(−1/√n_in, 1/√n_in) for weights and biases of each layer.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.param_count());
        for i in 0..spec.num_layers() {
            let (n_in, n_out) = spec.layer_dims(i);
            let bound = 1.0 / (n_in as f64).sqrt();
            for _ in 0..(n_in * n_out + n_out) {
                values.push(rng.random_range(-bound..=bound));
            }
        }
        ParamVector { spec, values }
    }

    /// Rebuilds from per-layer `(weight, bias)` tensors.
    pub fn from_layers(spec: MlpSpec, layers: &[(Tensor, Tensor)]) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::shape("from_layers", "layer count differs from spec"));
        }
        let mut values = Vec::with_capacity(spec.param_count());
        for (i, (w, b)) in layers.iter().enumerate() {
            let (n_in, n_out) = spec.layer_dims(i);
            if w.shape() != [n_in, n_out] || b.shape() != [n_out] {
                return Err(Error::shape(
                    "from_layers",
                    format!("layer {i}: weight {:?}, bias {:?}", w.shape(), b.shape()),
                ));
            }
            values.extend_from_slice(w.data());
            values.extend_from_slice(b.data());
        }
        ParamVector::new(spec, values)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn ranges(&self, i: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (n_in, n_out) = self.spec.layer_dims(i);
        let off = self.spec.layer_offset(i);
        (
            off..off + n_in * n_out,
            off + n_in * n_out..off + n_in * n_out + n_out,
        )
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.values[self.ranges(i).0]
    }

    pub fn bias(&self, i: usize) -> &[f64] {
        &self.values[self.ranges(i).1]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.ranges(i).1;
        &mut self.values[r]
    }

    pub fn weight_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.ranges(i).0;
        &mut self.values[r]
    }

    pub fn layers(&self) -> Vec<(Tensor, Tensor)> {
        (0..self.spec.num_layers())
            .map(|i| {
                let (n_in, n_out) = self.spec.layer_dims(i);
                (
                    Tensor::matrix(n_in, n_out, self.weight(i).to_vec()).unwrap(),
                    Tensor::vector(self.bias(i).to_vec()).unwrap(),
                )
            })
            .collect()
    }

    /// Forward pass without a tape. Uses the same kernels as the tape, so
    /// the result is bit-identical to [`BoundMlp::forward`].
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (m, width) = x.dims2()?;
        if width != self.spec.input_dim() {
            return Err(Error::shape(
                "forward",
                format!(
                    "input width {width}, network expects {}",
                    self.spec.input_dim()
                ),
            ));
        }
        let mut h = x.data().to_vec();
        for i in 0..self.spec.num_layers() {
            let (n_in, n_out) = self.spec.layer_dims(i);
            let z = tensor::matmul_kernel(&h, self.weight(i), m, n_in, n_out);
            h = tensor::add_bias_kernel(&z, self.bias(i));
            if let Some(act) = self.spec.activation_after(i) {
                h.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        Tensor::checked("forward", vec![m, self.spec.output_dim()], h)
    }

    /// Places the parameters on a tape, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let layers = self
            .layers()
            .into_iter()
            .map(|(w, b)| {
                if trainable {
                    (tape.leaf(w), tape.leaf(b))
                } else {
                    (tape.constant(w), tape.constant(b))
                }
            })
            .collect();
        BoundMlp {
            spec: self.spec.clone(),
            layers,
        }
    }
}

/// A network whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    spec: MlpSpec,
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layer(&self, i: usize) -> (Var, Var) {
        self.layers[i]
    }

    /// Substitutes the bias node of layer `i`.
    pub fn replace_bias(&mut self, i: usize, bias: Var) {
        self.layers[i].1 = bias;
    }

    pub fn replace_weight(&mut self, i: usize, weight: Var) {
        self.layers[i].0 = weight;
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add_bias(z, b)?;
            if let Some(act) = self.spec.activation_after(i) {
                h = tape.activation(h, act)?;
            }
        }
        Ok(h)
    }

    /// Gradient in the flat [`ParamVector`] layout.
    pub fn gradient(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for &(w, b) in &self.layers {
            grads.extend_into(w, &mut out);
            grads.extend_into(b, &mut out);
        }
        out
    }
}

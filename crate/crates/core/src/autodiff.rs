//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation appends a node holding its forward value; node inputs
//! always refer to earlier nodes, so the tape is a DAG in topological order
//! by construction. [`Tape::backward`] sweeps it once in reverse.
//!
//! ```
//! use ensgan_core::autodiff::Tape;
//! use ensgan_core::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
//! let y = tape.add(x, x).unwrap();
//! let s = tape.sum(y).unwrap();
//! let grads = tape.backward(s).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 2.0]);
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`. Subgradient
    /// of relu at 0 is 0.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky_relu({a})"),
            Activation::Sigmoid => write!(f, "sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => {
                let alpha = s
                    .strip_prefix("leaky_relu(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::parse(format!("unknown activation `{s}`")))?;
                let alpha: f64 = alpha
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(format!("bad leaky_relu slope in `{s}`")))?;
                Ok(Activation::LeakyRelu(alpha))
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Act(Var, Activation),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Clamp(Var, f64, f64),
    Log(Var),
    Mean(Var),
    Sum(Var),
    L1Distance(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let value = tensor::add_bias(self.value(x), self.value(b))?;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Op::AddBias(x, b), value, rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::checked("activation", xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Act(x, kind), value, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        op: Op,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::checked(name, av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Add(a, b), "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Sub(a, b), "sub", a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Mul(a, b), "mul", a, b, |x, y| x * y)
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| scale * v + shift).collect();
        let value = Tensor::checked("affine", xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Affine(x, scale), value, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.affine(x, c, 0.0)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 0.0)
    }

    /// Elementwise clip to `[lo, hi]`; gradient passes only where the input
    /// lies inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::contract(format!("clamp bounds {lo} > {hi}")));
        }
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.clamp(lo, hi)).collect();
        let value = Tensor::checked("clamp", xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Clamp(x, lo, hi), value, rg))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let data = xv.data().iter().map(|v| v.ln()).collect();
        let value = Tensor::checked("log", xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Log(x), value, rg))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        let value = Tensor::checked("mean", Vec::new(), vec![m])?;
        let rg = self.rg(x);
        Ok(self.push(Op::Mean(x), value, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum::<f64>();
        let value = Tensor::checked("sum", Vec::new(), vec![s])?;
        let rg = self.rg(x);
        Ok(self.push(Op::Sum(x), value, rg))
    }

    /// `Σ |a − b|`; the subgradient at ties is 0.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_distance", a, b)?;
        let d = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>();
        let value = Tensor::checked("l1_distance", Vec::new(), vec![d])?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::L1Distance(a, b), value, rg))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients {
            grads,
            lens,
            shapes,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut accumulate = |v: Var, contrib: &dyn Fn(&mut [f64])| {
            if !self.rg(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            contrib(slot);
        };
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().expect("checked at construction");
                let n = self.value(b).shape()[1];
                if self.rg(a) {
                    let da = tensor::matmul_nt_kernel(g, self.value(b).data(), m, n, k);
                    accumulate(a, &|s| add_into(s, &da));
                }
                if self.rg(b) {
                    let db = tensor::matmul_tn_kernel(self.value(a).data(), g, m, k, n);
                    accumulate(b, &|s| add_into(s, &db));
                }
            }
            Op::AddBias(x, b) => {
                accumulate(x, &|s| add_into(s, g));
                let n = self.value(b).len();
                accumulate(b, &|s| {
                    for row in g.chunks_exact(n) {
                        add_into(s, row);
                    }
                });
            }
            Op::Act(x, kind) => {
                let xv = self.value(x).data();
                let yv = node.value.data();
                accumulate(x, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * kind.derivative(xv[i], yv[i]);
                    }
                });
            }
            Op::Add(a, b) => {
                accumulate(a, &|s| add_into(s, g));
                accumulate(b, &|s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                accumulate(a, &|s| add_into(s, g));
                accumulate(b, &|s| {
                    for (si, gi) in s.iter_mut().zip(g) {
                        *si -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                accumulate(a, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bv[i];
                    }
                });
                accumulate(b, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * av[i];
                    }
                });
            }
            Op::Affine(x, scale) => accumulate(x, &|s| {
                for (si, gi) in s.iter_mut().zip(g) {
                    *si += scale * gi;
                }
            }),
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(x).data();
                accumulate(x, &|s| {
                    for i in 0..s.len() {
                        if xv[i] >= lo && xv[i] <= hi {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Log(x) => {
                let xv = self.value(x).data();
                accumulate(x, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[i] / xv[i];
                    }
                });
            }
            Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                accumulate(x, &|s| {
                    for si in s.iter_mut() {
                        *si += g[0] / n;
                    }
                });
            }
            Op::Sum(x) => accumulate(x, &|s| {
                for si in s.iter_mut() {
                    *si += g[0];
                }
            }),
            Op::L1Distance(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                accumulate(a, &|s| {
                    for i in 0..s.len() {
                        s[i] += g[0] * sign(av[i] - bv[i]);
                    }
                });
                accumulate(b, &|s| {
                    for i in 0..s.len() {
                        s[i] -= g[0] * sign(av[i] - bv[i]);
                    }
                });
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Result of [`Tape::backward`]. Nodes off the path to the root have zero
/// gradient.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v` as a tensor of its shape. Panics if `v` belongs to
    /// another tape.
    pub fn wrt(&self, v: Var) -> Tensor {
        let data = match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[v.0]],
        };
        Tensor::new(self.shapes[v.0].clone(), data).expect("gradient entries are finite")
    }

    /// Appends the gradient of `v` (zeros if absent) to `out`.
    pub fn extend_into(&self, v: Var, out: &mut Vec<f64>) {
        match self.get(v) {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(std::iter::repeat_n(0.0, self.lens[v.0])),
        }
    }
}

/// Clips every entry to `[-c, c]`.
pub fn clamp_params(params: &mut [f64], c: f64) -> Result<()> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::contract(format!(
            "clip constant must be positive, got {c}"
        )));
    }
    for p in params.iter_mut() {
        *p = p.clamp(-c, c);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grad(f: impl Fn(&mut Tape, Var) -> Result<Var>, x0: f64) -> (f64, f64) {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(x0).unwrap());
        let y = f(&mut tape, x).unwrap();
        let g = tape.backward(y).unwrap();
        (tape.value(y).item(), g.wrt(x).item())
    }

    #[test]
    fn elementary_values() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::LeakyRelu(0.2).apply(-1.0), -0.2);
        let (v, _) = scalar_grad(|t, x| t.log(x), 1.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn root_is_parameter() {
        assert_eq!(scalar_grad(|_, x| Ok(x), 3.0), (3.0, 1.0));
        assert_eq!(scalar_grad(|t, x| t.scale(x, -2.5), 3.0).1, -2.5);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        assert_eq!(scalar_grad(|t, x| t.add(x, x), 1.0).1, 2.0);
        // x·x has derivative 2x through two uses of the same node
        assert_eq!(scalar_grad(|t, x| t.mul(x, x), 3.0).1, 6.0);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let m = tape.mean(x).unwrap();
        assert_eq!(tape.value(m).item(), 2.0);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn l1_values_and_tie_subgradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::vector(vec![1.0, 5.0]).unwrap());
        let d = tape.l1_distance(a, b).unwrap();
        assert_eq!(tape.value(d).item(), 3.0);
        let g = tape.backward(d).unwrap();
        assert_eq!(g.wrt(a).data(), &[0.0, -1.0]);
        assert_eq!(g.wrt(b).data(), &[0.0, 1.0]);
        let same = tape.l1_distance(a, a).unwrap();
        assert_eq!(tape.value(same).item(), 0.0);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        assert_eq!(
            scalar_grad(|t, x| t.activation(x, Activation::Relu), 0.0).1,
            0.0
        );
    }

    #[test]
    fn log_domain_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 0.0]).unwrap());
        assert!(matches!(tape.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let unused = tape.leaf(Tensor::vector(vec![4.0]).unwrap());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0]).unwrap());
        let x = tape.leaf(Tensor::vector(vec![2.0]).unwrap());
        let p = tape.mul(c, x).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x).data(), &[1.0]);
    }

    #[test]
    fn clamp_params_contract() {
        let mut p = vec![5.0, -0.003, -7.0];
        clamp_params(&mut p, 0.01).unwrap();
        assert_eq!(p, vec![0.01, -0.003, -0.01]);
        let once = p.clone();
        clamp_params(&mut p, 0.01).unwrap();
        assert_eq!(p, once);
        assert!(clamp_params(&mut p, 0.0).is_err());
        assert!(clamp_params(&mut p, -1.0).is_err());
    }

    #[test]
    fn activation_round_trips_through_text() {
        for a in [
            Activation::Tanh,
            Activation::Relu,
            Activation::Sigmoid,
            Activation::LeakyRelu(0.2),
        ] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert!("swish".parse::<Activation>().is_err());
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::mat::{dense_forward, Mat};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    /// Value and derivative. The ReLU derivative at exactly zero is 0.
    #[inline]
    pub(crate) fn eval(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                (t, 1.0 - t * t)
            }
            Activation::Identity => (x, 1.0),
        }
    }
}

/// Smooth saturating map of the real line onto the open interval
/// `(lower, upper)`: `mid + half * tanh(x)`, nudged one ulp inside the
/// bounds where `tanh` rounds to +-1.
#[inline]
pub fn squash(x: f64, lower: f64, upper: f64) -> (f64, f64) {
    let half = 0.5 * (upper - lower);
    let mid = 0.5 * (upper + lower);
    let t = libm::tanh(x);
    let y = (mid + half * t).clamp(lower.next_up(), upper.next_down());
    (y, half * (1.0 - t * t))
}

/// Layer sizes and per-layer activations of a fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetTopology {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    output_squash: Option<Vec<(f64, f64)>>,
}

impl NetTopology {
    /// `activations[i]` follows the affine map from layer `i` to `i + 1`.
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        output_squash: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("layer_sizes", "need at least 2 layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer_sizes", "layer sizes must be >= 1"));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::Dimension {
                what: "activations",
                expected: layer_sizes.len() - 1,
                got: activations.len(),
            });
        }
        if let Some(bounds) = &output_squash {
            let out = *layer_sizes.last().unwrap();
            if bounds.len() != out {
                return Err(Error::Dimension {
                    what: "squash bounds",
                    expected: out,
                    got: bounds.len(),
                });
            }
            for &(lo, hi) in bounds {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::invalid(
                        "output_squash",
                        format!("need finite lower < upper, got ({lo}, {hi})"),
                    ));
                }
            }
        }
        Ok(NetTopology {
            layer_sizes,
            activations,
            output_squash,
        })
    }

    /// Hidden layers share `hidden_act`; the output layer is affine.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, hidden_act: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(Activation::Identity);
        NetTopology::new(sizes, acts, None)
    }

    pub fn with_squash(self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        NetTopology::new(self.layer_sizes, self.activations, Some(bounds))
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn output_squash(&self) -> Option<&[(f64, f64)]> {
        self.output_squash.as_deref()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weights + l.out).sum::<usize>()
    }

    /// Parameter layout: for each layer, the `out x inp` weight matrix
    /// (row-major) followed by the `out` biases.
    pub fn layers(&self) -> impl Iterator<Item = LayerSpan> + '_ {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .zip(&self.activations)
            .map(move |(w, &activation)| {
                let span = LayerSpan {
                    offset,
                    inp: w[0],
                    out: w[1],
                    weights: w[0] * w[1],
                    activation,
                };
                offset += span.weights + span.out;
                span
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerSpan {
    pub offset: usize,
    pub inp: usize,
    pub out: usize,
    pub weights: usize,
    pub activation: Activation,
}

impl LayerSpan {
    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.weights
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        self.offset + self.weights..self.offset + self.weights + self.out
    }
}

/// Flat network parameters together with the topology that gives them
/// meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    topology: NetTopology,
}

impl ParamVector {
    pub fn new(topology: NetTopology, values: Vec<f64>) -> Result<Self> {
        if values.len() != topology.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: topology.param_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "parameters",
                format!("entry {i} is not finite"),
            ));
        }
        Ok(ParamVector { values, topology })
    }

    pub fn zeros(topology: NetTopology) -> Self {
        let n = topology.param_count();
        ParamVector {
            values: vec![0.0; n],
            topology,
        }
    }

    /// Fan-in scaled uniform weights, zero biases. ReLU layers use
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, other layers `sqrt(3/fan_in)`.
    pub fn init(topology: NetTopology, rng: &mut SimRng) -> Self {
        let mut values = vec![0.0; topology.param_count()];
        for layer in topology.layers() {
            let gain = match layer.activation {
                Activation::Relu => 6.0,
                _ => 3.0,
            };
            let bound = libm::sqrt(gain / layer.inp as f64);
            for w in &mut values[layer.weight_range()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        ParamVector { values, topology }
    }

    pub fn topology(&self) -> &NetTopology {
        &self.topology
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same topology, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(self.topology.clone(), values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Batched evaluation, one input per row.
    pub fn forward_batch(&self, input: &Mat) -> Result<Mat> {
        if input.cols() != self.topology.input_dim() {
            return Err(Error::Dimension {
                what: "network input",
                expected: self.topology.input_dim(),
                got: input.cols(),
            });
        }
        let mut x: Option<Mat> = None;
        for layer in self.topology.layers() {
            let src = x.as_ref().unwrap_or(input);
            let mut y = dense_forward(
                src,
                &self.values[layer.weight_range()],
                &self.values[layer.bias_range()],
                layer.out,
            );
            if layer.activation != Activation::Identity {
                for v in y.as_mut_slice() {
                    *v = layer.activation.eval(*v).0;
                }
            }
            x = Some(y);
        }
        let mut y = x.expect("topology has at least one layer");
        if let Some(bounds) = self.topology.output_squash() {
            let cols = y.cols();
            for (i, v) in y.as_mut_slice().iter_mut().enumerate() {
                let (lo, hi) = bounds[i % cols];
                *v = squash(*v, lo, hi).0;
            }
        }
        Ok(y)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&Mat::row_vector(input))?.into_vec())
    }
}

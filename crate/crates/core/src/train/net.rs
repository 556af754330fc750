//! Layered differentiable networks with designated random-input ports.
//!
//! A [`CfnnNet`] is an ordered stack of dense, activation, dropout and
//! random-concatenation layers over a data input `x`. All randomness enters
//! through an explicit [`RandomDraws`] bundle (the uniform vector feeding
//! `ConcatRandom` layers plus one mask per dropout layer), so the forward
//! pass is a pure function of `(parameters, x, draws)`.

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::train::graph::{Graph, NodeId, ParamStore};

/// Layer description used when building a net.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LayerSpec {
    Dense { out: usize },
    Tanh,
    Relu,
    Dropout { rate: f64 },
    /// Concatenate `m` uniform [0,1) random inputs onto the activation.
    ConcatRandom { m: usize },
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        w_slot: usize,
        b_slot: usize,
        inp: usize,
        out: usize,
    },
    Tanh,
    Relu,
    Dropout {
        rate: f64,
        width: usize,
        mask_index: usize,
    },
    ConcatRandom {
        m: usize,
        z_offset: usize,
    },
}

/// A built network.
#[derive(Debug, Clone)]
pub struct CfnnNet {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
    pub params: ParamStore,
    z_dim: usize,
    mask_widths: Vec<usize>,
}

/// Builder for [`CfnnNet`]; validates shapes and allocates parameters.
pub struct NetBuilder {
    input_dim: usize,
    specs: Vec<LayerSpec>,
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetBuilder {
            input_dim,
            specs: Vec::new(),
        }
    }

    pub fn dense(mut self, out: usize) -> Self {
        self.specs.push(LayerSpec::Dense { out });
        self
    }

    pub fn tanh(mut self) -> Self {
        self.specs.push(LayerSpec::Tanh);
        self
    }

    pub fn relu(mut self) -> Self {
        self.specs.push(LayerSpec::Relu);
        self
    }

    pub fn dropout(mut self, rate: f64) -> Self {
        self.specs.push(LayerSpec::Dropout { rate });
        self
    }

    pub fn concat_random(mut self, m: usize) -> Self {
        self.specs.push(LayerSpec::ConcatRandom { m });
        self
    }

    /// Build the net, initializing dense weights uniformly in
    /// `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))` and biases at zero.
    pub fn build(self, rng: &mut RngStream) -> Result<CfnnNet> {
        if self.input_dim == 0 {
            return Err(Error::InvalidDimension("input dimension must be >= 1".into()));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(self.specs.len());
        let mut width = self.input_dim;
        let mut z_dim = 0;
        let mut mask_widths = Vec::new();

        for spec in self.specs {
            match spec {
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(Error::InvalidDimension("dense width must be >= 1".into()));
                    }
                    let w_slot = params.alloc(out * width);
                    let b_slot = params.alloc(out);
                    let scale = (6.0 / (width + out) as f64).sqrt();
                    for v in &mut params.tensor_mut(w_slot).data {
                        *v = scale * (2.0 * rng.next_f64() - 1.0);
                    }
                    layers.push(Layer::Dense {
                        w_slot,
                        b_slot,
                        inp: width,
                        out,
                    });
                    width = out;
                }
                LayerSpec::Tanh => layers.push(Layer::Tanh),
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::domain(format!(
                            "dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    layers.push(Layer::Dropout {
                        rate,
                        width,
                        mask_index: mask_widths.len(),
                    });
                    mask_widths.push(width);
                }
                LayerSpec::ConcatRandom { m } => {
                    if m == 0 {
                        return Err(Error::InvalidDimension(
                            "random port width must be >= 1".into(),
                        ));
                    }
                    layers.push(Layer::ConcatRandom { m, z_offset: z_dim });
                    z_dim += m;
                    width += m;
                }
            }
        }

        Ok(CfnnNet {
            input_dim: self.input_dim,
            output_dim: width,
            layers,
            params,
            z_dim,
            mask_widths,
        })
    }
}

/// One bundle of random-port values: the uniform vector `z` and one
/// multiplicative mask per dropout layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDraws {
    pub z: Vec<f64>,
    pub masks: Vec<Vec<f64>>,
}

impl RandomDraws {
    /// Sample all ports: `z ~ U[0,1)^m` and inverted-dropout masks with
    /// entries `Bernoulli(1-rate) / (1-rate)`.
    pub fn sample(net: &CfnnNet, rng: &mut RngStream) -> RandomDraws {
        let z = (0..net.z_dim).map(|_| rng.next_f64()).collect();
        let masks = net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dropout { rate, width, .. } => Some(
                    (0..*width)
                        .map(|_| {
                            if rng.next_f64() < 1.0 - rate {
                                1.0 / (1.0 - rate)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                ),
                _ => None,
            })
            .collect();
        RandomDraws { z, masks }
    }

    /// Every port at its expectation: `z = 0.5`, masks identity.
    pub fn mean(net: &CfnnNet) -> RandomDraws {
        RandomDraws {
            z: vec![0.5; net.z_dim],
            masks: net.mask_widths.iter().map(|&w| vec![1.0; w]).collect(),
        }
    }
}

impl CfnnNet {
    pub fn builder(input_dim: usize) -> NetBuilder {
        NetBuilder::new(input_dim)
    }

    /// Rebuild a net from its layer specs (parameters freshly initialized).
    pub fn from_specs(
        input_dim: usize,
        specs: &[LayerSpec],
        rng: &mut RngStream,
    ) -> Result<CfnnNet> {
        let mut b = NetBuilder::new(input_dim);
        b.specs = specs.to_vec();
        b.build(rng)
    }

    /// The layer specs this net was built from.
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense { out, .. } => LayerSpec::Dense { out: *out },
                Layer::Tanh => LayerSpec::Tanh,
                Layer::Relu => LayerSpec::Relu,
                Layer::Dropout { rate, .. } => LayerSpec::Dropout { rate: *rate },
                Layer::ConcatRandom { m, .. } => LayerSpec::ConcatRandom { m: *m },
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn dropout_layer_count(&self) -> usize {
        self.mask_widths.len()
    }

    /// Widths of the dense layers, input to output.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { out, .. } => Some(*out),
                _ => None,
            })
            .collect()
    }

    fn check_draws(&self, draws: &RandomDraws) -> Result<()> {
        if draws.z.len() != self.z_dim {
            return Err(Error::shape(format!(
                "random vector length {} != declared {}",
                draws.z.len(),
                self.z_dim
            )));
        }
        if draws.masks.len() != self.mask_widths.len() {
            return Err(Error::shape(format!(
                "{} masks supplied, net has {} dropout layers",
                draws.masks.len(),
                self.mask_widths.len()
            )));
        }
        for (mask, &w) in draws.masks.iter().zip(&self.mask_widths) {
            if mask.len() != w {
                return Err(Error::shape(format!(
                    "mask length {} != layer width {w}",
                    mask.len()
                )));
            }
        }
        Ok(())
    }

    /// Append the forward computation for `x` under `draws` to a graph and
    /// return the logits node.
    pub fn logits_node(&self, g: &mut Graph, x: &[f64], draws: &RandomDraws) -> Result<NodeId> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "input length {} != input dimension {}",
                x.len(),
                self.input_dim
            )));
        }
        self.check_draws(draws)?;
        let mut cur = g.input(x);
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense {
                    w_slot,
                    b_slot,
                    inp,
                    out,
                } => {
                    let w = g.param(&self.params, *w_slot);
                    let b = g.param(&self.params, *b_slot);
                    let wx = g.matvec(w, cur, *out, *inp)?;
                    g.add(wx, b)?
                }
                Layer::Tanh => g.tanh(cur),
                Layer::Relu => g.relu(cur),
                Layer::Dropout { mask_index, .. } => {
                    let mask = g.input(&draws.masks[*mask_index]);
                    g.mul(cur, mask)?
                }
                Layer::ConcatRandom { m, z_offset } => {
                    let z = g.input(&draws.z[*z_offset..*z_offset + m]);
                    g.concat(&[cur, z])?
                }
            };
        }
        Ok(cur)
    }

    /// Stacked forward: one row per draw bundle, all sharing the data input.
    /// Produces a `draws.len() x output_dim` logits node with the same values
    /// as `draws.len()` separate [`CfnnNet::logits_node`] calls.
    pub fn stacked_logits_node(
        &self,
        g: &mut Graph,
        x: &[f64],
        draws: &[RandomDraws],
    ) -> Result<NodeId> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "input length {} != input dimension {}",
                x.len(),
                self.input_dim
            )));
        }
        let k = draws.len();
        if k == 0 {
            return Err(Error::shape("stacked forward needs at least one draw"));
        }
        for d in draws {
            self.check_draws(d)?;
        }
        let mut stack = Vec::with_capacity(k * x.len());
        for _ in 0..k {
            stack.extend_from_slice(x);
        }
        let input = g.input(&stack);
        self.stacked_from(g, input, k, Some(draws))
    }

    /// Stacked forward from a pre-built `k x width` input node. `draws`
    /// may be `None` only for nets without random ports.
    pub(crate) fn stacked_from(
        &self,
        g: &mut Graph,
        input: NodeId,
        k: usize,
        draws: Option<&[RandomDraws]>,
    ) -> Result<NodeId> {
        let mut cur = input;
        let mut width = self.input_dim;
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense {
                    w_slot,
                    b_slot,
                    inp,
                    out,
                } => {
                    let w = g.param(&self.params, *w_slot);
                    let b = g.param(&self.params, *b_slot);
                    let wx = g.matmat_t(w, cur, k, *out, *inp)?;
                    width = *out;
                    g.add_broadcast(wx, b, k, *out)?
                }
                Layer::Tanh => g.tanh(cur),
                Layer::Relu => g.relu(cur),
                Layer::Dropout { mask_index, .. } => {
                    let draws = draws.ok_or_else(|| {
                        Error::shape("net with dropout needs explicit draws")
                    })?;
                    let mut mask = Vec::with_capacity(k * width);
                    for d in draws {
                        mask.extend_from_slice(&d.masks[*mask_index]);
                    }
                    let mask_node = g.input(&mask);
                    g.mul(cur, mask_node)?
                }
                Layer::ConcatRandom { m, z_offset } => {
                    let draws = draws.ok_or_else(|| {
                        Error::shape("net with random ports needs explicit draws")
                    })?;
                    let mut zs = Vec::with_capacity(k * m);
                    for d in draws {
                        zs.extend_from_slice(&d.z[*z_offset..*z_offset + m]);
                    }
                    let z_node = g.input(&zs);
                    let joined = g.concat_cols(cur, z_node, k, width, *m)?;
                    width += m;
                    joined
                }
            };
        }
        Ok(cur)
    }

    /// Plain forward pass: logits for `x` under explicit draws.
    pub fn forward(&self, x: &[f64], draws: &RandomDraws) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.logits_node(&mut g, x, draws)?;
        Ok(g.value(out).to_vec())
    }

    /// Forward with freshly sampled dropout masks and random inputs.
    pub fn dropout_forward(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let draws = RandomDraws::sample(self, rng);
        self.forward(x, &draws)
    }

    /// Deterministic forward with every random port at its expectation.
    pub fn mean_mask_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, &RandomDraws::mean(self))
    }

    /// Zero every parameter (weights and biases).
    pub fn zero_params(&mut self) {
        for slot in 0..self.params.slot_count() {
            for v in &mut self.params.tensor_mut(slot).data {
                *v = 0.0;
            }
        }
    }
}

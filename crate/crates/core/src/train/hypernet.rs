//! Hypernetwork classifier: a generator turns random draws and a class draw
//! into the parameters of a linear head.
//!
//! Per sample: draw `z1`, `z2` uniform and a class `y_bar`; feed
//! `concat(z1, z2, onehot(y_bar))` through the generator MLP, split its
//! output into a weight matrix `w` (C x E) and bias `b` (C), and score the
//! embedded input as `w . e(x) - b`. At this crate's scale the embedding
//! `e(x)` is the identity. Gradients flow into the generator through the
//! generated parameters.

use crate::error::{Error, Result};
use crate::numerics::{std_normal_quantile, RngStream};
use crate::train::graph::{Graph, NodeId};
use crate::train::net::{CfnnNet, RandomDraws};

/// How the class conditioning draw is distributed.
#[derive(Debug, Clone, PartialEq)]
pub enum YbarDist {
    /// Uniform over classes.
    Uniform,
    /// Explicit class frequencies (must sum to ~1).
    Frequencies(Vec<f64>),
}

/// A generator network plus the shape of the linear head it parameterizes.
#[derive(Debug, Clone)]
pub struct HypernetSpec {
    class_count: usize,
    embed_dim: usize,
    z1_dim: usize,
    z2_dim: usize,
    hidden: Vec<usize>,
    /// Generated parameters are `theta_scale * tanh(generator output)` when
    /// bounded, raw generator output otherwise. Bounding keeps the sampled
    /// heads inside the band where the histogram softmax still passes
    /// gradient.
    bounded: bool,
    theta_scale: f64,
    /// Map the uniform ports through the standard normal quantile before the
    /// first generator layer. An isotropic input distribution lets the
    /// sampled head directions cover all angles from initialization; the
    /// ports themselves stay uniform in [0, 1).
    gaussian_ports: bool,
    /// Residual-style linear skip from the generator input to the raw
    /// parameters; the slot lives in the generator's parameter store.
    skip_slot: Option<usize>,
    pub generator: CfnnNet,
    pub ybar_dist: YbarDist,
}

impl HypernetSpec {
    /// Toy configuration: generator MLP
    /// `dense(m + C -> 32) tanh -> dense(32 -> 32) tanh -> dense(32 -> C*E + C)`
    /// with one uniform per random port (`m = 2`), Gaussianized port
    /// features, a linear input-to-parameters skip, and the output bounded
    /// through tanh at scale 4.
    pub fn toy(embed_dim: usize, class_count: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(
            Self::build(embed_dim, class_count, 1, 1, &[32, 32], Some(4.0), true, rng)?
                .with_gaussian_ports(),
        )
    }

    /// Raw (unbounded) generator output, no skip.
    pub fn new(
        embed_dim: usize,
        class_count: usize,
        z1_dim: usize,
        z2_dim: usize,
        hidden: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::build(
            embed_dim,
            class_count,
            z1_dim,
            z2_dim,
            hidden,
            None,
            false,
            rng,
        )
    }

    /// Generator output squashed through tanh and scaled by `theta_scale`.
    pub fn new_bounded(
        embed_dim: usize,
        class_count: usize,
        z1_dim: usize,
        z2_dim: usize,
        hidden: &[usize],
        theta_scale: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::build(
            embed_dim,
            class_count,
            z1_dim,
            z2_dim,
            hidden,
            Some(theta_scale),
            false,
            rng,
        )
    }

    /// Fully explicit constructor (used by checkpoint restore).
    #[allow(clippy::too_many_arguments)]
    pub fn with_options(
        embed_dim: usize,
        class_count: usize,
        z1_dim: usize,
        z2_dim: usize,
        hidden: &[usize],
        bound: Option<f64>,
        skip: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::build(embed_dim, class_count, z1_dim, z2_dim, hidden, bound, skip, rng)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        embed_dim: usize,
        class_count: usize,
        z1_dim: usize,
        z2_dim: usize,
        hidden: &[usize],
        bound: Option<f64>,
        skip: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::domain("hypernet needs at least 2 classes"));
        }
        if embed_dim == 0 {
            return Err(Error::InvalidDimension("embed dimension must be >= 1".into()));
        }
        let m = z1_dim + z2_dim;
        if m == 0 {
            return Err(Error::InvalidDimension(
                "hypernet needs at least one random input".into(),
            ));
        }
        if let Some(scale) = bound {
            if scale <= 0.0 {
                return Err(Error::domain(format!(
                    "theta scale {scale} must be positive"
                )));
            }
        }
        let gen_in = m + class_count;
        let head_params = class_count * embed_dim + class_count;
        let mut b = CfnnNet::builder(gen_in);
        for &h in hidden {
            b = b.dense(h).tanh();
        }
        let mut generator = b.dense(head_params).build(rng)?;
        let skip_slot = if skip {
            let slot = generator.params.alloc(head_params * gen_in);
            let scale = (6.0 / (gen_in + head_params) as f64).sqrt();
            for v in &mut generator.params.tensor_mut(slot).data {
                *v = scale * (2.0 * rng.next_f64() - 1.0);
            }
            Some(slot)
        } else {
            None
        };
        Ok(HypernetSpec {
            class_count,
            embed_dim,
            z1_dim,
            z2_dim,
            hidden: hidden.to_vec(),
            bounded: bound.is_some(),
            theta_scale: bound.unwrap_or(1.0),
            gaussian_ports: false,
            skip_slot,
            generator,
            ybar_dist: YbarDist::Uniform,
        })
    }

    pub fn has_skip(&self) -> bool {
        self.skip_slot.is_some()
    }

    /// Enable the quantile transform on the random ports.
    pub fn with_gaussian_ports(mut self) -> Self {
        self.gaussian_ports = true;
        self
    }

    pub fn bounded(&self) -> bool {
        self.bounded
    }

    pub fn theta_scale(&self) -> f64 {
        self.theta_scale
    }

    pub fn gaussian_ports(&self) -> bool {
        self.gaussian_ports
    }

    fn port_features(&self, z: &[f64], out: &mut Vec<f64>) {
        if self.gaussian_ports {
            out.extend(z.iter().map(|&v| {
                let clamped = v.clamp(1e-9, 1.0 - 1e-9);
                std_normal_quantile(clamped).expect("clamped into (0, 1)")
            }));
        } else {
            out.extend_from_slice(z);
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn z1_dim(&self) -> usize {
        self.z1_dim
    }

    pub fn z2_dim(&self) -> usize {
        self.z2_dim
    }

    /// Draw `(z1, z2, y_bar)` for one forward sample.
    pub fn draw_ports(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>, usize) {
        let z1 = (0..self.z1_dim).map(|_| rng.next_f64()).collect();
        let z2 = (0..self.z2_dim).map(|_| rng.next_f64()).collect();
        let y_bar = match &self.ybar_dist {
            YbarDist::Uniform => (rng.next_u64() % self.class_count as u64) as usize,
            YbarDist::Frequencies(freqs) => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                let mut chosen = self.class_count - 1;
                for (i, f) in freqs.iter().enumerate() {
                    acc += f;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            }
        };
        (z1, z2, y_bar)
    }

    /// The generated head parameters `[w (C*E), b (C)]` for explicit ports.
    pub fn generate_theta(&self, z1: &[f64], z2: &[f64], y_bar: usize) -> Result<Vec<f64>> {
        if z1.len() != self.z1_dim || z2.len() != self.z2_dim {
            return Err(Error::shape(format!(
                "random inputs ({}, {}) != declared ({}, {})",
                z1.len(),
                z2.len(),
                self.z1_dim,
                self.z2_dim
            )));
        }
        if y_bar >= self.class_count {
            return Err(Error::domain(format!(
                "class draw {y_bar} out of range for {} classes",
                self.class_count
            )));
        }
        let mut gen_input = Vec::with_capacity(z1.len() + z2.len() + self.class_count);
        self.port_features(z1, &mut gen_input);
        self.port_features(z2, &mut gen_input);
        let mut onehot = vec![0.0; self.class_count];
        onehot[y_bar] = 1.0;
        gen_input.extend_from_slice(&onehot);
        let mut theta = self.generator.forward(
            &gen_input,
            &RandomDraws {
                z: vec![],
                masks: vec![],
            },
        )?;
        if let Some(slot) = self.skip_slot {
            let w = &self.generator.params.tensor(slot).data;
            let cols = gen_input.len();
            for (r, t) in theta.iter_mut().enumerate() {
                let row = &w[r * cols..(r + 1) * cols];
                *t += row.iter().zip(&gen_input).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        if self.bounded {
            for v in &mut theta {
                *v = v.tanh();
            }
        }
        if self.theta_scale != 1.0 {
            for v in &mut theta {
                *v *= self.theta_scale;
            }
        }
        Ok(theta)
    }

    /// Append the forward computation to a graph: generated head applied to
    /// the identity embedding of `x`.
    pub fn logits_node(
        &self,
        g: &mut Graph,
        x: &[f64],
        z1: &[f64],
        z2: &[f64],
        y_bar: usize,
    ) -> Result<NodeId> {
        if x.len() != self.embed_dim {
            return Err(Error::shape(format!(
                "input length {} != embed dimension {}",
                x.len(),
                self.embed_dim
            )));
        }
        if z1.len() != self.z1_dim || z2.len() != self.z2_dim {
            return Err(Error::shape(format!(
                "random inputs ({}, {}) != declared ({}, {})",
                z1.len(),
                z2.len(),
                self.z1_dim,
                self.z2_dim
            )));
        }
        if y_bar >= self.class_count {
            return Err(Error::domain(format!(
                "class draw {y_bar} out of range for {} classes",
                self.class_count
            )));
        }
        let c = self.class_count;
        let e = self.embed_dim;

        let mut gen_input = Vec::with_capacity(z1.len() + z2.len() + c);
        self.port_features(z1, &mut gen_input);
        self.port_features(z2, &mut gen_input);
        let mut onehot = vec![0.0; c];
        onehot[y_bar] = 1.0;
        gen_input.extend_from_slice(&onehot);

        let no_draws = RandomDraws {
            z: vec![],
            masks: vec![],
        };
        let mut theta = self.generator.logits_node(g, &gen_input, &no_draws)?;
        if let Some(slot) = self.skip_slot {
            let w = g.param(&self.generator.params, slot);
            let input_node = g.input(&gen_input);
            let head_params = c * e + c;
            let skip = g.matvec(w, input_node, head_params, gen_input.len())?;
            theta = g.add(theta, skip)?;
        }
        if self.bounded {
            theta = g.tanh(theta);
        }
        if self.theta_scale != 1.0 {
            theta = g.scale(theta, self.theta_scale);
        }
        let w = g.slice(theta, 0, c * e)?;
        let b = g.slice(theta, c * e, c)?;
        let ex = g.input(x);
        let we = g.matvec(w, ex, c, e)?;
        g.sub(we, b)
    }
}

impl HypernetSpec {
    /// Stacked forward: one generated head per port triple, all applied to
    /// the same embedded input. Produces a `ports.len() x class_count`
    /// logits node.
    pub fn stacked_logits_node(
        &self,
        g: &mut Graph,
        x: &[f64],
        ports: &[(Vec<f64>, Vec<f64>, usize)],
    ) -> Result<NodeId> {
        if x.len() != self.embed_dim {
            return Err(Error::shape(format!(
                "input length {} != embed dimension {}",
                x.len(),
                self.embed_dim
            )));
        }
        let k = ports.len();
        if k == 0 {
            return Err(Error::shape("stacked forward needs at least one draw"));
        }
        let c = self.class_count;
        let row = self.z1_dim + self.z2_dim + c;
        let mut stack = Vec::with_capacity(k * row);
        for (z1, z2, y_bar) in ports {
            if z1.len() != self.z1_dim || z2.len() != self.z2_dim || *y_bar >= c {
                return Err(Error::shape("bad port triple in stacked forward"));
            }
            self.port_features(z1, &mut stack);
            self.port_features(z2, &mut stack);
            let base = stack.len();
            stack.resize(base + c, 0.0);
            stack[base + y_bar] = 1.0;
        }
        let input = g.input(&stack);
        let mut theta = self.generator.stacked_from(g, input, k, None)?;
        if let Some(slot) = self.skip_slot {
            let w = g.param(&self.generator.params, slot);
            let head_params = c * self.embed_dim + c;
            let skip = g.matmat_t(w, input, k, head_params, row)?;
            theta = g.add(theta, skip)?;
        }
        if self.bounded {
            theta = g.tanh(theta);
        }
        if self.theta_scale != 1.0 {
            theta = g.scale(theta, self.theta_scale);
        }
        let e = g.input(x);
        g.head_apply(theta, e, k, c, self.embed_dim)
    }
}

/// Logits of one hypernetwork sample for explicit port values.
pub fn hypernet_forward(
    spec: &HypernetSpec,
    x: &[f64],
    z1: &[f64],
    z2: &[f64],
    y_bar: usize,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let out = spec.logits_node(&mut g, x, z1, z2, y_bar)?;
    Ok(g.value(out).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;

    #[test]
    fn degenerate_generator_ignores_z() {
        let mut rng = make_rng(1);
        let mut spec = HypernetSpec::toy(2, 2, &mut rng).unwrap();
        // zero generator weights, fixed head bias via the last dense bias
        for slot in 0..spec.generator.params.slot_count() {
            for v in &mut spec.generator.params.tensor_mut(slot).data {
                *v = 0.0;
            }
        }
        // raw theta = [w(4) = 0, b(2) = (0.3, -0.2)] for every input; the
        // skip weights occupy the final slot, the head bias sits before it
        let last_bias = spec.generator.params.slot_count() - 1 - usize::from(spec.has_skip());
        let bias = &mut spec.generator.params.tensor_mut(last_bias).data;
        bias[4] = 0.3;
        bias[5] = -0.2;

        let x = [0.5, -0.5];
        let a = hypernet_forward(&spec, &x, &[0.1], &[0.2], 0).unwrap();
        let b = hypernet_forward(&spec, &x, &[0.9], &[0.7], 1).unwrap();
        assert_eq!(a, b);
        // logits = -theta_scale * tanh(bias)
        let s = spec.theta_scale();
        assert!((a[0] + s * 0.3f64.tanh()).abs() < 1e-12);
        assert!((a[1] - s * 0.2f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn bounded_theta_stays_in_range() {
        let mut rng = make_rng(9);
        let spec = HypernetSpec::new_bounded(2, 2, 4, 4, &[16], 3.0, &mut rng).unwrap();
        for i in 0..50 {
            let mut s = make_rng(300 + i);
            let (z1, z2, y) = spec.draw_ports(&mut s);
            let theta = spec.generate_theta(&z1, &z2, y).unwrap();
            assert!(theta.iter().all(|v| v.abs() <= 3.0));
        }
    }

    #[test]
    fn forward_deterministic_in_ports() {
        let mut rng = make_rng(2);
        let spec = HypernetSpec::toy(2, 2, &mut rng).unwrap();
        let x = [0.3, 0.9];
        let z1 = [0.1];
        let z2 = [0.5];
        let a = hypernet_forward(&spec, &x, &z1, &z2, 1).unwrap();
        let b = hypernet_forward(&spec, &x, &z1, &z2, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn varying_z_varies_generated_heads() {
        let mut rng = make_rng(3);
        let spec = HypernetSpec::toy(2, 2, &mut rng).unwrap();
        let x = [1.0, 0.0];
        let mut outputs = Vec::new();
        for i in 0..10 {
            let mut s = make_rng(100 + i);
            let (z1, z2, y) = spec.draw_ports(&mut s);
            outputs.push(hypernet_forward(&spec, &x, &z1, &z2, y).unwrap());
        }
        let first = &outputs[0];
        assert!(outputs.iter().any(|o| o != first));
    }

    #[test]
    fn shape_errors() {
        let mut rng = make_rng(4);
        let spec = HypernetSpec::toy(2, 2, &mut rng).unwrap();
        assert!(hypernet_forward(&spec, &[1.0], &[0.0], &[0.0], 0).is_err());
        assert!(hypernet_forward(&spec, &[1.0, 2.0], &[0.0; 3], &[0.0], 0).is_err());
        assert!(hypernet_forward(&spec, &[1.0, 2.0], &[0.0], &[0.0], 5).is_err());
    }

    #[test]
    fn ybar_frequencies_respected() {
        let mut rng = make_rng(5);
        let mut spec = HypernetSpec::toy(2, 2, &mut rng).unwrap();
        spec.ybar_dist = YbarDist::Frequencies(vec![0.9, 0.1]);
        let mut zeros = 0;
        let n = 10_000;
        for _ in 0..n {
            let (_, _, y) = spec.draw_ports(&mut rng);
            if y == 0 {
                zeros += 1;
            }
        }
        let frac = zeros as f64 / n as f64;
        assert!((frac - 0.9).abs() < 0.012, "frac={frac}");
    }
}

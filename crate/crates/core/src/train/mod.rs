//! Trainable coin-flipping networks at toy scale.
//!
//! Training optimizes random accuracy directly: each loss evaluation samples
//! the network's random ports `n_train` times, turns every logit vector into
//! an approximate one-hot with a temperature softmax, averages them into an
//! approximate histogram `p_tilde`, and applies cross-entropy. Gradients flow
//! through every summand, so plain SGD applies.

pub mod dcrc;
pub mod graph;
pub mod hypernet;
pub mod net;

use crate::amplify::{argmax_tie_low, empirical_random_accuracy, StochasticClassifier};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub use dcrc::{dc_rc, dc_rc_with, EdgeKind, NetEdge, NetGraph, NetNode, WeightEdges};
pub use graph::{Graph, NodeId, ParamStore};
pub use hypernet::{hypernet_forward, HypernetSpec, YbarDist};
pub use net::{CfnnNet, LayerSpec, NetBuilder, RandomDraws};

/// Log floor for cross-entropy; finite-sample histograms can zero a class.
pub const EPS_FLOOR: f64 = 1e-12;

/// Temperature softmax `softmax(logits / tau)`: strictly positive, sums to 1.
pub fn gumbel_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 {
        return Err(Error::domain(format!("temperature {tau} must be positive")));
    }
    if logits.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Cross-entropy `-ln(p[y])`. A zero (or sub-floor) entry is clamped to
/// `-ln(EPS_FLOOR)` and flagged in the second return slot.
pub fn cross_entropy(p_tilde: &[f64], y: usize) -> Result<(f64, bool)> {
    if y >= p_tilde.len() {
        return Err(Error::domain(format!(
            "label {y} out of range for {} classes",
            p_tilde.len()
        )));
    }
    let v = p_tilde[y];
    if v < EPS_FLOOR {
        Ok((-EPS_FLOOR.ln(), true))
    } else {
        Ok((-v.ln(), false))
    }
}

/// A trainable stochastic classifier: either a layered net with random
/// ports or a hypernetwork.
#[derive(Debug, Clone)]
pub enum CfnnModel {
    Net(CfnnNet),
    Hypernet(HypernetSpec),
}

impl CfnnModel {
    pub fn class_count(&self) -> usize {
        match self {
            CfnnModel::Net(n) => n.output_dim(),
            CfnnModel::Hypernet(h) => h.class_count(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            CfnnModel::Net(n) => &n.params,
            CfnnModel::Hypernet(h) => &h.generator.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            CfnnModel::Net(n) => &mut n.params,
            CfnnModel::Hypernet(h) => &mut h.generator.params,
        }
    }

    /// Append one stochastic forward to the graph, drawing all random ports
    /// from `rng`.
    pub fn stochastic_logits_node(
        &self,
        g: &mut Graph,
        x: &[f64],
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        match self {
            CfnnModel::Net(n) => {
                let draws = RandomDraws::sample(n, rng);
                n.logits_node(g, x, &draws)
            }
            CfnnModel::Hypernet(h) => {
                let (z1, z2, y_bar) = h.draw_ports(rng);
                h.logits_node(g, x, &z1, &z2, y_bar)
            }
        }
    }

    /// One stochastic forward pass.
    pub fn sample_logits(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.stochastic_logits_node(&mut g, x, rng)?;
        Ok(g.value(out).to_vec())
    }

    /// Directed description of the architecture for complexity counting.
    pub fn describe_graph(&self) -> NetGraph {
        match self {
            CfnnModel::Net(n) => describe_net(n),
            CfnnModel::Hypernet(h) => describe_hypernet(h),
        }
    }
}

fn describe_net(net: &CfnnNet) -> NetGraph {
    let widths = net.dense_widths();
    let neurons: usize = widths.iter().sum();
    let randoms = net.dropout_layer_count() + usize::from(net.z_dim() > 0);
    let mut g = NetGraph::new(1, randoms, neurons);

    let mut sources: Vec<NetNode> = vec![NetNode::Data(0)];
    let mut next_neuron = 0;
    let mut next_random = 0;
    for spec in net.specs() {
        match spec {
            LayerSpec::Dense { out } => {
                let start = next_neuron;
                next_neuron += out;
                for unit in start..next_neuron {
                    for &s in &sources {
                        g.edge(s, NetNode::Neuron(unit));
                    }
                }
                sources = (start..next_neuron).map(NetNode::Neuron).collect();
            }
            LayerSpec::Tanh | LayerSpec::Relu => {}
            LayerSpec::Dropout { .. } => {
                sources.push(NetNode::Random(next_random));
                next_random += 1;
            }
            LayerSpec::ConcatRandom { .. } => {
                // all ConcatRandom ports share the z vector node
                let node = NetNode::Random(net.dropout_layer_count());
                if !sources.contains(&node) {
                    sources.push(node);
                }
            }
        }
    }
    for &s in &sources {
        g.edge(s, NetNode::Output);
    }
    g
}

fn describe_hypernet(h: &HypernetSpec) -> NetGraph {
    let gen_widths = h.generator.dense_widths();
    let gen_neurons: usize = gen_widths.iter().sum();
    let head_neurons = h.class_count();
    // random inputs: z1, z2, y_bar draw
    let mut g = NetGraph::new(1, 3, gen_neurons + head_neurons);

    let mut sources: Vec<NetNode> = vec![NetNode::Random(0), NetNode::Random(1), NetNode::Random(2)];
    let mut next = 0;
    for w in &gen_widths {
        let start = next;
        next += w;
        for unit in start..next {
            for &s in &sources {
                g.edge(s, NetNode::Neuron(unit));
            }
        }
        sources = (start..next).map(NetNode::Neuron).collect();
    }
    for head in gen_neurons..gen_neurons + head_neurons {
        for &s in &sources {
            g.param_edge(s, NetNode::Neuron(head));
        }
        g.edge(NetNode::Data(0), NetNode::Neuron(head));
        g.edge(NetNode::Neuron(head), NetNode::Output);
    }
    g
}

/// Approximate histogram node: mean of `n` temperature softmaxes over fresh
/// random-port draws. Gradient flows through every summand. The draws run
/// as one stacked computation; values and gradients match the per-draw
/// construction exactly.
pub fn ptilde_node(
    model: &CfnnModel,
    g: &mut Graph,
    x: &[f64],
    n: u64,
    tau: f64,
    rng: &RngStream,
) -> Result<NodeId> {
    if n == 0 {
        return Err(Error::domain("histogram needs n >= 1 samples"));
    }
    if tau <= 0.0 {
        return Err(Error::domain(format!("temperature {tau} must be positive")));
    }
    let k = n as usize;
    let c = model.class_count();
    let logits = match model {
        CfnnModel::Net(net) => {
            let draws: Vec<RandomDraws> = (0..n)
                .map(|j| RandomDraws::sample(net, &mut rng.split(j)))
                .collect();
            net.stacked_logits_node(g, x, &draws)?
        }
        CfnnModel::Hypernet(h) => {
            let ports: Vec<(Vec<f64>, Vec<f64>, usize)> =
                (0..n).map(|j| h.draw_ports(&mut rng.split(j))).collect();
            h.stacked_logits_node(g, x, &ports)?
        }
    };
    let scaled = g.scale(logits, 1.0 / tau);
    let sm = g.softmax_rows(scaled, k, c)?;
    g.mean_rows(sm, k, c)
}

/// Per-draw construction of the same histogram node; the stacked path in
/// [`ptilde_node`] reproduces it exactly.
pub fn ptilde_node_per_draw(
    model: &CfnnModel,
    g: &mut Graph,
    x: &[f64],
    n: u64,
    tau: f64,
    rng: &RngStream,
) -> Result<NodeId> {
    if n == 0 {
        return Err(Error::domain("histogram needs n >= 1 samples"));
    }
    if tau <= 0.0 {
        return Err(Error::domain(format!("temperature {tau} must be positive")));
    }
    let mut parts = Vec::with_capacity(n as usize);
    for j in 0..n {
        let mut sj = rng.split(j);
        let logits = model.stochastic_logits_node(g, x, &mut sj)?;
        let scaled = g.scale(logits, 1.0 / tau);
        parts.push(g.softmax(scaled));
    }
    g.mean_of(&parts)
}

/// The approximate histogram `p_tilde(x)` as plain values.
pub fn estimate_ptilde(
    model: &CfnnModel,
    x: &[f64],
    n: u64,
    tau: f64,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let node = ptilde_node(model, &mut g, x, n, tau, rng)?;
    Ok(g.value(node).to_vec())
}

/// One sample's training loss, forward only.
pub fn cfnn_loss(
    model: &CfnnModel,
    x: &[f64],
    y: usize,
    n_train: u64,
    tau: f64,
    loss: LossKind,
    rng: &RngStream,
) -> Result<f64> {
    let mut g = Graph::new();
    let node = build_loss(model, &mut g, x, y, n_train, tau, loss, rng)?;
    Ok(g.value(node)[0])
}

/// One sample's training loss with gradients accumulated into the model's
/// parameter store.
pub fn cfnn_loss_grad(
    model: &mut CfnnModel,
    x: &[f64],
    y: usize,
    n_train: u64,
    tau: f64,
    loss: LossKind,
    rng: &RngStream,
) -> Result<f64> {
    let mut g = Graph::new();
    let node = build_loss(model, &mut g, x, y, n_train, tau, loss, rng)?;
    g.backward(node)?;
    let value = g.value(node)[0];
    g.accumulate_param_grads(model.params_mut());
    Ok(value)
}

fn build_loss(
    model: &CfnnModel,
    g: &mut Graph,
    x: &[f64],
    y: usize,
    n_train: u64,
    tau: f64,
    loss: LossKind,
    rng: &RngStream,
) -> Result<NodeId> {
    let p = ptilde_node(model, g, x, n_train, tau, rng)?;
    match loss {
        LossKind::CrossEntropy => g.neg_log_entry(p, y, EPS_FLOOR),
        LossKind::HingeMargin { margin } => g.hinge_margin(p, y, margin),
    }
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from `lr` to zero across the run.
    Cosine,
}

/// Loss applied to the approximate histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `-ln(p_tilde[y])`.
    CrossEntropy,
    /// `max(0, margin - (p_tilde[y] - max_other))`: optimizes the histogram
    /// margin directly and releases a point once its majority is safe.
    HingeMargin { margin: f64 },
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// SGD with heavy-ball momentum.
    SgdMomentum,
    /// Adam with the usual bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Random-port samples per loss evaluation.
    pub n_train: u64,
    /// Softmax temperature.
    pub tau: f64,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Samples per point for the per-epoch held-out random accuracy.
    pub eval_n: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_train: 25,
            tau: 0.5,
            lr: 0.1,
            lr_schedule: LrSchedule::Cosine,
            optimizer: Optimizer::SgdMomentum,
            loss: LossKind::HingeMargin { margin: 0.2 },
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 200,
            batch_size: 64,
            eval_n: 9,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::domain("n_train must be >= 1"));
        }
        if self.tau <= 0.0 {
            return Err(Error::domain("tau must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be >= 1"));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::domain("learning rate must be positive"));
        }
        if self.eval_n == 0 {
            return Err(Error::domain("eval_n must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Cross-entropy floor clamps seen during training.
    pub clamp_events: u64,
}

const SHUFFLE_STREAM: u64 = u64::MAX;
const VAL_STREAM: u64 = u64::MAX - 1;

/// SGD with momentum and weight decay on the histogram cross-entropy loss.
/// Per-epoch train loss and (when `val_data` is given) held-out random
/// accuracy are logged. Aborts with [`Error::Diverged`] on non-finite values.
pub fn train(
    model: &mut CfnnModel,
    train_data: &[(Vec<f64>, usize)],
    val_data: Option<&[(Vec<f64>, usize)]>,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    let c = model.class_count();
    for (x, y) in train_data {
        if *y >= c {
            return Err(Error::domain(format!("label {y} out of range")));
        }
        let _ = x;
    }

    let mut velocity: Vec<Vec<f64>> = (0..model.params().slot_count())
        .map(|s| vec![0.0; model.params().tensor(s).data.len()])
        .collect();
    // second-moment buffers, used by Adam only
    let mut second: Vec<Vec<f64>> = match cfg.optimizer {
        Optimizer::Adam { .. } => velocity.clone(),
        Optimizer::SgdMomentum => Vec::new(),
    };
    let mut step_count = 0u64;
    let mut report = TrainReport::default();
    let mut g = Graph::new();
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 0..cfg.epochs {
        let epoch_rng = rng.split(epoch as u64);
        shuffle(&mut order, &mut epoch_rng.split(SHUFFLE_STREAM));
        let lr = match cfg.lr_schedule {
            LrSchedule::Constant => cfg.lr,
            LrSchedule::Cosine => {
                let t = epoch as f64 / cfg.epochs.max(1) as f64;
                cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        };

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().zero_grads();
            for (k, &idx) in batch.iter().enumerate() {
                let (x, y) = &train_data[idx];
                let sample_rng = epoch_rng.split((seen + k) as u64);
                g.clear();
                let loss = build_loss(
                    model,
                    &mut g,
                    x,
                    *y,
                    cfg.n_train,
                    cfg.tau,
                    cfg.loss,
                    &sample_rng,
                )?;
                g.backward(loss)?;
                let value = g.value(loss)[0];
                if !value.is_finite() {
                    return Err(Error::Diverged(format!(
                        "loss became {value} at epoch {epoch}"
                    )));
                }
                loss_sum += value;
                g.accumulate_param_grads(model.params_mut());
                report.clamp_events += g.clamp_events;
            }
            seen += batch.len();

            let scale = 1.0 / batch.len() as f64;
            step_count += 1;
            let params = model.params_mut();
            for slot in 0..params.slot_count() {
                let t = params.tensor_mut(slot);
                let v = &mut velocity[slot];
                match cfg.optimizer {
                    Optimizer::SgdMomentum => {
                        for i in 0..t.data.len() {
                            let grad = t.grad[i] * scale + cfg.weight_decay * t.data[i];
                            v[i] = cfg.momentum * v[i] - lr * grad;
                            t.data[i] += v[i];
                        }
                    }
                    Optimizer::Adam { beta1, beta2, eps } => {
                        let m_hat = 1.0 - beta1.powi(step_count as i32);
                        let v_hat = 1.0 - beta2.powi(step_count as i32);
                        let s = &mut second[slot];
                        for i in 0..t.data.len() {
                            let grad = t.grad[i] * scale + cfg.weight_decay * t.data[i];
                            v[i] = beta1 * v[i] + (1.0 - beta1) * grad;
                            s[i] = beta2 * s[i] + (1.0 - beta2) * grad * grad;
                            let update = (v[i] / m_hat) / ((s[i] / v_hat).sqrt() + eps);
                            t.data[i] -= lr * update;
                        }
                    }
                }
            }
        }
        if model.params().any_non_finite() {
            return Err(Error::Diverged(format!(
                "parameters became non-finite at epoch {epoch}"
            )));
        }

        let val_ra = match val_data {
            Some(val) => Some(empirical_random_accuracy(
                &ModelClassifier(model),
                val,
                cfg.eval_n,
                &epoch_rng.split(VAL_STREAM),
            )?),
            None => None,
        };
        report.epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            val_ra,
        });
    }
    Ok(report)
}

fn shuffle(order: &mut [usize], rng: &mut RngStream) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// Adapter: a model viewed as a stochastic classifier (argmax of one
/// stochastic forward per sample).
pub struct ModelClassifier<'a>(pub &'a CfnnModel);

impl StochasticClassifier for ModelClassifier<'_> {
    fn class_count(&self) -> usize {
        self.0.class_count()
    }

    fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize> {
        Ok(argmax_tie_low(&self.0.sample_logits(x, rng)?))
    }
}

/// Plain accuracy of the deterministic mean-mask forward.
pub fn deterministic_accuracy(net: &CfnnNet, dataset: &[(Vec<f64>, usize)]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    let mut correct = 0u64;
    for (x, y) in dataset {
        if argmax_tie_low(&net.mean_mask_forward(x)?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Accuracy under mean aggregation: argmax of the average of `n` stochastic
/// logit vectors per point.
pub fn mean_aggregate_accuracy(
    model: &CfnnModel,
    dataset: &[(Vec<f64>, usize)],
    n: u64,
    run_rng: &RngStream,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    if n == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let mut correct = 0u64;
    for (i, (x, y)) in dataset.iter().enumerate() {
        let point_rng = run_rng.split(i as u64);
        let outputs: Vec<Vec<f64>> = (0..n)
            .map(|j| model.sample_logits(x, &mut point_rng.split(j)))
            .collect::<Result<_>>()?;
        if crate::amplify::mean_aggregate(&outputs)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// One row of a sampling-generalization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_test: u64,
    pub ra_mean: f64,
    pub ra_std: f64,
    pub repeats: u64,
}

/// Random accuracy at each `n_test`, repeated with fresh streams; reports
/// mean and sample standard deviation.
pub fn sampling_generalization<C: StochasticClassifier + ?Sized>(
    clf: &C,
    dataset: &[(Vec<f64>, usize)],
    n_values: &[u64],
    repeats: u64,
    rng: &RngStream,
) -> Result<Vec<SweepRow>> {
    if n_values.is_empty() {
        return Err(Error::domain("no sample counts requested"));
    }
    if repeats == 0 {
        return Err(Error::domain("repeats must be >= 1"));
    }
    let mut rows = Vec::with_capacity(n_values.len());
    for (i, &n) in n_values.iter().enumerate() {
        let n_rng = rng.split(i as u64);
        let ras: Vec<f64> = (0..repeats)
            .map(|r| empirical_random_accuracy(clf, dataset, n, &n_rng.split(r)))
            .collect::<Result<_>>()?;
        let mean = ras.iter().sum::<f64>() / ras.len() as f64;
        let std = if ras.len() > 1 {
            (ras.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (ras.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            n_test: n,
            ra_mean: mean,
            ra_std: std,
            repeats,
        });
    }
    Ok(rows)
}

/// Architecture part of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ArchDescriptor {
    Net {
        input_dim: usize,
        layers: Vec<LayerSpec>,
    },
    Hypernet {
        embed_dim: usize,
        class_count: usize,
        z1_dim: usize,
        z2_dim: usize,
        hidden: Vec<usize>,
        bounded: bool,
        theta_scale: f64,
        gaussian_ports: bool,
        skip: bool,
    },
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned parameter dump with its architecture descriptor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Checkpoint {
    pub version: u32,
    pub arch: ArchDescriptor,
    pub params: Vec<f64>,
}

impl CfnnModel {
    pub fn checkpoint(&self) -> Checkpoint {
        let arch = match self {
            CfnnModel::Net(n) => ArchDescriptor::Net {
                input_dim: n.input_dim(),
                layers: n.specs(),
            },
            CfnnModel::Hypernet(h) => ArchDescriptor::Hypernet {
                embed_dim: h.embed_dim(),
                class_count: h.class_count(),
                z1_dim: h.z1_dim(),
                z2_dim: h.z2_dim(),
                hidden: h.hidden().to_vec(),
                bounded: h.bounded(),
                theta_scale: h.theta_scale(),
                gaussian_ports: h.gaussian_ports(),
                skip: h.has_skip(),
            },
        };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            arch,
            params: self.params().flat_values(),
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<CfnnModel> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::domain(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        let mut scratch = RngStream::new(0);
        let mut model = match &cp.arch {
            ArchDescriptor::Net { input_dim, layers } => {
                CfnnModel::Net(CfnnNet::from_specs(*input_dim, layers, &mut scratch)?)
            }
            ArchDescriptor::Hypernet {
                embed_dim,
                class_count,
                z1_dim,
                z2_dim,
                hidden,
                bounded,
                theta_scale,
                gaussian_ports,
                skip,
            } => {
                let bound = bounded.then_some(*theta_scale);
                let mut spec = HypernetSpec::with_options(
                    *embed_dim,
                    *class_count,
                    *z1_dim,
                    *z2_dim,
                    hidden,
                    bound,
                    *skip,
                    &mut scratch,
                )?;
                if *gaussian_ports {
                    spec = spec.with_gaussian_ports();
                }
                CfnnModel::Hypernet(spec)
            }
        };
        model.params_mut().set_flat_values(&cp.params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;

    #[test]
    fn gumbel_softmax_values() {
        let p = gumbel_softmax(&[0.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let p = gumbel_softmax(&[2.0f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);

        let p = gumbel_softmax(&[1.0, 0.0], 0.1).unwrap();
        assert!(p[0] >= 0.9999, "p0={}", p[0]);

        assert!(gumbel_softmax(&[1.0], 0.0).is_err());
        assert!(gumbel_softmax(&[], 1.0).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), (0.0, false));
        let (l, c) = cross_entropy(&[0.5, 0.5], 0).unwrap();
        assert!((l - 2.0f64.ln()).abs() < 1e-15 && !c);
        let (l, c) = cross_entropy(&[(-2.0f64).exp(), 0.0], 0).unwrap();
        assert!((l - 2.0).abs() < 1e-12 && !c);
        let (l, c) = cross_entropy(&[0.0, 1.0], 0).unwrap();
        assert!(c && (l - (-EPS_FLOOR.ln())).abs() < 1e-9);
        assert!(cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn ptilde_ignoring_random_port_is_plain_softmax() {
        let mut rng = make_rng(1);
        let net = CfnnNet::builder(2)
            .dense(4)
            .tanh()
            .dense(3)
            .build(&mut rng)
            .unwrap();
        let x = [0.3, -0.4];
        let logits = net.mean_mask_forward(&x).unwrap();
        let expected = gumbel_softmax(&logits, 1.0).unwrap();
        let model = CfnnModel::Net(net);
        for n in [1, 7] {
            let p = estimate_ptilde(&model, &x, n, 1.0, &make_rng(2)).unwrap();
            for (a, b) in p.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stacked_and_per_draw_paths_agree() {
        let mut rng = make_rng(40);
        let models = [
            CfnnModel::Net(
                CfnnNet::builder(2)
                    .concat_random(2)
                    .dense(6)
                    .tanh()
                    .dropout(0.4)
                    .dense(3)
                    .build(&mut rng)
                    .unwrap(),
            ),
            CfnnModel::Hypernet(HypernetSpec::toy(2, 2, &mut rng).unwrap()),
        ];
        for (mi, model) in models.iter().enumerate() {
            let x = [0.3, -0.8];
            let stream = make_rng(900 + mi as u64);
            for n in [1u64, 5, 12] {
                let mut ga = Graph::new();
                let pa = ptilde_node(model, &mut ga, &x, n, 0.7, &stream).unwrap();
                let la = ga.neg_log_entry(pa, 1, EPS_FLOOR).unwrap();
                ga.backward(la).unwrap();

                let mut gb = Graph::new();
                let pb = ptilde_node_per_draw(model, &mut gb, &x, n, 0.7, &stream).unwrap();
                let lb = gb.neg_log_entry(pb, 1, EPS_FLOOR).unwrap();
                gb.backward(lb).unwrap();

                assert_eq!(ga.value(pa), gb.value(pb), "model {mi} n {n}");
                assert_eq!(ga.value(la), gb.value(lb));

                let mut sa = model.clone();
                ga.accumulate_param_grads(sa.params_mut());
                let mut sb = model.clone();
                gb.accumulate_param_grads(sb.params_mut());
                let grads_a = sa.params().flat_grads();
                let grads_b = sb.params().flat_grads();
                for (a, b) in grads_a.iter().zip(&grads_b) {
                    assert!(
                        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0),
                        "model {mi} n {n}: grad {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn ptilde_is_valid_distribution() {
        let mut rng = make_rng(3);
        let net = CfnnNet::builder(2)
            .concat_random(2)
            .dense(6)
            .tanh()
            .dropout(0.4)
            .dense(3)
            .build(&mut rng)
            .unwrap();
        let model = CfnnModel::Net(net);
        for i in 0..20 {
            let p = estimate_ptilde(&model, &[0.1, 0.9], 5, 1.0, &make_rng(i)).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ptilde_variance_shrinks_inversely_with_n() {
        let mut rng = make_rng(4);
        let net = CfnnNet::builder(2)
            .concat_random(2)
            .dense(8)
            .tanh()
            .dense(2)
            .build(&mut rng)
            .unwrap();
        let model = CfnnModel::Net(net);
        let x = [0.5, -0.5];
        let var_at = |n: u64| {
            let runs = 400;
            let vals: Vec<f64> = (0..runs)
                .map(|r| estimate_ptilde(&model, &x, n, 1.0, &make_rng(1000 + r)).unwrap()[0])
                .collect();
            let mean = vals.iter().sum::<f64>() / runs as f64;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / runs as f64
        };
        let ratio = var_at(4) / var_at(64);
        assert!((8.0..32.0).contains(&ratio), "ratio={ratio}");
    }

    #[test]
    fn fixed_random_port_reduces_to_softmax_ce() {
        // With the random port held fixed the CFNN loss equals standard
        // softmax cross-entropy of that forward.
        let mut rng = make_rng(5);
        let net = CfnnNet::builder(2)
            .concat_random(2)
            .dense(5)
            .tanh()
            .dense(2)
            .build(&mut rng)
            .unwrap();
        let x = [0.2, 0.7];
        let draws = RandomDraws {
            z: vec![0.3, 0.8],
            masks: vec![],
        };
        let logits = net.forward(&x, &draws).unwrap();
        let sm = gumbel_softmax(&logits, 1.0).unwrap();
        let (expected, _) = cross_entropy(&sm, 1).unwrap();

        let mut g = Graph::new();
        let ln = net.logits_node(&mut g, &x, &draws).unwrap();
        let sc = g.scale(ln, 1.0);
        let smn = g.softmax(sc);
        let pm = g.mean_of(&[smn]).unwrap();
        let loss = g.neg_log_entry(pm, 1, EPS_FLOOR).unwrap();
        assert!((g.value(loss)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let mut rng = make_rng(6);
        let net = CfnnNet::builder(2).dense(3).build(&mut rng).unwrap();
        let mut model = CfnnModel::Net(net);
        let before = model.params().flat_values();
        let data = vec![(vec![0.0, 0.0], 0usize), (vec![1.0, 1.0], 1)];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        train(&mut model, &data, None, &cfg, &make_rng(7)).unwrap();
        assert_eq!(model.params().flat_values(), before);
    }

    #[test]
    fn blobs_train_to_high_accuracy() {
        // linearly separable blobs, deterministic net
        let mut data_rng = make_rng(8);
        let mut data = Vec::new();
        for i in 0..200 {
            let y = i % 2;
            let cx = if y == 0 { -1.5 } else { 1.5 };
            data.push((
                vec![
                    cx + 0.4 * data_rng.next_std_normal(),
                    0.4 * data_rng.next_std_normal(),
                ],
                y,
            ));
        }
        let mut rng = make_rng(9);
        let net = CfnnNet::builder(2).dense(2).build(&mut rng).unwrap();
        let mut model = CfnnModel::Net(net);
        let cfg = TrainConfig {
            n_train: 1,
            epochs: 50,
            lr: 0.2,
            weight_decay: 0.0,
            loss: LossKind::CrossEntropy,
            lr_schedule: LrSchedule::Constant,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, Some(&data), &cfg, &make_rng(10)).unwrap();
        let final_ra = report.epochs.last().unwrap().val_ra.unwrap();
        assert!(final_ra >= 0.99, "final RA {final_ra}");
        // losses should be finite and trending down
        assert!(report.epochs[0].train_loss > report.epochs.last().unwrap().train_loss);
    }

    #[test]
    fn deterministic_net_sweep_is_flat() {
        let mut rng = make_rng(11);
        let net = CfnnNet::builder(2).dense(2).build(&mut rng).unwrap();
        let model = CfnnModel::Net(net);
        let data = vec![(vec![0.2, 0.1], 0usize), (vec![-0.4, 0.3], 1)];
        let rows = sampling_generalization(
            &ModelClassifier(&model),
            &data,
            &[1, 9, 101],
            3,
            &make_rng(12),
        )
        .unwrap();
        let first = rows[0].ra_mean;
        for row in &rows {
            assert_eq!(row.ra_mean, first);
            assert_eq!(row.ra_std, 0.0);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = make_rng(13);
        let net = CfnnNet::builder(2)
            .dense(4)
            .tanh()
            .dropout(0.3)
            .dense(2)
            .build(&mut rng)
            .unwrap();
        let model = CfnnModel::Net(net);
        let cp = model.checkpoint();
        let restored = CfnnModel::from_checkpoint(&cp).unwrap();
        assert_eq!(model.params().flat_values(), restored.params().flat_values());
        let x = [0.3, 0.4];
        let a = model.sample_logits(&x, &mut make_rng(14)).unwrap();
        let b = restored.sample_logits(&x, &mut make_rng(14)).unwrap();
        assert_eq!(a, b);

        let mut rng2 = make_rng(15);
        let hyper = CfnnModel::Hypernet(HypernetSpec::toy(2, 2, &mut rng2).unwrap());
        let cp2 = hyper.checkpoint();
        let restored2 = CfnnModel::from_checkpoint(&cp2).unwrap();
        assert_eq!(
            hyper.params().flat_values(),
            restored2.params().flat_values()
        );

        let bad = Checkpoint {
            version: 99,
            ..cp2.clone()
        };
        assert!(CfnnModel::from_checkpoint(&bad).is_err());
    }

    #[test]
    fn dcrc_of_models() {
        let mut rng = make_rng(16);
        // plain net: no random port
        let net = CfnnNet::builder(2)
            .dense(4)
            .tanh()
            .dense(2)
            .build(&mut rng)
            .unwrap();
        let model = CfnnModel::Net(net);
        let (dc, rc) = dc_rc(&model.describe_graph()).unwrap();
        assert_eq!((dc, rc), (6, 0));

        // dropout net: masks put downstream units on the random path
        let dnet = CfnnNet::builder(2)
            .dense(4)
            .tanh()
            .dropout(0.5)
            .dense(2)
            .build(&mut rng)
            .unwrap();
        let dmodel = CfnnModel::Net(dnet);
        let (dc, rc) = dc_rc(&dmodel.describe_graph()).unwrap();
        assert_eq!(dc, 6);
        assert_eq!(rc, 2); // only the final dense units sit after the mask

        // hypernet: head counts in both, generator only in RC
        let hyper = CfnnModel::Hypernet(HypernetSpec::toy(2, 2, &mut rng).unwrap());
        let (dc, rc) = dc_rc(&hyper.describe_graph()).unwrap();
        let gen_neurons: usize = 32 + 32 + (2 * 2 + 2);
        assert_eq!(dc, 2);
        assert_eq!(rc, gen_neurons + 2);
        // alternative counting: the random path ends at the emitted weights
        let (dc2, rc2) = dc_rc_with(&hyper.describe_graph(), WeightEdges::Excluded).unwrap();
        assert_eq!(dc2, 2);
        assert_eq!(rc2, gen_neurons);
    }
}

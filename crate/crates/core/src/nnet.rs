//! Minimal feed-forward network engine.
//!
//! A [`FusedMlp`] is a list of MLPs, each reading its own input matrix, whose
//! outputs are summed elementwise. A plain MLP is the one-member case. Since
//! the fusion is addition, the loss gradient with respect to every member's
//! output equals the gradient with respect to the fused output.
//!
//! Everything runs in `f64`; batches are row-major `(batch, features)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    /// Zero gives a single affine layer.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
        output_dim: usize,
    ) -> Self {
        MlpSpec {
            input_dim,
            hidden_layers,
            hidden_width,
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 {
            return Err(Error::invalid(format!("degenerate MLP spec {self:?}")));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Affine layer `x · w + b` with `w` shaped `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Per-layer values saved by a forward pass for backpropagation.
#[derive(Debug)]
pub struct ForwardCache {
    /// Input to each layer (the network input first).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Gradients shaped like an [`Mlp`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    fn zeros_like(m: &Mlp) -> Self {
        MlpGrads {
            layers: m
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-limit..limit)
                    }),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { spec, layers })
    }

    /// Build from explicit layers. Every layer but the last is followed by
    /// the rectifier.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("an MLP needs a layer"))?;
        let input_dim = first.w.nrows();
        let mut prev = input_dim;
        for l in &layers {
            if l.w.nrows() != prev {
                return Err(Error::Shape {
                    expected: prev,
                    got: l.w.nrows(),
                });
            }
            if l.b.len() != l.w.ncols() {
                return Err(Error::Shape {
                    expected: l.w.ncols(),
                    got: l.b.len(),
                });
            }
            prev = l.w.ncols();
        }
        let hidden_layers = layers.len() - 1;
        let hidden_width = if hidden_layers > 0 {
            layers[0].w.ncols()
        } else {
            prev
        };
        if layers[..hidden_layers]
            .iter()
            .any(|l| l.w.ncols() != hidden_width)
        {
            return Err(Error::invalid("hidden layers must share one width"));
        }
        Ok(Mlp {
            spec: MlpSpec::new(input_dim, hidden_layers, hidden_width, prev),
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w);
            z += &l.b;
            if i < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w);
            z += &l.b;
            inputs.push(a);
            if i < last {
                a = z.mapv(relu);
                pre.push(z);
            } else {
                a = z;
            }
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: a,
        })
    }

    /// Backpropagate `d_out` (gradient of the loss w.r.t. the output batch)
    /// through the cached pass.
    pub fn backward_batch(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> MlpGrads {
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = d_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            let g = &mut grads.layers[i];
            g.w = cache.inputs[i].t().dot(&delta);
            g.b = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].w.t());
                Zip::from(&mut prev)
                    .and(&cache.pre[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = prev;
            }
        }
        grads
    }

    /// Gradient of [`masked_mse`] at a single sample.
    pub fn backward(&self, x: &[f64], y: &[f64], mask: &[bool]) -> Result<MlpGrads> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        if y.len() != self.spec.output_dim {
            return Err(Error::Shape {
                expected: self.spec.output_dim,
                got: y.len(),
            });
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let cache = self.forward_cached(xv)?;
        let d = masked_mse_grad(cache.output.row(0), y, mask)?;
        let d = d.insert_axis(Axis(0));
        Ok(self.backward_batch(&cache, d.view()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// Overwrite every parameter from a flat vector in [`Mlp::flatten`] order.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.b.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Mean squared error over the masked-in entries.
pub fn masked_mse(y: &[f64], yhat: &[f64], mask: &[bool]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if mask.len() != y.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: mask.len(),
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::invalid("mask selects no entries"));
    }
    let sum: f64 = y
        .iter()
        .zip(yhat)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (a - b) * (a - b))
        .sum();
    Ok(sum / count as f64)
}

fn masked_mse_grad(yhat: ArrayView1<f64>, y: &[f64], mask: &[bool]) -> Result<Array1<f64>> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::invalid("mask selects no entries"));
    }
    let scale = 2.0 / count as f64;
    Ok(Array1::from_iter(
        yhat.iter()
            .zip(y)
            .zip(mask)
            .map(|((p, t), &m)| if m { scale * (p - t) } else { 0.0 }),
    ))
}

/// Batch loss (mean over rows of per-row masked MSE) and its gradient with
/// respect to the prediction. `mask` holds 1.0 for observed entries.
pub fn batch_masked_mse(
    y: ArrayView2<f64>,
    yhat: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> (f64, Array2<f64>) {
    let rows = y.nrows() as f64;
    let mut grad = Array2::zeros(y.raw_dim());
    let mut loss = 0.0;
    for ((yr, pr), (mr, mut gr)) in y
        .outer_iter()
        .zip(yhat.outer_iter())
        .zip(mask.outer_iter().zip(grad.outer_iter_mut()))
    {
        let count: f64 = mr.sum();
        if count == 0.0 {
            continue;
        }
        let mut sq = 0.0;
        for j in 0..yr.len() {
            let diff = (pr[j] - yr[j]) * mr[j];
            sq += diff * diff;
            gr[j] = 2.0 * diff / (count * rows);
        }
        loss += sq / count;
    }
    (loss / rows, grad)
}

/// Several MLPs whose outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMlp {
    pub members: Vec<Mlp>,
}

/// Inputs (one matrix per member), targets, and observation mask.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Vec<Array2<f64>>,
    pub targets: Array2<f64>,
    pub mask: Array2<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            inputs: self
                .inputs
                .iter()
                .map(|x| x.select(Axis(0), rows))
                .collect(),
            targets: self.targets.select(Axis(0), rows),
            mask: self.mask.select(Axis(0), rows),
        }
    }
}

impl FusedMlp {
    pub fn new(members: Vec<Mlp>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("no members"))?;
        let out = first.spec().output_dim;
        for m in &members {
            if m.spec().output_dim != out {
                return Err(Error::Shape {
                    expected: out,
                    got: m.spec().output_dim,
                });
            }
        }
        Ok(FusedMlp { members })
    }

    pub fn output_dim(&self) -> usize {
        self.members[0].spec().output_dim
    }

    pub fn param_count(&self) -> usize {
        self.members.iter().map(Mlp::param_count).sum()
    }

    fn check_inputs(&self, inputs: &[ArrayView2<f64>]) -> Result<()> {
        if inputs.len() != self.members.len() {
            return Err(Error::Shape {
                expected: self.members.len(),
                got: inputs.len(),
            });
        }
        Ok(())
    }

    pub fn forward_batch(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        self.check_inputs(inputs)?;
        let mut total: Option<Array2<f64>> = None;
        for (m, x) in self.members.iter().zip(inputs) {
            let out = m.forward_batch(x.view())?;
            total = Some(match total {
                None => out,
                Some(acc) => acc + out,
            });
        }
        Ok(total.expect("at least one member"))
    }

    /// Loss and gradients for one batch.
    pub fn loss_and_grads(&self, batch: &TrainingSet) -> Result<(f64, Vec<MlpGrads>)> {
        let views: Vec<_> = batch.inputs.iter().map(|x| x.view()).collect();
        self.check_inputs(&views)?;
        let caches = self
            .members
            .iter()
            .zip(&views)
            .map(|(m, x)| m.forward_cached(x.view()))
            .collect::<Result<Vec<_>>>()?;
        let mut yhat = caches[0].output.clone();
        for c in &caches[1..] {
            yhat += &c.output;
        }
        let (loss, d_out) = batch_masked_mse(batch.targets.view(), yhat.view(), batch.mask.view());
        let grads = self
            .members
            .iter()
            .zip(&caches)
            .map(|(m, c)| m.backward_batch(c, d_out.view()))
            .collect();
        Ok((loss, grads))
    }

    pub fn loss(&self, set: &TrainingSet) -> Result<f64> {
        let views: Vec<_> = set.inputs.iter().map(|x| x.view()).collect();
        let yhat = self.forward_batch(&views)?;
        Ok(batch_masked_mse(set.targets.view(), yhat.view(), set.mask.view()).0)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.members.iter().flat_map(Mlp::flatten).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        for m in &mut self.members {
            let n = m.param_count();
            m.set_flat(&values[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }
}

/// Adaptive moment estimation state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<MlpGrads>,
    second: Vec<MlpGrads>,
}

impl Adam {
    pub fn new(net: &FusedMlp) -> Self {
        let zeros: Vec<_> = net.members.iter().map(MlpGrads::zeros_like).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut FusedMlp, grads: &[MlpGrads], lr: f64) -> Result<()> {
        if grads.len() != net.members.len() {
            return Err(Error::Shape {
                expected: net.members.len(),
                got: grads.len(),
            });
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (k, member) in net.members.iter_mut().enumerate() {
            for (j, layer) in member.layers.iter_mut().enumerate() {
                let g = &grads[k].layers[j];
                let m = &mut self.first[k].layers[j];
                let v = &mut self.second[k].layers[j];
                Zip::from(&mut layer.w)
                    .and(&g.w)
                    .and(&mut m.w)
                    .and(&mut v.w)
                    .for_each(|p, &g, m, v| adam_update(p, g, m, v, b1, b2, c1, c2, lr, eps));
                Zip::from(&mut layer.b)
                    .and(&g.b)
                    .and(&mut m.b)
                    .and(&mut v.b)
                    .for_each(|p, &g, m, v| adam_update(p, g, m, v, b1, b2, c1, c2, lr, eps));
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(
    p: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    lr: f64,
    eps: f64,
) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// How a single loss curve is judged stalled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StallRule {
    /// Each of the last `window` epochs improved on its predecessor by no
    /// more than the threshold fraction.
    Consecutive,
    /// The loss improved by no more than the threshold fraction relative to
    /// the loss `window` epochs earlier.
    WindowTotal,
}

/// Whether stopping needs both curves stalled or just one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopWhen {
    Both,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub window: usize,
    pub rel_improvement: f64,
    pub rule: StallRule,
    pub when: StopWhen,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            window: 10,
            rel_improvement: 0.01,
            rule: StallRule::Consecutive,
            when: StopWhen::Both,
        }
    }
}

impl EarlyStopping {
    fn improved(&self, before: f64, after: f64) -> bool {
        before > 0.0 && before - after > self.rel_improvement * before
    }

    pub fn stalled(&self, history: &[f64]) -> bool {
        let n = history.len();
        if n <= self.window {
            return false;
        }
        match self.rule {
            StallRule::Consecutive => history[n - self.window - 1..]
                .windows(2)
                .all(|w| !self.improved(w[0], w[1])),
            StallRule::WindowTotal => !self.improved(history[n - 1 - self.window], history[n - 1]),
        }
    }

    pub fn should_stop(&self, train: &[f64], val: &[f64]) -> bool {
        match self.when {
            StopWhen::Both => self.stalled(train) && self.stalled(val),
            StopWhen::Either => self.stalled(train) || self.stalled(val),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub early_stopping: EarlyStopping,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            max_epochs: 100,
            batch_size: 256,
            seed: 0,
            early_stopping: EarlyStopping::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let es = &self.early_stopping;
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || es.window == 0 {
            return Err(Error::invalid(
                "batch size, epochs, and window must be positive",
            ));
        }
        if !(es.rel_improvement > 0.0 && es.rel_improvement < 1.0) {
            return Err(Error::invalid("early-stop fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
    /// 0-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Minibatch training with seeded shuffling and early stopping. Returns the
/// snapshot with the lowest validation loss.
pub fn train(
    mut net: FusedMlp,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<(FusedMlp, LossHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be nonempty",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = LossHistory::default();
    let mut best = (f64::INFINITY, net.clone());

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.select(chunk);
            let (loss, grads) = net.loss_and_grads(&batch)?;
            adam.step(&mut net, &grads, cfg.learning_rate)?;
            weighted += loss * chunk.len() as f64;
        }
        let train_loss = weighted / train_set.len() as f64;
        let val_loss = net.loss(val_set)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Diverged(epoch));
        }
        history.train.push(train_loss);
        history.val.push(val_loss);
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        if val_loss < best.0 {
            best = (val_loss, net.clone());
            history.best_epoch = epoch;
        }
        if cfg.early_stopping.should_stop(&history.train, &history.val) {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best.1, history))
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Serializable form of an [`Mlp`]: spec plus row-major weight matrices.
#[derive(Serialize, Deserialize)]
pub struct MlpFile {
    spec: MlpSpec,
    layers: Vec<LayerFile>,
}

impl From<&Mlp> for MlpFile {
    fn from(m: &Mlp) -> Self {
        MlpFile {
            spec: m.spec,
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.w.nrows(),
                    cols: l.w.ncols(),
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpFile> for Mlp {
    type Error = Error;

    fn try_from(f: MlpFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .map(|l| {
                let w = Array2::from_shape_vec((l.rows, l.cols), l.weights)
                    .map_err(|e| Error::Format(e.to_string()))?;
                Ok(Dense {
                    w,
                    b: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if f.spec.layer_shapes() != layers.iter().map(|l| l.w.dim()).collect::<Vec<_>>() {
            return Err(Error::Format(
                "layer shapes disagree with the recorded spec".into(),
            ));
        }
        if layers
            .iter()
            .any(|l| l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::Format("non-finite weight".into()));
        }
        let mut m = Mlp::from_layers(layers)?;
        m.spec = f.spec;
        Ok(m)
    }
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = MlpFile::deserialize(d)?;
        Mlp::try_from(f).map_err(serde::de::Error::custom)
    }
}

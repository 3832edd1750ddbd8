//! Learnable wavelet-domain convolution layers, the classifier built on them,
//! manual backpropagation, the SGD training loop, the low-pass contrast
//! baseline, and checkpoint persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chebyshev::build_operator;
use crate::data::{Dataset, GraphSample};
use crate::error::{Error, Result};
use crate::graph::{eigendecompose, laplacian, Graph, GraphSignal};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::parallel::map_indices;
use crate::seed::subseed;
use crate::sgwt::{diag_filter, WaveletCoefficients, WaveletTransform};

const MAGIC: &[u8; 4] = b"SGWN";
const FORMAT_VERSION: u32 = 1;

/// Per-coordinate batch normalization over the sample axis, with learnable
/// scale/shift and running statistics for evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub running_mean: DMatrix<f64>,
    pub running_var: DMatrix<f64>,
    eps: f64,
    momentum: f64,
}

struct BnCache {
    xhat: Vec<DMatrix<f64>>,
    inv_std: DMatrix<f64>,
}

impl BatchNorm {
    fn new(n: usize, d: usize) -> Self {
        BatchNorm {
            gamma: DMatrix::from_element(n, d, 1.0),
            beta: DMatrix::zeros(n, d),
            running_mean: DMatrix::zeros(n, d),
            running_var: DMatrix::from_element(n, d, 1.0),
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    fn forward_train(&mut self, zs: &[DMatrix<f64>]) -> (Vec<DMatrix<f64>>, BnCache) {
        let m = zs.len() as f64;
        let (n, d) = zs[0].shape();
        let mut mean = DMatrix::zeros(n, d);
        for z in zs {
            mean += z;
        }
        mean /= m;
        let mut var = DMatrix::zeros(n, d);
        for z in zs {
            var += (z - &mean).map(|v| v * v);
        }
        var /= m;
        let inv_std = var.map(|v| 1.0 / (v + self.eps).sqrt());
        let xhat: Vec<DMatrix<f64>> = zs
            .iter()
            .map(|z| (z - &mean).component_mul(&inv_std))
            .collect();
        let out = xhat
            .iter()
            .map(|x| x.component_mul(&self.gamma) + &self.beta)
            .collect();
        self.running_mean = self.momentum * &self.running_mean + (1.0 - self.momentum) * &mean;
        self.running_var = self.momentum * &self.running_var + (1.0 - self.momentum) * &var;
        (out, BnCache { xhat, inv_std })
    }

    fn forward_eval(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let inv_std = self.running_var.map(|v| 1.0 / (v + self.eps).sqrt());
        (z - &self.running_mean)
            .component_mul(&inv_std)
            .component_mul(&self.gamma)
            + &self.beta
    }

    fn backward(
        &self,
        cache: &BnCache,
        d_out: &[DMatrix<f64>],
    ) -> (Vec<DMatrix<f64>>, DMatrix<f64>, DMatrix<f64>) {
        let m = d_out.len() as f64;
        let (n, d) = d_out[0].shape();
        let mut d_gamma = DMatrix::zeros(n, d);
        let mut d_beta = DMatrix::zeros(n, d);
        for (g, x) in d_out.iter().zip(&cache.xhat) {
            d_gamma += g.component_mul(x);
            d_beta += g;
        }
        let d_xhat: Vec<DMatrix<f64>> = d_out.iter().map(|g| g.component_mul(&self.gamma)).collect();
        let mut sum_dx = DMatrix::zeros(n, d);
        let mut sum_dx_x = DMatrix::zeros(n, d);
        for (dx, x) in d_xhat.iter().zip(&cache.xhat) {
            sum_dx += dx;
            sum_dx_x += dx.component_mul(x);
        }
        let d_z = d_xhat
            .iter()
            .zip(&cache.xhat)
            .map(|(dx, x)| {
                (dx - &sum_dx / m - x.component_mul(&sum_dx_x) / m).component_mul(&cache.inv_std)
            })
            .collect();
        (d_z, d_gamma, d_beta)
    }
}

/// One learnable layer: ReLU(BN(W^T f(theta) W X)) with a diagonal filter
/// value per (band, node), shared across feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SgwConvLayer {
    pub theta: DVector<f64>,
    pub batchnorm: Option<BatchNorm>,
}

/// Two-layer fully connected head: d -> hidden (ReLU) -> C.
#[derive(Debug, Clone, PartialEq)]
pub struct FcHead {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

impl FcHead {
    fn new(d: usize, hidden: usize, c: usize, rng: &mut ChaCha8Rng) -> Self {
        FcHead {
            w1: xavier(hidden, d, rng),
            b1: DVector::zeros(hidden),
            w2: xavier(c, hidden, rng),
            b2: DVector::zeros(c),
        }
    }

    /// Returns the post-ReLU hidden vector and the class probabilities.
    fn forward(&self, pooled: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let hidden = (&self.w1 * pooled + &self.b1).map(|v| v.max(0.0));
        let probs = softmax(&(&self.w2 * &hidden + &self.b2));
        (hidden, probs)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.map(|v| (v - max).exp());
    let sum: f64 = exp.sum();
    exp / sum
}

/// Column-wise mean over nodes: the graph-level representation.
pub fn readout(h: &GraphSignal) -> DVector<f64> {
    let n = h.nrows() as f64;
    DVector::from_fn(h.ncols(), |j, _| h.column(j).sum() / n)
}

/// Mean cross-entropy against one-hot labels, log argument clamped at 1e-15.
pub fn cross_entropy(probs: &[DVector<f64>], labels: &[usize]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    let m = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(1e-15).ln())
        .sum::<f64>()
        / m
}

/// Lowest index wins ties, so evaluation is deterministic.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// The wavelet-domain classifier: a stack of SGWConv layers over one shared
/// transform, followed by readout and the FC head.
#[derive(Debug, Clone)]
pub struct SgwnModel {
    transform: WaveletTransform,
    pub layers: Vec<SgwConvLayer>,
    pub head: FcHead,
    num_classes: usize,
    feature_dim: usize,
    batchnorm: bool,
}

struct LayerCache {
    wx: Vec<WaveletCoefficients>,
    bn: Option<BnCache>,
    out: Vec<DMatrix<f64>>,
}

/// Intermediate state from a training-mode batch forward, consumed by the
/// matching backward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    pooled: Vec<DVector<f64>>,
    hidden: Vec<DVector<f64>>,
    probs: Vec<DVector<f64>>,
}

impl ForwardCache {
    /// Per-sample class probabilities under batch statistics.
    pub fn probs(&self) -> &[DVector<f64>] {
        &self.probs
    }
}

/// Gradients for every learnable parameter group, in model layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub theta: Vec<DVector<f64>>,
    pub bn: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl SgwnModel {
    /// Fresh model: theta all ones (identity wavelet-domain filter), Xavier
    /// FC weights, zero biases. `seed` drives initialization only.
    pub fn new(
        transform: WaveletTransform,
        depth: usize,
        feature_dim: usize,
        hidden: usize,
        num_classes: usize,
        batchnorm: bool,
        seed: u64,
    ) -> Result<Self> {
        if depth < 1 {
            return Err(Error::Validation("model depth must be at least 1".into()));
        }
        if feature_dim < 1 || hidden < 1 || num_classes < 2 {
            return Err(Error::Validation(format!(
                "bad head shape: d={feature_dim}, hidden={hidden}, C={num_classes}"
            )));
        }
        let n = transform.num_nodes();
        let b = transform.num_bands();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..depth)
            .map(|_| SgwConvLayer {
                theta: DVector::from_element(b * n, 1.0),
                batchnorm: batchnorm.then(|| BatchNorm::new(n, feature_dim)),
            })
            .collect();
        let head = FcHead::new(feature_dim, hidden, num_classes, &mut rng);
        Ok(SgwnModel {
            transform,
            layers,
            head,
            num_classes,
            feature_dim,
            batchnorm,
        })
    }

    pub fn transform(&self) -> &WaveletTransform {
        &self.transform
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn check_input(&self, x: &GraphSignal) -> Result<()> {
        if x.nrows() != self.transform.num_nodes() || x.ncols() != self.feature_dim {
            return Err(Error::Validation(format!(
                "input shape {}x{} does not match model {}x{}",
                x.nrows(),
                x.ncols(),
                self.transform.num_nodes(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Evaluation-mode class probabilities for one sample.
    pub fn classify(&self, x: &GraphSignal) -> Result<DVector<f64>> {
        let (_, outputs) = self.forward_trace(x)?;
        let pooled = readout(outputs.last().expect("depth >= 1"));
        let (_, probs) = self.head.forward(&pooled);
        Ok(probs)
    }

    /// Evaluation-mode forward that keeps, per layer, the theta-filtered
    /// wavelet coefficients and the post-activation output.
    pub fn forward_trace(
        &self,
        x: &GraphSignal,
    ) -> Result<(Vec<WaveletCoefficients>, Vec<GraphSignal>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut coeffs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let filtered = diag_filter(&self.transform.forward(&h)?, layer.theta.as_slice())?;
            let z = self.transform.adjoint(&filtered)?;
            let z = match &layer.batchnorm {
                Some(bn) => bn.forward_eval(&z),
                None => z,
            };
            h = z.map(|v| v.max(0.0));
            coeffs.push(filtered);
            outputs.push(h.clone());
        }
        Ok((coeffs, outputs))
    }

    /// Training-mode batch forward; updates batch-norm running statistics.
    pub fn forward_batch(&mut self, xs: &[&GraphSignal], parallel: bool) -> Result<ForwardCache> {
        if xs.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        for x in xs {
            self.check_input(x)?;
        }
        let mut cur: Vec<DMatrix<f64>> = xs.iter().map(|x| (*x).clone()).collect();
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let transform = &self.transform;
            let theta = &layer.theta;
            let pairs: Vec<Result<(WaveletCoefficients, DMatrix<f64>)>> =
                map_indices(parallel, cur.len(), |i| {
                    let wx = transform.forward(&cur[i])?;
                    let z = transform.adjoint(&diag_filter(&wx, theta.as_slice())?)?;
                    Ok((wx, z))
                });
            let mut wx = Vec::with_capacity(cur.len());
            let mut zs = Vec::with_capacity(cur.len());
            for pair in pairs {
                let (w, z) = pair?;
                wx.push(w);
                zs.push(z);
            }
            let (post_bn, bn_cache) = match &mut layer.batchnorm {
                Some(bn) => {
                    let (out, cache) = bn.forward_train(&zs);
                    (out, Some(cache))
                }
                None => (zs, None),
            };
            let out: Vec<DMatrix<f64>> =
                post_bn.iter().map(|z| z.map(|v| v.max(0.0))).collect();
            cur = out.clone();
            layer_caches.push(LayerCache { wx, bn: bn_cache, out });
        }
        let mut pooled = Vec::with_capacity(cur.len());
        let mut hidden = Vec::with_capacity(cur.len());
        let mut probs = Vec::with_capacity(cur.len());
        for h in &cur {
            let p = readout(h);
            let (u, q) = self.head.forward(&p);
            pooled.push(p);
            hidden.push(u);
            probs.push(q);
        }
        Ok(ForwardCache { layers: layer_caches, pooled, hidden, probs })
    }

    /// Exact analytic gradients of the batch-mean cross-entropy. Accumulation
    /// runs in sample-index order so results are bit-reproducible under the
    /// parallel switch.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        parallel: bool,
    ) -> Result<Gradients> {
        let m = labels.len();
        assert_eq!(cache.probs.len(), m);
        let mf = m as f64;
        let n = self.transform.num_nodes();
        let d = self.feature_dim;

        let mut w1_g = DMatrix::zeros(self.head.w1.nrows(), self.head.w1.ncols());
        let mut b1_g = DVector::zeros(self.head.b1.len());
        let mut w2_g = DMatrix::zeros(self.head.w2.nrows(), self.head.w2.ncols());
        let mut b2_g = DVector::zeros(self.head.b2.len());
        let mut d_pooled = Vec::with_capacity(m);
        for i in 0..m {
            let mut dv = cache.probs[i].clone();
            dv[labels[i]] -= 1.0;
            dv /= mf;
            w2_g += &dv * cache.hidden[i].transpose();
            b2_g += &dv;
            let mut du = self.head.w2.transpose() * &dv;
            for (k, u) in cache.hidden[i].iter().enumerate() {
                if *u <= 0.0 {
                    du[k] = 0.0;
                }
            }
            w1_g += &du * cache.pooled[i].transpose();
            b1_g += &du;
            d_pooled.push(self.head.w1.transpose() * du);
        }
        // Readout backward: each node row receives the pooled gradient / N.
        let mut upstream: Vec<DMatrix<f64>> = d_pooled
            .iter()
            .map(|dp| DMatrix::from_fn(n, d, |_, j| dp[j] / n as f64))
            .collect();

        let mut theta_g = vec![DVector::zeros(0); self.layers.len()];
        let mut bn_g: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> =
            (0..self.layers.len()).map(|_| None).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let lc = &cache.layers[l];
            let du: Vec<DMatrix<f64>> = upstream
                .iter()
                .zip(&lc.out)
                .map(|(g, out)| g.zip_map(out, |g, o| if o > 0.0 { g } else { 0.0 }))
                .collect();
            let dz = match (&layer.batchnorm, &lc.bn) {
                (Some(bn), Some(bc)) => {
                    let (dz, dg, db) = bn.backward(bc, &du);
                    bn_g[l] = Some((dg, db));
                    dz
                }
                _ => du,
            };
            let transform = &self.transform;
            let theta = &layer.theta;
            let per_sample: Vec<Result<(DVector<f64>, DMatrix<f64>)>> =
                map_indices(parallel, m, |i| {
                    // dZ flows back through the adjoint, i.e. forward W.
                    let g = transform.forward(&dz[i])?;
                    let mut tg = DVector::zeros(theta.len());
                    for b in 0..g.num_bands() {
                        for node in 0..n {
                            tg[b * n + node] =
                                g.band(b).row(node).dot(&lc.wx[i].band(b).row(node));
                        }
                    }
                    let dx = transform.adjoint(&diag_filter(&g, theta.as_slice())?)?;
                    Ok((tg, dx))
                });
            let mut tg_total = DVector::zeros(theta.len());
            let mut dx = Vec::with_capacity(m);
            for item in per_sample {
                let (tg, x) = item?;
                tg_total += tg;
                dx.push(x);
            }
            theta_g[l] = tg_total;
            upstream = dx;
        }
        Ok(Gradients { theta: theta_g, bn: bn_g, w1: w1_g, b1: b1_g, w2: w2_g, b2: b2_g })
    }

    fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (tg, bg)) in self
            .layers
            .iter_mut()
            .zip(grads.theta.iter().zip(&grads.bn))
        {
            layer.theta -= lr * tg;
            if let (Some(bn), Some((dg, db))) = (&mut layer.batchnorm, bg) {
                bn.gamma -= lr * dg;
                bn.beta -= lr * db;
            }
        }
        self.head.w1 -= lr * &grads.w1;
        self.head.b1 -= lr * &grads.b1;
        self.head.w2 -= lr * &grads.w2;
        self.head.b2 -= lr * &grads.b2;
    }
}

/// Training hyperparameters; defaults are the reference recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub seed: u64,
    pub order_k: usize,
    pub scales_j: usize,
    pub kernel: KernelFamily,
    pub q: f64,
    pub batchnorm: bool,
    pub hidden: usize,
    pub depth: usize,
    /// Use the exact eigendecomposition transform instead of Chebyshev.
    pub exact: bool,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 0.01,
            decay: 0.99,
            seed: 0,
            order_k: 2,
            scales_j: 2,
            kernel: KernelFamily::MexicanHat,
            q: 2.0,
            batchnorm: true,
            hidden: 512,
            depth: 2,
            exact: false,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        if self.order_k < 1 || self.scales_j < 1 || self.hidden < 1 || self.depth < 1 {
            return Err(Error::Config(format!(
                "order_k={}, scales_j={}, hidden={}, depth={} must all be at least 1",
                self.order_k, self.scales_j, self.hidden, self.depth
            )));
        }
        if !(self.q > 1.0) {
            return Err(Error::Config(format!("q must exceed 1, got {}", self.q)));
        }
        Ok(())
    }
}

/// Builds the transform from the dataset graph and an initialized model.
pub fn build_model(dataset: &Dataset, config: &TrainConfig) -> Result<SgwnModel> {
    config.validate()?;
    let l = laplacian(&dataset.graph)?;
    if l.lambda_max() <= 0.0 {
        return Err(Error::Config(
            "dataset graph is edgeless; the wavelet transform is degenerate".into(),
        ));
    }
    let spec = KernelSpec::from_family(config.kernel, config.q, l.lambda_max(), config.scales_j)?;
    let transform = if config.exact {
        let spectrum = Arc::new(eigendecompose(&l)?);
        WaveletTransform::Exact { spec, spectrum }
    } else {
        WaveletTransform::Chebyshev(Arc::new(build_operator(&spec, Arc::new(l), config.order_k)?))
    };
    SgwnModel::new(
        transform,
        config.depth,
        dataset.feature_dim(),
        config.hidden,
        dataset.num_classes(),
        config.batchnorm,
        subseed(config.seed, "init"),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate<'a>(
    model: &SgwnModel,
    samples: impl IntoIterator<Item = &'a GraphSample>,
) -> Result<Evaluation> {
    let c = model.num_classes;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut total = 0usize;
    let mut correct = 0usize;
    for s in samples {
        let pred = argmax(&model.classify(&s.signal)?);
        confusion[s.label][pred] += 1;
        total += 1;
        if pred == s.label {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::Validation("cannot evaluate on an empty sample set".into()));
    }
    Ok(Evaluation { accuracy: correct as f64 / total as f64, confusion })
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
}

/// Mini-batch SGD with per-epoch multiplicative learning-rate decay.
/// Deterministic given seed, config, and dataset.
pub fn train(
    model: &mut SgwnModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let train_set: Vec<&GraphSample> = dataset.train_samples().collect();
    let test_set: Vec<&GraphSample> = dataset.test_samples().collect();
    if train_set.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    for c in 0..model.num_classes {
        if !train_set.iter().any(|s| s.label == c) {
            return Err(Error::Validation(format!(
                "class {c} ({}) is absent from the training split",
                dataset
                    .metadata
                    .class_names
                    .get(c)
                    .map(String::as_str)
                    .unwrap_or("?")
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = config.learning_rate;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<&GraphSignal> = chunk.iter().map(|&i| &train_set[i].signal).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            let cache = model.forward_batch(&xs, config.parallel)?;
            loss_sum += cross_entropy(&cache.probs, &labels) * chunk.len() as f64;
            let grads = model.backward_batch(&cache, &labels, config.parallel)?;
            model.sgd_step(&grads, lr);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let test_acc = if test_set.is_empty() {
            f64::NAN
        } else {
            evaluate(model, test_set.iter().copied())?.accuracy
        };
        history.push(EpochRecord { epoch, lr, train_loss, test_acc });
        lr *= config.decay;
    }
    Ok(history)
}

/// The over-smoothing contrast baseline: fixed mean-neighbor aggregation
/// rounds (no learnable graph filter) feeding the same readout/FC head.
#[derive(Debug, Clone)]
pub struct LowpassModel {
    agg: DMatrix<f64>,
    pub depth: usize,
    pub head: FcHead,
    num_classes: usize,
    feature_dim: usize,
}

impl LowpassModel {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// One aggregation matrix: D~^{-1} A~ with A~ = A + I. Row sums are >= 1, so
/// the matrix is always well defined.
pub fn mean_aggregation_matrix(graph: &Graph) -> DMatrix<f64> {
    let n = graph.num_nodes();
    let mut a = graph.adjacency().clone();
    for i in 0..n {
        a[(i, i)] = 1.0;
    }
    for i in 0..n {
        let deg: f64 = a.row(i).sum();
        for j in 0..n {
            a[(i, j)] /= deg;
        }
    }
    a
}

/// `depth` rounds of H <- ReLU(D~^{-1} A~ H).
pub fn lowpass_forward(agg: &DMatrix<f64>, x: &GraphSignal, depth: usize) -> GraphSignal {
    let mut h = x.clone();
    for _ in 0..depth {
        h = (agg * &h).map(|v| v.max(0.0));
    }
    h
}

impl LowpassModel {
    pub fn new(
        graph: &Graph,
        depth: usize,
        feature_dim: usize,
        hidden: usize,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if depth < 1 {
            return Err(Error::Validation("baseline depth must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(LowpassModel {
            agg: mean_aggregation_matrix(graph),
            depth,
            head: FcHead::new(feature_dim, hidden, num_classes, &mut rng),
            num_classes,
            feature_dim,
        })
    }

    pub fn pooled_features(&self, x: &GraphSignal) -> Result<DVector<f64>> {
        if x.nrows() != self.agg.nrows() || x.ncols() != self.feature_dim {
            return Err(Error::Validation(format!(
                "input shape {}x{} does not match baseline {}x{}",
                x.nrows(),
                x.ncols(),
                self.agg.nrows(),
                self.feature_dim
            )));
        }
        Ok(readout(&lowpass_forward(&self.agg, x, self.depth)))
    }

    pub fn classify(&self, x: &GraphSignal) -> Result<DVector<f64>> {
        let (_, probs) = self.head.forward(&self.pooled_features(x)?);
        Ok(probs)
    }
}

/// Trains the baseline head with the same SGD recipe. The aggregation stage
/// has no parameters, so pooled features are precomputed once.
pub fn train_lowpass(
    model: &mut LowpassModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let train_set: Vec<&GraphSample> = dataset.train_samples().collect();
    let test_set: Vec<&GraphSample> = dataset.test_samples().collect();
    if train_set.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let train_pooled: Vec<DVector<f64>> = train_set
        .iter()
        .map(|s| model.pooled_features(&s.signal))
        .collect::<Result<_>>()?;
    let test_pooled: Vec<DVector<f64>> = test_set
        .iter()
        .map(|s| model.pooled_features(&s.signal))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = config.learning_rate;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mf = chunk.len() as f64;
            let mut w1_g = DMatrix::zeros(model.head.w1.nrows(), model.head.w1.ncols());
            let mut b1_g = DVector::zeros(model.head.b1.len());
            let mut w2_g = DMatrix::zeros(model.head.w2.nrows(), model.head.w2.ncols());
            let mut b2_g = DVector::zeros(model.head.b2.len());
            for &i in chunk {
                let pooled = &train_pooled[i];
                let (hidden, probs) = model.head.forward(pooled);
                loss_sum += -probs[train_set[i].label].max(1e-15).ln();
                let mut dv = probs;
                dv[train_set[i].label] -= 1.0;
                dv /= mf;
                w2_g += &dv * hidden.transpose();
                b2_g += &dv;
                let mut du = model.head.w2.transpose() * dv;
                for (k, u) in hidden.iter().enumerate() {
                    if *u <= 0.0 {
                        du[k] = 0.0;
                    }
                }
                w1_g += &du * pooled.transpose();
                b1_g += &du;
            }
            model.head.w1 -= lr * w1_g;
            model.head.b1 -= lr * b1_g;
            model.head.w2 -= lr * w2_g;
            model.head.b2 -= lr * b2_g;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let test_acc = if test_set.is_empty() {
            f64::NAN
        } else {
            let mut correct = 0usize;
            for (p, s) in test_pooled.iter().zip(&test_set) {
                let (_, probs) = model.head.forward(p);
                if argmax(&probs) == s.label {
                    correct += 1;
                }
            }
            correct as f64 / test_set.len() as f64
        };
        history.push(EpochRecord { epoch, lr, train_loss, test_acc });
        lr *= config.decay;
    }
    Ok(history)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    graph: serde_json::Value,
    kernel: KernelSpec,
    /// Chebyshev order, or None for the exact transform.
    order: Option<usize>,
    depth: usize,
    feature_dim: usize,
    hidden: usize,
    num_classes: usize,
    batchnorm: bool,
}

fn write_matrix(w: &mut impl IoWrite, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_vector(w: &mut impl IoWrite, v: &DVector<f64>) -> Result<()> {
    for x in v.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64(r: &mut impl IoRead, offset: &mut u64) -> Result<f64> {
    let mut buf = [0u8; 8];
    let start = *offset;
    r.read_exact(&mut buf).map_err(|_| Error::Format {
        offset: start,
        message: "truncated while reading parameter data".into(),
    })?;
    *offset += 8;
    Ok(f64::from_le_bytes(buf))
}

fn read_matrix(r: &mut impl IoRead, rows: usize, cols: usize, offset: &mut u64) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(r, offset)?;
        }
    }
    Ok(m)
}

fn read_vector(r: &mut impl IoRead, len: usize, offset: &mut u64) -> Result<DVector<f64>> {
    let mut v = DVector::zeros(len);
    for i in 0..len {
        v[i] = read_f64(r, offset)?;
    }
    Ok(v)
}

/// Checkpoint: magic "SGWN", version, length-prefixed JSON header with shapes
/// and the transform recipe, then f64 parameter arrays in declaration order.
pub fn save_model(model: &SgwnModel, path: &Path) -> Result<()> {
    let (graph_json, order) = match &model.transform {
        WaveletTransform::Chebyshev(op) => {
            let graph = laplacian_graph_json(op.laplacian().matrix())?;
            (graph, Some(op.order()))
        }
        WaveletTransform::Exact { spectrum, .. } => {
            // Rebuild L = U diag(lambda) U^T and recover the adjacency.
            let u = spectrum.eigenvectors();
            let l = u * DMatrix::from_diagonal(spectrum.eigenvalues()) * u.transpose();
            (laplacian_graph_json(&l)?, None)
        }
    };
    let header = CheckpointHeader {
        graph: graph_json,
        kernel: model.transform.kernel_spec().clone(),
        order,
        depth: model.depth(),
        feature_dim: model.feature_dim,
        hidden: model.head.b1.len(),
        num_classes: model.num_classes,
        batchnorm: model.batchnorm,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for layer in &model.layers {
        write_vector(&mut w, &layer.theta)?;
        if let Some(bn) = &layer.batchnorm {
            write_matrix(&mut w, &bn.gamma)?;
            write_matrix(&mut w, &bn.beta)?;
            write_matrix(&mut w, &bn.running_mean)?;
            write_matrix(&mut w, &bn.running_var)?;
        }
    }
    write_matrix(&mut w, &model.head.w1)?;
    write_vector(&mut w, &model.head.b1)?;
    write_matrix(&mut w, &model.head.w2)?;
    write_vector(&mut w, &model.head.b2)?;
    w.flush()?;
    Ok(())
}

/// Recovers the adjacency (off-diagonal pattern) from a dense Laplacian and
/// serializes it as graph JSON.
fn laplacian_graph_json(l: &DMatrix<f64>) -> Result<serde_json::Value> {
    let n = l.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if l[(i, j)].round() == -1.0 {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::from_edges(n, &edges, None)?.to_json())
}

pub fn load_model(path: &Path) -> Result<SgwnModel> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("checkpoint {} not found", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format {
        offset: 0,
        message: "truncated while reading magic bytes".into(),
    })?;
    offset += 4;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic bytes {magic:?}, expected {MAGIC:?}"),
        });
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(|_| Error::Format {
        offset,
        message: "truncated while reading format version".into(),
    })?;
    offset += 4;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        });
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| Error::Format {
        offset,
        message: "truncated while reading header length".into(),
    })?;
    offset += 8;
    let header_len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|_| Error::Format {
        offset,
        message: "truncated while reading JSON header".into(),
    })?;
    offset += header_len as u64;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Format {
            offset: 16,
            message: format!("invalid JSON header: {e}"),
        })?;

    let graph = Graph::from_json(&header.graph)?;
    let l = laplacian(&graph)?;
    let transform = match header.order {
        Some(order) => WaveletTransform::Chebyshev(Arc::new(build_operator(
            &header.kernel,
            Arc::new(l),
            order,
        )?)),
        None => WaveletTransform::Exact {
            spec: header.kernel.clone(),
            spectrum: Arc::new(eigendecompose(&l)?),
        },
    };
    let mut model = SgwnModel::new(
        transform,
        header.depth,
        header.feature_dim,
        header.hidden,
        header.num_classes,
        header.batchnorm,
        0,
    )?;
    let n = model.transform.num_nodes();
    let b = model.transform.num_bands();
    for layer in &mut model.layers {
        layer.theta = read_vector(&mut r, b * n, &mut offset)?;
        if let Some(bn) = &mut layer.batchnorm {
            bn.gamma = read_matrix(&mut r, n, header.feature_dim, &mut offset)?;
            bn.beta = read_matrix(&mut r, n, header.feature_dim, &mut offset)?;
            bn.running_mean = read_matrix(&mut r, n, header.feature_dim, &mut offset)?;
            bn.running_var = read_matrix(&mut r, n, header.feature_dim, &mut offset)?;
        }
    }
    model.head.w1 = read_matrix(&mut r, header.hidden, header.feature_dim, &mut offset)?;
    model.head.b1 = read_vector(&mut r, header.hidden, &mut offset)?;
    model.head.w2 = read_matrix(&mut r, header.num_classes, header.hidden, &mut offset)?;
    model.head.b2 = read_vector(&mut r, header.num_classes, &mut offset)?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format {
            offset,
            message: "trailing bytes after the last parameter".into(),
        });
    }
    Ok(model)
}

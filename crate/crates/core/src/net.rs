//! Minimal dense feed-forward networks with explicit forward/backward passes.
//!
//! Everything here is plain `Vec<f64>` math: rectifier hidden layers, identity
//! output, He-style uniform init, and a bias-corrected Adam update over flat
//! parameter slices. Batched entry points keep the training loop allocation-free.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectifier with subgradient 0 at the kink (z <= 0 maps to 0).
#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Derivative of [`relu`] evaluated at the pre-activation.
#[inline]
pub fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// A dense affine layer, `z = W x + b`, weights row-major with shape
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    /// He-style uniform init: weights uniform in `[-sqrt(6/fan_in), +sqrt(6/fan_in)]`,
    /// biases zero.
    pub fn he_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let weights = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// `out = W x + b` for one input vector.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, (row, b)) in self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.biases)
            .enumerate()
        {
            let mut acc = *b;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out[o] = acc;
        }
    }

    /// Row-major batched forward: `xs` is `rows x in_dim`, `out` is `rows x out_dim`.
    pub fn forward_batch(&self, xs: &[f64], rows: usize, out: &mut [f64]) {
        debug_assert_eq!(xs.len(), rows * self.in_dim);
        debug_assert_eq!(out.len(), rows * self.out_dim);
        for (x, o) in xs
            .chunks_exact(self.in_dim)
            .zip(out.chunks_exact_mut(self.out_dim))
        {
            self.forward(x, o);
        }
    }

    /// Backward through the affine map for a batch.
    ///
    /// `xs` are the cached inputs, `dzs` the loss gradient w.r.t. the layer's
    /// pre-activation outputs. Weight/bias gradients are accumulated into
    /// `grads`; when `dxs` is given, the gradient w.r.t. the inputs is written
    /// there (overwritten, not accumulated).
    pub fn backward_batch(
        &self,
        xs: &[f64],
        dzs: &[f64],
        rows: usize,
        grads: &mut LayerGrads,
        mut dxs: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(xs.len(), rows * self.in_dim);
        debug_assert_eq!(dzs.len(), rows * self.out_dim);
        if let Some(dx) = dxs.as_deref_mut() {
            dx.fill(0.0);
        }
        for r in 0..rows {
            let x = &xs[r * self.in_dim..(r + 1) * self.in_dim];
            let dz = &dzs[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.d_biases[o] += g;
                let wrow = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let grow = &mut grads.d_weights[o * self.in_dim..(o + 1) * self.in_dim];
                if let Some(dx) = dxs.as_deref_mut() {
                    let dxr = &mut dx[r * self.in_dim..(r + 1) * self.in_dim];
                    for i in 0..self.in_dim {
                        grow[i] += g * x[i];
                        dxr[i] += g * wrow[i];
                    }
                } else {
                    for i in 0..self.in_dim {
                        grow[i] += g * x[i];
                    }
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Gradient buffer mirroring one [`DenseLayer`].
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            d_weights: vec![0.0; layer.weights.len()],
            d_biases: vec![0.0; layer.biases.len()],
        }
    }

    pub fn reset(&mut self) {
        self.d_weights.fill(0.0);
        self.d_biases.fill(0.0);
    }
}

/// A dense feed-forward network: rectifier hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Build a net with He-uniform weights, `layer_dims = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| DenseLayer::he_uniform(w[0], w[1], rng))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// All-zero parameters; handy for fixing outputs in tests.
    pub fn zeroed(layer_dims: &[usize]) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| DenseLayer::zeroed(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    fn validate_dims(layer_dims: &[usize]) -> Result<()> {
        if layer_dims.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least input and output dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Shape(format!(
                "layer dims must be positive, got {layer_dims:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} does not match input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            layer.forward(&cur, &mut next);
            if l != last {
                for v in &mut next {
                    *v = relu(*v);
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Batched forward keeping all pre-activations for a later backward pass.
    pub fn forward_batch_cached(&self, xs: &[f64], rows: usize, cache: &mut NetCache) {
        debug_assert_eq!(xs.len(), rows * self.input_dim());
        cache.rows = rows;
        cache.input.clear();
        cache.input.extend_from_slice(xs);
        cache.pre.resize(self.layers.len(), Vec::new());
        cache.act.resize(self.layers.len(), Vec::new());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = std::mem::take(&mut cache.pre[l]);
            let mut act = std::mem::take(&mut cache.act[l]);
            pre.resize(rows * layer.out_dim, 0.0);
            act.resize(rows * layer.out_dim, 0.0);
            {
                let src: &[f64] = if l == 0 { &cache.input } else { &cache.act[l - 1] };
                layer.forward_batch(src, rows, &mut pre);
            }
            if l != last {
                for (a, &z) in act.iter_mut().zip(&pre) {
                    *a = relu(z);
                }
            } else {
                act.copy_from_slice(&pre);
            }
            cache.pre[l] = pre;
            cache.act[l] = act;
        }
    }

    /// Network output for a batch (identity output layer), borrowed from the cache.
    pub fn output<'c>(&self, cache: &'c NetCache) -> &'c [f64] {
        &cache.act[self.layers.len() - 1]
    }

    /// Batched backward pass.
    ///
    /// `d_out` is the loss gradient w.r.t. the network output. Parameter
    /// gradients accumulate into `grads`; the gradient w.r.t. the network
    /// input is written into `d_input` when provided.
    pub fn backward_batch(
        &self,
        cache: &NetCache,
        d_out: &[f64],
        grads: &mut NetGrads,
        d_input: Option<&mut [f64]>,
        scratch: &mut BackwardScratch,
    ) {
        let rows = cache.rows;
        debug_assert_eq!(d_out.len(), rows * self.output_dim());
        scratch.dz.clear();
        scratch.dz.extend_from_slice(d_out);
        let mut d_input = d_input;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let xs: &[f64] = if l == 0 {
                &cache.input
            } else {
                &cache.act[l - 1]
            };
            let want_dx = l > 0 || d_input.is_some();
            if want_dx {
                scratch.dx.resize(rows * layer.in_dim, 0.0);
            }
            layer.backward_batch(
                xs,
                &scratch.dz,
                rows,
                &mut grads.layers[l],
                want_dx.then_some(scratch.dx.as_mut_slice()),
            );
            if l > 0 {
                // dx becomes dz of the previous layer, gated by its rectifier.
                let prev_pre = &cache.pre[l - 1];
                scratch.dz.resize(rows * layer.in_dim, 0.0);
                for ((dz, &dx), &z) in scratch.dz.iter_mut().zip(&scratch.dx).zip(prev_pre) {
                    *dz = dx * relu_grad(z);
                }
            } else if let Some(di) = d_input.take() {
                di.copy_from_slice(&scratch.dx);
            }
        }
    }

    /// Backward for a single input; returns parameter gradients.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<NetGrads> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream length {} does not match output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if x.iter().chain(upstream).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input to backward".into()));
        }
        let mut cache = NetCache::default();
        self.forward_batch_cached(x, 1, &mut cache);
        let mut grads = NetGrads::zeros_like(self);
        let mut scratch = BackwardScratch::default();
        self.backward_batch(&cache, upstream, &mut grads, None, &mut scratch);
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Append parameters in checkpoint order: weights then biases per layer.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
    }

    /// Read parameters back in the order produced by [`write_flat`].
    /// Returns the number of values consumed.
    ///
    /// [`write_flat`]: DenseNet::write_flat
    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.param_count();
        if src.len() < need {
            return Err(Error::Shape(format!(
                "parameter slice too short: {} < {}",
                src.len(),
                need
            )));
        }
        let mut ofs = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&src[ofs..ofs + nw]);
            ofs += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&src[ofs..ofs + nb]);
            ofs += nb;
        }
        Ok(need)
    }
}

/// Cached activations from a batched forward pass.
#[derive(Debug, Default, Clone)]
pub struct NetCache {
    pub rows: usize,
    pub input: Vec<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activations per layer (output layer is identity).
    pub act: Vec<Vec<f64>>,
}

/// Reusable buffers for [`DenseNet::backward_batch`].
#[derive(Debug, Default)]
pub struct BackwardScratch {
    dz: Vec<f64>,
    dx: Vec<f64>,
}

/// Gradients mirroring a [`DenseNet`].
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.reset();
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.d_weights);
            out.extend_from_slice(&l.d_biases);
        }
    }
}

/// Cosine embedding of a quantile level, projected to the hidden width.
///
/// `embed(tau) = relu(P cosfeat(tau) + b)` with
/// `cosfeat(tau)[i] = cos(pi * i * tau)` for `i = 0..embed_dim-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEmbedding {
    pub embed_dim: usize,
    pub projection: DenseLayer,
}

impl QuantileEmbedding {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, hidden_width: usize, rng: &mut R) -> Result<Self> {
        if embed_dim == 0 || hidden_width == 0 {
            return Err(Error::Shape("embed_dim and hidden width must be positive".into()));
        }
        Ok(Self {
            embed_dim,
            projection: DenseLayer::he_uniform(embed_dim, hidden_width, rng),
        })
    }

    pub fn zeroed(embed_dim: usize, hidden_width: usize) -> Result<Self> {
        if embed_dim == 0 || hidden_width == 0 {
            return Err(Error::Shape("embed_dim and hidden width must be positive".into()));
        }
        Ok(Self {
            embed_dim,
            projection: DenseLayer::zeroed(embed_dim, hidden_width),
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.projection.out_dim
    }

    /// Fill `out` with `cos(pi * i * tau)`, `i = 0..embed_dim-1`, via the
    /// Chebyshev recurrence (two trig calls instead of `embed_dim`).
    pub fn cos_features(tau: f64, out: &mut [f64]) {
        let theta = std::f64::consts::PI * tau;
        let c1 = theta.cos();
        let mut prev2 = 1.0;
        let mut prev1 = c1;
        for (i, o) in out.iter_mut().enumerate() {
            *o = match i {
                0 => 1.0,
                1 => c1,
                _ => {
                    let c = 2.0 * c1 * prev1 - prev2;
                    prev2 = prev1;
                    prev1 = c;
                    c
                }
            };
        }
    }

    /// Embed one quantile level. `tau` must lie in `[0, 1]`.
    pub fn embed(&self, tau: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Domain(format!("tau {tau} outside [0, 1]")));
        }
        let mut feat = vec![0.0; self.embed_dim];
        Self::cos_features(tau, &mut feat);
        let mut out = vec![0.0; self.hidden_width()];
        self.projection.forward(&feat, &mut out);
        for v in &mut out {
            *v = relu(*v);
        }
        Ok(out)
    }

    /// Batched embedding with cached intermediates for the backward pass.
    pub fn embed_batch_cached(&self, taus: &[f64], cache: &mut EmbedCache) {
        let n = taus.len();
        let h = self.hidden_width();
        cache.rows = n;
        cache.features.resize(n * self.embed_dim, 0.0);
        cache.pre.resize(n * h, 0.0);
        cache.act.resize(n * h, 0.0);
        for (i, &tau) in taus.iter().enumerate() {
            Self::cos_features(tau, &mut cache.features[i * self.embed_dim..(i + 1) * self.embed_dim]);
        }
        self.projection.forward_batch(&cache.features, n, &mut cache.pre);
        for (a, &z) in cache.act.iter_mut().zip(&cache.pre) {
            *a = relu(z);
        }
    }

    /// Backward through the rectified projection; accumulates into `grads`.
    pub fn backward_batch(&self, cache: &EmbedCache, d_act: &[f64], grads: &mut LayerGrads, scratch: &mut Vec<f64>) {
        let h = self.hidden_width();
        debug_assert_eq!(d_act.len(), cache.rows * h);
        scratch.resize(cache.rows * h, 0.0);
        for ((dz, &da), &z) in scratch.iter_mut().zip(d_act).zip(&cache.pre) {
            *dz = da * relu_grad(z);
        }
        self.projection
            .backward_batch(&cache.features, scratch, cache.rows, grads, None);
    }

    pub fn param_count(&self) -> usize {
        self.projection.param_count()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.projection.weights);
        out.extend_from_slice(&self.projection.biases);
    }

    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.param_count();
        if src.len() < need {
            return Err(Error::Shape(format!(
                "parameter slice too short: {} < {}",
                src.len(),
                need
            )));
        }
        let nw = self.projection.weights.len();
        self.projection.weights.copy_from_slice(&src[..nw]);
        self.projection.biases.copy_from_slice(&src[nw..need]);
        Ok(need)
    }
}

/// Cached intermediates for [`QuantileEmbedding::embed_batch_cached`].
#[derive(Debug, Default, Clone)]
pub struct EmbedCache {
    pub rows: usize,
    pub features: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(param_len: usize, cfg: AdamConfig) -> Result<Self> {
        if cfg.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", cfg.lr)));
        }
        Ok(Self {
            cfg,
            step_count: 0,
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
        })
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam shapes: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.cfg.beta1.powi(t);
        let c2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.cfg.beta1 * self.first_moment[i] + (1.0 - self.cfg.beta1) * g;
            let v = self.cfg.beta2 * self.second_moment[i] + (1.0 - self.cfg.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
        }
        Ok(())
    }
}

/// Write parameters as a flat little-endian f32 blob.
pub fn write_f32_blob(path: &std::path::Path, params: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(params.len() * 4);
    for &p in params {
        bytes.extend_from_slice(&(p as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a flat little-endian f32 blob back into f64 parameters.
pub fn read_f32_blob(path: &std::path::Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "parameter blob length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

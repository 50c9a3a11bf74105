//! Training for the four estimator variants: DDQN and IQN value heads, each
//! with or without the conservative (CQL) penalty.
//!
//! Both kinds share the same recipe: stratified minibatches from the offline
//! dataset, relabeled rewards, a target copy of the network for bootstrap
//! values with double-estimator action selection through the online net, Adam,
//! and return supports of [-1, 0] (D) or [0, 1] (R). Targets are clamped to
//! the support during training; raw online outputs are never clamped inside
//! the loss so gradients stay live. Evaluation-time outputs are clamped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{is_outcome_terminal, relabel, OfflineDataset, RewardMode, Transition};
use crate::error::{Error, Result};
use crate::lifegate::hex_string;
use crate::net::{
    read_f32_blob, write_f32_blob, AdamConfig, AdamState, BackwardScratch, DenseNet, EmbedCache,
    LayerGrads, NetCache, NetGrads, QuantileEmbedding,
};

/// Estimator architecture of a value head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Ddqn,
    Iqn,
}

/// Target-network refresh schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetUpdate {
    /// Copy the online parameters every `every` gradient steps.
    Hard { every: u32 },
    /// Exponential moving average toward the online parameters,
    /// `target += rate * (online - target)`, every `every` steps.
    Ema { rate: f64, every: u32 },
}

/// Hyperparameters for [`train`]. Defaults follow the gridworld experiment
/// settings: two hidden layers of 32, N = N' = 8 training particles,
/// K = 1000 evaluation particles, lr 1e-3, gamma fixed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub action_count: usize,
    pub n_online_taus: usize,
    pub n_target_taus: usize,
    pub k_eval: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub target_update: TargetUpdate,
    pub huber_kappa: f64,
    pub neg_terminal_frac: f64,
    /// Apply the CQL penalty per sampled quantile instead of on tau-averaged
    /// action values.
    pub cql_per_tau: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 32],
            embed_dim: 64,
            action_count: 5,
            n_online_taus: 8,
            n_target_taus: 8,
            k_eval: 1000,
            beta: 0.1,
            gamma: 1.0,
            lr: 1e-3,
            batch_size: 32,
            epochs: 50,
            target_update: TargetUpdate::Hard { every: 1000 },
            huber_kappa: 1.0,
            neg_terminal_frac: 0.25,
            cql_per_tau: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, use_cql: bool) -> Result<()> {
        if self.gamma != 1.0 {
            return Err(Error::Config(format!(
                "gamma must be 1 in both relabeled MDPs, got {}",
                self.gamma
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.huber_kappa <= 0.0 {
            return Err(Error::Config("huber_kappa must be > 0".into()));
        }
        if self.n_online_taus == 0 || self.n_target_taus == 0 || self.k_eval == 0 {
            return Err(Error::Config("particle counts must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("need at least one hidden layer".into()));
        }
        if self.action_count == 0 {
            return Err(Error::Config("action count must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.neg_terminal_frac) {
            return Err(Error::Config(format!(
                "neg_terminal_frac {} outside [0, 1)",
                self.neg_terminal_frac
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::Config("beta must be >= 0".into()));
        }
        if self.beta > 0.0 && !use_cql {
            return Err(Error::Config(
                "beta > 0 requires the CQL penalty to be enabled".into(),
            ));
        }
        match self.target_update {
            TargetUpdate::Hard { every: 0 } => {
                return Err(Error::Config("hard update period must be >= 1".into()))
            }
            TargetUpdate::Ema { rate, every } => {
                if every == 0 {
                    return Err(Error::Config("ema update period must be >= 1".into()));
                }
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::Config(format!("ema rate {rate} outside (0, 1]")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Hash of the canonical JSON form, recorded in checkpoints and manifests.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("train config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

/// A trainable Q or Z estimator with its target copy.
#[derive(Debug, Clone)]
pub struct ValueHead {
    pub kind: HeadKind,
    pub mode: RewardMode,
    pub online: DenseNet,
    pub online_embed: Option<QuantileEmbedding>,
    pub target: DenseNet,
    pub target_embed: Option<QuantileEmbedding>,
    pub support: (f64, f64),
    pub action_count: usize,
}

impl ValueHead {
    pub fn new<R: Rng + ?Sized>(
        kind: HeadKind,
        mode: RewardMode,
        state_dim: usize,
        hidden_dims: &[usize],
        embed_dim: usize,
        action_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden_dims.is_empty() {
            return Err(Error::Config("value heads need at least one hidden layer".into()));
        }
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(state_dim);
        dims.extend_from_slice(hidden_dims);
        dims.push(action_count);
        let online = DenseNet::new(&dims, rng)?;
        let online_embed = match kind {
            HeadKind::Iqn => Some(QuantileEmbedding::new(embed_dim, hidden_dims[0], rng)?),
            HeadKind::Ddqn => None,
        };
        let target = online.clone();
        let target_embed = online_embed.clone();
        Ok(Self {
            kind,
            mode,
            online,
            online_embed,
            target,
            target_embed,
            support: mode.support(),
            action_count,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.support.0, self.support.1)
    }

    pub fn param_count(&self) -> usize {
        self.online.param_count() + self.online_embed.as_ref().map_or(0, |e| e.param_count())
    }

    /// Online parameters in checkpoint order: trunk layers (weights then
    /// biases), then the quantile projection for IQN heads.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.online.write_flat(&mut out);
        if let Some(e) = &self.online_embed {
            e.write_flat(&mut out);
        }
        out
    }

    pub fn set_flat_params(&mut self, src: &[f64]) -> Result<()> {
        let used = self.online.read_flat(src)?;
        if let Some(e) = &mut self.online_embed {
            e.read_flat(&src[used..])?;
        }
        Ok(())
    }

    fn target_flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.target.write_flat(&mut out);
        if let Some(e) = &self.target_embed {
            e.write_flat(&mut out);
        }
        out
    }

    fn set_target_flat_params(&mut self, src: &[f64]) -> Result<()> {
        let used = self.target.read_flat(src)?;
        if let Some(e) = &mut self.target_embed {
            e.read_flat(&src[used..])?;
        }
        Ok(())
    }

    /// Point estimates per action from the online net, clamped to the support.
    /// DDQN heads only.
    pub fn point_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        if self.kind != HeadKind::Ddqn {
            return Err(Error::Kind("point_values requires a DDQN head".into()));
        }
        let mut out = self.online.forward(state)?;
        for v in &mut out {
            *v = self.clamp(*v);
        }
        Ok(out)
    }

    /// Per-tau, per-action quantile estimates from the online net, clamped to
    /// the support. IQN heads only; values for ascending taus need not be
    /// monotone (no crossing constraint is imposed).
    pub fn iqn_values(&self, state: &[f64], taus: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.kind != HeadKind::Iqn {
            return Err(Error::Kind("iqn_values requires an IQN head".into()));
        }
        for &t in taus {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Domain(format!("tau {t} outside [0, 1]")));
            }
        }
        if state.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state length {} does not match input dim {}",
                state.len(),
                self.state_dim()
            )));
        }
        let embed = self.online_embed.as_ref().expect("iqn head has embedding");
        let mut cache = IqnCache::default();
        iqn_forward(&self.online, embed, state, 1, taus, taus.len(), &mut cache);
        let out = cache.output();
        Ok((0..taus.len())
            .map(|r| {
                (0..self.action_count)
                    .map(|a| self.clamp(out[r * self.action_count + a]))
                    .collect()
            })
            .collect())
    }

    /// Flat evaluation of online quantiles for one state, clamped to the
    /// support; `out` receives `taus.len() x action_count` row-major values.
    pub fn eval_quantiles_into(
        &self,
        state: &[f64],
        taus: &[f64],
        cache: &mut IqnCache,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if self.kind != HeadKind::Iqn {
            return Err(Error::Kind("quantile evaluation requires an IQN head".into()));
        }
        let embed = self.online_embed.as_ref().expect("iqn head has embedding");
        iqn_forward(&self.online, embed, state, 1, taus, taus.len(), cache);
        let raw = cache.output();
        out.clear();
        out.extend(raw.iter().map(|&v| self.clamp(v)));
        Ok(())
    }
}

/// Per-batch loss breakdown; `total` is exactly `rl + beta * cql`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub step: usize,
    pub rl_loss: f64,
    pub cql_loss: f64,
    pub total: f64,
}

/// Loss series for one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub reports: Vec<LossReport>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("step,rl_loss,cql_loss,total\n");
        for r in &self.reports {
            out.push_str(&format!("{},{},{},{}\n", r.step, r.rl_loss, r.cql_loss, r.total));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Asymmetric quantile Huber loss, averaged over every (pred, target) pair,
/// with the gradient w.r.t. the predictions.
///
/// Per pair with residual `u = target - pred`:
/// `rho_tau(u) = |tau - 1{u < 0}| * huber_kappa(u) / kappa`.
pub fn quantile_huber_loss(
    taus: &[f64],
    preds: &[f64],
    targets: &[f64],
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    if kappa <= 0.0 {
        return Err(Error::Config("kappa must be > 0".into()));
    }
    if taus.len() != preds.len() {
        return Err(Error::Shape(format!(
            "{} taus for {} predictions",
            taus.len(),
            preds.len()
        )));
    }
    if preds.is_empty() || targets.is_empty() {
        return Err(Error::Shape("empty prediction or target set".into()));
    }
    let scale = 1.0 / (preds.len() * targets.len()) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; preds.len()];
    for (i, (&tau, &p)) in taus.iter().zip(preds).enumerate() {
        for &t in targets {
            let u = t - p;
            let weight = if u < 0.0 { (tau - 1.0).abs() } else { tau };
            let (huber, dhuber) = if u.abs() <= kappa {
                (0.5 * u * u, u)
            } else {
                (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
            };
            loss += weight * huber / kappa * scale;
            // d/dp = -weight * dhuber/du / kappa
            grad[i] -= weight * dhuber / kappa * scale;
        }
    }
    Ok((loss, grad))
}

/// Squared TD error averaged over a batch, with the gradient w.r.t. the
/// predictions (targets are constants).
pub fn td_loss(preds: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; preds.len()];
    for (i, (&p, &t)) in preds.iter().zip(targets).enumerate() {
        let d = p - t;
        loss += d * d / n;
        grad[i] = 2.0 * d / n;
    }
    Ok((loss, grad))
}

/// Conservative penalty `logsumexp(q) - q[data_action]`, with its gradient
/// w.r.t. the action values (`softmax(q) - onehot(data_action)`).
pub fn cql_penalty(q_per_action: &[f64], data_action: usize) -> Result<(f64, Vec<f64>)> {
    if q_per_action.is_empty() {
        return Err(Error::Domain("empty action-value vector".into()));
    }
    if data_action >= q_per_action.len() {
        return Err(Error::Domain(format!(
            "action index {data_action} outside [0, {})",
            q_per_action.len()
        )));
    }
    let max = q_per_action.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = q_per_action.iter().map(|&q| (q - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let penalty = lse - q_per_action[data_action];
    let mut grad: Vec<f64> = q_per_action
        .iter()
        .map(|&q| (q - max).exp() / sum_exp)
        .collect();
    grad[data_action] -= 1.0;
    Ok((penalty, grad))
}

/// Target particle values for one transition: the relabeled reward for
/// outcome terminals, otherwise `clamp(reward + gamma * Z_target(s', a*))`
/// per target tau, with the bootstrap action chosen by the online net's mean
/// value at `s'` over the same taus (double-estimator rule).
pub fn distributional_target(
    head: &ValueHead,
    transition: &Transition,
    mode: RewardMode,
    target_taus: &[f64],
) -> Result<Vec<f64>> {
    if head.kind != HeadKind::Iqn {
        return Err(Error::Kind("distributional targets require an IQN head".into()));
    }
    let reward = relabel(transition, mode);
    if is_outcome_terminal(transition) {
        return Ok(vec![reward; target_taus.len()]);
    }
    let a = head.action_count;
    let mut cache = IqnCache::default();

    // Online pass at s' selects the bootstrap action by mean value.
    let online_embed = head.online_embed.as_ref().expect("iqn head has embedding");
    iqn_forward(
        &head.online,
        online_embed,
        &transition.next_state,
        1,
        target_taus,
        target_taus.len(),
        &mut cache,
    );
    let mut means = vec![0.0; a];
    for row in cache.output().chunks_exact(a) {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let best = argmax(&means);

    let target_embed = head.target_embed.as_ref().expect("iqn head has embedding");
    iqn_forward(
        &head.target,
        target_embed,
        &transition.next_state,
        1,
        target_taus,
        target_taus.len(),
        &mut cache,
    );
    Ok(cache
        .output()
        .chunks_exact(a)
        .map(|row| head.clamp(reward + row[best]))
        .collect())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// IQN composite forward/backward
// ---------------------------------------------------------------------------

/// Cached intermediates of the IQN composite:
/// `out = upper(relu(L0(s)) .* embed(tau))`.
#[derive(Debug, Default, Clone)]
pub struct IqnCache {
    n_states: usize,
    taus_per: usize,
    states: Vec<f64>,
    psi_pre: Vec<f64>,
    psi: Vec<f64>,
    embed: EmbedCache,
    merged: Vec<f64>,
    /// Pre/post activations of trunk layers 1.., indexed by trunk layer.
    upper_pre: Vec<Vec<f64>>,
    upper_act: Vec<Vec<f64>>,
}

impl IqnCache {
    /// Final layer output, `rows x action_count` row-major.
    pub fn output(&self) -> &[f64] {
        self.upper_act.last().expect("forward pass ran")
    }
}

/// Forward the IQN composite for `n_states` states, each evaluated at
/// `taus_per` quantile levels (`taus` has length `n_states * taus_per`,
/// grouped by state). The state trunk's first layer runs once per state; the
/// merged stream runs once per (state, tau).
pub fn iqn_forward(
    trunk: &DenseNet,
    embed: &QuantileEmbedding,
    states: &[f64],
    n_states: usize,
    taus: &[f64],
    taus_per: usize,
    cache: &mut IqnCache,
) {
    debug_assert_eq!(taus.len(), n_states * taus_per);
    let rows = n_states * taus_per;
    let hidden = trunk.layers[0].out_dim;
    cache.n_states = n_states;
    cache.taus_per = taus_per;
    cache.states.clear();
    cache.states.extend_from_slice(states);

    cache.psi_pre.resize(n_states * hidden, 0.0);
    cache.psi.resize(n_states * hidden, 0.0);
    trunk.layers[0].forward_batch(states, n_states, &mut cache.psi_pre);
    for (a, &z) in cache.psi.iter_mut().zip(&cache.psi_pre) {
        *a = crate::net::relu(z);
    }

    embed.embed_batch_cached(taus, &mut cache.embed);

    cache.merged.resize(rows * hidden, 0.0);
    for r in 0..rows {
        let s = r / taus_per;
        let psi = &cache.psi[s * hidden..(s + 1) * hidden];
        let phi = &cache.embed.act[r * hidden..(r + 1) * hidden];
        let m = &mut cache.merged[r * hidden..(r + 1) * hidden];
        for i in 0..hidden {
            m[i] = psi[i] * phi[i];
        }
    }

    let n_layers = trunk.layers.len();
    cache.upper_pre.resize(n_layers, Vec::new());
    cache.upper_act.resize(n_layers, Vec::new());
    for l in 1..n_layers {
        let layer = &trunk.layers[l];
        let mut pre = std::mem::take(&mut cache.upper_pre[l]);
        let mut act = std::mem::take(&mut cache.upper_act[l]);
        pre.resize(rows * layer.out_dim, 0.0);
        act.resize(rows * layer.out_dim, 0.0);
        {
            let src: &[f64] = if l == 1 { &cache.merged } else { &cache.upper_act[l - 1] };
            layer.forward_batch(src, rows, &mut pre);
        }
        if l + 1 != n_layers {
            for (a, &z) in act.iter_mut().zip(&pre) {
                *a = crate::net::relu(z);
            }
        } else {
            act.copy_from_slice(&pre);
        }
        cache.upper_pre[l] = pre;
        cache.upper_act[l] = act;
    }
}

/// Reusable buffers for [`iqn_backward`].
#[derive(Debug, Default)]
pub struct IqnScratch {
    dz: Vec<f64>,
    dx: Vec<f64>,
    d_merged: Vec<f64>,
    d_phi: Vec<f64>,
    d_psi: Vec<f64>,
    d_psi_pre: Vec<f64>,
    embed_dz: Vec<f64>,
}

/// Backward through the IQN composite given the loss gradient w.r.t. the
/// final output. Accumulates into `trunk_grads` and `embed_grads`.
pub fn iqn_backward(
    trunk: &DenseNet,
    embed: &QuantileEmbedding,
    cache: &IqnCache,
    d_out: &[f64],
    trunk_grads: &mut NetGrads,
    embed_grads: &mut LayerGrads,
    scratch: &mut IqnScratch,
) {
    let rows = cache.n_states * cache.taus_per;
    let hidden = trunk.layers[0].out_dim;
    let n_layers = trunk.layers.len();
    debug_assert_eq!(d_out.len(), rows * trunk.output_dim());

    scratch.dz.clear();
    scratch.dz.extend_from_slice(d_out);
    for l in (1..n_layers).rev() {
        let layer = &trunk.layers[l];
        let src: &[f64] = if l == 1 { &cache.merged } else { &cache.upper_act[l - 1] };
        scratch.dx.resize(rows * layer.in_dim, 0.0);
        layer.backward_batch(
            src,
            &scratch.dz,
            rows,
            &mut trunk_grads.layers[l],
            Some(scratch.dx.as_mut_slice()),
        );
        if l > 1 {
            let prev_pre = &cache.upper_pre[l - 1];
            scratch.dz.resize(rows * layer.in_dim, 0.0);
            for ((dz, &dx), &z) in scratch.dz.iter_mut().zip(&scratch.dx).zip(prev_pre) {
                *dz = dx * crate::net::relu_grad(z);
            }
        } else {
            scratch.d_merged.resize(rows * hidden, 0.0);
            scratch.d_merged.copy_from_slice(&scratch.dx);
        }
    }

    // Split the product: d_phi = d_merged .* psi, d_psi = sum over taus of
    // d_merged .* phi.
    scratch.d_phi.resize(rows * hidden, 0.0);
    scratch.d_psi.resize(cache.n_states * hidden, 0.0);
    scratch.d_psi.fill(0.0);
    for r in 0..rows {
        let s = r / cache.taus_per;
        let psi = &cache.psi[s * hidden..(s + 1) * hidden];
        let phi = &cache.embed.act[r * hidden..(r + 1) * hidden];
        let dm = &scratch.d_merged[r * hidden..(r + 1) * hidden];
        let dphi = &mut scratch.d_phi[r * hidden..(r + 1) * hidden];
        let dpsi = &mut scratch.d_psi[s * hidden..(s + 1) * hidden];
        for i in 0..hidden {
            dphi[i] = dm[i] * psi[i];
            dpsi[i] += dm[i] * phi[i];
        }
    }

    embed.backward_batch(&cache.embed, &scratch.d_phi, embed_grads, &mut scratch.embed_dz);

    scratch.d_psi_pre.resize(cache.n_states * hidden, 0.0);
    for ((dz, &d), &z) in scratch
        .d_psi_pre
        .iter_mut()
        .zip(&scratch.d_psi)
        .zip(&cache.psi_pre)
    {
        *dz = d * crate::net::relu_grad(z);
    }
    trunk.layers[0].backward_batch(
        &cache.states,
        &scratch.d_psi_pre,
        cache.n_states,
        &mut trunk_grads.layers[0],
        None,
    );
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Train one value head over the relabeled dataset.
///
/// Runs `epochs * max(1, len/batch)` stratified-minibatch steps, each with a
/// quantile-Huber (IQN) or squared TD (DDQN) loss, plus `beta` times the CQL
/// penalty when enabled, an Adam update, and the scheduled target refresh.
/// Deterministic for a fixed config and seed.
pub fn train(
    ds: &OfflineDataset,
    mode: RewardMode,
    cfg: &TrainConfig,
    kind: HeadKind,
    use_cql: bool,
) -> Result<(ValueHead, TrainLog)> {
    cfg.validate(use_cql)?;
    if ds.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let state_dim = ds.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = ValueHead::new(
        kind,
        mode,
        state_dim,
        &cfg.hidden_dims,
        cfg.embed_dim,
        cfg.action_count,
        &mut rng,
    )?;
    let mut adam = AdamState::new(head.param_count(), AdamConfig::with_lr(cfg.lr))?;
    let mut log = TrainLog::default();
    let steps_per_epoch = (ds.len() / cfg.batch_size).max(1);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut scratch = StepScratch::new(&head);

    for step in 1..=total_steps {
        let batch = ds.stratified_minibatch(cfg.batch_size, cfg.neg_terminal_frac, &mut rng)?;
        let report = match kind {
            HeadKind::Ddqn => ddqn_step(ds, &batch, mode, cfg, use_cql, &mut head, &mut scratch)?,
            HeadKind::Iqn => {
                iqn_step(ds, &batch, mode, cfg, use_cql, &mut head, &mut rng, &mut scratch)?
            }
        };
        apply_adam(&mut head, &mut adam, &scratch.flat_grads)?;
        maybe_update_target(&mut head, cfg.target_update, step as u32)?;
        log.reports.push(LossReport {
            step,
            rl_loss: report.0,
            cql_loss: report.1,
            total: report.0 + cfg.beta * report.1,
        });
    }
    Ok((head, log))
}

struct StepScratch {
    states: Vec<f64>,
    next_states: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    online_cache: NetCache,
    select_cache: NetCache,
    target_cache: NetCache,
    online_iqn: IqnCache,
    select_iqn: IqnCache,
    target_iqn: IqnCache,
    iqn_scratch: IqnScratch,
    net_scratch: BackwardScratch,
    d_out: Vec<f64>,
    taus_online: Vec<f64>,
    taus_target: Vec<f64>,
    trunk_grads: NetGrads,
    embed_grads: LayerGrads,
    flat_grads: Vec<f64>,
}

impl StepScratch {
    fn new(head: &ValueHead) -> Self {
        Self {
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
            online_cache: NetCache::default(),
            select_cache: NetCache::default(),
            target_cache: NetCache::default(),
            online_iqn: IqnCache::default(),
            select_iqn: IqnCache::default(),
            target_iqn: IqnCache::default(),
            iqn_scratch: IqnScratch::default(),
            net_scratch: BackwardScratch::default(),
            d_out: Vec::new(),
            taus_online: Vec::new(),
            taus_target: Vec::new(),
            trunk_grads: NetGrads::zeros_like(&head.online),
            embed_grads: head
                .online_embed
                .as_ref()
                .map(|e| LayerGrads::zeros_like(&e.projection))
                .unwrap_or(LayerGrads {
                    d_weights: Vec::new(),
                    d_biases: Vec::new(),
                }),
            flat_grads: Vec::new(),
        }
    }

    fn gather(&mut self, ds: &OfflineDataset, batch: &[(u32, u32)], mode: RewardMode) {
        self.states.clear();
        self.next_states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.terminal.clear();
        for &addr in batch {
            let t = ds.transition(addr);
            self.states.extend_from_slice(&t.state);
            self.next_states.extend_from_slice(&t.next_state);
            self.actions.push(t.action);
            self.rewards.push(relabel(t, mode));
            self.terminal.push(is_outcome_terminal(t));
        }
    }
}

fn apply_adam(head: &mut ValueHead, adam: &mut AdamState, flat_grads: &[f64]) -> Result<()> {
    let mut params = head.flat_params();
    adam.step(&mut params, flat_grads)?;
    head.set_flat_params(&params)
}

fn maybe_update_target(head: &mut ValueHead, schedule: TargetUpdate, step: u32) -> Result<()> {
    match schedule {
        TargetUpdate::Hard { every } => {
            if step.is_multiple_of(every) {
                head.target = head.online.clone();
                head.target_embed = head.online_embed.clone();
            }
        }
        TargetUpdate::Ema { rate, every } => {
            if step.is_multiple_of(every) {
                let online = head.flat_params();
                let mut target = head.target_flat_params();
                for (t, o) in target.iter_mut().zip(&online) {
                    *t += rate * (o - *t);
                }
                head.set_target_flat_params(&target)?;
            }
        }
    }
    Ok(())
}

/// One DDQN batch step; returns (rl_loss, cql_loss) and leaves the flattened
/// gradient in the scratch buffer.
fn ddqn_step(
    ds: &OfflineDataset,
    batch: &[(u32, u32)],
    mode: RewardMode,
    cfg: &TrainConfig,
    use_cql: bool,
    head: &mut ValueHead,
    s: &mut StepScratch,
) -> Result<(f64, f64)> {
    s.gather(ds, batch, mode);
    let b = batch.len();
    let a = head.action_count;

    head.online
        .forward_batch_cached(&s.next_states, b, &mut s.select_cache);
    head.target
        .forward_batch_cached(&s.next_states, b, &mut s.target_cache);
    head.online.forward_batch_cached(&s.states, b, &mut s.online_cache);

    let q_next_online = head.online.output(&s.select_cache).to_vec();
    let q_next_target = head.target.output(&s.target_cache);
    let q_online = head.online.output(&s.online_cache);

    s.d_out.resize(b * a, 0.0);
    s.d_out.fill(0.0);
    let mut rl_loss = 0.0;
    let mut cql_loss = 0.0;
    for i in 0..b {
        if s.actions[i] >= a {
            return Err(Error::Domain(format!("action index {} out of range", s.actions[i])));
        }
        let target = if s.terminal[i] {
            s.rewards[i]
        } else {
            let best = argmax(&q_next_online[i * a..(i + 1) * a]);
            head.clamp(s.rewards[i] + cfg.gamma * q_next_target[i * a + best])
        };
        let pred = q_online[i * a + s.actions[i]];
        let d = pred - target;
        rl_loss += d * d / b as f64;
        s.d_out[i * a + s.actions[i]] += 2.0 * d / b as f64;

        if use_cql {
            let (pen, dq) = cql_penalty(&q_online[i * a..(i + 1) * a], s.actions[i])?;
            cql_loss += pen / b as f64;
            for (j, g) in dq.iter().enumerate() {
                s.d_out[i * a + j] += cfg.beta * g / b as f64;
            }
        }
    }

    s.trunk_grads.reset();
    head.online.backward_batch(
        &s.online_cache,
        &s.d_out,
        &mut s.trunk_grads,
        None,
        &mut s.net_scratch,
    );
    s.flat_grads.clear();
    s.trunk_grads.write_flat(&mut s.flat_grads);
    Ok((rl_loss, cql_loss))
}

/// One IQN batch step; returns (rl_loss, cql_loss) and leaves the flattened
/// gradient in the scratch buffer.
#[allow(clippy::too_many_arguments)]
fn iqn_step(
    ds: &OfflineDataset,
    batch: &[(u32, u32)],
    mode: RewardMode,
    cfg: &TrainConfig,
    use_cql: bool,
    head: &mut ValueHead,
    rng: &mut ChaCha8Rng,
    s: &mut StepScratch,
) -> Result<(f64, f64)> {
    s.gather(ds, batch, mode);
    let b = batch.len();
    let a = head.action_count;
    let n = cfg.n_online_taus;
    let n_t = cfg.n_target_taus;

    s.taus_online.resize(b * n, 0.0);
    for t in s.taus_online.iter_mut() {
        *t = rng.gen::<f64>();
    }
    s.taus_target.resize(b * n_t, 0.0);
    for t in s.taus_target.iter_mut() {
        *t = rng.gen::<f64>();
    }

    let online_embed = head.online_embed.as_ref().expect("iqn head has embedding");
    let target_embed = head.target_embed.as_ref().expect("iqn head has embedding");

    // Bootstrap action selection: online net at s' over the target taus,
    // mean per action, argmax.
    iqn_forward(
        &head.online,
        online_embed,
        &s.next_states,
        b,
        &s.taus_target,
        n_t,
        &mut s.select_iqn,
    );
    // Target particles at s' under the target net, same taus.
    iqn_forward(
        &head.target,
        target_embed,
        &s.next_states,
        b,
        &s.taus_target,
        n_t,
        &mut s.target_iqn,
    );
    // Online particles at s under the online taus (the differentiated pass).
    iqn_forward(
        &head.online,
        online_embed,
        &s.states,
        b,
        &s.taus_online,
        n,
        &mut s.online_iqn,
    );

    let z_select = s.select_iqn.output();
    let z_target = s.target_iqn.output();
    let z_online = s.online_iqn.output();

    s.d_out.resize(b * n * a, 0.0);
    s.d_out.fill(0.0);
    let mut rl_loss = 0.0;
    let mut cql_loss = 0.0;
    let pair_scale = 1.0 / (n * n_t) as f64;
    let kappa = cfg.huber_kappa;

    for i in 0..b {
        let ai = s.actions[i];
        if ai >= a {
            return Err(Error::Domain(format!("action index {ai} out of range")));
        }

        // Target sample set for this transition.
        let mut targets = [0.0; 64];
        let targets = &mut targets[..n_t.min(64)];
        let mut targets_vec;
        let targets: &mut [f64] = if n_t <= 64 {
            targets
        } else {
            targets_vec = vec![0.0; n_t];
            &mut targets_vec
        };
        if s.terminal[i] {
            targets.fill(s.rewards[i]);
        } else {
            let mut means = [0.0; 16];
            let means = &mut means[..a.min(16)];
            let mut means_vec;
            let means: &mut [f64] = if a <= 16 {
                means
            } else {
                means_vec = vec![0.0; a];
                &mut means_vec
            };
            means.fill(0.0);
            for j in 0..n_t {
                let row = &z_select[(i * n_t + j) * a..(i * n_t + j + 1) * a];
                for (m, &v) in means.iter_mut().zip(row) {
                    *m += v;
                }
            }
            let best = argmax(means);
            for (j, t) in targets.iter_mut().enumerate() {
                *t = head.clamp(s.rewards[i] + cfg.gamma * z_target[(i * n_t + j) * a + best]);
            }
        }

        // Quantile Huber over all (online tau, target sample) pairs.
        for ni in 0..n {
            let tau = s.taus_online[i * n + ni];
            let pred = z_online[(i * n + ni) * a + ai];
            let mut dpred = 0.0;
            for &t in targets.iter() {
                let u = t - pred;
                let weight = if u < 0.0 { (tau - 1.0).abs() } else { tau };
                let (huber, dhuber) = if u.abs() <= kappa {
                    (0.5 * u * u, u)
                } else {
                    (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
                };
                rl_loss += weight * huber / kappa * pair_scale / b as f64;
                dpred -= weight * dhuber / kappa * pair_scale / b as f64;
            }
            s.d_out[(i * n + ni) * a + ai] += dpred;
        }

        if use_cql {
            if cfg.cql_per_tau {
                for ni in 0..n {
                    let row = &z_online[(i * n + ni) * a..(i * n + ni + 1) * a];
                    let (pen, dq) = cql_penalty(row, ai)?;
                    cql_loss += pen / (b * n) as f64;
                    for (j, g) in dq.iter().enumerate() {
                        s.d_out[(i * n + ni) * a + j] += cfg.beta * g / (b * n) as f64;
                    }
                }
            } else {
                // Penalty on tau-averaged action values.
                let mut q = vec![0.0; a];
                for ni in 0..n {
                    let row = &z_online[(i * n + ni) * a..(i * n + ni + 1) * a];
                    for (m, &v) in q.iter_mut().zip(row) {
                        *m += v / n as f64;
                    }
                }
                let (pen, dq) = cql_penalty(&q, ai)?;
                cql_loss += pen / b as f64;
                for ni in 0..n {
                    for (j, g) in dq.iter().enumerate() {
                        s.d_out[(i * n + ni) * a + j] += cfg.beta * g / (b * n) as f64;
                    }
                }
            }
        }
    }

    s.trunk_grads.reset();
    s.embed_grads.reset();
    iqn_backward(
        &head.online,
        online_embed,
        &s.online_iqn,
        &s.d_out,
        &mut s.trunk_grads,
        &mut s.embed_grads,
        &mut s.iqn_scratch,
    );
    s.flat_grads.clear();
    s.trunk_grads.write_flat(&mut s.flat_grads);
    s.flat_grads.extend_from_slice(&s.embed_grads.d_weights);
    s.flat_grads.extend_from_slice(&s.embed_grads.d_biases);
    Ok((rl_loss, cql_loss))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Sidecar manifest for a head checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadManifest {
    pub version: u32,
    pub kind: HeadKind,
    pub mode: RewardMode,
    pub support: (f64, f64),
    pub action_count: usize,
    pub layer_dims: Vec<usize>,
    pub embed_dim: Option<usize>,
    pub param_count: usize,
    pub use_cql: bool,
    pub env_hash: String,
    pub cfg_hash: String,
    pub train: TrainConfig,
}

/// Write `base.json` (manifest) and `base.bin` (flat little-endian f32 online
/// parameters, trunk layers then the quantile projection, weights before
/// biases per layer).
pub fn save_head(
    head: &ValueHead,
    cfg: &TrainConfig,
    use_cql: bool,
    env_hash: &str,
    base: &std::path::Path,
) -> Result<()> {
    let manifest = HeadManifest {
        version: 1,
        kind: head.kind,
        mode: head.mode,
        support: head.support,
        action_count: head.action_count,
        layer_dims: head.online.layer_dims().to_vec(),
        embed_dim: head.online_embed.as_ref().map(|e| e.embed_dim),
        param_count: head.param_count(),
        use_cql,
        env_hash: env_hash.to_string(),
        cfg_hash: cfg.content_hash(),
        train: cfg.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(base.with_extension("json"), json)?;
    write_f32_blob(&base.with_extension("bin"), &head.flat_params())?;
    Ok(())
}

/// Load a head checkpoint written by [`save_head`]. The target copy is set
/// equal to the online net.
pub fn load_head(base: &std::path::Path) -> Result<(ValueHead, HeadManifest)> {
    let text = std::fs::read_to_string(base.with_extension("json"))?;
    let manifest: HeadManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad head manifest: {e}")))?;
    let dims = &manifest.layer_dims;
    if dims.len() < 3 {
        return Err(Error::Format("head manifest has too few layers".into()));
    }
    let hidden = &dims[1..dims.len() - 1];
    let mut head = ValueHead {
        kind: manifest.kind,
        mode: manifest.mode,
        online: DenseNet::zeroed(dims)?,
        online_embed: match manifest.kind {
            HeadKind::Iqn => {
                let embed_dim = manifest
                    .embed_dim
                    .ok_or_else(|| Error::Format("iqn manifest missing embed_dim".into()))?;
                Some(QuantileEmbedding::zeroed(embed_dim, hidden[0])?)
            }
            HeadKind::Ddqn => None,
        },
        target: DenseNet::zeroed(dims)?,
        target_embed: None,
        support: manifest.support,
        action_count: manifest.action_count,
    };
    let params = read_f32_blob(&base.with_extension("bin"))?;
    if params.len() != manifest.param_count {
        return Err(Error::Format(format!(
            "parameter blob has {} values, manifest says {}",
            params.len(),
            manifest.param_count
        )));
    }
    head.set_flat_params(&params)?;
    head.target = head.online.clone();
    head.target_embed = head.online_embed.clone();
    Ok((head, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrajectoryRecord;
    use crate::lifegate::Outcome;

    fn chain_dataset(outcome: Outcome, n_trajs: usize, len: usize, seed: u64) -> OfflineDataset {
        // A corridor of `len` cells; every action advances one cell; the last
        // transition terminates with the given outcome. Features follow the
        // gridworld scaling.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feat = |i: usize| vec![i as f64 / len as f64, 0.0];
        let trajs: Vec<TrajectoryRecord> = (0..n_trajs)
            .map(|_| {
                let start = rng.gen_range(0..len);
                let transitions: Vec<Transition> = (start..len)
                    .map(|i| {
                        let last = i + 1 == len;
                        Transition {
                            state: feat(i),
                            action: rng.gen_range(0..5),
                            next_state: feat(i + 1),
                            terminal: last,
                            outcome: last.then_some(outcome),
                        }
                    })
                    .collect();
                TrajectoryRecord {
                    transitions,
                    outcome,
                    zone_entry_index: None,
                }
            })
            .collect();
        OfflineDataset::from_trajectories(trajs, "chain".into(), seed).unwrap()
    }

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dims: vec![16, 16],
            embed_dim: 16,
            epochs: 30,
            batch_size: 16,
            target_update: TargetUpdate::Hard { every: 50 },
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_config_matches_experiment_table() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.hidden_dims, vec![32, 32]);
        assert_eq!(cfg.n_online_taus, 8);
        assert_eq!(cfg.n_target_taus, 8);
        assert_eq!(cfg.k_eval, 1000);
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.epochs, 50);
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.action_count, 5);
        assert!(cfg.validate(true).is_ok());
    }

    #[test]
    fn quantile_huber_hand_example() {
        // Single pair, tau = 0.5, u = 1, kappa = 1 -> 0.5 * 0.5 = 0.25.
        let (loss, grad) = quantile_huber_loss(&[0.5], &[0.0], &[1.0], 1.0).unwrap();
        assert!((loss - 0.25).abs() < 1e-12);
        assert_eq!(grad.len(), 1);
        // u > kappa: dL/dpred = -tau * sign(u) = -0.5
        assert!((grad[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_huber_zero_when_matched() {
        let taus = [0.1, 0.5, 0.9];
        let preds = [0.3, 0.3, 0.3];
        let (loss, grad) = quantile_huber_loss(&taus, &preds, &[0.3, 0.3], 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn quantile_huber_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        let mut seed_extra = 0u64;
        while checked < 50 {
            seed_extra += 1;
            let n = rng.gen_range(1..6);
            let m = rng.gen_range(1..6);
            let kappa = 0.5 + rng.gen::<f64>();
            let taus: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let targets: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Stay away from the |u| = kappa slope change.
            let near_kink = preds.iter().any(|&p| {
                targets.iter().any(|&t| ((t - p).abs() - kappa).abs() < 1e-3)
            });
            if near_kink {
                continue;
            }
            let (_, grad) = quantile_huber_loss(&taus, &preds, &targets, kappa).unwrap();
            let h = 1e-5;
            for i in 0..preds.len() {
                let mut plus = preds.clone();
                let mut minus = preds.clone();
                plus[i] += h;
                minus[i] -= h;
                let (lp, _) = quantile_huber_loss(&taus, &plus, &targets, kappa).unwrap();
                let (lm, _) = quantile_huber_loss(&taus, &minus, &targets, kappa).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "iter {seed_extra} pred {i}: {} vs {fd}", grad[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn cql_closed_forms() {
        let (pen, _) = cql_penalty(&[0.7; 5], 2).unwrap();
        assert!((pen - 5.0f64.ln()).abs() < 1e-12);
        let (pen, _) = cql_penalty(&[1.0, 0.0], 0).unwrap();
        assert!((pen - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!(pen >= 0.0);
        assert!(matches!(cql_penalty(&[0.0, 1.0], 2), Err(Error::Domain(_))));
    }

    #[test]
    fn cql_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(2..8);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = rng.gen_range(0..n);
            let (_, grad) = cql_penalty(&q, a).unwrap();
            let h = 1e-5;
            for i in 0..n {
                let mut plus = q.clone();
                let mut minus = q.clone();
                plus[i] += h;
                minus[i] -= h;
                let (lp, _) = cql_penalty(&plus, a).unwrap();
                let (lm, _) = cql_penalty(&minus, a).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4);
            }
        }
    }

    #[test]
    fn td_loss_values_and_gradient() {
        let (loss, grad) = td_loss(&[0.0, 0.0], &[-1.0, -1.0]).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
        assert!((grad[0] - 1.0).abs() < 1e-12);
        let (loss, _) = td_loss(&[0.25, -0.5], &[0.25, -0.5]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn distributional_target_terminal_and_constant_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut head =
            ValueHead::new(HeadKind::Iqn, RewardMode::D, 2, &[8, 8], 8, 5, &mut rng).unwrap();
        let taus = [0.1, 0.5, 0.9];

        let term_neg = Transition {
            state: vec![0.1, 0.1],
            action: 0,
            next_state: vec![0.2, 0.1],
            terminal: true,
            outcome: Some(Outcome::Negative),
        };
        let t = distributional_target(&head, &term_neg, RewardMode::D, &taus).unwrap();
        assert_eq!(t, vec![-1.0; 3]);

        let term_pos = Transition {
            outcome: Some(Outcome::Positive),
            ..term_neg.clone()
        };
        let t = distributional_target(&head, &term_pos, RewardMode::D, &taus).unwrap();
        assert_eq!(t, vec![0.0; 3]);

        // Constant target net: zero everything, set output bias.
        head.target = DenseNet::zeroed(head.online.layer_dims()).unwrap();
        head.target_embed = Some(QuantileEmbedding::zeroed(8, 8).unwrap());
        let c = -0.35;
        head.target.layers.last_mut().unwrap().biases.fill(c);
        let non_term = Transition {
            terminal: false,
            outcome: None,
            ..term_neg
        };
        let t = distributional_target(&head, &non_term, RewardMode::D, &taus).unwrap();
        assert!(t.iter().all(|&v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn iqn_values_requires_iqn_and_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ddqn = ValueHead::new(HeadKind::Ddqn, RewardMode::D, 2, &[8], 8, 5, &mut rng).unwrap();
        assert!(matches!(ddqn.iqn_values(&[0.0, 0.0], &[0.5]), Err(Error::Kind(_))));

        let mut iqn = ValueHead::new(HeadKind::Iqn, RewardMode::D, 2, &[8], 8, 5, &mut rng).unwrap();
        iqn.online = DenseNet::zeroed(iqn.online.layer_dims()).unwrap();
        iqn.online.layers.last_mut().unwrap().biases.fill(3.0);
        let vals = iqn.iqn_values(&[0.2, 0.3], &[0.1, 0.9]).unwrap();
        // Raw output 3.0 clamps to the D support upper bound 0.
        assert!(vals.iter().flatten().all(|&v| v == 0.0));

        let fresh = ValueHead::new(HeadKind::Iqn, RewardMode::R, 2, &[8], 8, 5, &mut rng).unwrap();
        let zeroed = {
            let mut h = fresh.clone();
            h.online = DenseNet::zeroed(h.online.layer_dims()).unwrap();
            h.online_embed = Some(QuantileEmbedding::zeroed(8, 8).unwrap());
            h
        };
        let vals = zeroed.iqn_values(&[0.2, 0.3], &[0.5]).unwrap();
        assert!(vals[0].iter().all(|&v| v == 0.0));
    }

    /// Full-parameter finite-difference check of one IQN loss evaluation.
    #[test]
    fn iqn_composite_gradient_matches_finite_differences() {
        let states = [0.3, -0.4, 0.9, 0.2];
        let taus = [0.2, 0.7, 0.45, 0.9];

        // Walk seeds until the fixture sits clear of every rectifier kink.
        let mut picked = None;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trunk = DenseNet::new(&[2, 6, 6, 3], &mut rng).unwrap();
            let embed = QuantileEmbedding::new(8, 6, &mut rng).unwrap();
            let mut cache = IqnCache::default();
            iqn_forward(&trunk, &embed, &states, 2, &taus, 2, &mut cache);
            let near_kink = cache.psi_pre.iter().any(|z| z.abs() < 1e-3)
                || cache.embed.pre.iter().any(|z| z.abs() < 1e-3)
                || cache.upper_pre[1].iter().any(|z| z.abs() < 1e-3);
            if !near_kink {
                let d_out: Vec<f64> = (0..4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                picked = Some((trunk, embed, cache, d_out));
                break;
            }
        }
        let (trunk, embed, cache, d_out_weights) = picked.expect("a kink-free seed exists");

        let loss_of = |trunk: &DenseNet, embed: &QuantileEmbedding| -> f64 {
            let mut cache = IqnCache::default();
            iqn_forward(trunk, embed, &states, 2, &taus, 2, &mut cache);
            cache
                .output()
                .iter()
                .zip(&d_out_weights)
                .map(|(o, w)| o * w)
                .sum()
        };
        let mut trunk_grads = NetGrads::zeros_like(&trunk);
        let mut embed_grads = LayerGrads::zeros_like(&embed.projection);
        let mut scratch = IqnScratch::default();
        iqn_backward(
            &trunk,
            &embed,
            &cache,
            &d_out_weights,
            &mut trunk_grads,
            &mut embed_grads,
            &mut scratch,
        );
        let mut analytic = Vec::new();
        trunk_grads.write_flat(&mut analytic);
        analytic.extend_from_slice(&embed_grads.d_weights);
        analytic.extend_from_slice(&embed_grads.d_biases);

        let mut flat = Vec::new();
        trunk.write_flat(&mut flat);
        embed.write_flat(&mut flat);
        let h = 1e-5;
        for idx in 0..flat.len() {
            let perturb = |delta: f64| -> f64 {
                let mut p = flat.clone();
                p[idx] += delta;
                let mut t2 = trunk.clone();
                let used = t2.read_flat(&p).unwrap();
                let mut e2 = embed.clone();
                e2.read_flat(&p[used..]).unwrap();
                loss_of(&t2, &e2)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            let a = analytic[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {idx}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = chain_dataset(Outcome::Negative, 20, 6, 1);
        let mut cfg = small_cfg(5);
        cfg.epochs = 0;
        let (head, log) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        assert!(log.reports.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fresh = ValueHead::new(
            HeadKind::Iqn,
            RewardMode::D,
            2,
            &cfg.hidden_dims,
            cfg.embed_dim,
            cfg.action_count,
            &mut rng,
        )
        .unwrap();
        assert_eq!(head.flat_params(), fresh.flat_params());
    }

    #[test]
    fn config_gating() {
        let cfg = TrainConfig {
            beta: 0.1,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(true).is_ok());
        assert!(matches!(cfg.validate(false), Err(Error::Config(_))));
        let bad_gamma = TrainConfig {
            gamma: 0.99,
            ..TrainConfig::default()
        };
        assert!(matches!(bad_gamma.validate(false), Err(Error::Config(_))));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 2);
        let mut cfg = small_cfg(9);
        cfg.epochs = 3;
        let (a, la) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        let (b, lb) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        let (fa, fb) = (a.flat_params(), b.flat_params());
        assert!(fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(la.reports, lb.reports);
    }

    #[test]
    fn beta_zero_with_cql_matches_no_penalty_bitwise() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 3);
        let mut cfg = small_cfg(13);
        cfg.epochs = 3;
        cfg.beta = 0.0;
        for kind in [HeadKind::Iqn, HeadKind::Ddqn] {
            let (with, _) = train(&ds, RewardMode::D, &cfg, kind, true).unwrap();
            let (without, _) = train(&ds, RewardMode::D, &cfg, kind, false).unwrap();
            let (fa, fb) = (with.flat_params(), without.flat_params());
            assert!(
                fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()),
                "{kind:?} diverged with beta = 0"
            );
        }
    }

    #[test]
    fn per_tau_cql_variant_is_selectable_and_distinct() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 19);
        let mut averaged = small_cfg(29);
        averaged.epochs = 3;
        averaged.beta = 0.2;
        let per_tau = TrainConfig {
            cql_per_tau: true,
            ..averaged.clone()
        };
        let (a, la) = train(&ds, RewardMode::D, &averaged, HeadKind::Iqn, true).unwrap();
        let (b, lb) = train(&ds, RewardMode::D, &per_tau, HeadKind::Iqn, true).unwrap();
        assert_ne!(a.flat_params(), b.flat_params());
        // Same stream of batches and taus, different penalty aggregation.
        assert_ne!(la.reports.last().unwrap().cql_loss, lb.reports.last().unwrap().cql_loss);
    }

    #[test]
    fn loss_report_total_is_exact() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 4);
        let mut cfg = small_cfg(17);
        cfg.epochs = 2;
        cfg.beta = 0.3;
        let (_, log) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        for r in &log.reports {
            assert_eq!(r.total.to_bits(), (r.rl_loss + cfg.beta * r.cql_loss).to_bits());
        }
    }

    #[test]
    fn hard_update_copies_online() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 5);
        let mut cfg = small_cfg(23);
        cfg.epochs = 1;
        cfg.target_update = TargetUpdate::Hard { every: 1 };
        let (head, _) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        assert_eq!(head.flat_params(), head.target_flat_params());
    }

    #[test]
    fn ema_update_contracts_toward_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut head =
            ValueHead::new(HeadKind::Ddqn, RewardMode::D, 2, &[8], 8, 5, &mut rng).unwrap();
        // Separate the copies, then apply EMA steps with the online frozen.
        let mut moved = head.flat_params();
        for p in &mut moved {
            *p += 0.5;
        }
        head.set_flat_params(&moved).unwrap();
        let dist = |h: &ValueHead| -> f64 {
            h.flat_params()
                .iter()
                .zip(h.target_flat_params())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let d0 = dist(&head);
        assert!(d0 > 0.0);
        maybe_update_target(&mut head, TargetUpdate::Ema { rate: 0.1, every: 1 }, 1).unwrap();
        let d1 = dist(&head);
        assert!(d1 < d0);
        maybe_update_target(&mut head, TargetUpdate::Ema { rate: 0.1, every: 1 }, 2).unwrap();
        assert!(dist(&head) < d1);
    }

    #[test]
    fn d_head_converges_to_negative_fixed_point() {
        // Every trajectory terminates negative, so with gamma = 1 the D-value
        // fixed point is -1 along the chain.
        let ds = chain_dataset(Outcome::Negative, 60, 5, 6);
        let mut cfg = small_cfg(37);
        cfg.epochs = 60;
        cfg.beta = 0.0;
        for kind in [HeadKind::Ddqn, HeadKind::Iqn] {
            let (head, _) = train(&ds, RewardMode::D, &cfg, kind, false).unwrap();
            let state = vec![4.0 / 5.0, 0.0]; // terminal-adjacent cell
            let mean = match kind {
                HeadKind::Ddqn => {
                    let v = head.point_values(&state).unwrap();
                    v.iter().sum::<f64>() / v.len() as f64
                }
                HeadKind::Iqn => {
                    let taus: Vec<f64> = (1..=32).map(|i| (i as f64 - 0.5) / 32.0).collect();
                    let vals = head.iqn_values(&state, &taus).unwrap();
                    let n = vals.len() * vals[0].len();
                    vals.iter().flatten().sum::<f64>() / n as f64
                }
            };
            assert!(mean <= -0.8, "{kind:?} terminal-adjacent mean {mean}");
        }
    }

    #[test]
    fn r_head_converges_to_positive_fixed_point() {
        let ds = chain_dataset(Outcome::Positive, 60, 5, 7);
        let mut cfg = small_cfg(41);
        cfg.epochs = 60;
        cfg.beta = 0.0;
        cfg.neg_terminal_frac = 0.0; // all-positive data has nothing to stratify
        let (head, _) = train(&ds, RewardMode::R, &cfg, HeadKind::Ddqn, false).unwrap();
        let state = vec![4.0 / 5.0, 0.0];
        let v = head.point_values(&state).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean >= 0.8, "terminal-adjacent mean {mean}");
    }

    #[test]
    fn evaluated_values_respect_supports() {
        let ds = chain_dataset(Outcome::Negative, 30, 5, 8);
        let mut cfg = small_cfg(43);
        cfg.epochs = 10;
        let (d, _) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        let (r, _) = train(&ds, RewardMode::R, &cfg, HeadKind::Iqn, true).unwrap();
        let taus: Vec<f64> = (1..=64).map(|i| i as f64 / 64.0).collect();
        for i in 0..5 {
            let state = vec![i as f64 / 5.0, 0.0];
            for v in d.iqn_values(&state, &taus).unwrap().iter().flatten() {
                assert!((-1.0..=0.0).contains(v));
            }
            for v in r.iqn_values(&state, &taus).unwrap().iter().flatten() {
                assert!((0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_f32_params() {
        let ds = chain_dataset(Outcome::Negative, 10, 5, 9);
        let mut cfg = small_cfg(47);
        cfg.epochs = 2;
        let (head, _) = train(&ds, RewardMode::D, &cfg, HeadKind::Iqn, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("d_head");
        save_head(&head, &cfg, true, "envhash", &base).unwrap();
        let (loaded, manifest) = load_head(&base).unwrap();
        assert_eq!(manifest.kind, HeadKind::Iqn);
        assert_eq!(manifest.env_hash, "envhash");
        assert_eq!(manifest.cfg_hash, cfg.content_hash());
        let expected: Vec<f64> = head.flat_params().iter().map(|&p| p as f32 as f64).collect();
        assert_eq!(loaded.flat_params(), expected);
    }
}

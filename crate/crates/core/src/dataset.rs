//! Offline transition store: reward relabeling into the D/R MDP pair,
//! stratified minibatch sampling, outcome-preserving subsampling, and a
//! JSON-lines on-disk format with a hashed header.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lifegate::{hex_string, Action, LifeGate, Outcome};

/// One offline record; the atom of all training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Present exactly when `terminal` is set.
    pub outcome: Option<Outcome>,
}

/// An ordered episode with its outcome and the first step index (if any) at
/// which the agent was inside the dead-end zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub transitions: Vec<Transition>,
    pub outcome: Outcome,
    pub zone_entry_index: Option<usize>,
}

impl TrajectoryRecord {
    fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::Format("trajectory with no transitions".into()));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.terminal != t.outcome.is_some() {
                return Err(Error::Format(
                    "transition terminal flag inconsistent with outcome".into(),
                ));
            }
            let is_last = i + 1 == self.transitions.len();
            if t.terminal != is_last {
                return Err(Error::Format(
                    "only the last transition of a trajectory may be terminal".into(),
                ));
            }
            if t.action >= Action::COUNT {
                return Err(Error::Format(format!("action index {} out of range", t.action)));
            }
        }
        let last = self.transitions.last().unwrap();
        if last.outcome != Some(self.outcome) {
            return Err(Error::Format(
                "trajectory outcome does not match its terminal transition".into(),
            ));
        }
        Ok(())
    }
}

/// Which relabeled MDP a reward is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardMode {
    /// Negative-outcome MDP: reward -1 on transitions into the negative
    /// terminal state, 0 elsewhere. Return support [-1, 0].
    D,
    /// Positive-outcome MDP: reward +1 on transitions into the positive
    /// terminal state, 0 elsewhere. Return support [0, 1].
    R,
}

impl RewardMode {
    pub fn support(self) -> (f64, f64) {
        match self {
            RewardMode::D => (-1.0, 0.0),
            RewardMode::R => (0.0, 1.0),
        }
    }
}

/// Relabeled reward for a transition. Timeout terminals carry no outcome
/// reward in either mode.
pub fn relabel(t: &Transition, mode: RewardMode) -> f64 {
    match (mode, t.terminal, t.outcome) {
        (RewardMode::D, true, Some(Outcome::Negative)) => -1.0,
        (RewardMode::R, true, Some(Outcome::Positive)) => 1.0,
        _ => 0.0,
    }
}

/// Whether a transition ends the return (bootstrapping stops). Timeouts are
/// artificial horizon cuts, not outcomes, so they bootstrap onward.
pub fn is_outcome_terminal(t: &Transition) -> bool {
    matches!(t.outcome, Some(Outcome::Negative) | Some(Outcome::Positive))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub env_hash: String,
    pub seed: u64,
    pub n_trajectories: usize,
    pub n_transitions: usize,
}

/// An immutable offline dataset grouped by trajectory, with terminal-outcome
/// indices for stratified sampling.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    trajectories: Vec<TrajectoryRecord>,
    meta: DatasetMeta,
    /// (trajectory, step) address of every transition, in stored order.
    flat: Vec<(u32, u32)>,
    neg_terminal: Vec<(u32, u32)>,
    pos_terminal: Vec<(u32, u32)>,
}

impl OfflineDataset {
    pub fn from_trajectories(
        trajectories: Vec<TrajectoryRecord>,
        env_hash: String,
        seed: u64,
    ) -> Result<Self> {
        let n_transitions = trajectories.iter().map(|t| t.transitions.len()).sum();
        let meta = DatasetMeta {
            version: 1,
            env_hash,
            seed,
            n_trajectories: trajectories.len(),
            n_transitions,
        };
        Self::build(trajectories, meta)
    }

    fn build(trajectories: Vec<TrajectoryRecord>, meta: DatasetMeta) -> Result<Self> {
        let mut flat = Vec::new();
        let mut neg_terminal = Vec::new();
        let mut pos_terminal = Vec::new();
        for (ti, traj) in trajectories.iter().enumerate() {
            traj.validate()?;
            for (si, t) in traj.transitions.iter().enumerate() {
                let addr = (ti as u32, si as u32);
                flat.push(addr);
                match t.outcome {
                    Some(Outcome::Negative) => neg_terminal.push(addr),
                    Some(Outcome::Positive) => pos_terminal.push(addr),
                    _ => {}
                }
            }
        }
        if meta.n_trajectories != trajectories.len() || meta.n_transitions != flat.len() {
            return Err(Error::Format(
                "dataset metadata counts do not match contents".into(),
            ));
        }
        Ok(Self {
            trajectories,
            meta,
            flat,
            neg_terminal,
            pos_terminal,
        })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn trajectories(&self) -> &[TrajectoryRecord] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn transition(&self, addr: (u32, u32)) -> &Transition {
        &self.trajectories[addr.0 as usize].transitions[addr.1 as usize]
    }

    pub fn n_negative_terminals(&self) -> usize {
        self.neg_terminal.len()
    }

    pub fn n_positive_terminals(&self) -> usize {
        self.pos_terminal.len()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories
            .first()
            .map(|t| t.transitions[0].state.len())
            .unwrap_or(0)
    }

    /// Draw a shuffled minibatch with `ceil(frac * batch)` samples from the
    /// negative-terminal index and the remainder uniform over all transitions.
    pub fn stratified_minibatch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        neg_terminal_frac: f64,
        rng: &mut R,
    ) -> Result<Vec<(u32, u32)>> {
        if batch_size == 0 {
            return Err(Error::Sampling("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&neg_terminal_frac) {
            return Err(Error::Sampling(format!(
                "neg_terminal_frac {neg_terminal_frac} outside [0, 1)"
            )));
        }
        if self.flat.is_empty() {
            return Err(Error::Sampling("empty dataset".into()));
        }
        let n_neg = (neg_terminal_frac * batch_size as f64).ceil() as usize;
        if n_neg > 0 && self.neg_terminal.is_empty() {
            return Err(Error::Sampling(
                "stratified fraction requested but the dataset has no negative terminals".into(),
            ));
        }
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..n_neg.min(batch_size) {
            batch.push(self.neg_terminal[rng.gen_range(0..self.neg_terminal.len())]);
        }
        while batch.len() < batch_size {
            batch.push(self.flat[rng.gen_range(0..self.flat.len())]);
        }
        batch.shuffle(rng);
        Ok(batch)
    }

    /// Trajectory-level subsample preserving per-outcome-class counts at the
    /// requested fraction (rounded per class).
    pub fn subsample<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<OfflineDataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Sampling(format!("fraction {fraction} outside (0, 1]")));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let mut selected: Vec<usize> = Vec::new();
        for class in [Outcome::Positive, Outcome::Negative, Outcome::Timeout] {
            let members: Vec<usize> = self
                .trajectories
                .iter()
                .enumerate()
                .filter(|(_, t)| t.outcome == class)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                continue;
            }
            let target = (members.len() as f64 * fraction).round() as usize;
            if target == 0 && matches!(class, Outcome::Positive | Outcome::Negative) {
                return Err(Error::Sampling(format!(
                    "fraction {fraction} leaves zero {class:?} trajectories"
                )));
            }
            let picks = rand::seq::index::sample(rng, members.len(), target.min(members.len()));
            selected.extend(picks.iter().map(|i| members[i]));
        }
        selected.sort_unstable();
        let trajectories: Vec<TrajectoryRecord> = selected
            .iter()
            .map(|&i| self.trajectories[i].clone())
            .collect();
        Self::from_trajectories(trajectories, self.meta.env_hash.clone(), self.meta.seed)
    }

    /// Serialize as a hashed JSON header line followed by one JSON trajectory
    /// per line. `save -> load -> save` is byte-identical.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut body = String::new();
        for traj in &self.trajectories {
            body.push_str(&serde_json::to_string(traj)?);
            body.push('\n');
        }
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        let header = Header {
            meta: self.meta.clone(),
            body_sha256: hex_string(&hasher.finalize()),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        out.push_str(&body);
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<OfflineDataset> {
        let text = std::fs::read_to_string(path)?;
        let (header_line, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Format("missing dataset header line".into()))?;
        let header: Header = serde_json::from_str(header_line)
            .map_err(|e| Error::Format(format!("bad dataset header: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        if hex_string(&hasher.finalize()) != header.body_sha256 {
            return Err(Error::Format(
                "dataset body hash mismatch (truncated or corrupted file)".into(),
            ));
        }
        let mut trajectories = Vec::new();
        for line in body.lines() {
            trajectories.push(
                serde_json::from_str(line)
                    .map_err(|e| Error::Format(format!("bad trajectory line: {e}")))?,
            );
        }
        Self::build(trajectories, header.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    meta: DatasetMeta,
    body_sha256: String,
}

/// Collect at least `n_transitions` transitions under uniform-random actions,
/// resetting uniformly over all open cells and always completing the final
/// episode.
pub fn collect_random(env: &LifeGate, n_transitions: usize, seed: u64) -> Result<OfflineDataset> {
    if n_transitions == 0 {
        return Err(Error::Usage("requested an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::new();
    let mut total = 0usize;
    while total < n_transitions {
        let mut state = env.reset_uniform(&mut rng);
        let mut transitions = Vec::new();
        let mut zone_entry_index = None;
        let outcome = loop {
            if zone_entry_index.is_none() && env.in_zone(state.x, state.y) {
                zone_entry_index = Some(transitions.len());
            }
            let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
            let (next, terminal, outcome) = env.step(state, action, &mut rng)?;
            transitions.push(Transition {
                state: env.features(state.x, state.y),
                action: action.index(),
                next_state: env.features(next.x, next.y),
                terminal,
                outcome,
            });
            if let Some(o) = outcome {
                break o;
            }
            state = next;
        };
        total += transitions.len();
        trajectories.push(TrajectoryRecord {
            transitions,
            outcome,
            zone_entry_index,
        });
    }
    OfflineDataset::from_trajectories(trajectories, env.env_hash().to_string(), seed)
}

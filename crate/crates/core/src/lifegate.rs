//! The LifeGate gridworld.
//!
//! The agent navigates around a barrier to a goal region. A dead-end zone at
//! the right of the barrier ignores the agent's actions and pushes it one cell
//! toward the negative terminal edge with probability `push_prob` per step, so
//! entering the zone is irrecoverable after a geometric number of steps.
//!
//! Also hosts the three hand-designed evaluation policies: one safe route left
//! around the barrier, two purposefully suboptimal routes through the zone.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;

use crate::dataset::{TrajectoryRecord, Transition};
use crate::error::{Error, Result};

/// The five moves of the action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Domain(format!("action index {i} outside [0, 5)")))
    }

    /// Unit displacement, y growing upward.
    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

/// Terminal outcome of a trajectory, assigned exactly once at termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Positive,
    Negative,
    Timeout,
}

/// Agent position plus step counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    pub x: u32,
    pub y: u32,
    pub t: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellKind {
    Free,
    Barrier,
    Zone,
    Goal,
    NegativeEdge,
}

/// Serializable description of a LifeGate layout. Cell sets are coordinate
/// lists so experiments can pin the exact geometry in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    pub barrier_cells: Vec<(u32, u32)>,
    pub deadend_zone_cells: Vec<(u32, u32)>,
    pub goal_cells: Vec<(u32, u32)>,
    pub negative_edge_cells: Vec<(u32, u32)>,
    pub push_prob: f64,
    pub max_steps: u32,
    pub start_cells: Vec<(u32, u32)>,
}

impl GridSpec {
    /// The pinned 10x10 layout used throughout: a 4-cell barrier at row 5,
    /// a 3-column dead-end zone (x = 6..8), the negative edge at x = 9, a
    /// 2-cell goal above the barrier's far side, and bottom-row starts.
    pub fn default_lifegate() -> Self {
        let columns = |xs: std::ops::RangeInclusive<u32>| -> Vec<(u32, u32)> {
            let mut v = Vec::new();
            for x in xs {
                for y in 0..10 {
                    v.push((x, y));
                }
            }
            v
        };
        GridSpec {
            width: 10,
            height: 10,
            barrier_cells: vec![(2, 5), (3, 5), (4, 5), (5, 5)],
            deadend_zone_cells: columns(6..=8),
            goal_cells: vec![(4, 6), (5, 6)],
            negative_edge_cells: (0..10).map(|y| (9, y)).collect(),
            push_prob: 0.4,
            max_steps: 100,
            start_cells: (0..=5).map(|x| (x, 0)).collect(),
        }
    }

    /// Content hash of the canonical JSON form, used to pin datasets and
    /// checkpoints to the layout that produced them.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("grid spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// A validated, compiled LifeGate environment.
#[derive(Debug, Clone)]
pub struct LifeGate {
    spec: GridSpec,
    cells: Vec<CellKind>,
    /// Non-barrier, non-terminal cells; reset pool for data collection.
    open_cells: Vec<(u32, u32)>,
    env_hash: String,
}

impl LifeGate {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if spec.width < 2 || spec.height < 2 {
            return Err(Error::Config("grid must be at least 2x2".into()));
        }
        if !(spec.push_prob > 0.0 && spec.push_prob < 1.0) {
            return Err(Error::Config(format!(
                "push_prob {} outside (0, 1)",
                spec.push_prob
            )));
        }
        if spec.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }

        let mut cells = vec![CellKind::Free; (spec.width * spec.height) as usize];
        let mut seen = BTreeSet::new();
        let sets: [(&[(u32, u32)], CellKind); 4] = [
            (&spec.barrier_cells, CellKind::Barrier),
            (&spec.deadend_zone_cells, CellKind::Zone),
            (&spec.goal_cells, CellKind::Goal),
            (&spec.negative_edge_cells, CellKind::NegativeEdge),
        ];
        for (set, kind) in sets {
            for &(x, y) in set {
                if x >= spec.width || y >= spec.height {
                    return Err(Error::Config(format!(
                        "cell ({x}, {y}) outside the {}x{} grid",
                        spec.width, spec.height
                    )));
                }
                if !seen.insert((x, y)) {
                    return Err(Error::Config(format!(
                        "cell ({x}, {y}) appears in more than one special set"
                    )));
                }
                cells[(y * spec.width + x) as usize] = kind;
            }
        }

        let kind_at = |x: u32, y: u32| cells[(y * spec.width + x) as usize];

        // Every zone cell must drain rightward into the negative edge.
        for &(x, y) in &spec.deadend_zone_cells {
            let mut cx = x;
            loop {
                if cx + 1 >= spec.width {
                    return Err(Error::Config(format!(
                        "zone cell ({x}, {y}) has no rightward path to a negative edge"
                    )));
                }
                match kind_at(cx + 1, y) {
                    CellKind::NegativeEdge => break,
                    CellKind::Zone => cx += 1,
                    _ => {
                        return Err(Error::Config(format!(
                            "zone cell ({x}, {y}) drains into a non-zone cell at ({}, {y})",
                            cx + 1
                        )))
                    }
                }
            }
        }

        for &(x, y) in &spec.start_cells {
            if x >= spec.width || y >= spec.height {
                return Err(Error::Config(format!("start cell ({x}, {y}) out of bounds")));
            }
            match kind_at(x, y) {
                CellKind::Barrier | CellKind::Goal | CellKind::NegativeEdge => {
                    return Err(Error::Config(format!(
                        "start cell ({x}, {y}) is a barrier or terminal cell"
                    )))
                }
                _ => {}
            }
        }

        let mut open_cells = Vec::new();
        for y in 0..spec.height {
            for x in 0..spec.width {
                match kind_at(x, y) {
                    CellKind::Free | CellKind::Zone => open_cells.push((x, y)),
                    _ => {}
                }
            }
        }

        let env_hash = spec.content_hash();
        Ok(Self {
            spec,
            cells,
            open_cells,
            env_hash,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn env_hash(&self) -> &str {
        &self.env_hash
    }

    fn kind(&self, x: u32, y: u32) -> CellKind {
        self.cells[(y * self.spec.width + x) as usize]
    }

    pub fn in_zone(&self, x: u32, y: u32) -> bool {
        self.kind(x, y) == CellKind::Zone
    }

    pub fn is_terminal_cell(&self, x: u32, y: u32) -> bool {
        matches!(self.kind(x, y), CellKind::Goal | CellKind::NegativeEdge)
    }

    /// Network features for a cell: coordinates scaled to the unit square.
    pub fn features(&self, x: u32, y: u32) -> Vec<f64> {
        vec![
            x as f64 / (self.spec.width - 1) as f64,
            y as f64 / (self.spec.height - 1) as f64,
        ]
    }

    /// Recover the cell of a feature vector produced by [`features`].
    ///
    /// [`features`]: LifeGate::features
    pub fn cell_of_features(&self, f: &[f64]) -> (u32, u32) {
        let x = (f[0] * (self.spec.width - 1) as f64).round() as u32;
        let y = (f[1] * (self.spec.height - 1) as f64).round() as u32;
        (x.min(self.spec.width - 1), y.min(self.spec.height - 1))
    }

    /// Draw a start state from the declared start distribution.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnvState> {
        if self.spec.start_cells.is_empty() {
            return Err(Error::Config("empty start cell set".into()));
        }
        let (x, y) = self.spec.start_cells[rng.gen_range(0..self.spec.start_cells.len())];
        Ok(EnvState { x, y, t: 0 })
    }

    /// Data-collection reset: uniform over every non-terminal, non-barrier
    /// cell (the dead-end zone included).
    pub fn reset_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let (x, y) = self.open_cells[rng.gen_range(0..self.open_cells.len())];
        EnvState { x, y, t: 0 }
    }

    /// Advance one step. Inside the zone the chosen action is ignored and the
    /// agent is pushed one cell right with probability `push_prob`, otherwise
    /// it stays. Outside, moves are deterministic and blocked by barriers and
    /// grid walls. Returns `(next, terminal, outcome)`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: EnvState,
        action: Action,
        rng: &mut R,
    ) -> Result<(EnvState, bool, Option<Outcome>)> {
        if self.is_terminal_cell(state.x, state.y) {
            return Err(Error::Usage(format!(
                "stepping a terminal state at ({}, {})",
                state.x, state.y
            )));
        }
        if state.t >= self.spec.max_steps {
            return Err(Error::Usage("stepping past the episode horizon".into()));
        }

        let (nx, ny) = if self.in_zone(state.x, state.y) {
            if rng.gen::<f64>() < self.spec.push_prob {
                (state.x + 1, state.y)
            } else {
                (state.x, state.y)
            }
        } else {
            let (dx, dy) = action.delta();
            let tx = state.x as i64 + dx;
            let ty = state.y as i64 + dy;
            if tx < 0
                || ty < 0
                || tx >= self.spec.width as i64
                || ty >= self.spec.height as i64
                || self.kind(tx as u32, ty as u32) == CellKind::Barrier
            {
                (state.x, state.y)
            } else {
                (tx as u32, ty as u32)
            }
        };

        let next = EnvState {
            x: nx,
            y: ny,
            t: state.t + 1,
        };
        let outcome = match self.kind(nx, ny) {
            CellKind::Goal => Some(Outcome::Positive),
            CellKind::NegativeEdge => Some(Outcome::Negative),
            _ if next.t >= self.spec.max_steps => Some(Outcome::Timeout),
            _ => None,
        };
        Ok((next, outcome.is_some(), outcome))
    }

    /// Run one full episode under a fixed policy, starting from the declared
    /// start distribution, recording the first step index at which the agent
    /// is inside the dead-end zone.
    pub fn rollout<R: Rng + ?Sized>(&self, policy: &FixedPolicy, rng: &mut R) -> Result<TrajectoryRecord> {
        let start = self.reset(rng)?;
        self.rollout_from(start, policy, rng)
    }

    pub fn rollout_from<R: Rng + ?Sized>(
        &self,
        start: EnvState,
        policy: &FixedPolicy,
        rng: &mut R,
    ) -> Result<TrajectoryRecord> {
        let mut state = start;
        let mut transitions = Vec::new();
        let mut zone_entry_index = None;
        let outcome = loop {
            if zone_entry_index.is_none() && self.in_zone(state.x, state.y) {
                zone_entry_index = Some(transitions.len());
            }
            let action = policy.act(state.x, state.y, rng);
            let (next, terminal, outcome) = self.step(state, action, rng)?;
            transitions.push(Transition {
                state: self.features(state.x, state.y),
                action: action.index(),
                next_state: self.features(next.x, next.y),
                terminal,
                outcome,
            });
            if let Some(o) = outcome {
                break o;
            }
            state = next;
        };
        Ok(TrajectoryRecord {
            transitions,
            outcome,
            zone_entry_index,
        })
    }
}

/// A tabular policy over cells with an optional per-step probability of
/// taking a uniformly random action instead.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    width: u32,
    actions: Vec<Action>,
    pub stochasticity: f64,
}

impl FixedPolicy {
    /// Build from a total rule over cells.
    pub fn from_rule<F: Fn(u32, u32) -> Action>(env: &LifeGate, stochasticity: f64, rule: F) -> Result<Self> {
        if !(0.0..=1.0).contains(&stochasticity) {
            return Err(Error::Config(format!(
                "stochasticity {stochasticity} outside [0, 1]"
            )));
        }
        let spec = env.spec();
        let mut actions = Vec::with_capacity((spec.width * spec.height) as usize);
        for y in 0..spec.height {
            for x in 0..spec.width {
                actions.push(rule(x, y));
            }
        }
        Ok(Self {
            width: spec.width,
            actions,
            stochasticity,
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, x: u32, y: u32, rng: &mut R) -> Action {
        if self.stochasticity > 0.0 && rng.gen::<f64>() < self.stochasticity {
            return Action::ALL[rng.gen_range(0..Action::COUNT)];
        }
        self.actions[(y * self.width + x) as usize]
    }

    pub fn with_stochasticity(mut self, stochasticity: f64) -> Self {
        self.stochasticity = stochasticity;
        self
    }
}

/// The hand-designed safe policy: route left around the barrier, then along
/// the goal row.
pub fn safe_policy(env: &LifeGate, stochasticity: f64) -> Result<FixedPolicy> {
    let spec = env.spec();
    let left_lane = spec
        .barrier_cells
        .iter()
        .map(|&(x, _)| x)
        .min()
        .unwrap_or(1)
        .saturating_sub(1);
    let goal_row = spec.goal_cells.iter().map(|&(_, y)| y).min().unwrap_or(0);
    let goal_min = spec.goal_cells.iter().map(|&(x, _)| x).min().unwrap_or(0);
    let goal_max = spec.goal_cells.iter().map(|&(x, _)| x).max().unwrap_or(0);
    FixedPolicy::from_rule(env, stochasticity, move |x, y| {
        if y < goal_row {
            if x > left_lane {
                Action::Left
            } else {
                Action::Up
            }
        } else if x < goal_min {
            Action::Right
        } else if x > goal_max {
            Action::Left
        } else {
            Action::Down
        }
    })
}

/// Suboptimal policy A: head straight right, below the barrier, into the zone.
pub fn risky_low_policy(env: &LifeGate, stochasticity: f64) -> Result<FixedPolicy> {
    FixedPolicy::from_rule(env, stochasticity, |_, _| Action::Right)
}

/// Suboptimal policy B: climb the left lane, then cross the top rows into the
/// zone, passing above the goal.
pub fn risky_high_policy(env: &LifeGate, stochasticity: f64) -> Result<FixedPolicy> {
    let spec = env.spec();
    let top_row = spec.height - 2;
    let left_lane = spec
        .barrier_cells
        .iter()
        .map(|&(x, _)| x)
        .min()
        .unwrap_or(1)
        .saturating_sub(1);
    FixedPolicy::from_rule(env, stochasticity, move |x, y| {
        if y >= top_row {
            Action::Right
        } else if x <= left_lane {
            Action::Up
        } else {
            Action::Left
        }
    })
}

/// The three evaluation policies in spec order: safe, then the two
/// purposefully suboptimal routes.
pub fn hand_designed_policies(env: &LifeGate, stochasticity: f64) -> Result<[FixedPolicy; 3]> {
    Ok([
        safe_policy(env, stochasticity)?,
        risky_low_policy(env, stochasticity)?,
        risky_high_policy(env, stochasticity)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> LifeGate {
        LifeGate::new(GridSpec::default_lifegate()).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn default_layout_validates() {
        let e = env();
        assert_eq!(e.spec().width, 10);
        assert!(!e.env_hash().is_empty());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let mut spec = GridSpec::default_lifegate();
        spec.goal_cells.push((6, 0)); // already a zone cell
        assert!(matches!(LifeGate::new(spec), Err(Error::Config(_))));
    }

    #[test]
    fn zone_must_drain_rightward() {
        let mut spec = GridSpec::default_lifegate();
        spec.deadend_zone_cells.push((0, 9)); // no rightward zone path
        assert!(matches!(LifeGate::new(spec), Err(Error::Config(_))));
    }

    #[test]
    fn singleton_start_always_there() {
        let mut spec = GridSpec::default_lifegate();
        spec.start_cells = vec![(3, 2)];
        let e = LifeGate::new(spec).unwrap();
        let mut r = rng(1);
        for _ in 0..50 {
            let s = e.reset(&mut r).unwrap();
            assert_eq!((s.x, s.y, s.t), (3, 2, 0));
        }
    }

    #[test]
    fn empty_start_set_is_config_error() {
        let mut spec = GridSpec::default_lifegate();
        spec.start_cells = vec![];
        let e = LifeGate::new(spec).unwrap();
        assert!(matches!(e.reset(&mut rng(0)), Err(Error::Config(_))));
    }

    #[test]
    fn two_cell_start_frequencies_balanced() {
        let mut spec = GridSpec::default_lifegate();
        spec.start_cells = vec![(0, 0), (1, 0)];
        let e = LifeGate::new(spec).unwrap();
        let mut r = rng(11);
        let mut count0 = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let s = e.reset(&mut r).unwrap();
            assert!(!matches!(e.kind(s.x, s.y), CellKind::Barrier));
            if s.x == 0 {
                count0 += 1;
            }
        }
        let f = count0 as f64 / n as f64;
        assert!((0.47..=0.53).contains(&f), "frequency {f}");
    }

    #[test]
    fn entering_goal_terminates_positive() {
        let e = env();
        let s = EnvState { x: 3, y: 6, t: 0 };
        let (next, terminal, outcome) = e.step(s, Action::Right, &mut rng(0)).unwrap();
        assert_eq!((next.x, next.y), (4, 6));
        assert!(terminal);
        assert_eq!(outcome, Some(Outcome::Positive));
    }

    #[test]
    fn zone_push_moves_right_or_stays() {
        let e = env();
        let mut r = rng(5);
        let s = EnvState { x: 6, y: 3, t: 0 };
        let mut pushed = 0;
        let n = 10_000;
        for _ in 0..n {
            let (next, _, _) = e.step(s, Action::Left, &mut r).unwrap();
            assert!(next.x == 7 || next.x == 6);
            assert_eq!(next.y, 3);
            if next.x == 7 {
                pushed += 1;
            }
        }
        let f = pushed as f64 / n as f64;
        assert!((f - 0.4).abs() < 0.02, "push frequency {f}");
    }

    #[test]
    fn steps_to_negative_edge_match_geometric_mean() {
        // From the zone column adjacent to the edge, remaining steps to the
        // negative terminal are geometric with mean 1 / push_prob = 2.5.
        let e = env();
        let mut r = rng(23);
        let n = 10_000;
        let mut total_steps = 0u64;
        for _ in 0..n {
            let mut s = EnvState { x: 8, y: 4, t: 0 };
            loop {
                let (next, terminal, outcome) = e.step(s, Action::Stay, &mut r).unwrap();
                if terminal {
                    assert_eq!(outcome, Some(Outcome::Negative));
                    total_steps += next.t as u64;
                    break;
                }
                s = next;
            }
        }
        let mean = total_steps as f64 / n as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.05, "mean steps {mean}");
    }

    #[test]
    fn moves_blocked_by_barrier_and_walls() {
        let e = env();
        let (next, _, _) = e
            .step(EnvState { x: 3, y: 4, t: 0 }, Action::Up, &mut rng(0))
            .unwrap();
        assert_eq!((next.x, next.y), (3, 4)); // barrier above
        let (next, _, _) = e
            .step(EnvState { x: 0, y: 0, t: 0 }, Action::Left, &mut rng(0))
            .unwrap();
        assert_eq!((next.x, next.y), (0, 0)); // wall
    }

    #[test]
    fn stepping_terminal_state_is_usage_error() {
        let e = env();
        let s = EnvState { x: 4, y: 6, t: 3 }; // goal cell
        assert!(matches!(e.step(s, Action::Stay, &mut rng(0)), Err(Error::Usage(_))));
    }

    #[test]
    fn timeout_after_max_steps() {
        let mut spec = GridSpec::default_lifegate();
        spec.max_steps = 3;
        let e = LifeGate::new(spec).unwrap();
        let mut s = EnvState { x: 0, y: 0, t: 0 };
        let mut r = rng(0);
        for i in 0..3 {
            let (next, terminal, outcome) = e.step(s, Action::Stay, &mut r).unwrap();
            if i == 2 {
                assert!(terminal);
                assert_eq!(outcome, Some(Outcome::Timeout));
            } else {
                assert!(!terminal);
            }
            s = next;
        }
    }

    #[test]
    fn safe_policy_reaches_goal_from_every_start() {
        let e = env();
        let policy = safe_policy(&e, 0.0).unwrap();
        let mut r = rng(2);
        let mut positives = 0;
        for _ in 0..1_000 {
            let traj = e.rollout(&policy, &mut r).unwrap();
            if traj.outcome == Outcome::Positive {
                positives += 1;
            }
            assert!(traj.zone_entry_index.is_none());
            assert!(traj.transitions.len() <= e.spec().max_steps as usize);
        }
        assert!(positives >= 950, "positives {positives}");
    }

    #[test]
    fn suboptimal_policies_enter_zone_deterministically() {
        let e = env();
        let mut r = rng(3);
        for policy in [
            risky_low_policy(&e, 0.0).unwrap(),
            risky_high_policy(&e, 0.0).unwrap(),
        ] {
            for _ in 0..200 {
                let traj = e.rollout(&policy, &mut r).unwrap();
                assert!(traj.zone_entry_index.is_some());
                assert_eq!(traj.outcome, Outcome::Negative);
            }
        }
    }

    #[test]
    fn zone_is_absorbing_until_negative_edge() {
        // Once in the zone, every later state is in the zone or terminal.
        let e = env();
        let policy = risky_low_policy(&e, 0.2).unwrap();
        let mut r = rng(9);
        for _ in 0..300 {
            let traj = e.rollout(&policy, &mut r).unwrap();
            if let Some(entry) = traj.zone_entry_index {
                for t in &traj.transitions[entry..] {
                    let (x, y) = e.cell_of_features(&t.state);
                    assert!(e.in_zone(x, y) || e.is_terminal_cell(x, y));
                }
            }
        }
    }

    #[test]
    fn seeded_rollouts_are_bit_reproducible() {
        let e = env();
        let policy = risky_high_policy(&e, 0.3).unwrap();
        let a = e.rollout(&policy, &mut rng(77)).unwrap();
        let b = e.rollout(&policy, &mut rng(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_spec_json_roundtrip() {
        let spec = GridSpec::default_lifegate();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lifegate.json");
        spec.to_json_file(&path).unwrap();
        let back = GridSpec::from_json_file(&path).unwrap();
        assert_eq!(spec, back);
        assert_eq!(spec.content_hash(), back.content_hash());
    }
}

//! Evaluation harness: early-warning gap distributions, ROC/AUC threshold
//! sweeps, the 2x2 architecture-by-penalty ablation, beta and data-fraction
//! sweeps, and threshold-selection histograms.
//!
//! Two flagging conventions coexist and are never mixed inside one report:
//! ROC sweeps flag a trajectory when any state satisfies the dead-end rule
//! under coupled thresholds (delta_r = 1 + delta_d); early-warning gaps use
//! the averaged-median alarm score against delta_d alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assess::{Method, RiskAssessor};
use crate::dataset::{OfflineDataset, RewardMode, TrajectoryRecord};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::learner::{train, HeadKind, TrainConfig, TrainLog, ValueHead};
use crate::lifegate::{FixedPolicy, LifeGate, Outcome};
use crate::risk::RiskLevel;

/// Alarm/zone-entry bookkeeping for one trajectory under one assessor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub trajectory: usize,
    pub alarm: Option<usize>,
    pub zone_entry: Option<usize>,
}

impl GapSample {
    /// Steps of early warning: zone entry minus alarm index, positive when
    /// the alarm fires before the zone is entered. Defined only when both
    /// indices exist.
    pub fn gap(&self) -> Option<i64> {
        match (self.alarm, self.zone_entry) {
            (Some(a), Some(z)) => Some(z as i64 - a as i64),
            _ => None,
        }
    }
}

/// Summary statistics over the defined gaps of one assessor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Fraction of negative-outcome trajectories that never alarmed.
    pub missed_fraction: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = p * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

impl GapStats {
    pub fn from_samples(samples: &[GapSample], trajectories: &[TrajectoryRecord]) -> Self {
        let mut gaps: Vec<f64> = samples.iter().filter_map(|s| s.gap()).map(|g| g as f64).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let negatives: Vec<&GapSample> = samples
            .iter()
            .filter(|s| trajectories[s.trajectory].outcome == Outcome::Negative)
            .collect();
        let missed = if negatives.is_empty() {
            0.0
        } else {
            negatives.iter().filter(|s| s.alarm.is_none()).count() as f64 / negatives.len() as f64
        };
        if gaps.is_empty() {
            return Self {
                count: 0,
                mean: f64::NAN,
                median: f64::NAN,
                q1: f64::NAN,
                q3: f64::NAN,
                missed_fraction: missed,
            };
        }
        Self {
            count: gaps.len(),
            mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
            median: percentile(&gaps, 0.5),
            q1: percentile(&gaps, 0.25),
            q3: percentile(&gaps, 0.75),
            missed_fraction: missed,
        }
    }
}

/// Early-warning study output: per-assessor gap samples over one shared
/// rollout set.
#[derive(Debug, Clone)]
pub struct EarlyWarningReport {
    pub labels: Vec<String>,
    pub samples: Vec<Vec<GapSample>>,
    pub stats: Vec<GapStats>,
    pub n_trajectories: usize,
}

impl EarlyWarningReport {
    /// Mean of per-trajectory gap differences `samples[b] - samples[a]`,
    /// restricted to trajectories where both assessors have a defined gap.
    pub fn paired_mean_difference(&self, a: usize, b: usize) -> Option<f64> {
        let mut diffs = Vec::new();
        for (sa, sb) in self.samples[a].iter().zip(&self.samples[b]) {
            if let (Some(ga), Some(gb)) = (sa.gap(), sb.gap()) {
                diffs.push((gb - ga) as f64);
            }
        }
        if diffs.is_empty() {
            None
        } else {
            Some(diffs.iter().sum::<f64>() / diffs.len() as f64)
        }
    }
}

/// Roll out `n_rollouts` episodes cycling through the given policies, one rng
/// stream per rollout (`seed = base_seed + index`), shared by every assessor.
pub fn generate_eval_trajectories(
    env: &LifeGate,
    policies: &[FixedPolicy],
    n_rollouts: usize,
    base_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    if policies.is_empty() {
        return Err(Error::Usage("no policies to roll out".into()));
    }
    if n_rollouts == 0 {
        return Err(Error::Usage("n_rollouts must be >= 1".into()));
    }
    (0..n_rollouts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
            env.rollout(&policies[i % policies.len()], &mut rng)
        })
        .collect()
}

/// Evaluate every assessor on one shared trajectory set: alarm indices, gap
/// samples, and paired statistics.
pub fn early_warning_study(
    assessors: &[(String, &RiskAssessor)],
    trajectories: &[TrajectoryRecord],
    base_seed: u64,
) -> Result<EarlyWarningReport> {
    if trajectories.is_empty() {
        return Err(Error::Usage("no trajectories to assess".into()));
    }
    let mut labels = Vec::new();
    let mut samples = Vec::new();
    let mut stats = Vec::new();
    for (label, assessor) in assessors {
        let mut per = Vec::with_capacity(trajectories.len());
        for (i, traj) in trajectories.iter().enumerate() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(base_seed, &format!("alarm/{label}/{i}")));
            let alarm = assessor.trajectory_alarm(traj, &mut rng)?;
            per.push(GapSample {
                trajectory: i,
                alarm,
                zone_entry: traj.zone_entry_index,
            });
        }
        stats.push(GapStats::from_samples(&per, trajectories));
        labels.push(label.clone());
        samples.push(per);
    }
    Ok(EarlyWarningReport {
        labels,
        samples,
        stats,
        n_trajectories: trajectories.len(),
    })
}

// ---------------------------------------------------------------------------
// ROC sweeps
// ---------------------------------------------------------------------------

/// One point of a coupled-threshold sweep (`delta_r = 1 + delta_d`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub delta_d: f64,
    pub delta_r: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Per-trajectory flagging scores over an alpha grid, plus the smallest
/// mean-minus-CVaR gap seen while computing them.
///
/// A trajectory is flagged at threshold `delta_d` (with `delta_r = 1 +
/// delta_d`) exactly when its score is `<= delta_d`, where the score is the
/// minimum over states of `max(median_d, median_r - 1)`.
#[derive(Debug, Clone)]
pub struct TrajectoryScores {
    /// `scores[alpha_idx][trajectory]`.
    pub scores: Vec<Vec<f64>>,
    pub outcomes: Vec<Outcome>,
    pub min_security_gap: f64,
}

/// Assess every state of every trajectory once (one shared particle set per
/// state) and reduce to per-alpha trajectory scores.
pub fn score_trajectories(
    assessor: &RiskAssessor,
    trajectories: &[TrajectoryRecord],
    alphas: &[RiskLevel],
    base_seed: u64,
) -> Result<TrajectoryScores> {
    if trajectories.is_empty() {
        return Err(Error::Eval("no trajectories to score".into()));
    }
    let mut scores = vec![vec![f64::INFINITY; trajectories.len()]; alphas.len()];
    let mut min_gap = f64::INFINITY;
    for (ti, traj) in trajectories.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, &format!("score/{ti}")));
        for t in &traj.transitions {
            let spec = assessor.assess_spectrum(&t.state, alphas, &mut rng)?;
            min_gap = min_gap.min(spec.min_security_gap);
            for (ai, &(md, mr)) in spec.medians.iter().enumerate() {
                let state_score = md.max(mr - 1.0);
                if state_score < scores[ai][ti] {
                    scores[ai][ti] = state_score;
                }
            }
        }
    }
    Ok(TrajectoryScores {
        scores,
        outcomes: trajectories.iter().map(|t| t.outcome).collect(),
        min_security_gap: min_gap,
    })
}

/// ROC points for one score set: `n_thresholds` evenly spaced `delta_d` in
/// [-1, 0], TPR over negative-outcome trajectories, FPR over positive-outcome
/// ones (timeouts belong to neither class).
pub fn roc_from_scores(
    scores: &[f64],
    outcomes: &[Outcome],
    n_thresholds: usize,
) -> Result<Vec<RocPoint>> {
    if n_thresholds < 2 {
        return Err(Error::Eval("need at least two threshold settings".into()));
    }
    let negatives: Vec<f64> = scores
        .iter()
        .zip(outcomes)
        .filter(|(_, o)| **o == Outcome::Negative)
        .map(|(s, _)| *s)
        .collect();
    let positives: Vec<f64> = scores
        .iter()
        .zip(outcomes)
        .filter(|(_, o)| **o == Outcome::Positive)
        .map(|(s, _)| *s)
        .collect();
    if negatives.is_empty() || positives.is_empty() {
        return Err(Error::Eval(
            "ROC needs trajectories of both outcome classes".into(),
        ));
    }
    Ok((0..n_thresholds)
        .map(|i| {
            let delta_d = -1.0 + i as f64 / (n_thresholds - 1) as f64;
            let tpr =
                negatives.iter().filter(|&&s| s <= delta_d).count() as f64 / negatives.len() as f64;
            let fpr =
                positives.iter().filter(|&&s| s <= delta_d).count() as f64 / positives.len() as f64;
            RocPoint {
                delta_d,
                delta_r: 1.0 + delta_d,
                tpr,
                fpr,
            }
        })
        .collect())
}

/// Coupled-threshold ROC sweep at the assessor's own alpha.
pub fn roc_sweep(
    assessor: &RiskAssessor,
    trajectories: &[TrajectoryRecord],
    n_thresholds: usize,
    base_seed: u64,
) -> Result<Vec<RocPoint>> {
    let scored = score_trajectories(assessor, trajectories, &[assessor.alpha], base_seed)?;
    roc_from_scores(&scored.scores[0], &scored.outcomes, n_thresholds)
}

/// Trapezoidal area under fpr-sorted points, with (0,0) and (1,1) anchors
/// appended. Insensitive to point order and duplicates.
pub fn auc(points: &[RocPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Eval("AUC needs at least two ROC points".into()));
    }
    let mut curve: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    curve.push((0.0, 0.0));
    curve.push((1.0, 1.0));
    curve.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        area += (x2 - x1) * (y1 + y2) / 2.0;
    }
    Ok(area)
}

/// The default distributional evaluation grid: 50 evenly spaced levels in
/// (0, 1].
pub fn default_alpha_grid() -> Vec<RiskLevel> {
    (1..=50)
        .map(|i| RiskLevel::new(i as f64 / 50.0).expect("grid level in (0, 1]"))
        .collect()
}

/// AUC summary of one method evaluated over an alpha grid (or a single point
/// evaluation for expectation methods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub max_auc: f64,
    pub best_alpha: Option<f64>,
    /// Mean AUC over all alpha settings; distributional methods only.
    pub mean_auc_over_alphas: Option<f64>,
    pub min_security_gap: f64,
}

/// Evaluate one assessor's AUC over the alpha grid (distributional) or its
/// single operating point (expectation).
pub fn auc_summary(
    assessor: &RiskAssessor,
    trajectories: &[TrajectoryRecord],
    alphas: &[RiskLevel],
    n_thresholds: usize,
    base_seed: u64,
) -> Result<AucSummary> {
    let grid: Vec<RiskLevel> = if assessor.method.is_distributional() {
        alphas.to_vec()
    } else {
        vec![assessor.alpha]
    };
    let scored = score_trajectories(assessor, trajectories, &grid, base_seed)?;
    let mut aucs = Vec::with_capacity(grid.len());
    for scores in &scored.scores {
        aucs.push(auc(&roc_from_scores(scores, &scored.outcomes, n_thresholds)?)?);
    }
    let (best_idx, &max_auc) = aucs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("grid is nonempty");
    Ok(AucSummary {
        max_auc,
        best_alpha: assessor
            .method
            .is_distributional()
            .then(|| grid[best_idx].value()),
        mean_auc_over_alphas: assessor
            .method
            .is_distributional()
            .then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        min_security_gap: scored.min_security_gap,
    })
}

// ---------------------------------------------------------------------------
// Trained sweeps
// ---------------------------------------------------------------------------

/// A trained D/R head pair with its training logs.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub d_head: ValueHead,
    pub r_head: ValueHead,
    pub d_log: TrainLog,
    pub r_log: TrainLog,
}

/// Train the D and R heads for one method cell. Head seeds derive from
/// `cfg.seed` and the head mode, so cells trained from the same config share
/// initializations where architectures match.
pub fn train_pair(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    kind: HeadKind,
    use_cql: bool,
) -> Result<TrainedPair> {
    let mut cfg_d = cfg.clone();
    cfg_d.seed = derive_seed(cfg.seed, "head-d");
    let (d_head, d_log) = train(ds, RewardMode::D, &cfg_d, kind, use_cql)?;
    let mut cfg_r = cfg.clone();
    cfg_r.seed = derive_seed(cfg.seed, "head-r");
    let (r_head, r_log) = train(ds, RewardMode::R, &cfg_r, kind, use_cql)?;
    Ok(TrainedPair {
        d_head,
        r_head,
        d_log,
        r_log,
    })
}

/// Build an assessor around a trained pair using the method's default
/// thresholds and the config's evaluation particle count.
pub fn assessor_for(pair: &TrainedPair, method: Method, alpha: f64, cfg: &TrainConfig) -> Result<RiskAssessor> {
    let (delta_d, delta_r) = method.default_thresholds();
    RiskAssessor::new(
        pair.d_head.clone(),
        pair.r_head.clone(),
        method,
        RiskLevel::new(alpha)?,
        delta_d,
        delta_r,
        cfg.k_eval,
    )
}

/// One cell of the architecture-by-penalty ablation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCell {
    pub method: Method,
    pub kind: HeadKind,
    pub use_cql: bool,
    pub summary: AucSummary,
}

/// Train and evaluate all four method cells on shared data and seeds.
pub fn ablation_matrix(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    trajectories: &[TrajectoryRecord],
    alphas: &[RiskLevel],
    n_thresholds: usize,
    eval_seed: u64,
) -> Result<Vec<AblationCell>> {
    if ds.n_negative_terminals() == 0 || ds.n_positive_terminals() == 0 {
        return Err(Error::Eval("ablation needs a dataset with both outcomes".into()));
    }
    let mut cells = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let mut cell_cfg = cfg.clone();
        if !method.uses_cql() {
            cell_cfg.beta = 0.0;
        }
        let pair = train_pair(ds, &cell_cfg, method.head_kind(), method.uses_cql())?;
        let assessor = assessor_for(&pair, method, 0.1, &cell_cfg)?;
        let summary = auc_summary(&assessor, trajectories, alphas, n_thresholds, eval_seed)?;
        cells.push(AblationCell {
            method,
            kind: method.head_kind(),
            use_cql: method.uses_cql(),
            summary,
        });
    }
    Ok(cells)
}

/// Tabular output of one evaluation sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: Method,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub data_fraction: Option<f64>,
    pub tuned: bool,
    pub summary: AucSummary,
}

/// Retrain the distributional method per beta and evaluate its AUC-over-alpha
/// profile. `tuned_beta` marks the externally tuned setting in the report.
#[allow(clippy::too_many_arguments)]
pub fn beta_sweep(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    betas: &[f64],
    tuned_beta: f64,
    trajectories: &[TrajectoryRecord],
    alphas: &[RiskLevel],
    n_thresholds: usize,
    eval_seed: u64,
) -> Result<Vec<SweepReport>> {
    if betas.is_empty() {
        return Err(Error::Usage("empty beta grid".into()));
    }
    let mut reports = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut cell_cfg = cfg.clone();
        cell_cfg.beta = beta;
        let pair = train_pair(ds, &cell_cfg, HeadKind::Iqn, true)?;
        let assessor = assessor_for(&pair, Method::DistDed, 0.1, &cell_cfg)?;
        let summary = auc_summary(&assessor, trajectories, alphas, n_thresholds, eval_seed)?;
        reports.push(SweepReport {
            method: Method::DistDed,
            alpha: summary.best_alpha,
            beta: Some(beta),
            data_fraction: None,
            tuned: beta == tuned_beta,
            summary,
        });
    }
    Ok(reports)
}

/// Retrain DeD and DistDeD on outcome-ratio-preserving subsets and report the
/// per-fraction AUC cells. Training always uses `cfg.seed` and evaluation
/// always uses `eval_seed`, so the fraction-1.0 cells reproduce the
/// corresponding ablation cells exactly when both are given the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn data_fraction_sweep(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    fractions: &[f64],
    trajectories: &[TrajectoryRecord],
    alphas: &[RiskLevel],
    n_thresholds: usize,
    subsample_seed: u64,
    eval_seed: u64,
) -> Result<Vec<SweepReport>> {
    if fractions.is_empty() {
        return Err(Error::Usage("empty fraction grid".into()));
    }
    let mut reports = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(subsample_seed, &format!("subsample/{fi}")));
        let subset = ds.subsample(fraction, &mut rng)?;
        for method in [Method::Ded, Method::DistDed] {
            let mut cell_cfg = cfg.clone();
            if !method.uses_cql() {
                cell_cfg.beta = 0.0;
            }
            let pair = train_pair(&subset, &cell_cfg, method.head_kind(), method.uses_cql())?;
            let assessor = assessor_for(&pair, method, 0.1, &cell_cfg)?;
            let summary = auc_summary(&assessor, trajectories, alphas, n_thresholds, eval_seed)?;
            reports.push(SweepReport {
                method,
                alpha: summary.best_alpha,
                beta: method.uses_cql().then_some(cell_cfg.beta),
                data_fraction: Some(fraction),
                tuned: false,
                summary,
            });
        }
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// Threshold-selection histograms
// ---------------------------------------------------------------------------

/// One bin of the assessed-value histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub head: RewardMode,
    pub outcome: Outcome,
    pub steps_to_end_lo: usize,
    pub steps_to_end_hi: usize,
    pub value_lo: f64,
    pub value_hi: f64,
    pub count: usize,
}

/// Histograms of per-state median values, bucketed by steps remaining until
/// termination and split by outcome class, for threshold selection by
/// inspection.
#[allow(clippy::needless_range_loop)]
pub fn threshold_histograms(
    assessor: &RiskAssessor,
    trajectories: &[TrajectoryRecord],
    time_bins: usize,
    value_bins: usize,
    base_seed: u64,
) -> Result<Vec<HistogramRow>> {
    if trajectories.is_empty() {
        return Err(Error::Usage("no trajectories to assess".into()));
    }
    if time_bins == 0 || value_bins == 0 {
        return Err(Error::Usage("bin counts must be >= 1".into()));
    }
    let max_len = trajectories
        .iter()
        .map(|t| t.transitions.len())
        .max()
        .unwrap();
    let outcomes = [Outcome::Positive, Outcome::Negative, Outcome::Timeout];
    // counts[head][outcome][time_bin][value_bin]
    let mut counts = vec![vec![vec![vec![0usize; value_bins]; time_bins]; outcomes.len()]; 2];
    let time_bin_of = |steps_remaining: usize| -> usize {
        ((steps_remaining - 1) * time_bins / max_len).min(time_bins - 1)
    };
    let value_bin_of = |v: f64, support: (f64, f64)| -> usize {
        let frac = (v - support.0) / (support.1 - support.0);
        ((frac * value_bins as f64) as usize).min(value_bins - 1)
    };
    for (ti, traj) in trajectories.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, &format!("hist/{ti}")));
        let oi = outcomes.iter().position(|&o| o == traj.outcome).unwrap();
        let len = traj.transitions.len();
        for (si, t) in traj.transitions.iter().enumerate() {
            let a = assessor.assess_state(&t.state, &mut rng)?;
            let tb = time_bin_of(len - si);
            counts[0][oi][tb][value_bin_of(a.median_d, assessor.d_head.support)] += 1;
            counts[1][oi][tb][value_bin_of(a.median_r, assessor.r_head.support)] += 1;
        }
    }
    // Bin b holds steps-remaining values with (sr - 1) * time_bins / max_len
    // == b, i.e. the half-open stripe (b*L/B, (b+1)*L/B] after the -1 shift.
    let ceil_div = |a: usize, b: usize| a.div_ceil(b);
    let mut rows = Vec::new();
    for (hi, head) in [RewardMode::D, RewardMode::R].into_iter().enumerate() {
        let support = if hi == 0 {
            assessor.d_head.support
        } else {
            assessor.r_head.support
        };
        let width = (support.1 - support.0) / value_bins as f64;
        for (oi, &outcome) in outcomes.iter().enumerate() {
            for tb in 0..time_bins {
                let lo = ceil_div(tb * max_len, time_bins) + 1;
                let hi_steps = ceil_div((tb + 1) * max_len, time_bins).min(max_len);
                for vb in 0..value_bins {
                    rows.push(HistogramRow {
                        head,
                        outcome,
                        steps_to_end_lo: lo,
                        steps_to_end_hi: hi_steps.max(lo),
                        value_lo: support.0 + vb as f64 * width,
                        value_hi: support.0 + (vb + 1) as f64 * width,
                        count: counts[hi][oi][tb][vb],
                    });
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

pub fn write_roc_csv(path: &std::path::Path, points: &[RocPoint]) -> Result<()> {
    let mut out = String::from("delta_d,delta_r,tpr,fpr\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.delta_d, p.delta_r, p.tpr, p.fpr));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_gaps_csv(path: &std::path::Path, report: &EarlyWarningReport) -> Result<()> {
    let mut out = String::from("assessor,trajectory,alarm,zone_entry,gap\n");
    let fmt_opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (label, samples) in report.labels.iter().zip(&report.samples) {
        for s in samples {
            out.push_str(&format!(
                "{label},{},{},{},{}\n",
                s.trajectory,
                fmt_opt(s.alarm.map(|a| a as i64)),
                fmt_opt(s.zone_entry.map(|z| z as i64)),
                fmt_opt(s.gap()),
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_sweep_csv(path: &std::path::Path, reports: &[SweepReport]) -> Result<()> {
    let mut out = String::from(
        "method,alpha,beta,data_fraction,tuned,max_auc,best_alpha,mean_auc_over_alphas,min_security_gap\n",
    );
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            fmt_opt(r.alpha),
            fmt_opt(r.beta),
            fmt_opt(r.data_fraction),
            r.tuned,
            r.summary.max_auc,
            fmt_opt(r.summary.best_alpha),
            fmt_opt(r.summary.mean_auc_over_alphas),
            r.summary.min_security_gap,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_ablation_csv(path: &std::path::Path, cells: &[AblationCell]) -> Result<()> {
    let mut out =
        String::from("method,architecture,cql,max_auc,best_alpha,mean_auc_over_alphas,min_security_gap\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in cells {
        out.push_str(&format!(
            "{},{:?},{},{},{},{},{}\n",
            c.method,
            c.kind,
            c.use_cql,
            c.summary.max_auc,
            fmt_opt(c.summary.best_alpha),
            fmt_opt(c.summary.mean_auc_over_alphas),
            c.summary.min_security_gap,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_histograms_csv(path: &std::path::Path, rows: &[HistogramRow]) -> Result<()> {
    let mut out =
        String::from("head,outcome,steps_to_end_lo,steps_to_end_hi,value_lo,value_hi,count\n");
    for r in rows {
        out.push_str(&format!(
            "{:?},{:?},{},{},{},{},{}\n",
            r.head, r.outcome, r.steps_to_end_lo, r.steps_to_end_hi, r.value_lo, r.value_hi, r.count
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

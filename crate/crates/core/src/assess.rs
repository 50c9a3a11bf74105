//! The dead-end decision layer.
//!
//! Per-action avoidance flags (both value estimates at or below their
//! thresholds), the median-over-actions dead-end rule, the trajectory alarm
//! score `(median_d + (median_r - 1)) / 2`, and the security-bound check that
//! the per-action particle mean never falls below its CVaR.
//!
//! Distributional assessors share one freshly drawn tau sample set per state,
//! reused across the D and R heads and across actions, so the bound check is
//! exact on the particles actually used.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{RewardMode, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::learner::{HeadKind, IqnCache, ValueHead};
use crate::risk::{EmpiricalReturnDistribution, RiskLevel};

/// Assessment method; distributional variants require IQN heads, expectation
/// variants require DDQN heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ded,
    DedCql,
    DistDed,
    DistDedNoCql,
}

impl Method {
    pub fn is_distributional(self) -> bool {
        matches!(self, Method::DistDed | Method::DistDedNoCql)
    }

    pub fn uses_cql(self) -> bool {
        matches!(self, Method::DedCql | Method::DistDed)
    }

    pub fn head_kind(self) -> HeadKind {
        if self.is_distributional() {
            HeadKind::Iqn
        } else {
            HeadKind::Ddqn
        }
    }

    /// Default alarm thresholds (delta_d, delta_r) for the method family.
    pub fn default_thresholds(self) -> (f64, f64) {
        if self.is_distributional() {
            (-0.5, 0.5)
        } else {
            (-0.15, 0.85)
        }
    }

    pub const ALL: [Method; 4] = [Method::Ded, Method::DedCql, Method::DistDed, Method::DistDedNoCql];
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Ded => "ded",
            Method::DedCql => "ded-cql",
            Method::DistDed => "distded",
            Method::DistDedNoCql => "distded-nocql",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ded" => Ok(Method::Ded),
            "ded-cql" => Ok(Method::DedCql),
            "distded" => Ok(Method::DistDed),
            "distded-nocql" => Ok(Method::DistDedNoCql),
            other => Err(Error::Usage(format!(
                "unknown method '{other}' (expected ded, ded-cql, distded, distded-nocql)"
            ))),
        }
    }
}

/// True when an action should be avoided: both estimates at or below their
/// thresholds (inclusive on both sides).
pub fn flag_action(value_d: f64, value_r: f64, delta_d: f64, delta_r: f64) -> bool {
    value_d <= delta_d && value_r <= delta_r
}

/// Middle element for odd counts, mean of the two middle elements for even.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("median of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Dead-end rule: both per-action medians at or below their thresholds.
pub fn is_dead_end(
    per_action_d: &[f64],
    per_action_r: &[f64],
    delta_d: f64,
    delta_r: f64,
) -> Result<bool> {
    if per_action_d.len() != per_action_r.len() {
        return Err(Error::Shape(format!(
            "{} D values vs {} R values",
            per_action_d.len(),
            per_action_r.len()
        )));
    }
    Ok(median(per_action_d)? <= delta_d && median(per_action_r)? <= delta_r)
}

/// Trajectory risk score for one state, in [-1, 0].
pub fn alarm_score(median_d: f64, median_r: f64) -> f64 {
    (median_d + (median_r - 1.0)) / 2.0
}

/// Everything derived from one state evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateAssessment {
    /// Per-action D-head estimates (CVaR_alpha for distributional methods).
    pub value_d: Vec<f64>,
    /// Per-action R-head estimates.
    pub value_r: Vec<f64>,
    pub avoid: Vec<bool>,
    pub median_d: f64,
    pub median_r: f64,
    pub is_dead_end: bool,
    pub alarm_score: f64,
}

/// Per-action `mean(particles) - CVaR_alpha(particles)` on the shared
/// evaluation sample set. A nonnegative gap certifies that the CVaR-based
/// verdict is at least as conservative as the expectation-based one on the
/// particles actually evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityGap {
    pub d: Vec<f64>,
    pub r: Vec<f64>,
}

/// Medians per alpha level from one shared particle evaluation, plus the
/// smallest mean-minus-CVaR gap observed across actions, heads, and levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAssessment {
    /// `(median_d, median_r)` parallel to the requested alpha grid.
    pub medians: Vec<(f64, f64)>,
    pub min_security_gap: f64,
}

/// A paired D-/R-head with its thresholds, producing per-state verdicts.
#[derive(Debug, Clone)]
pub struct RiskAssessor {
    pub d_head: ValueHead,
    pub r_head: ValueHead,
    pub method: Method,
    pub alpha: RiskLevel,
    pub delta_d: f64,
    pub delta_r: f64,
    pub k_eval: usize,
    /// Draw a fresh tau set for each head instead of sharing one per state.
    /// The mean-vs-CVaR bound then holds per head on its own particles.
    pub independent_taus: bool,
}

impl RiskAssessor {
    pub fn new(
        d_head: ValueHead,
        r_head: ValueHead,
        method: Method,
        alpha: RiskLevel,
        delta_d: f64,
        delta_r: f64,
        k_eval: usize,
    ) -> Result<Self> {
        if d_head.kind != method.head_kind() || r_head.kind != method.head_kind() {
            return Err(Error::Method(format!(
                "method {method} needs {:?} heads, got D: {:?}, R: {:?}",
                method.head_kind(),
                d_head.kind,
                r_head.kind
            )));
        }
        if d_head.mode != RewardMode::D || r_head.mode != RewardMode::R {
            return Err(Error::Method("assessor needs a D-mode and an R-mode head".into()));
        }
        if d_head.action_count != r_head.action_count {
            return Err(Error::Shape("D and R heads disagree on action count".into()));
        }
        if !(-1.0..=0.0).contains(&delta_d) {
            return Err(Error::Config(format!("delta_d {delta_d} outside [-1, 0]")));
        }
        if !(0.0..=1.0).contains(&delta_r) {
            return Err(Error::Config(format!("delta_r {delta_r} outside [0, 1]")));
        }
        if k_eval == 0 {
            return Err(Error::Config("k_eval must be >= 1".into()));
        }
        Ok(Self {
            d_head,
            r_head,
            method,
            alpha,
            delta_d,
            delta_r,
            k_eval,
            independent_taus: false,
        })
    }

    pub fn with_independent_taus(mut self) -> Self {
        self.independent_taus = true;
        self
    }

    pub fn action_count(&self) -> usize {
        self.d_head.action_count
    }

    /// Evaluate both heads on one shared tau set (or a fresh set per head
    /// when independent resampling is on); per-action clamped particle
    /// distributions, D first, then R.
    fn particles<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<EmpiricalReturnDistribution>, Vec<EmpiricalReturnDistribution>)> {
        let k = self.k_eval;
        let a = self.action_count();
        let mut taus: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let mut cache = IqnCache::default();
        let mut flat = Vec::new();
        let mut out = (Vec::with_capacity(a), Vec::with_capacity(a));
        for (i, (head, dists)) in [(&self.d_head, &mut out.0), (&self.r_head, &mut out.1)]
            .into_iter()
            .enumerate()
        {
            if i > 0 && self.independent_taus {
                for t in taus.iter_mut() {
                    *t = rng.gen::<f64>();
                }
            }
            head.eval_quantiles_into(state, &taus, &mut cache, &mut flat)?;
            for action in 0..a {
                let samples: Vec<f64> = (0..k).map(|r| flat[r * a + action]).collect();
                dists.push(EmpiricalReturnDistribution::new(
                    samples,
                    head.support.0,
                    head.support.1,
                )?);
            }
        }
        Ok(out)
    }

    fn point_estimates(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.d_head.point_values(state)?,
            self.r_head.point_values(state)?,
        ))
    }

    /// Assess one state: per-action values (CVaR_alpha of a shared particle
    /// set for distributional methods, point estimates otherwise), avoidance
    /// flags, medians, the dead-end verdict, and the alarm score.
    pub fn assess_state<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<StateAssessment> {
        let (value_d, value_r) = if self.method.is_distributional() {
            let (d, r) = self.particles(state, rng)?;
            (
                d.iter().map(|p| p.cvar_alpha(self.alpha)).collect::<Vec<f64>>(),
                r.iter().map(|p| p.cvar_alpha(self.alpha)).collect::<Vec<f64>>(),
            )
        } else {
            self.point_estimates(state)?
        };
        self.assemble(value_d, value_r)
    }

    fn assemble(&self, value_d: Vec<f64>, value_r: Vec<f64>) -> Result<StateAssessment> {
        let avoid: Vec<bool> = value_d
            .iter()
            .zip(&value_r)
            .map(|(&d, &r)| flag_action(d, r, self.delta_d, self.delta_r))
            .collect();
        let median_d = median(&value_d)?;
        let median_r = median(&value_r)?;
        let dead_end = median_d <= self.delta_d && median_r <= self.delta_r;
        Ok(StateAssessment {
            avoid,
            median_d,
            median_r,
            is_dead_end: dead_end,
            alarm_score: alarm_score(median_d, median_r),
            value_d,
            value_r,
        })
    }

    /// Per-action `mean - CVaR_alpha` over one shared particle draw; both
    /// quantities come from the same sorted prefix sums, so the gap is exact
    /// at `alpha = 1`. Distributional methods only.
    pub fn security_gap<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<SecurityGap> {
        if !self.method.is_distributional() {
            return Err(Error::Method(format!(
                "security gap requires a distributional method, got {}",
                self.method
            )));
        }
        let levels = [self.alpha, RiskLevel::new(1.0)?];
        let (d, r) = self.particles(state, rng)?;
        let gap = |dists: &[EmpiricalReturnDistribution]| -> Result<Vec<f64>> {
            dists
                .iter()
                .map(|p| {
                    let s = p.cvar_spectrum(&levels)?;
                    Ok(s[1] - s[0])
                })
                .collect()
        };
        Ok(SecurityGap {
            d: gap(&d)?,
            r: gap(&r)?,
        })
    }

    /// Medians over the whole alpha grid from one shared particle draw,
    /// together with the smallest observed mean-minus-CVaR gap. Expectation
    /// methods report their single point medians for every level.
    pub fn assess_spectrum<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        alphas: &[RiskLevel],
        rng: &mut R,
    ) -> Result<SpectrumAssessment> {
        if alphas.is_empty() {
            return Err(Error::Domain("empty alpha grid".into()));
        }
        if !self.method.is_distributional() {
            let (d, r) = self.point_estimates(state)?;
            let m = (median(&d)?, median(&r)?);
            return Ok(SpectrumAssessment {
                medians: vec![m; alphas.len()],
                min_security_gap: 0.0,
            });
        }
        let (d, r) = self.particles(state, rng)?;
        // One spectrum per action, with alpha = 1 appended as the mean.
        let mut levels = alphas.to_vec();
        levels.push(RiskLevel::new(1.0)?);
        let spectra = |dists: &[EmpiricalReturnDistribution]| -> Result<Vec<Vec<f64>>> {
            dists.iter().map(|p| p.cvar_spectrum(&levels)).collect()
        };
        let spec_d = spectra(&d)?;
        let spec_r = spectra(&r)?;
        let mut min_gap = f64::INFINITY;
        for spec in spec_d.iter().chain(&spec_r) {
            let mean = spec[alphas.len()];
            for v in &spec[..alphas.len()] {
                min_gap = min_gap.min(mean - v);
            }
        }
        let mut medians = Vec::with_capacity(alphas.len());
        let mut vd = vec![0.0; self.action_count()];
        let mut vr = vec![0.0; self.action_count()];
        for ai in 0..alphas.len() {
            for (a, spec) in spec_d.iter().enumerate() {
                vd[a] = spec[ai];
            }
            for (a, spec) in spec_r.iter().enumerate() {
                vr[a] = spec[ai];
            }
            medians.push((median(&vd)?, median(&vr)?));
        }
        Ok(SpectrumAssessment {
            medians,
            min_security_gap: min_gap,
        })
    }

    /// First step index whose alarm score is at or below `delta_d`; `None`
    /// when the trajectory never alarms.
    pub fn trajectory_alarm<R: Rng + ?Sized>(
        &self,
        trajectory: &TrajectoryRecord,
        rng: &mut R,
    ) -> Result<Option<usize>> {
        if trajectory.transitions.is_empty() {
            return Err(Error::Domain("empty trajectory".into()));
        }
        for (i, t) in trajectory.transitions.iter().enumerate() {
            let a = self.assess_state(&t.state, rng)?;
            if a.alarm_score <= self.delta_d {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }
}

/// One row of the assessment export.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRow {
    pub trajectory: usize,
    pub step: usize,
    pub median_d: f64,
    pub median_r: f64,
    pub alarm_score: f64,
    pub is_dead_end: bool,
    pub alarm: bool,
}

pub fn write_assessment_csv(path: &std::path::Path, rows: &[AssessmentRow]) -> Result<()> {
    let mut out = String::from("trajectory,step,median_d,median_r,alarm_score,is_dead_end,alarm\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.trajectory, r.step, r.median_d, r.median_r, r.alarm_score, r.is_dead_end, r.alarm
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ValueHead;
    use crate::net::{DenseNet, QuantileEmbedding};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// An IQN head whose output is a constant per action.
    fn constant_iqn_head(mode: RewardMode, bias: &[f64]) -> ValueHead {
        let mut head =
            ValueHead::new(HeadKind::Iqn, mode, 2, &[8, 8], 8, bias.len(), &mut rng(0)).unwrap();
        head.online = DenseNet::zeroed(head.online.layer_dims()).unwrap();
        head.online_embed = Some(QuantileEmbedding::zeroed(8, 8).unwrap());
        head.online.layers.last_mut().unwrap().biases.copy_from_slice(bias);
        head.target = head.online.clone();
        head.target_embed = head.online_embed.clone();
        head
    }

    fn constant_ddqn_head(mode: RewardMode, bias: &[f64]) -> ValueHead {
        let mut head =
            ValueHead::new(HeadKind::Ddqn, mode, 2, &[8, 8], 8, bias.len(), &mut rng(0)).unwrap();
        head.online = DenseNet::zeroed(head.online.layer_dims()).unwrap();
        head.online.layers.last_mut().unwrap().biases.copy_from_slice(bias);
        head.target = head.online.clone();
        head
    }

    fn dist_assessor(d_bias: &[f64], r_bias: &[f64], alpha: f64, dd: f64, dr: f64) -> RiskAssessor {
        RiskAssessor::new(
            constant_iqn_head(RewardMode::D, d_bias),
            constant_iqn_head(RewardMode::R, r_bias),
            Method::DistDed,
            RiskLevel::new(alpha).unwrap(),
            dd,
            dr,
            64,
        )
        .unwrap()
    }

    #[test]
    fn default_thresholds_per_method_family() {
        assert_eq!(Method::Ded.default_thresholds(), (-0.15, 0.85));
        assert_eq!(Method::DedCql.default_thresholds(), (-0.15, 0.85));
        assert_eq!(Method::DistDed.default_thresholds(), (-0.5, 0.5));
        assert_eq!(Method::DistDedNoCql.default_thresholds(), (-0.5, 0.5));
    }

    #[test]
    fn flag_rule_is_inclusive_conjunction() {
        assert!(flag_action(-0.8, 0.1, -0.5, 0.5));
        assert!(!flag_action(-0.8, 0.9, -0.5, 0.5)); // R side clears
        assert!(flag_action(-0.5, 0.5, -0.5, 0.5)); // boundary inclusive
        assert!(!flag_action(-0.4, 0.1, -0.5, 0.5));
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[-0.9, -0.8, -0.6, -0.1, 0.0]).unwrap(), -0.6);
        assert_eq!(median(&[-1.0, -0.6, -0.4, 0.0]).unwrap(), -0.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn dead_end_rule_examples() {
        let d = [-0.9, -0.8, -0.6, -0.1, 0.0];
        let r = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!(is_dead_end(&d, &r, -0.5, 0.5).unwrap());
        let zeros = [0.0; 5];
        assert!(!is_dead_end(&zeros, &r, -0.5, 0.5).unwrap());
    }

    #[test]
    fn constant_heads_flag_everything() {
        let a = dist_assessor(&[-0.9; 5], &[0.05; 5], 0.1, -0.5, 0.5);
        let s = a.assess_state(&[0.4, 0.4], &mut rng(1)).unwrap();
        assert!(s.avoid.iter().all(|&f| f));
        assert!(s.is_dead_end);
        assert!((s.median_d + 0.9).abs() < 1e-12);
        assert!((s.alarm_score - (-0.9 + (0.05 - 1.0)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn healthy_heads_flag_nothing() {
        let a = dist_assessor(&[0.0; 5], &[1.0; 5], 0.1, -0.5, 0.5);
        let s = a.assess_state(&[0.4, 0.4], &mut rng(1)).unwrap();
        assert!(s.avoid.iter().all(|&f| !f));
        assert!(!s.is_dead_end);
        assert_eq!(s.alarm_score, 0.0);
    }

    #[test]
    fn cvar_values_never_exceed_particle_means() {
        // Trained-looking head: random weights produce varied quantiles.
        let d = ValueHead::new(HeadKind::Iqn, RewardMode::D, 2, &[16, 16], 16, 5, &mut rng(3)).unwrap();
        let r = ValueHead::new(HeadKind::Iqn, RewardMode::R, 2, &[16, 16], 16, 5, &mut rng(4)).unwrap();
        let a = RiskAssessor::new(
            d,
            r,
            Method::DistDedNoCql,
            RiskLevel::new(0.2).unwrap(),
            -0.5,
            0.5,
            256,
        )
        .unwrap();
        let mut r = rng(5);
        for i in 0..20 {
            let state = [i as f64 / 20.0, 1.0 - i as f64 / 20.0];
            let gap = a.security_gap(&state, &mut r).unwrap();
            for g in gap.d.iter().chain(&gap.r) {
                assert!(*g >= -1e-12, "gap {g}");
            }
        }
    }

    #[test]
    fn security_gap_zero_for_constant_and_alpha_one() {
        let a = dist_assessor(&[-0.3; 5], &[0.7; 5], 0.1, -0.5, 0.5);
        let gap = a.security_gap(&[0.2, 0.2], &mut rng(7)).unwrap();
        assert!(gap.d.iter().chain(&gap.r).all(|&g| g.abs() < 1e-12));

        let a1 = dist_assessor(&[-0.3; 5], &[0.7; 5], 1.0, -0.5, 0.5);
        let gap = a1.security_gap(&[0.2, 0.2], &mut rng(7)).unwrap();
        assert!(gap.d.iter().chain(&gap.r).all(|&g| g == 0.0));
    }

    #[test]
    fn expectation_method_rejects_security_gap() {
        let a = RiskAssessor::new(
            constant_ddqn_head(RewardMode::D, &[0.0; 5]),
            constant_ddqn_head(RewardMode::R, &[1.0; 5]),
            Method::Ded,
            RiskLevel::new(0.1).unwrap(),
            -0.15,
            0.85,
            64,
        )
        .unwrap();
        assert!(matches!(a.security_gap(&[0.1, 0.1], &mut rng(0)), Err(Error::Method(_))));
    }

    #[test]
    fn method_head_kind_mismatch_rejected() {
        let d = constant_ddqn_head(RewardMode::D, &[0.0; 5]);
        let r = constant_ddqn_head(RewardMode::R, &[1.0; 5]);
        let err = RiskAssessor::new(
            d,
            r,
            Method::DistDed,
            RiskLevel::new(0.1).unwrap(),
            -0.5,
            0.5,
            64,
        );
        assert!(matches!(err, Err(Error::Method(_))));
    }

    #[test]
    fn trajectory_alarm_first_crossing() {
        use crate::dataset::Transition;
        use crate::lifegate::Outcome;
        // Alarm score of a constant-head assessor does not depend on the
        // state, so exercise the rule through two assessors: one that never
        // alarms and one that always does.
        let never = dist_assessor(&[0.0; 5], &[1.0; 5], 0.1, -0.5, 0.5);
        let always = dist_assessor(&[-0.9; 5], &[0.1; 5], 0.1, -0.5, 0.5);
        let traj = TrajectoryRecord {
            transitions: (0..3)
                .map(|i| Transition {
                    state: vec![i as f64 / 3.0, 0.0],
                    action: 0,
                    next_state: vec![(i + 1) as f64 / 3.0, 0.0],
                    terminal: i == 2,
                    outcome: (i == 2).then_some(Outcome::Negative),
                })
                .collect(),
            outcome: Outcome::Negative,
            zone_entry_index: Some(2),
        };
        assert_eq!(never.trajectory_alarm(&traj, &mut rng(1)).unwrap(), None);
        assert_eq!(always.trajectory_alarm(&traj, &mut rng(1)).unwrap(), Some(0));
    }

    #[test]
    fn alarm_score_range() {
        for (md, mr) in [(-1.0, 0.0), (0.0, 1.0), (-0.3, 0.6)] {
            let s = alarm_score(md, mr);
            assert!((-1.0..=0.0).contains(&s), "score {s}");
        }
    }

    #[test]
    fn independent_tau_resampling_still_bounds_each_head() {
        let d = ValueHead::new(HeadKind::Iqn, RewardMode::D, 2, &[16, 16], 16, 5, &mut rng(13)).unwrap();
        let r = ValueHead::new(HeadKind::Iqn, RewardMode::R, 2, &[16, 16], 16, 5, &mut rng(14)).unwrap();
        let shared = RiskAssessor::new(
            d,
            r,
            Method::DistDedNoCql,
            RiskLevel::new(0.2).unwrap(),
            -0.5,
            0.5,
            128,
        )
        .unwrap();
        let independent = shared.clone().with_independent_taus();
        let state = [0.4, 0.7];
        // Same rng seed: the D-head set matches, the R-head set diverges.
        let a = shared.assess_state(&state, &mut rng(21)).unwrap();
        let b = independent.assess_state(&state, &mut rng(21)).unwrap();
        assert_eq!(a.value_d, b.value_d);
        assert_ne!(a.value_r, b.value_r);
        // The bound still holds on each head's own particle set.
        let gap = independent.security_gap(&state, &mut rng(22)).unwrap();
        assert!(gap.d.iter().chain(&gap.r).all(|&g| g >= -1e-12));
    }

    #[test]
    fn spectrum_flags_monotone_in_alpha() {
        // Lowering alpha can only lower CVaR values, so flag sets grow.
        let d = ValueHead::new(HeadKind::Iqn, RewardMode::D, 2, &[16, 16], 16, 5, &mut rng(8)).unwrap();
        let r = ValueHead::new(HeadKind::Iqn, RewardMode::R, 2, &[16, 16], 16, 5, &mut rng(9)).unwrap();
        let assessor = RiskAssessor::new(
            d,
            r,
            Method::DistDedNoCql,
            RiskLevel::new(0.1).unwrap(),
            -0.5,
            0.5,
            128,
        )
        .unwrap();
        let alphas: Vec<RiskLevel> = (1..=10).map(|i| RiskLevel::new(i as f64 / 10.0).unwrap()).collect();
        let mut r = rng(10);
        for i in 0..10 {
            let state = [i as f64 / 10.0, 0.3];
            let spec = assessor.assess_spectrum(&state, &alphas, &mut r).unwrap();
            assert!(spec.min_security_gap >= -1e-12);
            for w in spec.medians.windows(2) {
                // medians nondecreasing in alpha for both heads
                assert!(w[0].0 <= w[1].0 + 1e-12);
                assert!(w[0].1 <= w[1].1 + 1e-12);
            }
        }
    }
}

//! Empirical value-at-risk and conditional value-at-risk over sampled return
//! particles, plus a brute-force dual-representation reference used by tests.

use crate::error::{Error, Result};

/// A confidence level in `(0, 1]`. `alpha = 1` recovers the plain expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Domain(format!("alpha {alpha} outside (0, 1]")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Number of samples in the lower alpha-tail: `ceil(alpha * k)`, clamped to `[1, k]`.
///
/// Products that land within 1e-9 of an integer are snapped to it so that
/// e.g. `alpha = 0.1, k = 10` selects exactly one sample.
fn tail_count(alpha: f64, k: usize) -> usize {
    let t = alpha * k as f64;
    let r = t.round();
    let m = if (t - r).abs() < 1e-9 { r } else { t.ceil() };
    (m as usize).clamp(1, k)
}

/// K uniformly weighted return particles for one (state, action), clamped to
/// a declared support interval on construction.
///
/// Samples are held unordered; every operation sorts a working copy (or the
/// shared copy for [`cvar_spectrum`]) rather than assuming sortedness.
///
/// [`cvar_spectrum`]: EmpiricalReturnDistribution::cvar_spectrum
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReturnDistribution {
    samples: Vec<f64>,
    support_lo: f64,
    support_hi: f64,
}

impl EmpiricalReturnDistribution {
    pub fn new(mut samples: Vec<f64>, support_lo: f64, support_hi: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("empty sample set".into()));
        }
        if !support_lo.is_finite() || !support_hi.is_finite() || support_lo > support_hi {
            return Err(Error::Domain(format!(
                "support [{support_lo}, {support_hi}] is not a finite interval"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite return sample".into()));
        }
        for s in &mut samples {
            *s = s.clamp(support_lo, support_hi);
        }
        Ok(Self {
            samples,
            support_lo,
            support_hi,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support_lo, self.support_hi)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    fn sorted(&self) -> Vec<f64> {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }

    /// Empirical value-at-risk: the `ceil(alpha * K)`-th smallest sample,
    /// i.e. `min { z | alpha <= F(z) }`.
    pub fn var_alpha(&self, alpha: RiskLevel) -> f64 {
        let sorted = self.sorted();
        sorted[tail_count(alpha.value(), sorted.len()) - 1]
    }

    /// Empirical conditional value-at-risk: the mean of the `ceil(alpha * K)`
    /// smallest samples (sort, take the alpha-fraction of smallest values,
    /// average).
    pub fn cvar_alpha(&self, alpha: RiskLevel) -> f64 {
        let sorted = self.sorted();
        let m = tail_count(alpha.value(), sorted.len());
        sorted[..m].iter().sum::<f64>() / m as f64
    }

    /// CVaR at several levels from one shared sort; per-alpha prefix means.
    pub fn cvar_spectrum(&self, alphas: &[RiskLevel]) -> Result<Vec<f64>> {
        if alphas.is_empty() {
            return Err(Error::Domain("empty alpha list".into()));
        }
        let sorted = self.sorted();
        let mut prefix = Vec::with_capacity(sorted.len());
        let mut acc = 0.0;
        for &s in &sorted {
            acc += s;
            prefix.push(acc);
        }
        Ok(alphas
            .iter()
            .map(|a| {
                let m = tail_count(a.value(), sorted.len());
                prefix[m - 1] / m as f64
            })
            .collect())
    }
}

/// Brute-force dual-representation CVaR: minimize the xi-weighted expectation
/// over the discrete risk envelope (per-sample weights capped at `1/m` with
/// `m = ceil(alpha * K)`, summing to 1).
///
/// The cap is taken at the empirical quantile resolution `m / K`, which is the
/// finest level a K-particle distribution can represent. The greedy minimizer
/// pushes maximal weight onto the smallest samples until the budget is spent.
/// Intended as a test reference; cost is O(K log K) but callers should keep
/// `K <= 10_000`.
pub fn cvar_dual_oracle(dist: &EmpiricalReturnDistribution, alpha: RiskLevel) -> f64 {
    let mut sorted = dist.samples().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = sorted.len();
    // Independent re-derivation of the tail size: snap near-integers, else ceil.
    let t = alpha.value() * k as f64;
    let near = t.round();
    let m = if (t - near).abs() < 1e-9 {
        near as usize
    } else {
        t.ceil() as usize
    }
    .clamp(1, k);
    let cap = 1.0 / m as f64;
    let mut budget = 1.0;
    let mut acc = 0.0;
    for &z in &sorted {
        let w = cap.min(budget);
        acc += w * z;
        budget -= w;
        if budget <= 0.0 {
            break;
        }
    }
    acc
}

//! File-producing entry points behind the CLI commands.
//!
//! Every run writes its report files plus a JSON manifest capturing the seed,
//! the fully resolved settings, and content hashes of inputs and outputs, so
//! the producing command can be re-run exactly. Identical command + seed gives
//! byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::assess::{AssessmentRow, Method, RiskAssessor};
use crate::dataset::{collect_random, OfflineDataset};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::{
    ablation_matrix, beta_sweep, data_fraction_sweep, default_alpha_grid, early_warning_study,
    generate_eval_trajectories, roc_from_scores, score_trajectories, threshold_histograms,
    train_pair, write_ablation_csv, write_gaps_csv, write_histograms_csv, write_roc_csv,
    write_sweep_csv, AblationCell, AucSummary, EarlyWarningReport, RocPoint, SweepReport,
};
use crate::learner::{load_head, save_head, HeadKind, HeadManifest, TrainConfig};
use crate::lifegate::{hand_designed_policies, hex_string, GridSpec, LifeGate};
use crate::risk::RiskLevel;

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

/// Re-run provenance for one command invocation. Output names are relative to
/// the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn manifest_for_outputs(
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    dir: &Path,
    names: &[&str],
) -> Result<RunManifest> {
    let mut outputs = BTreeMap::new();
    for name in names {
        outputs.insert(name.to_string(), file_sha256(&dir.join(name))?);
    }
    Ok(RunManifest {
        command: command.to_string(),
        seed,
        config,
        inputs,
        outputs,
    })
}

/// Build the environment from a pinned spec file, or the default layout.
pub fn load_env(env_spec: Option<&Path>) -> Result<LifeGate> {
    let spec = match env_spec {
        Some(p) => GridSpec::from_json_file(p)?,
        None => GridSpec::default_lifegate(),
    };
    LifeGate::new(spec)
}

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CollectOutput {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub n_transitions: usize,
}

/// Collect a random-policy dataset and write it with a manifest.
pub fn run_collect(
    env_spec: Option<&Path>,
    n_transitions: usize,
    seed: u64,
    out: &Path,
) -> Result<CollectOutput> {
    let env = load_env(env_spec)?;
    let ds = collect_random(&env, n_transitions, seed)?;
    ds.save(out)?;
    let manifest_path = sibling_manifest(out);
    let manifest = RunManifest {
        command: "collect".into(),
        seed,
        config: json!({ "n_transitions": n_transitions, "env_hash": env.env_hash() }),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::from([(file_name(out), file_sha256(out)?)]),
    };
    manifest.write(&manifest_path)?;
    Ok(CollectOutput {
        dataset: out.to_path_buf(),
        manifest: manifest_path,
        n_transitions: ds.len(),
    })
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct TrainOutput {
    pub d_base: PathBuf,
    pub r_base: PathBuf,
    pub pair: crate::eval::TrainedPair,
    pub method: Method,
    pub cfg: TrainConfig,
}

/// Train the D and R heads for one method and write checkpoints, loss CSVs,
/// and a manifest into `out_dir`.
pub fn run_train(
    dataset: &Path,
    method: Method,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutput> {
    if !method.uses_cql() && cfg.beta != 0.0 {
        return Err(Error::Usage(format!(
            "method {method} does not accept a CQL weight (beta = {})",
            cfg.beta
        )));
    }
    let ds = OfflineDataset::load(dataset)?;
    std::fs::create_dir_all(out_dir)?;
    let pair = train_pair(&ds, cfg, method.head_kind(), method.uses_cql())?;

    let d_base = out_dir.join("d_head");
    let r_base = out_dir.join("r_head");
    let env_hash = &ds.meta().env_hash;
    save_head(&pair.d_head, cfg, method.uses_cql(), env_hash, &d_base)?;
    save_head(&pair.r_head, cfg, method.uses_cql(), env_hash, &r_base)?;
    pair.d_log.write_csv(&out_dir.join("train_d.csv"))?;
    pair.r_log.write_csv(&out_dir.join("train_r.csv"))?;

    let manifest = manifest_for_outputs(
        "train",
        cfg.seed,
        json!({ "method": method, "train": cfg }),
        BTreeMap::from([(file_name(dataset), file_sha256(dataset)?)]),
        out_dir,
        &[
            "d_head.json",
            "d_head.bin",
            "r_head.json",
            "r_head.bin",
            "train_d.csv",
            "train_r.csv",
        ],
    )?;
    manifest.write(&out_dir.join("train.manifest.json"))?;
    Ok(TrainOutput {
        d_base,
        r_base,
        pair,
        method,
        cfg: cfg.clone(),
    })
}

/// Load the head pair written by [`run_train`] and rebuild its assessor.
/// The method is recovered from the checkpoint manifests; the environment
/// hash of both heads must match `env` when given.
pub fn load_assessor(
    run_dir: &Path,
    env: Option<&LifeGate>,
    alpha: f64,
    delta_d: Option<f64>,
    delta_r: Option<f64>,
    k_eval: Option<usize>,
) -> Result<(RiskAssessor, HeadManifest)> {
    let (d_head, d_manifest) = load_head(&run_dir.join("d_head"))?;
    let (r_head, r_manifest) = load_head(&run_dir.join("r_head"))?;
    if d_manifest.env_hash != r_manifest.env_hash {
        return Err(Error::Integrity(
            "D and R checkpoints were trained against different environments".into(),
        ));
    }
    if let Some(env) = env {
        if d_manifest.env_hash != env.env_hash() {
            return Err(Error::Integrity(format!(
                "checkpoint environment hash {} does not match the requested environment {}",
                d_manifest.env_hash,
                env.env_hash()
            )));
        }
    }
    let method = match (d_manifest.kind, d_manifest.use_cql) {
        (HeadKind::Ddqn, false) => Method::Ded,
        (HeadKind::Ddqn, true) => Method::DedCql,
        (HeadKind::Iqn, true) => Method::DistDed,
        (HeadKind::Iqn, false) => Method::DistDedNoCql,
    };
    let (dd, dr) = method.default_thresholds();
    let assessor = RiskAssessor::new(
        d_head,
        r_head,
        method,
        RiskLevel::new(alpha)?,
        delta_d.unwrap_or(dd),
        delta_r.unwrap_or(dr),
        k_eval.unwrap_or(d_manifest.train.k_eval),
    )?;
    Ok((assessor, d_manifest))
}

// ---------------------------------------------------------------------------
// assess
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessSettings {
    pub n_rollouts: usize,
    pub stochasticity: f64,
    pub alpha: f64,
    pub delta_d: Option<f64>,
    pub delta_r: Option<f64>,
    pub k_eval: Option<usize>,
    pub histograms: bool,
    pub time_bins: usize,
    pub value_bins: usize,
    pub seed: u64,
}

impl Default for AssessSettings {
    fn default() -> Self {
        Self {
            n_rollouts: 100,
            stochasticity: 0.1,
            alpha: 0.1,
            delta_d: None,
            delta_r: None,
            k_eval: None,
            histograms: false,
            time_bins: 5,
            value_bins: 20,
            seed: 0,
        }
    }
}

/// Assess rollouts of the three hand-designed policies state by state and
/// export the per-state verdict CSV (plus optional value histograms).
pub fn run_assess(
    run_dir: &Path,
    env_spec: Option<&Path>,
    settings: &AssessSettings,
    out_dir: &Path,
) -> Result<PathBuf> {
    let env = load_env(env_spec)?;
    let (assessor, _) = load_assessor(
        run_dir,
        Some(&env),
        settings.alpha,
        settings.delta_d,
        settings.delta_r,
        settings.k_eval,
    )?;
    std::fs::create_dir_all(out_dir)?;
    let policies = hand_designed_policies(&env, settings.stochasticity)?;
    let trajectories = generate_eval_trajectories(
        &env,
        &policies,
        settings.n_rollouts,
        derive_seed(settings.seed, "rollouts"),
    )?;

    let mut rows = Vec::new();
    for (ti, traj) in trajectories.iter().enumerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(
            settings.seed,
            &format!("assess/{ti}"),
        ));
        for (si, t) in traj.transitions.iter().enumerate() {
            let a = assessor.assess_state(&t.state, &mut rng)?;
            rows.push(AssessmentRow {
                trajectory: ti,
                step: si,
                median_d: a.median_d,
                median_r: a.median_r,
                alarm_score: a.alarm_score,
                is_dead_end: a.is_dead_end,
                alarm: a.alarm_score <= assessor.delta_d,
            });
        }
    }
    let csv = out_dir.join("assessments.csv");
    crate::assess::write_assessment_csv(&csv, &rows)?;
    let mut names = vec!["assessments.csv"];
    if settings.histograms {
        let rows = threshold_histograms(
            &assessor,
            &trajectories,
            settings.time_bins,
            settings.value_bins,
            derive_seed(settings.seed, "histograms"),
        )?;
        write_histograms_csv(&out_dir.join("histograms.csv"), &rows)?;
        names.push("histograms.csv");
    }
    let manifest = manifest_for_outputs(
        "assess",
        settings.seed,
        serde_json::to_value(settings)?,
        BTreeMap::from([("env_hash".into(), env.env_hash().to_string())]),
        out_dir,
        &names,
    )?;
    manifest.write(&out_dir.join("assess.manifest.json"))?;
    Ok(csv)
}

// ---------------------------------------------------------------------------
// early-warning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EarlyWarningSettings {
    pub n_rollouts: usize,
    pub stochasticity: f64,
    pub alpha: f64,
    pub delta_d_expectation: f64,
    pub delta_d_distributional: f64,
    pub k_eval: Option<usize>,
    pub seed: u64,
}

impl Default for EarlyWarningSettings {
    fn default() -> Self {
        Self {
            n_rollouts: 1000,
            stochasticity: 0.1,
            alpha: 0.1,
            delta_d_expectation: -0.15,
            delta_d_distributional: -0.5,
            k_eval: None,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct EarlyWarningRun {
    pub report: EarlyWarningReport,
    pub paired_mean_difference: Option<f64>,
    pub gaps_csv: PathBuf,
}

/// Paired rollouts of the two suboptimal policies, assessed under the
/// expectation-method run and the distributional run, with per-method gap
/// distributions and the paired mean difference.
pub fn run_early_warning(
    expectation_run: &Path,
    distributional_run: &Path,
    env_spec: Option<&Path>,
    settings: &EarlyWarningSettings,
    out_dir: &Path,
) -> Result<EarlyWarningRun> {
    let env = load_env(env_spec)?;
    let (ded, _) = load_assessor(
        expectation_run,
        Some(&env),
        settings.alpha,
        Some(settings.delta_d_expectation),
        None,
        settings.k_eval,
    )?;
    let (distded, _) = load_assessor(
        distributional_run,
        Some(&env),
        settings.alpha,
        Some(settings.delta_d_distributional),
        None,
        settings.k_eval,
    )?;
    if ded.method.is_distributional() || !distded.method.is_distributional() {
        return Err(Error::Usage(
            "early-warning expects an expectation-method run and a distributional run".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;

    let policies = hand_designed_policies(&env, settings.stochasticity)?;
    let suboptimal = &policies[1..]; // the two risky routes
    let trajectories = generate_eval_trajectories(
        &env,
        suboptimal,
        settings.n_rollouts,
        derive_seed(settings.seed, "rollouts"),
    )?;
    let report = early_warning_study(
        &[
            (ded.method.to_string(), &ded),
            (distded.method.to_string(), &distded),
        ],
        &trajectories,
        derive_seed(settings.seed, "assess"),
    )?;
    let paired = report.paired_mean_difference(0, 1);

    let gaps_csv = out_dir.join("gaps.csv");
    write_gaps_csv(&gaps_csv, &report)?;
    let mut summary = String::from(
        "assessor,defined_gaps,mean_gap,median_gap,q1,q3,missed_fraction\n",
    );
    for (label, stats) in report.labels.iter().zip(&report.stats) {
        summary.push_str(&format!(
            "{label},{},{},{},{},{},{}\n",
            stats.count, stats.mean, stats.median, stats.q1, stats.q3, stats.missed_fraction
        ));
    }
    summary.push_str(&format!(
        "paired_mean_difference,,{},,,,\n",
        paired.map(|p| p.to_string()).unwrap_or_default()
    ));
    std::fs::write(out_dir.join("early_warning.csv"), summary)?;

    let manifest = manifest_for_outputs(
        "early-warning",
        settings.seed,
        serde_json::to_value(settings)?,
        BTreeMap::from([("env_hash".into(), env.env_hash().to_string())]),
        out_dir,
        &["gaps.csv", "early_warning.csv"],
    )?;
    manifest.write(&out_dir.join("early_warning.manifest.json"))?;
    Ok(EarlyWarningRun {
        report,
        paired_mean_difference: paired,
        gaps_csv,
    })
}

// ---------------------------------------------------------------------------
// roc
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocSettings {
    pub n_rollouts: usize,
    pub stochasticity: f64,
    pub n_thresholds: usize,
    pub n_alphas: usize,
    pub alpha: f64,
    pub k_eval: Option<usize>,
    pub seed: u64,
}

impl Default for RocSettings {
    fn default() -> Self {
        Self {
            n_rollouts: 1000,
            stochasticity: 0.1,
            n_thresholds: 100,
            n_alphas: 50,
            alpha: 0.1,
            k_eval: None,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct RocRun {
    pub summary: AucSummary,
    pub points_at_best: Vec<RocPoint>,
    pub min_security_gap: f64,
}

/// Threshold sweep over mixed-outcome rollouts of all three policies;
/// distributional runs additionally sweep the alpha grid and report per-alpha
/// AUC.
pub fn run_roc(
    run_dir: &Path,
    env_spec: Option<&Path>,
    settings: &RocSettings,
    out_dir: &Path,
) -> Result<RocRun> {
    let env = load_env(env_spec)?;
    let (assessor, _) = load_assessor(
        run_dir,
        Some(&env),
        settings.alpha,
        None,
        None,
        settings.k_eval,
    )?;
    std::fs::create_dir_all(out_dir)?;
    let policies = hand_designed_policies(&env, settings.stochasticity)?;
    let trajectories = generate_eval_trajectories(
        &env,
        &policies,
        settings.n_rollouts,
        derive_seed(settings.seed, "rollouts"),
    )?;

    let grid: Vec<RiskLevel> = if assessor.method.is_distributional() {
        alpha_grid(settings.n_alphas)
    } else {
        vec![assessor.alpha]
    };
    let scored = score_trajectories(
        &assessor,
        &trajectories,
        &grid,
        derive_seed(settings.seed, "score"),
    )?;
    let mut aucs = Vec::with_capacity(grid.len());
    for scores in &scored.scores {
        let points = roc_from_scores(scores, &scored.outcomes, settings.n_thresholds)?;
        aucs.push(crate::eval::auc(&points)?);
    }
    let best = aucs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let points_at_best =
        roc_from_scores(&scored.scores[best], &scored.outcomes, settings.n_thresholds)?;
    let summary = AucSummary {
        max_auc: aucs[best],
        best_alpha: assessor
            .method
            .is_distributional()
            .then(|| grid[best].value()),
        mean_auc_over_alphas: assessor
            .method
            .is_distributional()
            .then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        min_security_gap: scored.min_security_gap,
    };

    write_roc_csv(&out_dir.join("roc.csv"), &points_at_best)?;
    let mut per_alpha = String::from("alpha,auc\n");
    for (lvl, a) in grid.iter().zip(&aucs) {
        per_alpha.push_str(&format!("{},{}\n", lvl.value(), a));
    }
    std::fs::write(out_dir.join("auc_by_alpha.csv"), per_alpha)?;

    let manifest = manifest_for_outputs(
        "roc",
        settings.seed,
        serde_json::to_value(settings)?,
        BTreeMap::from([("env_hash".into(), env.env_hash().to_string())]),
        out_dir,
        &["roc.csv", "auc_by_alpha.csv"],
    )?;
    manifest.write(&out_dir.join("roc.manifest.json"))?;
    Ok(RocRun {
        summary,
        points_at_best,
        min_security_gap: scored.min_security_gap,
    })
}

pub fn alpha_grid(n: usize) -> Vec<RiskLevel> {
    if n == 0 {
        return default_alpha_grid();
    }
    (1..=n)
        .map(|i| RiskLevel::new(i as f64 / n as f64).expect("level in (0, 1]"))
        .collect()
}

// ---------------------------------------------------------------------------
// ablate and sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSettings {
    pub n_rollouts: usize,
    pub stochasticity: f64,
    pub n_thresholds: usize,
    pub n_alphas: usize,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_rollouts: 1000,
            stochasticity: 0.1,
            n_thresholds: 100,
            n_alphas: 50,
            seed: 0,
        }
    }
}

fn sweep_inputs(
    dataset: &Path,
    env_spec: Option<&Path>,
    settings: &SweepSettings,
) -> Result<(OfflineDataset, LifeGate, Vec<crate::dataset::TrajectoryRecord>, Vec<RiskLevel>)> {
    let env = load_env(env_spec)?;
    let ds = OfflineDataset::load(dataset)?;
    if ds.meta().env_hash != env.env_hash() {
        return Err(Error::Integrity(
            "dataset environment hash does not match the requested environment".into(),
        ));
    }
    let policies = hand_designed_policies(&env, settings.stochasticity)?;
    let trajectories = generate_eval_trajectories(
        &env,
        &policies,
        settings.n_rollouts,
        derive_seed(settings.seed, "rollouts"),
    )?;
    Ok((ds, env, trajectories, alpha_grid(settings.n_alphas)))
}

#[derive(Debug)]
pub struct AblateRun {
    pub cells: Vec<AblationCell>,
}

/// Train and evaluate the full 2x2 architecture-by-penalty matrix.
pub fn run_ablate(
    dataset: &Path,
    env_spec: Option<&Path>,
    cfg: &TrainConfig,
    settings: &SweepSettings,
    out_dir: &Path,
) -> Result<AblateRun> {
    let (ds, env, trajectories, alphas) = sweep_inputs(dataset, env_spec, settings)?;
    std::fs::create_dir_all(out_dir)?;
    let cells = ablation_matrix(
        &ds,
        cfg,
        &trajectories,
        &alphas,
        settings.n_thresholds,
        derive_seed(settings.seed, "eval"),
    )?;
    write_ablation_csv(&out_dir.join("ablation.csv"), &cells)?;
    let manifest = manifest_for_outputs(
        "ablate",
        settings.seed,
        json!({ "train": cfg, "eval": settings }),
        BTreeMap::from([
            (file_name(dataset), file_sha256(dataset)?),
            ("env_hash".into(), env.env_hash().to_string()),
        ]),
        out_dir,
        &["ablation.csv"],
    )?;
    manifest.write(&out_dir.join("ablation.manifest.json"))?;
    Ok(AblateRun { cells })
}

#[derive(Debug)]
pub struct SweepRun {
    pub reports: Vec<SweepReport>,
    pub csv: PathBuf,
}

/// Beta-conservatism sweep: retrain the distributional method per beta.
pub fn run_beta_sweep(
    dataset: &Path,
    env_spec: Option<&Path>,
    cfg: &TrainConfig,
    betas: &[f64],
    tuned_beta: f64,
    settings: &SweepSettings,
    out_dir: &Path,
) -> Result<SweepRun> {
    let (ds, env, trajectories, alphas) = sweep_inputs(dataset, env_spec, settings)?;
    std::fs::create_dir_all(out_dir)?;
    let reports = beta_sweep(
        &ds,
        cfg,
        betas,
        tuned_beta,
        &trajectories,
        &alphas,
        settings.n_thresholds,
        derive_seed(settings.seed, "eval"),
    )?;
    let csv = out_dir.join("beta_sweep.csv");
    write_sweep_csv(&csv, &reports)?;
    let manifest = manifest_for_outputs(
        "sweep-beta",
        settings.seed,
        json!({ "train": cfg, "eval": settings, "betas": betas, "tuned": tuned_beta }),
        BTreeMap::from([
            (file_name(dataset), file_sha256(dataset)?),
            ("env_hash".into(), env.env_hash().to_string()),
        ]),
        out_dir,
        &["beta_sweep.csv"],
    )?;
    manifest.write(&out_dir.join("beta_sweep.manifest.json"))?;
    Ok(SweepRun { reports, csv })
}

/// Limited-training-data sweep: retrain DeD and DistDeD per data fraction.
pub fn run_data_sweep(
    dataset: &Path,
    env_spec: Option<&Path>,
    cfg: &TrainConfig,
    fractions: &[f64],
    settings: &SweepSettings,
    out_dir: &Path,
) -> Result<SweepRun> {
    let (ds, env, trajectories, alphas) = sweep_inputs(dataset, env_spec, settings)?;
    std::fs::create_dir_all(out_dir)?;
    let reports = data_fraction_sweep(
        &ds,
        cfg,
        fractions,
        &trajectories,
        &alphas,
        settings.n_thresholds,
        derive_seed(settings.seed, "subsets"),
        derive_seed(settings.seed, "eval"),
    )?;
    let csv = out_dir.join("data_sweep.csv");
    write_sweep_csv(&csv, &reports)?;
    let manifest = manifest_for_outputs(
        "sweep-data",
        settings.seed,
        json!({ "train": cfg, "eval": settings, "fractions": fractions }),
        BTreeMap::from([
            (file_name(dataset), file_sha256(dataset)?),
            ("env_hash".into(), env.env_hash().to_string()),
        ]),
        out_dir,
        &["data_sweep.csv"],
    )?;
    manifest.write(&out_dir.join("data_sweep.manifest.json"))?;
    Ok(SweepRun { reports, csv })
}

// Re-exported for convenience in the CLI and tests.
pub use crate::eval::TrainedPair;

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dims: vec![16, 16],
            embed_dim: 16,
            epochs: 1,
            k_eval: 64,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn collect_is_byte_deterministic() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        run_collect(None, 2_000, 7, &a).unwrap();
        run_collect(None, 2_000, 7, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let c = dir.path().join("c.jsonl");
        run_collect(None, 2_000, 8, &c).unwrap();
        assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    }

    #[test]
    fn train_outputs_are_byte_deterministic() {
        let dir = tempdir().unwrap();
        let ds = dir.path().join("ds.jsonl");
        run_collect(None, 1_500, 3, &ds).unwrap();
        let cfg = small_cfg(11);
        let out1 = dir.path().join("run1");
        let out2 = dir.path().join("run2");
        run_train(&ds, Method::DistDed, &cfg, &out1).unwrap();
        run_train(&ds, Method::DistDed, &cfg, &out2).unwrap();
        for name in ["d_head.bin", "r_head.bin", "d_head.json", "train_d.csv", "train.manifest.json"] {
            assert_eq!(
                std::fs::read(out1.join(name)).unwrap(),
                std::fs::read(out2.join(name)).unwrap(),
                "{name} differs between identical runs"
            );
        }
    }

    #[test]
    fn train_rejects_beta_for_expectation_methods() {
        let dir = tempdir().unwrap();
        let ds = dir.path().join("ds.jsonl");
        run_collect(None, 500, 3, &ds).unwrap();
        let cfg = small_cfg(1);
        assert!(matches!(
            run_train(&ds, Method::Ded, &cfg, &dir.path().join("x")),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn assessor_roundtrip_and_env_hash_check() {
        let dir = tempdir().unwrap();
        let ds = dir.path().join("ds.jsonl");
        run_collect(None, 1_000, 5, &ds).unwrap();
        let mut cfg = small_cfg(13);
        cfg.beta = 0.0;
        let run = dir.path().join("run");
        run_train(&ds, Method::DistDedNoCql, &cfg, &run).unwrap();
        let env = load_env(None).unwrap();
        let (assessor, manifest) = load_assessor(&run, Some(&env), 0.1, None, None, None).unwrap();
        assert_eq!(assessor.method, Method::DistDedNoCql);
        assert_eq!(manifest.env_hash, env.env_hash());
        assert_eq!(assessor.delta_d, -0.5);

        // A different layout must be rejected.
        let mut other = GridSpec::default_lifegate();
        other.push_prob = 0.5;
        let other_env = LifeGate::new(other).unwrap();
        assert!(matches!(
            load_assessor(&run, Some(&other_env), 0.1, None, None, None),
            Err(Error::Integrity(_))
        ));
    }
}

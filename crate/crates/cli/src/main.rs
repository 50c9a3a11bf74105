//! Command-line driver: collection, training, assessment, and every sweep,
//! wired to pinned configs and reproducible outputs.
//!
//! Option precedence is CLI flags over the `--config` file over built-in
//! defaults; the global seed falls back to the `DEADEND_SEED` environment
//! variable. Relative paths are resolved against `--out-dir`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use deadend_core::assess::Method;
use deadend_core::learner::{TargetUpdate, TrainConfig};
use deadend_core::pipeline::{
    self, AssessSettings, EarlyWarningSettings, RocSettings, SweepSettings,
};

#[derive(Parser)]
#[command(
    name = "deadend",
    about = "Offline dead-end discovery on the LifeGate gridworld",
    version
)]
struct Cli {
    /// Directory against which relative paths are resolved and outputs are written.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Optional JSON config file; CLI flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; falls back to $DEADEND_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in LifeGate layout to JSON for pinning or editing.
    Env(EnvArgs),
    /// Collect an offline dataset under uniform-random actions.
    Collect(CollectArgs),
    /// Train the D- and R-heads for one method.
    Train(TrainArgs),
    /// Assess policy rollouts state by state and export verdicts.
    Assess(AssessArgs),
    /// Compare alarm timing of an expectation run and a distributional run.
    EarlyWarning(EarlyWarningArgs),
    /// Threshold/alpha ROC sweep for one trained run.
    Roc(RocArgs),
    /// Train and evaluate the full architecture-by-penalty matrix.
    Ablate(AblateArgs),
    /// Beta-conservatism or limited-data sweeps.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct EnvArgs {
    /// Output path for the layout JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CollectArgs {
    /// LifeGate layout JSON; omitted means the built-in default layout.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Minimum number of transitions to collect.
    #[arg(long)]
    n: usize,
    /// Output dataset path (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// One of: ded, ded-cql, distded, distded-nocql.
    #[arg(long)]
    method: Method,
    /// CQL penalty weight; only accepted by CQL methods.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    neg_terminal_frac: Option<f64>,
    /// Target refresh: "hard" or "ema".
    #[arg(long)]
    target_update: Option<String>,
    /// Gradient steps between target refreshes.
    #[arg(long)]
    target_every: Option<u32>,
    /// EMA rate when --target-update ema.
    #[arg(long)]
    ema_rate: Option<f64>,
    /// Output directory for checkpoints and loss CSVs.
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    n_rollouts: Option<usize>,
    #[arg(long)]
    stochasticity: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta_d: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta_r: Option<f64>,
    #[arg(long)]
    k_eval: Option<usize>,
    /// Also export threshold-selection value histograms.
    #[arg(long)]
    histograms: bool,
    #[arg(long)]
    time_bins: Option<usize>,
    #[arg(long)]
    value_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EarlyWarningArgs {
    /// Run directory of the expectation-method (DeD) heads.
    #[arg(long)]
    ded_run: PathBuf,
    /// Run directory of the distributional (DistDeD) heads.
    #[arg(long)]
    distded_run: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    n_rollouts: Option<usize>,
    #[arg(long)]
    stochasticity: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Alarm threshold for the distributional run.
    #[arg(long, allow_negative_numbers = true)]
    delta_d: Option<f64>,
    /// Alarm threshold for the expectation run.
    #[arg(long, allow_negative_numbers = true)]
    delta_d_ded: Option<f64>,
    #[arg(long)]
    k_eval: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    n_rollouts: Option<usize>,
    #[arg(long)]
    stochasticity: Option<f64>,
    #[arg(long)]
    n_thresholds: Option<usize>,
    #[arg(long)]
    n_alphas: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_eval: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_rollouts: Option<usize>,
    #[arg(long)]
    stochasticity: Option<f64>,
    #[arg(long)]
    n_thresholds: Option<usize>,
    #[arg(long)]
    n_alphas: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// "beta" or "data".
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    /// Comma-separated CQL weights for --kind beta.
    #[arg(long)]
    betas: Option<String>,
    /// The externally tuned beta to mark in the report.
    #[arg(long)]
    tuned_beta: Option<f64>,
    /// Comma-separated data fractions for --kind data.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_rollouts: Option<usize>,
    #[arg(long)]
    stochasticity: Option<f64>,
    #[arg(long)]
    n_thresholds: Option<usize>,
    #[arg(long)]
    n_alphas: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Optional values read from `--config`; every field can be overridden by a
/// flag and falls back to the built-in defaults otherwise.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    beta: Option<f64>,
    neg_terminal_frac: Option<f64>,
    hidden_dims: Option<Vec<usize>>,
    embed_dim: Option<usize>,
    n_online_taus: Option<usize>,
    n_target_taus: Option<usize>,
    k_eval: Option<usize>,
    huber_kappa: Option<f64>,
    target_update: Option<TargetUpdate>,
    cql_per_tau: Option<bool>,
    alpha: Option<f64>,
    n_rollouts: Option<usize>,
    stochasticity: Option<f64>,
    n_thresholds: Option<usize>,
    n_alphas: Option<usize>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.seed)
        .or_else(|| std::env::var("DEADEND_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

/// Resolve a path argument against the out-dir when it is relative.
fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn resolve_opt(out_dir: &Path, p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| resolve(out_dir, p))
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    seed: u64,
    file: &FileConfig,
    method: Method,
    beta: Option<f64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    neg_terminal_frac: Option<f64>,
    target_update: Option<&str>,
    target_every: Option<u32>,
    ema_rate: Option<f64>,
) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let resolved_update = match target_update {
        None => file.target_update.unwrap_or(defaults.target_update),
        Some("hard") => TargetUpdate::Hard {
            every: target_every.unwrap_or(1000),
        },
        Some("ema") => TargetUpdate::Ema {
            rate: ema_rate.unwrap_or(0.005),
            every: target_every.unwrap_or(5),
        },
        Some(other) => bail!("unknown target update '{other}' (expected hard or ema)"),
    };
    let beta_flagged = beta.or(file.beta);
    if !method.uses_cql() {
        if let Some(b) = beta {
            bail!("method {method} does not accept --beta (got {b})");
        }
    }
    let beta = if method.uses_cql() {
        beta_flagged.unwrap_or(defaults.beta)
    } else {
        0.0
    };
    Ok(TrainConfig {
        hidden_dims: file.hidden_dims.clone().unwrap_or(defaults.hidden_dims),
        embed_dim: file.embed_dim.unwrap_or(defaults.embed_dim),
        action_count: defaults.action_count,
        n_online_taus: file.n_online_taus.unwrap_or(defaults.n_online_taus),
        n_target_taus: file.n_target_taus.unwrap_or(defaults.n_target_taus),
        k_eval: file.k_eval.unwrap_or(defaults.k_eval),
        beta,
        gamma: defaults.gamma,
        lr: lr.or(file.lr).unwrap_or(defaults.lr),
        batch_size: batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        epochs: epochs.or(file.epochs).unwrap_or(defaults.epochs),
        target_update: resolved_update,
        huber_kappa: file.huber_kappa.unwrap_or(defaults.huber_kappa),
        neg_terminal_frac: neg_terminal_frac
            .or(file.neg_terminal_frac)
            .unwrap_or(defaults.neg_terminal_frac),
        cql_per_tau: file.cql_per_tau.unwrap_or(defaults.cql_per_tau),
        seed,
    })
}

fn parse_list(csv: &str) -> Result<Vec<f64>> {
    csv.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad list entry '{s}'"))
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = load_file_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &file);
    let out_dir = cli.out_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating out dir {}", out_dir.display()))?;

    match cli.command {
        Command::Env(args) => {
            let out = resolve(&out_dir, &args.out);
            let spec = deadend_core::lifegate::GridSpec::default_lifegate();
            spec.to_json_file(&out)?;
            println!("layout {} written to {}", spec.content_hash(), out.display());
        }
        Command::Collect(args) => {
            let out = resolve(&out_dir, &args.out);
            let env = resolve_opt(&out_dir, &args.env);
            let result = pipeline::run_collect(env.as_deref(), args.n, seed, &out)?;
            println!(
                "collected {} transitions into {}",
                result.n_transitions,
                result.dataset.display()
            );
        }
        Command::Train(args) => {
            let cfg = train_config(
                seed,
                &file,
                args.method,
                args.beta,
                args.epochs,
                args.lr,
                args.batch_size,
                args.neg_terminal_frac,
                args.target_update.as_deref(),
                args.target_every,
                args.ema_rate,
            )?;
            let dataset = resolve(&out_dir, &args.dataset);
            let run_dir = resolve(&out_dir, &args.run_dir);
            let result = pipeline::run_train(&dataset, args.method, &cfg, &run_dir)?;
            println!(
                "trained {} heads into {} ({} steps logged per head)",
                result.method,
                run_dir.display(),
                result.pair.d_log.reports.len()
            );
        }
        Command::Assess(args) => {
            let defaults = AssessSettings::default();
            let settings = AssessSettings {
                n_rollouts: args.n_rollouts.or(file.n_rollouts).unwrap_or(defaults.n_rollouts),
                stochasticity: args
                    .stochasticity
                    .or(file.stochasticity)
                    .unwrap_or(defaults.stochasticity),
                alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
                delta_d: args.delta_d,
                delta_r: args.delta_r,
                k_eval: args.k_eval.or(file.k_eval),
                histograms: args.histograms,
                time_bins: args.time_bins.unwrap_or(defaults.time_bins),
                value_bins: args.value_bins.unwrap_or(defaults.value_bins),
                seed,
            };
            let csv = pipeline::run_assess(
                &resolve(&out_dir, &args.run_dir),
                resolve_opt(&out_dir, &args.env).as_deref(),
                &settings,
                &resolve(&out_dir, &args.out),
            )?;
            println!("assessments written to {}", csv.display());
        }
        Command::EarlyWarning(args) => {
            let defaults = EarlyWarningSettings::default();
            let settings = EarlyWarningSettings {
                n_rollouts: args.n_rollouts.or(file.n_rollouts).unwrap_or(defaults.n_rollouts),
                stochasticity: args
                    .stochasticity
                    .or(file.stochasticity)
                    .unwrap_or(defaults.stochasticity),
                alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
                delta_d_expectation: args.delta_d_ded.unwrap_or(defaults.delta_d_expectation),
                delta_d_distributional: args.delta_d.unwrap_or(defaults.delta_d_distributional),
                k_eval: args.k_eval.or(file.k_eval),
                seed,
            };
            let run = pipeline::run_early_warning(
                &resolve(&out_dir, &args.ded_run),
                &resolve(&out_dir, &args.distded_run),
                resolve_opt(&out_dir, &args.env).as_deref(),
                &settings,
                &resolve(&out_dir, &args.out),
            )?;
            for (label, stats) in run.report.labels.iter().zip(&run.report.stats) {
                println!(
                    "{label}: {} gaps, mean {:.2}, missed {:.3}",
                    stats.count, stats.mean, stats.missed_fraction
                );
            }
            match run.paired_mean_difference {
                Some(d) => println!("paired mean difference: {d:.2} steps"),
                None => println!("paired mean difference: undefined (no common alarms)"),
            }
        }
        Command::Roc(args) => {
            let defaults = RocSettings::default();
            let settings = RocSettings {
                n_rollouts: args.n_rollouts.or(file.n_rollouts).unwrap_or(defaults.n_rollouts),
                stochasticity: args
                    .stochasticity
                    .or(file.stochasticity)
                    .unwrap_or(defaults.stochasticity),
                n_thresholds: args
                    .n_thresholds
                    .or(file.n_thresholds)
                    .unwrap_or(defaults.n_thresholds),
                n_alphas: args.n_alphas.or(file.n_alphas).unwrap_or(defaults.n_alphas),
                alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
                k_eval: args.k_eval.or(file.k_eval),
                seed,
            };
            let run = pipeline::run_roc(
                &resolve(&out_dir, &args.run_dir),
                resolve_opt(&out_dir, &args.env).as_deref(),
                &settings,
                &resolve(&out_dir, &args.out),
            )?;
            println!(
                "max auc {:.4}{}",
                run.summary.max_auc,
                run.summary
                    .best_alpha
                    .map(|a| format!(" at alpha {a}"))
                    .unwrap_or_default()
            );
        }
        Command::Ablate(args) => {
            let cfg = train_config(
                seed,
                &file,
                Method::DistDed,
                args.beta,
                args.epochs,
                None,
                None,
                None,
                None,
                None,
                None,
            )?;
            let settings = sweep_settings(
                seed,
                &file,
                args.n_rollouts,
                args.stochasticity,
                args.n_thresholds,
                args.n_alphas,
            );
            let run = pipeline::run_ablate(
                &resolve(&out_dir, &args.dataset),
                resolve_opt(&out_dir, &args.env).as_deref(),
                &cfg,
                &settings,
                &resolve(&out_dir, &args.out),
            )?;
            for cell in &run.cells {
                println!(
                    "{}: max auc {:.4}{}",
                    cell.method,
                    cell.summary.max_auc,
                    cell.summary
                        .mean_auc_over_alphas
                        .map(|m| format!(", mean over alphas {m:.4}"))
                        .unwrap_or_default()
                );
            }
        }
        Command::Sweep(args) => {
            let cfg = train_config(
                seed,
                &file,
                Method::DistDed,
                None,
                args.epochs,
                None,
                None,
                None,
                None,
                None,
                None,
            )?;
            let settings = sweep_settings(
                seed,
                &file,
                args.n_rollouts,
                args.stochasticity,
                args.n_thresholds,
                args.n_alphas,
            );
            let dataset = resolve(&out_dir, &args.dataset);
            let env = resolve_opt(&out_dir, &args.env);
            let out = resolve(&out_dir, &args.out);
            let run = match args.kind.as_str() {
                "beta" => {
                    let betas = match &args.betas {
                        Some(csv) => parse_list(csv)?,
                        None => vec![0.0, 0.1, 0.2, 0.3, 0.4],
                    };
                    let tuned = args.tuned_beta.unwrap_or(0.1);
                    pipeline::run_beta_sweep(&dataset, env.as_deref(), &cfg, &betas, tuned, &settings, &out)?
                }
                "data" => {
                    let fractions = match &args.fractions {
                        Some(csv) => parse_list(csv)?,
                        None => vec![0.10, 0.25, 0.50, 0.75, 1.0],
                    };
                    pipeline::run_data_sweep(&dataset, env.as_deref(), &cfg, &fractions, &settings, &out)?
                }
                other => bail!("unknown sweep kind '{other}' (expected beta or data)"),
            };
            println!("{} sweep cells written to {}", run.reports.len(), run.csv.display());
        }
    }
    Ok(())
}

fn sweep_settings(
    seed: u64,
    file: &FileConfig,
    n_rollouts: Option<usize>,
    stochasticity: Option<f64>,
    n_thresholds: Option<usize>,
    n_alphas: Option<usize>,
) -> SweepSettings {
    let defaults = SweepSettings::default();
    SweepSettings {
        n_rollouts: n_rollouts.or(file.n_rollouts).unwrap_or(defaults.n_rollouts),
        stochasticity: stochasticity
            .or(file.stochasticity)
            .unwrap_or(defaults.stochasticity),
        n_thresholds: n_thresholds.or(file.n_thresholds).unwrap_or(defaults.n_thresholds),
        n_alphas: n_alphas.or(file.n_alphas).unwrap_or(defaults.n_alphas),
        seed,
    }
}

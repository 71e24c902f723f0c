use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sgfd::acceptance::Criterion;
use sgfd::agent::Method;
use sgfd::envs::{
    collect_dataset, dataset_features, read_dataset_csv, write_dataset_csv, EvalMode,
};
use sgfd::experiment::{
    correlation_arms, evaluate_suites, load_policy, read_weights_csv, run_experiment,
    write_correlation_arms, write_correlation_report, write_weights_csv, RunConfig, RunManifest,
    FORMAT_VERSION,
};
use sgfd::metrics::correlation_matrix;
use sgfd::rff::FeatureMaps;
use sgfd::{rng, SgfdError};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sgfd",
    version,
    about = "Saliency-guided feature decorrelation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the environment suite description and random-action datasets.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        /// Interactions per environment.
        #[arg(long, default_value_t = 500)]
        per_env: usize,
    },
    /// Train one agent and write its artifacts and manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a trained policy on the held-out suites.
    Eval {
        /// Output directory of a finished `train` run.
        #[arg(long)]
        run_dir: PathBuf,
        /// `interpolation`, `extrapolation` or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Episodes per held-out environment (defaults to the run's setting).
        #[arg(long)]
        episodes: Option<usize>,
        /// Evaluation seed (defaults to the run's seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Correlation reports for a dataset, under given weights or freshly optimized ones.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Weights file (one `w` column); without it the uniform and saliency-guided arms are fitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Feature index summarized against the rest (defaults to the environment's changed feature).
        #[arg(long)]
        changed: Option<usize>,
    },
    /// Run acceptance suites and print one pass/fail line per criterion.
    Accept {
        /// Suite name or `all`.
        #[arg(default_value = "all")]
        suite: String,
    },
}

#[derive(Args, Clone, Debug, Default)]
struct RunArgs {
    /// TOML config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `sgfd`, `uniform_decorr` or `no_decorr`.
    #[arg(long)]
    method: Option<String>,
    /// Total environment steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Also write per-step decorrelation and saliency traces.
    #[arg(long)]
    trace: bool,
}

impl RunArgs {
    /// File, then `SGFD_*` environment overrides, then flags.
    fn resolve(&self) -> sgfd::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| match e {
                SgfdError::Io(io) => SgfdError::Config {
                    field: "config".into(),
                    message: format!("{}: {io}", path.display()),
                },
                other => other,
            })?,
            None => RunConfig::default(),
        };
        let mut cfg = base.with_env_overrides()?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(name) = &self.method {
            cfg.method = Method::parse(name).ok_or_else(|| SgfdError::Config {
                field: "method".into(),
                message: format!(
                    "unknown method `{name}`; expected sgfd, uniform_decorr or no_decorr"
                ),
            })?;
        }
        if let Some(steps) = self.steps {
            cfg.total_steps = steps;
        }
        cfg.trace |= self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &SgfdError) -> u8 {
    match err {
        SgfdError::Config { .. } => EXIT_CONFIG,
        SgfdError::Divergence(_) => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn gen(run: &RunArgs, per_env: usize) -> sgfd::Result<()> {
    let cfg = run.resolve()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut suite = cfg.env.build()?;
    let mut r = rng::stream(cfg.seed, "env");
    let train = collect_dataset(&mut suite.train, per_env, &mut r)?;
    write_dataset_csv(&dir.join("dataset_train.csv"), &train)?;
    let mut evals = Vec::new();
    for set in &mut suite.evals {
        let rows = collect_dataset(&mut set.envs, per_env, &mut r)?;
        write_dataset_csv(
            &dir.join(format!("dataset_{}.csv", set.suite.mode.name())),
            &rows,
        )?;
        evals.push(set.suite.clone());
    }
    let description = json!({
        "format_version": FORMAT_VERSION,
        "seed": cfg.seed,
        "env": cfg.env,
        "train_values": suite.train.iter().map(|e| e.variation_value()).collect::<Vec<_>>(),
        "changed_feature": suite.train[0].changed_feature_index(),
        "evals": evals,
    });
    std::fs::write(
        dir.join("suite.json"),
        serde_json::to_string_pretty(&description).expect("json value serializes"),
    )?;
    print_json(&json!({ "output_dir": dir, "rows_per_env": per_env }));
    Ok(())
}

fn train(run: &RunArgs) -> sgfd::Result<()> {
    let cfg = run.resolve()?;
    let manifest = run_experiment(&cfg)?;
    print_json(&json!({
        "output_dir": cfg.output_dir,
        "content_hash": manifest.content_hash,
        "final_returns": manifest.final_returns,
    }));
    Ok(())
}

fn eval(
    run_dir: &Path,
    suite: &str,
    episodes: Option<usize>,
    seed: Option<u64>,
) -> sgfd::Result<()> {
    let modes: Vec<EvalMode> = match suite {
        "all" => EvalMode::ALL.to_vec(),
        name => match EvalMode::ALL.into_iter().find(|m| m.name() == name) {
            Some(m) => vec![m],
            None => {
                return Err(SgfdError::Config {
                    field: "suite".into(),
                    message: format!(
                        "unknown suite `{name}`; expected interpolation, extrapolation or all"
                    ),
                })
            }
        },
    };
    let manifest = RunManifest::load(run_dir)?;
    let cfg = &manifest.config;
    let agent = load_policy(run_dir, &manifest, rng::child_seed(cfg.seed, "init"))?;
    let mut envs = cfg.env.build()?;
    envs.evals.retain(|set| modes.contains(&set.suite.mode));
    let stats = evaluate_suites(
        &agent,
        &mut envs,
        episodes.unwrap_or(cfg.eval_episodes),
        seed.unwrap_or(cfg.seed),
    )?;
    let summary: serde_json::Map<String, serde_json::Value> = stats
        .iter()
        .map(|(mode, s)| {
            (
                mode.name().to_string(),
                json!({ "mean": s.mean, "std": s.std, "episodes": s.returns.len() }),
            )
        })
        .collect();
    print_json(&serde_json::Value::Object(summary));
    Ok(())
}

fn report(
    run: &RunArgs,
    dataset: &Path,
    weights: Option<&Path>,
    changed: Option<usize>,
) -> sgfd::Result<()> {
    let cfg = run.resolve()?;
    let batch = dataset_features(&read_dataset_csv(dataset)?)?;
    let changed = match changed {
        Some(c) => c,
        None => cfg.env.build()?.train[0].changed_feature_index(),
    };
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let summaries = match weights {
        Some(path) => {
            let w = read_weights_csv(path)?;
            let raw = correlation_matrix(&batch, None, Some(changed))?;
            let weighted = correlation_matrix(&batch, Some(&w), Some(changed))?;
            write_correlation_report(dir, "raw", &raw)?;
            write_correlation_report(dir, "weighted", &weighted)?;
            json!({ "raw": raw.summary, "weighted": weighted.summary })
        }
        None => {
            let maps = FeatureMaps::sample(
                batch.d(),
                cfg.decorr.rff_count,
                &mut rng::stream(cfg.seed, "rff"),
            )?;
            let arms = correlation_arms(&batch, &maps, &cfg, changed, None)?;
            write_correlation_arms(dir, &arms)?;
            write_weights_csv(
                &dir.join("weights_uniform_decorr.csv"),
                &arms.uniform_weights,
            )?;
            write_weights_csv(&dir.join("weights_sgfd.csv"), &arms.sgfd_weights)?;
            json!({
                "raw": arms.raw.summary,
                "uniform_decorr": arms.uniform_decorr.summary,
                "sgfd": arms.sgfd.summary,
                "feature_probs": arms.probs,
            })
        }
    };
    print_json(&summaries);
    Ok(())
}

fn accept(suite: &str) -> Result<bool, ExitCode> {
    let criteria: Vec<Criterion> = if suite == "all" {
        Criterion::ALL.to_vec()
    } else {
        match Criterion::parse(suite) {
            Some(c) => vec![c],
            None => {
                let names: Vec<&str> = Criterion::ALL.iter().map(|c| c.suite_name()).collect();
                eprintln!(
                    "unknown suite `{suite}`; expected one of {} or all",
                    names.join(", ")
                );
                return Err(ExitCode::from(EXIT_CONFIG));
            }
        }
    };
    let mut all_passed = true;
    for criterion in criteria {
        match criterion.run() {
            Ok(result) => {
                println!("{result}");
                all_passed &= result.passed;
            }
            Err(e) => {
                println!(
                    "[FAIL] criterion {} ({}): error: {e}",
                    criterion.number(),
                    criterion.suite_name()
                );
                all_passed = false;
            }
        }
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { run, per_env } => gen(run, *per_env),
        Command::Train { run } => train(run),
        Command::Eval {
            run_dir,
            suite,
            episodes,
            seed,
        } => eval(run_dir, suite, *episodes, *seed),
        Command::Report {
            run,
            dataset,
            weights,
            changed,
        } => report(run, dataset, weights.as_deref(), *changed),
        Command::Accept { suite } => {
            return match accept(suite) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_FAILURE),
                Err(code) => code,
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::agent::{ReplayBuffer, SacAgent, StepReport, Trainer, Transition};
use crate::decorrelation::{optimize_weights, FeatureBatch, WeightVector};
use crate::envs::{EnvSuite, EvalMode};
use crate::error::{Result, SgfdError};
use crate::metrics::{correlation_matrix, evaluate_agent, CorrelationReport, ReturnStats};
use crate::nn::checkpoint;
use crate::rff::FeatureMaps;
use crate::rng::{self, RNG_ALGORITHM};
use crate::saliency::{fit_feature_saliency, FeatureSaliency};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Leading line of every CSV the runner writes.
pub fn csv_version_line() -> String {
    format!("# format_version={FORMAT_VERSION}\n")
}

pub fn build_id() -> String {
    let mut id = format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    if let Some(rev) = option_env!("SGFD_BUILD_REV") {
        id.push_str(&format!(" ({rev})"));
    }
    id
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Diverged,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub status: RunStatus,
    pub complete: bool,
    pub steps_completed: u64,
    pub build: String,
    pub rng_algorithm: String,
    pub config: RunConfig,
    pub rff_maps: FeatureMaps<f64>,
    /// SHA-256 of every emitted CSV, by file name.
    pub files: BTreeMap<String, String>,
    /// SHA-256 over the sorted `(name, digest)` list of CSVs.
    pub content_hash: String,
    /// Mean evaluation return at the last evaluation, by eval mode.
    pub final_returns: BTreeMap<String, f64>,
    pub message: Option<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| SgfdError::Parse(format!("{MANIFEST_FILE}: {e}")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Output directory bookkeeping: writes files and remembers the digest of each CSV.
struct Artifacts {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        if name.ends_with(".csv") {
            self.digests
                .insert(name.to_string(), sha256_hex(contents.as_bytes()));
        }
        Ok(())
    }

    fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, digest) in &self.digests {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(digest.as_bytes());
            h.update(*b"\n");
        }
        hex(&h.finalize())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn step_header(d: usize) -> String {
    let mut cols: Vec<String> = [
        "step",
        "q1_loss",
        "q2_loss",
        "policy_loss",
        "decorr_initial",
        "decorr_final",
        "classifier_accuracy",
        "classifier_updated",
        "weight_min",
        "weight_max",
        "weight_entropy",
        "decorr_fallback",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((0..d).map(|j| format!("p{j}")));
    cols.join(",") + "\n"
}

fn step_row(r: &StepReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.step,
        r.q1_loss,
        r.q2_loss,
        opt(r.policy_loss),
        opt(r.decorr_initial),
        opt(r.decorr_final),
        opt(r.classifier_accuracy),
        u8::from(r.classifier_updated),
        r.weight_min,
        r.weight_max,
        r.weight_entropy,
        u8::from(r.decorr_fallback),
        join(&r.probs)
    )
}

/// Per-step CSV channels, kept in memory until the run ends.
struct Logs {
    steps: String,
    accuracy: String,
    returns: BTreeMap<EvalMode, String>,
    decorr_trace: Option<String>,
    saliency_trace: Option<String>,
}

impl Logs {
    fn new(d: usize, trace: bool) -> Self {
        let v = csv_version_line();
        let returns = EvalMode::ALL
            .iter()
            .map(|&m| (m, format!("{v}step,mean,std\n")))
            .collect();
        let m_cols: Vec<String> = (0..d).map(|j| format!("m{j}")).collect();
        let p_cols: Vec<String> = (0..d).map(|j| format!("p{j}")).collect();
        Logs {
            steps: v.clone() + &step_header(d),
            accuracy: format!("{v}step,accuracy,updated\n"),
            returns,
            decorr_trace: trace.then(|| {
                format!("{v}step,iteration,objective,weight_min,weight_max,weight_entropy\n")
            }),
            saliency_trace: trace
                .then(|| format!("{v}step,{},{}\n", m_cols.join(","), p_cols.join(","))),
        }
    }

    fn record(&mut self, r: &StepReport) {
        self.steps.push_str(&step_row(r));
        if let Some(acc) = r.classifier_accuracy {
            let _ = writeln!(
                self.accuracy,
                "{},{},{}",
                r.step,
                acc,
                u8::from(r.classifier_updated)
            );
        }
        if let Some(trace) = &mut self.decorr_trace {
            for t in &r.decorr_trace {
                let _ = writeln!(
                    trace,
                    "{},{},{},{},{},{}",
                    r.step, t.iteration, t.objective, t.weight_min, t.weight_max, t.weight_entropy
                );
            }
        }
        if let Some(trace) = &mut self.saliency_trace {
            let _ = writeln!(trace, "{},{},{}", r.step, join(&r.saliency), join(&r.probs));
        }
    }

    fn write(&self, out: &mut Artifacts) -> Result<()> {
        out.write("steps.csv", &self.steps)?;
        out.write("classifier_accuracy.csv", &self.accuracy)?;
        for (mode, text) in &self.returns {
            out.write(&format!("returns_{}.csv", mode.name()), text)?;
        }
        if let Some(t) = &self.decorr_trace {
            out.write("decorr_trace.csv", t)?;
        }
        if let Some(t) = &self.saliency_trace {
            out.write("saliency_trace.csv", t)?;
        }
        Ok(())
    }
}

/// Seed of the evaluation episodes for held-out environment `index` of `mode`.
/// Fixed across evaluation points so curves compare like with like.
pub fn eval_seed(run_seed: u64, mode: EvalMode, index: usize) -> u64 {
    rng::child_seed(run_seed, &format!("eval-{}-{index}", mode.name()))
}

/// Deterministic-policy returns on every held-out set, pooled over its environments.
pub fn evaluate_suites(
    agent: &SacAgent<f64>,
    suite: &mut EnvSuite,
    episodes: usize,
    run_seed: u64,
) -> Result<BTreeMap<EvalMode, ReturnStats>> {
    let mut out = BTreeMap::new();
    for set in &mut suite.evals {
        let mode = set.suite.mode;
        let mut returns = Vec::new();
        for (i, env) in set.envs.iter_mut().enumerate() {
            let stats =
                evaluate_agent(agent, env.as_mut(), episodes, eval_seed(run_seed, mode, i))?;
            returns.extend(stats.returns);
        }
        out.insert(mode, ReturnStats::from_returns(returns));
    }
    Ok(out)
}

fn save_checkpoints(trainer: &Trainer<f64>, dir: &Path) -> Result<()> {
    let dir = dir.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&dir)?;
    let agent = &trainer.agent;
    for (name, net) in [
        ("policy", &agent.policy),
        ("q1", &agent.q1),
        ("q2", &agent.q2),
        ("q1_target", &agent.q1_target),
        ("q2_target", &agent.q2_target),
    ] {
        checkpoint::save(net, &dir.join(format!("{name}.txt")))?;
    }
    if let Some(clf) = &trainer.classifier {
        checkpoint::save(clf.net(), &dir.join("classifier.txt"))?;
    }
    Ok(())
}

/// The three correlation arms: raw, uniform-p weights and saliency-guided weights.
pub struct CorrelationArms {
    pub raw: CorrelationReport,
    pub uniform_decorr: CorrelationReport,
    pub sgfd: CorrelationReport,
    pub probs: Vec<f64>,
    pub uniform_weights: WeightVector<f64>,
    pub sgfd_weights: WeightVector<f64>,
}

/// Builds the correlation arms on `batch`. Saliency comes from `saliency` when
/// given, otherwise from a classifier fitted on the batch itself.
pub fn correlation_arms(
    batch: &FeatureBatch<f64>,
    maps: &FeatureMaps<f64>,
    cfg: &RunConfig,
    changed: usize,
    saliency: Option<FeatureSaliency<f64>>,
) -> Result<CorrelationArms> {
    let d = batch.d();
    let probs = match saliency {
        Some(s) => s.p,
        None if batch.num_envs() >= 2 => {
            fit_feature_saliency(
                batch,
                &cfg.saliency,
                200,
                cfg.agent.batch_size,
                &mut rng::stream(cfg.seed, "report-init"),
                &mut rng::stream(cfg.seed, "report-sampling"),
            )?
            .saliency
            .p
        }
        None => FeatureSaliency::<f64>::uniform(d).p,
    };
    let uniform_p = vec![1.0 / d as f64; d];
    let weights = |p: &[f64]| -> Result<WeightVector<f64>> {
        match optimize_weights(batch, maps, p, &cfg.decorr) {
            Ok(out) => Ok(out.weights),
            Err(SgfdError::Divergence(msg)) => {
                log::warn!("correlation report weights diverged ({msg}); using uniform weights");
                Ok(WeightVector::uniform(batch.n()))
            }
            Err(e) => Err(e),
        }
    };
    let w_uniform = weights(&uniform_p)?;
    let w_sgfd = weights(&probs)?;
    Ok(CorrelationArms {
        raw: correlation_matrix(batch, None, Some(changed))?,
        uniform_decorr: correlation_matrix(batch, Some(&w_uniform), Some(changed))?,
        sgfd: correlation_matrix(batch, Some(&w_sgfd), Some(changed))?,
        probs,
        uniform_weights: w_uniform,
        sgfd_weights: w_sgfd,
    })
}

fn write_report(out: &mut Artifacts, name: &str, report: &CorrelationReport) -> Result<()> {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write(
        &format!("correlation_{name}.csv"),
        &String::from_utf8(csv).expect("csv is utf-8"),
    )?;
    let json = serde_json::to_string_pretty(&report.summary_json()).expect("json value serializes");
    out.write(&format!("correlation_{name}.json"), &json)
}

/// Writes `correlation_{name}.csv` and `.json`; returns the CSV digest.
pub fn write_correlation_report(
    dir: &Path,
    name: &str,
    report: &CorrelationReport,
) -> Result<String> {
    let mut out = Artifacts::new(dir)?;
    write_report(&mut out, name, report)?;
    Ok(out
        .digests
        .remove(&format!("correlation_{name}.csv"))
        .expect("csv written"))
}

pub fn write_correlation_arms(
    dir: &Path,
    arms: &CorrelationArms,
) -> Result<BTreeMap<String, String>> {
    let mut out = Artifacts::new(dir)?;
    write_arms(&mut out, arms)?;
    Ok(out.digests)
}

fn write_arms(out: &mut Artifacts, arms: &CorrelationArms) -> Result<()> {
    write_report(out, "raw", &arms.raw)?;
    write_report(out, "uniform_decorr", &arms.uniform_decorr)?;
    write_report(out, "sgfd", &arms.sgfd)
}

/// The most recent `n` states in the buffer, with their environment labels.
fn recent_features(buffer: &ReplayBuffer<f64>, n: usize) -> Result<FeatureBatch<f64>> {
    let len = buffer.len();
    let take = n.min(len);
    let d = buffer.state_dim();
    let mut values = Array2::zeros((take, d));
    let mut labels = Vec::with_capacity(take);
    for (row, t) in buffer.iter().skip(len - take).enumerate() {
        for (j, &v) in t.state.iter().enumerate() {
            values[[row, j]] = v;
        }
        labels.push(t.env);
    }
    FeatureBatch::new(values, labels, buffer.num_envs())
}

struct RunState {
    manifest: RunManifest,
    artifacts: Artifacts,
}

impl RunState {
    fn write_manifest(&mut self) -> Result<()> {
        self.manifest.files = self.artifacts.digests.clone();
        self.manifest.content_hash = self.artifacts.content_hash();
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        self.artifacts.write(MANIFEST_FILE, &json)
    }
}

/// Trains one agent as configured and writes every artifact into `cfg.output_dir`.
///
/// Transitions are collected round-robin over the training environments, one
/// episode at a time. The manifest is written first with `complete = false` and
/// rewritten at the end. On divergence the checkpoints of the last evaluation are
/// kept, the logs so far are flushed and the manifest records the failure.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut suite = cfg.env.build()?;
    let k = suite.train.len();
    let state_dim = suite.train[0].state_dim();
    let action_dim = suite.train[0].action_dim();
    let changed = suite.train[0].changed_feature_index();

    let mut env_rng = rng::stream(cfg.seed, "env");
    let noise = rng::stream(cfg.seed, "agent-noise");
    let mut init = rng::stream(cfg.seed, "init");
    let maps = FeatureMaps::sample(
        state_dim,
        cfg.decorr.rff_count,
        &mut rng::stream(cfg.seed, "rff"),
    )?;
    let mut buffer = ReplayBuffer::new(
        cfg.agent.replay_capacity,
        state_dim,
        action_dim,
        k,
        rng::stream(cfg.seed, "buffer-sampling"),
    )?;
    let agent = SacAgent::new(state_dim, action_dim, cfg.agent.clone(), &mut init)?;
    let mut trainer = Trainer::new(
        agent,
        k,
        maps.clone(),
        cfg.method,
        cfg.decorr,
        cfg.saliency,
        &mut init,
        noise,
    )?;

    let mut run = RunState {
        artifacts: Artifacts::new(&cfg.output_dir)?,
        manifest: RunManifest {
            format_version: FORMAT_VERSION,
            status: RunStatus::Running,
            complete: false,
            steps_completed: 0,
            build: build_id(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config: cfg.clone(),
            rff_maps: maps,
            files: BTreeMap::new(),
            content_hash: String::new(),
            final_returns: BTreeMap::new(),
            message: None,
        },
    };
    run.write_manifest()?;

    let mut logs = Logs::new(state_dim, cfg.trace);
    let mut episode = 0usize;
    let mut current: Option<(usize, Vec<f64>, usize)> = None;

    let outcome = (|| -> Result<()> {
        for t in 1..=cfg.total_steps {
            let (env_index, state, elapsed) = match current.take() {
                Some(c) => c,
                None => {
                    let e = episode % k;
                    episode += 1;
                    let s = suite.train[e].reset(rng::next_seed(&mut env_rng));
                    (e, s, 0)
                }
            };
            let action = if t <= cfg.start_steps {
                (0..action_dim)
                    .map(|_| env_rng.random_range(-1.0..=1.0))
                    .collect()
            } else {
                trainer.explore(&state)?
            };
            let env = &mut suite.train[env_index];
            let step = env.step(&action)?;
            let done = step.done || elapsed + 1 >= env.horizon();
            buffer.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.state.clone(),
                done,
                env: env_index,
            })?;
            if !done {
                current = Some((env_index, step.state, elapsed + 1));
            }

            if t > cfg.start_steps {
                let report = trainer.train_step(&mut buffer, t)?;
                logs.record(&report);
            }
            run.manifest.steps_completed = t;

            if t % cfg.eval_every == 0 || t == cfg.total_steps {
                let stats =
                    evaluate_suites(&trainer.agent, &mut suite, cfg.eval_episodes, cfg.seed)?;
                for (mode, s) in &stats {
                    let _ = writeln!(
                        logs.returns.get_mut(mode).expect("mode"),
                        "{t},{},{}",
                        s.mean,
                        s.std
                    );
                    run.manifest
                        .final_returns
                        .insert(mode.name().to_string(), s.mean);
                }
                save_checkpoints(&trainer, &cfg.output_dir)?;
            }
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        logs.write(&mut run.artifacts)?;
        run.manifest.status = match e {
            SgfdError::Divergence(_) => RunStatus::Diverged,
            _ => RunStatus::Failed,
        };
        run.manifest.message = Some(e.to_string());
        run.write_manifest()?;
        return Err(e);
    }

    logs.write(&mut run.artifacts)?;
    let batch = recent_features(&buffer, cfg.correlation_samples)?;
    let saliency = match &trainer.classifier {
        Some(clf) if clf.ever_passed() => Some(clf.feature_saliency(&batch, cfg.saliency.signed)?),
        _ => None,
    };
    let arms = correlation_arms(&batch, &run.manifest.rff_maps, cfg, changed, saliency)?;
    write_arms(&mut run.artifacts, &arms)?;

    run.manifest.status = RunStatus::Complete;
    run.manifest.complete = true;
    run.write_manifest()?;
    Ok(run.manifest)
}

/// Reloads the policy of a finished run.
pub fn load_policy(dir: &Path, manifest: &RunManifest, init_seed: u64) -> Result<SacAgent<f64>> {
    let suite = manifest.config.env.build()?;
    let env = &suite.train[0];
    let mut r = rng::seeded(init_seed);
    let mut agent = SacAgent::new(
        env.state_dim(),
        env.action_dim(),
        manifest.config.agent.clone(),
        &mut r,
    )?;
    agent.policy = checkpoint::load(&dir.join(CHECKPOINT_DIR).join("policy.txt"))?;
    Ok(agent)
}

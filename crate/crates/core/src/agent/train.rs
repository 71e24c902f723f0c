use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::sac::SacAgent;
use crate::decorrelation::{
    optimize_weights, DecorrConfig, DecorrProblem, TracePoint, WeightVector,
};
use crate::error::{Result, SgfdError};
use crate::rff::FeatureMaps;
use crate::rng::Rng;
use crate::saliency::{ClassifierGate, EnvClassifier, FeatureSaliency, SaliencyConfig};
use crate::Scalar;

/// Which feature probabilities drive the sample weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Saliency-guided probabilities from the environment classifier.
    #[default]
    Sgfd,
    /// Uniform probabilities: decorrelate every pair equally.
    UniformDecorr,
    /// No reweighting; plain SAC.
    NoDecorr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sgfd, Method::UniformDecorr, Method::NoDecorr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgfd => "sgfd",
            Method::UniformDecorr => "uniform_decorr",
            Method::NoDecorr => "no_decorr",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What one training step did.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: Option<f64>,
    pub decorr_initial: Option<f64>,
    pub decorr_final: Option<f64>,
    pub classifier_accuracy: Option<f64>,
    pub classifier_updated: bool,
    pub saliency: Vec<f64>,
    pub probs: Vec<f64>,
    pub weight_min: f64,
    pub weight_max: f64,
    pub weight_entropy: f64,
    /// Set when weight optimization diverged and uniform weights were used instead.
    pub decorr_fallback: bool,
    #[serde(skip)]
    pub decorr_trace: Vec<TracePoint>,
}

/// The agent plus everything that reweights its policy updates.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub agent: SacAgent<T>,
    pub classifier: Option<EnvClassifier<T>>,
    pub maps: FeatureMaps<T>,
    pub method: Method,
    pub decorr: DecorrConfig,
    pub saliency: SaliencyConfig,
    noise: Rng,
}

impl<T: Scalar> Trainer<T> {
    /// The classifier exists only for [`Method::Sgfd`] with at least two environments.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        agent: SacAgent<T>,
        num_envs: usize,
        maps: FeatureMaps<T>,
        method: Method,
        decorr: DecorrConfig,
        saliency: SaliencyConfig,
        init_rng: &mut Rng,
        noise: Rng,
    ) -> Result<Self> {
        decorr.validate()?;
        saliency.validate()?;
        if maps.num_features() != agent.state_dim() {
            return Err(SgfdError::InvalidArgument(format!(
                "{} rff maps for a {}-dimensional state",
                maps.num_features(),
                agent.state_dim()
            )));
        }
        let classifier = if method == Method::Sgfd && num_envs >= 2 {
            Some(EnvClassifier::new(
                agent.state_dim(),
                num_envs,
                saliency.hidden,
                saliency.learning_rate,
                init_rng,
            )?)
        } else {
            None
        };
        Ok(Trainer {
            agent,
            classifier,
            maps,
            method,
            decorr,
            saliency,
            noise,
        })
    }

    pub fn gate(&self) -> ClassifierGate {
        self.saliency.gate()
    }

    /// One pass of the training loop body: sample, gate the classifier, pick
    /// feature probabilities, learn sample weights, then update critics, actor
    /// (every `actor_update_frequency` steps) and targets.
    pub fn train_step(
        &mut self,
        buffer: &mut ReplayBuffer<T>,
        global_step: u64,
    ) -> Result<StepReport> {
        let cfg = self.agent.config().clone();
        let n = cfg.batch_size;
        let batch = buffer.sample(n)?;
        let features = batch.features()?;
        let d = features.d();

        let mut accuracy = None;
        let mut classifier_updated = false;
        let gate = self.gate();
        let sal = match (&mut self.classifier, self.method) {
            (Some(clf), Method::Sgfd) => {
                let report = clf.update(&gate, global_step, || buffer.sample_features(n))?;
                accuracy = report.accuracy;
                classifier_updated = report.did_update;
                if clf.ever_passed() {
                    clf.feature_saliency(&features, self.saliency.signed)?
                } else {
                    FeatureSaliency::uniform(d)
                }
            }
            _ => FeatureSaliency::uniform(d),
        };

        let mut weights = WeightVector::uniform(n);
        let mut decorr_initial = None;
        let mut decorr_final = None;
        let mut decorr_fallback = false;
        let mut decorr_trace = Vec::new();
        if self.method == Method::NoDecorr {
            let problem = DecorrProblem::new(
                &features,
                &self.maps,
                &sal.p,
                self.decorr.standardize_features,
                self.decorr.estimator,
            )?;
            let value = problem.value(weights.as_slice())?.as_f64();
            decorr_initial = Some(value);
            decorr_final = Some(value);
        } else {
            match optimize_weights(&features, &self.maps, &sal.p, &self.decorr) {
                Ok(out) => {
                    decorr_initial = Some(out.initial_objective.as_f64());
                    decorr_final = Some(out.final_objective.as_f64());
                    decorr_trace = out.trace;
                    weights = out.weights;
                }
                Err(SgfdError::Divergence(msg)) => {
                    log::warn!("step {global_step}: weight optimization diverged ({msg}); using uniform weights");
                    decorr_fallback = true;
                }
                Err(e) => return Err(e),
            }
        }

        let next_noise = self.agent.draw_noise(n, &mut self.noise);
        let targets = self.agent.critic_targets(&batch, next_noise.view())?;
        let critic_weights = cfg.weighted_critic.then(|| weights.as_slice());
        let critic = self
            .agent
            .update_critics(&batch, &targets, critic_weights)?;

        let mut policy_loss = None;
        if global_step.is_multiple_of(cfg.actor_update_frequency) {
            let noise = self.agent.draw_noise(n, &mut self.noise);
            let loss =
                self.agent
                    .update_actor(batch.states.view(), weights.as_slice(), noise.view())?;
            policy_loss = Some(loss.as_f64());
        }
        self.agent.soft_update()?;

        Ok(StepReport {
            step: global_step,
            q1_loss: critic.loss1.as_f64(),
            q2_loss: critic.loss2.as_f64(),
            policy_loss,
            decorr_initial,
            decorr_final,
            classifier_accuracy: accuracy,
            classifier_updated,
            saliency: sal.m.iter().map(|v| v.as_f64()).collect(),
            probs: sal.p.iter().map(|v| v.as_f64()).collect(),
            weight_min: weights.min().as_f64(),
            weight_max: weights.max().as_f64(),
            weight_entropy: weights.entropy().as_f64(),
            decorr_fallback,
            decorr_trace,
        })
    }

    /// Action for environment interaction, drawing exploration noise from the trainer's stream.
    pub fn explore(&mut self, state: &[T]) -> Result<Vec<T>> {
        self.agent.act(state, false, &mut self.noise)
    }
}

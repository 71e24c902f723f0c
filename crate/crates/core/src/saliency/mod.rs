//! Environment classifier, its accuracy gate, and feature saliency.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::decorrelation::FeatureBatch;
use crate::error::{invalid, Result, SgfdError};
use crate::nn::{
    self, softmax, softmax_cross_entropy, Activation, Mlp, Optimizer, OptimizerConfig,
};
use crate::rng::Rng;
use crate::Scalar;

/// When the classifier is allowed to train.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierGate {
    pub warmup_steps: u64,
    pub accuracy_threshold: f64,
    pub max_inner_iters: usize,
}

impl Default for ClassifierGate {
    fn default() -> Self {
        ClassifierGate {
            warmup_steps: 1000,
            accuracy_threshold: 0.9,
            max_inner_iters: 10,
        }
    }
}

impl ClassifierGate {
    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0) {
            return Err(SgfdError::Config {
                field: "saliency.accuracy_threshold".into(),
                message: format!("must lie in (0, 1], got {}", self.accuracy_threshold),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub accuracy_threshold: f64,
    pub max_inner_iters: usize,
    /// Softmax over signed mean gradients instead of mean absolute gradients.
    pub signed: bool,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        let gate = ClassifierGate::default();
        SaliencyConfig {
            hidden: 128,
            learning_rate: 1e-3,
            warmup_steps: gate.warmup_steps,
            accuracy_threshold: gate.accuracy_threshold,
            max_inner_iters: gate.max_inner_iters,
            signed: false,
        }
    }
}

impl SaliencyConfig {
    pub fn gate(&self) -> ClassifierGate {
        ClassifierGate {
            warmup_steps: self.warmup_steps,
            accuracy_threshold: self.accuracy_threshold,
            max_inner_iters: self.max_inner_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(SgfdError::Config {
                field: "saliency.hidden".into(),
                message: "must be at least 1".into(),
            });
        }
        OptimizerConfig::adam(self.learning_rate)
            .validate()
            .map_err(|e| SgfdError::Config {
                field: "saliency.learning_rate".into(),
                message: e.to_string(),
            })?;
        self.gate().validate()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy_from_logits<T: Scalar>(logits: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() == 0 {
        return invalid("accuracy of an empty batch");
    }
    if labels.len() != logits.nrows() {
        return invalid("one label per row is required");
    }
    let hits = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &y)| argmax(&row.to_vec()) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Outcome of one [`EnvClassifier::update`] call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateReport {
    /// Last accuracy measured, `None` during warmup.
    pub accuracy: Option<f64>,
    pub did_update: bool,
    pub iterations: usize,
    pub loss: Option<f64>,
}

/// Predicts which training environment a state came from.
#[derive(Clone, Debug)]
pub struct EnvClassifier<T> {
    net: Mlp<T>,
    optimizer: Optimizer<T>,
    ever_passed: bool,
}

impl<T: Scalar> EnvClassifier<T> {
    pub fn new(
        num_features: usize,
        num_envs: usize,
        hidden: usize,
        learning_rate: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_envs < 2 {
            return invalid("the environment classifier needs at least two environments");
        }
        let net = Mlp::new(
            &[num_features, hidden, num_envs],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        Self::from_net(net, learning_rate)
    }

    pub fn from_net(net: Mlp<T>, learning_rate: f64) -> Result<Self> {
        Ok(EnvClassifier {
            net,
            optimizer: Optimizer::new(OptimizerConfig::adam(learning_rate))?,
            ever_passed: false,
        })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn num_envs(&self) -> usize {
        self.net.output_dim()
    }

    pub fn num_features(&self) -> usize {
        self.net.input_dim()
    }

    /// Whether any gate check has seen accuracy above the threshold.
    pub fn ever_passed(&self) -> bool {
        self.ever_passed
    }

    fn check_batch(&self, batch: &FeatureBatch<T>) -> Result<()> {
        if batch.n() == 0 {
            return invalid("empty batch");
        }
        if batch.d() != self.num_features() || batch.num_envs() != self.num_envs() {
            return invalid(format!(
                "batch has {} features and {} environments, classifier expects {} and {}",
                batch.d(),
                batch.num_envs(),
                self.num_features(),
                self.num_envs()
            ));
        }
        Ok(())
    }

    pub fn logits(&self, batch: &FeatureBatch<T>) -> Result<Array2<T>> {
        self.check_batch(batch)?;
        self.net.forward_batch(batch.values())
    }

    pub fn accuracy(&self, batch: &FeatureBatch<T>) -> Result<f64> {
        accuracy_from_logits(self.logits(batch)?.view(), batch.env_labels())
    }

    /// Mean cross-entropy and its gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, batch: &FeatureBatch<T>) -> Result<(T, Vec<T>)> {
        self.check_batch(batch)?;
        let trace = self.net.forward_trace(batch.values())?;
        let (loss, upstream) = softmax_cross_entropy(trace.output().view(), batch.env_labels())?;
        let (grads, _) = self.net.backward(&trace, upstream.view())?;
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &FeatureBatch<T>) -> Result<T> {
        let logits = self.logits(batch)?;
        Ok(softmax_cross_entropy(logits.view(), batch.env_labels())?.0)
    }

    /// One Adam step on the cross-entropy of `batch`.
    pub fn train_step(&mut self, batch: &FeatureBatch<T>) -> Result<T> {
        let (loss, grads) = self.loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(SgfdError::Divergence(
                "classifier loss is not finite".into(),
            ));
        }
        self.optimizer.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Gated training: nothing happens before warmup; afterwards, up to
    /// `max_inner_iters` rounds of measuring accuracy on a fresh batch, stopping
    /// as soon as it exceeds the threshold and otherwise training on that batch.
    pub fn update<F>(
        &mut self,
        gate: &ClassifierGate,
        global_step: u64,
        mut sample: F,
    ) -> Result<GateReport>
    where
        F: FnMut() -> Result<FeatureBatch<T>>,
    {
        let mut report = GateReport {
            accuracy: None,
            did_update: false,
            iterations: 0,
            loss: None,
        };
        if global_step < gate.warmup_steps {
            return Ok(report);
        }
        for _ in 0..gate.max_inner_iters {
            let batch = sample()?;
            let acc = self.accuracy(&batch)?;
            report.accuracy = Some(acc);
            if acc > gate.accuracy_threshold {
                self.ever_passed = true;
                break;
            }
            let loss = self.train_step(&batch)?;
            report.loss = Some(loss.as_f64());
            report.did_update = true;
            report.iterations += 1;
        }
        Ok(report)
    }

    /// Per-feature saliency: the batch mean of `|d log softmax(f(z))_y / d z_i|`
    /// with `y` the labeled environment, or of the signed gradient when `signed`.
    pub fn saliency_map(&self, batch: &FeatureBatch<T>, signed: bool) -> Result<Vec<T>> {
        self.check_batch(batch)?;
        let trace = self.net.forward_trace(batch.values())?;
        let mut upstream = nn::softmax_rows(trace.output().view());
        upstream.mapv_inplace(|p| -p);
        for (k, &y) in batch.env_labels().iter().enumerate() {
            upstream[[k, y]] += T::one();
        }
        let grad = self.net.input_gradient(&trace, upstream.view())?;
        let n = T::of(batch.n() as f64);
        let m = grad
            .axis_iter(Axis(1))
            .map(|col| {
                let total: T = if signed {
                    col.iter().copied().sum()
                } else {
                    col.iter().map(|g| g.abs()).sum()
                };
                total / n
            })
            .collect();
        Ok(m)
    }

    pub fn feature_saliency(
        &self,
        batch: &FeatureBatch<T>,
        signed: bool,
    ) -> Result<FeatureSaliency<T>> {
        let m = self.saliency_map(batch, signed)?;
        let p = feature_probs(&m)?;
        Ok(FeatureSaliency { m, p })
    }
}

/// Softmax of the saliencies.
pub fn feature_probs<T: Scalar>(m: &[T]) -> Result<Vec<T>> {
    softmax(m)
}

pub fn classifier_accuracy<T: Scalar>(
    clf: &EnvClassifier<T>,
    batch: &FeatureBatch<T>,
) -> Result<f64> {
    clf.accuracy(batch)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureSaliency<T> {
    pub m: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Scalar> FeatureSaliency<T> {
    /// Zero saliency and uniform probabilities, used until the classifier is trusted.
    pub fn uniform(d: usize) -> Self {
        FeatureSaliency {
            m: vec![T::zero(); d],
            p: vec![T::one() / T::of(d as f64); d],
        }
    }
}

/// Outcome of [`fit_feature_saliency`].
#[derive(Clone, Debug)]
pub struct FittedSaliency<T> {
    pub saliency: FeatureSaliency<T>,
    pub classifier: EnvClassifier<T>,
    pub calls: u64,
}

/// Trains a fresh classifier on minibatches of `sample_size` rows drawn from
/// `batch` (gate without warmup) until it first passes the accuracy gate or
/// `max_calls` updates have run, then reads the saliency off the whole batch.
pub fn fit_feature_saliency<T: Scalar>(
    batch: &FeatureBatch<T>,
    cfg: &SaliencyConfig,
    max_calls: u64,
    sample_size: usize,
    init: &mut Rng,
    sampler: &mut Rng,
) -> Result<FittedSaliency<T>> {
    cfg.validate()?;
    if batch.n() == 0 || sample_size == 0 {
        return invalid("saliency fitting needs samples");
    }
    let mut clf = EnvClassifier::new(
        batch.d(),
        batch.num_envs(),
        cfg.hidden,
        cfg.learning_rate,
        init,
    )?;
    let gate = ClassifierGate {
        warmup_steps: 0,
        ..cfg.gate()
    };
    let mut calls = 0;
    while calls < max_calls && !clf.ever_passed() {
        clf.update(&gate, calls, || {
            let rows: Vec<usize> = (0..sample_size)
                .map(|_| rand::Rng::random_range(&mut *sampler, 0..batch.n()))
                .collect();
            Ok(batch.select_rows(&rows))
        })?;
        calls += 1;
    }
    Ok(FittedSaliency {
        saliency: clf.feature_saliency(batch, cfg.signed)?,
        classifier: clf,
        calls,
    })
}

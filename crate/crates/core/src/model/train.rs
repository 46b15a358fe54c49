use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::FeatureLayout;
use super::network::{accumulate_gradient, batch_loss, forward, ModelInput};
use super::optim::{adamw_step, AdamState, AdamWSettings};
use super::params::{ModelDims, ModelParams};
use super::TrainConfig;
use crate::corpus::UtteranceKey;
use crate::error::{Error, Result};
use crate::features::{Polarity, Vocabulary};
use crate::taxonomy::{LabelMode, LabelSpace, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub key: UtteranceKey,
    pub input: ModelInput,
    pub target: Target,
    pub polarity: Polarity,
}

/// Everything a training run needs: examples plus the feature space they
/// were assembled in.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub label_space: LabelSpace,
    pub layout: FeatureLayout,
    pub vocabulary: Vocabulary,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Exact label-set match (multi-label) or argmax match (single-label).
    pub valid_accuracy: f64,
    /// Share of examples whose top-scoring label is one of the true labels.
    pub valid_argmax_accuracy: f64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub label_space: LabelSpace,
    pub layout: FeatureLayout,
    pub vocabulary: Vocabulary,
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// Conversations seen in training or validation.
    pub training_conversations: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub probabilities: Vec<f64>,
    /// Indices into the label space, ascending.
    pub labels: Vec<usize>,
}

/// Seeded generator for one named purpose. Each name gets its own ChaCha
/// stream so that, e.g., changing the batch order never perturbs the
/// parameter initialisation.
pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a
    let stream = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Multi-label: every label at or above the threshold, plus the argmax so
/// the set is never empty. Single-label: the argmax.
pub fn decide(probabilities: &[f64], mode: LabelMode, threshold: f64) -> Vec<usize> {
    let top = argmax(probabilities);
    if !mode.is_multi_label() {
        return vec![top];
    }
    probabilities
        .iter()
        .enumerate()
        .filter(|(i, p)| **p >= threshold || *i == top)
        .map(|(i, _)| i)
        .collect()
}

pub fn predict(model: &TrainedModel, input: &ModelInput) -> Result<IntentPrediction> {
    let out = forward(&model.params, input, model.label_space.mode)?;
    let labels = decide(
        &out.probabilities,
        model.label_space.mode,
        model.config.decision_threshold,
    );
    Ok(IntentPrediction {
        probabilities: out.probabilities,
        labels,
    })
}

fn check_targets(examples: &[Example], space: &LabelSpace) -> Result<()> {
    for ex in examples {
        let ok = match (&ex.target, space.mode.is_multi_label()) {
            (Target::Multi(y), true) => y.len() == space.len(),
            (Target::Single(k), false) => *k < space.len(),
            _ => false,
        };
        if !ok {
            return Err(Error::Dimension(format!(
                "target of {} does not match the label space",
                ex.key
            )));
        }
    }
    Ok(())
}

/// Validation loss, set accuracy and argmax accuracy.
fn validate(
    params: &ModelParams,
    examples: &[Example],
    space: &LabelSpace,
    threshold: f64,
) -> Result<(f64, f64, f64)> {
    let pairs: Vec<(&ModelInput, &Target)> = examples.iter().map(|e| (&e.input, &e.target)).collect();
    let loss = batch_loss(params, &pairs)?;
    let mut exact = 0usize;
    let mut top = 0usize;
    for ex in examples {
        let out = forward(params, &ex.input, space.mode)?;
        let truth = ex.target.indicator(space.len());
        let predicted = decide(&out.probabilities, space.mode, threshold);
        let predicted_set: Vec<bool> = (0..space.len()).map(|i| predicted.contains(&i)).collect();
        if predicted_set == truth {
            exact += 1;
        }
        if truth[super::train::argmax(&out.probabilities)] {
            top += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((loss, exact as f64 / n, top as f64 / n))
}

/// Runs `config.epochs` passes of mini-batch AdamW over the training split,
/// recording loss and accuracy on the validation split after every epoch.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Data("empty split: train".into()));
    }
    if dataset.valid.is_empty() {
        return Err(Error::Data("empty split: validation".into()));
    }
    if dataset.label_space.mode != config.label_mode {
        return Err(Error::Config(
            "label space mode differs from the train config".into(),
        ));
    }
    check_targets(&dataset.train, &dataset.label_space)?;
    check_targets(&dataset.valid, &dataset.label_space)?;

    let dims = ModelDims {
        features: dataset.layout.width(),
        token_ids: dataset.layout.token_ids(),
        model_width: config.model_width,
        labels: dataset.label_space.len(),
    };
    let mut params = ModelParams::random(config.head, &dims, &mut named_rng(config.seed, "init"));
    let mut shuffler = named_rng(config.seed, "shuffle");
    let mut state = AdamState::new(&params);
    let settings = AdamWSettings::from(config);

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffler);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &dataset.train[i];
                total += accumulate_gradient(&params, &ex.input, &ex.target, scale, &mut grad)?;
            }
            adamw_step(&mut params, &grad, &mut state, &settings);
            if !params.all_finite() {
                return Err(Error::Data(format!(
                    "non-finite parameter after step {}",
                    state.step
                )));
            }
        }
        let train_loss = total / dataset.train.len() as f64;
        let (valid_loss, valid_accuracy, valid_argmax_accuracy) = validate(
            &params,
            &dataset.valid,
            &dataset.label_space,
            config.decision_threshold,
        )?;
        let stats = EpochStats {
            epoch,
            train_loss,
            valid_loss,
            valid_accuracy,
            valid_argmax_accuracy,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}, valid loss {valid_loss:.4}, valid accuracy {valid_accuracy:.4}"
        );
        history.push(stats);
    }

    let training_conversations = dataset
        .train
        .iter()
        .chain(&dataset.valid)
        .map(|e| e.key.conversation_id.clone())
        .collect();
    Ok(TrainedModel {
        config: config.clone(),
        label_space: dataset.label_space.clone(),
        layout: dataset.layout.clone(),
        vocabulary: dataset.vocabulary.clone(),
        params,
        history,
        training_conversations,
    })
}

/// One training run per sentiment polarity present in the training split.
///
/// A slice smaller than the batch size trains with a single short batch per
/// epoch. A slice with no validation examples is validated on its own
/// training examples; both cases are logged as warnings.
pub fn train_per_sentiment(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<BTreeMap<Polarity, TrainedModel>> {
    let mut models = BTreeMap::new();
    for polarity in Polarity::ALL {
        let slice = |examples: &[Example]| -> Vec<Example> {
            examples
                .iter()
                .filter(|e| e.polarity == polarity)
                .cloned()
                .collect()
        };
        let train_slice = slice(&dataset.train);
        if train_slice.is_empty() {
            continue;
        }
        if train_slice.len() < config.batch_size {
            log::warn!(
                "{polarity} slice has {} examples, fewer than the batch size {}",
                train_slice.len(),
                config.batch_size
            );
        }
        let mut valid_slice = slice(&dataset.valid);
        if valid_slice.is_empty() {
            log::warn!("{polarity} slice has no validation examples; validating on training examples");
            valid_slice = train_slice.clone();
        }
        let sub = Dataset {
            label_space: dataset.label_space.clone(),
            layout: dataset.layout.clone(),
            vocabulary: dataset.vocabulary.clone(),
            train: train_slice,
            valid: valid_slice,
        };
        models.insert(polarity, train(&sub, config)?);
    }
    Ok(models)
}

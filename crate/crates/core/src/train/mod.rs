//! Training: the weighted objective, joint POS + semantic-tag steps, the
//! task-homogeneous batch schedule and the early-stopping loop.

mod history;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Batch, Corpus, Sentence, TaskTag};
use crate::error::{Error, Result};
use crate::layers::{apply_bn_updates, BnUpdate, Pass};
use crate::model::{argmax, TrainedModel};
use crate::tensor::{Adam, AdamConfig, Gradients, Graph, Mode};

pub use history::{EpochRecord, History};

/// `main + λ·aux` (just `main` without an auxiliary loss).
pub fn total_loss(main: f64, aux: Option<f64>, lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Parameter {
            name: "lambda",
            detail: format!("{lambda} is not a non-negative number"),
        });
    }
    Ok(match aux {
        Some(a) => main + lambda * a,
        None => main,
    })
}

/// Result of one forward/backward pass.
pub struct Step {
    pub loss: f64,
    pub main: Option<f64>,
    pub aux: Option<f64>,
    pub grads: Gradients<f32>,
    pub bn_updates: Vec<BnUpdate<f32>>,
}

/// Head weights `(main, aux)` for a batch of this model.
pub fn head_weights(model: &TrainedModel, batch: &Batch) -> Result<(f64, f64)> {
    let h = &model.config.hyper;
    if !model.setup.is_joint() {
        return Ok((1.0, h.lambda_aux));
    }
    match batch.task {
        Some(TaskTag::MainPos) => Ok((1.0, h.joint_st_weight())),
        Some(TaskTag::MainSt) => Ok((0.0, 1.0)),
        None => Err(Error::Contract(
            "batch mixes POS and semantic-tag sentences".into(),
        )),
    }
}

/// Training-mode loss and gradients for one batch.
pub fn compute_step(model: &TrainedModel, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<Step> {
    let (wm, wa) = head_weights(model, batch)?;
    let mut pass = Pass::new(Mode::Train, rng);
    let mut g = Graph::new(&model.params);
    let parts = model.net.loss(&mut g, batch, &mut pass, wm, wa)?;
    let loss = g.value(parts.total).data()[0] as f64;
    let grads = g.backward(parts.total)?;
    Ok(Step {
        loss,
        main: parts.main,
        aux: parts.aux,
        grads,
        bn_updates: pass.bn_updates,
    })
}

/// One joint-training step: a POS batch trains the POS head (plus the
/// semantic-tag head on tokens that carry a secondary tag); a semantic-tag
/// batch trains only the semantic-tag head. The inactive head takes no part,
/// so its gradient is exactly zero.
pub fn joint_multitask_step(
    model: &TrainedModel,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
) -> Result<Step> {
    if !model.setup.is_joint() {
        return Err(Error::Contract("joint step on a single-task model".into()));
    }
    compute_step(model, batch, rng)
}

/// Concatenates the two corpora with their task markers and shuffles them.
pub fn make_interleaved_corpus(st: Corpus, pos: Corpus, rng: &mut ChaCha8Rng) -> Result<Corpus> {
    if st.is_empty() || pos.is_empty() {
        return Err(Error::Contract(
            "joint training needs both corpora to be nonempty".into(),
        ));
    }
    let split = st.split;
    let mut joint = st.with_task(TaskTag::MainSt);
    joint.extend(pos.with_task(TaskTag::MainPos));
    joint.sentences.shuffle(rng);
    joint.split = split;
    Ok(joint)
}

/// One epoch's batches as sentence indices: a global shuffle, split by task
/// (order kept), cut into batches (last partial batch kept), and the batches
/// themselves shuffled. Every sentence appears exactly once and every batch
/// is task-pure.
pub fn batch_schedule(
    sentences: &[Sentence],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for task in [TaskTag::MainSt, TaskTag::MainPos] {
        let pool: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| sentences[i].task == task)
            .collect();
        batches.extend(pool.chunks(batch_size.max(1)).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Settings of a training run beyond the model's hyperparameters.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Stop as soon as dev accuracy reaches this value.
    pub target_dev_accuracy: Option<f64>,
}

/// Evaluation-mode objective and main-head accuracy over a corpus:
/// `(loss, correct, total)`, the loss averaged over batches weighted by
/// their labeled-token counts.
pub fn evaluate(model: &TrainedModel, sentences: &[Sentence]) -> Result<(f64, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bs = model.config.hyper.batch_size;
    let (mut loss_sum, mut weight) = (0.0, 0usize);
    let (mut correct, mut total) = (0, 0);
    // Group by task so joint dev sets stay task-pure per batch.
    for task in [TaskTag::MainSt, TaskTag::MainPos] {
        let pool: Vec<&Sentence> = sentences.iter().filter(|s| s.task == task).collect();
        for chunk in pool.chunks(bs) {
            let batch = model.batch(chunk, true)?;
            let (wm, wa) = head_weights(model, &batch)?;
            let mut pass = Pass::new(Mode::Eval, &mut rng);
            let mut g = Graph::new(&model.params);
            let parts = model.net.loss(&mut g, &batch, &mut pass, wm, wa)?;
            let n = batch.real_tokens();
            loss_sum += g.value(parts.total).data()[0] as f64 * n as f64;
            weight += n;
            let (main, aux) = model.logits(&batch)?;
            let (logits, labels) = if batch.main_labels.iter().any(Option::is_some) {
                (main, &batch.main_labels)
            } else {
                match aux {
                    Some(a) => (a, &batch.aux_labels),
                    None => continue,
                }
            };
            for (pos, label) in labels.iter().enumerate() {
                if let Some(gold) = *label {
                    total += 1;
                    correct += (argmax(logits.row(pos)) == gold) as usize;
                }
            }
        }
    }
    if weight == 0 {
        return Err(Error::Contract("evaluation corpus is empty".into()));
    }
    Ok((loss_sum / weight as f64, correct, total))
}

/// Trains with ADAM and early stopping on dev loss; returns the parameter
/// snapshot with the lowest dev loss and the per-epoch history.
pub fn train_loop(
    mut model: TrainedModel,
    train: &Corpus,
    dev: &Corpus,
    opts: &TrainOptions,
) -> Result<(TrainedModel, History)> {
    if train.is_empty() {
        return Err(Error::Contract("training corpus is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Contract("development corpus is empty".into()));
    }
    let h = model.config.hyper.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(
        AdamConfig {
            lr: h.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let start = Instant::now();
    let mut history = History::default();
    let mut best: Option<(f64, usize, crate::tensor::ParamStore<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=h.max_epochs {
        let schedule = batch_schedule(&train.sentences, h.batch_size, &mut rng);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        for (bi, ids) in schedule.iter().enumerate() {
            let refs: Vec<&Sentence> = ids.iter().map(|&i| &train.sentences[i]).collect();
            let batch = model.batch(&refs, true)?;
            let step = compute_step(&model, &batch, &mut rng)?;
            if !step.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            adam.step(&mut model.params, &step.grads)?;
            apply_bn_updates(&mut model.params, &step.bn_updates);
            loss_sum += step.loss * batch.real_tokens() as f64;
            tokens += batch.real_tokens();
        }
        let (dev_loss, correct, total) = evaluate(&model, &dev.sentences)?;
        if !dev_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: schedule.len(),
            });
        }
        let dev_accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / tokens as f64,
            dev_loss,
            dev_accuracy,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        model.training.epochs_run = epoch;
        if best.as_ref().is_none_or(|(b, _, _)| dev_loss < *b) {
            best = Some((dev_loss, epoch, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if opts.target_dev_accuracy.is_some_and(|t| dev_accuracy >= t) || stale > h.patience {
            break;
        }
    }
    let (loss, epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    model.training.best_epoch = Some(epoch);
    model.training.best_dev_loss = Some(loss);
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_arithmetic() {
        assert!((total_loss(2.0, Some(1.0), 0.1).unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(total_loss(2.0, None, 0.1).unwrap(), 2.0);
        assert!(total_loss(2.0, Some(1.0), -0.5).is_err());
    }

    #[test]
    fn schedule_covers_every_sentence_once_with_pure_batches() {
        let mut sents = Vec::new();
        for i in 0..23 {
            let task = if i % 3 == 0 {
                TaskTag::MainPos
            } else {
                TaskTag::MainSt
            };
            sents.push(Sentence::from_pairs(&[("w", "X")], task));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batches = batch_schedule(&sents, 4, &mut rng);
        let mut seen = vec![0; sents.len()];
        for b in &batches {
            assert!(b.iter().all(|&i| sents[i].task == sents[b[0]].task));
            b.iter().for_each(|&i| seen[i] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::head::{ClassifierHead, HeadGradients};
use super::loss::triplet_terms;
use super::optim::Adam;
use super::pairs::{plan_pairs, EncodingKey, FIXED_PASS};
use super::{Schedule, TrainError, TrainingConfig};
use crate::corpus::{CorpusSplit, FunctionRecord, Label};
use crate::encoder::{Checkpoint, EncoderError, EncoderGradients, EncoderModel, ForwardTrace, TokenSequence, Tokenizer};
use crate::eval::{self, Scored};
use crate::seed;

const INIT_TAG: u64 = 0x1;
const HEAD_TAG: u64 = 0x2;
const SHUFFLE_TAG: u64 = 0x3;
const STEP_TAG: u64 = 0x4;

/// A record with its token sequences computed once up front.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub id: String,
    pub label: Label,
    pub code: TokenSequence,
    pub fixed: Option<TokenSequence>,
}

pub fn prepare_records(tokenizer: &Tokenizer, records: &[FunctionRecord]) -> Result<Vec<PreparedRecord>, TrainError> {
    records
        .iter()
        .map(|r| {
            Ok(PreparedRecord {
                id: r.id.clone(),
                label: r.label,
                code: tokenizer.tokenize(&r.code)?,
                fixed: match (&r.fixed_code, r.label) {
                    (Some(f), Label::Vulnerable) => Some(tokenizer.tokenize(f)?),
                    _ => None,
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `ce_weight · ce + contrastive_weight · contrastive`.
    pub total: f64,
    /// Mean cross-entropy over the batch.
    pub ce: f64,
    /// Mean margin loss over the batch's groups (0 without groups).
    pub contrastive: f64,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: EncoderGradients,
    pub head: HeadGradients,
}

impl Gradients {
    /// All gradient entries in the order token table, projector, bias,
    /// head weights, head bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.encoder
            .parts()
            .into_iter()
            .chain([self.head.weights.as_slice(), self.head.bias.as_slice()])
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.encoder
            .parts()
            .into_iter()
            .chain([self.head.weights.as_slice(), self.head.bias.as_slice()])
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Forward and backward pass of one batch.
///
/// Every member is encoded once with dropout (pass 0) for the classifier;
/// the pairing strategy adds a second pass and, for SimCL, the fixed code.
/// Dropout seeds derive from `(step_seed, record id, pass)`.
pub fn loss_and_gradients(
    model: &EncoderModel,
    head: &ClassifierHead,
    batch: &[&PreparedRecord],
    config: &TrainingConfig,
    step_seed: u64,
    ce_weight: f64,
    contrastive_weight: f64,
) -> Result<(LossBreakdown, Gradients), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let plans = if contrastive_weight > 0.0 {
        let flags: Vec<bool> = batch.iter().map(|r| r.fixed.is_some()).collect();
        match plan_pairs(&flags, config.strategy, config.symmetric_pairs) {
            Ok(p) => p,
            Err(TrainError::NoEligibleAnchors) => Vec::new(),
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };

    let mut keys: BTreeMap<EncodingKey, usize> = BTreeMap::new();
    for m in 0..batch.len() {
        keys.insert(EncodingKey::new(m, 0), 0);
    }
    for p in &plans {
        for k in [p.anchor, p.positive].iter().chain(&p.negatives) {
            keys.insert(*k, 0);
        }
    }
    let mut traces: Vec<(EncodingKey, ForwardTrace)> = Vec::with_capacity(keys.len());
    for (slot, (key, idx)) in keys.iter_mut().enumerate() {
        *idx = slot;
        let record = batch[key.member];
        let seq = sequence_for(record, *key);
        let s = seed::dropout_seed(step_seed, &record.id, u64::from(key.pass));
        traces.push((*key, model.forward(seq, Some(s))?));
    }
    let mut grad_out: Vec<Vec<f64>> = vec![vec![0.0; model.config().d]; traces.len()];

    let mut head_grads = HeadGradients::zeros_like(head);
    let n = batch.len() as f64;
    let mut ce_sum = 0.0;
    for (m, record) in batch.iter().enumerate() {
        let slot = keys[&EncodingKey::new(m, 0)];
        let (loss, ge) = head.loss_and_backward(&traces[slot].1.output, record.label, ce_weight / n, &mut head_grads);
        ce_sum += loss;
        grad_out[slot].iter_mut().zip(ge).for_each(|(g, x)| *g += x);
    }

    let mut contrastive_sum = 0.0;
    if !plans.is_empty() {
        let scale = contrastive_weight / plans.len() as f64;
        for p in &plans {
            let (a, pos) = (keys[&p.anchor], keys[&p.positive]);
            let neg_slots: Vec<usize> = p.negatives.iter().map(|k| keys[k]).collect();
            let negs: Vec<&[f64]> = neg_slots.iter().map(|&s| traces[s].1.output.as_slice()).collect();
            let t = triplet_terms(
                traces[a].1.output.as_slice(),
                traces[pos].1.output.as_slice(),
                &negs,
                config.epsilon,
                config.negative_aggregation,
            );
            contrastive_sum += t.loss;
            if t.loss > 0.0 {
                add_scaled(&mut grad_out[a], &t.grad_anchor, scale);
                add_scaled(&mut grad_out[pos], &t.grad_positive, scale);
                for (&s, g) in neg_slots.iter().zip(&t.grad_negatives) {
                    add_scaled(&mut grad_out[s], g, scale);
                }
            }
        }
    }

    let mut enc_grads = EncoderGradients::zeros_like(model);
    for ((key, trace), g) in traces.iter().zip(&grad_out) {
        if g.iter().any(|v| *v != 0.0) {
            model.backward(sequence_for(batch[key.member], *key), trace, g, &mut enc_grads);
        }
    }

    let ce = ce_sum / n;
    let contrastive = if plans.is_empty() { 0.0 } else { contrastive_sum / plans.len() as f64 };
    Ok((
        LossBreakdown {
            total: ce_weight * ce + contrastive_weight * contrastive,
            ce,
            contrastive,
            groups: plans.len(),
        },
        Gradients {
            encoder: enc_grads,
            head: head_grads,
        },
    ))
}

fn sequence_for(record: &PreparedRecord, key: EncodingKey) -> &TokenSequence {
    if key.pass == FIXED_PASS {
        record.fixed.as_ref().unwrap_or(&record.code)
    } else {
        &record.code
    }
}

fn add_scaled(acc: &mut [f64], g: &[f64], scale: f64) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub contrastive_loss: f64,
    pub ce_loss: f64,
    pub valid_f1: Option<f64>,
    pub valid_prauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub model: EncoderModel,
    pub head: ClassifierHead,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_valid_f1: f64,
}

impl TrainingOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            head: Some(self.head.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: Label,
}

pub fn predict_sequence(model: &EncoderModel, head: &ClassifierHead, seq: &TokenSequence, threshold: f64) -> Result<Prediction, TrainError> {
    let probability = head.probability_vulnerable(&model.encode(seq, None)?);
    let label = if probability >= threshold {
        Label::Vulnerable
    } else {
        Label::NonVulnerable
    };
    Ok(Prediction { probability, label })
}

/// Inference without dropout. Ties at the threshold go to `Vulnerable`.
pub fn predict(model: &EncoderModel, head: &ClassifierHead, code: &str, threshold: f64) -> Result<Prediction, TrainError> {
    predict_sequence(model, head, &model.tokenize(code)?, threshold)
}

/// Scores every record's `code` for metric computation.
pub fn evaluate_records(
    model: &EncoderModel,
    head: &ClassifierHead,
    records: &[PreparedRecord],
    threshold: f64,
) -> Result<Vec<Scored>, TrainError> {
    records
        .iter()
        .map(|r| {
            let p = predict_sequence(model, head, &r.code, threshold)?;
            Ok(Scored {
                probability: p.probability,
                predicted: p.label,
                actual: r.label,
            })
        })
        .collect()
}

/// Seeded training with early stopping on validation F1.
///
/// Returns the parameters of the epoch with the highest validation F1
/// (earliest on ties). An absent F1 counts as 0 for selection.
pub fn train(config: &TrainingConfig, split: &CorpusSplit) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if split.valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }
    let mut model = EncoderModel::new(config.encoder(), seed::derive(config.seed, &[INIT_TAG]))?;
    let mut head = ClassifierHead::new(config.d, seed::derive(config.seed, &[HEAD_TAG]));
    let train_set = prepare_records(model.tokenizer(), &split.train)?;
    let valid_set = prepare_records(model.tokenizer(), &split.valid)?;

    let sizes: Vec<usize> = model
        .parameters()
        .iter()
        .chain(head.parameters().iter())
        .map(|p| p.len())
        .collect();
    let mut adam = Adam::new(
        &sizes,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );

    let pretrain = match config.schedule {
        Schedule::Joint => 0,
        Schedule::TwoPhase => config.pretrain_epochs,
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, EncoderModel, ClassifierHead)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=pretrain + config.max_epochs {
        let (ce_weight, contrastive_weight) = match config.schedule {
            Schedule::Joint => (1.0, config.lambda_contrastive),
            Schedule::TwoPhase if epoch <= pretrain => (0.0, config.lambda_contrastive),
            Schedule::TwoPhase => (1.0, 0.0),
        };
        order.shuffle(&mut seed::rng(seed::derive(config.seed, &[SHUFFLE_TAG, epoch as u64])));
        let (mut total, mut ce, mut con, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&PreparedRecord> = chunk.iter().map(|&i| &train_set[i]).collect();
            let step_seed = seed::derive(config.seed, &[STEP_TAG, epoch as u64, step as u64]);
            let result = loss_and_gradients(&model, &head, &batch, config, step_seed, ce_weight, contrastive_weight);
            let finite = match &result {
                Ok((loss, grads)) => loss.total.is_finite() && grads.is_finite(),
                Err(TrainError::Encoder(EncoderError::NonFinite)) => false,
                Err(_) => true,
            };
            if !finite {
                return Err(TrainError::DivergedLoss {
                    epoch,
                    step,
                    last_finite: Box::new(Checkpoint {
                        model,
                        head: Some(head),
                    }),
                });
            }
            let (loss, grads) = result?;
            let [t, p, b] = model.parameters_mut();
            let [hw, hb] = head.parameters_mut();
            adam.step(
                &mut [t, p, b, hw, hb],
                &[
                    &grads.encoder.token_table,
                    &grads.encoder.projector,
                    &grads.encoder.bias,
                    &grads.head.weights,
                    &grads.head.bias,
                ],
            );
            total += loss.total;
            ce += loss.ce;
            con += loss.contrastive;
            steps += 1;
        }

        let scored = evaluate_records(&model, &head, &valid_set, config.threshold)?;
        let (report, _) = eval::compute_metrics(&scored).map_err(|_| TrainError::EmptySplit("valid"))?;
        let steps = steps as f64;
        history.push(EpochRecord {
            epoch,
            train_loss: total / steps,
            contrastive_loss: con / steps,
            ce_loss: ce / steps,
            valid_f1: report.f1,
            valid_prauc: report.pr_auc,
        });

        if epoch <= pretrain {
            continue;
        }
        let f1 = report.f1.unwrap_or(0.0);
        if best.as_ref().is_none_or(|(b, ..)| f1 > *b) {
            best = Some((f1, epoch, model.clone(), head.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }

    let (best_valid_f1, best_epoch, model, head) = best.expect("at least one selection epoch runs");
    Ok(TrainingOutcome {
        model,
        head,
        history,
        best_epoch,
        best_valid_f1,
    })
}

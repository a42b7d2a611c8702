//! The importance model: a linear layer over a frozen title embedding with
//! one sigmoid output per skill, fitted to weak labels by mini-batch
//! gradient descent.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{SkillId, TitleRecord};
use crate::embedding::EmbeddingStore;
use crate::rankeval::{average_precision_at_k, rank_skills};
use crate::rng::SplitMix64;
use crate::weaklabel::{SkillLabels, WeakLabelSet};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Predictions are clamped to this distance from 0 and 1 inside the loss.
const LOSS_CLAMP: f64 = 1e-7;

/// Weights are stored one row per skill (`S x D`, row-major), which is the
/// transpose of the `D x S` layer matrix and matches the checkpoint layout.
#[derive(Debug, Clone)]
pub struct LinearHead {
    dimension: usize,
    skill_order: Vec<SkillId>,
    index: HashMap<SkillId, usize>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl PartialEq for LinearHead {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.skill_order == other.skill_order
            && self.weights == other.weights
            && self.bias == other.bias
    }
}

impl LinearHead {
    pub fn zeros(dimension: usize, skill_order: Vec<SkillId>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("head dimension must be positive".into()));
        }
        let mut index = HashMap::with_capacity(skill_order.len());
        for (i, s) in skill_order.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::DuplicateSkill(s.to_string()));
            }
        }
        let s = skill_order.len();
        Ok(Self {
            dimension,
            skill_order,
            index,
            weights: vec![0.0; s * dimension],
            bias: vec![0.0; s],
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn skill_order(&self) -> &[SkillId] {
        &self.skill_order
    }

    pub fn num_skills(&self) -> usize {
        self.skill_order.len()
    }

    pub fn skill_index(&self, skill: &str) -> Option<usize> {
        self.index.get(skill).copied()
    }

    pub fn weight_row(&self, skill: usize) -> &[f64] {
        &self.weights[skill * self.dimension..(skill + 1) * self.dimension]
    }

    pub fn weight_row_mut(&mut self, skill: usize) -> &mut [f64] {
        &mut self.weights[skill * self.dimension..(skill + 1) * self.dimension]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Flat view of every parameter: all weight rows, then the bias.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.dimension)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    /// Converts sparse labels to output indices. Every key must be a known skill.
    pub fn target(&self, labels: &SkillLabels) -> Result<SparseTarget> {
        let mut entries = labels
            .iter()
            .map(|(s, &y)| {
                self.skill_index(s.as_str())
                    .map(|i| (i, y))
                    .ok_or_else(|| Error::UnknownSkill(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        entries.sort_by_key(|&(i, _)| i);
        Ok(SparseTarget { entries })
    }

    /// Like [`LinearHead::target`] but drops skills outside the skill order.
    pub fn target_lossy(&self, labels: &SkillLabels) -> SparseTarget {
        let mut entries: Vec<(usize, f64)> = labels
            .iter()
            .filter_map(|(s, &y)| self.skill_index(s.as_str()).map(|i| (i, y)))
            .collect();
        entries.sort_by_key(|&(i, _)| i);
        SparseTarget { entries }
    }
}

/// Model output aligned to the head's skill order; every value in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ImportanceVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Logistic function, kept strictly inside `(0, 1)` even where `f64` would
/// round to an endpoint.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn forward(head: &LinearHead, x: &[f64]) -> Result<ImportanceVector> {
    Ok(ImportanceVector(head.logits(x)?.into_iter().map(sigmoid).collect()))
}

/// Sparse label vector over output indices; absent indices are zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseTarget {
    entries: Vec<(usize, f64)>,
}

impl SparseTarget {
    /// `entries` may come in any order; indices must be distinct.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Calls `f(j, y_j)` for every output `j < len`, zeros included.
    fn for_each_dense(&self, len: usize, mut f: impl FnMut(usize, f64)) {
        let mut it = self.entries.iter().peekable();
        for j in 0..len {
            let y = match it.peek() {
                Some(&&(i, y)) if i == j => {
                    it.next();
                    y
                }
                _ => 0.0,
            };
            f(j, y);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Soft-target binary cross-entropy.
    #[default]
    Bce,
    /// Squared error on the sigmoid output.
    Mse,
}

impl Loss {
    /// Mean over all outputs of the per-skill loss.
    pub fn value(self, pred: &ImportanceVector, target: &SparseTarget) -> f64 {
        let mut total = 0.0;
        target.for_each_dense(pred.len(), |j, y| {
            let p = pred[j];
            total += match self {
                Loss::Bce => {
                    let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                }
                Loss::Mse => (p - y) * (p - y),
            };
        });
        total / pred.len().max(1) as f64
    }

    /// Derivative of the per-skill loss with respect to the logit.
    fn logit_grad(self, p: f64, y: f64) -> f64 {
        match self {
            Loss::Bce => p - y,
            Loss::Mse => 2.0 * (p - y) * p * (1.0 - p),
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(Loss::Bce),
            "mse" => Ok(Loss::Mse),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

pub fn bce_loss(pred: &ImportanceVector, target: &SparseTarget) -> f64 {
    Loss::Bce.value(pred, target)
}

/// Mean per-sample loss over a batch.
pub fn batch_loss(head: &LinearHead, batch: &[(&[f64], &SparseTarget)], loss: Loss) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let mut total = 0.0;
    for (x, y) in batch {
        total += loss.value(&forward(head, x)?, y);
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`batch_loss`], laid out like the head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    fn zeros(head: &LinearHead) -> Self {
        Self {
            weights: vec![0.0; head.weights.len()],
            bias: vec![0.0; head.bias.len()],
        }
    }

    pub fn weight_row(&self, skill: usize, dimension: usize) -> &[f64] {
        &self.weights[skill * dimension..(skill + 1) * dimension]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }
}

/// Analytic gradient. Samples are reduced sequentially in batch order, so the
/// result is bit-reproducible.
pub fn gradient(head: &LinearHead, batch: &[(&[f64], &SparseTarget)], loss: Loss) -> Result<Gradients> {
    let mut grads = Gradients::zeros(head);
    accumulate_gradient(head, batch, loss, &mut grads)?;
    Ok(grads)
}

fn accumulate_gradient(
    head: &LinearHead,
    batch: &[(&[f64], &SparseTarget)],
    loss: Loss,
    grads: &mut Gradients,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    grads.weights.iter_mut().for_each(|g| *g = 0.0);
    grads.bias.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / (head.num_skills().max(1) * batch.len()) as f64;
    let d = head.dimension;
    for (x, target) in batch {
        let logits = head.logits(x)?;
        target.for_each_dense(logits.len(), |j, y| {
            let g = loss.logit_grad(sigmoid(logits[j]), y) * scale;
            grads.bias[j] += g;
            for (gw, xv) in grads.weights[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                *gw += g * xv;
            }
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without dev MAP improvement before stopping.
    pub patience: usize,
    pub loss: Loss,
    /// Cutoff of the dev MAP used for model selection.
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 42,
            patience: 10,
            loss: Loss::Bce,
            eval_k: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_k == 0 {
            return fail("epochs, batch size and eval k must be positive");
        }
        if self.patience == 0 || self.patience > self.epochs {
            return fail("patience must be in 1..=epochs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_map: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, when a dev set was given.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Mean average precision of raw importances on `dev`.
fn dev_map(head: &LinearHead, dev: &[(&[f64], &TitleRecord)], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (x, rec) in dev {
        let ranked = rank_skills(&forward(head, x)?, head.skill_order(), k);
        total += average_precision_at_k(&ranked, &rec.skills, k)?;
    }
    Ok(total / dev.len() as f64)
}

/// Fits a zero-initialized head to the weak labels.
///
/// Each epoch visits the training titles in an order reshuffled from one
/// [`SplitMix64`] stream seeded by `config.seed`, taking a plain gradient
/// step per mini-batch. With a non-empty `dev`, the parameters with the best
/// dev MAP@k are returned and training stops after `patience` epochs without
/// improvement; otherwise all epochs run and the final parameters are kept.
pub fn train_head(
    labels: &WeakLabelSet,
    dev: &[TitleRecord],
    store: &EmbeddingStore,
    config: &TrainConfig,
) -> Result<(LinearHead, TrainHistory)> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("training labels"));
    }
    let mut head = LinearHead::zeros(store.dimension(), labels.taxonomy())?;

    let targets = labels
        .labels
        .values()
        .map(|l| head.target(l))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<(&[f64], &SparseTarget)> = labels
        .labels
        .keys()
        .map(|t| store.require(t))
        .zip(&targets)
        .map(|(x, y)| x.map(|x| (x, y)))
        .collect::<Result<_>>()?;
    let dev_samples: Vec<(&[f64], &TitleRecord)> = dev
        .iter()
        .filter(|r| !r.skills.is_empty())
        .map(|r| store.require(&r.title).map(|x| (x, r)))
        .collect::<Result<_>>()?;

    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grads = Gradients::zeros(&head);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, LinearHead)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            accumulate_gradient(&head, &batch, config.loss, &mut grads)?;
            for (w, g) in head.weights.iter_mut().zip(&grads.weights) {
                *w -= config.learning_rate * g;
            }
            for (b, g) in head.bias.iter_mut().zip(&grads.bias) {
                *b -= config.learning_rate * g;
            }
        }

        let train_loss = batch_loss(&head, &samples, config.loss)?;
        let map = if dev_samples.is_empty() {
            None
        } else {
            Some(dev_map(&head, &dev_samples, config.eval_k)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_map: map,
        });

        if let Some(map) = map {
            if best.as_ref().is_none_or(|(b, _)| map > *b) {
                best = Some((map, head.clone()));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    history.stopped_early = epoch < config.epochs;
                    break;
                }
            }
        }
    }

    Ok((best.map_or(head, |(_, h)| h), history))
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    format_version: u32,
    dimension: usize,
    skills: &'a [SkillId],
    activation: &'static str,
}

#[derive(Serialize)]
struct RowOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    skill: &'a SkillId,
    w: &'a [f64],
    b: f64,
}

#[derive(Deserialize)]
struct HeaderIn {
    #[serde(rename = "type")]
    kind: String,
    dimension: usize,
    skills: Vec<String>,
    activation: String,
}

#[derive(Deserialize)]
struct RowIn {
    #[serde(rename = "type")]
    kind: String,
    skill: String,
    w: Vec<f64>,
    b: f64,
}

pub fn save_checkpoint<W: Write>(head: &LinearHead, mut writer: W) -> Result<()> {
    for (j, s) in head.skill_order.iter().enumerate() {
        if !head.weight_row(j).iter().chain([&head.bias[j]]).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(s.to_string()));
        }
    }
    serde_json::to_writer(
        &mut writer,
        &HeaderOut {
            kind: "header",
            format_version: CHECKPOINT_VERSION,
            dimension: head.dimension,
            skills: &head.skill_order,
            activation: "sigmoid",
        },
    )?;
    writer.write_all(b"\n")?;
    for (j, skill) in head.skill_order.iter().enumerate() {
        serde_json::to_writer(
            &mut writer,
            &RowOut {
                kind: "row",
                skill,
                w: head.weight_row(j),
                b: head.bias[j],
            },
        )?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]; parameters come back
/// bit for bit.
pub fn load_checkpoint<R: BufRead>(reader: R) -> Result<LinearHead> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        line,
        message: e.to_string(),
    };

    let (i, first) = lines.next().ok_or(Error::MissingHeader)?;
    let first = first?;
    let value: serde_json::Value = serde_json::from_str(&first).map_err(|e| parse_err(i + 1, e))?;
    if value.get("type").and_then(|t| t.as_str()) != Some("header") {
        return Err(Error::MissingHeader);
    }
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "missing format_version".into(),
        })?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::UnsupportedVersion(u32::try_from(version).unwrap_or(u32::MAX)));
    }
    let header: HeaderIn = serde_json::from_value(value).map_err(|e| parse_err(i + 1, e))?;
    debug_assert_eq!(header.kind, "header");
    if header.activation != "sigmoid" {
        return Err(Error::Parse {
            line: i + 1,
            message: format!("unsupported activation {:?}", header.activation),
        });
    }
    let skills = header
        .skills
        .iter()
        .map(|s| SkillId::new(s))
        .collect::<Result<Vec<_>>>()?;
    let mut head = LinearHead::zeros(header.dimension, skills)?;

    let mut filled = 0;
    for (i, line) in lines {
        let row: RowIn = serde_json::from_str(&line?).map_err(|e| parse_err(i + 1, e))?;
        let corrupt = |message: String| Error::CorruptCheckpoint {
            skill: row.skill.clone(),
            message,
        };
        if row.kind != "row" {
            return Err(corrupt(format!("unexpected record type {:?}", row.kind)));
        }
        let Some(expected) = head.skill_order.get(filled) else {
            return Err(corrupt("more rows than declared skills".into()));
        };
        if expected.as_str() != row.skill {
            return Err(corrupt(format!("row out of order, expected {expected}")));
        }
        if row.w.len() != head.dimension {
            return Err(corrupt(format!(
                "weight row has length {}, expected {}",
                row.w.len(),
                head.dimension
            )));
        }
        head.weight_row_mut(filled).copy_from_slice(&row.w);
        head.bias[filled] = row.b;
        filled += 1;
    }
    if filled != head.num_skills() {
        return Err(Error::CorruptCheckpoint {
            skill: head.skill_order[filled].to_string(),
            message: "missing row".into(),
        });
    }
    Ok(head)
}

//! Mini-batch training with negative sampling.
//!
//! Only rows that receive a gradient are ever written, so entities and
//! relations absent from the training split keep their initial values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{split_vocab, EntityId, SplitDataset, Triple, Vocabulary};
use crate::models::{init_params, ModelKind, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `softplus(−s)` for positives, `softplus(s)` for negatives.
    Logistic,
    /// `max(0, γ − s⁺ + s⁻)` per negative.
    Margin,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "margin" => Ok(LossKind::Margin),
            other => Err(format!("unknown loss {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Logistic => "logistic",
            LossKind::Margin => "margin",
        })
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Training hyperparameters. Deserializes from a flat TOML key/value file;
/// missing keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    /// Defaults to margin for TransE and logistic otherwise.
    pub loss: Option<LossKind>,
    pub margin: f64,
    pub optimizer: OptimizerKind,
    pub reciprocal: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::DistMult,
            dim: 32,
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.01,
            negatives: 4,
            loss: None,
            margin: 1.0,
            optimizer: OptimizerKind::Adam,
            reciprocal: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn loss_kind(&self) -> LossKind {
        self.loss.unwrap_or(match self.model {
            ModelKind::TransE => LossKind::Margin,
            _ => LossKind::Logistic,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.epochs < 1 {
            return fail("epochs must be at least 1");
        }
        if self.negatives < 1 {
            return fail("negatives per positive must be at least 1");
        }
        if self.batch_size < 1 {
            return fail("batch size must be at least 1");
        }
        if self.dim < 1 {
            return fail("dimension must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning rate must be positive");
        }
        if self.loss_kind() == LossKind::Margin && !(self.margin.is_finite() && self.margin > 0.0) {
            return fail("margin must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Appends `(t, r_inv, h)` for every `(h, r, t)`, where `r_inv = r + |R|`.
/// The returned vocabulary has one inverse label per original relation.
pub fn augment_reciprocal(train: &[Triple], vocab: &Vocabulary) -> (Vec<Triple>, Vocabulary) {
    let n = vocab.n_relations() as u32;
    let mut extended = vocab.clone();
    let labels: Vec<String> = vocab.relations().map(str::to_owned).collect();
    for label in labels {
        let mut candidate = format!("{label}_reciprocal");
        while extended.relation_id(&candidate).is_some() {
            candidate.push('\'');
        }
        extended.intern_relation(&candidate);
    }
    let mut out = Vec::with_capacity(2 * train.len());
    out.extend_from_slice(train);
    out.extend(train.iter().map(|t| Triple::new(t.t, t.r + n, t.h)));
    (out, extended)
}

/// `k` corruptions of `triple`: each replaces the head or the tail (fair
/// coin) with an entity drawn uniformly from `candidates`. Negatives are not
/// checked against known triples.
pub fn sample_negatives<R: Rng>(triple: &Triple, k: usize, candidates: &[EntityId], rng: &mut R) -> Vec<Triple> {
    if candidates.is_empty() {
        return Vec::new();
    }
    (0..k)
        .map(|_| {
            let corrupt_head = rng.random_bool(0.5);
            let e = candidates[rng.random_range(0..candidates.len())];
            if corrupt_head {
                Triple::new(e, triple.r, triple.t)
            } else {
                Triple::new(triple.h, triple.r, e)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_trace: Vec<EpochLoss>,
    /// Optimizer steps applied (one per mini-batch).
    pub updates: usize,
    pub reciprocal: bool,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for e in &self.loss_trace {
            out.push_str(&format!("{},{}\n", e.epoch, e.mean_loss));
        }
        out
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

enum Optimizer {
    Sgd,
    Adam {
        step: i32,
        m_entities: Vec<f64>,
        v_entities: Vec<f64>,
        m_relations: Vec<f64>,
        v_relations: Vec<f64>,
    },
}

fn adam_row(theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, step: i32) {
    let c1 = 1.0 - ADAM_BETA1.powi(step);
    let c2 = 1.0 - ADAM_BETA2.powi(step);
    for i in 0..theta.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
    }
}

impl Optimizer {
    fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                step: 0,
                m_entities: vec![0.0; params.entities.len()],
                v_entities: vec![0.0; params.entities.len()],
                m_relations: vec![0.0; params.relations.len()],
                v_relations: vec![0.0; params.relations.len()],
            },
        }
    }

    /// Applies one step to the touched rows only (lazy / sparse Adam).
    fn apply(&mut self, params: &mut ModelParams, lr: f64, entities: &BTreeMap<u32, Vec<f64>>, relations: &BTreeMap<u32, Vec<f64>>) {
        let (ew, rw) = (params.entity_width(), params.relation_width());
        match self {
            Optimizer::Sgd => {
                for (&id, g) in entities {
                    for (p, g) in params.entity_mut(id).iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
                for (&id, g) in relations {
                    for (p, g) in params.relation_mut(id).iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
            }
            Optimizer::Adam { step, m_entities, v_entities, m_relations, v_relations } => {
                *step += 1;
                for (&id, g) in entities {
                    let span = id as usize * ew..(id as usize + 1) * ew;
                    adam_row(params.entity_mut(id), g, &mut m_entities[span.clone()], &mut v_entities[span], lr, *step);
                }
                for (&id, g) in relations {
                    let span = id as usize * rw..(id as usize + 1) * rw;
                    adam_row(params.relation_mut(id), g, &mut m_relations[span.clone()], &mut v_relations[span], lr, *step);
                }
            }
        }
    }
}

fn accumulate(into: &mut BTreeMap<u32, Vec<f64>>, rows: Vec<(u32, Vec<f64>)>) {
    for (id, g) in rows {
        match into.get_mut(&id) {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => {
                into.insert(id, g);
            }
        }
    }
}

/// Learns parameters on the training split. Rows exist for the whole
/// dataset vocabulary; negatives are drawn from training entities only.
/// Fully sequential and reproducible for a fixed config.
pub fn train(dataset: &SplitDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (triples, n_relations) = if config.reciprocal {
        let (augmented, vocab) = augment_reciprocal(&dataset.train, &dataset.vocab);
        (augmented, vocab.n_relations())
    } else {
        (dataset.train.clone(), dataset.vocab.n_relations())
    };
    let mut params = init_params(config.model, dataset.vocab.n_entities(), n_relations, config.dim, config.seed)?;
    let candidates: Vec<EntityId> = split_vocab(&dataset.train).0.into_iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut optimizer = Optimizer::new(config.optimizer, &params);
    let loss_kind = config.loss_kind();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut updates = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut grad_entities: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut grad_relations: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut batch_loss = 0.0;

            for &i in batch {
                let positive = triples[i];
                let negatives = sample_negatives(&positive, config.negatives, &candidates, &mut rng);
                let s_pos = params.score_unchecked(positive.h, positive.r, positive.t);
                let mut d_pos = 0.0;
                let mut d_neg = Vec::with_capacity(negatives.len());
                match loss_kind {
                    LossKind::Logistic => {
                        batch_loss += softplus(-s_pos);
                        d_pos -= sigmoid(-s_pos);
                        for n in &negatives {
                            let s = params.score_unchecked(n.h, n.r, n.t);
                            batch_loss += softplus(s);
                            d_neg.push(sigmoid(s));
                        }
                    }
                    LossKind::Margin => {
                        for n in &negatives {
                            let s = params.score_unchecked(n.h, n.r, n.t);
                            let violation = config.margin - s_pos + s;
                            if violation > 0.0 {
                                batch_loss += violation;
                                d_pos -= 1.0;
                                d_neg.push(1.0);
                            } else {
                                d_neg.push(0.0);
                            }
                        }
                    }
                }
                if d_pos != 0.0 {
                    let g = params.grad(positive.h, positive.r, positive.t, d_pos * scale)?;
                    accumulate(&mut grad_entities, g.entities);
                    accumulate(&mut grad_relations, g.relations);
                }
                for (n, d) in negatives.iter().zip(d_neg) {
                    if d != 0.0 {
                        let g = params.grad(n.h, n.r, n.t, d * scale)?;
                        accumulate(&mut grad_entities, g.entities);
                        accumulate(&mut grad_relations, g.relations);
                    }
                }
            }

            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_index + 1 });
            }
            epoch_loss += batch_loss;
            optimizer.apply(&mut params, config.learning_rate, &grad_entities, &grad_relations);
            updates += 1;
        }
        let mean_loss = if triples.is_empty() { 0.0 } else { epoch_loss / triples.len() as f64 };
        loss_trace.push(EpochLoss { epoch, mean_loss });
    }

    Ok(TrainOutcome {
        params,
        loss_trace,
        updates,
        reciprocal: config.reciprocal,
    })
}

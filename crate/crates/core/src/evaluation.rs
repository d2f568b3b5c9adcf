//! Filtered link- and relation-prediction metrics.
//!
//! For a test triple `(h, r, t)` the tail rank is computed by scoring every
//! candidate `x` as `(h, r, x)`, discarding candidates whose triple is known
//! to be true in any split (except the target itself), and counting how many
//! survivors score above or equal to the target. Heads and relations are
//! ranked the same way.
//!
//! Under [`OovPolicy::Exclude`] the dataset and parameters are first
//! projected onto the training vocabulary: OOV-affected triples leave the
//! evaluation set and OOV entities leave the candidate set. This is the same
//! computation as evaluating the corrected dataset with [`OovPolicy::Include`].

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{split_vocab, EntityId, FilterIndex, RelationId, SplitDataset, SplitKind, Triple, Vocabulary};
use crate::models::ModelParams;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Score OOV triples and candidates with their (untrained) embeddings.
    #[default]
    Include,
    /// Drop OOV triples and candidates before ranking.
    Exclude,
}

impl std::str::FromStr for OovPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "include" => Ok(OovPolicy::Include),
            "exclude" => Ok(OovPolicy::Exclude),
            other => Err(format!("unknown OOV policy {other:?}")),
        }
    }
}

/// How candidates scoring exactly like the target are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Average position among the tied block for MRR; pessimistic for Hits@N.
    #[default]
    Mean,
    Optimistic,
    Pessimistic,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean" => Ok(TiePolicy::Mean),
            "opt" | "optimistic" => Ok(TiePolicy::Optimistic),
            "pess" | "pessimistic" => Ok(TiePolicy::Pessimistic),
            other => Err(format!("unknown tie policy {other:?}")),
        }
    }
}

/// Which slot of the triple is being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Tail,
    Head,
    Relation,
}

/// Metric family of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Entity,
    Relation,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "entity" => Ok(Direction::Entity),
            "relation" => Ok(Direction::Relation),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Position of a target among filtered candidates, as counts of candidates
/// scoring strictly higher and exactly equal (target excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rank {
    pub greater: usize,
    pub ties: usize,
}

impl Rank {
    pub fn optimistic(self) -> usize {
        1 + self.greater
    }

    pub fn pessimistic(self) -> usize {
        1 + self.greater + self.ties
    }

    pub fn mean(self) -> f64 {
        1.0 + self.greater as f64 + self.ties as f64 / 2.0
    }

    /// Rank used inside MRR.
    pub fn value(self, tie: TiePolicy) -> f64 {
        match tie {
            TiePolicy::Mean => self.mean(),
            TiePolicy::Optimistic => self.optimistic() as f64,
            TiePolicy::Pessimistic => self.pessimistic() as f64,
        }
    }

    /// Integer rank used for Hits@N.
    pub fn hits_rank(self, tie: TiePolicy) -> usize {
        match tie {
            TiePolicy::Optimistic => self.optimistic(),
            TiePolicy::Mean | TiePolicy::Pessimistic => self.pessimistic(),
        }
    }
}

/// Counts candidates `0..scores.len()` that beat or tie the target, skipping
/// the `known` true candidates other than the target itself.
pub fn rank_among(scores: &[f64], target: usize, known: &[u32]) -> Rank {
    let s = scores[target];
    let (mut greater, mut ties) = (0usize, 0usize);
    for &v in scores {
        if v > s {
            greater += 1;
        } else if v == s {
            ties += 1;
        }
    }
    // the target ties with itself
    ties -= 1;
    for &k in known {
        let k = k as usize;
        if k == target || k >= scores.len() {
            continue;
        }
        let v = scores[k];
        if v > s {
            greater -= 1;
        } else if v == s {
            ties -= 1;
        }
    }
    Rank { greater, ties }
}

/// Filtered rank of one known triple with every entity (or relation) of
/// `params` as a candidate.
pub fn filtered_rank(params: &ModelParams, index: &FilterIndex, triple: &Triple, slot: Slot) -> Result<Rank> {
    if !index.contains(triple) {
        return Err(Error::TargetNotInIndex(triple.to_string()));
    }
    let Triple { h, r, t } = *triple;
    Ok(match slot {
        Slot::Tail => rank_among(&params.score_all_tails(h, r)?, t as usize, index.tails(h, r)),
        Slot::Head => rank_among(&params.score_all_heads(r, t)?, h as usize, index.heads(r, t)),
        Slot::Relation => rank_among(&params.score_all_relations(h, t)?, r as usize, index.relations(h, t)),
    })
}

/// Ranks of one evaluation triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    /// Position in the evaluated split (after any exclusion).
    pub index: usize,
    pub triple: Triple,
    pub tail: Option<Rank>,
    pub head: Option<Rank>,
    pub relation: Option<Rank>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalSettings {
    pub policy: OovPolicy,
    pub tie: TiePolicy,
    /// Relation rows `n/2..n` are inverses; head ranks use `(t, r_inv, ?)`.
    pub reciprocal: bool,
    /// Worker threads; 0 or 1 evaluates sequentially.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub split: SplitKind,
    pub direction: Direction,
    pub policy: OovPolicy,
    pub tie: TiePolicy,
    /// `"reciprocal"` when head ranks come from inverse relations, else `"direct"`.
    pub head_ranking: String,
    pub n_triples: usize,
    pub mrr: f64,
    /// Keyed by N.
    pub hits: BTreeMap<usize, f64>,
    /// Keyed by relation label; empty for relation-direction reports.
    pub per_relation_mrr: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn hits_at(&self, n: usize) -> f64 {
        self.hits.get(&n).copied().unwrap_or(f64::NAN)
    }

    /// The value of a named metric: `mrr`, `hits@1`, `hits@3`, `hits@10`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name.to_ascii_lowercase().as_str() {
            "mrr" => Some(self.mrr),
            other => other
                .strip_prefix("hits@")
                .and_then(|n| n.parse::<usize>().ok())
                .and_then(|n| self.hits.get(&n).copied()),
        }
    }

    pub fn markdown_header() -> String {
        "| Model | MRR | Hits@1 | Hits@3 | Hits@10 |\n|---|---:|---:|---:|---:|\n".to_owned()
    }

    pub fn markdown_row(&self) -> String {
        format!(
            "| {} | {} | {} | {} | {} |\n",
            self.model.as_deref().unwrap_or("-"),
            fmt3(self.mrr),
            fmt3(self.hits_at(1)),
            fmt3(self.hits_at(3)),
            fmt3(self.hits_at(10)),
        )
    }
}

/// Three decimals without the leading zero, e.g. `.467`.
pub fn fmt3(v: f64) -> String {
    let s = format!("{v:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:?} ({:?}, {:?} ties, n={}): MRR {} H@1 {} H@3 {} H@10 {}",
            self.split,
            self.direction,
            self.policy,
            self.tie,
            self.n_triples,
            fmt3(self.mrr),
            fmt3(self.hits_at(1)),
            fmt3(self.hits_at(3)),
            fmt3(self.hits_at(10))
        )
    }
}

/// Restriction of a dataset to the entities and relations of its training
/// split, with ids renumbered densely in ascending original-id order.
struct Projection {
    dataset: SplitDataset,
    params: ModelParams,
}

fn project_to_train(params: &ModelParams, dataset: &SplitDataset, reciprocal: bool) -> Result<Projection> {
    let (entities, relations) = split_vocab(&dataset.train);
    let entities: Vec<EntityId> = entities.into_iter().collect();
    let relations: Vec<RelationId> = relations.into_iter().collect();
    let entity_map: HashMap<EntityId, EntityId> = entities.iter().enumerate().map(|(i, &e)| (e, i as EntityId)).collect();
    let relation_map: HashMap<RelationId, RelationId> = relations.iter().enumerate().map(|(i, &r)| (r, i as RelationId)).collect();

    let mut vocab = Vocabulary::new();
    for &e in &entities {
        vocab.intern_entity(dataset.vocab.entity_label(e).expect("valid id"));
    }
    for &r in &relations {
        vocab.intern_relation(dataset.vocab.relation_label(r).expect("valid id"));
    }
    let remap = |split: &[Triple]| -> Vec<Triple> {
        split
            .iter()
            .filter_map(|t| Some(Triple::new(*entity_map.get(&t.h)?, *relation_map.get(&t.r)?, *entity_map.get(&t.t)?)))
            .collect()
    };
    let projected = SplitDataset {
        vocab,
        train: remap(&dataset.train),
        valid: remap(&dataset.valid),
        test: remap(&dataset.test),
        source: None,
    };

    let mut relation_rows = relations.clone();
    if reciprocal {
        let base = (params.n_relations / 2) as RelationId;
        relation_rows.extend(relations.iter().map(|r| r + base));
    }
    Ok(Projection {
        dataset: projected,
        params: params.select(&entities, &relation_rows)?,
    })
}

/// Filtered-ranking engine over one dataset and parameter set.
pub struct Evaluator<'a> {
    params: Cow<'a, ModelParams>,
    dataset: Cow<'a, SplitDataset>,
    index: FilterIndex,
    settings: EvalSettings,
    n_entities: usize,
    n_relations: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: &'a ModelParams, dataset: &'a SplitDataset, settings: EvalSettings) -> Result<Self> {
        let (params, dataset) = match settings.policy {
            OovPolicy::Include => (Cow::Borrowed(params), Cow::Borrowed(dataset)),
            OovPolicy::Exclude => {
                let p = project_to_train(params, dataset, settings.reciprocal)?;
                (Cow::Owned(p.params), Cow::Owned(p.dataset))
            }
        };
        let n_entities = dataset.vocab.n_entities();
        let n_relations = dataset.vocab.n_relations();
        let relation_rows = if settings.reciprocal { 2 * n_relations } else { n_relations };
        if params.n_entities < n_entities || params.n_relations < relation_rows {
            return Err(Error::InvalidConfig(format!(
                "parameters cover {} entities / {} relations, dataset needs {n_entities} / {relation_rows}",
                params.n_entities, params.n_relations
            )));
        }
        if settings.reciprocal && params.n_relations != relation_rows {
            return Err(Error::InvalidConfig("reciprocal parameters must hold exactly two rows per relation".into()));
        }
        let index = FilterIndex::build(&dataset);
        Ok(Evaluator {
            params,
            dataset,
            index,
            settings,
            n_entities,
            n_relations,
        })
    }

    /// The (possibly projected) dataset that is evaluated.
    pub fn dataset(&self) -> &SplitDataset {
        &self.dataset
    }

    fn rank_tail(&self, t: &Triple) -> Result<Rank> {
        let scores = self.params.score_all_tails(t.h, t.r)?;
        Ok(rank_among(&scores[..self.n_entities], t.t as usize, self.index.tails(t.h, t.r)))
    }

    fn rank_head(&self, t: &Triple) -> Result<Rank> {
        let scores = if self.settings.reciprocal {
            self.params.score_all_tails(t.t, t.r + self.n_relations as RelationId)?
        } else {
            self.params.score_all_heads(t.r, t.t)?
        };
        Ok(rank_among(&scores[..self.n_entities], t.h as usize, self.index.heads(t.r, t.t)))
    }

    fn rank_relation(&self, t: &Triple) -> Result<Rank> {
        let scores = self.params.score_all_relations(t.h, t.t)?;
        Ok(rank_among(&scores[..self.n_relations], t.r as usize, self.index.relations(t.h, t.t)))
    }

    fn record(&self, index: usize, triple: &Triple, direction: Direction) -> Result<RankRecord> {
        if !self.index.contains(triple) {
            return Err(Error::TargetNotInIndex(triple.to_string()));
        }
        Ok(match direction {
            Direction::Entity => RankRecord {
                index,
                triple: *triple,
                tail: Some(self.rank_tail(triple)?),
                head: Some(self.rank_head(triple)?),
                relation: None,
            },
            Direction::Relation => RankRecord {
                index,
                triple: *triple,
                tail: None,
                head: None,
                relation: Some(self.rank_relation(triple)?),
            },
        })
    }

    /// Rank records for every triple of `split`, in split order.
    pub fn rank_records(&self, split: SplitKind, direction: Direction) -> Result<Vec<RankRecord>> {
        let triples = self.dataset.split(split);
        if self.settings.threads <= 1 {
            return triples.iter().enumerate().map(|(i, t)| self.record(i, t, direction)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.settings.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| triples.par_iter().enumerate().map(|(i, t)| self.record(i, t, direction)).collect())
    }

    fn report(&self, split: SplitKind, direction: Direction, records: &[RankRecord]) -> Result<MetricsReport> {
        if records.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let tie = self.settings.tie;
        let ranks: Vec<Rank> = records.iter().flat_map(|r| [r.tail, r.head, r.relation]).flatten().collect();
        let mrr = ranks.iter().map(|r| 1.0 / r.value(tie)).sum::<f64>() / ranks.len() as f64;
        let hits = HITS_AT
            .iter()
            .map(|&n| (n, ranks.iter().filter(|r| r.hits_rank(tie) <= n).count() as f64 / ranks.len() as f64))
            .collect();
        let per_relation_mrr = match direction {
            Direction::Entity => per_relation(records, tie)
                .into_iter()
                .map(|(r, v)| (self.dataset.vocab.relation_label(r).expect("valid id").to_owned(), v))
                .collect(),
            Direction::Relation => BTreeMap::new(),
        };
        Ok(MetricsReport {
            model: None,
            split,
            direction,
            policy: self.settings.policy,
            tie,
            head_ranking: if self.settings.reciprocal { "reciprocal" } else { "direct" }.to_owned(),
            n_triples: records.len(),
            mrr,
            hits,
            per_relation_mrr,
        })
    }

    /// Filtered MRR and Hits@{1,3,10} over head and tail ranks.
    pub fn link_prediction(&self, split: SplitKind) -> Result<MetricsReport> {
        let records = self.rank_records(split, Direction::Entity)?;
        self.report(split, Direction::Entity, &records)
    }

    /// MRR per relation id, each normalized by twice that relation's triple count.
    pub fn per_relation(&self, split: SplitKind) -> Result<BTreeMap<RelationId, f64>> {
        let records = self.rank_records(split, Direction::Entity)?;
        if records.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        Ok(per_relation(&records, self.settings.tie))
    }

    /// Filtered MRR and Hits@N over relation ranks.
    pub fn relation_prediction(&self, split: SplitKind) -> Result<MetricsReport> {
        let records = self.rank_records(split, Direction::Relation)?;
        self.report(split, Direction::Relation, &records)
    }
}

fn per_relation(records: &[RankRecord], tie: TiePolicy) -> BTreeMap<RelationId, f64> {
    let mut sums: BTreeMap<RelationId, (f64, usize)> = BTreeMap::new();
    for rec in records {
        let entry = sums.entry(rec.triple.r).or_insert((0.0, 0));
        for rank in [rec.tail, rec.head].into_iter().flatten() {
            entry.0 += 1.0 / rank.value(tie);
            entry.1 += 1;
        }
    }
    sums.into_iter().map(|(r, (sum, n))| (r, sum / n as f64)).collect()
}

pub fn evaluate(params: &ModelParams, dataset: &SplitDataset, split: SplitKind, settings: EvalSettings) -> Result<MetricsReport> {
    Evaluator::new(params, dataset, settings)?.link_prediction(split)
}

pub fn evaluate_per_relation(params: &ModelParams, dataset: &SplitDataset, split: SplitKind, settings: EvalSettings) -> Result<BTreeMap<RelationId, f64>> {
    Evaluator::new(params, dataset, settings)?.per_relation(split)
}

pub fn evaluate_relation_prediction(params: &ModelParams, dataset: &SplitDataset, split: SplitKind, settings: EvalSettings) -> Result<MetricsReport> {
    Evaluator::new(params, dataset, settings)?.relation_prediction(split)
}

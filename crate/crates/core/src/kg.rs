//! Core domain types: triples, label interning and the filter index.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// A `(head, relation, tail)` fact over dense integer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub h: EntityId,
    pub r: RelationId,
    pub t: EntityId,
}

impl Triple {
    pub const fn new(h: EntityId, r: RelationId, t: EntityId) -> Self {
        Triple { h, r, t }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.h, self.r, self.t)
    }
}

/// A triple of surface labels as read from a benchmark file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl LabeledTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        LabeledTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl fmt::Display for LabeledTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// The three benchmark splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Valid, SplitKind::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitKind::Train),
            "valid" | "validation" => Ok(SplitKind::Valid),
            "test" => Ok(SplitKind::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Bidirectional label/id tables for entities and relations.
///
/// The id of a label is its insertion position, so ids are dense and the
/// order is first-occurrence order of whatever was interned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an entity label, returning its id.
    pub fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(id) = self.entities.get_index_of(label) {
            return id as EntityId;
        }
        self.entities.insert_full(label.to_owned()).0 as EntityId
    }

    pub fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(id) = self.relations.get_index_of(label) {
            return id as RelationId;
        }
        self.relations.insert_full(label.to_owned()).0 as RelationId
    }

    pub fn intern(&mut self, triple: &LabeledTriple) -> Triple {
        let h = self.intern_entity(&triple.head);
        let r = self.intern_relation(&triple.relation);
        let t = self.intern_entity(&triple.tail);
        Triple { h, r, t }
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get_index_of(label).map(|i| i as EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get_index_of(label).map(|i| i as RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> Option<&str> {
        self.entities.get_index(id as usize).map(String::as_str)
    }

    pub fn relation_label(&self, id: RelationId) -> Option<&str> {
        self.relations.get_index(id as usize).map(String::as_str)
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    /// Resolves a triple back to its labels. Panics on ids outside the tables.
    pub fn labels(&self, triple: &Triple) -> LabeledTriple {
        LabeledTriple {
            head: self.entities[triple.h as usize].clone(),
            relation: self.relations[triple.r as usize].clone(),
            tail: self.entities[triple.t as usize].clone(),
        }
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        (triple.h as usize) < self.entities.len()
            && (triple.t as usize) < self.entities.len()
            && (triple.r as usize) < self.relations.len()
    }

    pub(crate) fn check(&self, triple: &Triple) -> Result<()> {
        for (kind, id, len) in [
            ("entity", triple.h as usize, self.n_entities()),
            ("relation", triple.r as usize, self.n_relations()),
            ("entity", triple.t as usize, self.n_entities()),
        ] {
            if id >= len {
                return Err(Error::IdOutOfRange { kind, id, len });
            }
        }
        Ok(())
    }

    /// SHA-256 over both label tables in id order.
    pub fn hash(&self) -> String {
        self.prefix_hash(self.n_entities(), self.n_relations())
    }

    /// Hash of the vocabulary restricted to its first `n_entities` entity and
    /// `n_relations` relation labels.
    pub fn prefix_hash(&self, n_entities: usize, n_relations: usize) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"entities\n");
        for label in self.entities.iter().take(n_entities) {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"relations\n");
        for label in self.relations.iter().take(n_relations) {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Builds a vocabulary in first-occurrence order (head, relation, tail per
/// triple, triples in input order). Duplicates are harmless.
pub fn build_vocabulary<'a>(triples: impl IntoIterator<Item = &'a LabeledTriple>) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for triple in triples {
        vocab.intern(triple);
    }
    vocab
}

/// Entity and relation ids that actually occur in `split`.
pub fn split_vocab(split: &[Triple]) -> (BTreeSet<EntityId>, BTreeSet<RelationId>) {
    let mut entities = BTreeSet::new();
    let mut relations = BTreeSet::new();
    for triple in split {
        entities.insert(triple.h);
        entities.insert(triple.t);
        relations.insert(triple.r);
    }
    (entities, relations)
}

/// Where a dataset was read from, kept so corrected splits can be written
/// back byte-exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSource {
    pub dir: std::path::PathBuf,
    pub files: [std::path::PathBuf; 3],
    pub sha256: [String; 3],
    /// 1-based line number of every triple, per split, parallel to the triple lists.
    pub line_numbers: [Vec<usize>; 3],
    pub separator: String,
}

/// Train / validation / test triples over one shared vocabulary.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub vocab: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub source: Option<DatasetSource>,
}

impl SplitDataset {
    /// Validates ids, within-split uniqueness and pairwise disjointness.
    pub fn new(vocab: Vocabulary, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        let dataset = SplitDataset {
            vocab,
            train,
            valid,
            test,
            source: None,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Interns labels over `train ‖ valid ‖ test`, then validates.
    pub fn from_labeled(train: &[LabeledTriple], valid: &[LabeledTriple], test: &[LabeledTriple]) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        let train: Vec<Triple> = train.iter().map(|t| vocab.intern(t)).collect();
        let valid: Vec<Triple> = valid.iter().map(|t| vocab.intern(t)).collect();
        let test: Vec<Triple> = test.iter().map(|t| vocab.intern(t)).collect();
        Self::new(vocab, train, valid, test)
    }

    pub fn split(&self, kind: SplitKind) -> &[Triple] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn line_number(&self, kind: SplitKind, index: usize) -> usize {
        match &self.source {
            Some(source) => source.line_numbers[kind as usize][index],
            None => index + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<Triple, SplitKind> = HashMap::with_capacity(self.all_triples().count());
        for kind in SplitKind::ALL {
            for (i, triple) in self.split(kind).iter().enumerate() {
                self.vocab.check(triple)?;
                if let Some(first) = seen.insert(*triple, kind) {
                    let labels = self.vocab.labels(triple).to_string();
                    return Err(if first == kind {
                        Error::DuplicateTriple {
                            split: kind.to_string(),
                            line: self.line_number(kind, i),
                            triple: labels,
                        }
                    } else {
                        Error::SplitOverlap {
                            first: first.to_string(),
                            second: kind.to_string(),
                            triple: labels,
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

/// Membership index over every known true triple, with the three partial
/// query indexes used for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    known: HashSet<Triple>,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    relations: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

impl FilterIndex {
    /// Index over `train ∪ valid ∪ test`.
    pub fn build(dataset: &SplitDataset) -> Self {
        Self::from_triples(dataset.all_triples().copied())
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut index = FilterIndex::default();
        for triple in triples {
            if !index.known.insert(triple) {
                continue;
            }
            index.tails.entry((triple.h, triple.r)).or_default().push(triple.t);
            index.heads.entry((triple.r, triple.t)).or_default().push(triple.h);
            index.relations.entry((triple.h, triple.t)).or_default().push(triple.r);
        }
        for list in index.tails.values_mut().chain(index.heads.values_mut()) {
            list.sort_unstable();
        }
        for list in index.relations.values_mut() {
            list.sort_unstable();
        }
        index
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.known.contains(triple)
    }

    /// Sorted tails `t` with `(h, r, t)` known.
    pub fn tails(&self, h: EntityId, r: RelationId) -> &[EntityId] {
        self.tails.get(&(h, r)).map_or(&[], Vec::as_slice)
    }

    /// Sorted heads `h` with `(h, r, t)` known.
    pub fn heads(&self, r: RelationId, t: EntityId) -> &[EntityId] {
        self.heads.get(&(r, t)).map_or(&[], Vec::as_slice)
    }

    /// Sorted relations `r` with `(h, r, t)` known.
    pub fn relations(&self, h: EntityId, t: EntityId) -> &[RelationId] {
        self.relations.get(&(h, t)).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

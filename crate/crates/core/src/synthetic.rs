//! Seeded synthetic benchmarks for tests and smoke runs.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kg::{LabeledTriple, SplitDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Extra valid/test triples whose head or tail is an entity never seen in train.
    pub oov_entity_triples: usize,
    /// Extra valid/test triples using a relation never seen in train.
    pub oov_relation_triples: usize,
    /// Store every triple together with its reverse.
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            entities: 20,
            relations: 3,
            train: 60,
            valid: 10,
            test: 10,
            oov_entity_triples: 0,
            oov_relation_triples: 0,
            symmetric: false,
            seed: 0,
        }
    }
}

fn entity(i: usize) -> String {
    format!("e{i}")
}

fn relation(i: usize) -> String {
    format!("r{i}")
}

/// Generates a dataset over entities `e0..` and relations `r0..`. The train
/// split always contains a chain touching every entity and relation, so the
/// only OOV items are the ones requested explicitly (`oov_e*`, `oov_r*`).
/// Split sizes are upper bounds when the triple space runs out.
pub fn generate(spec: &SyntheticSpec) -> Result<SplitDataset> {
    assert!(spec.entities >= 2 && spec.relations >= 1, "need at least two entities and one relation");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut used: HashSet<(usize, usize, usize)> = HashSet::new();
    let push = |split: &mut Vec<LabeledTriple>, used: &mut HashSet<(usize, usize, usize)>, h: usize, r: usize, t: usize| -> bool {
        if h == t || used.contains(&(h, r, t)) || (spec.symmetric && used.contains(&(t, r, h))) {
            return false;
        }
        used.insert((h, r, t));
        split.push(LabeledTriple::new(entity(h), relation(r), entity(t)));
        if spec.symmetric {
            used.insert((t, r, h));
            split.push(LabeledTriple::new(entity(t), relation(r), entity(h)));
        }
        true
    };

    let mut train = Vec::new();
    for i in 0..spec.entities.max(spec.relations + 1) - 1 {
        push(&mut train, &mut used, i % spec.entities, i % spec.relations, (i + 1) % spec.entities);
    }
    let space = spec.entities * (spec.entities - 1) * spec.relations;
    let fill = |split: &mut Vec<LabeledTriple>, target: usize, used: &mut HashSet<(usize, usize, usize)>, rng: &mut ChaCha8Rng| {
        let mut attempts = 0;
        while split.len() < target && used.len() < space && attempts < 100 * target + 1000 {
            attempts += 1;
            let h = rng.random_range(0..spec.entities);
            let r = rng.random_range(0..spec.relations);
            let t = rng.random_range(0..spec.entities);
            push(split, used, h, r, t);
        }
    };
    fill(&mut train, spec.train, &mut used, &mut rng);
    let mut valid = Vec::new();
    fill(&mut valid, spec.valid, &mut used, &mut rng);
    let mut test = Vec::new();
    fill(&mut test, spec.test, &mut used, &mut rng);

    for k in 0..spec.oov_entity_triples {
        let split = if k % 2 == 0 { &mut test } else { &mut valid };
        let known = entity(rng.random_range(0..spec.entities));
        let r = relation(rng.random_range(0..spec.relations));
        let fresh = format!("oov_e{k}");
        split.push(if rng.random_bool(0.5) {
            LabeledTriple::new(fresh, r, known)
        } else {
            LabeledTriple::new(known, r, fresh)
        });
    }
    for k in 0..spec.oov_relation_triples {
        let split = if k % 2 == 0 { &mut test } else { &mut valid };
        let h = rng.random_range(0..spec.entities);
        let t = (h + 1 + rng.random_range(0..spec.entities - 1)) % spec.entities;
        split.push(LabeledTriple::new(entity(h), format!("oov_r{k}"), entity(t)));
    }

    SplitDataset::from_labeled(&train, &valid, &test)
}

//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use kgbench::evaluation::{Slot, TiePolicy};
use kgbench::models::ModelParams;
use kgbench::{LabeledTriple, SplitDataset, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random split dataset over `e0..e{n_entities}` and `r0..r{n_relations}`.
/// Triples are distinct; every split is non-empty.
pub fn random_dataset(seed: u64, n_entities: usize, n_relations: usize, n_triples: usize) -> SplitDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::new();
    let space = n_entities * n_entities * n_relations;
    while all.len() < n_triples.min(space) {
        let t = (rng.random_range(0..n_entities), rng.random_range(0..n_relations), rng.random_range(0..n_entities));
        if seen.insert(t) {
            all.push(LabeledTriple::new(format!("e{}", t.0), format!("r{}", t.1), format!("e{}", t.2)));
        }
    }
    let n = all.len();
    let test_n = (n / 5).max(1);
    let valid_n = (n / 5).max(1);
    let test = all.split_off(n - test_n);
    let valid = all.split_off(all.len() - valid_n);
    SplitDataset::from_labeled(&all, &valid, &test).expect("distinct triples")
}

/// Ranks by sorting: the target's position among all non-filtered candidates
/// sorted by descending score, taking the first (optimistic) or last
/// (pessimistic) position of its score block. Returns (optimistic, pessimistic).
pub fn sort_rank(params: &ModelParams, dataset: &SplitDataset, target: &Triple, slot: Slot) -> (usize, usize) {
    let known: Vec<Triple> = dataset.all_triples().copied().collect();
    let n = match slot {
        Slot::Relation => dataset.vocab.n_relations(),
        _ => dataset.vocab.n_entities(),
    };
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for x in 0..n as u32 {
        let candidate = match slot {
            Slot::Tail => Triple::new(target.h, target.r, x),
            Slot::Head => Triple::new(x, target.r, target.t),
            Slot::Relation => Triple::new(target.h, x, target.t),
        };
        let is_target = candidate == *target;
        if !is_target && known.contains(&candidate) {
            continue;
        }
        scored.push((params.score(candidate.h, candidate.r, candidate.t).unwrap(), is_target));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let s = scored.iter().find(|(_, t)| *t).unwrap().0;
    let first = scored.iter().position(|(v, _)| *v == s).unwrap();
    let last = scored.iter().rposition(|(v, _)| *v == s).unwrap();
    (first + 1, last + 1)
}

/// MRR rank and Hits rank under `tie`, from the sort oracle.
pub fn oracle_values(opt: usize, pess: usize, tie: TiePolicy) -> (f64, usize) {
    match tie {
        TiePolicy::Optimistic => (opt as f64, opt),
        TiePolicy::Pessimistic => (pess as f64, pess),
        TiePolicy::Mean => ((opt + pess) as f64 / 2.0, pess),
    }
}

/// Largest relative error between the analytic gradient and a central
/// finite difference over every coordinate of the rows touched by `triple`.
pub fn gradient_error(params: &ModelParams, triple: &Triple, step: f64) -> f64 {
    let Triple { h, r, t } = *triple;
    let grad = params.grad(h, r, t, 1.0).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for (e, g) in &grad.entities {
        for (j, &a) in g.iter().enumerate() {
            let mut p = params.clone();
            p.entity_mut(*e)[j] += step;
            let up = p.score(h, r, t).unwrap();
            p.entity_mut(*e)[j] -= 2.0 * step;
            let down = p.score(h, r, t).unwrap();
            worst = worst.max(rel(a, (up - down) / (2.0 * step)));
        }
    }
    for (rid, g) in &grad.relations {
        for (j, &a) in g.iter().enumerate() {
            let mut p = params.clone();
            p.relation_mut(*rid)[j] += step;
            let up = p.score(h, r, t).unwrap();
            p.relation_mut(*rid)[j] -= 2.0 * step;
            let down = p.score(h, r, t).unwrap();
            worst = worst.max(rel(a, (up - down) / (2.0 * step)));
        }
    }
    worst
}

/// Exact two-sided Wilcoxon p-value by listing every sign assignment.
pub fn enumerate_wilcoxon(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let w = w_plus.min(total - w_plus);
    let mut at_most = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            at_most += 1;
        }
    }
    (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0)
}

/// Writes the splits of `ds` as tab-separated files under `dir`.
pub fn write_dataset(dir: &std::path::Path, ds: &SplitDataset) {
    std::fs::create_dir_all(dir).unwrap();
    for kind in kgbench::SplitKind::ALL {
        let mut text = String::new();
        for t in ds.split(kind) {
            let l = ds.vocab.labels(t);
            text.push_str(&format!("{}\t{}\t{}\n", l.head, l.relation, l.tail));
        }
        std::fs::write(dir.join(format!("{kind}.txt")), text).unwrap();
    }
}

/// Evaluates a seeded untrained model on `raw` with the exclude policy and on
/// its corrected copy (written under `out`) with the include policy, returning
/// both JSON reports with the policy field blanked. Entity and relation
/// directions are concatenated.
pub fn policy_pair(
    raw: &SplitDataset,
    out: &std::path::Path,
    model: kgbench::models::ModelKind,
    dim: usize,
    seed: u64,
    tie: TiePolicy,
    reciprocal: bool,
) -> (String, String) {
    use kgbench::audit::detect_oov;
    use kgbench::evaluation::{Direction, EvalSettings, Evaluator, OovPolicy};
    use kgbench::ingest::{load_dataset, write_corrected, DatasetLayout, LoadOptions};
    use kgbench::models::checkpoint::Checkpoint;
    use kgbench::models::init_params;

    write_corrected(raw, &detect_oov(raw), out, true).unwrap();
    let corrected = load_dataset(&DatasetLayout::new(out), LoadOptions::default()).unwrap();

    let n_rel = raw.vocab.n_relations() * if reciprocal { 2 } else { 1 };
    let params = init_params(model, raw.vocab.n_entities(), n_rel, dim, seed).unwrap();
    let checkpoint = Checkpoint::new(params, &raw.vocab, &raw.train, reciprocal);
    let raw_params = checkpoint.params_for(&raw.vocab).unwrap();
    let corrected_params = checkpoint.params_for(&corrected.vocab).unwrap();

    let run = |params: &ModelParams, ds: &SplitDataset, policy: OovPolicy| -> String {
        let settings = EvalSettings { policy, tie, reciprocal, threads: 1 };
        let evaluator = Evaluator::new(params, ds, settings).unwrap();
        let mut text = String::new();
        for split in [kgbench::SplitKind::Test, kgbench::SplitKind::Valid] {
            for direction in [Direction::Entity, Direction::Relation] {
                let report = match direction {
                    Direction::Entity => evaluator.link_prediction(split),
                    Direction::Relation => evaluator.relation_prediction(split),
                };
                match report {
                    Ok(mut r) => {
                        r.policy = OovPolicy::Include;
                        text.push_str(&serde_json::to_string(&r).unwrap());
                    }
                    Err(e) => text.push_str(&format!("error: {e}")),
                }
                text.push('\n');
            }
        }
        text
    };
    (run(&raw_params, raw, OovPolicy::Exclude), run(&corrected_params, &corrected, OovPolicy::Include))
}

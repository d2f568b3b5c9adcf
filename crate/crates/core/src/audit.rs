//! Dataset overview statistics and out-of-vocabulary detection.
//!
//! OOV status is always relative to the training split: an entity (or
//! relation) is OOV in a split if it occurs there but nowhere in `train`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{split_vocab, EntityId, RelationId, SplitDataset, SplitKind, Triple};

pub mod reference;

/// Position within a triple that holds an OOV item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovField {
    Head,
    Relation,
    Tail,
}

/// A split triple that contains at least one OOV entity or relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectedTriple {
    /// Position within the split's triple list.
    pub index: usize,
    /// 1-based line in the source file.
    pub line_no: usize,
    pub triple: Triple,
    pub oov_fields: Vec<OovField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOov {
    pub split: SplitKind,
    pub split_size: usize,
    pub oov_entities: BTreeSet<EntityId>,
    pub oov_relations: BTreeSet<RelationId>,
    /// In original file order.
    pub affected: Vec<AffectedTriple>,
}

impl SplitOov {
    /// Percentage of the split's triples that are affected.
    pub fn percentage(&self) -> f64 {
        if self.split_size == 0 {
            0.0
        } else {
            100.0 * self.affected.len() as f64 / self.split_size as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.oov_entities.is_empty() && self.oov_relations.is_empty()
    }
}

/// OOV findings for the validation and test splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovReport {
    pub valid: SplitOov,
    pub test: SplitOov,
}

impl OovReport {
    pub fn split(&self, kind: SplitKind) -> Option<&SplitOov> {
        match kind {
            SplitKind::Train => None,
            SplitKind::Valid => Some(&self.valid),
            SplitKind::Test => Some(&self.test),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty() && self.test.is_empty()
    }

    pub fn affected_count(&self) -> usize {
        self.valid.affected.len() + self.test.affected.len()
    }
}

fn split_oov(dataset: &SplitDataset, kind: SplitKind, train_entities: &BTreeSet<EntityId>, train_relations: &BTreeSet<RelationId>) -> SplitOov {
    let triples = dataset.split(kind);
    let (entities, relations) = split_vocab(triples);
    let oov_entities: BTreeSet<EntityId> = entities.difference(train_entities).copied().collect();
    let oov_relations: BTreeSet<RelationId> = relations.difference(train_relations).copied().collect();

    let affected = triples
        .iter()
        .enumerate()
        .filter_map(|(index, triple)| {
            let mut fields = Vec::new();
            if oov_entities.contains(&triple.h) {
                fields.push(OovField::Head);
            }
            if oov_relations.contains(&triple.r) {
                fields.push(OovField::Relation);
            }
            if oov_entities.contains(&triple.t) {
                fields.push(OovField::Tail);
            }
            (!fields.is_empty()).then(|| AffectedTriple {
                index,
                line_no: dataset.line_number(kind, index),
                triple: *triple,
                oov_fields: fields,
            })
        })
        .collect();

    SplitOov {
        split: kind,
        split_size: triples.len(),
        oov_entities,
        oov_relations,
        affected,
    }
}

/// Computes `E^split \ E^train` and `R^split \ R^train` for the validation
/// and test splits, and lists every triple touching one of them.
pub fn detect_oov(dataset: &SplitDataset) -> OovReport {
    let (train_entities, train_relations) = split_vocab(&dataset.train);
    OovReport {
        valid: split_oov(dataset, SplitKind::Valid, &train_entities, &train_relations),
        test: split_oov(dataset, SplitKind::Test, &train_entities, &train_relations),
    }
}

/// Copy of `dataset` with every OOV-affected validation/test triple removed.
/// The vocabulary and source metadata are kept as they are.
pub fn remove_affected(dataset: &SplitDataset, report: &OovReport) -> SplitDataset {
    let keep = |kind: SplitKind, split: &SplitOov| -> (Vec<Triple>, Vec<usize>) {
        let drop: HashSet<usize> = split.affected.iter().map(|a| a.index).collect();
        dataset
            .split(kind)
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(i, t)| (*t, dataset.line_number(kind, i)))
            .unzip()
    };
    let (valid, valid_lines) = keep(SplitKind::Valid, &report.valid);
    let (test, test_lines) = keep(SplitKind::Test, &report.test);
    let source = dataset.source.clone().map(|mut s| {
        s.line_numbers[1] = valid_lines;
        s.line_numbers[2] = test_lines;
        s
    });
    SplitDataset {
        vocab: dataset.vocab.clone(),
        train: dataset.train.clone(),
        valid,
        test,
        source,
    }
}

/// Mean and population standard deviation over a set of node degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    /// Number of nodes the statistic was taken over.
    pub nodes: usize,
}

impl MeanSd {
    fn of_counts(counts: &[u64]) -> MeanSd {
        let nonzero: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
        let n = nonzero.len() as f64;
        let mean = nonzero.iter().sum::<f64>() / n;
        let var = nonzero.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        MeanSd {
            mean,
            sd: var.sqrt(),
            nodes: nonzero.len(),
        }
    }
}

/// In- and out-degree statistics of one split, taken over entities whose
/// degree of the respective kind is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub indegree: MeanSd,
    pub outdegree: MeanSd,
}

pub fn degree_stats(split: &[Triple]) -> Result<DegreeStats> {
    if split.is_empty() {
        return Err(Error::EmptySplit("degree statistics need at least one triple".into()));
    }
    let n = split.iter().map(|t| t.h.max(t.t)).max().expect("non-empty") as usize + 1;
    let mut indegree = vec![0u64; n];
    let mut outdegree = vec![0u64; n];
    for triple in split {
        indegree[triple.t as usize] += 1;
        outdegree[triple.h as usize] += 1;
    }
    Ok(DegreeStats {
        indegree: MeanSd::of_counts(&indegree),
        outdegree: MeanSd::of_counts(&outdegree),
    })
}

/// One column of the dataset overview table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOverview {
    pub split: SplitKind,
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub degrees: Option<DegreeStats>,
}

/// OOV rows of the overview, with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OovSummary {
    pub split: SplitKind,
    pub oov_entities: usize,
    pub oov_relations: usize,
    pub affected_triples: usize,
    pub split_size: usize,
    pub percentage: f64,
    pub oov_entity_labels: Vec<String>,
    pub oov_relation_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainmentConditions {
    /// `E^Val ⊆ E^Train` and `E^Test ⊆ E^Train`.
    pub entities_contained: bool,
    /// `R^Val ⊆ R^Train` and `R^Test ⊆ R^Train`.
    pub relations_contained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverviewReport {
    pub name: String,
    pub vocabulary_entities: usize,
    pub vocabulary_relations: usize,
    pub splits: Vec<SplitOverview>,
    pub oov: Vec<OovSummary>,
    pub conditions: ContainmentConditions,
}

impl OverviewReport {
    pub fn split(&self, kind: SplitKind) -> &SplitOverview {
        self.splits.iter().find(|s| s.split == kind).expect("all splits present")
    }

    pub fn oov(&self, kind: SplitKind) -> Option<&OovSummary> {
        self.oov.iter().find(|s| s.split == kind)
    }

    pub fn has_oov(&self) -> bool {
        !(self.conditions.entities_contained && self.conditions.relations_contained)
    }

    /// Two markdown tables: split overview and OOV counts.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let splits = [SplitKind::Train, SplitKind::Valid, SplitKind::Test];
        let _ = writeln!(out, "### {} overview\n", self.name);
        let _ = writeln!(out, "| | {} |", splits.map(|s| s.as_str()).join(" | "));
        let _ = writeln!(out, "|---|---:|---:|---:|");
        let row = |label: &str, f: &dyn Fn(&SplitOverview) -> String| -> String {
            let cells: Vec<String> = splits.iter().map(|&k| f(self.split(k))).collect();
            format!("| {label} | {} |\n", cells.join(" | "))
        };
        let fmt_deg = |m: Option<MeanSd>| m.map_or("-".to_owned(), |m| format!("{:.2}±{:.2}", m.mean, m.sd));
        out.push_str(&row("\\|G\\|", &|s| s.triples.to_string()));
        out.push_str(&row("\\|E\\|", &|s| s.entities.to_string()));
        out.push_str(&row("\\|R\\|", &|s| s.relations.to_string()));
        out.push_str(&row("Indegree (M±SD)", &|s| fmt_deg(s.degrees.map(|d| d.indegree))));
        out.push_str(&row("Outdegree (M±SD)", &|s| fmt_deg(s.degrees.map(|d| d.outdegree))));

        let _ = writeln!(out, "\n### {} out-of-vocabulary\n", self.name);
        let _ = writeln!(out, "| | test | valid |");
        let _ = writeln!(out, "|---|---:|---:|");
        let oov_pair = |f: &dyn Fn(&OovSummary) -> String| {
            let test = self.oov(SplitKind::Test).map(f).unwrap_or_default();
            let valid = self.oov(SplitKind::Valid).map(f).unwrap_or_default();
            format!("{test} | {valid}")
        };
        let _ = writeln!(out, "| OOV entities | {} |", oov_pair(&|s| s.oov_entities.to_string()));
        let _ = writeln!(out, "| OOV relations | {} |", oov_pair(&|s| s.oov_relations.to_string()));
        let _ = writeln!(
            out,
            "| Affected triples | {} |",
            oov_pair(&|s| format!("{} ({:.2}%)", s.affected_triples, s.percentage))
        );
        let _ = writeln!(
            out,
            "\nEntity containment: {}. Relation containment: {}.",
            if self.conditions.entities_contained { "satisfied" } else { "violated" },
            if self.conditions.relations_contained { "satisfied" } else { "violated" },
        );
        out
    }
}

/// Overview of a dataset: per-split sizes, degree statistics
/// and the OOV report.
pub fn overview_report(dataset: &SplitDataset, name: &str) -> OverviewReport {
    let splits = SplitKind::ALL
        .iter()
        .map(|&kind| {
            let triples = dataset.split(kind);
            let (entities, relations) = split_vocab(triples);
            SplitOverview {
                split: kind,
                triples: triples.len(),
                entities: entities.len(),
                relations: relations.len(),
                degrees: degree_stats(triples).ok(),
            }
        })
        .collect();
    let report = detect_oov(dataset);
    let summarize = |s: &SplitOov| OovSummary {
        split: s.split,
        oov_entities: s.oov_entities.len(),
        oov_relations: s.oov_relations.len(),
        affected_triples: s.affected.len(),
        split_size: s.split_size,
        percentage: s.percentage(),
        oov_entity_labels: s
            .oov_entities
            .iter()
            .map(|&e| dataset.vocab.entity_label(e).expect("valid id").to_owned())
            .collect(),
        oov_relation_labels: s
            .oov_relations
            .iter()
            .map(|&r| dataset.vocab.relation_label(r).expect("valid id").to_owned())
            .collect(),
    };
    OverviewReport {
        name: name.to_owned(),
        vocabulary_entities: dataset.vocab.n_entities(),
        vocabulary_relations: dataset.vocab.n_relations(),
        splits,
        oov: vec![summarize(&report.test), summarize(&report.valid)],
        conditions: ContainmentConditions {
            entities_contained: report.valid.oov_entities.is_empty() && report.test.oov_entities.is_empty(),
            relations_contained: report.valid.oov_relations.is_empty() && report.test.oov_relations.is_empty(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::LabeledTriple;

    fn lt(h: &str, r: &str, t: &str) -> LabeledTriple {
        LabeledTriple::new(h, r, t)
    }

    #[test]
    fn degree_stats_small_case() {
        let stats = degree_stats(&[Triple::new(0, 0, 1), Triple::new(2, 0, 1)]).unwrap();
        assert_eq!(stats.indegree.mean, 2.0);
        assert_eq!(stats.indegree.sd, 0.0);
        assert_eq!(stats.indegree.nodes, 1);
        assert_eq!(stats.outdegree.mean, 1.0);
        assert_eq!(stats.outdegree.sd, 0.0);
        assert_eq!(stats.outdegree.nodes, 2);
    }

    #[test]
    fn degree_stats_rejects_empty_split() {
        assert!(matches!(degree_stats(&[]), Err(Error::EmptySplit(_))));
    }

    #[test]
    fn shared_vocabulary_gives_empty_report() {
        let ds = SplitDataset::from_labeled(
            &[lt("a", "p", "b"), lt("b", "q", "c")],
            &[lt("a", "q", "c")],
            &[lt("c", "p", "a")],
        )
        .unwrap();
        let report = detect_oov(&ds);
        assert!(report.is_empty());
        assert!(report.valid.affected.is_empty() && report.test.affected.is_empty());
        let overview = overview_report(&ds, "toy");
        assert!(overview.conditions.entities_contained && overview.conditions.relations_contained);
        assert!(!overview.has_oov());
    }

    #[test]
    fn one_triple_counts_once_with_both_ends_oov() {
        let ds = SplitDataset::from_labeled(
            &[lt("a", "p", "b")],
            &[lt("x", "p", "y"), lt("a", "p", "x")],
            &[lt("b", "z", "a")],
        )
        .unwrap();
        let report = detect_oov(&ds);
        assert_eq!(report.valid.oov_entities.len(), 2);
        assert_eq!(report.valid.affected.len(), 2);
        assert_eq!(report.valid.affected[0].oov_fields, [OovField::Head, OovField::Tail]);
        assert_eq!(report.valid.affected[1].oov_fields, [OovField::Tail]);
        assert_eq!(report.test.oov_relations.len(), 1);
        assert_eq!(report.test.affected[0].oov_fields, [OovField::Relation]);
        assert!((report.valid.percentage() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn oov_is_relative_to_train_only() {
        // "v" appears in valid and test but never in train: it is OOV in both.
        let ds = SplitDataset::from_labeled(&[lt("a", "p", "b")], &[lt("a", "p", "v")], &[lt("v", "p", "b")]).unwrap();
        let report = detect_oov(&ds);
        assert_eq!(report.valid.oov_entities, report.test.oov_entities);
        assert_eq!(report.test.affected.len(), 1);
    }

    #[test]
    fn removing_affected_reaches_fixed_point() {
        let ds = SplitDataset::from_labeled(
            &[lt("a", "p", "b"), lt("b", "p", "c")],
            &[lt("x", "p", "a"), lt("a", "p", "c")],
            &[lt("c", "p", "a"), lt("c", "q", "a")],
        )
        .unwrap();
        let report = detect_oov(&ds);
        let corrected = remove_affected(&ds, &report);
        assert_eq!(corrected.valid.len(), 1);
        assert_eq!(corrected.test.len(), 1);
        assert!(detect_oov(&corrected).is_empty());
    }

    #[test]
    fn markdown_has_both_tables() {
        let ds = SplitDataset::from_labeled(&[lt("a", "p", "b")], &[lt("a", "p", "x")], &[lt("b", "p", "a")]).unwrap();
        let md = overview_report(&ds, "toy").to_markdown();
        assert!(md.contains("| OOV entities | 0 | 1 |"), "{md}");
        assert!(md.contains("| Affected triples | 0 (0.00%) | 1 (100.00%) |"), "{md}");
        assert!(md.contains("Entity containment: violated"));
    }
}

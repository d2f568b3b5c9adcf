//! Published overview and OOV figures for the three standard benchmarks,
//! used as golden targets in the audit self-test.

use serde::Serialize;

use super::{MeanSd, OverviewReport};
use crate::kg::SplitKind;

/// Tolerance on degree means and standard deviations.
pub const DEGREE_TOLERANCE: f64 = 0.02;
/// Half a unit in the second decimal of a percentage.
pub const PERCENT_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSplit {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub indegree: (f64, f64),
    pub outdegree: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOov {
    pub oov_entities: usize,
    pub affected: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub name: &'static str,
    pub train: ReferenceSplit,
    pub valid: ReferenceSplit,
    pub test: ReferenceSplit,
    pub oov_valid: ReferenceOov,
    pub oov_test: ReferenceOov,
}

impl Reference {
    pub fn split(&self, kind: SplitKind) -> &ReferenceSplit {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    pub fn oov(&self, kind: SplitKind) -> Option<&ReferenceOov> {
        match kind {
            SplitKind::Train => None,
            SplitKind::Valid => Some(&self.oov_valid),
            SplitKind::Test => Some(&self.oov_test),
        }
    }

    /// Looks a reference up by a dataset name or directory name, ignoring
    /// case, dashes and underscores.
    pub fn find(name: &str) -> Option<&'static Reference> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        ALL.iter().copied().find(|r| {
            let candidate: String = r.name.chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_lowercase()).collect();
            candidate == key
        })
    }
}

// 210 affected validation triples at 6.92% put the WN18RR validation split at 3,034.
pub const WN18RR: Reference = Reference {
    name: "WN18RR",
    train: ReferenceSplit { triples: 86_835, entities: 40_559, relations: 11, indegree: (2.72, 7.74), outdegree: (2.19, 3.56) },
    valid: ReferenceSplit { triples: 3_034, entities: 5_173, relations: 11, indegree: (1.18, 0.87), outdegree: (1.06, 0.41) },
    test: ReferenceSplit { triples: 3_134, entities: 5_323, relations: 11, indegree: (1.20, 0.95), outdegree: (1.06, 0.44) },
    oov_valid: ReferenceOov { oov_entities: 198, affected: 210, percentage: 6.92 },
    oov_test: ReferenceOov { oov_entities: 209, affected: 210, percentage: 6.70 },
};

pub const FB15K_237: Reference = Reference {
    name: "FB15K-237",
    train: ReferenceSplit { triples: 272_115, entities: 14_505, relations: 237, indegree: (20.34, 98.54), outdegree: (19.746, 30.10) },
    valid: ReferenceSplit { triples: 17_535, entities: 9_809, relations: 223, indegree: (3.02, 11.76), outdegree: (2.29, 2.75) },
    test: ReferenceSplit { triples: 20_466, entities: 10_348, relations: 224, indegree: (3.21, 12.91), outdegree: (2.50, 3.20) },
    oov_valid: ReferenceOov { oov_entities: 8, affected: 9, percentage: 0.05 },
    oov_test: ReferenceOov { oov_entities: 29, affected: 28, percentage: 0.14 },
};

pub const YAGO3_10: Reference = Reference {
    name: "YAGO3-10",
    train: ReferenceSplit { triples: 1_079_040, entities: 123_143, relations: 37, indegree: (22.51, 293.96), outdegree: (9.56, 8.67) },
    valid: ReferenceSplit { triples: 5_000, entities: 7_948, relations: 33, indegree: (1.59, 5.25), outdegree: (1.03, 0.19) },
    test: ReferenceSplit { triples: 5_000, entities: 7_937, relations: 34, indegree: (1.57, 5.06), outdegree: (1.04, 0.21) },
    oov_valid: ReferenceOov { oov_entities: 22, affected: 22, percentage: 0.44 },
    oov_test: ReferenceOov { oov_entities: 18, affected: 18, percentage: 0.36 },
};

pub const ALL: [&Reference; 3] = [&WN18RR, &FB15K_237, &YAGO3_10];

/// One compared row of the self-test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub row: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReferenceCheck {
    fn new(row: String, expected: f64, observed: f64, tolerance: f64) -> Self {
        // Small slack so that e.g. 2.19 vs 2.21 passes at a 0.02 tolerance.
        let pass = (expected - observed).abs() <= tolerance + 1e-9;
        ReferenceCheck { row, expected, observed, tolerance, pass }
    }
}

/// Compares an overview against a reference. Counts must match exactly;
/// degree statistics within [`DEGREE_TOLERANCE`].
pub fn check(report: &OverviewReport, reference: &Reference) -> Vec<ReferenceCheck> {
    let mut checks = Vec::new();
    for kind in SplitKind::ALL {
        let observed = report.split(kind);
        let expected = reference.split(kind);
        let count = |what: &str, e: usize, o: usize| ReferenceCheck::new(format!("{kind} {what}"), e as f64, o as f64, 0.0);
        checks.push(count("triples", expected.triples, observed.triples));
        checks.push(count("entities", expected.entities, observed.entities));
        checks.push(count("relations", expected.relations, observed.relations));
        let nan = MeanSd { mean: f64::NAN, sd: f64::NAN, nodes: 0 };
        let degrees = [
            ("indegree", expected.indegree, observed.degrees.map_or(nan, |d| d.indegree)),
            ("outdegree", expected.outdegree, observed.degrees.map_or(nan, |d| d.outdegree)),
        ];
        for (what, (mean, sd), got) in degrees {
            checks.push(ReferenceCheck::new(format!("{kind} {what} mean"), mean, got.mean, DEGREE_TOLERANCE));
            checks.push(ReferenceCheck::new(format!("{kind} {what} sd"), sd, got.sd, DEGREE_TOLERANCE));
        }
        if let (Some(e), Some(o)) = (reference.oov(kind), report.oov(kind)) {
            checks.push(ReferenceCheck::new(format!("{kind} OOV entities"), e.oov_entities as f64, o.oov_entities as f64, 0.0));
            checks.push(ReferenceCheck::new(format!("{kind} OOV triples"), e.affected as f64, o.affected_triples as f64, 0.0));
            checks.push(ReferenceCheck::new(format!("{kind} OOV percentage"), e.percentage, o.percentage, PERCENT_TOLERANCE));
        }
    }
    checks
}

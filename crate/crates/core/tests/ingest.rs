mod common;

use std::fs;
use std::path::Path;

use common::write_dataset;

use kgbench::audit::detect_oov;
use kgbench::ingest::{load_dataset, parse_triples, write_corrected, DatasetLayout, LoadOptions, Manifest, Separator, MANIFEST_FILE};
use kgbench::synthetic::{generate, SyntheticSpec};
use kgbench::{Error, SplitDataset, SplitKind};
use proptest::prelude::*;

fn write_splits(dir: &Path, train: &str, valid: &str, test: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("train.txt"), train).unwrap();
    fs::write(dir.join("valid.txt"), valid).unwrap();
    fs::write(dir.join("test.txt"), test).unwrap();
}

fn load(dir: &Path) -> kgbench::Result<SplitDataset> {
    load_dataset(&DatasetLayout::new(dir), LoadOptions::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn files_round_trip(seed in 0u64..10_000, n in 6usize..40) {
        let tmp = tempfile::tempdir().unwrap();
        let ds = common::random_dataset(seed, 9, 3, n);
        write_dataset(tmp.path(), &ds);
        let back = load(tmp.path()).unwrap();
        prop_assert_eq!(back.vocab.hash(), ds.vocab.hash());
        prop_assert_eq!(&back.train, &ds.train);
        prop_assert_eq!(&back.valid, &ds.valid);
        prop_assert_eq!(&back.test, &ds.test);
    }

    #[test]
    fn correction_removes_exactly_the_affected_lines(seed in 0u64..10_000, oov_e in 0usize..6, oov_r in 0usize..3) {
        let tmp = tempfile::tempdir().unwrap();
        let raw_dir = tmp.path().join("raw");
        let out_dir = tmp.path().join("out");
        let ds = generate(&SyntheticSpec { oov_entity_triples: oov_e, oov_relation_triples: oov_r, seed, ..Default::default() }).unwrap();
        write_dataset(&raw_dir, &ds);
        let raw = load(&raw_dir).unwrap();
        let report = detect_oov(&raw);
        let summary = write_corrected(&raw, &report, &out_dir, false).unwrap();

        prop_assert_eq!(fs::read(raw_dir.join("train.txt")).unwrap(), fs::read(out_dir.join("train.txt")).unwrap());
        let corrected = load(&out_dir).unwrap();
        prop_assert!(detect_oov(&corrected).is_empty());
        for kind in SplitKind::ALL {
            let counts = &summary.manifest.counts[&kind];
            prop_assert_eq!(counts.corrected, corrected.split(kind).len());
            prop_assert_eq!(counts.original - counts.removed, counts.corrected);
            let affected = report.split(kind).map_or(0, |s| s.affected.len());
            prop_assert_eq!(counts.removed, affected);
        }
        prop_assert_eq!(summary.manifest.removed.len(), oov_e + oov_r);

        // the corrected vocabulary is the training prefix of the raw one
        let prefix = kgbench::models::checkpoint::TrainPrefix {
            entities: corrected.vocab.n_entities(),
            relations: corrected.vocab.n_relations(),
            sha256: raw.vocab.prefix_hash(corrected.vocab.n_entities(), corrected.vocab.n_relations()),
        };
        prop_assert_eq!(prefix.sha256, corrected.vocab.hash());
    }
}

#[test]
fn correcting_a_clean_dataset_is_the_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    let out = tmp.path().join("out");
    write_splits(&raw, "a\tp\tb\nb\tq\tc\n", "a\tq\tc\n", "c\tp\ta\n");
    let ds = load(&raw).unwrap();
    let summary = write_corrected(&ds, &detect_oov(&ds), &out, false).unwrap();
    assert!(summary.manifest.removed.is_empty());
    for kind in SplitKind::ALL {
        let name = format!("{kind}.txt");
        assert_eq!(fs::read(raw.join(&name)).unwrap(), fs::read(out.join(&name)).unwrap());
    }
}

#[test]
fn manifest_records_hashes_and_removed_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    let out = tmp.path().join("out");
    write_splits(&raw, "a\tp\tb\nb\tp\tc\n", "a\tp\tc\nx\tp\ta\n", "c\tz\ta\r\nb\tp\ta\r\n");
    let ds = load(&raw).unwrap();
    let summary = write_corrected(&ds, &detect_oov(&ds), &out, false).unwrap();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest, summary.manifest);
    assert_eq!(manifest.input_sha256.len(), 3);
    let removed: Vec<(SplitKind, usize)> = manifest.removed.iter().map(|r| (r.split, r.line_no)).collect();
    assert_eq!(removed, [(SplitKind::Valid, 2), (SplitKind::Test, 1)]);
    // surviving CRLF lines are copied as they are
    assert_eq!(fs::read_to_string(out.join("test.txt")).unwrap(), "b\tp\ta\r\n");
    assert_eq!(fs::read_to_string(out.join("valid.txt")).unwrap(), "a\tp\tc\n");
}

#[test]
fn refuses_unsafe_output_locations() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    write_splits(&raw, "a\tp\tb\n", "a\tp\tb2\n", "b\tp\ta\n");
    let ds = load(&raw).unwrap();
    let report = detect_oov(&ds);
    assert!(matches!(write_corrected(&ds, &report, &raw, true), Err(Error::OutputIsInput(_))));

    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    assert!(matches!(write_corrected(&ds, &report, &out, false), Err(Error::OutputNotEmpty(_))));
    write_corrected(&ds, &report, &out, true).unwrap();
    assert_eq!(fs::read_to_string(out.join("valid.txt")).unwrap(), "");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = parse_triples("a\tp\tb\na\tp\n".as_bytes(), Separator::Tab, "valid.txt").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    let err = parse_triples(&b"a\tp\tb\n\xff\tp\tb\n"[..], Separator::Tab, "t").unwrap_err();
    assert!(matches!(err, Error::Encoding { line: 2, .. }), "{err}");
    let ok = parse_triples("a  p\tb\n\n".as_bytes(), Separator::Whitespace, "t").unwrap();
    assert_eq!(ok.len(), 1);
}

#[test]
fn missing_and_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load(tmp.path()), Err(Error::MissingFile(_))));
    write_splits(tmp.path(), "a\tp\tb\n", "", "a\tp\tc\n");
    assert!(matches!(load(tmp.path()), Err(Error::EmptySplit(_))));
}

#[test]
fn duplicates_fail_unless_deduplicated() {
    let tmp = tempfile::tempdir().unwrap();
    write_splits(tmp.path(), "a\tp\tb\na\tp\tb\n", "b\tp\ta\n", "a\tp\tc\n");
    assert!(matches!(load(tmp.path()), Err(Error::DuplicateTriple { line: 2, .. })));
    let ds = load_dataset(&DatasetLayout::new(tmp.path()), LoadOptions { dedup: true }).unwrap();
    assert_eq!(ds.train.len(), 1);
}

#[test]
fn cross_split_overlap_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_splits(tmp.path(), "a\tp\tb\n", "a\tp\tb\n", "a\tp\tc\n");
    assert!(matches!(load(tmp.path()), Err(Error::SplitOverlap { .. })));
}

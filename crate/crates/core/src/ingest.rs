//! Benchmark file parsing, dataset loading and the corrected-split writer.
//!
//! Files are UTF-8 with one `head<TAB>relation<TAB>tail` triple per line.
//! Labels are kept byte-for-byte; nothing is case folded or trimmed beyond
//! an optional trailing carriage return.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{OovField, OovReport};
use crate::error::{Error, Result};
use crate::kg::{DatasetSource, LabeledTriple, SplitDataset, SplitKind, Triple, Vocabulary};

/// Field separator of a benchmark file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separator {
    #[default]
    Tab,
    /// Any run of Unicode whitespace.
    Whitespace,
}

impl Separator {
    pub fn as_str(self) -> &'static str {
        match self {
            Separator::Tab => "tab",
            Separator::Whitespace => "whitespace",
        }
    }
}

impl std::str::FromStr for Separator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tab" => Ok(Separator::Tab),
            "ws" | "whitespace" => Ok(Separator::Whitespace),
            other => Err(format!("unknown separator {other:?} (expected tab or ws)")),
        }
    }
}

/// Location and format of a benchmark on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub dir: PathBuf,
    pub train: String,
    pub valid: String,
    pub test: String,
    pub separator: Separator,
}

impl DatasetLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DatasetLayout {
            dir: dir.into(),
            train: "train.txt".into(),
            valid: "valid.txt".into(),
            test: "test.txt".into(),
            separator: Separator::Tab,
        }
    }

    pub fn with_separator(mut self, separator: Separator) -> Self {
        self.separator = separator;
        self
    }

    pub fn file_name(&self, kind: SplitKind) -> &str {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    pub fn path(&self, kind: SplitKind) -> PathBuf {
        self.dir.join(self.file_name(kind))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop repeated triples within a split (with a warning) instead of failing.
    pub dedup: bool,
}

/// A parsed line: its 1-based line number and the labels on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLine {
    pub line: usize,
    pub triple: LabeledTriple,
}

/// Parses a triple file. Trailing empty lines are ignored; any other line
/// must have exactly three non-empty fields.
pub fn parse_triples<R: Read>(mut reader: R, separator: Separator, source_name: &str) -> Result<Vec<ParsedLine>> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(source_name, e))?;
    parse_bytes(&bytes, separator, source_name)
}

fn parse_bytes(bytes: &[u8], separator: Separator, source_name: &str) -> Result<Vec<ParsedLine>> {
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    while lines.last().is_some_and(|l| l.iter().all(u8::is_ascii_whitespace)) {
        lines.pop();
    }

    let mut out = Vec::with_capacity(lines.len());
    for (i, raw) in lines.into_iter().enumerate() {
        let line = i + 1;
        let text = std::str::from_utf8(raw).map_err(|_| Error::Encoding {
            source_name: source_name.to_owned(),
            line,
        })?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        let fields: Vec<&str> = match separator {
            Separator::Tab => text.split('\t').collect(),
            Separator::Whitespace => text.split_whitespace().collect(),
        };
        let parse_error = |message: String| Error::Parse {
            source_name: source_name.to_owned(),
            line,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_error(format!("expected 3 fields, found {}", fields.len())));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error("empty field".into()));
        }
        out.push(ParsedLine {
            line,
            triple: LabeledTriple::new(fields[0], fields[1], fields[2]),
        });
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads the three splits of `layout` into one dataset whose vocabulary is
/// interned over `train ‖ valid ‖ test`.
pub fn load_dataset(layout: &DatasetLayout, options: LoadOptions) -> Result<SplitDataset> {
    let parsed: Vec<Result<(String, Vec<ParsedLine>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = SplitKind::ALL
            .map(|kind| {
                let path = layout.path(kind);
                scope.spawn(move || -> Result<(String, Vec<ParsedLine>)> {
                    let bytes = read_file(&path)?;
                    let lines = parse_bytes(&bytes, layout.separator, &path.display().to_string())?;
                    if lines.is_empty() {
                        return Err(Error::EmptySplit(path.display().to_string()));
                    }
                    Ok((sha256_hex(&bytes), lines))
                })
            })
            .into_iter()
            .collect();
        handles.into_iter().map(|h| h.join().expect("parser thread panicked")).collect()
    });

    let mut vocab = Vocabulary::new();
    let mut splits: [Vec<Triple>; 3] = Default::default();
    let mut line_numbers: [Vec<usize>; 3] = Default::default();
    let mut sha256: [String; 3] = Default::default();

    for (kind, result) in SplitKind::ALL.into_iter().zip(parsed) {
        let (digest, lines) = result?;
        let k = kind as usize;
        sha256[k] = digest;
        let mut seen: HashSet<&LabeledTriple> = HashSet::with_capacity(lines.len());
        for parsed in &lines {
            if !seen.insert(&parsed.triple) {
                if options.dedup {
                    log::warn!("{kind}: dropping duplicate triple {} at line {}", parsed.triple, parsed.line);
                    continue;
                }
                return Err(Error::DuplicateTriple {
                    split: kind.to_string(),
                    line: parsed.line,
                    triple: parsed.triple.to_string(),
                });
            }
            splits[k].push(vocab.intern(&parsed.triple));
            line_numbers[k].push(parsed.line);
        }
    }

    let [train, valid, test] = splits;
    let dataset = SplitDataset {
        vocab,
        train,
        valid,
        test,
        source: Some(DatasetSource {
            dir: layout.dir.clone(),
            files: SplitKind::ALL.map(|k| layout.path(k)),
            sha256,
            line_numbers,
            separator: layout.separator.as_str().to_owned(),
        }),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// One removed line in a corrected dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedTriple {
    pub split: SplitKind,
    pub line_no: usize,
    pub h: String,
    pub r: String,
    pub t: String,
    pub oov_fields: Vec<OovField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub original: usize,
    pub removed: usize,
    pub corrected: usize,
}

/// JSON manifest written next to corrected splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub input_sha256: BTreeMap<SplitKind, String>,
    pub removed: Vec<RemovedTriple>,
    pub counts: BTreeMap<SplitKind, SplitCounts>,
}

#[derive(Debug, Clone)]
pub struct CorrectionSummary {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Writes `train` unchanged and `valid`/`test` without the triples listed
/// in `removal`, copying surviving lines byte-for-byte in original order.
pub fn write_corrected(dataset: &SplitDataset, removal: &OovReport, out_dir: &Path, force: bool) -> Result<CorrectionSummary> {
    let source = dataset
        .source
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("dataset was not loaded from files".into()))?;

    if same_dir(&source.dir, out_dir) {
        return Err(Error::OutputIsInput(out_dir.to_owned()));
    }
    if out_dir.exists() {
        let mut entries = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::OutputNotEmpty(out_dir.to_owned()));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut removed = Vec::new();
    let mut counts = BTreeMap::new();
    let mut input_sha256 = BTreeMap::new();

    for kind in SplitKind::ALL {
        let k = kind as usize;
        let input = &source.files[k];
        let bytes = read_file(input)?;
        if sha256_hex(&bytes) != source.sha256[k] {
            return Err(Error::InvalidConfig(format!("{} changed since it was loaded", input.display())));
        }
        input_sha256.insert(kind, source.sha256[k].clone());

        let affected = removal.split(kind).map(|s| s.affected.as_slice()).unwrap_or_default();
        let drop: HashSet<usize> = affected.iter().map(|a| a.line_no).collect();
        for a in affected {
            let labels = dataset.vocab.labels(&a.triple);
            removed.push(RemovedTriple {
                split: kind,
                line_no: a.line_no,
                h: labels.head,
                r: labels.relation,
                t: labels.tail,
                oov_fields: a.oov_fields.clone(),
            });
        }

        let output = out_dir.join(input.file_name().expect("split path has a file name"));
        let kept: Vec<u8> = if drop.is_empty() {
            bytes
        } else {
            bytes
                .split_inclusive(|&b| b == b'\n')
                .enumerate()
                .filter(|(i, _)| !drop.contains(&(i + 1)))
                .flat_map(|(_, line)| line.iter().copied())
                .collect()
        };
        fs::write(&output, &kept).map_err(|e| Error::io(&output, e))?;

        let original = dataset.split(kind).len();
        counts.insert(
            kind,
            SplitCounts {
                original,
                removed: drop.len(),
                corrected: original - drop.len(),
            },
        );
    }

    let manifest = Manifest {
        tool_version: crate::TOOL_VERSION.to_owned(),
        input_sha256,
        removed,
        counts,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    Ok(CorrectionSummary {
        out_dir: out_dir.to_owned(),
        manifest_path,
        manifest,
    })
}

//! Function corpora: ingestion, edit profiling and seeded splits.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "vul")]
    Vulnerable,
    #[serde(rename = "non-vul")]
    NonVulnerable,
}

impl Label {
    pub fn is_vulnerable(self) -> bool {
        self == Label::Vulnerable
    }

    /// Class index used by the classifier head: 0 = non-vulnerable, 1 = vulnerable.
    pub fn class_index(self) -> usize {
        match self {
            Label::NonVulnerable => 0,
            Label::Vulnerable => 1,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Vulnerable => "vul",
            Label::NonVulnerable => "non-vul",
        })
    }
}

/// One source function with its label and, for vulnerable functions, the
/// post-fix version when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionRecord {
    pub id: String,
    pub project: String,
    pub code: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cve_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe_id: Option<String>,
}

impl FunctionRecord {
    /// Checks the record-level invariants, returning the reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        if self.code.trim().is_empty() {
            return Err("code is empty".into());
        }
        if let Some(fixed) = &self.fixed_code {
            if self.label == Label::NonVulnerable {
                return Err("non-vulnerable record carries fixed_code".into());
            }
            if fixed == &self.code {
                return Err("fixed_code is identical to code".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("insufficient {label} records: need {needed}, found {found}")]
    InsufficientData {
        label: Label,
        needed: usize,
        found: usize,
    },
    #[error("edit profile needs two non-empty texts")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    JsonLines,
}

/// Reads a JSON-lines corpus. Blank lines are skipped; every other line must
/// be one complete record.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<FunctionRecord>, CorpusError> {
    let CorpusFormat::JsonLines = format;
    let file = File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FunctionRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        record
            .validate()
            .map_err(|reason| CorpusError::MalformedRecord {
                line: line_no,
                reason,
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[FunctionRecord]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupMode {
    /// Byte-identical code.
    Exact,
    /// Code equal after collapsing all whitespace runs.
    NormalizedWhitespace,
}

/// Drops records whose code duplicates an earlier record's code, keeping the
/// first occurrence. Returns the ids that were removed.
pub fn dedup_by_content(records: &mut Vec<FunctionRecord>, mode: DedupMode) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut removed = Vec::new();
    records.retain(|r| {
        let key = match mode {
            DedupMode::Exact => r.code.clone(),
            DedupMode::NormalizedWhitespace => r.code.split_whitespace().collect::<Vec<_>>().join(" "),
        };
        if seen.insert(key) {
            true
        } else {
            removed.push(r.id.clone());
            false
        }
    });
    removed
}

/// Train/valid/test partition. The training part is class-balanced; the
/// held-out parts keep the corpus ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<FunctionRecord>,
    pub valid: Vec<FunctionRecord>,
    pub test: Vec<FunctionRecord>,
    /// Training-cut records left out by the rebalancing sample.
    pub dropped: Vec<String>,
    pub seed: u64,
}

pub const MIN_RECORDS_PER_LABEL: usize = 10;

fn tenth(n: usize) -> usize {
    (n + 5) / 10
}

/// Stratified 80/10/10 split followed by rebalancing of the training part.
///
/// Each label is shuffled with a seeded generator and cut into
/// `round(n/10)` validation, `round(n/10)` test and the remainder for
/// training. The larger training class is then down-sampled (without
/// replacement) to the size of the smaller one. Within each split records
/// keep their corpus order.
pub fn build_splits(corpus: &[FunctionRecord], seed: u64) -> Result<CorpusSplit, CorpusError> {
    let mut by_label: HashMap<Label, Vec<usize>> = HashMap::new();
    for (i, r) in corpus.iter().enumerate() {
        by_label.entry(r.label).or_default().push(i);
    }
    for label in [Label::Vulnerable, Label::NonVulnerable] {
        let found = by_label.get(&label).map_or(0, Vec::len);
        if found < MIN_RECORDS_PER_LABEL {
            return Err(CorpusError::InsufficientData {
                label,
                needed: MIN_RECORDS_PER_LABEL,
                found,
            });
        }
    }

    let mut train_by_label = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (tag, label) in [Label::Vulnerable, Label::NonVulnerable].into_iter().enumerate() {
        let mut idx = by_label.remove(&label).unwrap_or_default();
        idx.shuffle(&mut seed::rng(seed::derive(seed, &[0x5_917, tag as u64])));
        let n_hold = tenth(idx.len());
        valid.extend_from_slice(&idx[..n_hold]);
        test.extend_from_slice(&idx[n_hold..2 * n_hold]);
        train_by_label.push(idx[2 * n_hold..].to_vec());
    }

    let keep = train_by_label.iter().map(Vec::len).min().unwrap_or(0);
    let mut train = Vec::new();
    let mut dropped = Vec::new();
    for (tag, mut idx) in train_by_label.into_iter().enumerate() {
        if idx.len() > keep {
            idx.shuffle(&mut seed::rng(seed::derive(seed, &[0xBA1, tag as u64])));
            dropped.extend(idx.drain(keep..));
        }
        train.extend(idx);
    }

    let collect = |mut idx: Vec<usize>| -> Vec<FunctionRecord> {
        idx.sort_unstable();
        idx.into_iter().map(|i| corpus[i].clone()).collect()
    };
    dropped.sort_unstable();
    Ok(CorpusSplit {
        train: collect(train),
        valid: collect(valid),
        test: collect(test),
        dropped: dropped.into_iter().map(|i| corpus[i].id.clone()).collect(),
        seed,
    })
}

/// Size of the edit between a vulnerable function and its fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditProfile {
    pub changed_lines: usize,
    pub changed_chars: usize,
    pub char_ratio: f64,
}

/// Line-level LCS diff between two texts.
///
/// Lines keep their terminating `\n`, so a trailing-newline difference still
/// counts as a changed line. `changed_chars` is the character length of all
/// deleted plus added lines.
pub fn edit_profile(vulnerable: &str, fixed: &str) -> Result<EditProfile, CorpusError> {
    if vulnerable.is_empty() || fixed.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let a: Vec<&str> = vulnerable.split_inclusive('\n').collect();
    let b: Vec<&str> = fixed.split_inclusive('\n').collect();
    let matched = lcs_matches(&a, &b);

    let mut in_a = vec![false; a.len()];
    let mut in_b = vec![false; b.len()];
    for &(i, j) in &matched {
        in_a[i] = true;
        in_b[j] = true;
    }
    let removed = a.iter().zip(&in_a).filter(|(_, &m)| !m).map(|(l, _)| l.chars().count());
    let added = b.iter().zip(&in_b).filter(|(_, &m)| !m).map(|(l, _)| l.chars().count());
    let changed_lines = (a.len() - matched.len()) + (b.len() - matched.len());
    let changed_chars: usize = removed.chain(added).sum();
    let total = vulnerable.chars().count();
    let char_ratio = (changed_chars as f64 / total as f64).clamp(0.0, 1.0);
    Ok(EditProfile {
        changed_lines,
        changed_chars,
        char_ratio,
    })
}

/// Index pairs of one longest common subsequence, found by the textbook
/// dynamic program with a fixed backtracking preference.
fn lcs_matches(a: &[&str], b: &[&str]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut table = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i * width + j] = if a[i] == b[j] {
                table[(i + 1) * width + j + 1] + 1
            } else {
                table[(i + 1) * width + j].max(table[i * width + j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(table[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if table[(i + 1) * width + j] >= table[i * width + j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Corpus-wide counts and edit-size fractions. Fractions are over records
/// that carry `fixed_code` and are `None` when there are no such records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub vulnerable: usize,
    pub non_vulnerable: usize,
    pub with_fix: usize,
    pub within_5_lines: Option<f64>,
    pub within_10_lines: Option<f64>,
    pub within_100_chars: Option<f64>,
    pub within_200_chars: Option<f64>,
    pub ratio_within_5_percent: Option<f64>,
    pub ratio_within_10_percent: Option<f64>,
}

pub fn corpus_stats(corpus: &[FunctionRecord]) -> CorpusStats {
    let profiles: Vec<EditProfile> = corpus
        .iter()
        .filter_map(|r| {
            r.fixed_code
                .as_deref()
                .and_then(|fixed| edit_profile(&r.code, fixed).ok())
        })
        .collect();
    let frac = |pred: &dyn Fn(&EditProfile) -> bool| -> Option<f64> {
        if profiles.is_empty() {
            None
        } else {
            Some(profiles.iter().filter(|p| pred(p)).count() as f64 / profiles.len() as f64)
        }
    };
    let vulnerable = corpus.iter().filter(|r| r.label.is_vulnerable()).count();
    CorpusStats {
        total: corpus.len(),
        vulnerable,
        non_vulnerable: corpus.len() - vulnerable,
        with_fix: profiles.len(),
        within_5_lines: frac(&|p| p.changed_lines <= 5),
        within_10_lines: frac(&|p| p.changed_lines <= 10),
        within_100_chars: frac(&|p| p.changed_chars <= 100),
        within_200_chars: frac(&|p| p.changed_chars <= 200),
        ratio_within_5_percent: frac(&|p| p.char_ratio <= 0.05),
        ratio_within_10_percent: frac(&|p| p.char_ratio <= 0.10),
    }
}

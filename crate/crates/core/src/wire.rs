//! On-disk formats: JSONL corpora and atomic file output.
//!
//! Every JSONL line carries a format version `v`. A missing `v` reads as the
//! current version; any other major version is rejected.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{Label, SequenceRecord};
use crate::error::{Result, WatermarkError};
use crate::scalar::Scalar;

/// Major version written by this crate.
pub const FORMAT_VERSION: u32 = 1;

fn current_version() -> u32 {
    FORMAT_VERSION
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecordWire {
    #[serde(default = "current_version")]
    pub v: u32,
    pub id: String,
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropies: Option<Vec<f64>>,
    #[serde(default)]
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<Vec<u32>>,
}

impl SequenceRecordWire {
    pub fn from_record<T: Scalar>(rec: &SequenceRecord<T>) -> Self {
        Self {
            v: FORMAT_VERSION,
            id: rec.id.clone(),
            tokens: rec.tokens.clone(),
            entropies: rec.entropies.as_ref().map(|e| e.iter().map(|x| x.as_f64()).collect()),
            label: rec.label,
            prompt: rec.prompt.clone(),
        }
    }

    /// Checks the version, array lengths and (when given) token ranges.
    pub fn into_record<T: Scalar>(self, vocab_size: Option<usize>) -> Result<SequenceRecord<T>> {
        if self.v != FORMAT_VERSION {
            return Err(WatermarkError::UnsupportedVersion {
                found: self.v.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        if let Some(e) = &self.entropies {
            if e.len() != self.tokens.len() {
                return Err(WatermarkError::ShapeError {
                    expected: self.tokens.len(),
                    got: e.len(),
                });
            }
        }
        if let Some(vocab_size) = vocab_size {
            let all = self.tokens.iter().chain(self.prompt.iter().flatten());
            if let Some(&token) = all.into_iter().find(|&&t| t as usize >= vocab_size) {
                return Err(WatermarkError::InvalidToken { token, vocab_size });
            }
        }
        Ok(SequenceRecord {
            id: self.id,
            tokens: self.tokens,
            entropies: self.entropies.map(|e| e.into_iter().map(T::lit).collect()),
            prompt: self.prompt,
            label: self.label,
        })
    }
}

/// A line that failed to parse or validate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Corpus<T: Scalar> {
    pub records: Vec<SequenceRecord<T>>,
    pub errors: Vec<LineError>,
}

/// Reads a JSONL corpus. Blank lines are skipped; bad lines are collected in
/// `errors` and reading continues.
pub fn read_jsonl<T: Scalar, R: BufRead>(reader: R, vocab_size: Option<usize>) -> Result<Corpus<T>> {
    let mut corpus = Corpus {
        records: Vec::new(),
        errors: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<SequenceRecordWire>(&line)
            .map_err(WatermarkError::from)
            .and_then(|w| w.into_record(vocab_size));
        match parsed {
            Ok(rec) => corpus.records.push(rec),
            Err(e) => corpus.errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(corpus)
}

pub fn read_jsonl_file<T: Scalar>(path: &Path, vocab_size: Option<usize>) -> Result<Corpus<T>> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file), vocab_size)
}

/// Serializes records as JSONL, one object per line.
pub fn to_jsonl<T: Scalar>(records: &[SequenceRecord<T>]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(&SequenceRecordWire::from_record(rec))?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| WatermarkError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> SequenceRecord<f64> {
        SequenceRecord::new("a", vec![1, 2, 3], Label::Watermarked)
            .with_entropies(vec![0.9, 0.8, 0.7])
            .with_prompt(vec![4])
    }

    #[test]
    fn round_trip() {
        let text = to_jsonl(&[rec(), SequenceRecord::new("b", vec![5], Label::Human)]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"v\":1,"));
        let corpus = read_jsonl::<f64, _>(text.as_bytes(), Some(8)).unwrap();
        assert!(corpus.errors.is_empty());
        assert_eq!(corpus.records[0], rec());
        assert_eq!(corpus.records[1].entropies, None);
    }

    #[test]
    fn bad_lines_are_reported_with_numbers() {
        let text = "{\"id\":\"x\",\"tokens\":[1],\"label\":\"human\"}\n\nnot json\n\
                    {\"v\":2,\"id\":\"y\",\"tokens\":[1]}\n\
                    {\"id\":\"z\",\"tokens\":[1,2],\"entropies\":[0.5]}\n\
                    {\"id\":\"w\",\"tokens\":[99]}\n";
        let corpus = read_jsonl::<f64, _>(text.as_bytes(), Some(10)).unwrap();
        assert_eq!(corpus.records.len(), 1);
        assert_eq!(corpus.records[0].label, Label::Human);
        let lines: Vec<usize> = corpus.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
        assert!(corpus.errors[1].message.contains("version"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

//! Sparse sample representation and the libsvm-style text format.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// A labeled sample in sparse form: sorted `(index, value)` pairs.
///
/// Indices are 1-based and strictly increasing, values are finite, and
/// explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    pub label: i32,
    features: Vec<(u32, f64)>,
}

impl SparseSample {
    /// Build a sample, dropping zero values. Panics on unsorted indices or
    /// non-finite values; ingestion paths validate before calling this.
    pub fn new(label: i32, features: Vec<(u32, f64)>) -> Self {
        for w in features.windows(2) {
            assert!(w[0].0 < w[1].0, "feature indices must be strictly increasing");
        }
        assert!(
            features.iter().all(|&(i, v)| i >= 1 && v.is_finite()),
            "feature indices must be >= 1 and values finite"
        );
        let features = features.into_iter().filter(|&(_, v)| v != 0.0).collect();
        Self { label, features }
    }

    /// 2D convenience constructor with feature indices 1 and 2.
    pub fn from_xy(label: i32, x: f64, y: f64) -> Self {
        Self::new(label, vec![(1, x), (2, y)])
    }

    pub fn features(&self) -> &[(u32, f64)] {
        &self.features
    }

    /// Value at a feature index (0.0 if absent).
    pub fn get(&self, index: u32) -> f64 {
        self.features
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|p| self.features[p].1)
            .unwrap_or(0.0)
    }

    /// Largest feature index present (0 for the empty vector).
    pub fn max_index(&self) -> u32 {
        self.features.last().map_or(0, |&(i, _)| i)
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.features.iter().map(|&(_, v)| v * v).sum()
    }
}

/// Merge-walk sparse dot product of two sorted feature lists.
pub fn dot(a: &SparseSample, b: &SparseSample) -> f64 {
    let (xs, ys) = (a.features(), b.features());
    let mut sum = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < xs.len() && j < ys.len() {
        if xs[i].0 == ys[j].0 {
            sum += xs[i].1 * ys[j].1;
            i += 1;
            j += 1;
        } else if xs[i].0 < ys[j].0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    sum
}

/// Parse one dataset line: `label idx:val idx:val ...`.
pub fn parse_line(line: &str) -> std::result::Result<SparseSample, String> {
    let mut tokens = line.split_whitespace();
    let label_tok = tokens.next().ok_or("empty line")?;
    let label: i32 = label_tok
        .parse()
        .map_err(|_| format!("bad label {label_tok:?}"))?;
    let mut features = Vec::new();
    let mut prev_index = 0u32;
    for tok in tokens {
        let (idx_str, val_str) = tok
            .split_once(':')
            .ok_or_else(|| format!("token {tok:?} is not idx:val"))?;
        let index: u32 = idx_str
            .parse()
            .map_err(|_| format!("bad feature index {idx_str:?}"))?;
        if index == 0 {
            return Err(format!("feature index must be >= 1, got {index}"));
        }
        if index <= prev_index {
            return Err(format!(
                "feature index {index} not increasing (previous {prev_index})"
            ));
        }
        let value: f64 = val_str
            .parse()
            .map_err(|_| format!("bad feature value {val_str:?}"))?;
        if !value.is_finite() {
            return Err(format!("non-finite feature value {val_str:?}"));
        }
        prev_index = index;
        if value != 0.0 {
            features.push((index, value));
        }
    }
    Ok(SparseSample { label, features })
}

/// Parse a whole dataset from text. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_sparse_str(text: &str) -> Result<Vec<SparseSample>> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_line(line).map_err(|message| Error::Parse {
            line: lineno + 1,
            message,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_sparse(path: &Path) -> Result<Vec<SparseSample>> {
    read_sparse_str(&fs::read_to_string(path)?)
}

/// Render a dataset in the sparse text format. Floats use shortest
/// round-trip formatting, so write-then-read is the identity.
pub fn write_sparse_str(samples: &[SparseSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = write!(out, "{}", s.label);
        for &(i, v) in s.features() {
            let _ = write!(out, " {i}:{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_sparse(path: &Path, samples: &[SparseSample]) -> Result<()> {
    fs::write(path, write_sparse_str(samples))?;
    Ok(())
}

/// Per-class sample counts, ordered by label.
pub fn class_counts(samples: &[SparseSample]) -> BTreeMap<i32, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.label).or_insert(0) += 1;
    }
    counts
}

/// Distinct labels in ascending order.
pub fn class_labels(samples: &[SparseSample]) -> Vec<i32> {
    class_counts(samples).into_keys().collect()
}

/// Dataset manifest: one `label,count` row per class.
pub fn dataset_manifest_csv(samples: &[SparseSample]) -> String {
    let mut out = String::from("label,count\n");
    for (label, count) in class_counts(samples) {
        let _ = writeln!(out, "{label},{count}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_basic_line() {
        let s = parse_line("1 1:0.5 3:2.0").unwrap();
        assert_eq!(s.label, 1);
        assert_eq!(s.features(), &[(1, 0.5), (3, 2.0)]);
    }

    #[test]
    fn rejects_non_increasing_indices() {
        let err = read_sparse_str("2 3:1 1:1").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("not increasing"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(read_sparse_str("1 1:inf").is_err());
        assert!(read_sparse_str("1 1:nan").is_err());
    }

    #[test]
    fn skips_blank_lines_and_reports_line_numbers() {
        let err = read_sparse_str("1 1:1\n\n2 2:oops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn explicit_zeros_are_dropped() {
        let s = parse_line("1 1:0 2:3.5").unwrap();
        assert_eq!(s.features(), &[(2, 3.5)]);
    }

    #[test]
    fn manifest_counts_classes() {
        let ds = vec![
            SparseSample::from_xy(2, 0.1, 0.2),
            SparseSample::from_xy(1, 0.3, 0.4),
            SparseSample::from_xy(2, 0.5, 0.6),
        ];
        assert_eq!(dataset_manifest_csv(&ds), "label,count\n1,1\n2,2\n");
    }

    fn arb_sample() -> impl Strategy<Value = SparseSample> {
        (
            -5i32..5,
            prop::collection::btree_map(1u32..50, -1e6f64..1e6, 0..8),
        )
            .prop_map(|(label, feats)| SparseSample::new(label, feats.into_iter().collect()))
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(ds in prop::collection::vec(arb_sample(), 0..20)) {
            let text = write_sparse_str(&ds);
            let back = read_sparse_str(&text).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}

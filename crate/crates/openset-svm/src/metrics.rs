//! Open-set evaluation measures over a confusion matrix that carries an
//! extra UNKNOWN row (true class absent from training) and column (rejected).

use crate::error::{Error, Result};
use std::fmt::Write as _;

/// (n+1) x (n+1) counts; row = true class, column = predicted class, last
/// row/column = UNKNOWN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    known_labels: Vec<i32>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(known_labels: Vec<i32>) -> Self {
        let mut sorted = known_labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), known_labels.len(), "duplicate known labels");
        let n = known_labels.len() + 1;
        Self {
            known_labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn known_labels(&self) -> &[i32] {
        &self.known_labels
    }

    fn index_of(&self, label: i32) -> Option<usize> {
        self.known_labels.iter().position(|&l| l == label)
    }

    fn unknown_index(&self) -> usize {
        self.known_labels.len()
    }

    /// Record one test outcome. A true label outside the known set lands in
    /// the UNKNOWN row; a `None` prediction lands in the UNKNOWN column.
    /// Predicting a label that was never trained is a caller bug.
    pub fn record(&mut self, true_label: i32, predicted: Option<i32>) {
        let row = self.index_of(true_label).unwrap_or_else(|| self.unknown_index());
        let col = match predicted {
            None => self.unknown_index(),
            Some(l) => self
                .index_of(l)
                .expect("predicted label not among known classes"),
        };
        self.counts[row][col] += 1;
    }

    pub fn from_pairs(
        known_labels: Vec<i32>,
        pairs: impl IntoIterator<Item = (i32, Option<i32>)>,
    ) -> Self {
        let mut cm = Self::new(known_labels);
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    /// Build directly from counts; rows/cols must be (n_known + 1) square.
    pub fn from_counts(known_labels: Vec<i32>, counts: Vec<Vec<u64>>) -> Self {
        let n = known_labels.len() + 1;
        assert_eq!(counts.len(), n, "row count");
        assert!(counts.iter().all(|r| r.len() == n), "column count");
        let cm = Self::new(known_labels);
        Self {
            known_labels: cm.known_labels,
            counts,
        }
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for l in &self.known_labels {
            let _ = write!(out, ",{l}");
        }
        out.push_str(",UNKNOWN\n");
        for (r, row) in self.counts.iter().enumerate() {
            if r < self.known_labels.len() {
                let _ = write!(out, "{}", self.known_labels[r]);
            } else {
                out.push_str("UNKNOWN");
            }
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "empty csv".into()))?;
        let mut cols = header.split(',');
        cols.next(); // corner cell
        let mut known_labels = Vec::new();
        for tok in cols {
            if tok == "UNKNOWN" {
                break;
            }
            known_labels.push(
                tok.parse::<i32>()
                    .map_err(|_| parse_err(1, format!("bad header label {tok:?}")))?,
            );
        }
        let n = known_labels.len() + 1;
        let mut counts = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split(',');
            toks.next(); // row label
            let row: Vec<u64> = toks
                .map(|t| {
                    t.parse::<u64>()
                        .map_err(|_| parse_err(i + 2, format!("bad count {t:?}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(parse_err(i + 2, format!("expected {n} counts, got {}", row.len())));
            }
            counts.push(row);
        }
        if counts.len() != n {
            return Err(parse_err(1, format!("expected {n} rows, got {}", counts.len())));
        }
        Ok(Self::from_counts(known_labels, counts))
    }
}

/// Accuracy on test samples whose true class was trained on.
pub fn aks(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.known_labels.len();
    let total: u64 = (0..n).map(|r| cm.row_sum(r)).sum();
    if total == 0 {
        return Err(Error::NoKnownSamples);
    }
    let hits: u64 = (0..n).map(|k| cm.counts[k][k]).sum();
    Ok(hits as f64 / total as f64)
}

/// Accuracy on test samples from classes never seen in training (correct
/// means rejected as UNKNOWN).
pub fn aus(cm: &ConfusionMatrix) -> Result<f64> {
    let u = cm.unknown_index();
    let total = cm.row_sum(u);
    if total == 0 {
        return Err(Error::NoUnknownSamples);
    }
    Ok(cm.counts[u][u] as f64 / total as f64)
}

/// Normalized accuracy: the unweighted mean of AKS and AUS (the all-unknown
/// classifier calibrates to exactly 0.5).
pub fn na(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(0.5 * (aks(cm)? + aus(cm)?))
}

/// Harmonic normalized accuracy: 0 when either side is 0, else the harmonic
/// mean of AKS and AUS.
pub fn hna(cm: &ConfusionMatrix) -> Result<f64> {
    let (a, u) = (aks(cm)?, aus(cm)?);
    if a == 0.0 || u == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 / (1.0 / a + 1.0 / u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Macro,
    Micro,
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Open-set F-measure: per-class precision/recall over the full matrix
/// (wrongly accepted unknowns count as false positives, rejections of known
/// samples as false negatives), with the UNKNOWN class contributing no term
/// of its own.
pub fn osfm(cm: &ConfusionMatrix, averaging: Averaging) -> f64 {
    f_measure_over(cm, cm.known_labels.len(), averaging)
}

/// Traditional multiclass F-measure with UNKNOWN treated as an ordinary
/// (n+1)-th class.
pub fn fm(cm: &ConfusionMatrix, averaging: Averaging) -> f64 {
    f_measure_over(cm, cm.known_labels.len() + 1, averaging)
}

fn f_measure_over(cm: &ConfusionMatrix, n_classes: usize, averaging: Averaging) -> f64 {
    let mut pooled = (0.0, 0.0, 0.0);
    let mut macro_sum = 0.0;
    for k in 0..n_classes {
        let tp = cm.counts[k][k] as f64;
        let fp = cm.col_sum(k) as f64 - tp;
        let fn_ = cm.row_sum(k) as f64 - tp;
        macro_sum += f1(tp, fp, fn_);
        pooled.0 += tp;
        pooled.1 += fp;
        pooled.2 += fn_;
    }
    match averaging {
        Averaging::Macro => macro_sum / n_classes as f64,
        Averaging::Micro => f1(pooled.0, pooled.1, pooled.2),
    }
}

/// All eight measures in one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub aks: f64,
    pub aus: f64,
    pub na: f64,
    pub hna: f64,
    pub osfm_macro: f64,
    pub osfm_micro: f64,
    pub fm_macro: f64,
    pub fm_micro: f64,
}

impl MetricReport {
    pub fn compute(cm: &ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            aks: aks(cm)?,
            aus: aus(cm)?,
            na: na(cm)?,
            hna: hna(cm)?,
            osfm_macro: osfm(cm, Averaging::Macro),
            osfm_micro: osfm(cm, Averaging::Micro),
            fm_macro: fm(cm, Averaging::Macro),
            fm_micro: fm(cm, Averaging::Micro),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_class(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![1, 2], counts)
    }

    #[test]
    fn aks_examples() {
        let cm = two_class(vec![vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 0]]);
        assert_eq!(aks(&cm).unwrap(), 1.0);
        let cm = two_class(vec![vec![0, 0, 3], vec![0, 0, 4], vec![0, 0, 0]]);
        assert_eq!(aks(&cm).unwrap(), 0.0);
        let cm = two_class(vec![vec![3, 1, 1], vec![0, 4, 1], vec![0, 0, 0]]);
        assert_eq!(aks(&cm).unwrap(), 0.7);
    }

    #[test]
    fn aus_examples() {
        let cm = two_class(vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 7]]);
        assert_eq!(aus(&cm).unwrap(), 1.0);
        let cm = two_class(vec![vec![1, 0, 0], vec![0, 1, 0], vec![4, 3, 0]]);
        assert_eq!(aus(&cm).unwrap(), 0.0);
        let cm = two_class(vec![vec![1, 0, 0], vec![0, 1, 0], vec![2, 3, 5]]);
        assert_eq!(aus(&cm).unwrap(), 0.5);
    }

    #[test]
    fn na_and_hna_calibration() {
        // Everything-unknown classifier: AKS 0, AUS 1 -> NA 0.5, HNA 0.
        let cm = two_class(vec![vec![0, 0, 5], vec![0, 0, 5], vec![0, 0, 10]]);
        assert_eq!(na(&cm).unwrap(), 0.5);
        assert_eq!(hna(&cm).unwrap(), 0.0);
        // Worst case: known rejected, unknown accepted -> NA 0.
        let cm = two_class(vec![vec![0, 0, 5], vec![0, 0, 5], vec![5, 5, 0]]);
        assert_eq!(na(&cm).unwrap(), 0.0);
        assert_eq!(hna(&cm).unwrap(), 0.0);
    }

    #[test]
    fn hna_formula_cases() {
        // aks = aus = 0.8
        let cm = two_class(vec![vec![4, 0, 1], vec![0, 4, 1], vec![1, 1, 8]]);
        assert_eq!(aks(&cm).unwrap(), 0.8);
        assert_eq!(aus(&cm).unwrap(), 0.8);
        assert!((na(&cm).unwrap() - 0.8).abs() < 1e-15);
        assert!((hna(&cm).unwrap() - 0.8).abs() < 1e-15);
        // aks = 1, aus = 0.5 -> hna = 2/3
        let cm = two_class(vec![vec![5, 0, 0], vec![0, 5, 0], vec![2, 0, 2]]);
        assert!((hna(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn osfm_hand_example() {
        let cm = two_class(vec![vec![3, 1, 1], vec![0, 4, 1], vec![1, 1, 3]]);
        let macro_f = osfm(&cm, Averaging::Macro);
        let f1c1 = 2.0 * (0.75 * 0.6) / (0.75 + 0.6);
        let f1c2 = 2.0 * ((4.0 / 6.0) * 0.8) / (4.0 / 6.0 + 0.8);
        assert!((macro_f - 0.5 * (f1c1 + f1c2)).abs() < 1e-12);
        assert!((macro_f - 0.696_969_696_97).abs() < 1e-9);
        // micro: pooled tp=7, fp=3, fn=3
        let micro = osfm(&cm, Averaging::Micro);
        assert!((micro - 14.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn osfm_degenerate_cases() {
        let perfect = two_class(vec![vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 5]]);
        assert_eq!(osfm(&perfect, Averaging::Macro), 1.0);
        assert_eq!(osfm(&perfect, Averaging::Micro), 1.0);
        let all_unknown = two_class(vec![vec![0, 0, 5], vec![0, 0, 5], vec![0, 0, 5]]);
        assert_eq!(osfm(&all_unknown, Averaging::Macro), 0.0);
        assert_eq!(osfm(&all_unknown, Averaging::Micro), 0.0);
    }

    #[test]
    fn fm_includes_unknown_class() {
        let cm = two_class(vec![vec![3, 1, 1], vec![0, 4, 1], vec![1, 1, 3]]);
        // UNKNOWN term: tp=3, fp=2, fn=2 -> f1 = 6/10.
        let expect_macro = (2.0 * (0.75 * 0.6) / (0.75 + 0.6)
            + 2.0 * ((4.0 / 6.0) * 0.8) / (4.0 / 6.0 + 0.8)
            + 0.6)
            / 3.0;
        assert!((fm(&cm, Averaging::Macro) - expect_macro).abs() < 1e-12);
        let micro = fm(&cm, Averaging::Micro);
        assert!((micro - 20.0 / 30.0).abs() < 1e-12);
        let perfect = two_class(vec![vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 5]]);
        assert_eq!(fm(&perfect, Averaging::Macro), 1.0);
    }

    #[test]
    fn micro_fm_equals_accuracy_when_closed() {
        // No unknown row, nothing rejected: micro-FM over known classes is
        // plain accuracy on known rows.
        let cm = two_class(vec![vec![7, 3, 0], vec![2, 8, 0], vec![0, 0, 0]]);
        let acc = aks(&cm).unwrap();
        assert!((osfm(&cm, Averaging::Micro) - acc).abs() < 1e-15);
    }

    #[test]
    fn errors_on_missing_rows() {
        let cm = two_class(vec![vec![0, 0, 0], vec![0, 0, 0], vec![1, 1, 3]]);
        assert!(matches!(aks(&cm), Err(Error::NoKnownSamples)));
        let cm = two_class(vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 0]]);
        assert!(matches!(aus(&cm), Err(Error::NoUnknownSamples)));
    }

    #[test]
    fn csv_round_trip() {
        let cm = two_class(vec![vec![3, 1, 1], vec![0, 4, 1], vec![1, 1, 3]]);
        let text = cm.to_csv();
        assert!(text.starts_with("true\\pred,1,2,UNKNOWN\n"));
        let back = ConfusionMatrix::from_csv(&text).unwrap();
        assert_eq!(back, cm);
    }

    fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..5).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(0u64..50, n + 1), n + 1).prop_map(
                move |counts| {
                    let labels: Vec<i32> = (1..=n as i32).collect();
                    ConfusionMatrix::from_counts(labels, counts)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn hna_never_exceeds_na(cm in arb_matrix()) {
            if let (Ok(h), Ok(n)) = (hna(&cm), na(&cm)) {
                prop_assert!(h <= n + 1e-12);
                if let (Ok(a), Ok(u)) = (aks(&cm), aus(&cm)) {
                    if (a - u).abs() < 1e-15 && a > 0.0 {
                        prop_assert!((h - n).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn permutation_invariance(cm in arb_matrix(), rot in 1usize..4) {
            // Rotate the known-class block (labels move with their rows and
            // columns); every measure is unchanged up to summation order.
            let n = cm.known_labels().len();
            let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
            let labels: Vec<i32> = perm.iter().map(|&p| cm.known_labels()[p]).collect();
            let mut counts = vec![vec![0u64; n + 1]; n + 1];
            for r in 0..=n {
                for c in 0..=n {
                    let pr = if r < n { perm[r] } else { n };
                    let pc = if c < n { perm[c] } else { n };
                    counts[r][c] = cm.counts()[pr][pc];
                }
            }
            let permuted = ConfusionMatrix::from_counts(labels, counts);
            prop_assert!((osfm(&cm, Averaging::Macro) - osfm(&permuted, Averaging::Macro)).abs() < 1e-12);
            prop_assert!((osfm(&cm, Averaging::Micro) - osfm(&permuted, Averaging::Micro)).abs() < 1e-12);
            prop_assert!((fm(&cm, Averaging::Macro) - fm(&permuted, Averaging::Macro)).abs() < 1e-12);
            if let (Ok(a), Ok(b)) = (na(&cm), na(&permuted)) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn count_scaling_invariance(cm in arb_matrix(), scale in 1u64..9) {
            let scaled_counts: Vec<Vec<u64>> = cm
                .counts()
                .iter()
                .map(|r| r.iter().map(|&v| v * scale).collect())
                .collect();
            let scaled = ConfusionMatrix::from_counts(cm.known_labels().to_vec(), scaled_counts);
            prop_assert_eq!(osfm(&cm, Averaging::Macro), osfm(&scaled, Averaging::Macro));
            prop_assert_eq!(osfm(&cm, Averaging::Micro), osfm(&scaled, Averaging::Micro));
            prop_assert_eq!(fm(&cm, Averaging::Macro), fm(&scaled, Averaging::Macro));
            if let (Ok(a), Ok(b)) = (hna(&cm), hna(&scaled)) {
                prop_assert_eq!(a, b);
            }
        }
    }
}

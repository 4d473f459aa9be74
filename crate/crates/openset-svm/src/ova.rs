//! One-vs-all composition with unknown rejection: a test sample is unknown
//! when every binary scores it negative, otherwise it takes the label of the
//! most confident (highest raw score) binary.

use crate::binary::{
    self, escalate_lambda, train_binary, BinaryTrainConfig, Escalation, TrainedBinaryModel,
};
use crate::data::{class_labels, SparseSample};
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Per-class configuration: one shared config (external grid search) or one
/// config per class (internal grid search).
#[derive(Debug, Clone)]
pub enum OvaConfig {
    Shared(BinaryTrainConfig),
    PerClass(BTreeMap<i32, BinaryTrainConfig>),
}

impl OvaConfig {
    fn for_class(&self, label: i32) -> Result<BinaryTrainConfig> {
        match self {
            OvaConfig::Shared(cfg) => Ok(*cfg),
            OvaConfig::PerClass(map) => map
                .get(&label)
                .copied()
                .ok_or_else(|| Error::Config(format!("no config for class {label}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OvaModel {
    class_labels: Vec<i32>,
    binaries: Vec<TrainedBinaryModel>,
    all_bounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `None` is the UNKNOWN verdict.
    pub label: Option<i32>,
    pub scores: Vec<f64>,
}

impl OvaModel {
    pub fn from_parts(class_labels: Vec<i32>, binaries: Vec<TrainedBinaryModel>) -> Result<Self> {
        if class_labels.len() < 2 || class_labels.len() != binaries.len() {
            return Err(Error::Config(
                "an OVA model needs >= 2 classes, one binary each".into(),
            ));
        }
        if class_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("class labels must be sorted and distinct".into()));
        }
        let all_bounded = binaries.iter().all(|b| b.has_bounded_plos());
        Ok(Self {
            class_labels,
            binaries,
            all_bounded,
        })
    }

    pub fn class_labels(&self) -> &[i32] {
        &self.class_labels
    }

    pub fn binaries(&self) -> &[TrainedBinaryModel] {
        &self.binaries
    }

    pub fn binary_for(&self, label: i32) -> Option<&TrainedBinaryModel> {
        self.class_labels
            .iter()
            .position(|&l| l == label)
            .map(|i| &self.binaries[i])
    }

    /// True when every binary has a strictly negative bias; under OVA this is
    /// sufficient for the known-labeled open space to be bounded.
    pub fn klos_is_bounded(&self) -> bool {
        self.all_bounded
    }

    pub fn predict(&self, x: &SparseSample) -> Prediction {
        let scores: Vec<f64> = self.binaries.iter().map(|b| b.raw_score(x)).collect();
        Prediction {
            label: classify_scores(&self.class_labels, &scores),
            scores,
        }
    }

    pub fn max_feature_index(&self) -> u32 {
        self.binaries
            .iter()
            .map(|b| b.max_feature_index())
            .max()
            .unwrap_or(0)
    }
}

/// The decision rule on raw scores: UNKNOWN iff every score is negative
/// (zero counts as a positive tag), otherwise the argmax with ties broken by
/// the lowest class label. Labels must be sorted ascending.
pub fn classify_scores(class_labels: &[i32], scores: &[f64]) -> Option<i32> {
    debug_assert_eq!(class_labels.len(), scores.len());
    let mut best: Option<(i32, f64)> = None;
    for (&label, &score) in class_labels.iter().zip(scores) {
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((label, score)),
        }
    }
    match best {
        Some((label, score)) if score >= 0.0 => Some(label),
        _ => None,
    }
}

/// Train one binary per class (that class positive, the rest negative).
/// Binaries train concurrently; failures are annotated with their class.
pub fn train_ova(dataset: &[SparseSample], config: &OvaConfig) -> Result<OvaModel> {
    let labels = class_labels(dataset);
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "OVA training needs >= 2 classes, found {}",
            labels.len()
        )));
    }
    let binaries: Vec<TrainedBinaryModel> = labels
        .par_iter()
        .map(|&label| {
            let one = || -> Result<TrainedBinaryModel> {
                let cfg = config.for_class(label)?;
                let (pos, neg): (Vec<_>, Vec<_>) =
                    dataset.iter().cloned().partition(|s| s.label == label);
                train_binary(&pos, &neg, &cfg)
            };
            one().map_err(|e| Error::ClassTraining {
                label,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    OvaModel::from_parts(labels, binaries)
}

/// As [`train_ova`], but any binary that comes out with a non-negative bias
/// is retrained under lambda escalation. Returns the escalation records for
/// the classes that needed it.
pub fn train_ova_bounded(
    dataset: &[SparseSample],
    config: &OvaConfig,
    step: f64,
) -> Result<(OvaModel, Vec<(i32, u32)>)> {
    let labels = class_labels(dataset);
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "OVA training needs >= 2 classes, found {}",
            labels.len()
        )));
    }
    let results: Vec<(TrainedBinaryModel, Option<(i32, u32)>)> = labels
        .par_iter()
        .map(|&label| {
            let one = || -> Result<Escalation> {
                let cfg = config.for_class(label)?;
                let (pos, neg): (Vec<_>, Vec<_>) =
                    dataset.iter().cloned().partition(|s| s.label == label);
                escalate_lambda(&pos, &neg, &cfg, step)
            };
            let Escalation {
                model, retrains, ..
            } = one().map_err(|e| Error::ClassTraining {
                label,
                source: Box::new(e),
            })?;
            let record = (retrains > 0).then_some((label, retrains));
            Ok((model, record))
        })
        .collect::<Result<_>>()?;
    let mut binaries = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    for (model, record) in results {
        binaries.push(model);
        records.extend(record);
    }
    Ok((OvaModel::from_parts(labels, binaries)?, records))
}

/// Save a model bundle: a manifest plus one binary-model file per class.
pub fn save_bundle(dir: &Path, model: &OvaModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("ssvm-ova v1\n");
    let _ = writeln!(manifest, "classes {}", model.class_labels.len());
    let _ = writeln!(manifest, "all_bounded {}", model.all_bounded);
    for (label, binary) in model.class_labels.iter().zip(&model.binaries) {
        let file = format!("class_{label}.model");
        let _ = writeln!(manifest, "{label} {file}");
        binary::save_model(&dir.join(&file), binary)?;
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<OvaModel> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };
    let (n0, magic) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty manifest".into()))?;
    if magic.trim() != "ssvm-ova v1" {
        return Err(parse_err(n0, format!("bad magic line {magic:?}")));
    }
    let (n1, classes_line) = lines
        .next()
        .ok_or_else(|| parse_err(n0, "missing classes line".into()))?;
    let n_classes: usize = classes_line
        .strip_prefix("classes ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(n1, format!("bad classes line {classes_line:?}")))?;
    let (n2, bounded_line) = lines
        .next()
        .ok_or_else(|| parse_err(n1, "missing all_bounded line".into()))?;
    let claimed_bounded: bool = bounded_line
        .strip_prefix("all_bounded ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(n2, format!("bad all_bounded line {bounded_line:?}")))?;

    let mut class_labels = Vec::with_capacity(n_classes);
    let mut binaries = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(n2, "truncated manifest".into()))?;
        let (label_str, file) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(n, format!("bad manifest row {line:?}")))?;
        let label: i32 = label_str
            .parse()
            .map_err(|_| parse_err(n, format!("bad class label {label_str:?}")))?;
        class_labels.push(label);
        binaries.push(binary::load_model(&dir.join(file))?);
    }
    let model = OvaModel::from_parts(class_labels, binaries)?;
    if model.all_bounded != claimed_bounded {
        return Err(Error::Config(format!(
            "manifest claims all_bounded={claimed_bounded} but biases say {}",
            model.all_bounded
        )));
    }
    Ok(model)
}

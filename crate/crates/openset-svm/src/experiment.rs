//! The paired-experiment protocol: for each available-class count and trial,
//! draw an open-set split, grid-search, train, and evaluate. The same master
//! seed yields identical splits for every method, so results pair exactly.

use crate::binary::{train_binary, BinaryTrainConfig};
use crate::data::{class_labels, make_open_split_with_fraction, SparseSample};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricReport};
use crate::model_selection::{select_and_train, GridSearchPlan, GsApproach, GsRegime};
use crate::ova::{train_ova, OvaConfig};
use crate::rng;
use crate::stats::{binomial_sign_test, holm_adjust, wilcoxon_signed_rank, PairedResults};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Bias-regularized training with the negative-bias grid-search veto.
    Ssvm,
    /// Plain SVM baseline: lambda pinned to 0, no veto.
    Svm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ssvm => "ssvm",
            Method::Svm => "svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ssvm" => Some(Method::Ssvm),
            "svm" => Some(Method::Svm),
            _ => None,
        }
    }

    fn enforce_negative_bias(&self) -> bool {
        matches!(self, Method::Ssvm)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: Vec<SparseSample>,
    pub dataset_name: String,
    pub method: Method,
    pub approach: GsApproach,
    pub regime: GsRegime,
    pub acs_list: Vec<usize>,
    pub trials: u32,
    pub seed: u64,
    pub stop_eps: f64,
    /// Overrides for (C, gamma, lambda_frac) grids; defaults otherwise.
    pub grids: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub train_fraction: f64,
}

impl ExperimentConfig {
    pub fn new(dataset: Vec<SparseSample>, dataset_name: &str, method: Method) -> Self {
        Self {
            dataset,
            dataset_name: dataset_name.to_string(),
            method,
            approach: GsApproach::External,
            regime: GsRegime::Open,
            acs_list: vec![3, 6, 9, 12],
            trials: 10,
            seed: 1,
            stop_eps: 1e-3,
            grids: None,
            train_fraction: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.acs_list.is_empty() {
            return Err(Error::Config("acs list must be non-empty".into()));
        }
        let n_classes = class_labels(&self.dataset).len();
        if self.acs_list.iter().any(|&n| n >= n_classes) {
            return Err(Error::Config(format!(
                "every acs value must be below the class count {n_classes}"
            )));
        }
        Ok(())
    }

    fn plan(&self, trial_seed: u64) -> GridSearchPlan {
        let mut plan = GridSearchPlan::with_default_grids(
            self.approach,
            self.regime,
            self.method.enforce_negative_bias(),
            rng::derive_seed(trial_seed, "gridsearch"),
        );
        plan.stop_eps = self.stop_eps;
        if let Some((c, gamma, lambda)) = &self.grids {
            plan.c_grid = c.clone();
            plan.gamma_grid = gamma.clone();
            plan.lambda_frac_grid = if self.method.enforce_negative_bias() {
                lambda.clone()
            } else {
                vec![0.0]
            };
        } else if !self.method.enforce_negative_bias() {
            plan.lambda_frac_grid = vec![0.0];
        }
        plan
    }
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub method: String,
    pub dataset: String,
    pub n_acs: usize,
    pub trial: u32,
    pub metrics: MetricReport,
    pub all_bounded: bool,
    pub escalated_classes: u32,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub rows: Vec<TrialRow>,
}

/// Run the full protocol. Trials execute concurrently; the row order of the
/// output is canonical (sorted by acs then trial), so identical configs give
/// byte-identical CSVs regardless of thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let cells: Vec<(usize, u32)> = config
        .acs_list
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();

    let mut rows: Vec<TrialRow> = cells
        .par_iter()
        .map(|&(n_acs, trial)| {
            run_trial(config, n_acs, trial).map_err(|e| Error::Experiment {
                context: format!("acs {n_acs} trial {trial}"),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.n_acs, r.trial));
    Ok(ExperimentResults { rows })
}

fn run_trial(config: &ExperimentConfig, n_acs: usize, trial: u32) -> Result<TrialRow> {
    // The trial seed depends only on (master seed, acs, trial), never on the
    // method, so paired methods see identical splits.
    let trial_seed = rng::derive_seed(config.seed, &format!("trial/{n_acs}/{trial}"));
    let split = make_open_split_with_fraction(
        &config.dataset,
        n_acs,
        trial_seed,
        config.train_fraction,
    )?;
    let plan = config.plan(trial_seed);
    let (model, report) = select_and_train(&split.train, &plan)?;

    let mut cm = ConfusionMatrix::new(model.class_labels().to_vec());
    for s in &split.test {
        cm.record(s.label, model.predict(s).label);
    }
    let metrics = MetricReport::compute(&cm)?;
    Ok(TrialRow {
        method: config.method.name().to_string(),
        dataset: config.dataset_name.clone(),
        n_acs,
        trial,
        metrics,
        all_bounded: model.klos_is_bounded(),
        escalated_classes: report.escalations.len() as u32,
    })
}

pub const RESULTS_HEADER: &str = "method,dataset,n_acs,trial,aks,aus,na,hna,osfm_macro,osfm_micro,fm_macro,fm_micro,all_bounded,escalated_classes";

pub fn results_csv(results: &ExperimentResults) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in &results.rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.dataset,
            r.n_acs,
            r.trial,
            m.aks,
            m.aus,
            m.na,
            m.hna,
            m.osfm_macro,
            m.osfm_micro,
            m.fm_macro,
            m.fm_micro,
            r.all_bounded,
            r.escalated_classes
        );
    }
    out
}

/// Per-(dataset, acs) means over trials, one row per cell.
pub fn means_csv(results: &ExperimentResults) -> String {
    let mut out = String::from(
        "method,dataset,n_acs,trials,aks,aus,na,hna,osfm_macro,osfm_micro,fm_macro,fm_micro\n",
    );
    for ((method, dataset, n_acs), rows) in group_cells(&results.rows) {
        let k = rows.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            method,
            dataset,
            n_acs,
            rows.len(),
            mean(|m| m.aks),
            mean(|m| m.aus),
            mean(|m| m.na),
            mean(|m| m.hna),
            mean(|m| m.osfm_macro),
            mean(|m| m.osfm_micro),
            mean(|m| m.fm_macro),
            mean(|m| m.fm_micro)
        );
    }
    out
}

fn group_cells(rows: &[TrialRow]) -> BTreeMap<(String, String, usize), Vec<&TrialRow>> {
    let mut map: BTreeMap<(String, String, usize), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        map.entry((r.method.clone(), r.dataset.clone(), r.n_acs))
            .or_default()
            .push(r);
    }
    map
}

/// Parse a results CSV produced by [`results_csv`].
pub fn parse_results_csv(text: &str) -> Result<Vec<TrialRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty results csv".into(),
    })?;
    if header != RESULTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("expected 14 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad float {s:?}"),
            })
        };
        rows.push(TrialRow {
            method: fields[0].to_string(),
            dataset: fields[1].to_string(),
            n_acs: fields[2].parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad n_acs {:?}", fields[2]),
            })?,
            trial: fields[3].parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad trial {:?}", fields[3]),
            })?,
            metrics: MetricReport {
                aks: parse_f(fields[4])?,
                aus: parse_f(fields[5])?,
                na: parse_f(fields[6])?,
                hna: parse_f(fields[7])?,
                osfm_macro: parse_f(fields[8])?,
                osfm_micro: parse_f(fields[9])?,
                fm_macro: parse_f(fields[10])?,
                fm_micro: parse_f(fields[11])?,
            },
            all_bounded: fields[12].parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad bool {:?}", fields[12]),
            })?,
            escalated_classes: fields[13].parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad count {:?}", fields[13]),
            })?,
        });
    }
    Ok(rows)
}

const MEASURES: [(&str, fn(&MetricReport) -> f64); 8] = [
    ("aks", |m| m.aks),
    ("aus", |m| m.aus),
    ("na", |m| m.na),
    ("hna", |m| m.hna),
    ("osfm_macro", |m| m.osfm_macro),
    ("osfm_micro", |m| m.osfm_micro),
    ("fm_macro", |m| m.fm_macro),
    ("fm_micro", |m| m.fm_micro),
];

/// Compare two methods' trial rows: per-cell means are paired per
/// (dataset, acs), Wilcoxon p-values are Holm-adjusted across the eight
/// measures, and the binomial sign test counts per-cell wins.
pub fn compare_csv(rows_a: &[TrialRow], rows_b: &[TrialRow]) -> Result<String> {
    let name = |rows: &[TrialRow]| rows.first().map(|r| r.method.clone());
    let (Some(name_a), Some(name_b)) = (name(rows_a), name(rows_b)) else {
        return Err(Error::Config("both result sets must be non-empty".into()));
    };

    let cell_means = |rows: &[TrialRow]| -> BTreeMap<(String, usize), Vec<f64>> {
        let mut grouped: BTreeMap<(String, usize), Vec<&TrialRow>> = BTreeMap::new();
        for r in rows {
            grouped.entry((r.dataset.clone(), r.n_acs)).or_default().push(r);
        }
        grouped
            .into_iter()
            .map(|(key, rs)| {
                let k = rs.len() as f64;
                let means = MEASURES
                    .iter()
                    .map(|(_, f)| rs.iter().map(|r| f(&r.metrics)).sum::<f64>() / k)
                    .collect();
                (key, means)
            })
            .collect()
    };
    let means_a = cell_means(rows_a);
    let means_b = cell_means(rows_b);
    let cells: Vec<&(String, usize)> = means_a.keys().filter(|k| means_b.contains_key(k)).collect();
    if cells.is_empty() {
        return Err(Error::Config("no shared (dataset, acs) cells to pair".into()));
    }

    struct Line {
        measure: &'static str,
        paired: PairedResults,
        mean_a: f64,
        mean_b: f64,
        raw_p: Option<f64>,
        binom_p: f64,
        direction: &'static str,
    }
    let mut lines = Vec::new();
    for (mi, (measure, _)) in MEASURES.iter().enumerate() {
        let paired = PairedResults {
            label_a: name_a.clone(),
            label_b: name_b.clone(),
            values: cells
                .iter()
                .map(|key| (means_a[*key][mi], means_b[*key][mi]))
                .collect(),
        };
        let n = paired.values.len() as f64;
        let mean_a = paired.values.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_b = paired.values.iter().map(|p| p.1).sum::<f64>() / n;
        let raw_p = wilcoxon_signed_rank(&paired.values).ok().map(|w| w.p_value);
        let binom_p = binomial_sign_test(paired.wins_for_a(), paired.decided());
        let direction = if mean_a > mean_b {
            "a"
        } else if mean_b > mean_a {
            "b"
        } else {
            "tie"
        };
        lines.push(Line {
            measure,
            paired,
            mean_a,
            mean_b,
            raw_p,
            binom_p,
            direction,
        });
    }

    let testable: Vec<f64> = lines.iter().filter_map(|l| l.raw_p).collect();
    let adjusted = holm_adjust(&testable);
    let mut adj_iter = adjusted.into_iter();

    let mut out = String::from(
        "method_a,method_b,measure,n_pairs,sufficient,mean_a,mean_b,wins_a,wins_b,wilcoxon_p,holm_p,binomial_p,direction\n",
    );
    for l in lines {
        let (raw, holm) = match l.raw_p {
            Some(p) => (format!("{p}"), format!("{}", adj_iter.next().unwrap())),
            None => ("NA".to_string(), "NA".to_string()),
        };
        let wins_b = l.paired.decided() - l.paired.wins_for_a();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            name_a,
            name_b,
            l.measure,
            l.paired.values.len(),
            l.paired.sufficient(),
            l.mean_a,
            l.mean_b,
            l.paired.wins_for_a(),
            wins_b,
            raw,
            holm,
            l.binom_p,
            l.direction
        );
    }
    Ok(out)
}

/// Bias-sign frequencies at lambda = 0 (the plain-SVM view of the data).
#[derive(Debug, Clone)]
pub struct BiasReport {
    /// (class label, bias) for each OVA binary.
    pub ova: Vec<(i32, f64)>,
    pub ova_negative_fraction: f64,
    /// (positive label, negative label, bias) for each OVO pair.
    pub ovo: Vec<(i32, i32, f64)>,
    pub ovo_negative_fraction: Option<f64>,
}

pub fn bias_sign_report(
    dataset: &[SparseSample],
    config: &BinaryTrainConfig,
    include_ovo: bool,
) -> Result<BiasReport> {
    let mut cfg = *config;
    cfg.lambda_frac = 0.0;
    let model = train_ova(dataset, &OvaConfig::Shared(cfg))?;
    let ova: Vec<(i32, f64)> = model
        .class_labels()
        .iter()
        .zip(model.binaries())
        .map(|(&l, b)| (l, b.bias))
        .collect();
    let ova_negative_fraction =
        ova.iter().filter(|(_, b)| *b < 0.0).count() as f64 / ova.len() as f64;

    let mut ovo = Vec::new();
    let mut ovo_negative_fraction = None;
    if include_ovo {
        let labels = class_labels(dataset);
        let pairs: Vec<(i32, i32)> = labels
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| labels[i + 1..].iter().map(move |&b| (a, b)))
            .collect();
        ovo = pairs
            .par_iter()
            .map(|&(a, b)| -> Result<(i32, i32, f64)> {
                let pos: Vec<SparseSample> =
                    dataset.iter().filter(|s| s.label == a).cloned().collect();
                let neg: Vec<SparseSample> =
                    dataset.iter().filter(|s| s.label == b).cloned().collect();
                let model = train_binary(&pos, &neg, &cfg)?;
                Ok((a, b, model.bias))
            })
            .collect::<Result<_>>()?;
        ovo_negative_fraction =
            Some(ovo.iter().filter(|(_, _, b)| *b < 0.0).count() as f64 / ovo.len() as f64);
    }
    Ok(BiasReport {
        ova,
        ova_negative_fraction,
        ovo,
        ovo_negative_fraction,
    })
}

pub fn bias_report_text(report: &BiasReport) -> String {
    let mut out = String::from("scheme,positive,negative,bias,bias_negative\n");
    for (label, bias) in &report.ova {
        let _ = writeln!(out, "ova,{label},rest,{bias},{}", *bias < 0.0);
    }
    for (a, b, bias) in &report.ovo {
        let _ = writeln!(out, "ovo,{a},{b},{bias},{}", *bias < 0.0);
    }
    let _ = writeln!(out, "summary,ova,,{},", report.ova_negative_fraction);
    if let Some(frac) = report.ovo_negative_fraction {
        let _ = writeln!(out, "summary,ovo,,{frac},");
    }
    out
}

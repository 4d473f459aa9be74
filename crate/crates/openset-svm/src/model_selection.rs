//! Grid search in the four regimes {internal, external} x {closed, open},
//! with the rule that candidates whose trained model has a non-negative bias
//! score negative infinity on validation.

use crate::binary::{train_binary, BinaryTrainConfig};
use crate::data::{class_labels, SparseSample};
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix};
use crate::ova::{train_ova, train_ova_bounded, OvaConfig, OvaModel};
use crate::rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// Lambda escalation step used when the selected parameters fail to keep a
/// negative bias on the full training set.
const ESCALATION_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsApproach {
    /// One grid search at the multiclass level; all binaries share params.
    External,
    /// Each binary classifier runs its own grid search.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsRegime {
    Closed,
    /// The fit set's classes are a proper subset of the training classes,
    /// simulating unknowns in validation.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMeasure {
    Accuracy,
    Na,
    Hna,
}

#[derive(Debug, Clone)]
pub struct GridSearchPlan {
    pub approach: GsApproach,
    pub regime: GsRegime,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub lambda_frac_grid: Vec<f64>,
    pub measure: ValidationMeasure,
    pub rng_seed: u64,
    /// The SSVM veto: candidates with any non-negative bias score -inf.
    pub enforce_negative_bias: bool,
    /// Independent fit/validation splits averaged per grid point.
    pub repeats: u32,
    pub stop_eps: f64,
    pub max_iter: u64,
}

impl GridSearchPlan {
    /// Conventional exponential grids; the lambda grid starts at 0 so the
    /// plain-SVM point is always searched. The default measure is plain
    /// accuracy for closed regimes and normalized accuracy for open ones.
    pub fn with_default_grids(
        approach: GsApproach,
        regime: GsRegime,
        enforce_negative_bias: bool,
        rng_seed: u64,
    ) -> Self {
        let c_grid = (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect();
        let gamma_grid = (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect();
        let lambda_frac_grid = if enforce_negative_bias {
            (0..10).map(|k| k as f64 / 10.0).collect()
        } else {
            vec![0.0]
        };
        let measure = match regime {
            GsRegime::Closed => ValidationMeasure::Accuracy,
            GsRegime::Open => ValidationMeasure::Na,
        };
        Self {
            approach,
            regime,
            c_grid,
            gamma_grid,
            lambda_frac_grid,
            measure,
            rng_seed,
            enforce_negative_bias,
            repeats: 1,
            stop_eps: 1e-3,
            max_iter: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.gamma_grid.is_empty() || self.lambda_frac_grid.is_empty()
        {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        if !self.lambda_frac_grid.contains(&0.0) {
            return Err(Error::Config("lambda_frac grid must contain 0".into()));
        }
        if self
            .lambda_frac_grid
            .iter()
            .any(|&l| !(0.0..1.0).contains(&l))
        {
            return Err(Error::Config("lambda_frac values must be in [0, 1)".into()));
        }
        if self.c_grid.iter().any(|&c| !(c > 0.0)) || self.gamma_grid.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Config("C and gamma values must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }

    fn config_for(&self, point: GridPoint) -> BinaryTrainConfig {
        BinaryTrainConfig {
            c: point.c,
            gamma: point.gamma,
            lambda_frac: point.lambda_frac,
            stop_eps: self.stop_eps,
            max_iter: self.max_iter,
        }
    }

    fn points(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &c in &self.c_grid {
            for &gamma in &self.gamma_grid {
                for &lambda_frac in &self.lambda_frac_grid {
                    points.push(GridPoint {
                        c,
                        gamma,
                        lambda_frac,
                    });
                }
            }
        }
        points
    }
}

/// A fit/validation partition of the training indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub fit_classes: BTreeSet<i32>,
    pub fit_samples: Vec<usize>,
    pub val_samples: Vec<usize>,
}

fn indices_by_class(x: &[SparseSample]) -> BTreeMap<i32, Vec<usize>> {
    let mut map: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, s) in x.iter().enumerate() {
        map.entry(s.label).or_default().push(i);
    }
    map
}

/// Shuffle and split one stratum 80/20, keeping at least one sample on each
/// side.
fn split_stratum(mut indices: Vec<usize>, seed: u64, stream_label: &str) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::stream(seed, stream_label);
    indices.shuffle(&mut rng);
    let n_fit = (indices.len() * 4 / 5).max(1);
    let val = indices.split_off(n_fit);
    (indices, val)
}

fn finish(mut spec: SplitSpec) -> SplitSpec {
    spec.fit_samples.sort_unstable();
    spec.val_samples.sort_unstable();
    spec
}

/// External closed-set split: a per-class stratified 80/20 partition; every
/// class is represented in the fit set.
pub fn split_external_closed(x: &[SparseSample], seed: u64) -> Result<SplitSpec> {
    let by_class = indices_by_class(x);
    if by_class.len() < 2 {
        return Err(Error::Config("need >= 2 classes".into()));
    }
    let mut spec = SplitSpec {
        fit_classes: by_class.keys().copied().collect(),
        fit_samples: Vec::new(),
        val_samples: Vec::new(),
    };
    for (&label, indices) in &by_class {
        if indices.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: indices.len(),
            });
        }
        let (fit, val) = split_stratum(
            indices.clone(),
            seed,
            &format!("gs-split/external-closed/class/{label}"),
        );
        spec.fit_samples.extend(fit);
        spec.val_samples.extend(val);
    }
    Ok(finish(spec))
}

/// External open-set split: floor(n/2) classes go wholly to validation as
/// simulated unknowns, the remaining classes split 80/20.
pub fn split_external_open(x: &[SparseSample], seed: u64) -> Result<SplitSpec> {
    let by_class = indices_by_class(x);
    let n = by_class.len();
    if n < 2 {
        return Err(Error::Config("need >= 2 classes".into()));
    }
    let mut labels: Vec<i32> = by_class.keys().copied().collect();
    let mut rng = rng::stream(seed, "gs-split/external-open/classes");
    labels.shuffle(&mut rng);
    let held_out: BTreeSet<i32> = labels[..n / 2].iter().copied().collect();

    let mut spec = SplitSpec {
        fit_classes: labels[n / 2..].iter().copied().collect(),
        fit_samples: Vec::new(),
        val_samples: Vec::new(),
    };
    for (&label, indices) in &by_class {
        if held_out.contains(&label) {
            spec.val_samples.extend(indices.iter().copied());
            continue;
        }
        if indices.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: indices.len(),
            });
        }
        let (fit, val) = split_stratum(
            indices.clone(),
            seed,
            &format!("gs-split/external-open/class/{label}"),
        );
        spec.fit_samples.extend(fit);
        spec.val_samples.extend(val);
    }
    Ok(finish(spec))
}

/// Internal closed-set split for one binary problem: stratified 80/20 on the
/// positive-vs-rest view.
pub fn split_internal_closed(
    x: &[SparseSample],
    positive_label: i32,
    seed: u64,
) -> Result<SplitSpec> {
    let pos: Vec<usize> = (0..x.len()).filter(|&i| x[i].label == positive_label).collect();
    let neg: Vec<usize> = (0..x.len()).filter(|&i| x[i].label != positive_label).collect();
    if pos.len() < 2 {
        return Err(Error::ClassTooSmall {
            label: positive_label,
            count: pos.len(),
        });
    }
    if neg.len() < 2 {
        return Err(Error::Config(format!(
            "negative pool for class {positive_label} has {} samples; need >= 2",
            neg.len()
        )));
    }
    let (fit_p, val_p) = split_stratum(
        pos,
        seed,
        &format!("gs-split/internal-closed/{positive_label}/pos"),
    );
    let (fit_n, val_n) = split_stratum(
        neg,
        seed,
        &format!("gs-split/internal-closed/{positive_label}/neg"),
    );
    let mut spec = SplitSpec {
        fit_classes: BTreeSet::new(),
        fit_samples: [fit_p, fit_n].concat(),
        val_samples: [val_p, val_n].concat(),
    };
    spec.fit_classes = spec.fit_samples.iter().map(|&i| x[i].label).collect();
    Ok(finish(spec))
}

/// Internal open-set split: floor((n-1)/2) negative classes go wholly to
/// validation; the rest (with the positive class) split 80/20 stratified on
/// the binary view. With n = 2 nothing is held out and this degenerates to
/// the closed form.
pub fn split_internal_open(
    x: &[SparseSample],
    positive_label: i32,
    seed: u64,
) -> Result<SplitSpec> {
    let by_class = indices_by_class(x);
    if !by_class.contains_key(&positive_label) {
        return Err(Error::Config(format!("class {positive_label} not in dataset")));
    }
    let mut neg_labels: Vec<i32> = by_class.keys().copied().filter(|&l| l != positive_label).collect();
    let mut rng = rng::stream(seed, &format!("gs-split/internal-open/classes/{positive_label}"));
    neg_labels.shuffle(&mut rng);
    let held_out: BTreeSet<i32> = neg_labels[..neg_labels.len() / 2].iter().copied().collect();

    let mut held_indices = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&label, indices) in &by_class {
        if held_out.contains(&label) {
            held_indices.extend(indices.iter().copied());
        } else if label == positive_label {
            pos.extend(indices.iter().copied());
        } else {
            neg.extend(indices.iter().copied());
        }
    }
    if pos.len() < 2 {
        return Err(Error::ClassTooSmall {
            label: positive_label,
            count: pos.len(),
        });
    }
    if neg.len() < 2 {
        return Err(Error::Config(format!(
            "negative pool for class {positive_label} has {} samples; need >= 2",
            neg.len()
        )));
    }
    let (fit_p, val_p) = split_stratum(
        pos,
        seed,
        &format!("gs-split/internal-open/{positive_label}/pos"),
    );
    let (fit_n, val_n) = split_stratum(
        neg,
        seed,
        &format!("gs-split/internal-open/{positive_label}/neg"),
    );
    let mut spec = SplitSpec {
        fit_classes: BTreeSet::new(),
        fit_samples: [fit_p, fit_n].concat(),
        val_samples: [val_p, val_n, held_indices].concat(),
    };
    spec.fit_classes = spec.fit_samples.iter().map(|&i| x[i].label).collect();
    Ok(finish(spec))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub lambda_frac: f64,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub point: GridPoint,
    pub score: f64,
    /// (class label, bias negative) across the candidate's binaries.
    pub bias_negative: Vec<(i32, bool)>,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: GridPoint,
    pub best_score: f64,
    pub rows: Vec<GridRow>,
}

/// Tie-break key: higher score, then larger gamma, then smaller C, then
/// smaller lambda_frac.
fn better(a: (f64, GridPoint), b: (f64, GridPoint)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1.gamma != b.1.gamma {
        return a.1.gamma > b.1.gamma;
    }
    if a.1.c != b.1.c {
        return a.1.c < b.1.c;
    }
    a.1.lambda_frac < b.1.lambda_frac
}

fn pick_best(rows: &[GridRow]) -> Result<(GridPoint, f64)> {
    let mut best: Option<(f64, GridPoint)> = None;
    for row in rows {
        let cand = (row.score, row.point);
        if best.is_none_or(|b| better(cand, b)) {
            best = Some(cand);
        }
    }
    let (score, point) = best.ok_or(Error::AllRejected)?;
    if score == f64::NEG_INFINITY {
        return Err(Error::AllRejected);
    }
    Ok((point, score))
}

fn materialize(x: &[SparseSample], indices: &[usize]) -> Vec<SparseSample> {
    indices.iter().map(|&i| x[i].clone()).collect()
}

fn external_split(x: &[SparseSample], plan: &GridSearchPlan, rep: u32) -> Result<SplitSpec> {
    let seed = rng::derive_seed(plan.rng_seed, &format!("gs/rep/{rep}"));
    match plan.regime {
        GsRegime::Closed => split_external_closed(x, seed),
        GsRegime::Open => split_external_open(x, seed),
    }
}

fn internal_split(
    x: &[SparseSample],
    positive_label: i32,
    plan: &GridSearchPlan,
    rep: u32,
) -> Result<SplitSpec> {
    let seed = rng::derive_seed(plan.rng_seed, &format!("gs/rep/{rep}"));
    match plan.regime {
        GsRegime::Closed => split_internal_closed(x, positive_label, seed),
        GsRegime::Open => split_internal_open(x, positive_label, seed),
    }
}

fn score_multiclass(
    model: &OvaModel,
    x: &[SparseSample],
    val: &[usize],
    measure: ValidationMeasure,
) -> Result<f64> {
    let mut cm = ConfusionMatrix::new(model.class_labels().to_vec());
    for &i in val {
        cm.record(x[i].label, model.predict(&x[i]).label);
    }
    match measure {
        ValidationMeasure::Accuracy => {
            let counts = cm.counts();
            let n = cm.known_labels().len();
            let correct: u64 = (0..=n).map(|k| counts[k][k]).sum();
            Ok(correct as f64 / cm.total() as f64)
        }
        ValidationMeasure::Na => metrics::na(&cm),
        ValidationMeasure::Hna => metrics::hna(&cm),
    }
}

/// External grid search: one shared parameter point for all binaries,
/// scored at the multiclass level.
pub fn grid_search_external(x: &[SparseSample], plan: &GridSearchPlan) -> Result<GridSearchOutcome> {
    plan.validate()?;
    let n_classes = class_labels(x).len();
    if n_classes < 2 {
        return Err(Error::Config("need >= 2 classes".into()));
    }
    if plan.regime == GsRegime::Open && n_classes < 3 {
        return Err(Error::InsufficientClasses(
            "external open-set grid search needs >= 3 classes (half are held out \
             and the fit set must keep >= 2)"
                .into(),
        ));
    }
    let splits: Vec<SplitSpec> = (0..plan.repeats)
        .map(|r| external_split(x, plan, r))
        .collect::<Result<_>>()?;
    let fits: Vec<Vec<SparseSample>> = splits
        .iter()
        .map(|s| materialize(x, &s.fit_samples))
        .collect();

    let rows: Vec<GridRow> = plan
        .points()
        .into_par_iter()
        .map(|point| -> Result<GridRow> {
            let start = Instant::now();
            let cfg = plan.config_for(point);
            let mut score_sum = 0.0;
            let mut bias_negative: BTreeMap<i32, bool> = BTreeMap::new();
            for (split, fit) in splits.iter().zip(&fits) {
                let model = train_ova(fit, &OvaConfig::Shared(cfg))?;
                for (label, binary) in model.class_labels().iter().zip(model.binaries()) {
                    let entry = bias_negative.entry(*label).or_insert(true);
                    *entry = *entry && binary.has_bounded_plos();
                }
                let rep_score = if plan.enforce_negative_bias && !model.klos_is_bounded() {
                    f64::NEG_INFINITY
                } else {
                    score_multiclass(&model, x, &split.val_samples, plan.measure)?
                };
                score_sum += rep_score;
            }
            Ok(GridRow {
                point,
                score: score_sum / plan.repeats as f64,
                bias_negative: bias_negative.into_iter().collect(),
                wall: start.elapsed(),
            })
        })
        .collect::<Result<_>>()?;

    let (best, best_score) = pick_best(&rows)?;
    Ok(GridSearchOutcome {
        best,
        best_score,
        rows,
    })
}

/// Internal grid search for one binary classifier (positive vs all-else).
/// Validation samples from held-out classes count as negatives.
pub fn grid_search_internal(
    x: &[SparseSample],
    positive_label: i32,
    plan: &GridSearchPlan,
) -> Result<GridSearchOutcome> {
    plan.validate()?;
    let splits: Vec<SplitSpec> = (0..plan.repeats)
        .map(|r| internal_split(x, positive_label, plan, r))
        .collect::<Result<_>>()?;
    struct BinarySplit {
        pos: Vec<SparseSample>,
        neg: Vec<SparseSample>,
    }
    let fits: Vec<BinarySplit> = splits
        .iter()
        .map(|s| {
            let (pos, neg): (Vec<_>, Vec<_>) = s
                .fit_samples
                .iter()
                .map(|&i| x[i].clone())
                .partition(|smp| smp.label == positive_label);
            BinarySplit { pos, neg }
        })
        .collect();

    let rows: Vec<GridRow> = plan
        .points()
        .into_par_iter()
        .map(|point| -> Result<GridRow> {
            let start = Instant::now();
            let cfg = plan.config_for(point);
            let mut score_sum = 0.0;
            let mut all_negative = true;
            for (split, fit) in splits.iter().zip(&fits) {
                let model = train_binary(&fit.pos, &fit.neg, &cfg)?;
                all_negative = all_negative && model.has_bounded_plos();
                let rep_score = if plan.enforce_negative_bias && !model.has_bounded_plos() {
                    f64::NEG_INFINITY
                } else {
                    let mut correct = 0usize;
                    for &i in &split.val_samples {
                        let truth = x[i].label == positive_label;
                        let tagged = model.raw_score(&x[i]) >= 0.0;
                        correct += usize::from(truth == tagged);
                    }
                    correct as f64 / split.val_samples.len() as f64
                };
                score_sum += rep_score;
            }
            Ok(GridRow {
                point,
                score: score_sum / plan.repeats as f64,
                bias_negative: vec![(positive_label, all_negative)],
                wall: start.elapsed(),
            })
        })
        .collect::<Result<_>>()?;

    let (best, best_score) = pick_best(&rows)?;
    Ok(GridSearchOutcome {
        best,
        best_score,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub shared: Option<GridSearchOutcome>,
    pub per_class: BTreeMap<i32, GridSearchOutcome>,
    /// Classes that needed lambda escalation after retraining on the full
    /// training set, with the retrain counts.
    pub escalations: Vec<(i32, u32)>,
}

/// Run the planned grid search and train the final model on the whole
/// training set. Under the negative-bias rule, any binary that comes back
/// non-negative on the full set is escalated and the event recorded.
pub fn select_and_train(
    x: &[SparseSample],
    plan: &GridSearchPlan,
) -> Result<(OvaModel, SelectionReport)> {
    plan.validate()?;
    let labels = class_labels(x);
    let (config, shared, per_class) = match plan.approach {
        GsApproach::External => {
            let outcome = grid_search_external(x, plan)?;
            let cfg = plan.config_for(outcome.best);
            (OvaConfig::Shared(cfg), Some(outcome), BTreeMap::new())
        }
        GsApproach::Internal => {
            let outcomes: Vec<(i32, GridSearchOutcome)> = labels
                .par_iter()
                .map(|&label| Ok((label, grid_search_internal(x, label, plan)?)))
                .collect::<Result<_>>()?;
            let mut map = BTreeMap::new();
            let mut cfgs = BTreeMap::new();
            for (label, outcome) in outcomes {
                cfgs.insert(label, plan.config_for(outcome.best));
                map.insert(label, outcome);
            }
            (OvaConfig::PerClass(cfgs), None, map)
        }
    };

    let (model, escalations) = if plan.enforce_negative_bias {
        train_ova_bounded(x, &config, ESCALATION_STEP)?
    } else {
        (train_ova(x, &config)?, Vec::new())
    };
    Ok((
        model,
        SelectionReport {
            shared,
            per_class,
            escalations,
        },
    ))
}

/// Grid-search report: one CSV row per grid point.
pub fn grid_report_csv(outcome: &GridSearchOutcome) -> String {
    let mut out = String::from("c,gamma,lambda_frac,score,bias_signs,wall_ms\n");
    for row in &outcome.rows {
        let signs: Vec<String> = row
            .bias_negative
            .iter()
            .map(|(label, neg)| format!("{label}:{}", if *neg { "neg" } else { "nonneg" }))
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.point.c,
            row.point.gamma,
            row.point.lambda_frac,
            row.score,
            signs.join("|"),
            row.wall.as_millis()
        );
    }
    out
}

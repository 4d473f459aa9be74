//! One binary classifier: train via the constrained dual, score test points,
//! and expose the bounded-open-space predicate (the bias sign).

use crate::data::SparseSample;
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};
use crate::solver::{solve, DualProblem};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Support vectors with |alpha| at or below this fraction of C contribute
/// nothing measurable and are dropped from the stored model.
const SV_DROP_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryTrainConfig {
    pub c: f64,
    pub gamma: f64,
    /// Bias-regularization weight as a fraction of its supremum `C * m_p`,
    /// so any value in [0, 1) is feasible for every problem.
    pub lambda_frac: f64,
    pub stop_eps: f64,
    pub max_iter: u64,
}

impl BinaryTrainConfig {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            lambda_frac: 0.0,
            stop_eps: 1e-3,
            max_iter: 10_000_000,
        }
    }

    pub fn with_lambda_frac(mut self, lambda_frac: f64) -> Self {
        self.lambda_frac = lambda_frac;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(0.0..1.0).contains(&self.lambda_frac) {
            return Err(Error::Config(format!(
                "lambda_frac must be in [0, 1), got {}",
                self.lambda_frac
            )));
        }
        KernelParams::new(self.gamma)?;
        if !(self.stop_eps > 0.0) {
            return Err(Error::Config("stop_eps must be positive".into()));
        }
        Ok(())
    }
}

/// A trained binary model: the support-vector expansion and its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBinaryModel {
    support_vectors: Vec<SparseSample>,
    sv_coeff: Vec<f64>,
    pub bias: f64,
    pub kernel_params: KernelParams,
    pub trained_lambda: f64,
    pub trained_c: f64,
    pub positive_count: usize,
}

impl TrainedBinaryModel {
    pub fn support_vectors(&self) -> &[SparseSample] {
        &self.support_vectors
    }

    /// Expansion coefficients `alpha_i * y_i`, aligned with the SVs.
    pub fn sv_coeff(&self) -> &[f64] {
        &self.sv_coeff
    }

    /// Pre-sign decision value `sum_i coeff_i K(sv_i, x) + b`.
    pub fn raw_score(&self, x: &SparseSample) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.sv_coeff)
            .map(|(sv, &coef)| coef * kernel::rbf(sv, x, self.kernel_params))
            .sum::<f64>()
            + self.bias
    }

    /// Positively-labeled open space is bounded iff the bias is strictly
    /// negative; a zero bias leaves the far field on the sign boundary and
    /// counts as unbounded.
    pub fn has_bounded_plos(&self) -> bool {
        self.bias < 0.0
    }

    /// Sum of |coeff|; with the far-field kernel bound it caps how far a
    /// score can sit from the bias.
    pub fn coeff_mass(&self) -> f64 {
        self.sv_coeff.iter().map(|c| c.abs()).sum()
    }

    pub fn max_feature_index(&self) -> u32 {
        self.support_vectors
            .iter()
            .map(|s| s.max_index())
            .max()
            .unwrap_or(0)
    }
}

/// Train one binary classifier with `positives` labeled +1 and `negatives`
/// labeled -1.
pub fn train_binary(
    positives: &[SparseSample],
    negatives: &[SparseSample],
    config: &BinaryTrainConfig,
) -> Result<TrainedBinaryModel> {
    config.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Config(
            "both classes must be non-empty for binary training".into(),
        ));
    }
    let mut samples: Vec<SparseSample> = Vec::with_capacity(positives.len() + negatives.len());
    samples.extend_from_slice(positives);
    samples.extend_from_slice(negatives);
    let mut labels = vec![1i8; positives.len()];
    labels.extend(std::iter::repeat_n(-1i8, negatives.len()));

    let m_p = positives.len();
    let lambda = config.lambda_frac * config.c * m_p as f64;
    let kernel_params = KernelParams::new(config.gamma)?;
    let problem = DualProblem::new(
        &samples,
        &labels,
        config.c,
        lambda,
        kernel_params,
        config.stop_eps,
        config.max_iter,
    )?;
    let solution = solve(&problem)?;

    let threshold = SV_DROP_FRACTION * config.c;
    let mut support_vectors = Vec::new();
    let mut sv_coeff = Vec::new();
    for (i, &a) in solution.alpha.iter().enumerate() {
        if a.abs() > threshold {
            support_vectors.push(samples[i].clone());
            sv_coeff.push(a * f64::from(labels[i]));
        }
    }
    Ok(TrainedBinaryModel {
        support_vectors,
        sv_coeff,
        bias: solution.bias,
        kernel_params,
        trained_lambda: lambda,
        trained_c: config.c,
        positive_count: m_p,
    })
}

/// Outcome of a lambda escalation run.
#[derive(Debug)]
pub struct Escalation {
    pub model: TrainedBinaryModel,
    pub retrains: u32,
    pub lambda_frac: f64,
}

/// Train, then retrain with `lambda_frac <- lambda_frac + step * (1 -
/// lambda_frac)` until the bias goes negative. A model that already has a
/// negative bias is returned with zero retrains.
pub fn escalate_lambda(
    positives: &[SparseSample],
    negatives: &[SparseSample],
    config: &BinaryTrainConfig,
    step: f64,
) -> Result<Escalation> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::Config(format!(
            "escalation step must be in (0, 1), got {step}"
        )));
    }
    let mut cfg = *config;
    let mut model = train_binary(positives, negatives, &cfg)?;
    let mut retrains = 0u32;
    while model.bias >= 0.0 {
        let next = cfg.lambda_frac + step * (1.0 - cfg.lambda_frac);
        if next > 1.0 - 1e-6 {
            return Err(Error::EscalationFailed {
                bias: model.bias,
                lambda_frac: cfg.lambda_frac,
            });
        }
        cfg.lambda_frac = next;
        model = train_binary(positives, negatives, &cfg)?;
        retrains += 1;
    }
    Ok(Escalation {
        model,
        retrains,
        lambda_frac: cfg.lambda_frac,
    })
}

/// Serialize a model as line-oriented text: a key/value header, then one SV
/// per line as `coeff idx:val idx:val ...`. Floats use shortest round-trip
/// formatting, so save/load is exact.
pub fn model_to_string(model: &TrainedBinaryModel) -> String {
    let mut out = String::from("ssvm-binary v1\n");
    let _ = writeln!(out, "gamma {}", model.kernel_params.gamma());
    let _ = writeln!(out, "bias {}", model.bias);
    let _ = writeln!(out, "lambda {}", model.trained_lambda);
    let _ = writeln!(out, "c {}", model.trained_c);
    let _ = writeln!(out, "positive_count {}", model.positive_count);
    let _ = writeln!(out, "sv_count {}", model.support_vectors.len());
    for (sv, coef) in model.support_vectors.iter().zip(&model.sv_coeff) {
        let _ = write!(out, "{coef}");
        for &(i, v) in sv.features() {
            let _ = write!(out, " {i}:{v}");
        }
        out.push('\n');
    }
    out
}

pub fn model_from_string(text: &str) -> Result<TrainedBinaryModel> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };
    let (n0, magic) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty model file".into()))?;
    if magic.trim() != "ssvm-binary v1" {
        return Err(parse_err(n0, format!("bad magic line {magic:?}")));
    }

    let mut header = std::collections::HashMap::new();
    for _ in 0..5 {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(n0, "truncated header".into()))?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(n, format!("bad header line {line:?}")))?;
        header.insert(key.to_string(), (n, value.to_string()));
    }
    let field = |key: &str| -> Result<(usize, String)> {
        header
            .get(key)
            .cloned()
            .ok_or_else(|| parse_err(n0, format!("missing header field {key}")))
    };
    let float = |key: &str| -> Result<f64> {
        let (n, v) = field(key)?;
        v.parse::<f64>()
            .map_err(|_| parse_err(n, format!("bad {key} value {v:?}")))
    };
    let gamma = float("gamma")?;
    let bias = float("bias")?;
    let lambda = float("lambda")?;
    let c = float("c")?;
    let (n_mp, mp_str) = field("positive_count")?;
    let positive_count: usize = mp_str
        .parse()
        .map_err(|_| parse_err(n_mp, format!("bad positive_count {mp_str:?}")))?;

    let (n_sv, line) = lines
        .next()
        .ok_or_else(|| parse_err(n0, "missing sv_count".into()))?;
    let sv_count: usize = line
        .strip_prefix("sv_count ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(n_sv, format!("bad sv_count line {line:?}")))?;

    let mut support_vectors = Vec::with_capacity(sv_count);
    let mut sv_coeff = Vec::with_capacity(sv_count);
    for _ in 0..sv_count {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(n_sv, "truncated support vector list".into()))?;
        // Reuse the dataset line parser with the coefficient in the label
        // slot, so index/value validation is shared.
        let mut tokens = line.split_whitespace();
        let coef_tok = tokens.next().ok_or_else(|| parse_err(n, "empty SV line".into()))?;
        let coef: f64 = coef_tok
            .parse()
            .map_err(|_| parse_err(n, format!("bad coefficient {coef_tok:?}")))?;
        if coef == 0.0 || !coef.is_finite() {
            return Err(parse_err(n, format!("coefficient must be nonzero finite, got {coef}")));
        }
        let rest: String = format!("0 {}", tokens.collect::<Vec<_>>().join(" "));
        let sample = crate::data::parse_line(&rest).map_err(|message| parse_err(n, message))?;
        support_vectors.push(SparseSample::new(0, sample.features().to_vec()));
        sv_coeff.push(coef);
    }
    Ok(TrainedBinaryModel {
        support_vectors,
        sv_coeff,
        bias,
        kernel_params: KernelParams::new(gamma)?,
        trained_lambda: lambda,
        trained_c: c,
        positive_count,
    })
}

pub fn save_model(path: &Path, model: &TrainedBinaryModel) -> Result<()> {
    fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedBinaryModel> {
    model_from_string(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn ring(label: i32, n: usize, r_lo: f64, r_hi: f64, seed: u64) -> Vec<SparseSample> {
        let mut rng = rng::stream(seed, "binary-test/ring");
        (0..n)
            .map(|_| {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = rng.gen_range(r_lo..=r_hi);
                SparseSample::from_xy(label, 0.5 + r * a.cos(), 0.5 + r * a.sin())
            })
            .collect()
    }

    fn blob(label: i32, n: usize, cx: f64, cy: f64, spread: f64, seed: u64) -> Vec<SparseSample> {
        let mut rng = rng::stream(seed, "binary-test/blob");
        (0..n)
            .map(|_| {
                let x = cx + rng.gen_range(-spread..spread);
                let y = cy + rng.gen_range(-spread..spread);
                SparseSample::from_xy(label, x, y)
            })
            .collect()
    }

    #[test]
    fn symmetric_pair_has_zero_bias_and_two_svs() {
        let pos = vec![SparseSample::from_xy(1, 0.0, 0.0)];
        let neg = vec![SparseSample::from_xy(-1, 1.0, 0.0)];
        let cfg = BinaryTrainConfig {
            stop_eps: 1e-6,
            ..BinaryTrainConfig::new(10.0, 1.0)
        };
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        assert_eq!(model.support_vectors().len(), 2);
        assert!(model.bias.abs() < 1e-9);
        assert!(!model.has_bounded_plos()); // bias ~ 0 counts as unbounded
    }

    #[test]
    fn surrounded_positives_get_negative_bias_at_lambda_zero() {
        let pos = blob(1, 40, 0.5, 0.5, 0.08, 1);
        let neg = ring(-1, 80, 0.25, 0.4, 2);
        let cfg = BinaryTrainConfig::new(10.0, 8.0);
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        assert!(model.bias < 0.0, "bias {}", model.bias);
        assert!(model.has_bounded_plos());
    }

    #[test]
    fn far_probe_score_collapses_to_bias() {
        let pos = blob(1, 20, 0.4, 0.5, 0.05, 3);
        let neg = blob(-1, 20, 0.7, 0.5, 0.05, 4);
        let cfg = BinaryTrainConfig::new(1.0, 2.0);
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        let probe = SparseSample::from_xy(0, 900.0, -900.0);
        assert!((model.raw_score(&probe) - model.bias).abs() <= 1e-12);
    }

    #[test]
    fn raw_score_matches_manual_expansion() {
        let pos = blob(1, 10, 0.3, 0.3, 0.1, 5);
        let neg = blob(-1, 10, 0.7, 0.7, 0.1, 6);
        let cfg = BinaryTrainConfig::new(5.0, 3.0).with_lambda_frac(0.4);
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        let x = SparseSample::from_xy(0, 0.51, 0.48);
        let manual: f64 = model
            .support_vectors()
            .iter()
            .zip(model.sv_coeff())
            .map(|(sv, &c)| c * kernel::rbf(sv, &x, model.kernel_params))
            .sum::<f64>()
            + model.bias;
        assert_eq!(model.raw_score(&x), manual);
    }

    #[test]
    fn free_positive_sv_scores_near_one() {
        let pos = blob(1, 15, 0.35, 0.5, 0.06, 7);
        let neg = blob(-1, 15, 0.65, 0.5, 0.06, 8);
        let cfg = BinaryTrainConfig {
            stop_eps: 1e-6,
            ..BinaryTrainConfig::new(10.0, 2.0)
        };
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        // Find a free SV (|alpha| strictly inside the box) with label +1.
        let free = model
            .support_vectors()
            .iter()
            .zip(model.sv_coeff())
            .find(|&(_, &c)| c > 1e-6 && c < cfg.c * (1.0 - 1e-6));
        let (sv, _) = free.expect("expected a free positive SV");
        let score = model.raw_score(sv);
        assert!((score - 1.0).abs() < 1e-4, "score {score}");
    }

    #[test]
    fn escalation_noop_when_bias_already_negative() {
        let pos = blob(1, 30, 0.5, 0.5, 0.08, 9);
        let neg = ring(-1, 60, 0.25, 0.4, 10);
        let cfg = BinaryTrainConfig::new(10.0, 8.0);
        let esc = escalate_lambda(&pos, &neg, &cfg, 0.5).unwrap();
        assert_eq!(esc.retrains, 0);
        assert_eq!(esc.lambda_frac, cfg.lambda_frac);
        assert!(esc.model.bias < 0.0);
    }

    #[test]
    fn escalation_fixes_enclosing_class() {
        // Positives on the ring, negatives inside: the classical layout in
        // which a plain SVM keeps a non-negative bias.
        let pos = ring(1, 60, 0.3, 0.4, 11);
        let neg = blob(-1, 40, 0.5, 0.5, 0.08, 12);
        let cfg = BinaryTrainConfig::new(10.0, 8.0);
        let base = train_binary(&pos, &neg, &cfg).unwrap();
        assert!(base.bias >= 0.0, "fixture should start non-negative, got {}", base.bias);
        let esc = escalate_lambda(&pos, &neg, &cfg, 0.5).unwrap();
        assert!(esc.model.bias < 0.0, "bias {}", esc.model.bias);
        assert!(esc.retrains >= 1);
        assert!(esc.lambda_frac > 0.0 && esc.lambda_frac < 1.0);
        assert!(esc.model.trained_lambda > 0.0);
    }

    #[test]
    fn lambda_monotone_bias_directional_check() {
        // Empirical, not proven by the formulation: more bias pressure at
        // lambda_frac 0.9 should not raise the bias above the lambda = 0 fit.
        for seed in 0..5 {
            let pos = blob(1, 20, 0.4, 0.45, 0.1, 100 + seed);
            let neg = blob(-1, 25, 0.6, 0.55, 0.1, 200 + seed);
            let at = |frac: f64| {
                let cfg = BinaryTrainConfig::new(2.0, 4.0).with_lambda_frac(frac);
                train_binary(&pos, &neg, &cfg).unwrap().bias
            };
            let (b0, b9) = (at(0.0), at(0.9));
            assert!(b9 <= b0 + 1e-9, "seed {seed}: bias rose {b0} -> {b9}");
        }
    }

    #[test]
    fn model_round_trip_is_exact() {
        let pos = blob(1, 12, 0.3, 0.6, 0.1, 13);
        let neg = blob(-1, 12, 0.7, 0.4, 0.1, 14);
        let cfg = BinaryTrainConfig::new(3.0, 1.5).with_lambda_frac(0.25);
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        let text = model_to_string(&model);
        let back = model_from_string(&text).unwrap();
        // Labels on stored SVs are not part of the model; compare fields.
        assert_eq!(back.bias, model.bias);
        assert_eq!(back.sv_coeff(), model.sv_coeff());
        assert_eq!(back.trained_lambda, model.trained_lambda);
        assert_eq!(back.trained_c, model.trained_c);
        assert_eq!(back.positive_count, model.positive_count);
        assert_eq!(back.kernel_params, model.kernel_params);
        assert_eq!(
            back.support_vectors()
                .iter()
                .map(|s| s.features().to_vec())
                .collect::<Vec<_>>(),
            model
                .support_vectors()
                .iter()
                .map(|s| s.features().to_vec())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_class_is_rejected() {
        let pos = blob(1, 5, 0.4, 0.4, 0.05, 15);
        let cfg = BinaryTrainConfig::new(1.0, 1.0);
        assert!(train_binary(&pos, &[], &cfg).is_err());
    }

    #[test]
    fn score_perturbation_respects_lipschitz_bound() {
        let pos = blob(1, 15, 0.35, 0.5, 0.08, 16);
        let neg = blob(-1, 15, 0.6, 0.5, 0.08, 17);
        let cfg = BinaryTrainConfig::new(4.0, 5.0);
        let model = train_binary(&pos, &neg, &cfg).unwrap();
        let gamma = model.kernel_params.gamma();
        let lip = model.coeff_mass() * (2.0 * gamma).sqrt() * (-0.5f64).exp();
        let mut rng = rng::stream(18, "lipschitz");
        for _ in 0..200 {
            let x = SparseSample::from_xy(0, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (dx, dy) = (rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01));
            let x2 = SparseSample::from_xy(0, x.get(1) + dx, x.get(2) + dy);
            let delta = (dx * dx + dy * dy).sqrt();
            let diff = (model.raw_score(&x2) - model.raw_score(&x)).abs();
            assert!(
                diff <= lip * delta * (1.0 + 1e-9) + 1e-15,
                "diff {diff} > lip {lip} * delta {delta}"
            );
        }
    }
}

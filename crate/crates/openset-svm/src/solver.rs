//! SMO solver for the bias-regularized SVM dual:
//!
//! minimize   1/2 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j) - sum_i alpha_i
//! subject to 0 <= alpha_i <= C,   sum_i alpha_i y_i = lambda
//!
//! The only difference from the classical dual is the right-hand side of the
//! equality constraint, which the pair updates preserve from any feasible
//! starting point. Working-set selection is the second-order maximal-violating
//! pair rule; there is no shrinking.

use crate::data::SparseSample;
use crate::error::{Error, Result};
use crate::kernel::{KernelCache, KernelParams, TrainingKernel};

/// Surrogate curvature when the second-order coefficient is non-positive.
const TAU: f64 = 1e-12;

/// Accepted updates between full gradient recomputations, to bound
/// incremental drift.
const GRADIENT_REFRESH_INTERVAL: u64 = 1_000_000;

/// Default kernel-row cache budget for a single solve.
pub const DEFAULT_CACHE_BYTES: usize = 64 << 20;

/// A validated instance of the dual problem.
#[derive(Debug, Clone)]
pub struct DualProblem<'a> {
    samples: &'a [SparseSample],
    labels: &'a [i8],
    c: f64,
    lambda: f64,
    kernel_params: KernelParams,
    stop_eps: f64,
    max_iter: u64,
}

impl<'a> DualProblem<'a> {
    /// Validates: labels in {-1, +1} with both classes present, C > 0, and
    /// 0 <= lambda < C * m_p (at the supremum every positive alpha is pinned
    /// at C and no pair can move).
    pub fn new(
        samples: &'a [SparseSample],
        labels: &'a [i8],
        c: f64,
        lambda: f64,
        kernel_params: KernelParams,
        stop_eps: f64,
        max_iter: u64,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::Config("labels must be +1 or -1".into()));
        }
        let m_p = labels.iter().filter(|&&y| y == 1).count();
        if m_p == 0 || m_p == labels.len() {
            return Err(Error::Config(
                "need at least one positive and one negative label".into(),
            ));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("C must be positive, got {c}")));
        }
        if !(stop_eps > 0.0) {
            return Err(Error::Config(format!(
                "stop_eps must be positive, got {stop_eps}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        let limit = c * m_p as f64;
        if !(lambda >= 0.0) || lambda >= limit {
            return Err(Error::InfeasibleLambda { lambda, limit });
        }
        Ok(Self {
            samples,
            labels,
            c,
            lambda,
            kernel_params,
            stop_eps,
            max_iter,
        })
    }

    pub fn samples(&self) -> &'a [SparseSample] {
        self.samples
    }

    pub fn labels(&self) -> &'a [i8] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel_params(&self) -> KernelParams {
        self.kernel_params
    }

    pub fn stop_eps(&self) -> f64 {
        self.stop_eps
    }

    pub fn max_iter(&self) -> u64 {
        self.max_iter
    }

    /// Number of positive training samples.
    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

/// Solver output. `converged == false` means the pair-update budget ran out
/// and the best-so-far iterate is returned.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub dual_objective: f64,
    pub iterations: u64,
    pub kkt_violation: f64,
    pub converged: bool,
}

/// Feasible starting point: alpha_i = lambda / m_p on positives, 0 on
/// negatives, so the equality constraint holds before the first update.
pub fn initialize_alpha(problem: &DualProblem) -> Vec<f64> {
    let m_p = problem.positive_count();
    let fill = problem.lambda / m_p as f64;
    problem
        .labels
        .iter()
        .map(|&y| if y == 1 { fill } else { 0.0 })
        .collect()
}

/// Dual objective `1/2 sum_ij a_i a_j y_i y_j K_ij - sum_i a_i`, evaluated by
/// the plain double loop.
pub fn dual_objective(problem: &DualProblem, alpha: &[f64]) -> f64 {
    let m = problem.len();
    let mut quad = 0.0;
    for i in 0..m {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            if alpha[j] == 0.0 {
                continue;
            }
            let k = crate::kernel::rbf(
                &problem.samples[i],
                &problem.samples[j],
                problem.kernel_params,
            );
            quad += alpha[i]
                * alpha[j]
                * f64::from(problem.labels[i])
                * f64::from(problem.labels[j])
                * k;
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

struct SolverState<'a, 'b> {
    problem: &'b DualProblem<'a>,
    kernel: TrainingKernel<'a>,
    alpha: Vec<f64>,
    gradient: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a, 'b> SolverState<'a, 'b> {
    fn new(problem: &'b DualProblem<'a>, cache: KernelCache) -> Self {
        let kernel = TrainingKernel::new(problem.samples, problem.kernel_params, cache);
        let alpha = initialize_alpha(problem);
        let diag: Vec<f64> = (0..problem.len()).map(|i| kernel.diag(i)).collect();
        let mut state = Self {
            problem,
            kernel,
            alpha,
            gradient: Vec::new(),
            diag,
        };
        state.recompute_gradient();
        state
    }

    /// G_i = y_i * sum_j y_j alpha_j K_ij - 1, built from the rows of the
    /// nonzero alphas.
    fn recompute_gradient(&mut self) {
        let m = self.problem.len();
        let y = self.problem.labels;
        self.gradient = vec![-1.0; m];
        for j in 0..m {
            if self.alpha[j] == 0.0 {
                continue;
            }
            let row = self.kernel.row(j);
            let coef = f64::from(y[j]) * self.alpha[j];
            for i in 0..m {
                self.gradient[i] += f64::from(y[i]) * coef * row[i];
            }
        }
    }

    fn is_upper(&self, i: usize) -> bool {
        self.alpha[i] >= self.problem.c
    }

    fn is_lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    /// Second-order working-set selection. Returns the chosen pair and the
    /// current KKT violation `m(alpha) - M(alpha)`; `None` when optimal.
    fn select_pair(&mut self) -> (Option<(usize, usize)>, f64) {
        let m = self.problem.len();
        let y = self.problem.labels;

        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel: Option<usize> = None;
        for t in 0..m {
            let in_up = if y[t] == 1 {
                !self.is_upper(t)
            } else {
                !self.is_lower(t)
            };
            if !in_up {
                continue;
            }
            let val = -f64::from(y[t]) * self.gradient[t];
            if val >= g_max {
                g_max = val;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            return (None, 0.0);
        };
        let row_i = self.kernel.row(i);

        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel: Option<usize> = None;
        let mut best_gain = f64::INFINITY;
        for t in 0..m {
            let in_low = if y[t] == 1 {
                !self.is_lower(t)
            } else {
                !self.is_upper(t)
            };
            if !in_low {
                continue;
            }
            let neg_yg = -f64::from(y[t]) * self.gradient[t];
            // Track max over I_low of y_t G_t, so that M(alpha) = -g_max2.
            if -neg_yg >= g_max2 {
                g_max2 = -neg_yg;
            }
            let grad_diff = g_max - neg_yg;
            if grad_diff > 0.0 {
                let quad = self.diag[i] + self.diag[t] - 2.0 * row_i[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj_diff = -(grad_diff * grad_diff) / quad;
                if obj_diff <= best_gain {
                    best_gain = obj_diff;
                    j_sel = Some(t);
                }
            }
        }

        // g_max2 holds max over I_low of y_t G_t, so the violation is
        // m(alpha) - M(alpha) = g_max + g_max2.
        let violation = g_max + g_max2;
        if violation < self.problem.stop_eps || j_sel.is_none() {
            return (None, violation.max(0.0));
        }
        (Some((i, j_sel.unwrap())), violation)
    }

    /// Two-variable analytic step, clipped to the box. Preserves
    /// `sum alpha_i y_i` by construction.
    fn update_pair(&mut self, i: usize, j: usize) {
        let c = self.problem.c;
        let y = self.problem.labels;
        let row_i = self.kernel.row(i);
        let row_j = self.kernel.row(j);
        let old_i = self.alpha[i];
        let old_j = self.alpha[j];

        let quad = {
            let q = self.diag[i] + self.diag[j] - 2.0 * row_i[j];
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };

        if y[i] != y[j] {
            let delta = (-self.gradient[i] - self.gradient[j]) / quad;
            let diff = old_i - old_j;
            self.alpha[i] = old_i + delta;
            self.alpha[j] = old_j + delta;
            if diff > 0.0 {
                if self.alpha[j] < 0.0 {
                    self.alpha[j] = 0.0;
                    self.alpha[i] = diff;
                }
            } else if self.alpha[i] < 0.0 {
                self.alpha[i] = 0.0;
                self.alpha[j] = -diff;
            }
            if diff > 0.0 {
                if self.alpha[i] > c {
                    self.alpha[i] = c;
                    self.alpha[j] = c - diff;
                }
            } else if self.alpha[j] > c {
                self.alpha[j] = c;
                self.alpha[i] = c + diff;
            }
        } else {
            let delta = (self.gradient[i] - self.gradient[j]) / quad;
            let sum = old_i + old_j;
            self.alpha[i] = old_i - delta;
            self.alpha[j] = old_j + delta;
            if sum > c {
                if self.alpha[i] > c {
                    self.alpha[i] = c;
                    self.alpha[j] = sum - c;
                }
            } else if self.alpha[j] < 0.0 {
                self.alpha[j] = 0.0;
                self.alpha[i] = sum;
            }
            if sum > c {
                if self.alpha[j] > c {
                    self.alpha[j] = c;
                    self.alpha[i] = sum - c;
                }
            } else if self.alpha[i] < 0.0 {
                self.alpha[i] = 0.0;
                self.alpha[j] = sum;
            }
        }

        let delta_i = self.alpha[i] - old_i;
        let delta_j = self.alpha[j] - old_j;
        for t in 0..self.problem.len() {
            self.gradient[t] += f64::from(y[t])
                * (f64::from(y[i]) * delta_i * row_i[t] + f64::from(y[j]) * delta_j * row_j[t]);
        }
    }

    /// Bias bounds from the current gradient, in the `f(x) = sum + b`
    /// convention: `lower = max over I_up of -y G`, `upper = min over I_low`.
    fn bias_interval(&self) -> (f64, f64) {
        bias_interval_from(self.problem, &self.alpha, &self.gradient)
    }

    fn bias(&self) -> Result<f64> {
        bias_from_gradient(self.problem, &self.alpha, &self.gradient)
    }
}

fn bias_interval_from(problem: &DualProblem, alpha: &[f64], gradient: &[f64]) -> (f64, f64) {
    let c = problem.c;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in 0..problem.len() {
        let neg_yg = -f64::from(problem.labels[t]) * gradient[t];
        let (at_lower, at_upper) = (alpha[t] <= 0.0, alpha[t] >= c);
        let in_up = if problem.labels[t] == 1 {
            !at_upper
        } else {
            !at_lower
        };
        let in_low = if problem.labels[t] == 1 {
            !at_lower
        } else {
            !at_upper
        };
        if in_up {
            lower = lower.max(neg_yg);
        }
        if in_low {
            upper = upper.min(neg_yg);
        }
    }
    (lower, upper)
}

fn bias_from_gradient(problem: &DualProblem, alpha: &[f64], gradient: &[f64]) -> Result<f64> {
    let c = problem.c;
    let margin = 1e-12 * c;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..problem.len() {
        if alpha[t] > margin && alpha[t] < c - margin {
            sum += -f64::from(problem.labels[t]) * gradient[t];
            free += 1;
        }
    }
    if free > 0 {
        return Ok(sum / free as f64);
    }
    let (lower, upper) = bias_interval_from(problem, alpha, gradient);
    if lower - upper > problem.stop_eps {
        return Err(Error::DegenerateBias { lower, upper });
    }
    Ok(0.5 * (lower + upper))
}

/// Recover the bias term from KKT conditions: the mean of
/// `y_i - sum_j alpha_j y_j K_ij` over free support vectors, or the midpoint
/// of the feasible interval when every alpha sits at a bound.
pub fn recover_bias(problem: &DualProblem, alpha: &[f64]) -> Result<f64> {
    let gradient = gradient_of(problem, alpha);
    bias_from_gradient(problem, alpha, &gradient)
}

fn gradient_of(problem: &DualProblem, alpha: &[f64]) -> Vec<f64> {
    let m = problem.len();
    let mut gradient = vec![-1.0; m];
    let mut cache = KernelCache::with_capacity(0);
    for j in 0..m {
        if alpha[j] == 0.0 {
            continue;
        }
        let row = crate::kernel::kernel_row(j, problem.samples, problem.kernel_params, &mut cache);
        let coef = f64::from(problem.labels[j]) * alpha[j];
        for i in 0..m {
            gradient[i] += f64::from(problem.labels[i]) * coef * row[i];
        }
    }
    gradient
}

pub fn solve(problem: &DualProblem) -> Result<DualSolution> {
    let mut cache = KernelCache::with_capacity(DEFAULT_CACHE_BYTES);
    solve_with_cache(problem, &mut cache)
}

pub fn solve_with_cache(problem: &DualProblem, cache: &mut KernelCache) -> Result<DualSolution> {
    solve_observed(problem, cache, |_| {})
}

/// As [`solve_with_cache`] with a callback invoked after every accepted pair
/// update; test suites use it to check per-iteration invariants.
pub fn solve_observed(
    problem: &DualProblem,
    cache: &mut KernelCache,
    mut observer: impl FnMut(&[f64]),
) -> Result<DualSolution> {
    let owned = std::mem::replace(cache, KernelCache::with_capacity(0));
    let mut state = SolverState::new(problem, owned);

    let mut iterations = 0u64;
    let (converged, kkt_violation) = loop {
        while iterations < problem.max_iter {
            let (pair, _violation) = state.select_pair();
            let Some((i, j)) = pair else { break };
            state.update_pair(i, j);
            iterations += 1;
            if iterations % GRADIENT_REFRESH_INTERVAL == 0 {
                state.recompute_gradient();
            }
            observer(&state.alpha);
        }
        // Judge termination on a fresh gradient so incremental drift cannot
        // mask a residual violation; if one shows up, resume.
        state.recompute_gradient();
        let (lower, upper) = state.bias_interval();
        let violation = (lower - upper).max(0.0);
        if violation < problem.stop_eps {
            break (true, violation);
        }
        if iterations >= problem.max_iter {
            break (false, violation);
        }
    };
    let bias = state.bias()?;
    let objective = 0.5
        * state
            .alpha
            .iter()
            .zip(&state.gradient)
            .map(|(&a, &g)| a * (g - 1.0))
            .sum::<f64>();

    let _ = std::mem::replace(cache, state.kernel.into_cache());
    Ok(DualSolution {
        alpha: state.alpha,
        bias,
        dual_objective: objective,
        iterations,
        kkt_violation,
        converged,
    })
}

//! Shared test oracles, independent of the library's solver internals:
//! a brute-force active-set QP solver, a classical first-order SMO, and a
//! sign-enumeration Wilcoxon p-value.

#![allow(dead_code)]

use openset_svm::data::SparseSample;
use openset_svm::rng;
use rand::Rng;

// ---------------------------------------------------------------------------
// dense kernel evaluation (deliberately not via openset_svm::kernel)

pub fn to_dense(s: &SparseSample, dim: usize) -> Vec<f64> {
    (1..=dim as u32).map(|i| s.get(i)).collect()
}

pub fn rbf_dense(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn kernel_matrix(samples: &[SparseSample], gamma: f64) -> Vec<Vec<f64>> {
    let dim = samples.iter().map(|s| s.max_index()).max().unwrap_or(1) as usize;
    let pts: Vec<Vec<f64>> = samples.iter().map(|s| to_dense(s, dim)).collect();
    (0..pts.len())
        .map(|i| (0..pts.len()).map(|j| rbf_dense(&pts[i], &pts[j], gamma)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// brute-force QP oracle: enumerate every {lower, upper, free} assignment

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Equality multiplier (the bias) when the optimal active set had free
    /// variables.
    pub bias: Option<f64>,
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn objective_of(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let m = alpha.len();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Minimize 1/2 a'Qa - sum(a) subject to 0 <= a <= c, y'a = lambda, by
/// enumerating all 3^m active-set assignments and solving the stationarity
/// system on the free block. Exact up to linear-solve rounding for m <= 8.
pub fn qp_oracle(kernel: &[Vec<f64>], y: &[f64], c: f64, lambda: f64) -> OracleSolution {
    let m = y.len();
    assert!(m <= 10, "oracle is exponential in m");
    let q: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| y[i] * y[j] * kernel[i][j]).collect())
        .collect();
    let tol_eq = 1e-8 * lambda.abs().max(1.0);
    let tol_box = 1e-8 * c.max(1.0);

    let mut best: Option<OracleSolution> = None;
    let states = 3usize.pow(m as u32);
    for code in 0..states {
        let mut digits = code;
        let mut alpha = vec![0.0; m];
        let mut free = Vec::new();
        for i in 0..m {
            match digits % 3 {
                0 => alpha[i] = 0.0,
                1 => alpha[i] = c,
                _ => free.push(i),
            }
            digits /= 3;
        }
        let bound_sum: f64 = (0..m).filter(|i| !free.contains(i)).map(|i| y[i] * alpha[i]).sum();
        let mut bias = None;
        if free.is_empty() {
            if (bound_sum - lambda).abs() > tol_eq {
                continue;
            }
        } else {
            let nf = free.len();
            let mut a = vec![vec![0.0; nf + 1]; nf + 1];
            let mut rhs = vec![0.0; nf + 1];
            for (r, &i) in free.iter().enumerate() {
                for (cidx, &j) in free.iter().enumerate() {
                    a[r][cidx] = q[i][j];
                }
                a[r][nf] = y[i];
                a[nf][r] = y[i];
                let mut b = 1.0;
                for j in 0..m {
                    if !free.contains(&j) {
                        b -= q[i][j] * alpha[j];
                    }
                }
                rhs[r] = b;
            }
            rhs[nf] = lambda - bound_sum;
            let Some(z) = solve_linear(a, rhs) else { continue };
            if z[..nf].iter().any(|&v| v < -tol_box || v > c + tol_box) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = z[r].clamp(0.0, c);
            }
            bias = Some(z[nf]);
        }
        let eq: f64 = (0..m).map(|i| y[i] * alpha[i]).sum();
        if (eq - lambda).abs() > tol_eq {
            continue;
        }
        let obj = objective_of(&q, &alpha);
        if best.as_ref().map_or(true, |b| obj < b.objective) {
            best = Some(OracleSolution {
                alpha,
                objective: obj,
                bias,
            });
        }
    }
    best.expect("feasible QP must have a solution")
}

// ---------------------------------------------------------------------------
// classical SMO reference (lambda = 0): maximal-violating-pair selection,
// Platt-style two-variable update, full gradient recomputation per step

pub struct ClassicSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

pub fn classic_smo(kernel: &[Vec<f64>], y: &[f64], c: f64, eps: f64, max_iter: u64) -> ClassicSolution {
    let m = y.len();
    let mut alpha = vec![0.0; m];
    let gradient = |alpha: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let mut s = -1.0;
                for j in 0..m {
                    s += alpha[j] * y[i] * y[j] * kernel[i][j];
                }
                s
            })
            .collect()
    };

    for _ in 0..max_iter {
        let g = gradient(&alpha);
        let mut i_sel = None;
        let mut up = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut low = f64::INFINITY;
        for t in 0..m {
            let tv = -y[t] * g[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && tv > up {
                up = tv;
                i_sel = Some(t);
            }
            if in_low && tv < low {
                low = tv;
                j_sel = Some(t);
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if up - low < eps {
            break;
        }
        let s = y[i] * y[j];
        let (l, h) = if y[i] != y[j] {
            ((alpha[j] - alpha[i]).max(0.0), (c + alpha[j] - alpha[i]).min(c))
        } else {
            ((alpha[i] + alpha[j] - c).max(0.0), (alpha[i] + alpha[j]).min(c))
        };
        if l >= h {
            break;
        }
        let eta = (kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j]).max(1e-12);
        let e_diff = y[i] * g[i] - y[j] * g[j];
        let aj_new = (alpha[j] + y[j] * e_diff / eta).clamp(l, h);
        let ai_new = alpha[i] + s * (alpha[j] - aj_new);
        // Snap to exact bounds so rounding residue cannot fake box-interior
        // membership in later working-set selections.
        let snap = |v: f64| {
            if v < 1e-12 * c {
                0.0
            } else if v > c * (1.0 - 1e-12) {
                c
            } else {
                v
            }
        };
        alpha[i] = snap(ai_new);
        alpha[j] = snap(aj_new);
    }

    let g = gradient(&alpha);
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for t in 0..m {
        let tv = -y[t] * g[t];
        if alpha[t] > 1e-12 * c && alpha[t] < c * (1.0 - 1e-12) {
            free_sum += tv;
            free_count += 1;
        }
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if in_up {
            lo = lo.max(tv);
        }
        if in_low {
            hi = hi.min(tv);
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (lo + hi)
    };
    let q: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| y[i] * y[j] * kernel[i][j]).collect())
        .collect();
    ClassicSolution {
        alpha: alpha.clone(),
        bias,
        objective: objective_of(&q, &alpha),
    }
}

/// Decision value of an expansion over training samples (dense path).
pub fn decision_dense(
    samples: &[SparseSample],
    y: &[f64],
    alpha: &[f64],
    bias: f64,
    gamma: f64,
    probe: &[f64],
) -> f64 {
    let dim = samples.iter().map(|s| s.max_index()).max().unwrap_or(1) as usize;
    let dim = dim.max(probe.len());
    samples
        .iter()
        .zip(y)
        .zip(alpha)
        .map(|((s, &yy), &a)| {
            let pt = to_dense(s, dim);
            let mut padded = probe.to_vec();
            padded.resize(dim, 0.0);
            a * yy * rbf_dense(&pt, &padded, gamma)
        })
        .sum::<f64>()
        + bias
}

// ---------------------------------------------------------------------------
// random problem generator

#[derive(Debug, Clone)]
pub struct RandomProblem {
    pub samples: Vec<SparseSample>,
    pub labels: Vec<i8>,
    pub y: Vec<f64>,
    pub c: f64,
    pub gamma: f64,
    pub lambda_frac: f64,
}

impl RandomProblem {
    pub fn lambda(&self) -> f64 {
        let m_p = self.labels.iter().filter(|&&l| l == 1).count();
        self.lambda_frac * self.c * m_p as f64
    }
}

pub fn random_problem(seed: u64, max_m: usize) -> RandomProblem {
    let mut rng = rng::stream(seed, "test/random-problem");
    let m = rng.gen_range(2..=max_m);
    let mut labels: Vec<i8> = (0..m).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    // Ensure both classes are present.
    labels[0] = 1;
    let idx = rng.gen_range(1..m);
    labels[idx] = -1;
    let samples: Vec<SparseSample> = labels
        .iter()
        .map(|&l| {
            SparseSample::from_xy(
                i32::from(l),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            )
        })
        .collect();
    let c = *[0.5, 1.0, 10.0].get(rng.gen_range(0..3)).unwrap();
    let gamma = *[0.5, 1.0, 2.0, 8.0].get(rng.gen_range(0..4)).unwrap();
    let lambda_frac = *[0.0, 0.3, 0.7].get(rng.gen_range(0..3)).unwrap();
    let y = labels.iter().map(|&l| f64::from(l)).collect();
    RandomProblem {
        samples,
        labels,
        y,
        c,
        gamma,
        lambda_frac,
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon enumeration oracle

fn ranks_of(abs: &[f64]) -> Vec<f64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].partial_cmp(&abs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided exact p by enumerating all 2^n sign assignments of the observed
/// rank set. `diffs` must already exclude zeros.
pub fn wilcoxon_enumeration_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    assert!(n <= 20, "enumeration oracle limited to small n");
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = ranks_of(&abs);
    let w_obs: f64 = ranks
        .iter()
        .zip(diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let mut count_le = 0u64;
    let mut count_ge = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= w_obs + 1e-12 {
            count_le += 1;
        }
        if w >= w_obs - 1e-12 {
            count_ge += 1;
        }
    }
    let denom = (1u64 << n) as f64;
    let p = 2.0 * (count_le.min(count_ge) as f64) / denom;
    p.min(1.0)
}

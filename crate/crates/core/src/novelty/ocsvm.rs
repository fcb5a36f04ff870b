//! ν-one-class SVM with an RBF kernel, trained by SMO on the dual
//!
//! ```text
//! minimize   1/2 * a^T K a
//! subject to 0 <= a_i <= 1 / (nu * n),  sum_i a_i = 1
//! ```
//!
//! with `K_ij = exp(-gamma * |x_i - x_j|^2)`. The decision value is
//! `f(x) = sum_i a_i K(x_i, x) - rho`; the anomaly score is `-f(x)`.
//!
//! Working pairs use the second-order selection rule of Fan, Chen and Lin
//! (2005). Training stops once the maximal KKT violation drops below the
//! tolerance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, sq_dist};
use crate::matrix::Matrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Kernel matrices up to this many rows are precomputed.
const DENSE_KERNEL_LIMIT: usize = 4096;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Full dual solution over the training set.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// Upper bound on each `alpha_i`, `1 / (nu * n)`.
    pub upper: f64,
    /// `1/2 a^T K a`.
    pub objective: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub violation: f64,
}

#[inline]
pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    exp(-gamma * sq_dist(a, b))
}

enum Kernel<'a> {
    Dense(Matrix<f64>),
    Lazy { data: &'a Matrix<f64>, gamma: f64 },
}

impl Kernel<'_> {
    fn column(&self, i: usize, out: &mut [f64]) {
        match self {
            Kernel::Dense(k) => out.copy_from_slice(k.row(i)),
            Kernel::Lazy { data, gamma } => {
                let xi = data.row(i);
                for (o, xj) in out.iter_mut().zip(data.iter_rows()) {
                    *o = rbf(*gamma, xi, xj);
                }
            }
        }
    }
}

fn check_params(n: usize, gamma: f64, nu: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(alloc::format!("nu must be in (0, 1], got {nu}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(alloc::format!("kernel gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Solves the one-class dual on the rows of `data`.
pub fn solve_dual(data: &Matrix<f64>, gamma: f64, nu: f64, params: &SolverParams) -> Result<DualSolution> {
    let n = data.nrows();
    check_params(n, gamma, nu)?;
    let upper = 1.0 / (nu * n as f64);

    let kernel = if n <= DENSE_KERNEL_LIMIT {
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0;
            for j in 0..i {
                let v = rbf(gamma, data.row(i), data.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Kernel::Dense(k)
    } else {
        Kernel::Lazy { data, gamma }
    };

    // Fill the box from the front until the mass constraint is met.
    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0;
    for a in &mut alpha {
        if remaining <= 0.0 {
            break;
        }
        *a = upper.min(remaining);
        remaining -= *a;
    }

    let mut grad = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        if alpha[j] > 0.0 {
            kernel.column(j, &mut col);
            for (g, k) in grad.iter_mut().zip(&col) {
                *g += alpha[j] * k;
            }
        }
    }

    let mut col_i = vec![0.0; n];
    let mut col_j = vec![0.0; n];
    let mut iterations = 0;
    let mut violation;
    loop {
        // i: smallest gradient among variables that may increase.
        let mut i = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            if alpha[t] < upper && grad[t] < g_min {
                g_min = grad[t];
                i = t;
            }
        }
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        violation = g_max - g_min;
        if i == usize::MAX || violation < params.tolerance {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                violation,
            });
        }

        kernel.column(i, &mut col_i);
        let mut j = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 {
                let b = grad[t] - g_min;
                if b > 0.0 {
                    let mut a = 2.0 - 2.0 * col_i[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let gain = b * b / a;
                    if gain > best_gain {
                        best_gain = gain;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        kernel.column(j, &mut col_j);

        let mut eta = 2.0 - 2.0 * col_i[j];
        if eta <= 0.0 {
            eta = TAU;
        }
        let mut delta = (grad[j] - grad[i]) / eta;
        delta = delta.min(upper - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        // Snap to the bounds so the index sets stay exact.
        if upper - alpha[i] <= upper * 1e-14 {
            alpha[i] = upper;
        }
        if alpha[j] <= upper * 1e-14 {
            alpha[j] = 0.0;
        }
        for t in 0..n {
            grad[t] += delta * (col_i[t] - col_j[t]);
        }
        iterations += 1;
    }

    let rho = compute_rho(&alpha, &grad, upper);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    Ok(DualSolution {
        alpha,
        rho,
        upper,
        objective,
        iterations,
        violation,
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], upper: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut upper_bound = f64::INFINITY;
    for (&a, &g) in alpha.iter().zip(grad) {
        if a >= upper {
            lower_bound = lower_bound.max(g);
        } else if a <= 0.0 {
            upper_bound = upper_bound.min(g);
        } else {
            free_sum += g;
            free += 1;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else if lower_bound.is_finite() && upper_bound.is_finite() {
        (lower_bound + upper_bound) / 2.0
    } else if lower_bound.is_finite() {
        lower_bound
    } else {
        upper_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub support_vectors: Matrix<f64>,
    pub coefficients: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl OcSvmModel {
    pub fn fit(data: &Matrix<f64>, gamma: f64, nu: f64) -> Result<Self> {
        Self::fit_with(data, gamma, nu, &SolverParams::default())
    }

    pub fn fit_with(data: &Matrix<f64>, gamma: f64, nu: f64, params: &SolverParams) -> Result<Self> {
        let sol = solve_dual(data, gamma, nu, params)?;
        Ok(Self::from_solution(data, &sol, gamma, nu))
    }

    pub fn from_solution(data: &Matrix<f64>, sol: &DualSolution, gamma: f64, nu: f64) -> Self {
        let sv: Vec<usize> = (0..data.nrows()).filter(|&i| sol.alpha[i] > 0.0).collect();
        OcSvmModel {
            support_vectors: data.select_rows(&sv),
            coefficients: sv.iter().map(|&i| sol.alpha[i]).collect(),
            rho: sol.rho,
            gamma,
            nu,
        }
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `sum_i a_i K(x_i, x) - rho`; negative outside the learned support.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        let s: f64 = self
            .support_vectors
            .iter_rows()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * rbf(self.gamma, sv, x))
            .sum();
        Ok(s - self.rho)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.decision(x).map(|d| -d)
    }
}

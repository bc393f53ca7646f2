//! L2-penalized logistic regression fitted by damped Newton iterations.
//!
//! The objective is the negative log-likelihood plus `l2/2 * ||w||^2` over
//! the coefficients (the intercept is unpenalized). Newton steps are halved
//! until the penalized objective does not increase, which gives monotone
//! convergence without line-search machinery. With a positive penalty the
//! solution stays finite even on separable data.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let z = self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>();
        sigmoid(z)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Penalized negative log-likelihood at parameters `beta = [intercept, w..]`.
fn objective(features: &[Vec<f64>], labels: &[u8], beta: &[f64], l2: f64) -> f64 {
    let mut nll = 0.0;
    for (row, &y) in features.iter().zip(labels) {
        let z = beta[0]
            + beta[1..]
                .iter()
                .zip(row)
                .map(|(c, x)| c * x)
                .sum::<f64>();
        // log(1 + exp(z)) - y z, computed stably.
        let log1pexp = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        nll += log1pexp - f64::from(y) * z;
    }
    let penalty: f64 = beta[1..].iter().map(|c| c * c).sum::<f64>() * l2 / 2.0;
    nll + penalty
}

pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
    max_iterations: usize,
    tolerance: f64,
) -> LogisticFit {
    let n = features.len();
    let d = features.first().map(|r| r.len()).unwrap_or(0);
    let p = d + 1;
    let mut beta = vec![0.0; p];
    let mut obj = objective(features, labels, &beta, l2);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iterations {
        iterations = iter + 1;
        // Gradient and Hessian of the penalized objective.
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for (row, &y) in features.iter().zip(labels) {
            let z = beta[0]
                + beta[1..]
                    .iter()
                    .zip(row)
                    .map(|(c, x)| c * x)
                    .sum::<f64>();
            let mu = sigmoid(z);
            let r = mu - f64::from(y);
            let w = (mu * (1.0 - mu)).max(1e-12);
            grad[0] += r;
            for j in 0..d {
                grad[j + 1] += r * row[j];
            }
            hess[0] += w;
            for j in 0..d {
                let wx = w * row[j];
                hess[j + 1] += wx; // row 0, col j+1
                hess[(j + 1) * p] += wx; // row j+1, col 0
                for k in 0..=j {
                    hess[(j + 1) * p + (k + 1)] += wx * row[k];
                }
            }
        }
        // Mirror the lower triangle and add the penalty block.
        for j in 1..p {
            for k in j + 1..p {
                hess[j * p + k] = hess[k * p + j];
            }
        }
        for j in 1..p {
            grad[j] += l2 * beta[j];
            hess[j * p + j] += l2;
        }
        let _ = n;

        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < tolerance {
            converged = true;
            iterations = iter;
            break;
        }

        let step = match solve_spd(&hess, &grad, p) {
            Some(s) => s,
            None => break,
        };
        // Halve the step until the objective does not increase.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b - scale * s)
                .collect();
            let cand_obj = objective(features, labels, &candidate, l2);
            if cand_obj <= obj {
                beta = candidate;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    LogisticFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        converged,
        iterations,
    }
}

/// Solve `a x = b` for symmetric positive definite `a` via Cholesky,
/// retrying with a jittered diagonal if the factorization fails.
fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut jitter = 0.0;
    for _ in 0..6 {
        let mut m = a.to_vec();
        if jitter > 0.0 {
            for j in 0..p {
                m[j * p + j] += jitter;
            }
        }
        if let Some(x) = cholesky_solve(&mut m, b, p) {
            return Some(x);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    None
}

fn cholesky_solve(a: &mut [f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    // In-place lower Cholesky factor.
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag -= a[j * p + k] * a[j * p + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let l_jj = diag.sqrt();
        a[j * p + j] = l_jj;
        for i in j + 1..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / l_jj;
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * p + k] * y[k];
        }
        y[i] = v / a[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut v = y[i];
        for k in i + 1..p {
            v -= a[k * p + i] * x[k];
        }
        x[i] = v / a[i * p + i];
    }
    Some(x)
}

//! L2-regularized binary logistic regression, trained deterministically
//! with L-BFGS. Inputs are standardized per dimension using training
//! statistics; zero-variance dimensions are dropped; the intercept is
//! never penalized.

use super::ProbeError;

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// L2 strength on the weight vector (not the intercept).
    pub lambda: f64,
    /// Convergence threshold on the gradient max-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            lambda: 1.0,
            tolerance: 1e-6,
            max_iterations: 500,
        }
    }
}

/// A trained probe. `weights` live in standardized space over the `kept`
/// dimensions; [`LogisticModel::raw_weights`] maps them back to the input
/// space.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub dim: usize,
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    /// Decision score (logit) for an unstandardized input row.
    pub fn score(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (j, &d) in self.kept.iter().enumerate() {
            acc += self.weights[j] * (row[d] - self.means[j]) / self.stds[j];
        }
        acc
    }

    /// Equivalent weights and intercept over the original input space.
    pub fn raw_weights(&self) -> (Vec<f64>, f64) {
        let mut w = vec![0.0; self.dim];
        let mut b = self.intercept;
        for (j, &d) in self.kept.iter().enumerate() {
            w[d] = self.weights[j] / self.stds[j];
            b -= self.weights[j] * self.means[j] / self.stds[j];
        }
        (w, b)
    }
}

/// Mean binary cross-entropy plus (lambda/2)*||w||^2 and its gradient.
/// `params` is the weight vector with the intercept appended.
fn objective(
    z: &[f64],
    rows: usize,
    cols: usize,
    labels: &[u8],
    lambda: f64,
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    let (w, b) = (&params[..cols], params[cols]);
    grad.fill(0.0);
    let mut loss = 0.0;
    for i in 0..rows {
        let row = &z[i * cols..(i + 1) * cols];
        let mut m = b;
        for (zj, wj) in row.iter().zip(w) {
            m += zj * wj;
        }
        let y = f64::from(labels[i]);
        // Stable: max(m,0) - m*y + ln(1 + exp(-|m|))
        loss += m.max(0.0) - m * y + (-m.abs()).exp().ln_1p();
        let p = if m >= 0.0 {
            1.0 / (1.0 + (-m).exp())
        } else {
            let e = m.exp();
            e / (1.0 + e)
        };
        let residual = p - y;
        for (g, zj) in grad[..cols].iter_mut().zip(row) {
            *g += residual * zj;
        }
        grad[cols] += residual;
    }
    let n = rows as f64;
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (g, wj) in grad[..cols].iter_mut().zip(w) {
        *g += lambda * wj;
        loss += 0.5 * lambda * wj * wj;
    }
    loss
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub(super) struct Optimized {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimize the logistic objective over already-standardized inputs
/// (row-major `rows` x `cols`). Deterministic: no randomness, fixed
/// evaluation order.
pub(super) fn optimize(
    z: &[f64],
    rows: usize,
    cols: usize,
    labels: &[u8],
    opts: &LogisticOptions,
) -> Optimized {
    const HISTORY: usize = 10;
    const C1: f64 = 1e-4;

    let dim = cols + 1;
    let mut params = vec![0.0f64; dim];
    let mut grad = vec![0.0f64; dim];
    let mut loss = objective(z, rows, cols, labels, opts.lambda, &params, &mut grad);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut iterations = 0;
    let mut converged = max_norm(&grad) <= opts.tolerance;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        // Two-loop recursion for the search direction.
        let mut direction = grad.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for idx in (0..s_hist.len()).rev() {
            let alpha = rho_hist[idx]
                * s_hist[idx]
                    .iter()
                    .zip(&direction)
                    .map(|(s, d)| s * d)
                    .sum::<f64>();
            alphas[idx] = alpha;
            for (d, y) in direction.iter_mut().zip(&y_hist[idx]) {
                *d -= alpha * y;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|a| a * a).sum();
            if sy > 0.0 && yy > 0.0 {
                let gamma = sy / yy;
                for d in direction.iter_mut() {
                    *d *= gamma;
                }
            }
        }
        for idx in 0..s_hist.len() {
            let beta = rho_hist[idx]
                * y_hist[idx]
                    .iter()
                    .zip(&direction)
                    .map(|(y, d)| y * d)
                    .sum::<f64>();
            for (d, s) in direction.iter_mut().zip(&s_hist[idx]) {
                *d += (alphas[idx] - beta) * s;
            }
        }
        // direction approximates H^-1 g; step along its negative with
        // Armijo backtracking. Fall back to steepest descent if the
        // curvature information is unusable.
        let mut descent: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        if descent <= 0.0 {
            direction.copy_from_slice(&grad);
            descent = grad.iter().map(|g| g * g).sum::<f64>();
        }
        if descent <= 0.0 {
            break; // zero gradient
        }
        let mut step = 1.0f64;
        let mut candidate = vec![0.0; dim];
        let mut cand_grad = vec![0.0; dim];
        let mut cand_loss = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for ((c, p), d) in candidate.iter_mut().zip(&params).zip(&direction) {
                *c = p - step * d;
            }
            cand_loss =
                objective(z, rows, cols, labels, opts.lambda, &candidate, &mut cand_grad);
            if cand_loss <= loss - C1 * step * descent {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search stalled at numerical precision.
            break;
        }
        let mut s_vec = vec![0.0; dim];
        let mut y_vec = vec![0.0; dim];
        for i in 0..dim {
            s_vec[i] = candidate[i] - params[i];
            y_vec[i] = cand_grad[i] - grad[i];
        }
        let sy: f64 = s_vec.iter().zip(&y_vec).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s_vec);
            y_hist.push(y_vec);
        }
        params = candidate;
        grad = cand_grad;
        loss = cand_loss;
        converged = max_norm(&grad) <= opts.tolerance;
    }

    let intercept = params[cols];
    params.truncate(cols);
    Optimized {
        weights: params,
        intercept,
        converged,
        iterations,
    }
}

pub(super) struct Standardization {
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Per-dimension mean and population standard deviation over the given
/// rows; dimensions with zero variance are dropped.
pub(super) fn standardization_stats<F: Fn(usize, usize) -> f64>(
    get: F,
    rows: usize,
    cols: usize,
) -> Standardization {
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let n = rows as f64;
    for j in 0..cols {
        let mut sum = 0.0;
        for i in 0..rows {
            sum += get(i, j);
        }
        let mean = sum / n;
        let mut var = 0.0;
        for i in 0..rows {
            let d = get(i, j) - mean;
            var += d * d;
        }
        var /= n;
        if var > 0.0 {
            kept.push(j);
            means.push(mean);
            stds.push(var.sqrt());
        }
    }
    Standardization { kept, means, stds }
}

/// Train a probe on unstandardized rows (row-major `rows` x `cols`).
pub fn train_logistic(
    data: &[f64],
    rows: usize,
    cols: usize,
    labels: &[u8],
    opts: &LogisticOptions,
) -> Result<LogisticModel, ProbeError> {
    assert_eq!(data.len(), rows * cols);
    assert_eq!(labels.len(), rows);
    assert!(opts.lambda >= 0.0, "negative lambda");
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == rows {
        return Err(ProbeError::DegenerateLabels);
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    let stats = standardization_stats(|i, j| data[i * cols + j], rows, cols);
    let d = stats.kept.len();
    let mut z = vec![0.0f64; rows * d];
    for i in 0..rows {
        for (jj, &j) in stats.kept.iter().enumerate() {
            z[i * d + jj] = (data[i * cols + j] - stats.means[jj]) / stats.stds[jj];
        }
    }
    let fit = optimize(&z, rows, d, labels, opts);
    Ok(LogisticModel {
        dim: cols,
        kept: stats.kept,
        means: stats.means,
        stds: stats.stds,
        weights: fit.weights,
        intercept: fit.intercept,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn options(lambda: f64) -> LogisticOptions {
        LogisticOptions {
            lambda,
            tolerance: 1e-9,
            max_iterations: 2000,
        }
    }

    /// Independent convex-optimizer oracle: damped Newton with an explicit
    /// Hessian, solved by Gaussian elimination. Usable for small dims.
    fn newton_oracle(z: &[f64], rows: usize, cols: usize, labels: &[u8], lambda: f64) -> Vec<f64> {
        let dim = cols + 1;
        let mut params = vec![0.0f64; dim];
        for _ in 0..200 {
            let mut grad = vec![0.0f64; dim];
            let mut hess = vec![0.0f64; dim * dim];
            for i in 0..rows {
                let row = &z[i * cols..(i + 1) * cols];
                let mut m = params[cols];
                for j in 0..cols {
                    m += row[j] * params[j];
                }
                let p = 1.0 / (1.0 + (-m).exp());
                let r = p - f64::from(labels[i]);
                let w = p * (1.0 - p);
                for j in 0..dim {
                    let xj = if j < cols { row[j] } else { 1.0 };
                    grad[j] += r * xj;
                    for l in 0..dim {
                        let xl = if l < cols { row[l] } else { 1.0 };
                        hess[j * dim + l] += w * xj * xl;
                    }
                }
            }
            let n = rows as f64;
            for j in 0..dim {
                grad[j] /= n;
                for l in 0..dim {
                    hess[j * dim + l] /= n;
                }
            }
            for j in 0..cols {
                grad[j] += lambda * params[j];
                hess[j * dim + j] += lambda;
            }
            // Solve hess * delta = grad.
            let mut a = hess;
            let mut b = grad.clone();
            for col in 0..dim {
                let mut pivot = col;
                for r2 in col + 1..dim {
                    if a[r2 * dim + col].abs() > a[pivot * dim + col].abs() {
                        pivot = r2;
                    }
                }
                for j in 0..dim {
                    a.swap(col * dim + j, pivot * dim + j);
                }
                b.swap(col, pivot);
                let diag = a[col * dim + col];
                for r2 in 0..dim {
                    if r2 == col || a[r2 * dim + col] == 0.0 {
                        continue;
                    }
                    let factor = a[r2 * dim + col] / diag;
                    for j in col..dim {
                        a[r2 * dim + j] -= factor * a[col * dim + j];
                    }
                    b[r2] -= factor * b[col];
                }
            }
            let mut delta = vec![0.0; dim];
            for j in 0..dim {
                delta[j] = b[j] / a[j * dim + j];
            }
            let mut max_step = 0.0f64;
            for j in 0..dim {
                params[j] -= delta[j];
                max_step = max_step.max(delta[j].abs());
            }
            if max_step < 1e-12 {
                break;
            }
        }
        params
    }

    #[test]
    fn symmetric_1d_problem() {
        // Negatives at -1, positives at +1: positive weight, zero
        // intercept by symmetry.
        let data = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let labels = vec![0, 1, 0, 1, 0, 1];
        let model = train_logistic(&data, 6, 1, &labels, &options(0.01)).unwrap();
        assert!(model.converged);
        let (w, b) = model.raw_weights();
        assert!(w[0] > 0.0);
        assert!(b.abs() < 1e-6, "intercept {b}");
    }

    #[test]
    fn label_swap_negates_weights_exactly() {
        let data = vec![
            0.3, -1.2, 0.9, 2.1, -0.7, 0.4, 1.5, -0.3, -2.0, 0.8, 0.1, 1.1,
        ];
        let labels = vec![0, 1, 1, 0, 1, 0];
        let swapped: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();
        let a = train_logistic(&data, 6, 2, &labels, &options(0.1)).unwrap();
        let b = train_logistic(&data, 6, 2, &swapped, &options(0.1)).unwrap();
        assert_eq!(a.kept, b.kept);
        assert_eq!(a.means, b.means);
        assert_eq!(a.stds, b.stds);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-7, "{wa} vs {wb}");
        }
        assert!((a.intercept + b.intercept).abs() < 1e-7);
    }

    #[test]
    fn separable_2d_reaches_full_training_accuracy() {
        let data = vec![
            0.0, 0.0, 1.0, 0.0, 0.0, 1.0, // class 0
            3.0, 3.0, 4.0, 3.0, 3.0, 4.0, // class 1
        ];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let model = train_logistic(&data, 6, 2, &labels, &options(1e-3)).unwrap();
        for i in 0..6 {
            let s = model.score(&data[i * 2..i * 2 + 2]);
            assert_eq!(u8::from(s > 0.0), labels[i], "row {i} score {s}");
        }
    }

    #[test]
    fn matches_newton_oracle_to_tight_tolerance() {
        // Deterministic pseudo-random small problem.
        let mut rng = crate::rng::Rng::seed_from_u64(11);
        let rows = 40;
        let cols = 3;
        let mut data = Vec::with_capacity(rows * cols);
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let x: Vec<f64> = (0..cols).map(|_| rng.next_unit_f64() * 4.0 - 2.0).collect();
            let logit = 1.5 * x[0] - 0.8 * x[1] + 0.2;
            labels.push(u8::from(rng.next_unit_f64() < 1.0 / (1.0 + (-logit as f64).exp())));
            data.extend(x);
        }
        if labels.iter().all(|&y| y == labels[0]) {
            panic!("degenerate draw");
        }
        let lambda = 0.05;
        let model = train_logistic(&data, rows, cols, &labels, &options(lambda)).unwrap();
        assert!(model.converged);

        // Oracle runs on the same standardized data.
        let d = model.kept.len();
        let mut z = vec![0.0; rows * d];
        for i in 0..rows {
            for (jj, &j) in model.kept.iter().enumerate() {
                z[i * d + jj] = (data[i * cols + j] - model.means[jj]) / model.stds[jj];
            }
        }
        let oracle = newton_oracle(&z, rows, d, &labels, lambda);
        for j in 0..d {
            assert!(
                (model.weights[j] - oracle[j]).abs() < 1e-5,
                "w[{j}]: {} vs {}",
                model.weights[j],
                oracle[j]
            );
        }
        assert!((model.intercept - oracle[d]).abs() < 1e-5);
    }

    #[test]
    fn zero_variance_dimensions_are_dropped() {
        let data = vec![
            5.0, -1.0, 5.0, 1.0, 5.0, -2.0, 5.0, 2.0,
        ];
        let labels = vec![0, 1, 0, 1];
        let model = train_logistic(&data, 4, 2, &labels, &options(0.01)).unwrap();
        assert_eq!(model.kept, vec![1]);
        let (w, _) = model.raw_weights();
        assert_eq!(w[0], 0.0);
        assert!(w[1] > 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![0.0, 1.0, 2.0, 3.0];
        let err = train_logistic(&data, 4, 1, &[1, 1, 1, 1], &options(0.1)).unwrap_err();
        assert!(matches!(err, ProbeError::DegenerateLabels));
    }

    #[test]
    fn iteration_cap_is_reported_not_fatal() {
        let data = vec![-1.0, 1.0, -1.0, 1.0];
        let labels = vec![0, 1, 0, 1];
        let opts = LogisticOptions {
            lambda: 1e-6,
            tolerance: 1e-14,
            max_iterations: 2,
        };
        let model = train_logistic(&data, 4, 1, &labels, &opts).unwrap();
        assert!(!model.converged);
        assert_eq!(model.iterations, 2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let z = vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0];
        let labels = vec![1, 0, 1];
        let params = vec![0.3, -0.2, 0.1];
        let lambda = 0.7;
        let mut grad = vec![0.0; 3];
        let base = objective(&z, 3, 2, &labels, lambda, &params, &mut grad);
        let eps = 1e-7;
        for j in 0..3 {
            let mut bumped = params.clone();
            bumped[j] += eps;
            let mut scratch = vec![0.0; 3];
            let f = objective(&z, 3, 2, &labels, lambda, &bumped, &mut scratch);
            let fd = (f - base) / eps;
            assert!(
                (fd - grad[j]).abs() < 1e-5,
                "grad[{j}]: fd {fd} vs analytic {}",
                grad[j]
            );
        }
    }
}

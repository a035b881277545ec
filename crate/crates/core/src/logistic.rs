//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, kept as the conventional benchmark for rare outcomes.

use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::math::{bernoulli_deviance, logit, sigmoid};
use crate::matrix::BinaryMatrix;
use crate::RiskModel;

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Fitted probabilities within about 1e-8 of 0 or 1. Checked before the
/// gradient test: under separation the gradient vanishes as the fit diverges.
const SEPARATION_ETA: f64 = 18.0;

/// Relative deviance increase still accepted as a full step.
const DEVIANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Some fitted probabilities were driven to 0 or 1; the MLE does not exist.
    Separation { max_abs_eta: f64 },
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub status: FitStatus,
    /// Max-norm of the log-likelihood gradient at the returned estimate.
    pub gradient_norm: f64,
    /// All-zero columns, excluded from the fit with coefficient 0.
    pub dropped: Vec<usize>,
}

impl LogisticModel {
    pub fn intercept_only(intercept: f64, p: usize) -> Self {
        LogisticModel {
            intercept,
            coefficients: vec![0.0; p],
            converged: true,
            iterations: 0,
            status: FitStatus::Converged,
            gradient_norm: 0.0,
            dropped: Vec::new(),
        }
    }

    fn eta(&self, row: &[u8]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .filter(|(&v, _)| v == 1)
                .map(|(_, &b)| b)
                .sum::<f64>()
    }
}

impl RiskModel for LogisticModel {
    fn n_predictors(&self) -> usize {
        self.coefficients.len()
    }

    fn risk(&self, row: &[u8]) -> f64 {
        sigmoid(self.eta(row))
    }
}

pub fn predict_logistic(m: &LogisticModel, x: &BinaryMatrix) -> Result<Vec<f64>> {
    m.predict(x)
}

/// Fits `P(y = 1 | x) = sigmoid(b0 + x . b)` by IRLS with step-halving.
///
/// Separation and non-convergence are reported through `converged = false`
/// and [`FitStatus`], not as errors.
pub fn fit_logistic(ds: &DataSet, max_iter: usize, tol: f64) -> Result<LogisticModel> {
    let n = ds.n();
    let p = ds.p();
    let pos = ds.positives();
    if pos == 0 || pos == n {
        return Err(Error::ConstantResponse);
    }
    let x = ds.x();
    let y = ds.y();

    let dropped: Vec<usize> = (0..p).filter(|&j| x.column_sum(j) == 0).collect();
    let active: Vec<usize> = (0..p).filter(|j| !dropped.contains(j)).collect();
    let k = active.len() + 1;
    // design column c: 0 is the intercept, c >= 1 is predictor active[c - 1]
    let cols_of = |row: &[u8]| -> Vec<usize> {
        std::iter::once(0)
            .chain(active.iter().enumerate().filter(|(_, &j)| row[j] == 1).map(|(c, _)| c + 1))
            .collect()
    };
    let row_cols: Vec<Vec<usize>> = x.iter_rows().map(cols_of).collect();
    let names = |c: usize| -> String {
        if c == 0 {
            "(intercept)".into()
        } else {
            ds.schema().names()[active[c - 1]].clone()
        }
    };

    let mut beta = vec![0.0; k];
    beta[0] = logit(pos as f64 / n as f64);
    let eta_of = |beta: &[f64]| -> Vec<f64> {
        row_cols
            .iter()
            .map(|cs| cs.iter().map(|&c| beta[c]).sum())
            .collect()
    };
    let deviance = |eta: &[f64]| -> f64 { eta.iter().zip(y).map(|(&f, &yi)| bernoulli_deviance(yi, f)).sum() };

    let mut eta = eta_of(&beta);
    let mut dev = deviance(&eta);
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for (cs, (&f, &yi)) in row_cols.iter().zip(eta.iter().zip(y)) {
            let mu = sigmoid(f);
            let r = yi as f64 - mu;
            let w = mu * (1.0 - mu);
            for (a, &ca) in cs.iter().enumerate() {
                grad[ca] += r;
                for &cb in &cs[..=a] {
                    hess[ca * k + cb] += w;
                }
            }
        }
        // lower triangle filled above; mirror it
        for a in 0..k {
            for b in 0..a {
                hess[b * k + a] = hess[a * k + b];
            }
        }
        let step = cholesky_solve(&mut hess, &grad, k).map_err(|c| Error::SingularMatrix {
            columns: vec![names(c)],
        })?;

        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let max_eta = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if max_eta > SEPARATION_ETA {
            status = FitStatus::Separation { max_abs_eta: max_eta };
            break;
        }
        if grad_norm < tol {
            status = FitStatus::Converged;
            break;
        }
        if iterations == max_iter {
            break;
        }
        iterations += 1;

        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let trial_eta = eta_of(&trial);
            let trial_dev = deviance(&trial_eta);
            // near the optimum the decrease is below the rounding of the sum
            if trial_dev <= dev + DEVIANCE_SLACK * dev.max(1.0) || scale < 1e-9 {
                beta = trial;
                eta = trial_eta;
                dev = trial_dev;
                break;
            }
            scale *= 0.5;
        }
    }

    let mut coefficients = vec![0.0; p];
    for (c, &j) in active.iter().enumerate() {
        coefficients[j] = beta[c + 1];
    }
    Ok(LogisticModel {
        intercept: beta[0],
        coefficients,
        converged: status == FitStatus::Converged,
        iterations,
        status,
        gradient_norm: grad_norm,
        dropped,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, overwritten).
/// On failure returns the index of the first column whose pivot vanished.
fn cholesky_solve(a: &mut [f64], b: &[f64], k: usize) -> std::result::Result<Vec<f64>, usize> {
    for j in 0..k {
        let diag = a[j * k + j];
        let mut d = diag;
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 1e-10 * diag.max(1e-300)) {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = s / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..k {
        for m in 0..i {
            z[i] -= a[i * k + m] * z[m];
        }
        z[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for m in i + 1..k {
            z[i] -= a[m * k + i] * z[m];
        }
        z[i] /= a[i * k + i];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{base_rate, PredictorSchema};

    fn data(rows: &[&[u8]], y: &[u8]) -> DataSet {
        let x = BinaryMatrix::from_rows(rows).unwrap();
        DataSet::new(PredictorSchema::numbered(x.cols()).unwrap(), x, y.to_vec()).unwrap()
    }

    #[test]
    fn zero_columns_give_intercept_only() {
        let rows: Vec<&[u8]> = vec![&[0, 0]; 20];
        let y: Vec<u8> = (0..20).map(|i| (i % 5 == 0) as u8).collect();
        let ds = data(&rows, &y);
        let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(m.converged);
        assert_eq!(m.dropped, vec![0, 1]);
        for p in predict_logistic(&m, ds.x()).unwrap() {
            assert!((p - base_rate(&ds)).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_predictor_has_zero_coefficient() {
        // x1 on for half of each class
        let mut rows: Vec<&[u8]> = Vec::new();
        let mut y = Vec::new();
        for (x1, yv, count) in [(1u8, 1u8, 3), (0, 1, 3), (1, 0, 10), (0, 0, 10)] {
            for _ in 0..count {
                rows.push(if x1 == 1 { &[1] } else { &[0] });
                y.push(yv);
            }
        }
        let m = fit_logistic(&data(&rows, &y), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() < DEFAULT_TOL);
    }

    #[test]
    fn separation_is_flagged() {
        let rows: Vec<&[u8]> = vec![&[1], &[1], &[0], &[0], &[0]];
        let m = fit_logistic(&data(&rows, &[1, 1, 0, 0, 0]), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(!m.converged);
        assert!(matches!(m.status, FitStatus::Separation { .. }));
    }

    #[test]
    fn constant_response_is_an_error() {
        let rows: Vec<&[u8]> = vec![&[1], &[0]];
        assert!(matches!(
            fit_logistic(&data(&rows, &[0, 0]), 50, 1e-8),
            Err(Error::ConstantResponse)
        ));
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let rows: Vec<&[u8]> = vec![&[1, 1], &[0, 0], &[1, 1], &[0, 0], &[1, 1], &[0, 0]];
        let err = fit_logistic(&data(&rows, &[1, 0, 0, 1, 0, 0]), 50, 1e-8).unwrap_err();
        match err {
            Error::SingularMatrix { columns } => assert_eq!(columns, vec!["x2".to_string()]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn intercept_only_predictions() {
        let m = LogisticModel::intercept_only(0.0, 3);
        let x = BinaryMatrix::from_rows(&[[1, 0, 1], [0, 0, 0]]).unwrap();
        assert_eq!(predict_logistic(&m, &x).unwrap(), vec![0.5, 0.5]);
        let m = LogisticModel::intercept_only(logit(0.05), 3);
        for p in predict_logistic(&m, &x).unwrap() {
            assert!((p - 0.05).abs() < 1e-15);
        }
        let bad = BinaryMatrix::zeros(1, 2);
        assert!(matches!(predict_logistic(&m, &bad), Err(Error::DimensionMismatch { .. })));
    }
}

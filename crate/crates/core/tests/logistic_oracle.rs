mod common;

use proptest::prelude::*;
use rarerisk::dataset::{synthesize, DataSet, PredictorSchema, SynthSpec};
use rarerisk::logistic::{fit_logistic, FitStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use rarerisk::math::{logit, sigmoid};
use rarerisk::{BinaryMatrix, RiskModel};

fn dataset(x: Vec<Vec<u8>>, y: Vec<u8>) -> DataSet {
    let p = x[0].len();
    DataSet::new(PredictorSchema::numbered(p).unwrap(), BinaryMatrix::from_rows(&x).unwrap(), y).unwrap()
}

/// Log-likelihood of `(b0, b)` on `ds`.
fn log_lik(ds: &DataSet, b0: f64, b: &[f64]) -> f64 {
    ds.x()
        .iter_rows()
        .zip(ds.y())
        .map(|(r, &y)| {
            let eta = b0 + r.iter().zip(b).map(|(&v, &c)| v as f64 * c).sum::<f64>();
            let p = sigmoid(eta);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-10 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate ascent with golden-section line searches.
fn coordinate_oracle(ds: &DataSet) -> (f64, Vec<f64>) {
    let p = ds.p();
    let mut b0 = 0.0;
    let mut b = vec![0.0; p];
    for _ in 0..400 {
        let before = (b0, b.clone());
        b0 = golden_max(|v| log_lik(ds, v, &b), b0 - 5.0, b0 + 5.0);
        for j in 0..p {
            let mut trial = b.clone();
            let v = golden_max(
                |v| {
                    trial[j] = v;
                    log_lik(ds, b0, &trial)
                },
                b[j] - 5.0,
                b[j] + 5.0,
            );
            b[j] = v;
        }
        let moved = (b0 - before.0).abs() + b.iter().zip(&before.1).map(|(a, c)| (a - c).abs()).sum::<f64>();
        if moved < 1e-10 {
            break;
        }
    }
    (b0, b)
}

#[test]
fn single_predictor_matches_closed_form() {
    // With one indicator the MLE reproduces the two cell rates exactly.
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (xv, pos, neg) in [(0u8, 7, 53), (1u8, 19, 41)] {
        for k in 0..pos + neg {
            x.push(vec![xv]);
            y.push(u8::from(k < pos));
        }
    }
    let ds = dataset(x, y);
    let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
    assert_eq!(m.status, FitStatus::Converged);
    let b0 = logit(7.0 / 60.0);
    let b1 = logit(19.0 / 60.0) - b0;
    assert!((m.intercept - b0).abs() < 1e-6);
    assert!((m.coefficients[0] - b1).abs() < 1e-6);
}

#[test]
fn two_predictors_match_coordinate_oracle() {
    for seed in 0..8 {
        let ds = synthesize(&SynthSpec {
            base_rate: 0.2,
            ..SynthSpec::planted(300, 2, 2, 0.8, 0.4, seed)
        })
        .unwrap();
        let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let (b0, b) = coordinate_oracle(&ds);
        assert!((m.intercept - b0).abs() < 1e-6, "seed {seed}: {} vs {b0}", m.intercept);
        for j in 0..2 {
            assert!((m.coefficients[j] - b[j]).abs() < 1e-6, "seed {seed} coef {j}");
        }
    }
}

#[test]
fn score_equations_hold_at_the_estimate() {
    for seed in 0..5 {
        let ds = synthesize(&SynthSpec::planted(4000, 12, 4, 0.6, 0.3, seed)).unwrap();
        let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert_eq!(m.status, FitStatus::Converged);
        let p = m.predict(ds.x()).unwrap();
        let resid: Vec<f64> = ds.y().iter().zip(&p).map(|(&y, &pi)| y as f64 - pi).collect();
        let n = ds.n() as f64;
        assert!(resid.iter().sum::<f64>().abs() / n < 1e-8);
        for j in 0..ds.p() {
            let s: f64 = (0..ds.n()).filter(|&i| ds.x().get(i, j) == 1).map(|i| resid[i]).sum();
            assert!(s.abs() / n < 1e-8, "seed {seed} column {j}: {s}");
        }
    }
}

#[test]
fn fitted_mean_equals_base_rate() {
    let ds = synthesize(&SynthSpec::planted(5000, 6, 3, 0.5, 0.5, 4)).unwrap();
    let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
    let p = m.predict(ds.x()).unwrap();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    assert!((mean - ds.positives() as f64 / ds.n() as f64).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimate_is_a_local_maximum(seed in 0u64..10_000, p in 1usize..4) {
        let ds = synthesize(&SynthSpec {
            base_rate: 0.15,
            ..SynthSpec::planted(400, p, p, 0.7, 0.5, seed)
        })
        .unwrap();
        let m = fit_logistic(&ds, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        prop_assume!(m.status == FitStatus::Converged);
        let best = log_lik(&ds, m.intercept, &m.coefficients);
        for j in 0..p {
            for step in [-1e-3, 1e-3] {
                let mut b = m.coefficients.clone();
                b[j] += step;
                prop_assert!(log_lik(&ds, m.intercept, &b) <= best + 1e-9);
            }
        }
        for step in [-1e-3, 1e-3] {
            prop_assert!(log_lik(&ds, m.intercept + step, &m.coefficients) <= best + 1e-9);
        }
    }
}

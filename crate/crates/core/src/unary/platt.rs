//! Sigmoid calibration of decision values.
//!
//! Fits P(positive | f) = 1 / (1 + exp(a f + b)) by regularized maximum
//! likelihood with Newton steps and backtracking line search. Targets are
//! smoothed class frequencies rather than hard 0/1 labels, which keeps the
//! fit defined when one side has few examples.

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const SIGMA: f64 = 1e-12;
const GRAD_EPS: f64 = 1e-5;

/// Fits (a, b) from decision values and binary labels.
pub(crate) fn fit_sigmoid(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let num_pos = labels.iter().filter(|&&l| l).count();
    let num_neg = labels.len() - num_pos;
    if num_pos == 0 || num_neg == 0 {
        return Err(Error::Calibration {
            msg: format!(
                "calibration set needs both classes, got {num_pos} positive and {num_neg} negative"
            ),
        });
    }

    let hi = (num_pos as f64 + 1.0) / (num_pos as f64 + 2.0);
    let lo = 1.0 / (num_neg as f64 + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let mut a = 0.0f64;
    let mut b = ((num_neg as f64 + 1.0) / (num_pos as f64 + 1.0)).ln();
    let mut fval = objective(scores, &targets, a, b);

    for _ in 0..MAX_ITER {
        // Gradient and Hessian of the negative log likelihood.
        let (mut h11, mut h22) = (SIGMA, SIGMA);
        let (mut h21, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for (&f, &t) in scores.iter().zip(&targets) {
            let z = a * f + b;
            let (p, q) = split_sigmoid(z);
            let d1 = t - p;
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < GRAD_EPS && g2.abs() < GRAD_EPS {
            break;
        }

        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0f64;
        loop {
            let na = a + step * da;
            let nb = b + step * db;
            let nf = objective(scores, &targets, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
            if step < MIN_STEP {
                return Err(Error::Calibration {
                    msg: "line search failed".into(),
                });
            }
        }
    }

    if a > 0.0 {
        return Err(Error::Calibration {
            msg: format!(
                "fitted slope {a} is positive; decision values anti-correlate with labels"
            ),
        });
    }
    Ok((a, b))
}

/// P(z) = 1/(1+e^z) and its complement, computed without overflow.
fn split_sigmoid(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = z.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    }
}

fn objective(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    let mut v = 0.0;
    for (&f, &t) in scores.iter().zip(targets) {
        let z = a * f + b;
        // Cross entropy written to stay finite for large |z|.
        if z >= 0.0 {
            v += t * z + (1.0 + (-z).exp()).ln();
        } else {
            v += (t - 1.0) * z + (1.0 + z.exp()).ln();
        }
    }
    v
}

/// Applies the fitted sigmoid, clamping into [eps, 1 - eps].
pub(crate) fn apply_sigmoid(a: f64, b: f64, score: f64, eps: f64) -> f64 {
    let z = a * score + b;
    let (p, _) = split_sigmoid(z);
    p.clamp(eps, 1.0 - eps)
}

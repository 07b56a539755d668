//! Sequential minimal optimization for the C-SVC dual.
//!
//! Minimizes (1/2) a'Qa - e'a subject to 0 <= a <= C and y'a = 0, where
//! Q_ij = y_i y_j K_ij. Working pairs are chosen by maximal KKT violation:
//! i maximizes -y G over the up-set, j minimizes it over the low-set, and the
//! solver stops when the gap falls to `tol`. Index scans run in ascending
//! order with strict improvement, so ties resolve to the smallest index and
//! the pivot sequence is deterministic.

use std::collections::VecDeque;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Lower bound for the pair curvature; guards division when two training
/// points coincide.
const TAU: f64 = 1e-12;

pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Final KKT violation m - M; at most `tol` on success.
    pub violation: f64,
}

/// Lazily computed kernel rows with FIFO eviction.
pub(crate) struct KernelCache<'a> {
    features: &'a [&'a [f64]],
    rows: Vec<Option<Rc<[f64]>>>,
    resident: VecDeque<usize>,
    budget: usize,
}

impl<'a> KernelCache<'a> {
    pub fn new(features: &'a [&'a [f64]], budget: usize) -> Self {
        let n = features.len();
        KernelCache {
            features,
            rows: vec![None; n],
            resident: VecDeque::new(),
            budget: budget.max(2),
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| super::intersection_kernel_unchecked(f, f))
            .collect()
    }

    pub fn row(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(row) = &self.rows[i] {
            return Rc::clone(row);
        }
        if self.resident.len() >= self.budget {
            if let Some(evict) = self.resident.pop_front() {
                self.rows[evict] = None;
            }
        }
        let fi = self.features[i];
        let row: Rc<[f64]> = self
            .features
            .iter()
            .map(|fj| super::intersection_kernel_unchecked(fi, fj))
            .collect();
        self.rows[i] = Some(Rc::clone(&row));
        self.resident.push_back(i);
        row
    }
}

pub(crate) fn solve(
    cache: &mut KernelCache<'_>,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SmoSolution> {
    let n = y.len();
    debug_assert!(n >= 2);
    let diag = cache.diag();
    let mut alpha = vec![0.0f64; n];
    // Gradient of the dual objective; alpha = 0 gives -1 everywhere.
    let mut grad = vec![-1.0f64; n];

    let mut iterations = 0;
    let mut violation;
    loop {
        // Maximal violating pair.
        let mut m = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut big_m = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && v > m {
                m = v;
                i = t;
            }
            if in_low && v < big_m {
                big_m = v;
                j = t;
            }
        }
        violation = m - big_m;
        if violation <= tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                tol,
                iterations,
                violation,
            });
        }
        iterations += 1;

        let row_i = cache.row(i);
        let row_j = cache.row(j);
        let old_ai = alpha[i];
        let old_aj = alpha[j];

        // Two-variable subproblem along the equality constraint.
        let quad = (diag[i] + diag[j] - 2.0 * y[i] * y[j] * row_i[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            } else if diff <= 0.0 && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            } else if sum <= c && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            } else if sum <= c && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let dai = alpha[i] - old_ai;
        let daj = alpha[j] - old_aj;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * row_i[t] * dai + y[j] * row_j[t] * daj);
        }
    }

    // Bias from free support vectors; midpoint of the violation interval
    // when none are strictly inside the box.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += -y[t] * grad[t];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && v > m {
                m = v;
            }
            if in_low && v < big_m {
                big_m = v;
            }
        }
        (m + big_m) / 2.0
    };

    Ok(SmoSolution {
        alpha,
        bias,
        violation: violation.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_points(points: &[&[f64]], labels: &[f64], c: f64) -> SmoSolution {
        let mut cache = KernelCache::new(points, points.len());
        solve(&mut cache, labels, c, 1e-6, 1_000_000).unwrap()
    }

    #[test]
    fn two_point_problem_matches_closed_form() {
        // One point per class: alpha_1 = alpha_2 = a, objective
        // a^2/2 (K11 + K22 - 2 K12) - 2a minimized at
        // a = 2 / (K11 + K22 - 2K12), capped at C.
        let p1 = [0.8, 0.1];
        let p2 = [0.1, 0.6];
        let k11 = 0.9;
        let k22 = 0.7;
        let k12 = 0.2;
        let unconstrained = 2.0 / (k11 + k22 - 2.0 * k12);
        let sol = solve_points(&[&p1, &p2], &[1.0, -1.0], 10.0);
        assert!((sol.alpha[0] - unconstrained).abs() < 1e-6);
        assert!((sol.alpha[1] - unconstrained).abs() < 1e-6);

        let capped = solve_points(&[&p1, &p2], &[1.0, -1.0], 1.0);
        assert!((capped.alpha[0] - 1.0).abs() < 1e-12);
        assert!((capped.alpha[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_constraint_holds() {
        let pts: Vec<Vec<f64>> = vec![
            vec![0.1, 0.2],
            vec![0.2, 0.1],
            vec![0.7, 0.8],
            vec![0.8, 0.9],
            vec![0.3, 0.3],
        ];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let y = [-1.0, -1.0, 1.0, 1.0, -1.0];
        let sol = solve_points(&refs, &y, 2.0);
        let balance: f64 = sol.alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();
        assert!(balance.abs() < 1e-9, "sum y_i alpha_i = {balance}");
        for &a in &sol.alpha {
            assert!((-1e-12..=2.0 + 1e-12).contains(&a));
        }
        assert!(sol.violation <= 1e-6);
    }

    #[test]
    fn cache_eviction_does_not_change_solution() {
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![0.1 * i as f64 + 0.05, 0.9 - 0.1 * i as f64])
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let y = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let full = {
            let mut cache = KernelCache::new(&refs, 8);
            solve(&mut cache, &y, 1.5, 1e-6, 1_000_000).unwrap()
        };
        let tiny = {
            let mut cache = KernelCache::new(&refs, 2);
            solve(&mut cache, &y, 1.5, 1e-6, 1_000_000).unwrap()
        };
        assert_eq!(full.alpha, tiny.alpha);
        assert_eq!(full.bias, tiny.bias);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let pts: Vec<Vec<f64>> = vec![vec![0.1], vec![0.9], vec![0.2], vec![0.8]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let y = [-1.0, 1.0, -1.0, 1.0];
        let mut cache = KernelCache::new(&refs, 4);
        let got = solve(&mut cache, &y, 1.0, 1e-9, 1);
        assert!(matches!(got, Err(Error::NoConvergence { .. })));
    }
}

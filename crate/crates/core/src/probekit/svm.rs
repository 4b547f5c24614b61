// SPDX-License-Identifier: MIT OR Apache-2.0

//! L2-regularized hinge-loss linear SVM solved by dual coordinate descent.
//!
//! The intercept is learned as the weight of a constant feature equal to 1,
//! so it is regularized together with the weights. The dual is
//!
//! ```text
//! max  sum(a) - 1/2 |sum_i a_i y_i x~_i|^2    s.t. 0 <= a_i <= C
//! ```
//!
//! with `x~ = [x, 1]`. Each coordinate step maximizes the dual exactly along
//! one variable, so the objective never decreases. Coordinates are visited in
//! a fresh permutation every epoch drawn from a ChaCha stream seeded by
//! `ProbeConfig::seed`; no shrinking, so the visit order is the only source
//! of variation and results are bit-reproducible.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ProbeConfig, ProbeError, ProbeKind, ProbeModel};
use crate::linalg::{axpy, dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SvmFit<T> {
    pub model: ProbeModel<T>,
    /// Dual objective after each epoch.
    pub dual_objective: Vec<T>,
    pub epochs: usize,
    pub converged: bool,
}

fn check_inputs<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<(), ProbeError> {
    if y.len() != x.rows() {
        return Err(ProbeError::Dimension {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if !x.is_finite() {
        return Err(ProbeError::NonFinite);
    }
    let mut pos = false;
    let mut neg = false;
    for &v in y {
        if v == T::one() {
            pos = true;
        } else if v == -T::one() {
            neg = true;
        } else {
            return Err(ProbeError::Invalid(format!("SVM labels must be +1 or -1, got {v}")));
        }
    }
    if !(pos && neg) {
        return Err(ProbeError::SingleClass);
    }
    Ok(())
}

pub fn train_svm<T: Scalar>(x: &Matrix<T>, y: &[T], cfg: &ProbeConfig) -> Result<ProbeModel<T>, ProbeError> {
    train_svm_traced(x, y, cfg).map(|f| f.model)
}

pub fn train_svm_traced<T: Scalar>(x: &Matrix<T>, y: &[T], cfg: &ProbeConfig) -> Result<SvmFit<T>, ProbeError> {
    cfg.check()?;
    check_inputs(x, y)?;
    let n = x.rows();
    let d = x.cols();
    let c = T::of(cfg.c);
    let tol = T::of(cfg.tol);

    // diagonal of Q: |x_i|^2 + 1 (bias feature)
    let qd: Vec<T> = x.iter_rows().map(|r| dot(r, r) + T::one()).collect();
    let mut alpha = vec![T::zero(); n];
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    while epochs < cfg.max_iter {
        order.shuffle(&mut rng);
        let mut pg_max = T::neg_infinity();
        let mut pg_min = T::infinity();
        for &i in &order {
            let xi = x.row(i);
            let g = y[i] * (dot(&w, xi) + b) - T::one();
            let pg = if alpha[i] == T::zero() {
                g.min(T::zero())
            } else if alpha[i] == c {
                g.max(T::zero())
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != T::zero() {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(T::zero()).min(c);
                let step = (alpha[i] - old) * y[i];
                if step != T::zero() {
                    axpy(step, xi, &mut w);
                    b += step;
                }
            }
        }
        epochs += 1;
        trace.push(dual_objective(&alpha, &w, b));
        if pg_max - pg_min <= tol {
            converged = true;
            break;
        }
    }

    Ok(SvmFit {
        model: ProbeModel {
            kind: ProbeKind::Svm,
            weights: w,
            intercept: b,
            standardizer: None,
        },
        dual_objective: trace,
        epochs,
        converged,
    })
}

fn dual_objective<T: Scalar>(alpha: &[T], w: &[T], b: T) -> T {
    let sum: T = alpha.iter().copied().sum();
    sum - T::of(0.5) * (dot(w, w) + b * b)
}

/// Primal objective `1/2 (|w|^2 + b^2) + C sum(hinge)`; used to check duality gaps.
pub fn primal_objective<T: Scalar>(model: &ProbeModel<T>, x: &Matrix<T>, y: &[T], c: f64) -> T {
    let reg = T::of(0.5) * (dot(&model.weights, &model.weights) + model.intercept * model.intercept);
    let hinge: T = x
        .iter_rows()
        .zip(y)
        .map(|(r, &yi)| (T::one() - yi * (dot(&model.weights, r) + model.intercept)).max(T::zero()))
        .sum();
    reg + T::of(c) * hinge
}

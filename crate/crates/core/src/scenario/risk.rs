//! Violation-probability bound `b(k)` for a solution of complexity `k`.
//!
//! `b(k) = 1 - t(k)` where `t(k)` is the root in `(0, 1)` of
//!
//! ```text
//! (beta / M) * sum_{m=k}^{M-1} C(m, k) t^(m-k)  -  C(M, k) t^(M-k)  =  0
//! ```
//!
//! and `b(M) = 1`. Both terms are compared in log space so that `M` in the
//! hundreds does not overflow the binomials.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const ROOT_TOL: f64 = 1e-10;

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `log(lhs) - log(rhs)` of the defining equation; positive below the root.
pub fn log_residual(t: f64, k: usize, m: usize, beta: f64) -> f64 {
    let ln_t = t.ln();
    let lhs = (beta / m as f64).ln()
        + log_sum_exp((k..m).map(|j| ln_binomial(j, k) + (j - k) as f64 * ln_t));
    let rhs = ln_binomial(m, k) + (m - k) as f64 * ln_t;
    lhs - rhs
}

pub fn risk_bound(k: usize, m: usize, beta: f64) -> Result<f64> {
    if m == 0 || k > m {
        return Err(Error::InvalidArgument(format!("need 0 <= k <= M and M >= 1, got k={k}, M={m}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
    }
    if k == m {
        return Ok(1.0);
    }
    // Near t = 0 the residual tends to +inf; at t = 1 it equals
    // ln(beta (M - k) / (M (k + 1))) <= 0.
    let at_one = log_residual(1.0, k, m, beta);
    if at_one > 1e-12 {
        return Err(Error::RootNotBracketed { k, m, beta });
    }
    if at_one >= -1e-12 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if log_residual(mid, k, m, beta) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 - 0.5 * (lo + hi))
}

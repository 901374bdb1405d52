//! Error norms, convergence-order fits, the flop cost model and the
//! experiment drivers built on them.

mod experiments;
pub mod plot;

pub use experiments::*;

use crate::error::{Error, Result};
use crate::operator::Method;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub two: f64,
    pub max: f64,
}

/// Relative two- and max-norm errors over all entries.
pub fn relative_errors(approx: &[f64], exact: &[f64]) -> Result<ErrorNorms> {
    if approx.len() != exact.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} approximate vs {} exact values",
            approx.len(),
            exact.len()
        )));
    }
    let (mut d2, mut e2, mut dmax, mut emax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (a, e) in approx.iter().zip(exact) {
        let d = a - e;
        d2 += d * d;
        e2 += e * e;
        dmax = dmax.max(d.abs());
        emax = emax.max(e.abs());
    }
    if !(e2 > 0.0) || !(emax > 0.0) {
        return Err(Error::arg("exact values have zero norm"));
    }
    Ok(ErrorNorms {
        two: (d2 / e2).sqrt(),
        max: dmax / emax,
    })
}

/// Least-squares slope of `log e` against `log N^{-1/2}` over the last
/// three levels, so that `e ~ N^{-beta/2}`.
pub fn fit_order(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() {
        return Err(Error::arg("node counts and errors differ in length"));
    }
    if ns.len() < 3 {
        return Err(Error::arg(format!("order fit needs 3 levels, got {}", ns.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::arg(format!("errors must be positive, got {e}")));
    }
    let k = ns.len() - 3;
    let xs: Vec<f64> = ns[k..].iter().map(|&n| -0.5 * (n as f64).ln()).collect();
    let ys: Vec<f64> = errors[k..].iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / 3.0;
    let ym = ys.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("order fit needs distinct node counts"));
    }
    Ok(sxy / sxx)
}

/// Leading-order flop estimates for building and applying an operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    pub setup_flops: f64,
    pub eval_flops: f64,
}

/// GMLS setup `2 sum n_i L^2`; RBF-FD setup `(2/3) sum (n_i + L)^3`;
/// evaluation `2 sum n_i` for both.
pub fn cost_model(method: Method, stencil_sizes: &[usize], basis_size: usize) -> CostEstimate {
    let l = basis_size as f64;
    let setup_flops = stencil_sizes
        .iter()
        .map(|&n| {
            let n = n as f64;
            match method {
                Method::Gmls => 2.0 * n * l * l,
                Method::Rbffd => 2.0 / 3.0 * (n + l).powi(3),
            }
        })
        .sum();
    let eval_flops = 2.0 * stencil_sizes.iter().sum::<usize>() as f64;
    CostEstimate { setup_flops, eval_flops }
}

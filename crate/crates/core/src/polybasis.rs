//! Scaled bivariate monomial basis of total degree `<= degree`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Derivatives used by the surface operators, in local tangent-plane
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DerivOp {
    Dx,
    Dy,
    Dxx,
    Dxy,
    Dyy,
}

impl DerivOp {
    pub const ALL: [DerivOp; 5] = [DerivOp::Dx, DerivOp::Dy, DerivOp::Dxx, DerivOp::Dxy, DerivOp::Dyy];
    pub const FIRST: [DerivOp; 2] = [DerivOp::Dx, DerivOp::Dy];

    pub fn order(self) -> usize {
        let (a, b) = self.exponents();
        (a + b) as usize
    }

    /// Differentiation multi-index `(in x, in y)`.
    pub fn exponents(self) -> (u32, u32) {
        match self {
            DerivOp::Dx => (1, 0),
            DerivOp::Dy => (0, 1),
            DerivOp::Dxx => (2, 0),
            DerivOp::Dxy => (1, 1),
            DerivOp::Dyy => (0, 2),
        }
    }

    /// Operators available at polynomial degree `degree`.
    pub fn up_to_degree(degree: usize) -> &'static [DerivOp] {
        if degree >= 2 {
            &Self::ALL
        } else {
            &Self::FIRST
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyBasis {
    degree: usize,
    scale: f64,
    exponents: Vec<(u32, u32)>,
}

pub const MAX_DEGREE: usize = 10;

pub fn basis_size(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

impl PolyBasis {
    /// Monomials `(x/h)^a (y/h)^b`, `a + b <= degree`, graded lexicographic
    /// (`1, x, y, x^2, xy, y^2, ...`).
    pub fn new(degree: usize, scale: f64) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::arg(format!("polynomial degree {degree} exceeds 10")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::arg(format!("basis scale {scale} must be positive")));
        }
        let mut exponents = Vec::with_capacity(basis_size(degree));
        for d in 0..=degree as u32 {
            for a in (0..=d).rev() {
                exponents.push((a, d - a));
            }
        }
        Ok(PolyBasis {
            degree,
            scale,
            exponents,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn size(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.exponents
    }

    /// Writes `p_k(x/h, y/h)` for every basis function into `out`.
    pub fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let (xs, ys) = (x / self.scale, y / self.scale);
        let mut px = [1.0; 11];
        let mut py = [1.0; 11];
        for k in 1..=self.degree {
            px[k] = px[k - 1] * xs;
            py[k] = py[k - 1] * ys;
        }
        for (o, &(a, b)) in out.iter_mut().zip(&self.exponents) {
            *o = px[a as usize] * py[b as usize];
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.size());
        self.eval_into(x, y, v.as_mut_slice());
        v
    }

    /// Vandermonde-type matrix, one row per point.
    pub fn vandermonde(&self, coords: &[[f64; 2]]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(coords.len(), self.size());
        let mut row = vec![0.0; self.size()];
        for (j, c) in coords.iter().enumerate() {
            self.eval_into(c[0], c[1], &mut row);
            for (k, v) in row.iter().enumerate() {
                p[(j, k)] = *v;
            }
        }
        p
    }

    /// `d/d(op) p_k` at the origin, in unscaled coordinates. Only the
    /// monomial matching the operator's multi-index is nonzero.
    pub fn derivative_at_origin(&self, op: DerivOp) -> Result<DVector<f64>> {
        if op.order() > self.degree {
            return Err(Error::arg(format!(
                "derivative of order {} needs degree >= {}, basis has {}",
                op.order(),
                op.order(),
                self.degree
            )));
        }
        let target = op.exponents();
        let (a, b) = target;
        let factorial = |n: u32| (1..=n).product::<u32>() as f64;
        let value = factorial(a) * factorial(b) / self.scale.powi((a + b) as i32);
        let mut v = DVector::zeros(self.size());
        if let Some(k) = self.exponents.iter().position(|&e| e == target) {
            v[k] = value;
        }
        Ok(v)
    }
}

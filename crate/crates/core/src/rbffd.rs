//! Polyharmonic spline plus polynomial (PHS+Poly) RBF-FD weights and the
//! tangent-plane surface operators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{require_full_rank, PivotedQr};
use crate::localframe::ProjectedStencil;
use crate::polybasis::{basis_size, DerivOp, PolyBasis, MAX_DEGREE};
use crate::weights::{combine, SdoKind, SdoRows, StencilWeights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbffdConfig {
    pub degree: usize,
    /// PHS order parameter: `phi(r) = r^(2 kappa + 1)`.
    pub kappa: usize,
    pub tau: f64,
}

impl RbffdConfig {
    /// `kappa` defaults to the polynomial degree.
    pub fn new(degree: usize, tau: f64) -> Self {
        RbffdConfig {
            degree,
            kappa: degree,
            tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.degree > MAX_DEGREE {
            return Err(Error::arg(format!("RBF-FD degree {} out of range", self.degree)));
        }
        if self.kappa > self.degree {
            return Err(Error::arg(format!(
                "kappa {} must not exceed the degree {}",
                self.kappa, self.degree
            )));
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(Error::arg(format!("tau must be >= 1, got {}", self.tau)));
        }
        Ok(())
    }

    /// Derivatives this configuration can produce.
    pub fn available_ops(&self) -> &'static [DerivOp] {
        if self.kappa == 0 {
            &DerivOp::FIRST
        } else {
            DerivOp::up_to_degree(self.degree)
        }
    }
}

/// `r^(2 kappa + 1)`.
pub fn phs_kernel(r: f64, kappa: usize) -> f64 {
    r.powi(2 * kappa as i32 + 1)
}

/// Derivative `op` of `x -> phi(|x - x_j|)` evaluated at `x = 0`.
pub fn phs_derivative_at_origin(xj: [f64; 2], kappa: usize, op: DerivOp) -> Result<f64> {
    if kappa == 0 && op.order() == 2 {
        return Err(Error::arg("second derivatives need kappa >= 1"));
    }
    let k = (2 * kappa + 1) as f64;
    let (dx, dy) = (-xj[0], -xj[1]);
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Ok(0.0);
    }
    let r = r2.sqrt();
    let rk2 = r.powf(k - 2.0);
    let rk4 = rk2 / r2;
    Ok(match op {
        DerivOp::Dx => k * rk2 * dx,
        DerivOp::Dy => k * rk2 * dy,
        DerivOp::Dxx => k * rk2 + k * (k - 2.0) * rk4 * dx * dx,
        DerivOp::Dxy => k * (k - 2.0) * rk4 * dx * dy,
        DerivOp::Dyy => k * rk2 + k * (k - 2.0) * rk4 * dy * dy,
    })
}

/// `phs_derivative_at_origin` for every stencil member.
pub fn phs_derivatives_at_origin_row(coords: &[[f64; 2]], kappa: usize, op: DerivOp) -> Result<Vec<f64>> {
    coords.iter().map(|&c| phs_derivative_at_origin(c, kappa, op)).collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// LU factorization of the scaled saddle-point matrix `[A P; P^T 0]`.
struct Saddle {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    size: usize,
    basis: PolyBasis,
    scaled: Vec<[f64; 2]>,
    scale: f64,
    kappa: usize,
}

impl Saddle {
    fn new(coords: &[[f64; 2]], degree: usize, kappa: usize, scale: f64) -> Result<Self> {
        let n = coords.len();
        let size = basis_size(degree);
        if n < size {
            return Err(Error::StencilTooSmall {
                points: n,
                required: size,
                degree,
            });
        }
        if !(scale > 0.0) {
            return Err(Error::DegenerateGeometry("stencil has zero radius".into()));
        }
        let scaled: Vec<[f64; 2]> = coords.iter().map(|c| [c[0] / scale, c[1] / scale]).collect();
        let basis = PolyBasis::new(degree, 1.0)?;
        let p = basis.vandermonde(&scaled);
        require_full_rank(&PivotedQr::new(p.clone()), degree)?;

        let mut m = DMatrix::zeros(n + size, n + size);
        for i in 0..n {
            for j in 0..i {
                let v = phs_kernel(dist(scaled[i], scaled[j]), kappa);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            for k in 0..size {
                m[(i, n + k)] = p[(i, k)];
                m[(n + k, i)] = p[(i, k)];
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Unisolvent {
                degree,
                rank: size.saturating_sub(1),
                size,
            });
        }
        Ok(Saddle {
            lu,
            n,
            size,
            basis,
            scaled,
            scale,
            kappa,
        })
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = self
            .lu
            .solve(rhs)
            .ok_or_else(|| Error::Internal("saddle solve failed".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unisolvent {
                degree: self.basis.degree(),
                rank: self.size.saturating_sub(1),
                size: self.size,
            });
        }
        Ok(x)
    }
}

/// Weight vectors for the requested operators from one LU factorization.
pub fn derivative_weights(proj: &ProjectedStencil, cfg: &RbffdConfig, ops: &[DerivOp]) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let saddle = Saddle::new(&proj.coords, cfg.degree, cfg.kappa, proj.stencil.h_max)?;
    let (n, size) = (saddle.n, saddle.size);
    let mut rhs = DMatrix::zeros(n + size, ops.len());
    for (col, &op) in ops.iter().enumerate() {
        let phi = phs_derivatives_at_origin_row(&saddle.scaled, saddle.kappa, op)?;
        let poly = saddle.basis.derivative_at_origin(op)?;
        for j in 0..n {
            rhs[(j, col)] = phi[j];
        }
        for k in 0..size {
            rhs[(n + k, col)] = poly[k];
        }
    }
    let x = saddle.solve(&rhs)?;
    Ok(ops
        .iter()
        .enumerate()
        .map(|(col, &op)| {
            let s = saddle.scale.powi(op.order() as i32);
            (0..n).map(|j| x[(j, col)] / s).collect()
        })
        .collect())
}

/// All derivative weights the configuration supports, together with the
/// derivatives of the height interpolant at the origin.
pub fn rbffd_derivative_weights(proj: &ProjectedStencil, cfg: &RbffdConfig) -> Result<StencilWeights> {
    let ops = cfg.available_ops();
    let w = derivative_weights(proj, cfg, ops)?;
    StencilWeights::from_ops(proj.frame, ops, w, &proj.heights)
}

/// Tangent-plane operator rows.
pub fn rbffd_rows(w: &StencilWeights, kind: SdoKind) -> Result<SdoRows> {
    let rot = &w.frame.rotation;
    let rows = match kind {
        SdoKind::Laplacian => {
            let s = w.require_second()?;
            vec![combine(&[(1.0, &s.dxx), (1.0, &s.dyy)])]
        }
        // Gradient: component c of R (d_x u, d_y u, 0).
        // Divergence: d_x and d_y of the first two rotated input components.
        SdoKind::Gradient | SdoKind::Divergence => (0..3)
            .map(|c| combine(&[(rot[(c, 0)], &w.dx), (rot[(c, 1)], &w.dy)]))
            .collect(),
    };
    Ok(SdoRows { kind, rows })
}

pub fn rbffd_sdo_weights(proj: &ProjectedStencil, cfg: &RbffdConfig, kind: SdoKind) -> Result<SdoRows> {
    if cfg.degree < kind.min_degree() {
        return Err(Error::arg(format!("{kind} needs degree >= {}", kind.min_degree())));
    }
    rbffd_rows(&rbffd_derivative_weights(proj, cfg)?, kind)
}

/// PHS+Poly interpolant of scattered data in the plane.
#[derive(Clone, Debug)]
pub struct PhsInterpolant {
    centers: Vec<[f64; 2]>,
    scale: f64,
    kappa: usize,
    basis: PolyBasis,
    /// RBF coefficients `a`.
    pub rbf: DVector<f64>,
    /// Polynomial coefficients `lambda` (in scaled coordinates).
    pub poly: DVector<f64>,
}

impl PhsInterpolant {
    pub fn fit(coords: &[[f64; 2]], values: &[f64], degree: usize, kappa: usize) -> Result<Self> {
        if coords.len() != values.len() {
            return Err(Error::arg("coordinate and value counts differ"));
        }
        if kappa > degree {
            return Err(Error::arg("kappa must not exceed the degree"));
        }
        let scale = coords.iter().map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
        let saddle = Saddle::new(coords, degree, kappa, scale)?;
        let (n, size) = (saddle.n, saddle.size);
        let mut rhs = DMatrix::zeros(n + size, 1);
        for (j, v) in values.iter().enumerate() {
            rhs[(j, 0)] = *v;
        }
        let x = saddle.solve(&rhs)?;
        Ok(PhsInterpolant {
            centers: saddle.scaled.clone(),
            scale,
            kappa,
            basis: saddle.basis.clone(),
            rbf: x.rows(0, n).column(0).into_owned(),
            poly: x.rows(n, size).column(0).into_owned(),
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let s = [x / self.scale, y / self.scale];
        let rbf: f64 = self
            .centers
            .iter()
            .zip(self.rbf.iter())
            .map(|(c, a)| a * phs_kernel(dist(s, *c), self.kappa))
            .sum();
        rbf + self.basis.eval(s[0], s[1]).dot(&self.poly)
    }

    /// Derivative `op` of the interpolant at the origin.
    pub fn derivative_at_origin(&self, op: DerivOp) -> Result<f64> {
        let mut v = self.basis.derivative_at_origin(op)?.dot(&self.poly);
        for (c, a) in self.centers.iter().zip(self.rbf.iter()) {
            v += a * phs_derivative_at_origin(*c, self.kappa, op)?;
        }
        Ok(v / self.scale.powi(op.order() as i32))
    }

    /// `max_k |sum_j a_j p_k(x_j)|`.
    pub fn moment_residual(&self) -> f64 {
        let p = self.basis.vandermonde(&self.centers);
        (p.transpose() * &self.rbf).amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid9() -> ProjectedStencil {
        let mut coords = vec![[0.0, 0.0]];
        for i in -1i32..=1 {
            for j in -1i32..=1 {
                if i != 0 || j != 0 {
                    coords.push([i as f64, j as f64]);
                }
            }
        }
        ProjectedStencil::from_local(coords, vec![0.0; 9]).unwrap()
    }

    fn scattered(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut k = seed.wrapping_add(12345);
        let mut rnd = || {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((k >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut c = vec![[0.0, 0.0]];
        while c.len() < n {
            let p = [0.3 * rnd(), 0.3 * rnd()];
            if p[0].hypot(p[1]) <= 0.3 {
                c.push(p);
            }
        }
        c
    }

    fn apply(w: &[f64], coords: &[[f64; 2]], f: impl Fn(f64, f64) -> f64) -> f64 {
        w.iter().zip(coords).map(|(c, x)| c * f(x[0], x[1])).sum()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(phs_kernel(2.0, 1), 8.0);
        let xj = [0.3, -0.4];
        let d = phs_derivative_at_origin(xj, 1, DerivOp::Dx).unwrap();
        assert!((d - (-3.0 * 0.3 * 0.5)).abs() < 1e-15);
        let lap = phs_derivative_at_origin([1.0, 0.0], 2, DerivOp::Dxx).unwrap()
            + phs_derivative_at_origin([1.0, 0.0], 2, DerivOp::Dyy).unwrap();
        assert!((lap - 25.0).abs() < 1e-12);
        assert!(phs_derivative_at_origin(xj, 0, DerivOp::Dxy).is_err());
        assert_eq!(phs_derivative_at_origin([0.0, 0.0], 2, DerivOp::Dxx).unwrap(), 0.0);
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        let h = 1e-5;
        for kappa in 1..=3 {
            for xj in [[1.0, 0.0], [0.3, -0.7], [-0.2, 0.5]] {
                let phi = |x: f64, y: f64| phs_kernel((x - xj[0]).hypot(y - xj[1]), kappa);
                let fd = [
                    (phi(h, 0.0) - phi(-h, 0.0)) / (2.0 * h),
                    (phi(0.0, h) - phi(0.0, -h)) / (2.0 * h),
                    (phi(h, 0.0) - 2.0 * phi(0.0, 0.0) + phi(-h, 0.0)) / (h * h),
                    (phi(h, h) - phi(h, -h) - phi(-h, h) + phi(-h, -h)) / (4.0 * h * h),
                    (phi(0.0, h) - 2.0 * phi(0.0, 0.0) + phi(0.0, -h)) / (h * h),
                ];
                for (op, want) in DerivOp::ALL.iter().zip(fd) {
                    let got = phs_derivative_at_origin(xj, kappa, *op).unwrap();
                    assert!((got - want).abs() < 1e-4 * (1.0 + want.abs()), "{op:?} {kappa}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn grid_reproduces_laplacian_of_r2() {
        let p = grid9();
        let w = rbffd_derivative_weights(&p, &RbffdConfig::new(2, 1.5)).unwrap();
        let s = w.second.as_ref().unwrap();
        let f = |x: f64, y: f64| x * x + y * y;
        let lap = apply(&s.dxx, &p.coords, f) + apply(&s.dyy, &p.coords, f);
        assert!((lap - 4.0).abs() < 1e-10);
    }

    #[test]
    fn reproduces_moment_free_kernel_combinations() {
        // Single shifted kernels violate the moment conditions; combinations
        // with P^T a = 0 lie in the interpolation space and are reproduced.
        let coords = scattered(30, 4);
        let p = ProjectedStencil::from_local(coords.clone(), vec![0.0; 30]).unwrap();
        let cfg = RbffdConfig::new(3, 1.5);
        let w = rbffd_derivative_weights(&p, &cfg).unwrap();
        let pm = PolyBasis::new(3, 1.0).unwrap().vandermonde(&coords);
        let raw = DVector::from_fn(30, |j, _| ((j * 7 % 11) as f64 - 5.0) / 5.0);
        let proj = &pm * (pm.transpose() * &pm).lu().solve(&(pm.transpose() * &raw)).unwrap();
        let a = raw - proj;
        assert!((pm.transpose() * &a).amax() < 1e-10);
        let field = |x: f64, y: f64| {
            coords
                .iter()
                .zip(a.iter())
                .map(|(c, ak)| ak * phs_kernel((x - c[0]).hypot(y - c[1]), cfg.kappa))
                .sum::<f64>()
        };
        for op in DerivOp::ALL {
            let got = apply(w.get(op).unwrap(), &coords, field);
            let want: f64 = coords
                .iter()
                .zip(a.iter())
                .map(|(c, ak)| ak * phs_derivative_at_origin(*c, cfg.kappa, op).unwrap())
                .sum();
            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{op:?}: {got} vs {want}");
        }
    }

    #[test]
    fn errors() {
        let p = grid9();
        let cfg = RbffdConfig { degree: 2, kappa: 3, tau: 1.5 };
        assert!(matches!(rbffd_derivative_weights(&p, &cfg), Err(Error::Argument(_))));
        let cfg = RbffdConfig::new(3, 1.5);
        assert!(matches!(
            rbffd_derivative_weights(&p, &cfg),
            Err(Error::StencilTooSmall { points: 9, required: 10, .. })
        ));
        let line: Vec<[f64; 2]> = (0..8).map(|i| [i as f64 - 3.0, 0.0]).collect();
        let p = ProjectedStencil::from_local(line, vec![0.0; 8]).unwrap();
        assert!(matches!(
            rbffd_derivative_weights(&p, &RbffdConfig::new(1, 1.5)),
            Err(Error::Unisolvent { .. })
        ));
        // kappa = 0 has no second-derivative weights, so no Laplacian
        let p = grid9();
        let cfg = RbffdConfig { degree: 2, kappa: 0, tau: 1.5 };
        assert!(rbffd_sdo_weights(&p, &cfg, SdoKind::Laplacian).is_err());
        assert!(rbffd_sdo_weights(&p, &cfg, SdoKind::Gradient).is_ok());
    }

    #[test]
    fn flat_gradient_has_zero_normal_component() {
        let coords = scattered(25, 8);
        let p = ProjectedStencil::from_local(coords.clone(), vec![0.0; 25]).unwrap();
        let g = rbffd_sdo_weights(&p, &RbffdConfig::new(2, 1.5), SdoKind::Gradient).unwrap();
        assert!(g.rows[2].iter().all(|v| v.abs() <= 1e-12));
        let got = apply(&g.rows[1], &coords, |x, y| 3.0 * y + x * y);
        assert!((got - 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn interpolation_and_moments(seed in 0u64..500, degree in 1usize..=4) {
            let coords = scattered(3 * basis_size(degree), seed);
            let values: Vec<f64> = coords.iter().map(|c| (3.0 * c[0]).sin() * (2.0 * c[1]).cos() + c[0]).collect();
            let itp = PhsInterpolant::fit(&coords, &values, degree, degree).unwrap();
            let vmax = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (c, v) in coords.iter().zip(&values) {
                prop_assert!((itp.eval(c[0], c[1]) - v).abs() <= 1e-10 * vmax);
            }
            let amax = itp.rbf.amax().max(1.0);
            prop_assert!(itp.moment_residual() <= 1e-10 * amax);
        }

        #[test]
        fn interpolant_derivative_matches_weights(seed in 0u64..500) {
            let coords = scattered(30, seed);
            let heights: Vec<f64> = coords.iter().map(|c| 0.2 * c[0] * c[0] - 0.1 * c[0] * c[1] + (c[1]).sin()).collect();
            let p = ProjectedStencil::from_local(coords.clone(), heights.clone()).unwrap();
            let w = rbffd_derivative_weights(&p, &RbffdConfig::new(3, 1.5)).unwrap();
            let itp = PhsInterpolant::fit(&coords, &heights, 3, 3).unwrap();
            prop_assert!((w.monge.fx - itp.derivative_at_origin(DerivOp::Dx).unwrap()).abs() < 1e-9);
            prop_assert!((w.monge.fyy - itp.derivative_at_origin(DerivOp::Dyy).unwrap()).abs() < 1e-8);
        }

        #[test]
        fn polynomial_exactness(seed in 0u64..1000, degree in 1usize..=4, coef in prop::collection::vec(-1.0f64..1.0, 15)) {
            let coords = scattered(2 * basis_size(degree) + 4, seed);
            let p = ProjectedStencil::from_local(coords.clone(), vec![0.0; coords.len()]).unwrap();
            let w = rbffd_derivative_weights(&p, &RbffdConfig::new(degree, 1.5)).unwrap();
            let mons: Vec<(i32, i32)> = (0..=degree as i32).flat_map(|d| (0..=d).map(move |a| (a, d - a))).collect();
            let poly = |x: f64, y: f64| mons.iter().zip(&coef).map(|(&(a, b), c)| c * x.powi(a) * y.powi(b)).sum::<f64>();
            let coef_of = |a: i32, b: i32| mons.iter().position(|&m| m == (a, b)).map_or(0.0, |k| coef[k]);
            let scale: f64 = coef.iter().take(mons.len()).map(|c| c.abs()).sum::<f64>().max(1e-3);
            for (op, want) in [
                (DerivOp::Dx, coef_of(1, 0)),
                (DerivOp::Dy, coef_of(0, 1)),
                (DerivOp::Dxx, 2.0 * coef_of(2, 0)),
                (DerivOp::Dxy, coef_of(1, 1)),
                (DerivOp::Dyy, 2.0 * coef_of(0, 2)),
            ] {
                if let Some(c) = w.get(op) {
                    let got = apply(c, &coords, &poly);
                    prop_assert!((got - want).abs() <= 1e-8 * scale, "{op:?}: {got} vs {want}");
                }
            }
        }
    }
}

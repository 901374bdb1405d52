//! Generalized moving least squares derivative weights and the metric-term
//! surface operators built from them.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{require_full_rank, PivotedQr};
use crate::localframe::ProjectedStencil;
use crate::polybasis::{basis_size, DerivOp, PolyBasis};
use crate::weights::{combine, MongeDerivatives, SdoKind, SdoRows, StencilWeights};

pub const DEFAULT_KERNEL_EXPONENT: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmlsConfig {
    pub degree: usize,
    /// `m` in the weight kernel `(1 - r/rho)_+^{2m}`.
    pub kernel_exponent: u32,
    /// Support radius factor: `rho = tau * h_max`.
    pub tau: f64,
}

impl GmlsConfig {
    pub fn new(degree: usize, tau: f64) -> Self {
        GmlsConfig {
            degree,
            kernel_exponent: DEFAULT_KERNEL_EXPONENT,
            tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.degree > crate::polybasis::MAX_DEGREE {
            return Err(Error::arg(format!("GMLS degree {} out of range", self.degree)));
        }
        if self.kernel_exponent < 1 {
            return Err(Error::arg("kernel exponent m must be >= 1"));
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(Error::arg(format!("tau must be >= 1, got {}", self.tau)));
        }
        Ok(())
    }
}

/// `(1 - r/rho)_+^{2m}`.
pub fn weight_kernel(r: f64, rho: f64, m: u32) -> f64 {
    if r >= rho {
        0.0
    } else {
        (1.0 - r / rho).powi(2 * m as i32)
    }
}

/// Weight vectors for the requested operators. The least-squares weight of
/// member `j` uses its projected distance `|x_hat_j|`.
pub fn derivative_weights(proj: &ProjectedStencil, cfg: &GmlsConfig, ops: &[DerivOp]) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n = proj.len();
    let size = basis_size(cfg.degree);
    if n <= size {
        return Err(Error::StencilTooSmall {
            points: n,
            required: size,
            degree: cfg.degree,
        });
    }
    let h = proj.stencil.h_max;
    if !(h > 0.0) {
        return Err(Error::DegenerateGeometry("stencil has zero radius".into()));
    }
    let rho = cfg.tau * h;
    let basis = PolyBasis::new(cfg.degree, h)?;
    let sqrt_w: Vec<f64> = proj
        .coords
        .iter()
        .map(|c| weight_kernel(c[0].hypot(c[1]), rho, cfg.kernel_exponent).sqrt())
        .collect();

    let mut a = DMatrix::zeros(n, size);
    let mut row = vec![0.0; size];
    for (j, c) in proj.coords.iter().enumerate() {
        basis.eval_into(c[0], c[1], &mut row);
        for (k, v) in row.iter().enumerate() {
            a[(j, k)] = sqrt_w[j] * v;
        }
    }
    let qr = PivotedQr::new(a);
    require_full_rank(&qr, cfg.degree)?;

    ops.iter()
        .map(|&op| {
            let p = basis.derivative_at_origin(op)?;
            let mut y = qr.solve_transposed(p.as_slice());
            for (yj, sw) in y.iter_mut().zip(&sqrt_w) {
                *yj *= sw;
            }
            Ok(y)
        })
        .collect()
}

/// All derivative weights available at the configured degree, together
/// with the fitted Monge-patch derivatives.
pub fn gmls_derivative_weights(proj: &ProjectedStencil, cfg: &GmlsConfig) -> Result<StencilWeights> {
    let ops = DerivOp::up_to_degree(cfg.degree);
    let w = derivative_weights(proj, cfg, ops)?;
    StencilWeights::from_ops(proj.frame, ops, w, &proj.heights)
}

/// Coefficients of the Laplace-Beltrami operator in Monge coordinates:
/// `a_x d_x + a_y d_y + a_xx d_xx + a_xy d_xy + a_yy d_yy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplacianCoefficients {
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl LaplacianCoefficients {
    pub fn as_array(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dxx, self.dxy, self.dyy]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricTerms {
    pub g: Matrix2<f64>,
    pub g_inv: Matrix2<f64>,
    pub det: f64,
    pub laplacian: LaplacianCoefficients,
}

pub fn metric_terms(m: &MongeDerivatives) -> Result<MetricTerms> {
    let (p, q, r, s, t) = (m.fx, m.fy, m.fxx, m.fxy, m.fyy);
    let det = 1.0 + p * p + q * q;
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::DegenerateGeometry(format!("metric determinant {det}")));
    }
    let g = Matrix2::new(1.0 + p * p, p * q, p * q, 1.0 + q * q);
    let (g11, g12, g22) = ((1.0 + q * q) / det, -p * q / det, (1.0 + p * p) / det);
    let g_inv = Matrix2::new(g11, g12, g12, g22);
    let det2 = det * det;
    let laplacian = LaplacianCoefficients {
        dx: (2.0 * p * p * q * s - p * r * (1.0 + q * q) - p * t * (1.0 + p * p)) / det2,
        dy: (2.0 * q * q * p * s - q * t * (1.0 + p * p) - q * r * (1.0 + q * q)) / det2,
        dxx: g11,
        dxy: 2.0 * g12,
        dyy: g22,
    };
    Ok(MetricTerms {
        g,
        g_inv,
        det,
        laplacian,
    })
}

/// Operator rows from GMLS derivative weights, including metric terms.
pub fn gmls_rows(w: &StencilWeights, kind: SdoKind) -> Result<SdoRows> {
    let mt = metric_terms(&w.monge)?;
    let rot = &w.frame.rotation;
    let rows = match kind {
        SdoKind::Laplacian => {
            let s = w.require_second()?;
            let a = mt.laplacian;
            vec![combine(&[
                (a.dx, &w.dx),
                (a.dy, &w.dy),
                (a.dxx, &s.dxx),
                (a.dxy, &s.dxy),
                (a.dyy, &s.dyy),
            ])]
        }
        SdoKind::Gradient | SdoKind::Divergence => {
            let gi = mt.g_inv;
            let d1 = combine(&[(gi[(0, 0)], &w.dx), (gi[(0, 1)], &w.dy)]);
            let d2 = combine(&[(gi[(1, 0)], &w.dx), (gi[(1, 1)], &w.dy)]);
            let (p, q) = (w.monge.fx, w.monge.fy);
            // Gradient: component c of R (D1, D2, p D1 + q D2).
            // Divergence: input component c enters the rotated field as
            // (R[c,0], R[c,1], R[c,2]); the tangent vectors (1, 0, p) and
            // (0, 1, q) pick out the same combinations.
            (0..3)
                .map(|c| {
                    let a1 = rot[(c, 0)] + p * rot[(c, 2)];
                    let a2 = rot[(c, 1)] + q * rot[(c, 2)];
                    combine(&[(a1, &d1), (a2, &d2)])
                })
                .collect()
        }
    };
    Ok(SdoRows { kind, rows })
}

pub fn gmls_sdo_weights(proj: &ProjectedStencil, cfg: &GmlsConfig, kind: SdoKind) -> Result<SdoRows> {
    if cfg.degree < kind.min_degree() {
        return Err(Error::arg(format!("{kind} needs degree >= {}", kind.min_degree())));
    }
    gmls_rows(&gmls_derivative_weights(proj, cfg)?, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localframe::{FrameSource, TangentFrame};
    use nalgebra::{DVector, Vector3};
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
        let n = coords.len();
        ProjectedStencil::from_local(coords, vec![0.0; n]).unwrap()
    }

    fn jittered(n_side: i32, seed: u64) -> ProjectedStencil {
        let mut coords = vec![[0.0, 0.0]];
        let mut k = seed;
        let mut rnd = || {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((k >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in -n_side..=n_side {
            for j in -n_side..=n_side {
                if i != 0 || j != 0 {
                    coords.push([0.1 * (i as f64 + 0.3 * rnd()), 0.1 * (j as f64 + 0.3 * rnd())]);
                }
            }
        }
        let n = coords.len();
        ProjectedStencil::from_local(coords, vec![0.0; n]).unwrap()
    }

    fn apply(w: &[f64], proj: &ProjectedStencil, f: impl Fn(f64, f64) -> f64) -> f64 {
        w.iter().zip(&proj.coords).map(|(c, x)| c * f(x[0], x[1])).sum()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(weight_kernel(0.0, 2.0, 2), 1.0);
        assert_eq!(weight_kernel(2.0, 2.0, 2), 0.0);
        assert_eq!(weight_kernel(3.0, 2.0, 1), 0.0);
        assert_eq!(weight_kernel(1.0, 2.0, 2), 0.0625);
    }

    #[test]
    fn grid_reproduces_laplacian_of_r2() {
        let p = grid9();
        let w = gmls_derivative_weights(&p, &GmlsConfig::new(2, 1.5)).unwrap();
        let s = w.second.as_ref().unwrap();
        let lap = apply(&s.dxx, &p, |x, y| x * x + y * y) + apply(&s.dyy, &p, |x, y| x * x + y * y);
        assert!((lap - 4.0).abs() < 1e-10);
        assert!(apply(&w.dx, &p, |_, _| 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_normal_equations() {
        let p = grid9();
        let cfg = GmlsConfig::new(2, 1.5);
        let w = gmls_derivative_weights(&p, &cfg).unwrap();
        // c = W P (P^T W P)^{-1} p_op with an unscaled basis
        let h = p.stencil.h_max;
        let rho = cfg.tau * h;
        let n = p.len();
        let mons: [(i32, i32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        let pm = DMatrix::from_fn(n, 6, |j, k| p.coords[j][0].powi(mons[k].0) * p.coords[j][1].powi(mons[k].1));
        let wd = DMatrix::from_diagonal(&DVector::from_fn(n, |j, _| {
            let r = p.coords[j][0].hypot(p.coords[j][1]);
            (1.0 - r / rho).max(0.0).powi(4)
        }));
        let gram = pm.transpose() * &wd * &pm;
        let mut rhs = DVector::zeros(6);
        rhs[1] = 1.0;
        let c = &wd * &pm * gram.lu().solve(&rhs).unwrap();
        for j in 0..n {
            assert!((c[j] - w.dx[j]).abs() < 1e-12, "{j}: {} vs {}", c[j], w.dx[j]);
        }
    }

    #[test]
    fn too_small_and_collinear() {
        let p = ProjectedStencil::from_local(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            vec![0.0; 6],
        )
        .unwrap();
        let e = gmls_derivative_weights(&p, &GmlsConfig::new(2, 1.5)).unwrap_err();
        assert!(matches!(e, Error::StencilTooSmall { points: 6, required: 6, .. }));

        let line: Vec<[f64; 2]> = (0..8).map(|i| [i as f64 - 3.0, 0.0]).collect();
        let p = ProjectedStencil::from_local(line, vec![0.0; 8]).unwrap();
        let e = gmls_derivative_weights(&p, &GmlsConfig::new(1, 1.5)).unwrap_err();
        assert!(matches!(e, Error::Unisolvent { .. }));
    }

    #[test]
    fn kernel_scale_invariance() {
        // dense solve with W scaled by 7.5
        let p = jittered(2, 3);
        let cfg = GmlsConfig::new(3, 1.5);
        let base = gmls_derivative_weights(&p, &cfg).unwrap();
        let h = p.stencil.h_max;
        let basis = PolyBasis::new(3, h).unwrap();
        let n = p.len();
        let w: Vec<f64> = p
            .coords
            .iter()
            .map(|c| 7.5 * weight_kernel(c[0].hypot(c[1]), cfg.tau * h, 2))
            .collect();
        let pm = basis.vandermonde(&p.coords);
        let wp = DMatrix::from_fn(n, pm.ncols(), |j, k| w[j] * pm[(j, k)]);
        let gram = pm.transpose() * &wp;
        let rhs = basis.derivative_at_origin(DerivOp::Dy).unwrap();
        let c = &wp * gram.lu().solve(&rhs).unwrap();
        for j in 0..n {
            assert!((c[j] - base.dy[j]).abs() <= 1e-12 * base.dy.iter().map(|v| v.abs()).sum::<f64>());
        }
    }

    #[test]
    fn metric_examples() {
        let m = metric_terms(&MongeDerivatives::default()).unwrap();
        assert_eq!(m.g, Matrix2::identity());
        assert_eq!(m.det, 1.0);
        assert_eq!(m.laplacian.as_array(), [0.0, 0.0, 1.0, 0.0, 1.0]);

        let m = metric_terms(&MongeDerivatives { fx: 1.0, ..Default::default() }).unwrap();
        assert_eq!(m.g, Matrix2::new(2.0, 0.0, 0.0, 1.0));
        assert_eq!(m.det, 2.0);
        assert!((m.g * m.g_inv - Matrix2::identity()).amax() < 1e-15);

        let bad = MongeDerivatives { fx: f64::NAN, ..Default::default() };
        assert!(matches!(metric_terms(&bad), Err(Error::DegenerateGeometry(_))));
    }

    /// Forward-mode dual number carrying derivatives in x and y.
    #[derive(Clone, Copy, Debug)]
    struct Dual {
        v: f64,
        d: [f64; 2],
    }

    impl Dual {
        fn c(v: f64) -> Self {
            Dual { v, d: [0.0; 2] }
        }
        fn add(self, o: Dual) -> Dual {
            Dual { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1]] }
        }
        fn mul(self, o: Dual) -> Dual {
            Dual {
                v: self.v * o.v,
                d: [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]],
            }
        }
        fn recip(self) -> Dual {
            let r = 1.0 / self.v;
            Dual { v: r, d: [-self.d[0] * r * r, -self.d[1] * r * r] }
        }
        fn sqrt(self) -> Dual {
            let s = self.v.sqrt();
            Dual { v: s, d: [self.d[0] / (2.0 * s), self.d[1] / (2.0 * s)] }
        }
    }

    /// Coefficients of the divergence-form Laplace-Beltrami operator
    /// `|g|^{-1/2} d_i(|g|^{1/2} g^{ij} d_j)` at the origin, for the quadratic
    /// patch with the given derivatives, obtained by differentiating the
    /// metric fields with dual numbers.
    fn divergence_form_oracle(m: &MongeDerivatives) -> [f64; 5] {
        // slopes as dual numbers: f_x = p + r x + s y, f_y = q + s x + t y
        let fx = Dual { v: m.fx, d: [m.fxx, m.fxy] };
        let fy = Dual { v: m.fy, d: [m.fxy, m.fyy] };
        let one = Dual::c(1.0);
        let det = one.add(fx.mul(fx)).add(fy.mul(fy));
        let sq = det.sqrt();
        let inv = det.recip();
        let g11 = one.add(fy.mul(fy)).mul(inv);
        let g12 = fx.mul(fy).mul(inv).mul(Dual::c(-1.0));
        let g22 = one.add(fx.mul(fx)).mul(inv);
        let (a11, a12, a22) = (sq.mul(g11), sq.mul(g12), sq.mul(g22));
        let ax = (a11.d[0] + a12.d[1]) / sq.v;
        let ay = (a12.d[0] + a22.d[1]) / sq.v;
        [ax, ay, g11.v, 2.0 * g12.v, g22.v]
    }

    proptest! {
        #[test]
        fn expanded_coefficients_match_divergence_form(
            fx in -2.0f64..2.0, fy in -2.0f64..2.0,
            fxx in -3.0f64..3.0, fxy in -3.0f64..3.0, fyy in -3.0f64..3.0,
        ) {
            let m = MongeDerivatives { fx, fy, fxx, fxy, fyy };
            let got = metric_terms(&m).unwrap().laplacian.as_array();
            let want = divergence_form_oracle(&m);
            for k in 0..5 {
                prop_assert!((got[k] - want[k]).abs() <= 1e-12 * (1.0 + want[k].abs()), "{k}: {got:?} vs {want:?}");
            }
        }

        #[test]
        fn polynomial_exactness(seed in 0u64..1000, degree in 1usize..=4, coef in prop::collection::vec(-1.0f64..1.0, 15)) {
            let p = jittered(3, seed);
            let w = gmls_derivative_weights(&p, &GmlsConfig::new(degree, 1.5)).unwrap();
            let mons: Vec<(i32, i32)> = (0..=degree as i32).flat_map(|d| (0..=d).map(move |a| (a, d - a))).collect();
            let poly = |x: f64, y: f64| mons.iter().zip(&coef).map(|(&(a, b), c)| c * x.powi(a) * y.powi(b)).sum::<f64>();
            let coef_of = |a: i32, b: i32| mons.iter().position(|&m| m == (a, b)).map_or(0.0, |k| coef[k]);
            let scale: f64 = coef.iter().take(mons.len()).map(|c| c.abs()).sum::<f64>().max(1e-3);
            let checks = [
                (DerivOp::Dx, coef_of(1, 0)),
                (DerivOp::Dy, coef_of(0, 1)),
                (DerivOp::Dxx, 2.0 * coef_of(2, 0)),
                (DerivOp::Dxy, coef_of(1, 1)),
                (DerivOp::Dyy, 2.0 * coef_of(0, 2)),
            ];
            for (op, want) in checks {
                if let Some(c) = w.get(op) {
                    let got = apply(c, &p, &poly);
                    prop_assert!((got - want).abs() <= 1e-8 * scale, "{op:?}: {got} vs {want}");
                }
            }
        }

        #[test]
        fn laplacian_rows_frame_invariant(angle in 0.0f64..6.28, tilt in 0.0f64..0.4) {
            // cap of a sphere of radius 2, projected in a frame tilted by `tilt`
            let mut pts = vec![Vector3::zeros()];
            for i in -3i32..=3 {
                for j in -3i32..=3 {
                    if i != 0 || j != 0 {
                        let (x, y) = (0.1 * i as f64 + 0.02 * j as f64, 0.1 * j as f64);
                        pts.push(Vector3::new(x, y, 2.0 - (4.0 - x * x - y * y).sqrt()));
                    }
                }
            }
            let cloud = crate::geometry::PointCloud::new(pts, crate::geometry::NodeFamily::FromFile).unwrap();
            let idx = crate::spatial::build_index(&cloud).unwrap();
            let st = crate::spatial::select_stencil(&idx, 0, 15, 1.5).unwrap();
            let base = TangentFrame::from_normal(Vector3::new(tilt.sin(), 0.0, tilt.cos()), FrameSource::Exact).unwrap();
            let cfg = GmlsConfig::new(2, 1.5);
            let rows = |f: &TangentFrame| {
                let proj = crate::localframe::project(&cloud, &st, f);
                gmls_sdo_weights(&proj, &cfg, SdoKind::Laplacian).unwrap().rows.remove(0)
            };
            let r0 = rows(&base);
            let scale = r0.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for f in [base.rotated_in_plane(angle), base.with_flipped_normal()] {
                let r1 = rows(&f);
                for (a, b) in r0.iter().zip(&r1) {
                    prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn flat_metric_reduces_to_plain_laplacian() {
        let p = jittered(2, 9);
        let w = gmls_derivative_weights(&p, &GmlsConfig::new(2, 1.5)).unwrap();
        let rows = gmls_rows(&w, SdoKind::Laplacian).unwrap();
        let s = w.second.as_ref().unwrap();
        for j in 0..p.len() {
            assert_eq!(rows.rows[0][j], s.dxx[j] + s.dyy[j]);
        }
    }

    #[test]
    fn flat_gradient_and_divergence() {
        let p = jittered(3, 5);
        let cfg = GmlsConfig::new(3, 1.5);
        let g = gmls_sdo_weights(&p, &cfg, SdoKind::Gradient).unwrap();
        assert!(g.rows[2].iter().all(|v| v.abs() <= 1e-12));
        let u = |x: f64, y: f64| x * x * y - 2.0 * y * y + 0.5 * x;
        assert!((apply(&g.rows[0], &p, u) - 0.5).abs() < 1e-8);

        // divergence of grad u for u = x^3 - 3 x y^2 + x^2 (harmonic part
        // plus x^2): lap u = 2
        let ux = |x: f64, y: f64| 3.0 * x * x - 3.0 * y * y + 2.0 * x;
        let uy = |x: f64, y: f64| -6.0 * x * y;
        let d = gmls_sdo_weights(&p, &cfg, SdoKind::Divergence).unwrap();
        let div = apply(&d.rows[0], &p, ux) + apply(&d.rows[1], &p, uy);
        assert!((div - 2.0).abs() < 1e-8, "{div}");
    }
}

//! Smooth test fields with closed-form surface gradients and Laplacians.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Point, PointCloud, SurfaceModel};
use crate::error::{Error, Result};

/// Default seed of the sphere Gaussian mixture.
pub const DEFAULT_FIELD_SEED: u64 = 2023;
const MIX_TERMS: usize = 50;

/// Linear combination of Gaussians `d_j exp(-gamma_j |x - y_j|^2)` on the
/// unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMix {
    centers: Vec<Point>,
    amplitudes: Vec<f64>,
    widths: Vec<f64>,
}

impl GaussianMix {
    /// 50 terms: centers uniform on the sphere, amplitudes from N(0, 1),
    /// widths from N(15, 4) with nonpositive draws redrawn.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width_dist = Normal::new(15.0, 4.0).expect("valid normal");
        let mut centers = Vec::with_capacity(MIX_TERMS);
        let mut amplitudes = Vec::with_capacity(MIX_TERMS);
        let mut widths = Vec::with_capacity(MIX_TERMS);
        for _ in 0..MIX_TERMS {
            let c = loop {
                let v = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                if v.norm() > 1e-8 {
                    break v.normalize();
                }
            };
            centers.push(c);
            amplitudes.push(rng.sample::<f64, _>(StandardNormal));
            let w = loop {
                let g: f64 = width_dist.sample(&mut rng);
                if g > 0.0 {
                    break g;
                }
            };
            widths.push(w);
        }
        GaussianMix {
            centers,
            amplitudes,
            widths,
        }
    }

    /// Mixture with explicit terms. Centers are normalized onto the sphere.
    pub fn from_terms(centers: Vec<Point>, amplitudes: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != amplitudes.len() || centers.len() != widths.len() {
            return Err(Error::arg("mixture term lists must be nonempty and equally long"));
        }
        if widths.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::arg("mixture widths must be positive"));
        }
        Ok(GaussianMix {
            centers: centers.into_iter().map(|c| c.normalize()).collect(),
            amplitudes,
            widths,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn terms(&self) -> impl Iterator<Item = (&Point, f64, f64)> {
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.widths)
            .map(|((c, &d), &g)| (c, d, g))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestField {
    SphereGaussianMix(GaussianMix),
    /// `(x/8)(x^4 - 10x^2y^2 + 5y^4)(r^2 - 60z^2)` on the torus.
    TorusPolynomial,
}

impl TestField {
    /// The standard field of a surface; `seed` only affects the sphere.
    pub fn for_surface(surface: SurfaceModel, seed: u64) -> Self {
        match surface {
            SurfaceModel::UnitSphere => TestField::SphereGaussianMix(GaussianMix::random(seed)),
            SurfaceModel::Torus => TestField::TorusPolynomial,
        }
    }

    pub fn surface(&self) -> SurfaceModel {
        match self {
            TestField::SphereGaussianMix(_) => SurfaceModel::UnitSphere,
            TestField::TorusPolynomial => SurfaceModel::Torus,
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            TestField::SphereGaussianMix(mix) => mix
                .terms()
                .map(|(y, d, g)| d * (-g * (x - y).norm_squared()).exp())
                .sum(),
            TestField::TorusPolynomial => {
                let (px, py, pz) = (x[0], x[1], x[2]);
                let r2 = px * px + py * py;
                px / 8.0 * harmonic5(px, py) * (r2 - 60.0 * pz * pz)
            }
        }
    }

    /// Exact surface gradient.
    pub fn exact_gradient(&self, x: &Point) -> Vector3<f64> {
        match self {
            TestField::SphereGaussianMix(mix) => mix
                .terms()
                .map(|(y, d, g)| {
                    2.0 * d * g * (y - x * x.dot(y)) * (-g * (x - y).norm_squared()).exp()
                })
                .sum(),
            TestField::TorusPolynomial => {
                let grad = torus_cartesian_gradient(x);
                let eta = SurfaceModel::Torus.normal(x);
                grad - eta * eta.dot(&grad)
            }
        }
    }

    /// Exact surface Laplacian.
    pub fn exact_laplacian(&self, x: &Point) -> f64 {
        match self {
            TestField::SphereGaussianMix(mix) => -mix
                .terms()
                .map(|(y, d, g)| {
                    let s = (x - y).norm_squared();
                    d * g * (4.0 - s * (2.0 + g * (4.0 - s))) * (-g * s).exp()
                })
                .sum::<f64>(),
            TestField::TorusPolynomial => {
                let (px, py) = (x[0], x[1]);
                let r2 = px * px + py * py;
                let r = r2.sqrt();
                let poly = (((10248.0 * r - 34335.0) * r + 41359.0) * r - 21320.0) * r + 4000.0;
                -3.0 * px / (8.0 * r2) * harmonic5(px, py) * poly
            }
        }
    }

    pub fn sample(&self, cloud: &PointCloud) -> Vec<f64> {
        cloud.points().iter().map(|p| self.eval(p)).collect()
    }

    pub fn sample_laplacian(&self, cloud: &PointCloud) -> Vec<f64> {
        cloud.points().iter().map(|p| self.exact_laplacian(p)).collect()
    }
}

fn harmonic5(x: f64, y: f64) -> f64 {
    let (x2, y2) = (x * x, y * y);
    x2 * x2 - 10.0 * x2 * y2 + 5.0 * y2 * y2
}

/// Cartesian gradient of the torus polynomial field.
fn torus_cartesian_gradient(p: &Point) -> Vector3<f64> {
    let (x, y, z) = (p[0], p[1], p[2]);
    let (x2, y2) = (x * x, y * y);
    // u = a * b / 8 with a = x^5 - 10x^3y^2 + 5xy^4, b = x^2 + y^2 - 60z^2
    let a = x * harmonic5(x, y);
    let b = x2 + y2 - 60.0 * z * z;
    let a_x = 5.0 * x2 * x2 - 30.0 * x2 * y2 + 5.0 * y2 * y2;
    let a_y = -20.0 * x2 * x * y + 20.0 * x * y2 * y;
    Vector3::new(
        (a_x * b + 2.0 * x * a) / 8.0,
        (a_y * b + 2.0 * y * a) / 8.0,
        -120.0 * z * a / 8.0,
    )
}

/// Exact surface-gradient samples at every node.
pub fn tangent_field_from_gradient(field: &TestField, cloud: &PointCloud) -> Vec<Vector3<f64>> {
    cloud
        .points()
        .iter()
        .map(|p| field.exact_gradient(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_icosahedral, generate_poisson_torus, TORUS_MAJOR, TORUS_MINOR};

    fn torus_point(u: f64, v: f64) -> Point {
        let w = TORUS_MAJOR + TORUS_MINOR * v.cos();
        Vector3::new(w * u.cos(), w * u.sin(), TORUS_MINOR * v.sin())
    }

    /// Laplace-Beltrami in (u, v) torus coordinates by central differences.
    fn torus_laplacian_fd(f: &dyn Fn(&Point) -> f64, u: f64, v: f64) -> f64 {
        let h = 1e-4;
        let w = |v: f64| TORUS_MAJOR + TORUS_MINOR * v.cos();
        let g = |u: f64, v: f64| f(&torus_point(u, v));
        let f_uu = (g(u + h, v) - 2.0 * g(u, v) + g(u - h, v)) / (h * h);
        let flux = |v: f64| w(v) * (g(u, v + h / 2.0) - g(u, v - h / 2.0)) / h;
        let d_flux = (flux(v + h / 2.0) - flux(v - h / 2.0)) / h;
        f_uu / (w(v) * w(v)) + d_flux / (TORUS_MINOR * TORUS_MINOR * w(v))
    }

    #[test]
    fn single_gaussian_at_center() {
        let x = Vector3::new(0.0, 0.6, 0.8);
        let mix = GaussianMix::from_terms(vec![x], vec![1.0], vec![1.0]).unwrap();
        let f = TestField::SphereGaussianMix(mix);
        assert_eq!(f.eval(&x), 1.0);
        assert!(f.exact_gradient(&x).norm() < 1e-15);
        assert!((f.exact_laplacian(&x) + 4.0).abs() < 1e-15);
    }

    #[test]
    fn random_mix_has_fifty_positive_widths() {
        let mix = GaussianMix::random(DEFAULT_FIELD_SEED);
        assert_eq!(mix.len(), 50);
        assert!(mix.widths.iter().all(|&g| g > 0.0));
        assert_eq!(mix, GaussianMix::random(DEFAULT_FIELD_SEED));
    }

    #[test]
    fn torus_field_values() {
        let f = TestField::TorusPolynomial;
        assert_eq!(f.eval(&Vector3::new(0.0, 1.2, 0.1)), 0.0);
        assert_eq!(f.exact_laplacian(&Vector3::new(0.0, 1.2, 0.1)), 0.0);
        // (4/3)^6 / 6
        let v = f.eval(&Vector3::new(4.0 / 3.0, 0.0, 0.0));
        assert!((v - 0.936442615454961).abs() < 1e-14, "{v}");
    }

    #[test]
    fn torus_laplacian_matches_parametric_differences() {
        let f = TestField::TorusPolynomial;
        for (u, v) in [(0.3, 0.7), (1.1, 2.5), (2.0, -1.0), (4.0, 3.0)] {
            let x = torus_point(u, v);
            let fd = torus_laplacian_fd(&|p| f.eval(p), u, v);
            let exact = f.exact_laplacian(&x);
            assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{fd} vs {exact}");
        }
    }

    #[test]
    fn sphere_laplacian_matches_parametric_differences() {
        let f = TestField::SphereGaussianMix(GaussianMix::random(3));
        let pt = |t: f64, p: f64| Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
        let h = 1e-4;
        for (t, p) in [(0.7, 0.2), (1.9, 4.0), (2.5, 1.0)] {
            let g = |t: f64, p: f64| f.eval(&pt(t, p));
            let f_pp = (g(t, p + h) - 2.0 * g(t, p) + g(t, p - h)) / (h * h);
            let flux = |t: f64| t.sin() * (g(t + h / 2.0, p) - g(t - h / 2.0, p)) / h;
            let lap = (flux(t + h / 2.0) - flux(t - h / 2.0)) / (h * t.sin()) + f_pp / t.sin().powi(2);
            let exact = f.exact_laplacian(&pt(t, p));
            assert!((lap - exact).abs() <= 1e-4 * exact.abs().max(1.0), "{lap} vs {exact}");
        }
    }

    #[test]
    fn gradients_are_tangent_and_match_differences() {
        let torus = TestField::TorusPolynomial;
        let cloud = generate_poisson_torus(100, 2).unwrap();
        for (p, g) in cloud.points().iter().zip(tangent_field_from_gradient(&torus, &cloud)) {
            assert!(SurfaceModel::Torus.normal(p).dot(&g).abs() <= 1e-12 * g.norm().max(1.0));
        }
        let sphere = TestField::SphereGaussianMix(GaussianMix::random(1));
        let cloud = generate_icosahedral(2).unwrap();
        for (p, g) in cloud.points().iter().zip(tangent_field_from_gradient(&sphere, &cloud)) {
            assert!(p.dot(&g).abs() <= 1e-12 * g.norm().max(1.0));
        }
        // directional derivative along a torus meridian
        let (u, v, h) = (0.4, 1.3, 1e-6);
        let x = torus_point(u, v);
        let dv = (torus_point(u, v + h) - torus_point(u, v - h)) / (2.0 * h);
        let fd = (torus.eval(&torus_point(u, v + h)) - torus.eval(&torus_point(u, v - h))) / (2.0 * h);
        assert!((torus.exact_gradient(&x).dot(&dv) - fd).abs() < 1e-7);
    }

    #[test]
    fn zero_field_gives_zero_samples() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let mix = GaussianMix::from_terms(vec![x], vec![0.0], vec![2.0]).unwrap();
        let f = TestField::SphereGaussianMix(mix);
        let cloud = generate_icosahedral(1).unwrap();
        assert!(tangent_field_from_gradient(&f, &cloud).iter().all(|g| g.norm() == 0.0));
    }
}

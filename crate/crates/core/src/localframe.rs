//! Tangent frames, Monge-patch projection and tangent-plane estimation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, SurfaceModel};
use crate::gmls::{self, GmlsConfig};
use crate::polybasis::DerivOp;
use crate::rbffd::{self, RbffdConfig};
use crate::spatial::Stencil;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameSource {
    Exact,
    Pca,
    Refined,
}

/// Orthonormal frame `[xi1 xi2 eta]` stored as the columns of `rotation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentFrame {
    pub rotation: Matrix3<f64>,
    pub source: FrameSource,
}

impl TangentFrame {
    pub fn from_axes(xi1: Vector3<f64>, xi2: Vector3<f64>, eta: Vector3<f64>, source: FrameSource) -> Self {
        TangentFrame {
            rotation: Matrix3::from_columns(&[xi1, xi2, eta]),
            source,
        }
    }

    /// Right-handed frame around a unit normal; the in-plane axes are an
    /// arbitrary orthonormal completion.
    pub fn from_normal(eta: Vector3<f64>, source: FrameSource) -> Result<Self> {
        let n = eta.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateGeometry("zero or non-finite normal".into()));
        }
        let eta = eta / n;
        let axis = (0..3)
            .min_by(|&a, &b| eta[a].abs().total_cmp(&eta[b].abs()))
            .unwrap_or(0);
        let mut e = Vector3::zeros();
        e[axis] = 1.0;
        let xi1 = (e - eta * eta.dot(&e)).normalize();
        let xi2 = eta.cross(&xi1);
        Ok(Self::from_axes(xi1, xi2, eta, source))
    }

    /// Frame of the analytic surface at `x`.
    pub fn exact(surface: SurfaceModel, x: &Point) -> Result<Self> {
        Self::from_normal(surface.normal(x), FrameSource::Exact)
    }

    pub fn xi1(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn xi2(&self) -> Vector3<f64> {
        self.rotation.column(1).into_owned()
    }

    pub fn eta(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Rotates the tangent pair by `angle` about the normal.
    pub fn rotated_in_plane(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let (a, b) = (self.xi1(), self.xi2());
        Self::from_axes(c * a + s * b, -s * a + c * b, self.eta(), self.source)
    }

    pub fn with_flipped_normal(&self) -> Self {
        Self::from_axes(self.xi1(), self.xi2(), -self.eta(), self.source)
    }

    /// `max |R^T R - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

/// Stencil expressed in the Monge-patch coordinates of its center.
#[derive(Clone, Debug)]
pub struct ProjectedStencil {
    pub stencil: Stencil,
    pub frame: TangentFrame,
    pub center: Point,
    /// `(x_hat, y_hat)` per stencil member; the center is `(0, 0)`.
    pub coords: Vec<[f64; 2]>,
    /// Height over the tangent plane per member; the center has height 0.
    pub heights: Vec<f64>,
}

impl ProjectedStencil {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Maps local coordinates of member `j` back to the embedding space.
    pub fn unproject(&self, j: usize) -> Point {
        let [x, y] = self.coords[j];
        self.center + self.frame.rotation * Vector3::new(x, y, self.heights[j])
    }

    /// Projected stencil built directly from local coordinates, for tests
    /// and planar experiments. The frame is the identity.
    pub fn from_local(coords: Vec<[f64; 2]>, heights: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() != heights.len() {
            return Err(Error::arg("coordinate and height lists must be nonempty and equally long"));
        }
        let distances: Vec<f64> = coords
            .iter()
            .zip(&heights)
            .map(|(c, h)| (c[0] * c[0] + c[1] * c[1] + h * h).sqrt())
            .collect();
        let h_max = distances.iter().cloned().fold(0.0, f64::max);
        Ok(ProjectedStencil {
            stencil: Stencil {
                center: 0,
                indices: (0..coords.len()).collect(),
                distances,
                h_max,
                tau: 1.0,
            },
            frame: TangentFrame::from_axes(
                Vector3::x(),
                Vector3::y(),
                Vector3::z(),
                FrameSource::Exact,
            ),
            center: Point::zeros(),
            coords,
            heights,
        })
    }
}

/// Local coordinates `R^T (x_j - x_i)` of every stencil member.
pub fn project(cloud: &PointCloud, stencil: &Stencil, frame: &TangentFrame) -> ProjectedStencil {
    let pts = cloud.points();
    let center = pts[stencil.center];
    let rt = frame.rotation.transpose();
    let mut coords = Vec::with_capacity(stencil.len());
    let mut heights = Vec::with_capacity(stencil.len());
    for &j in &stencil.indices {
        let local = rt * (pts[j] - center);
        coords.push([local[0], local[1]]);
        heights.push(local[2]);
    }
    ProjectedStencil {
        stencil: stencil.clone(),
        frame: *frame,
        center,
        coords,
        heights,
    }
}

/// Coarse frame from the principal axes of the stencil's covariance.
/// When `orient` is given, the normal is flipped to agree with it.
pub fn pca_frame(cloud: &PointCloud, stencil: &Stencil, orient: Option<&Vector3<f64>>) -> Result<TangentFrame> {
    if stencil.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "PCA needs at least 3 points, stencil has {}",
            stencil.len()
        )));
    }
    let pts = cloud.points();
    let mean = stencil
        .indices
        .iter()
        .fold(Vector3::zeros(), |acc, &j| acc + pts[j])
        / stencil.len() as f64;
    let mut cov = Matrix3::zeros();
    for &j in &stencil.indices {
        let d = pts[j] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 1e-12 * l0) {
        return Err(Error::DegenerateGeometry(
            "stencil points are collinear; covariance has rank < 2".into(),
        ));
    }
    let xi1 = eig.eigenvectors.column(order[0]).normalize();
    let mut eta = eig.eigenvectors.column(order[2]).normalize();
    if let Some(n) = orient {
        if eta.dot(n) < 0.0 {
            eta = -eta;
        }
    }
    let xi2 = eta.cross(&xi1);
    Ok(TangentFrame::from_axes(xi1, xi2, eta, FrameSource::Pca))
}

/// Monge-patch reconstruction used to refine a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reconstructor {
    Mls(GmlsConfig),
    Phs(RbffdConfig),
}

impl Reconstructor {
    /// Slopes `(f_x, f_y)` of the reconstructed height at the origin.
    pub fn monge_slope(&self, proj: &ProjectedStencil) -> Result<(f64, f64)> {
        let weights = match self {
            Reconstructor::Mls(cfg) => gmls::derivative_weights(proj, cfg, &DerivOp::FIRST)?,
            Reconstructor::Phs(cfg) => rbffd::derivative_weights(proj, cfg, &DerivOp::FIRST)?,
        };
        let dot = |w: &[f64]| w.iter().zip(&proj.heights).map(|(a, b)| a * b).sum::<f64>();
        Ok((dot(&weights[0]), dot(&weights[1])))
    }
}

/// Tilts `coarse` onto the tangent plane of the reconstructed Monge patch
/// at the stencil center, `passes` times.
pub fn refine_frame(
    cloud: &PointCloud,
    stencil: &Stencil,
    coarse: &TangentFrame,
    reconstructor: &Reconstructor,
    passes: usize,
) -> Result<TangentFrame> {
    let mut frame = *coarse;
    for _ in 0..passes {
        let proj = project(cloud, stencil, &frame);
        let (fx, fy) = reconstructor.monge_slope(&proj)?;
        let eta = frame.rotation * Vector3::new(-fx, -fy, 1.0).normalize();
        let (c1, c2) = (frame.xi1(), frame.xi2());
        let xi1 = (c1 - eta * eta.dot(&c1)).normalize();
        let xi2 = (c2 - eta * eta.dot(&c2) - xi1 * xi1.dot(&c2)).normalize();
        frame = TangentFrame::from_axes(xi1, xi2, eta, FrameSource::Refined);
    }
    Ok(frame)
}

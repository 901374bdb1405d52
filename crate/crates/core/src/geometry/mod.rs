//! Analytic test surfaces, node sets and exact test fields.

mod fields;
mod nodes;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fields::{tangent_field_from_gradient, GaussianMix, TestField, DEFAULT_FIELD_SEED};
pub use nodes::{
    generate_hammersley, generate_icosahedral, generate_nodes, generate_poisson,
    generate_poisson_torus, icosahedral_count, icosahedral_level_for, MAX_ICOSAHEDRAL_LEVEL,
};

pub type Point = Vector3<f64>;

/// Major (center-line) radius of the torus.
pub const TORUS_MAJOR: f64 = 1.0;
/// Tube radius of the torus.
pub const TORUS_MINOR: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceModel {
    #[serde(rename = "sphere")]
    UnitSphere,
    Torus,
}

impl SurfaceModel {
    /// Implicit function whose zero set is the surface.
    pub fn implicit(&self, x: &Point) -> f64 {
        match self {
            SurfaceModel::UnitSphere => x.norm_squared() - 1.0,
            SurfaceModel::Torus => {
                let rho = x[0].hypot(x[1]);
                (TORUS_MAJOR - rho).powi(2) + x[2] * x[2] - TORUS_MINOR * TORUS_MINOR
            }
        }
    }

    pub fn implicit_gradient(&self, x: &Point) -> Vector3<f64> {
        match self {
            SurfaceModel::UnitSphere => 2.0 * x,
            SurfaceModel::Torus => {
                let rho = x[0].hypot(x[1]);
                let s = 2.0 * (rho - TORUS_MAJOR) / rho;
                Vector3::new(s * x[0], s * x[1], 2.0 * x[2])
            }
        }
    }

    /// Unit outward normal at a surface point.
    pub fn normal(&self, x: &Point) -> Vector3<f64> {
        match self {
            SurfaceModel::UnitSphere => x / x.norm(),
            SurfaceModel::Torus => self.implicit_gradient(x).normalize(),
        }
    }

    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            SurfaceModel::UnitSphere => 4.0 * PI,
            SurfaceModel::Torus => 4.0 * PI * PI * TORUS_MAJOR * TORUS_MINOR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurfaceModel::UnitSphere => "sphere",
            SurfaceModel::Torus => "torus",
        }
    }

    /// Largest implicit-equation residual over a cloud.
    pub fn max_residual(&self, cloud: &PointCloud) -> f64 {
        cloud
            .points()
            .iter()
            .map(|p| self.implicit(p).abs())
            .fold(0.0, f64::max)
    }

    /// Rejects clouds with any point off the surface by more than `tol`.
    pub fn check_cloud(&self, cloud: &PointCloud, tol: f64) -> Result<()> {
        for (i, p) in cloud.points().iter().enumerate() {
            let r = self.implicit(p);
            if !(r.abs() <= tol) {
                return Err(Error::arg(format!(
                    "node {i} is off the {} (implicit residual {r:e})",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for SurfaceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(SurfaceModel::UnitSphere),
            "torus" => Ok(SurfaceModel::Torus),
            _ => Err(Error::arg(format!("unknown surface '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFamily {
    Icosahedral,
    Hammersley,
    #[serde(rename = "poisson")]
    PoissonDisk,
    #[serde(rename = "file")]
    FromFile,
}

impl NodeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NodeFamily::Icosahedral => "icosahedral",
            NodeFamily::Hammersley => "hammersley",
            NodeFamily::PoissonDisk => "poisson",
            NodeFamily::FromFile => "file",
        }
    }
}

impl std::str::FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icosahedral" => Ok(NodeFamily::Icosahedral),
            "hammersley" => Ok(NodeFamily::Hammersley),
            "poisson" => Ok(NodeFamily::PoissonDisk),
            "file" => Ok(NodeFamily::FromFile),
            _ => Err(Error::arg(format!("unknown node family '{s}'"))),
        }
    }
}

/// Surface samples. Points are pairwise distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    family: NodeFamily,
}

impl PointCloud {
    /// Wraps a point list, rejecting non-finite coordinates and exact
    /// duplicates.
    pub fn new(points: Vec<Point>, family: NodeFamily) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::arg(format!("point {i} has a non-finite coordinate")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_unstable_by(|&a, &b| lex_cmp(&points[a], &points[b]));
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::arg(format!("points {a} and {b} coincide")));
            }
        }
        Ok(PointCloud { points, family })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads a node file: one `x y z` triple per line, `#` starts a comment.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows = parse_rows::<3>(&text, path)?;
        let points = rows.into_iter().map(Vector3::from).collect();
        PointCloud::new(points, NodeFamily::FromFile).map_err(|e| match e {
            Error::Argument(msg) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg,
            },
            e => e,
        })
    }

    pub fn write(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let mut out = String::with_capacity(self.len() * 64);
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "# {} nodes, family {}", self.len(), self.family.name());
        for p in &self.points {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Parses whitespace-separated rows of exactly `W` floats, skipping blank
/// lines and `#` comments.
pub(crate) fn parse_rows<const W: usize>(text: &str, path: &Path) -> Result<Vec<[f64; W]>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut row = [0.0; W];
        let mut fields = line.split_whitespace();
        for slot in row.iter_mut() {
            let tok = fields
                .next()
                .ok_or_else(|| err(format!("expected {W} values")))?;
            *slot = tok
                .parse()
                .map_err(|_| err(format!("cannot parse '{tok}' as a number")))?;
        }
        if fields.next().is_some() {
            return Err(err(format!("expected {W} values")));
        }
        rows.push(row);
    }
    Ok(rows)
}

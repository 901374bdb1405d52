//! Per-stencil derivative weights shared by both methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localframe::TangentFrame;
use crate::polybasis::DerivOp;

/// Surface differential operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdoKind {
    #[serde(rename = "grad")]
    Gradient,
    #[serde(rename = "div")]
    Divergence,
    #[serde(rename = "lap")]
    Laplacian,
}

impl SdoKind {
    pub const ALL: [SdoKind; 3] = [SdoKind::Gradient, SdoKind::Divergence, SdoKind::Laplacian];

    pub fn name(self) -> &'static str {
        match self {
            SdoKind::Gradient => "grad",
            SdoKind::Divergence => "div",
            SdoKind::Laplacian => "lap",
        }
    }

    /// Number of sparse matrices the operator is stored as.
    pub fn components(self) -> usize {
        match self {
            SdoKind::Laplacian => 1,
            _ => 3,
        }
    }

    /// Smallest polynomial degree that can represent the operator.
    pub fn min_degree(self) -> usize {
        match self {
            SdoKind::Laplacian => 2,
            _ => 1,
        }
    }
}

impl std::str::FromStr for SdoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad" | "gradient" => Ok(SdoKind::Gradient),
            "div" | "divergence" => Ok(SdoKind::Divergence),
            "lap" | "laplacian" => Ok(SdoKind::Laplacian),
            other => Err(Error::arg(format!("unknown operator '{other}'"))),
        }
    }
}

impl std::fmt::Display for SdoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Derivatives of the reconstructed Monge patch at the stencil center.
/// Second derivatives are zero when the reconstruction is linear.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MongeDerivatives {
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondDerivativeWeights {
    pub dxx: Vec<f64>,
    pub dxy: Vec<f64>,
    pub dyy: Vec<f64>,
}

/// Weight vectors over the stencil approximating local derivatives at the
/// center.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilWeights {
    pub frame: TangentFrame,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub second: Option<SecondDerivativeWeights>,
    pub monge: MongeDerivatives,
}

impl StencilWeights {
    /// Builds from weight vectors listed in the order of `ops`, which must
    /// start with `Dx, Dy` and may continue with `Dxx, Dxy, Dyy`.
    pub(crate) fn from_ops(frame: TangentFrame, ops: &[DerivOp], mut w: Vec<Vec<f64>>, heights: &[f64]) -> Result<Self> {
        if ops.len() != w.len() || !(ops == DerivOp::FIRST || ops == DerivOp::ALL) {
            return Err(Error::Internal("unexpected derivative operator list".into()));
        }
        let dot = |c: &[f64]| c.iter().zip(heights).map(|(a, b)| a * b).sum::<f64>();
        let second = if w.len() == 5 {
            let dyy = w.pop().unwrap_or_default();
            let dxy = w.pop().unwrap_or_default();
            let dxx = w.pop().unwrap_or_default();
            Some(SecondDerivativeWeights { dxx, dxy, dyy })
        } else {
            None
        };
        let dy = w.pop().unwrap_or_default();
        let dx = w.pop().unwrap_or_default();
        let monge = MongeDerivatives {
            fx: dot(&dx),
            fy: dot(&dy),
            fxx: second.as_ref().map_or(0.0, |s| dot(&s.dxx)),
            fxy: second.as_ref().map_or(0.0, |s| dot(&s.dxy)),
            fyy: second.as_ref().map_or(0.0, |s| dot(&s.dyy)),
        };
        Ok(StencilWeights {
            frame,
            dx,
            dy,
            second,
            monge,
        })
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn get(&self, op: DerivOp) -> Option<&[f64]> {
        match op {
            DerivOp::Dx => Some(&self.dx),
            DerivOp::Dy => Some(&self.dy),
            DerivOp::Dxx => self.second.as_ref().map(|s| s.dxx.as_slice()),
            DerivOp::Dxy => self.second.as_ref().map(|s| s.dxy.as_slice()),
            DerivOp::Dyy => self.second.as_ref().map(|s| s.dyy.as_slice()),
        }
    }

    pub(crate) fn require_second(&self) -> Result<&SecondDerivativeWeights> {
        self.second
            .as_ref()
            .ok_or_else(|| Error::arg("Laplacian needs second-derivative weights (degree >= 2, and kappa >= 1 for RBF-FD)"))
    }
}

/// Assembly rows of one stencil. Gradient rows are per output component,
/// divergence rows per input component, and the Laplacian has one row.
#[derive(Clone, Debug, PartialEq)]
pub struct SdoRows {
    pub kind: SdoKind,
    pub rows: Vec<Vec<f64>>,
}

/// `sum_k a_k w_k` over equally long weight vectors.
pub(crate) fn combine(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let n = terms.first().map_or(0, |t| t.1.len());
    let mut out = vec![0.0; n];
    for &(a, w) in terms {
        if a != 0.0 {
            for (o, x) in out.iter_mut().zip(w) {
                *o += a * x;
            }
        }
    }
    out
}

//! Global sparse surface operators assembled from per-node stencil weights.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sprs::CsMat;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SurfaceModel};
use crate::gmls::{self, GmlsConfig, DEFAULT_KERNEL_EXPONENT};
use crate::localframe::{pca_frame, project, refine_frame, Reconstructor, TangentFrame};
use crate::rbffd::{self, RbffdConfig};
use crate::spatial::{build_index, default_initial_size, select_stencil, SpatialIndex};
use crate::weights::{SdoRows, StencilWeights};

pub use crate::weights::SdoKind;

/// Number of times a failing stencil is retried with a larger radius when
/// `retry_tau` is set.
pub const MAX_TAU_RETRIES: usize = 3;
pub const TAU_RETRY_FACTOR: f64 = 1.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gmls,
    Rbffd,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Gmls, Method::Rbffd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gmls => "gmls",
            Method::Rbffd => "rbffd",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmls" => Ok(Method::Gmls),
            "rbffd" | "rbf-fd" => Ok(Method::Rbffd),
            other => Err(Error::arg(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How stencil tangent frames are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TangentMode {
    /// From the analytic surface normal.
    Exact,
    /// PCA of the stencil followed by Monge-patch refinement.
    Approx,
}

impl TangentMode {
    pub fn name(self) -> &'static str {
        match self {
            TangentMode::Exact => "exact",
            TangentMode::Approx => "approx",
        }
    }
}

impl FromStr for TangentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TangentMode::Exact),
            "approx" | "approximate" => Ok(TangentMode::Approx),
            other => Err(Error::arg(format!("unknown tangent mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub method: Method,
    pub degree: usize,
    pub tau: f64,
    /// GMLS kernel exponent `m`.
    pub kernel_exponent: u32,
    /// RBF-FD PHS parameter; `None` means the polynomial degree.
    pub kappa: Option<usize>,
    pub tangent: TangentMode,
    /// Refinement passes for approximate frames.
    pub tangent_iters: usize,
    /// Retry failing stencils with `tau * 1.25`, at most three times.
    pub retry_tau: bool,
}

impl OperatorParams {
    pub fn new(method: Method, degree: usize, tau: f64) -> Self {
        OperatorParams {
            method,
            degree,
            tau,
            kernel_exponent: DEFAULT_KERNEL_EXPONENT,
            kappa: None,
            tangent: TangentMode::Exact,
            tangent_iters: 1,
            retry_tau: false,
        }
    }

    pub fn with_tangent(mut self, tangent: TangentMode) -> Self {
        self.tangent = tangent;
        self
    }

    pub fn gmls_config(&self, tau: f64) -> GmlsConfig {
        GmlsConfig {
            degree: self.degree,
            kernel_exponent: self.kernel_exponent,
            tau,
        }
    }

    pub fn rbffd_config(&self, tau: f64) -> RbffdConfig {
        RbffdConfig {
            degree: self.degree,
            kappa: self.kappa.unwrap_or(self.degree),
            tau,
        }
    }

    pub fn effective_kappa(&self) -> usize {
        self.kappa.unwrap_or(self.degree)
    }

    pub fn validate(&self, kinds: &[SdoKind]) -> Result<()> {
        match self.method {
            Method::Gmls => self.gmls_config(self.tau).validate()?,
            Method::Rbffd => self.rbffd_config(self.tau).validate()?,
        }
        for kind in kinds {
            if self.degree < kind.min_degree() {
                return Err(Error::arg(format!("{kind} needs degree >= {}", kind.min_degree())));
            }
            if *kind == SdoKind::Laplacian && self.method == Method::Rbffd && self.effective_kappa() < 1 {
                return Err(Error::arg("RBF-FD Laplacian needs kappa >= 1"));
            }
        }
        Ok(())
    }

    fn reconstructor(&self, tau: f64) -> Reconstructor {
        match self.method {
            Method::Gmls => Reconstructor::Mls(self.gmls_config(tau)),
            Method::Rbffd => Reconstructor::Phs(self.rbffd_config(tau)),
        }
    }
}

/// Derivative weights of every node, shared by all operator kinds.
#[derive(Clone, Debug)]
pub struct CloudWeights {
    pub params: OperatorParams,
    pub stencils: Vec<Vec<usize>>,
    pub weights: Vec<StencilWeights>,
    /// Nodes whose stencil needed an enlarged radius.
    pub retried: usize,
}

impl CloudWeights {
    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn stencil_sizes(&self) -> Vec<usize> {
        self.stencils.iter().map(Vec::len).collect()
    }

    pub fn rows(&self, node: usize, kind: SdoKind) -> Result<SdoRows> {
        let w = &self.weights[node];
        match self.params.method {
            Method::Gmls => gmls::gmls_rows(w, kind),
            Method::Rbffd => rbffd::rbffd_rows(w, kind),
        }
        .map_err(|e| e.at_node(node))
    }
}

fn frame_for(
    cloud: &PointCloud,
    surface: Option<SurfaceModel>,
    stencil: &crate::spatial::Stencil,
    params: &OperatorParams,
    tau: f64,
) -> Result<TangentFrame> {
    let x = cloud.points()[stencil.center];
    match params.tangent {
        TangentMode::Exact => {
            let surface = surface.ok_or_else(|| Error::arg("exact tangent frames need an analytic surface"))?;
            TangentFrame::exact(surface, &x)
        }
        TangentMode::Approx => {
            let orient: Option<Vector3<f64>> = surface.map(|s| s.normal(&x));
            let coarse = pca_frame(cloud, stencil, orient.as_ref())?;
            refine_frame(cloud, stencil, &coarse, &params.reconstructor(tau), params.tangent_iters)
        }
    }
}

fn node_weights(
    i: usize,
    cloud: &PointCloud,
    index: &SpatialIndex,
    surface: Option<SurfaceModel>,
    params: &OperatorParams,
) -> Result<(Vec<usize>, StencilWeights, bool)> {
    let initial = default_initial_size(params.degree).min(cloud.len());
    let attempts = if params.retry_tau { MAX_TAU_RETRIES + 1 } else { 1 };
    let mut tau = params.tau;
    let mut attempt = 0;
    loop {
        let result = (|| -> Result<(Vec<usize>, StencilWeights)> {
            let stencil = select_stencil(index, i, initial, tau)?;
            let frame = frame_for(cloud, surface, &stencil, params, tau)?;
            let proj = project(cloud, &stencil, &frame);
            let w = match params.method {
                Method::Gmls => gmls::gmls_derivative_weights(&proj, &params.gmls_config(tau))?,
                Method::Rbffd => rbffd::rbffd_derivative_weights(&proj, &params.rbffd_config(tau))?,
            };
            Ok((stencil.indices, w))
        })();
        attempt += 1;
        match result {
            Err(e) if attempt < attempts && e.is_stencil_failure() => tau *= TAU_RETRY_FACTOR,
            other => return other.map(|(s, w)| (s, w, attempt > 1)).map_err(|e: Error| e.at_node(i)),
        }
    }
}

/// Runs the stencil, frame and weight pipeline for every node in parallel.
/// The first failing node (by index) aborts the computation.
pub fn compute_weights(cloud: &PointCloud, surface: Option<SurfaceModel>, params: &OperatorParams) -> Result<CloudWeights> {
    if cloud.is_empty() {
        return Err(Error::arg("point cloud is empty"));
    }
    params.validate(&[])?;
    if params.tangent == TangentMode::Exact && surface.is_none() {
        return Err(Error::arg("exact tangent frames need an analytic surface"));
    }
    let index = build_index(cloud)?;
    let results: Vec<Result<(Vec<usize>, StencilWeights, bool)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| node_weights(i, cloud, &index, surface, params))
        .collect();
    let mut stencils = Vec::with_capacity(cloud.len());
    let mut weights = Vec::with_capacity(cloud.len());
    let mut retried = 0;
    for r in results {
        let (s, w, grown) = r?;
        stencils.push(s);
        weights.push(w);
        retried += grown as usize;
    }
    Ok(CloudWeights {
        params: *params,
        stencils,
        weights,
        retried,
    })
}

/// Sparse operator. Gradient matrices are indexed by output component,
/// divergence matrices by input component.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceOperator {
    pub kind: SdoKind,
    pub params: OperatorParams,
    pub matrices: Vec<CsMat<f64>>,
}

/// Input or output of an operator application.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValues {
    Scalar(Vec<f64>),
    Vector(Vec<[f64; 3]>),
}

impl FieldValues {
    pub fn len(&self) -> usize {
        match self {
            FieldValues::Scalar(v) => v.len(),
            FieldValues::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values flattened componentwise.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            FieldValues::Scalar(v) => v.clone(),
            FieldValues::Vector(v) => v.iter().flatten().copied().collect(),
        }
    }

    pub fn as_scalar(&self) -> Option<&[f64]> {
        match self {
            FieldValues::Scalar(v) => Some(v),
            FieldValues::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[[f64; 3]]> {
        match self {
            FieldValues::Vector(v) => Some(v),
            FieldValues::Scalar(_) => None,
        }
    }

    /// Reads whitespace-separated rows with one (scalar) or three (vector)
    /// columns. `#` starts a comment.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let width = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .find(|l| !l.is_empty())
            .map_or(1, |l| l.split_whitespace().count());
        match width {
            1 => Ok(FieldValues::Scalar(
                crate::geometry::parse_rows::<1>(&text, path)?.into_iter().map(|r| r[0]).collect(),
            )),
            3 => Ok(FieldValues::Vector(crate::geometry::parse_rows::<3>(&text, path)?)),
            w => Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected 1 or 3 columns, found {w}"),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        match self {
            FieldValues::Scalar(v) => v.iter().for_each(|x| {
                let _ = writeln!(out, "{x:.16e}");
            }),
            FieldValues::Vector(v) => v.iter().for_each(|x| {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", x[0], x[1], x[2]);
            }),
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn matvec(m: &CsMat<f64>, x: &[f64], out: &mut [f64], accumulate: bool) {
    for (i, row) in m.outer_iterator().enumerate() {
        let s: f64 = row.iter().map(|(j, v)| v * x[j]).sum();
        if accumulate {
            out[i] += s;
        } else {
            out[i] = s;
        }
    }
}

impl SurfaceOperator {
    /// Assembles one operator kind from shared weights.
    pub fn assemble(weights: &CloudWeights, kind: SdoKind) -> Result<Self> {
        weights.params.validate(&[kind])?;
        let n = weights.len();
        let per_node: Vec<SdoRows> = (0..n)
            .into_par_iter()
            .map(|i| weights.rows(i, kind))
            .collect::<Result<_>>()?;
        let ncomp = kind.components();
        let mut indptr = vec![0usize; n + 1];
        for (i, s) in weights.stencils.iter().enumerate() {
            indptr[i + 1] = indptr[i] + s.len();
        }
        let nnz = indptr[n];
        let mut indices = vec![0usize; nnz];
        let mut data: Vec<Vec<f64>> = vec![vec![0.0; nnz]; ncomp];
        let mut order: Vec<usize> = Vec::new();
        for (i, s) in weights.stencils.iter().enumerate() {
            order.clear();
            order.extend(0..s.len());
            order.sort_unstable_by_key(|&k| s[k]);
            for (slot, &k) in order.iter().enumerate() {
                indices[indptr[i] + slot] = s[k];
                for c in 0..ncomp {
                    data[c][indptr[i] + slot] = per_node[i].rows[c][k];
                }
            }
        }
        let matrices = data
            .into_iter()
            .map(|d| {
                CsMat::try_new((n, n), indptr.clone(), indices.clone(), d)
                    .map_err(|(_, _, _, e)| Error::Internal(format!("sparse assembly: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SurfaceOperator {
            kind,
            params: weights.params,
            matrices,
        })
    }

    pub fn nodes(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.rows())
    }

    /// Stencil size of every node (row support of the first matrix).
    pub fn stencil_sizes(&self) -> Vec<usize> {
        self.matrices.first().map_or_else(Vec::new, |m| {
            let ip = m.indptr();
            let ip = ip.raw_storage();
            ip.windows(2).map(|w| w[1] - w[0]).collect()
        })
    }

    /// Applies the operator: Laplacian and gradient take a scalar field,
    /// divergence takes a vector field.
    pub fn apply(&self, values: &FieldValues) -> Result<FieldValues> {
        let n = self.nodes();
        if values.len() != n {
            return Err(Error::arg(format!("operator has {n} nodes, input has {}", values.len())));
        }
        match (self.kind, values) {
            (SdoKind::Laplacian, FieldValues::Scalar(u)) => {
                let mut out = vec![0.0; n];
                matvec(&self.matrices[0], u, &mut out, false);
                Ok(FieldValues::Scalar(out))
            }
            (SdoKind::Gradient, FieldValues::Scalar(u)) => {
                let comps: Vec<Vec<f64>> = self
                    .matrices
                    .par_iter()
                    .map(|m| {
                        let mut out = vec![0.0; n];
                        matvec(m, u, &mut out, false);
                        out
                    })
                    .collect();
                Ok(FieldValues::Vector((0..n).map(|i| [comps[0][i], comps[1][i], comps[2][i]]).collect()))
            }
            (SdoKind::Divergence, FieldValues::Vector(v)) => {
                let mut out = vec![0.0; n];
                let mut comp = vec![0.0; n];
                for (c, m) in self.matrices.iter().enumerate() {
                    comp.iter_mut().zip(v).for_each(|(x, vi)| *x = vi[c]);
                    matvec(m, &comp, &mut out, true);
                }
                Ok(FieldValues::Scalar(out))
            }
            (kind, _) => Err(Error::arg(format!(
                "{kind} expects a {} input",
                if kind == SdoKind::Divergence { "vector" } else { "scalar" }
            ))),
        }
    }

    /// Writes the operator as a text triplet file.
    pub fn export(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> Result<String> {
        let n = self.nodes();
        if n == 0 {
            return Err(Error::arg("cannot export an empty operator"));
        }
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "# surfops operator v1");
        let _ = writeln!(s, "kind {}", self.kind.name());
        let _ = writeln!(s, "method {}", p.method.name());
        let _ = writeln!(s, "degree {}", p.degree);
        let _ = writeln!(s, "tau {:.16e}", p.tau);
        let _ = writeln!(s, "kernel_exponent {}", p.kernel_exponent);
        match p.kappa {
            Some(k) => {
                let _ = writeln!(s, "kappa {k}");
            }
            None => {
                let _ = writeln!(s, "kappa default");
            }
        }
        let _ = writeln!(s, "tangent {}", p.tangent.name());
        let _ = writeln!(s, "tangent_iters {}", p.tangent_iters);
        let _ = writeln!(s, "retry_tau {}", p.retry_tau);
        let _ = writeln!(s, "nodes {n}");
        let _ = writeln!(s, "matrices {}", self.matrices.len());
        for (k, m) in self.matrices.iter().enumerate() {
            let _ = writeln!(s, "matrix {k} {}", m.nnz());
            for (i, row) in m.outer_iterator().enumerate() {
                for (j, v) in row.iter() {
                    let _ = writeln!(s, "{i} {j} {v:.16e}");
                }
            }
        }
        Ok(s)
    }

    pub fn import(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("missing '{key}' header")))?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
                _ => Err(perr(ln, format!("expected '{key} <value>'"))),
            }
        };
        fn parse<T: FromStr>(v: (usize, String), path: &Path) -> Result<T> {
            v.1.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: v.0,
                msg: format!("invalid value '{}'", v.1),
            })
        }
        let kind: SdoKind = parse(field("kind")?, path)?;
        let method: Method = parse(field("method")?, path)?;
        let degree: usize = parse(field("degree")?, path)?;
        let tau: f64 = parse(field("tau")?, path)?;
        let kernel_exponent: u32 = parse(field("kernel_exponent")?, path)?;
        let kappa_field = field("kappa")?;
        let kappa = if kappa_field.1 == "default" {
            None
        } else {
            Some(parse(kappa_field, path)?)
        };
        let tangent: TangentMode = parse(field("tangent")?, path)?;
        let tangent_iters: usize = parse(field("tangent_iters")?, path)?;
        let retry_tau: bool = parse(field("retry_tau")?, path)?;
        let n: usize = parse(field("nodes")?, path)?;
        let count: usize = parse(field("matrices")?, path)?;
        drop(field);
        if n == 0 {
            return Err(perr(0, "operator has no nodes".into()));
        }
        if count != kind.components() {
            return Err(perr(0, format!("{kind} needs {} matrices, file has {count}", kind.components())));
        }
        let mut matrices = Vec::with_capacity(count);
        for k in 0..count {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("missing matrix {k}")))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            let nnz: usize = match parts.as_slice() {
                ["matrix", idx, nnz] if idx.parse::<usize>().ok() == Some(k) => {
                    nnz.parse().map_err(|_| perr(ln, format!("invalid nonzero count '{nnz}'")))?
                }
                _ => return Err(perr(ln, format!("expected 'matrix {k} <nnz>'"))),
            };
            let mut indptr = vec![0usize; n + 1];
            let mut indices = Vec::with_capacity(nnz);
            let mut data = Vec::with_capacity(nnz);
            let mut last = (0usize, None::<usize>);
            for _ in 0..nnz {
                let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("matrix {k} ends early")))?;
                let mut it = l.split_whitespace();
                let (Some(a), Some(b), Some(c), None) = (it.next(), it.next(), it.next(), it.next()) else {
                    return Err(perr(ln, "expected 'row col value'".into()));
                };
                let i: usize = a.parse().map_err(|_| perr(ln, format!("invalid row '{a}'")))?;
                let j: usize = b.parse().map_err(|_| perr(ln, format!("invalid column '{b}'")))?;
                let v: f64 = c.parse().map_err(|_| perr(ln, format!("invalid value '{c}'")))?;
                if i >= n || j >= n {
                    return Err(perr(ln, format!("entry ({i}, {j}) outside {n}x{n}")));
                }
                let ordered = i > last.0 || (i == last.0 && last.1.is_none_or(|lj| j > lj));
                if !ordered {
                    return Err(perr(ln, "entries must be sorted by row, then column".into()));
                }
                last = (i, Some(j));
                indptr[i + 1] += 1;
                indices.push(j);
                data.push(v);
            }
            for i in 0..n {
                indptr[i + 1] += indptr[i];
            }
            let m = CsMat::try_new((n, n), indptr, indices, data)
                .map_err(|(_, _, _, e)| perr(ln, format!("invalid sparse structure: {e}")))?;
            matrices.push(m);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "unexpected trailing content".into()));
        }
        Ok(SurfaceOperator {
            kind,
            params: OperatorParams {
                method,
                degree,
                tau,
                kernel_exponent,
                kappa,
                tangent,
                tangent_iters,
                retry_tau,
            },
            matrices,
        })
    }
}

/// Builds one operator.
pub fn build_operator(
    cloud: &PointCloud,
    surface: Option<SurfaceModel>,
    kind: SdoKind,
    params: &OperatorParams,
) -> Result<SurfaceOperator> {
    params.validate(&[kind])?;
    SurfaceOperator::assemble(&compute_weights(cloud, surface, params)?, kind)
}

/// Builds several operator kinds from one weight computation.
pub fn build_operators(
    cloud: &PointCloud,
    surface: Option<SurfaceModel>,
    kinds: &[SdoKind],
    params: &OperatorParams,
) -> Result<Vec<SurfaceOperator>> {
    params.validate(kinds)?;
    let w = compute_weights(cloud, surface, params)?;
    kinds.iter().map(|&k| SurfaceOperator::assemble(&w, k)).collect()
}

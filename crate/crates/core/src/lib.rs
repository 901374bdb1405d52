//! Surface differential operators (gradient, divergence, Laplace-Beltrami)
//! on point clouds, discretized with GMLS or PHS+Poly RBF-FD stencils.

pub mod error;
pub mod geometry;
pub mod gmls;
pub mod harness;
pub mod linalg;
pub mod localframe;
pub mod operator;
pub mod polybasis;
pub mod rbffd;
pub mod spatial;
pub mod weights;

pub use error::{Error, Result};

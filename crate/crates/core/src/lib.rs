//! Computational kernel for finite-type complex affine surfaces defined by
//! meromorphic connections: build surfaces from glued planar pieces, trace
//! geodesics, classify singularities, construct canonical local models of
//! irregular singularities, and compute the Delaunay decomposition.

pub mod affine;
pub mod builders;
pub mod config;
pub mod delaunay;
pub mod doublepole;
pub mod error;
pub mod format;
pub mod fuchsian;
pub mod geodesics;
pub mod geometry;
pub mod graft;
pub mod irregular;
pub mod model_surface;
pub mod surface;

pub use affine::{AffineMap, LogGlue, MapClass, C};
pub use surface::{Piece, PieceKind, Surface};

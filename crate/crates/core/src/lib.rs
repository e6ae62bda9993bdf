//! Construction and verification of planar maps with prescribed Jacobian, their
//! 2p-Dirichlet energies, radial stretchings and explicit non-symmetric competitors.

pub mod constructions;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod isoperimetry;
pub mod map;
pub mod moser;
pub mod quadrature;
pub mod radial;
pub mod region;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Mat2, Vec2};
pub use map::PlanarMap;
pub use radial::{GeneralisedStretching, RadialDatum, RadialProfile};
pub use region::Region;

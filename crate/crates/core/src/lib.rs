//! Point-vortex dynamics in planar domains and small-period choreography
//! orbits near critical points of the hydrodynamic Robin function.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hamiltonian;
pub mod io;
pub mod orbit;
pub mod robin;
pub mod spectral;

pub use error::{Result, VortexError};
pub use geometry::{ComplexPoint, Domain, DomainKind, DomainSpec};
pub use hamiltonian::{RescaledState, VortexConfiguration};

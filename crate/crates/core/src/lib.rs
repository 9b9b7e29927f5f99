//! Uncertainty quantification for single-phase Darcy flow in a lognormal
//! random medium.
//!
//! The flow cell on the unit square is discretised with hybridized lowest-order
//! Raviart–Thomas mixed finite elements. Permeability samples come from
//! circulant embedding or a truncated Karhunen–Loève expansion, and moments of
//! scalar quantities of interest are estimated with standard or multilevel
//! Monte Carlo.
//!
//! ```
//! use darcy_uq::mesh::build_uniform_mesh;
//! use darcy_uq::mfem::{MixedFem, ProblemData};
//! use darcy_uq::qoi::effective_permeability;
//! use darcy_uq::randfield::{FieldRealization, SeedId};
//!
//! let mesh = build_uniform_mesh(4).unwrap();
//! let field = FieldRealization::constant(&mesh, 1.0, SeedId::new(0, 0, 0)).unwrap();
//! let sol = MixedFem::new(&mesh).solve(&field, &ProblemData::flow_cell()).unwrap();
//! assert!((effective_permeability(&mesh, &sol) - 1.0).abs() < 1e-9);
//! ```

pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod mfem;
pub mod mlmc;
pub mod qoi;
pub mod randfield;

pub use error::{Error, Result};

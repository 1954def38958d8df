//! Spectral Galerkin simulation of density-dependent incompressible flow on
//! the unit 3-torus, with viscous stress given implicitly by a convex
//! potential and regularized through its Moreau envelope.
//!
//! Besides the solver the crate carries the verification machinery around
//! it: convex-analysis identities for the rheology, a semi-Lagrangian
//! density transport with an exact maximum principle, matrix-valued
//! measures with the trace-domination bound, energy ledgers and a
//! relative-energy monitor against manufactured strong solutions.
//!
//! ```no_run
//! use rheoflow::galerkin::run;
//! use rheoflow::harness::parse_str;
//!
//! let cfg = parse_str(
//!     "kmax = 1\nM = 16\ndt = 1e-3\nT = 0.1\nalpha = 1e-4\ngamma = 2\n\
//!      potential = newtonian\nnu = 0.1\nrho_min = 0.5\nrho_max = 2\n\
//!      u0 = mode\nu0_k = 1 0 0\nu0_w = 0 1 0\n",
//! ).unwrap();
//! let out = run(&cfg.sim).unwrap();
//! println!("final kinetic energy {}", out.ledger.rows.last().unwrap().kinetic);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod galerkin;
pub mod harness;
pub mod measure;
pub mod quadrature;
pub mod rheology;
pub mod tensor;
pub mod transport;

pub use basis::{Basis, DivFreeMode, Parity, VelocityField};
pub use error::{Error, Result};
pub use measure::MatrixMeasure;
pub use quadrature::QuadratureGrid;
pub use rheology::ConvexPotential;
pub use tensor::SymMat3;
pub use transport::DensityField;

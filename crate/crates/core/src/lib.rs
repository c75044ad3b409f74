//! Finite element laboratory for steady flows of an incompressible
//! power-law fluid whose power-law index depends on a transported
//! concentration, together with the discrete analysis tools used to
//! study the scheme: variable-exponent norms, projection operators,
//! discrete inf-sup constants, a discrete Bogovskii operator, Lipschitz
//! truncation, and a Holder-norm monitor.

pub mod assembly;
pub mod config;
pub mod diagnostics;
pub mod fespace;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod physics;
pub mod projections;
pub mod solver;
pub mod varexp;

pub use fespace::{FEFunction, FESpace, Pairing};
pub use mesh::Mesh;
pub use varexp::ExponentField;

pub mod baths;
pub mod error;
pub mod lattice;
pub mod negf;
pub mod observables;
pub mod quadrature;
pub mod semiclassical;
pub mod symmetry;
pub mod weakcoupling;

pub use error::{NessError, Result};

//! Dense and sparse linear algebra used by the solvers and the tests.

mod dense;
mod eigen;
mod sparse;
mod sturm;

pub use dense::{dot, norm2, Matrix};
pub use eigen::{
    spectral_norm, spectral_norm_symmetric, symmetric_eigen, symmetric_eigenvalues, SymmetricEigen,
};
pub use sparse::{CsrMatrix, LdlFactor, SkylineMatrix};
pub use sturm::{inertia_count_below, tridiagonalize, Tridiagonal};

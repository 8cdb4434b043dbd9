//! Dense linear algebra and statistical primitives.
//!
//! Everything here is a pure function over immutable inputs, generic over the
//! scalar type.

mod lasso;
mod linalg;
mod matrix;
mod tdist;

pub use lasso::{lasso_entry_values, LassoPath};
pub use linalg::{
    cholesky, cholesky_solve, min_eigenvalue, orthonormal_complement, spd_inverse,
    symmetric_eigenvalues,
};
pub use matrix::{dot, norm, DenseMatrix};
pub use tdist::{ln_gamma, regularized_incomplete_beta, student_t_two_sided_p};

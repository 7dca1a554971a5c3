//! Small dense linear-algebra kernel and deterministic randomness.
//!
//! Everything is `f64`, samples are rows, and every routine is a pure
//! function of its inputs.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{symmetric_eigen, EigenDecomposition, MAX_SWEEPS, SYMMETRY_TOL};
pub use matrix::{
    dot, invert_2x2, invert_2x2_with_floor, matmul, matmul_transposed, transposed_matmul, Matrix, SINGULAR_FLOOR,
};
pub use rng::SeededRng;

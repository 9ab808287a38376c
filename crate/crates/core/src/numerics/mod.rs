//! Matrix kernels, reverse-mode gradients, Adam, and finite-difference checks.

mod adam;
mod dense;
pub mod gradcheck;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use dense::{dot, DenseMatrix};
pub use gradcheck::{finite_diff_check, FdConfig, FdReport};
pub use sparse::SparseSymMatrix;
pub use tape::{log_sigmoid, log_sum_exp, sigmoid, Gradients, Tape, Var};

/// Deterministic generator threaded through every stochastic step.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Mixes a stream index into a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

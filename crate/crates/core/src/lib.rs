//! Exact distribution of a sum of independent uniform random variables whose
//! ranges may all differ.
//!
//! The continuous case ([`contsum`]) evaluates the density and CDF of
//! `X_1 + … + X_n` with `X_j ~ U[c_j − a_j, c_j + a_j]` as an alternating sum
//! over the `2^n` vertices of the hyperbox `Π [−a_j, a_j]`. The discrete case
//! ([`discsum`]) does the same for integer uniforms on `[−m_j, m_j]`, weighted
//! by the Laurent coefficients of `csc^n`. Every closed form is checked against
//! an independent brute-force generator in [`oracles`].

pub mod cli;
pub mod contsum;
pub mod discsum;
pub mod error;
pub mod numeric;
pub mod oracles;

pub use contsum::{ContinuousComponent, ContinuousSum, EvalMode, EvalResult, SignVector, Value};
pub use discsum::{csc_coefficient, CscCoefficientTable, DiscreteComponent, DiscreteSum};
pub use error::{Error, Result};
pub use numeric::Rational;

/// Largest number of components accepted by the `2^n` vertex sums.
pub const N_MAX: usize = 24;

/// Walks `{−1, +1}^n` in reflected Gray-code order, starting from all `−1`.
///
/// After the first (all-minus) vertex, each subsequent vertex differs from the
/// previous one in exactly one coordinate; `visit` receives the index of the
/// flipped coordinate (`None` for the first vertex) and its new sign.
pub(crate) fn for_each_vertex(n: usize, mut visit: impl FnMut(Option<(usize, i8)>)) {
    debug_assert!(n <= N_MAX);
    visit(None);
    let mut signs = vec![-1i8; n];
    for step in 1u64..(1u64 << n) {
        let j = step.trailing_zeros() as usize;
        signs[j] = -signs[j];
        visit(Some((j, signs[j])));
    }
}

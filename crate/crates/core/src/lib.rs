//! Numerical toolkit for composition operators on Bergman spaces with
//! exponential weights `ω = e^{-η}`, `η(r) = A (1 - r)^{-α}`, on the unit disk.
//!
//! Modules, bottom up: [`weights`] (the weight family and its radius function
//! `τ`), [`quad`] (disk quadrature), [`kernel`] (moment tables and the
//! reproducing kernel), [`metric`] (the geodesic distance of `|dz|/τ` and the
//! kernel-angle distance), [`compop`] (polynomial self-maps and boundary
//! criteria), [`hilbert_schmidt`] (HS norms of composition differences) and
//! [`verify`] (the acceptance checks).

pub mod compop;
pub mod hilbert_schmidt;
pub mod kernel;
pub mod metric;
pub mod quad;
pub mod verify;
pub mod weights;

pub use num_complex::Complex64;

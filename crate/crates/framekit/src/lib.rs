//! Design of low-coherence unit-norm frames under structural constraints
//! (real, complex, unital, nonnegative, sparse), incoherent row selection
//! from unital matrices (Fourier/Hadamard), and evaluation of the resulting
//! frames as compressed-sensing measurement matrices.

pub mod cone;
pub mod error;
pub mod frame;
mod linalg;
pub mod design;
pub mod select;
pub mod subproblem;

pub use error::{Error, Result};
pub use frame::{coherence, fp_upper_bound, polar_retraction, tight_polar_factor, welch_bound};
pub use frame::{Field, Frame, GramSummary, WelchBound, C64};

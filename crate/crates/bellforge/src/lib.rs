//! Device-independent quantum key distribution toolkit.
//!
//! The pipeline runs in four stages, one module each:
//!
//! 1. [`quantum`] — finite-dimensional states and projective measurements,
//!    Born-rule behaviors, and the preset measurement families (CHSH-type
//!    qubit settings, Fourier-basis qudit settings, hard-coded example sets).
//! 2. [`polytope`] — the local polytope of a Bell scenario: deterministic
//!    vertex enumeration, membership tests, and the linear program that
//!    extracts an optimal separating Bell functional from observed data.
//! 3. [`npa`] — a level-2 moment-matrix semidefinite relaxation bounding an
//!    eavesdropper's probability of guessing the key-generation outcome given
//!    an observed Bell value.
//! 4. [`finitekey`] / [`protocol`] — statistical corrections (Hoeffding
//!    intervals, hypergeometric sampling bound), the finite-size key-length
//!    formula, and a Monte-Carlo simulator of the honest i.i.d. protocol.
//!
//! [`experiments`] glues the stages into the reproducible command-line
//! workflows (table reproductions, key-rate sweeps, random-settings scans).

pub mod experiments;
pub mod finitekey;
pub mod npa;
pub mod polytope;
pub mod protocol;
pub mod quantum;

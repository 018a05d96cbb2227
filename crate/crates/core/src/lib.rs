//! Generalized mirror descent (GMD) and its stochastic variant (SGMD).
//!
//! The update `φ⁽ᵗ⁾(w⁽ᵗ⁺¹⁾) = φ⁽ᵗ⁾(w⁽ᵗ⁾) − η⁽ᵗ⁾·g⁽ᵗ⁾` runs in the dual space of
//! an invertible, possibly time-dependent mirror map `φ⁽ᵗ⁾`. Gradient descent,
//! preconditioned descent, mirror descent with a strongly convex potential and
//! diagonal Adagrad are all instances.
//!
//! Modules:
//! - [`tensor`]: dense linear algebra, extreme eigenvalues, minimum-norm interpolants.
//! - [`problems`]: squared-loss regression and one-hidden-layer networks with exact gradients.
//! - [`mirrors`]: identity, linear, tanh and Adagrad mirror maps with certified bounds.
//! - [`optimizer`]: the GMD/SGMD loop and the learning-rate schedules derived from
//!   PL-inequality analysis.
//! - [`analysis`]: convergence-rate, dual-ball containment and implicit-regularization checks.
//! - [`harness`]: experiment configs, dataset generation, CSV/SVG output.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod mirrors;
pub mod optimizer;
pub mod par;
pub mod problems;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use mirrors::{AdagradState, Bounds, Mirror, MirrorKind};
pub use optimizer::{run, Mode, Rule, RunConfig, Schedule, Trace, TraceRecord};
pub use problems::{Activation, Dataset, MlpProblem, MseProblem, PLConstants, Problem};
pub use tensor::Mat;

//! Certification and exact closed-loop simulation of switched linear systems
//! controlled over a finite-data-rate channel: only the quantized output and
//! the active mode are available at sampling times.
//!
//! The crate is organized around five pieces:
//!
//! * [`numerics`] — dense matrix kernels (exponentials, cross-Gramian
//!   integrals, discrete Lyapunov solves, left pseudo-inverses, norms),
//! * [`model`] — the switched plant, switching signals and their dwell-time
//!   and average-dwell-time validation,
//! * [`certify`] — the derived constants: data-rate bounds, per-mode Lyapunov
//!   contraction rates, pairwise switch constants, and the minimum average
//!   dwell time,
//! * [`codec`] — the encoder/decoder state machine (zoom-out overflow bits,
//!   zoom-in hypercube quantization, estimate reconstruction, switch
//!   recovery),
//! * [`sim`] — an event-driven, piecewise-exact closed-loop simulator with
//!   trajectory-level invariant checks.

pub mod certify;
pub mod codec;
pub mod model;
pub mod numerics;
pub mod sim;

pub use certify::Certificate;
pub use codec::{Codec, QuantizerConfig};
pub use model::{AdtParams, ModeId, SwitchedSystem, SwitchingSignal};
pub use numerics::Mat;
pub use sim::TrajectoryLog;


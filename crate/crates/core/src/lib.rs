//! Synthesis of time-invariant, stability-certified frequency controllers
//! for power networks whose inertia switches between a finite set of modes.
//!
//! The pipeline, end to end:
//!
//! 1. [`netmodel`] — graph-structured swing dynamics, one `(A_q, B_q)` pair
//!    per inertia mode, plus exact zero-order-hold discretizations.
//! 2. [`scenarios`] — seeded random initial states and mode-switching
//!    sequences used to generate training data.
//! 3. [`lqr`] — finite-horizon Riccati solves along known switching
//!    sequences; rollouts are aggregated into Gram matrices for imitation.
//! 4. [`synth`] — controllers: the unconstrained least-squares fit, two
//!    constructive stabilizing gains (distributed and local), and the
//!    stability-constrained (optionally sparsity-promoting) imitation
//!    controller found by an alternating log-det barrier scheme.
//! 5. [`certify`] — independent verification: per-mode Hurwitz margins,
//!    common-Lyapunov LMI margins, Lyapunov recovery for a fixed gain,
//!    and sparsity-pattern classification.
//! 6. [`sim`] — exact closed-loop propagation under switching and the
//!    evaluation metrics (total |u| and total |ω|).
//!
//! All operations are deterministic given their inputs and seeds; parallel
//! execution never changes results because reductions run in a fixed
//! canonical order.

pub mod certify;
pub mod io;
pub mod linalg;
pub mod lqr;
pub mod netmodel;
pub mod scenarios;
pub mod sim;
pub mod synth;
pub mod synthetic;

mod error;

pub use error::{Error, Result};

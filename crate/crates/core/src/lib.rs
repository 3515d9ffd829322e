//! Desk-scale numerical laboratory for a Nash-Moser iteration that embeds
//! strictly pseudoconvex CR manifolds.
//!
//! The crate is organised around one iteration of the scheme:
//!
//! * [`domain`] — the shrinking family of strictly convex domains `D_rho(h)`
//!   on a uniform lattice, with the inclusion and boundary-distance audits.
//! * [`holder`] — discrete Holder norms `||.||_{rho,a}` and empirical audits
//!   of the interpolation / product / chain / inverse-map inequalities.
//! * [`frames`] — CR structures as frame coefficient fields `A`, `B` over an
//!   embedding, the tangential operators `dbar_M` / `dbar_X`, the Levi form,
//!   initial normalization and non-isotropic dilation.
//! * [`smoothing`] — the mollifier family `S_t` with vanishing moments and
//!   the Friedrichs commutator `[S_t, w d/dx^n]`.
//! * [`homotopy`] — a model homotopy operator pair `(P, Q)` (ridge-regularized
//!   least-squares inverses of the discrete `dbar_M`) with a measured defect.
//! * [`iteration`] — one full step (alteration, renormalization, frame and
//!   domain update) and the driver for the scheduled sequence.
//! * [`schedule`] — the log-domain certifier for the parameter schedule
//!   `(rho_j, sigma_j, t_j)` and its cascade of inductive bounds.

pub mod domain;
pub mod error;
pub mod frames;
pub mod grid;
pub mod holder;
pub mod homotopy;
pub mod iteration;
pub mod schedule;
pub mod smoothing;

pub use domain::Domain;
pub use error::{CrError, Result};
pub use frames::EmbeddingState;
pub use grid::{GridField, Lattice, Mask};
pub use holder::NormReport;
pub use homotopy::HomotopyOperator;
pub use iteration::{MapPair, StepDiagnostics};
pub use schedule::{ScheduleParams, ScheduleState};
pub use smoothing::Mollifier;

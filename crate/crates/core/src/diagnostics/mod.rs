//! Variational KL terms, human-normalized scores, noise-scale probes and
//! the finite-difference gradient suite.
//!
//! The KL values are reported for monitoring only and never enter the
//! training loss.

mod gradcheck;
mod hns;
mod kl;
mod probe;

pub use gradcheck::{gradcheck_suite, GradcheckOptions, GradcheckReport};
pub use hns::{hns, mean_hns, BaselineTable, RISK_SUBSUITE};
pub use kl::{fixed_block_kl, gaussian_kl_diag, noisynet_kl, sane_batch_kl, KlBreakdown, DEFAULT_KL_EPSILON};
pub use probe::{sigma_probe, SigmaProbeReport, SigmaRecord};

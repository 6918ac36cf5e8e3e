//! Software model of a spiking cochlea with channel-local automatic gain
//! control.
//!
//! The signal path mirrors the hardware it models: a bank of 64 geometrically
//! spaced fourth-order bandpass filters with 12 programmable gain levels
//! ([`filterbank`]), asynchronous delta modulation spike generation per
//! channel ([`adm`]), and an event-driven step-wise gain controller with
//! bit-width-constrained registers and a serialized gain-update queue
//! ([`agc`]). On top of that sit the spike-feature extraction ([`features`]),
//! the logistic-regression / small-DNN evaluation models ([`classifiers`]),
//! and the experiment harness ([`harness`]) that ties everything into
//! end-to-end simulations and CSV/JSON reports.

pub mod adm;
pub mod agc;
pub mod classifiers;
pub mod error;
pub mod features;
pub mod filterbank;
pub mod harness;

pub use error::CochleaError;

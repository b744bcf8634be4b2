//! Privacy-preserving smart-meter billing with authenticated secret sharing,
//! plus a bidirectional LSTM theft detector.
//!
//! Readings are secret-shared by each meter among computation parties that
//! evaluate static or dynamic tariffs over `GF(2^61 - 1)` and release each
//! bill only after a batched MAC check. [`simnet`] runs whole billing periods
//! over an in-process network with exact traffic accounting; [`detector`]
//! classifies day windows of readings.

pub mod billing;
pub mod detector;
pub mod field;
pub mod ingest;
pub mod mpc;
pub mod pipeline;
pub mod simnet;

//! Runtime monitoring for reinforcement-learning policies: detect when a
//! deployed agent is executing out-of-distribution (OOD) transitions.
//!
//! The detector (COTD, "conformal OOD transition detector") learns the
//! training environment's transition kernel `T(s2 | s1, Π(s1))` with an
//! ensemble of conditional variational autoencoders, calibrates the
//! reconstruction errors with inductive conformal prediction, and flags a
//! transition as OOD when none of the ensemble's errors conform to the
//! calibration set at confidence `1 - δ`.
//!
//! Pipeline stages (see [`pipeline`] and the `cotd` binary):
//!
//! 1. `train-agent` — A2C on one of the built-in environments, producing a
//!    frozen greedy policy.
//! 2. `train-detector` — roll the frozen policy and fit the CVAE ensemble
//!    (plus a PEDM-style dynamics-ensemble baseline).
//! 3. `calibrate` — score `M` fresh on-policy transitions with all `N`
//!    models and keep the sorted `M × N` error set.
//! 4. `evaluate` — run labeled ID/altered/perturbed episode arms, score
//!    every transition, and report ROC/AUC per OOD category.
//!
//! Everything is deterministic given a root seed: randomness is fanned out
//! through named substreams ([`seeds`]), reductions are ordered, and the
//! `parallel` feature cannot change any reported number.

pub mod agent;
pub mod conformal;
pub mod cvae;
pub mod envs;
pub mod error;
pub mod eval;
pub mod par;
pub mod pipeline;
pub mod seeds;
pub mod tensor;

pub use error::{Error, Result};

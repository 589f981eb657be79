//! The Simplex loop: fixed-step integration under zero-order hold, local and
//! remote controllers, the switching monitor and decision module, and run
//! records with CSV traces.

mod controller;
mod integrate;
mod monitor;
mod sim;
pub mod socket;

use thiserror::Error;

pub use controller::{clamp_action, Controller, ControllerSpec, LocalController, Response};
pub use integrate::{integrate_period, integrate_period_observed, rk4_step};
pub use monitor::{decide, FscEval, Mode, Monitor, RscEval};
pub use sim::{simulate_run, Event, EventKind, Row, RunRecord, SimOptions, Violation, DEFAULT_HORIZON, DEFAULT_SUBSTEPS};

use crate::switchgen::SwitchgenError;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("substeps must be at least 1")]
    ZeroSubsteps,
    #[error("non-finite state at substep {substep}")]
    BlowUp { substep: usize },
    #[error("numerical blow-up at t = {t}")]
    NumericalBlowUp { t: f64 },
    #[error("initial state is not recoverable: h(x0) = {h} must be positive with the shield on")]
    NotRecoverable { h: f64 },
    #[error("initial state is already unsafe")]
    StartsUnsafe,
    #[error("expected {expected} state values, got {got}")]
    StateArity { expected: usize, got: usize },
    #[error("expected {expected} action values, got {got}")]
    ActionArity { expected: usize, got: usize },
    #[error("non-finite action {0:?}")]
    NonFiniteAction(Vec<f64>),
    #[error("the model has no baseline law")]
    NoBaseline,
    #[error("{0}")]
    BadController(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Switchgen(#[from] SwitchgenError),
}

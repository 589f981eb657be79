//! Provably-sound controller switching conditions derived from polynomial
//! barrier certificates, and a Simplex runtime-assurance loop that uses them.
//!
//! The crate is organised bottom-up:
//!
//! * [`poly`]: sparse polynomials, Lie derivatives, interval enclosures.
//! * [`expr`]: model-file parser and trigonometric recasting.
//! * [`model`]: polynomial dynamical systems and the builtin microgrid models.
//! * [`certify`]: barrier-certificate validation and Lyapunov sub-level extraction.
//! * [`switchgen`]: Taylor chain, remainder and drift bounds, the switching artifact.
//! * [`runtime`]: integrator, controllers, decision module, simulation loop, socket transport.
//! * [`harness`]: experiments, metrics, reward, falsification.

pub mod poly;
pub mod expr;
pub mod model;
pub mod certify;
pub mod switchgen;
pub mod runtime;
pub mod harness;
mod json;
mod sampling;

//! Minimum-energy point-to-point quadrotor trajectories under deterministic
//! wind.
//!
//! The optimal control problem (rotor angular accelerations as controls,
//! mechanical rotor energy as cost) is transcribed by trapezoidal direct
//! collocation and solved with an augmented Lagrangian method. A cascaded PD
//! tracking controller flying the same mission provides the energy baseline.

pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod nlp;
pub mod ocp;
pub mod output;
pub mod par;
pub mod power;
pub mod sim;
pub mod wind;

pub use error::Error;

//! Agent-based pedestrian flow simulation on link/node networks with
//! multinomial-logit route choice.
//!
//! The crate is organised along the calibration → simulation → evaluation
//! pipeline:
//!
//! * [`dcm`] estimates and evaluates logit route-choice models;
//! * [`network`], [`walking`] and [`features`] describe the walkable space,
//!   the one-dimensional walking dynamics and the route-choice factors;
//! * [`engine`] runs seeded, replicable simulations;
//! * [`eval`] turns event logs into arrival series, route shares and error metrics;
//! * [`scenarios`] bundles the evacuation and firework scenarios;
//! * [`synth`] draws synthetic observations and reference series;
//! * [`cli`] is the command-line front end behind the `crowdroute` binary.

pub mod cli;
pub mod dcm;
pub mod engine;
pub mod eval;
pub mod features;
pub mod network;
pub mod walking;
pub mod scenarios;
pub mod synth;

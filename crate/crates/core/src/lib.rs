//! Simulation and benchmarking of home energy management systems.
//!
//! The crate models a house with a battery (BESS), a PV installation, an EV
//! charger and a grid connection on a 15-minute grid, and compares energy
//! management controllers (rule-based, MPC, decision trees and an exploratory
//! stub) under a four-part electricity tariff. A projection-based safety layer
//! keeps every controller within the grid connection limit.

pub mod controllers;
pub mod forecast;
pub mod harness;
pub mod mathprog;
pub mod safety;
pub mod series;
pub mod sim;
pub mod tariff;
pub mod time;
pub mod treec;

pub use series::Series;
pub use sim::{ActionPair, BessAction, EvParams, EvSession, HouseConfig, StepTrace};
pub use time::Timestamp;

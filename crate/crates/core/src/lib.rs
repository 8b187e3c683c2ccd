//! Rational information acquisition over correlated alternatives.
//!
//! * [`gaussian`]: conjugate and multivariate Gaussian belief updates.
//! * [`voi`]: value of information, decision thresholds, comparative statics.
//! * [`policy`]: ranking and selection of information to acquire.
//! * [`sim`]: synthetic-agent simulation of a randomized information experiment.
//! * [`analysis`]: OLS with cluster-robust errors and the regression specs.
//! * [`cli`]: the `infodemand` command line.

pub mod analysis;
pub mod cli;
pub mod gaussian;
pub mod normal;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod verify;
pub mod voi;

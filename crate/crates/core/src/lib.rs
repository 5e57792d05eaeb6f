//! Siting, sizing and scheduling of a community energy storage unit on a
//! radial low-voltage feeder.

pub mod cesopt;
pub mod fixture;
pub mod netmodel;
pub mod planner;
pub mod qpcore;
pub mod scenario;
pub mod validator;

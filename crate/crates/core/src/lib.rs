//! Survival POMDP, the recurrent Q-learning agents that live in it, and the
//! probes that measure what their networks learned along the way.

pub mod agent;
pub mod dataset;
pub mod env;
pub mod nn;
pub mod probes;
pub mod train;

//! Name-prediction cohesion tracking for C++ version histories.

pub mod cli;
pub mod cpp;
pub mod delta;
pub mod evaluator;
pub mod injector;
pub mod miner;
pub mod report;
pub mod scorer;

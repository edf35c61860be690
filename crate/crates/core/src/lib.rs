pub mod cli;
pub mod config;
pub mod cost;
pub mod emit;
pub mod graph;
pub mod materialize;
pub mod oracle;
pub mod partition;
pub mod planner;
pub mod rml;
pub mod tree;

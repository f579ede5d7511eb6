//! Distributed demand-response control of multi-zone buildings: a thermal
//! simulator, learned zone models, consensus ADMM and the control loop that
//! ties them together.

pub mod data;
pub mod sim;
pub mod nn;
pub mod models;
pub mod admm;
pub mod planners;
pub mod control;
pub mod report;

pub mod factors;
pub mod fg;
pub mod metrics;
pub mod planner;
pub mod track;
pub mod vehicle;

pub mod constants;
pub mod run;
pub mod schedule;
pub mod stage;

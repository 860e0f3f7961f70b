pub mod budget;
pub mod comms;
pub mod context;
pub mod env;
pub mod ids;
pub mod judge;
pub mod bench;
pub mod memory;
pub mod planning;
pub mod record;
pub mod runtime;
pub mod subagents;
pub mod suite;
pub mod task;
pub mod time;
pub mod xplearn;

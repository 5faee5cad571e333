//! Parallel enumeration, result caching, family verification and report
//! formats on top of [`persymm_core`].

pub mod cache;
pub mod oracle;
pub mod report;
pub mod verify;

pub use persymm_core;

//! Logic-programming engine, enterprise-semantics compiler and task
//! orchestrator for running business initiatives as networks of
//! precondition-gated tasks.

pub mod case_study;
pub mod logic;
pub mod orchestrator;
pub mod initiative;
pub mod report;
pub mod semantics;
pub mod synthesis;
pub mod tools;

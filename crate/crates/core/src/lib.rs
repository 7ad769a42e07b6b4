//! An LLM-free adaptive agent: an eight-phase cognitive pipeline with
//! per-caller profiling, layered memory and a skill lifecycle, served
//! behind one gateway speaking five agent protocols.

pub mod cognition;
pub mod gateway;
pub mod jsonrpc;
pub mod memory;
pub mod money;
pub mod perception;
pub mod profiler;
pub mod protocols;
pub mod session;
pub mod skills;
pub mod snapshot;
pub mod text;
pub mod toolhub;

pub use cognition::{Agent, AgentConfig, PipelineResult};

//! Time-series question answering with a tool-using ReAct agent, an
//! evidence-tracking critic and a synthetic benchmark harness.
pub mod agent;
pub mod evidence;
pub mod harness;
pub mod llm;
pub mod oversight;
pub mod parallel;
pub mod series;
pub mod stats;
pub mod toolkit;

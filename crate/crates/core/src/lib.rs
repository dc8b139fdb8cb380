//! Interest-aware adaptive bitrate streaming: a trace-driven player
//! simulator, a DQN rate-adaptation agent with buffer-, rate- and
//! MPC-based baselines, an interestingness regressor, and the evaluation
//! metrics used to compare them.

pub mod agents;
pub mod eval;
pub mod interest;
pub mod media;
pub mod nn;
pub mod sim;
pub mod trace;

//! Latent-state reasoning for UI agents: screen representation, LLM
//! backends, latent estimation, planning, grounding, a simulated device,
//! and evaluation.

pub mod agent;
pub mod error;
pub mod eval;
pub mod grounder;
pub mod latent;
pub mod llm;
pub mod oracle;
pub mod planner;
pub mod prompts;
pub mod screen;
pub mod sim;
pub mod trace;

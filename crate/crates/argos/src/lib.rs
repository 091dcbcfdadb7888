//! Attribute-guided hazard discovery and functional safety requirement
//! synthesis for home robots, with an evaluation kit (latent-topology
//! metrics and judge-based scoring).
//!
//! The pipeline runs in five stages over a run directory:
//!
//! 1. `ground` — extract semantic units from seed instructions and retrieve
//!    matching risk-rule attributes above a similarity threshold;
//! 2. `generate` — enumerate k-factor rule combinations, render hazard
//!    prompts (attribute-injected, vanilla, or chain-of-thought) and parse
//!    the two-line hazard output;
//! 3. `synthesize` — retrieve regulatory clauses for each hazard and
//!    synthesize structured functional safety requirements;
//! 4. `evaluate` — compute embedding-topology metrics and judge scores;
//! 5. `report` — render aggregate tables as markdown and CSV.
//!
//! Every LLM and embedding call goes through a provider contract with a
//! deterministic mock implementation, so the whole pipeline can run
//! end-to-end without network access and reproduce byte-identical outputs.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod evalkit;
pub mod fsrsynth;
pub mod grounding;
pub mod hazardgen;
pub mod llm;
pub mod net;
pub mod pipeline;
pub mod report;
pub mod runstore;
pub mod util;

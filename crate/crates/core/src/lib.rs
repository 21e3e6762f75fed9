//! Werewolf social-deduction arena.
//!
//! The crate is organised bottom-up:
//!
//! * [`game`]: domain types and the pure rules (`new_game`, `check_win`, `apply_event`).
//! * [`engine`]: the Game Master loop with bid-arbitrated debates.
//! * [`agents`]: the policy trait, agent views, memory streams and scripted policies.
//! * [`llm`]: chat-completion client and the prompt/parse machinery behind [`llm::LlmPolicy`].
//! * [`montecarlo`]: the debate-free baseline simulation.
//! * [`analytics`]: voting entropy, consensus points, bid histograms, seer metrics, win matrices.
//! * [`tournament`]: round-robin scheduling and log persistence.
//!
//! Batch workloads (Monte Carlo estimation, tournaments, soak runs) go through [`exec`], which
//! uses rayon when the `parallel` feature is enabled and a plain loop otherwise.

pub mod agents;
pub mod analytics;
pub mod engine;
pub mod exec;
pub mod game;
pub mod llm;
pub mod log;
pub mod montecarlo;
pub mod rng;
pub mod tournament;

pub use game::{GameConfig, GameState, Role, Seat, Winner};

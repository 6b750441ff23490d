//! Personality-conditioned user models for social robots.
//!
//! Three robot personas remember different categories of information about
//! the people they talk to. The crate covers the persona definitions, the
//! per-robot memory probabilities, the recall lifecycle across sessions,
//! storage, a small movie knowledge base and a scripted dialogue engine that
//! makes the memory differences visible in conversation.

pub mod dialogue;
pub mod kb;
pub mod memory;
pub mod persona;
pub mod recall;
pub mod sim;
pub mod store;
pub mod transcript;

//! Virtual character construction, multi-agent simulacra and their evaluation.

pub mod character;
pub mod conformity;
pub mod eval;
pub mod llm;
pub mod macm;
pub mod seed;
pub mod simulacrum;
pub mod store;
pub mod story;

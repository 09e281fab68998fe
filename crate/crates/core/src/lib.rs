//! Tool-augmented table question answering.
//!
//! A reader answers a question over a linearized table; when a detector
//! judges the answer unreliable, a generated row filter shrinks the table and
//! the reader tries again. Filters that error or select nothing are reverted.

pub mod cache;
pub mod detector;
pub mod eval;
pub mod filter;
pub mod http;
pub mod reader;
pub mod table;
pub mod toolgen;

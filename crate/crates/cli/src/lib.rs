//! Library half of the `memplan` binary: flag shapes, command logic, and
//! the structured output schema, exposed so tests can parse what the tool
//! prints.

pub mod args;
pub mod commands;
pub mod output;

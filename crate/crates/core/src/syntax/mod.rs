//! ASCII concrete syntax for modules, systems and literals.

mod lexer;
mod parser;
mod render;

pub use parser::{
    fill_placeholder_keys, observe_module_keys, parse_expr, parse_module, parse_module_raw, parse_modules,
    parse_modules_raw, parse_system, parse_value,
};
pub use render::{render_base_type, render_expr, render_module, render_system, render_type, render_value};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    DuplicateKey,
    DuplicateName,
    ArrowAtBoundary,
    SelfReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind:?}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Placeholder written as `@?` in source; replaced by fresh keys before use.
pub const PLACEHOLDER_KEY: &str = "?";

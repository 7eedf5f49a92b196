//! Symbolic scalar fields on coordinate charts.
//!
//! A [`FieldExpr`] is an immutable expression tree over the coordinates of a
//! [`Chart`]. Fields are closed under arithmetic, composition with a small
//! library of primitives, and exact partial differentiation. The text grammar
//! accepted by [`parse_field`] is
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr ')' | '(' expr ')'
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! Identifiers are chart coordinates, the constants `pi` and `e`, or one of
//! the functions `sin cos exp ln log sqrt expinv bump smoothstep`, an
//! `expinv_k` derivative, or a registered profile name (optionally `name_k`
//! for its `k`-th derivative).

mod expr;
mod grid;
mod parse;
mod profile;

use thiserror::Error;

pub use expr::{Display, FieldExpr, Func};
pub use grid::{c1_seminorm, grid_extremum, sup_norm, sup_norm_with, Extremum, GridBox, SupReport};
pub use parse::{parse_field, parse_field_in, ParseContext};
pub use profile::{Monotonicity, Piece, Profile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{name}` at offset {offset}")]
    UnknownSymbol { name: String, offset: usize },
    #[error("coordinate `{name}` is outside a chart of dimension {dim}")]
    DimensionMismatch { name: String, dim: usize },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("evaluation outside the field's domain: {0}")]
    Domain(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Coordinate names of a chart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart {
    names: Vec<String>,
}

impl Chart {
    /// `(x, y)` in dimension 2, `(x, y, z, u)` in dimension 4, `(x, y, z)` in
    /// dimension 3, otherwise `x1, y1, x2, y2, ...`.
    pub fn standard(dim: usize) -> Self {
        let names: Vec<String> = match dim {
            1 => vec!["t".into()],
            2 => vec!["x".into(), "y".into()],
            3 => vec!["x".into(), "y".into(), "z".into()],
            4 => vec!["x".into(), "y".into(), "z".into(), "u".into()],
            _ => (0..dim)
                .map(|i| {
                    if dim.is_multiple_of(2) {
                        format!("{}{}", if i % 2 == 0 { "x" } else { "y" }, i / 2 + 1)
                    } else {
                        format!("c{}", i + 1)
                    }
                })
                .collect(),
        };
        Chart { names }
    }

    pub fn with_names<S: AsRef<str>>(names: &[S]) -> Self {
        Chart {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

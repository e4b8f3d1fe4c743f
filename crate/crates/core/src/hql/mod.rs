//! The query dialect: lexing, parsing, rendering, binding checks and
//! normalization of FOR predicates.

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod normalize;
pub mod parser;
pub mod render;
pub mod validate;

pub use ast::{HowToQuery, Pred, Query, WhatIfQuery};
pub use normalize::{normalize_for, Conjunct, DisjointDnf, DEFAULT_ATOM_CAP};
pub use parser::{parse_howto, parse_pred, parse_query, parse_whatif};
pub use render::{render_howto, render_query, render_whatif};

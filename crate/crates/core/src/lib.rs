//! Procedural Raven-style matrix puzzles: symbolic generation, a rule-induction
//! solver, deterministic rendering, perception QA and template reasoning
//! chains, dataset emission and transcript scoring.

pub mod cot;
pub mod emit;
pub mod encoding;
pub mod eval;
pub mod error;
pub mod parallel;
pub mod puzzle;
pub mod qa;
pub mod render;
pub mod rules;
pub mod solver;
pub mod stream;
pub mod symbolic;
pub mod templates;

pub use error::{Error, Result};
pub use puzzle::{PuzzleGenerator, PuzzleRecord, Split};
pub use rules::{RuleBundle, RuleKind, RuleSpec, RuleTable};
pub use symbolic::{Attribute, AttributeValue, Component, Layout, LayoutKind, PatternId, ShapeType, SymbolicPanel};

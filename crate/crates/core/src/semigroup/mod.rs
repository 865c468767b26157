//! The free subsemigroup construction: ping-pong pair, the admissibility
//! check for alphabet elements, the repair map `Phi`, the concatenation map,
//! seed alphabets, deep elements and the staged construction.

mod alphabet;
mod deep;
mod pair;
mod stage;

pub use alphabet::*;
pub use deep::*;
pub use pair::*;
pub use stage::*;

use thiserror::Error;

use crate::chain::ChainError;
use crate::group::GroupError;
use crate::hyperbolic::GeometryError;

#[derive(Debug, Error)]
pub enum SemigroupError {
    #[error("no ping-pong pair found: {0}")]
    NotFound(String),
    #[error("paper constants are arithmetic-only here: {0}")]
    PaperModeOnly(String),
    #[error("none of g, bg, gb, bgb passes the admissibility check for word {word:?}")]
    FactCounterexample { word: Vec<i32>, products: Vec<(f64, f64)> },
    #[error("extension inequality fails: ||F(...)|| = {norm} < {sum} = sum of part norms")]
    ExtensionViolation { norm: f64, sum: f64, words: Vec<Vec<i32>> },
    #[error("budget: {0}")]
    Budget(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

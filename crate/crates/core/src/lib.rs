//! Gaussian random geometric graphs as Ramsey colorings.
//!
//! Vertices are i.i.d. `N(0, I_d / d)` vectors; two vertices are joined by a
//! (blue) edge when their inner product is at least `-c_p / sqrt(d)`, and all
//! other pairs are red. The crate provides
//!
//! * [`analytic`]: normal cdf machinery, the `p_C` / `c_p` solvers and the
//!   main-term clique bounds,
//! * [`gaussian_core`]: seeded streams, normal / chi / truncated samplers and
//!   empirical validators for the Gaussian tail lemmas,
//! * [`geom_graph`]: the direct and triangular (Bartlett) samplers, Gram and
//!   adjacency construction, perfect sequences,
//! * [`estimators`]: Monte-Carlo clique probabilities with confidence
//!   intervals,
//! * [`ramsey_search`]: exact monochromatic clique search and witness
//!   certificates,
//! * [`cli`]: the command-line harness behind the `gauss-ramsey` binary.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod gaussian_core;
pub mod geom_graph;
pub mod parallel;
pub mod ramsey_search;
pub mod stats;

pub use error::{Error, Result};

use std::fmt;
use std::str::FromStr;

/// Edge color of the complete graph. Blue pairs are edges of the geometric
/// graph, red pairs are non-edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(Color::Red),
            "blue" => Ok(Color::Blue),
            other => Err(Error::domain("color", format!("expected red|blue, got {other:?}"))),
        }
    }
}

/// `n choose 2` as a float, the exponent of the binomial reference terms.
pub(crate) fn pairs(r: usize) -> f64 {
    (r as f64) * (r as f64 - 1.0) / 2.0
}

/// `n choose 3` as a float.
pub(crate) fn triples(r: usize) -> f64 {
    if r < 3 {
        return 0.0;
    }
    (r as f64) * (r as f64 - 1.0) * (r as f64 - 2.0) / 6.0
}

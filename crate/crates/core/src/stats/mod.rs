//! Rank-based hypothesis tests: midranks, Kruskal-Wallis with tie
//! correction, and Spearman correlation with t-approximate or exact
//! permutation p-values.

mod kruskal;
mod rank;
mod spearman;
pub mod special;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kruskal::{kruskal_wallis, KwResult};
pub use rank::{midranks, RankedSample};
pub use spearman::{spearman, spearman_with, PValueMethod, SpearmanResult, EXACT_MAX_N};
pub use special::{chi_square_sf, student_t_sf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("all pooled values are identical; the test is undefined")]
    AllIdentical,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} paired observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("variable `{0}` is constant")]
    ConstantVariable(&'static str),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("exact permutation p-value limited to n <= {max}, got {n}")]
    TooLargeForExact { n: usize, max: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Two-tailed significance markers used in the report tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "")]
    None,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
}

impl Stars {
    /// `**` below 0.01, `*` below 0.05.
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

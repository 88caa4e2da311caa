//! Counterfactual targets and weight functions.
//!
//! A target names one of the eight counterfactual outcomes produced by
//! information-transfer interventions on the edge sets `S_j = {P_1..P_j}`,
//! where variant `k` picks which edges are emulated by a synthetic draw
//! rather than removed. The estimands are `E[f(A) * Y]` under the target's
//! law, for the weight `f` equal to the identity or the constant 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight valid `(j, k)` counterfactual indices.
///
/// `S0K0` is the observed outcome; `S4K0` removes every path from `A`.
/// `S2K1` and `S2K2` are the two emulation variants of the same edge set
/// and are distributionally identical conditional on `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    S0K0,
    S1K0,
    S1K1,
    S2K1,
    S2K2,
    S3K2,
    S3K0,
    S4K0,
}

impl Target {
    pub const ALL: [Target; 8] = [
        Target::S0K0,
        Target::S1K0,
        Target::S1K1,
        Target::S2K1,
        Target::S2K2,
        Target::S3K2,
        Target::S3K0,
        Target::S4K0,
    ];

    /// Targets with a canonical gradient of their own. `S0K0` is estimated
    /// by an empirical mean and `S2K2` shares the `S2K1` formula.
    pub const GRADIENT: [Target; 6] = [
        Target::S1K0,
        Target::S1K1,
        Target::S2K1,
        Target::S3K2,
        Target::S3K0,
        Target::S4K0,
    ];

    /// Index `j` of the intervened edge set `S_j`.
    pub fn j(self) -> usize {
        match self {
            Target::S0K0 => 0,
            Target::S1K0 | Target::S1K1 => 1,
            Target::S2K1 | Target::S2K2 => 2,
            Target::S3K2 | Target::S3K0 => 3,
            Target::S4K0 => 4,
        }
    }

    /// Edge-emulation variant `k`.
    pub fn k(self) -> usize {
        match self {
            Target::S0K0 | Target::S1K0 | Target::S3K0 | Target::S4K0 => 0,
            Target::S1K1 | Target::S2K1 => 1,
            Target::S2K2 | Target::S3K2 => 2,
        }
    }

    pub fn from_jk(j: usize, k: usize) -> Result<Target> {
        match (j, k) {
            (0, 0) => Ok(Target::S0K0),
            (1, 0) => Ok(Target::S1K0),
            (1, 1) => Ok(Target::S1K1),
            (2, 1) => Ok(Target::S2K1),
            (2, 2) => Ok(Target::S2K2),
            (3, 2) => Ok(Target::S3K2),
            (3, 0) => Ok(Target::S3K0),
            (4, 0) => Ok(Target::S4K0),
            _ => Err(Error::validation(format!("invalid target (j={j}, k={k})"))),
        }
    }

    pub fn has_gradient(self) -> bool {
        !matches!(self, Target::S0K0 | Target::S2K2)
    }

    /// The target whose gradient formula estimates this target.
    pub fn gradient_alias(self) -> Target {
        if self == Target::S2K2 {
            Target::S2K1
        } else {
            self
        }
    }

    pub fn parse(s: &str) -> Result<Target> {
        let t = s.trim().to_ascii_lowercase();
        for cand in Target::ALL {
            if cand.to_string() == t {
                return Ok(cand);
            }
        }
        if let Some((j, k)) = t
            .trim_matches(|c| c == '(' || c == ')')
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        {
            return Target::from_jk(j, k);
        }
        Err(Error::validation(format!("unknown target {s:?}")))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}k{}", self.j(), self.k())
    }
}

/// Weight `f` in the estimand `E[f(A) * Y_target]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    /// `f(a) = a`, using the integer code as the numeric value of `A`.
    Identity,
    /// `f(a) = 1`.
    Unit,
}

impl Weight {
    #[inline]
    pub fn apply(self, a: usize) -> f64 {
        match self {
            Weight::Identity => a as f64,
            Weight::Unit => 1.0,
        }
    }
}

//! Desk-scale toolkit for training language models that decide *whether* to
//! reason step-by-step before answering.
//!
//! The crate covers the full loop around that decision:
//!
//! - [`format`] — parsing, validation, and canonical rendering of the
//!   judge / think-mode / answer transcript format.
//! - [`verify`] — binary per-domain answer verifiers (symbolic math
//!   equivalence, sandboxed code tests, multiple-choice keys, keyword
//!   coverage).
//! - [`reward`] — two-level reward composition (mode choice + answer
//!   correctness) and group-relative advantage normalization.
//! - [`coldstart`] — majority-voted, randomly-overridden, difficulty-stratified
//!   construction of mode-labeled training corpora.
//! - [`distill`] — sorted-distribution distillation losses across mismatched
//!   vocabularies, with multi-token-prediction head alignment.
//! - [`upscale`] — layer-saturation scoring and depth-duplication planning.
//! - [`sim`] — a seeded policy-gradient simulator reproducing the
//!   reasoning-mode and token-usage dynamics of mode-aware training.
//!
//! Everything that draws randomness does so through named, independently
//! derived streams (see [`rng`]), so every pipeline output is byte-identical
//! across reruns with the same seed.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub mod coldstart;
pub mod config;
pub mod distill;
pub mod format;
pub mod matrix_io;
pub mod num;
pub mod reward;
pub mod rng;
pub mod sim;
pub mod upscale;
pub mod verify;

/// Default scalar for the concrete pipelines; the math kernels in [`distill`]
/// and [`upscale`] are generic over any [`num::Real`].
pub type Scalar = f64;

/// Logit matrix instantiated at the default scalar.
pub type Logits = distill::LogitMatrix<Scalar>;

/// Per-layer activation pair instantiated at the default scalar.
pub type Activations = upscale::LayerActivations<Scalar>;

/// Task domain labels shared by corpus records, verification, and simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Code,
    Math,
    Science,
    General,
    Multiturn,
    Tooluse,
}

impl Domain {
    /// All domains, in feature-index order.
    pub const ALL: [Domain; 6] = [
        Domain::Code,
        Domain::Math,
        Domain::Science,
        Domain::General,
        Domain::Multiturn,
        Domain::Tooluse,
    ];

    /// Stable position of this domain in one-hot feature vectors.
    pub fn index(self) -> usize {
        match self {
            Domain::Code => 0,
            Domain::Math => 1,
            Domain::Science => 2,
            Domain::General => 3,
            Domain::Multiturn => 4,
            Domain::Tooluse => 5,
        }
    }

    /// Lowercase wire name of the domain.
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Code => "code",
            Domain::Math => "math",
            Domain::Science => "science",
            Domain::General => "general",
            Domain::Multiturn => "multiturn",
            Domain::Tooluse => "tooluse",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain {s:?} (expected one of code, math, science, general, multiturn, tooluse)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_round_trips_through_strings() {
        for d in Domain::ALL {
            assert_eq!(d.as_str().parse::<Domain>().unwrap(), d);
        }
        assert!("poetry".parse::<Domain>().is_err());
    }

    #[test]
    fn domain_indices_are_a_permutation() {
        let mut seen = [false; 6];
        for d in Domain::ALL {
            assert!(!seen[d.index()]);
            seen[d.index()] = true;
        }
    }

    #[test]
    fn domain_serde_uses_lowercase_names() {
        assert_eq!(serde_json::to_string(&Domain::Tooluse).unwrap(), "\"tooluse\"");
        let d: Domain = serde_json::from_str("\"multiturn\"").unwrap();
        assert_eq!(d, Domain::Multiturn);
    }
}

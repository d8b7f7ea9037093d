//! Proper scoring rules. They serve twice: as the payment rule inside the
//! mechanisms and as the principal's value of a belief.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringKind {
    /// `2 p(y) - |p|^2`
    Quadratic,
    /// `ln p(y)`
    #[serde(alias = "logarithmic")]
    Log,
}

/// A strictly proper scoring rule multiplied by a positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringRule {
    #[serde(rename = "rule")]
    pub kind: ScoringKind,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for ScoringRule {
    fn default() -> Self {
        Self::quadratic()
    }
}

impl ScoringRule {
    pub fn new(kind: ScoringKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return input(format!("scoring scale must be positive and finite, got {scale}"));
        }
        Ok(Self { kind, scale })
    }

    pub fn quadratic() -> Self {
        Self { kind: ScoringKind::Quadratic, scale: 1.0 }
    }

    pub fn log() -> Self {
        Self { kind: ScoringKind::Log, scale: 1.0 }
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        Self::new(self.kind, scale)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.kind, self.scale).map(|_| ())
    }

    /// `S(p, y)`. The log rule returns negative infinity when `p(y) = 0`.
    pub fn score(&self, p: &Belief, y: usize) -> f64 {
        let probs = p.probs();
        let raw = match self.kind {
            ScoringKind::Quadratic => 2.0 * probs[y] - norm_sq(probs),
            ScoringKind::Log => probs[y].ln(),
        };
        self.scale * raw
    }

    /// `E_{Y ~ p} S(p, Y)`, with `0 ln 0` read as 0.
    pub fn expected_score(&self, p: &Belief) -> f64 {
        let probs = p.probs();
        let raw = match self.kind {
            ScoringKind::Quadratic => norm_sq(probs),
            ScoringKind::Log => probs.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum(),
        };
        self.scale * raw
    }

    /// `E_{Y ~ truth} S(report, Y)`.
    pub fn expected_score_under(&self, report: &Belief, truth: &Belief) -> f64 {
        truth
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(y, &w)| w * self.score(report, y))
            .sum()
    }
}

fn norm_sq(p: &[f64]) -> f64 {
    p.iter().map(|q| q * q).sum()
}

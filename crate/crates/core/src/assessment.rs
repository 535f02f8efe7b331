//! Per-dimension assessment and weighted overall score.
//!
//! The scoring formulas are implementation-defined heuristics for reports,
//! not validated measurements:
//!
//! | dimension     | score                                                      |
//! |---------------|------------------------------------------------------------|
//! | cognitive     | mean of (mean tracing value or 1.0, bloom ordinal / 6)     |
//! | behavioral    | min(1, sessions / saturation)                              |
//! | emotional     | mean of self-efficacy and motivation                       |
//! | metacognitive | mean of self-regulation and reflection ability             |
//! | contextual    | 1.0 with grade and goal set, else 0.5                      |

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{Dimension, LearnerProfile};

pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AssessmentError {
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("weight for {0} is negative or not finite")]
    BadWeight(Dimension),
    #[error("behavioral saturation must be at least 1 session")]
    ZeroSaturation,
}

/// Dimension weights; must be nonnegative and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssessmentWeights(pub BTreeMap<Dimension, f64>);

impl Default for AssessmentWeights {
    fn default() -> Self {
        AssessmentWeights::equal()
    }
}

impl AssessmentWeights {
    pub fn equal() -> Self {
        AssessmentWeights(Dimension::ALL.iter().map(|d| (*d, 0.2)).collect())
    }

    /// Weights in [`Dimension::ALL`] order.
    pub fn from_array(w: [f64; 5]) -> Self {
        AssessmentWeights(Dimension::ALL.iter().copied().zip(w).collect())
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        self.0.get(&dim).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), AssessmentError> {
        for dim in Dimension::ALL {
            let w = self.get(dim);
            if !w.is_finite() || w < 0.0 {
                return Err(AssessmentError::BadWeight(dim));
            }
        }
        let sum: f64 = Dimension::ALL.iter().map(|d| self.get(*d)).sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(AssessmentError::WeightSum(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessmentConfig {
    pub weights: AssessmentWeights,
    /// Session count at which the behavioral score saturates.
    pub behavioral_saturation: u64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        AssessmentConfig {
            weights: AssessmentWeights::equal(),
            behavioral_saturation: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub student_id: String,
    pub per_dimension: BTreeMap<Dimension, f64>,
    pub weights: AssessmentWeights,
    pub overall: f64,
    pub generated_at: DateTime<Utc>,
}

impl AssessmentReport {
    pub fn score(&self, dim: Dimension) -> f64 {
        self.per_dimension.get(&dim).copied().unwrap_or(0.0)
    }

    /// Fixed-width text table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "Learning report for {} ({})\n",
            self.student_id,
            self.generated_at.format("%Y-%m-%d %H:%M UTC")
        );
        out.push_str(&format!("{:<14} {:>6} {:>7}\n", "dimension", "score", "weight"));
        out.push_str(&format!("{:-<14} {:->6} {:->7}\n", "", "", ""));
        for dim in Dimension::ALL {
            out.push_str(&format!(
                "{:<14} {:>6.2} {:>7.2}\n",
                dim.as_str(),
                self.score(dim),
                self.weights.get(dim)
            ));
        }
        out.push_str(&format!("{:-<14} {:->6} {:->7}\n", "", "", ""));
        out.push_str(&format!("{:<14} {:>6.2}\n", "overall", self.overall));
        out
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn dimension_score(profile: &LearnerProfile, dim: Dimension, saturation: u64) -> f64 {
    match dim {
        Dimension::Cognitive => {
            let kt: Vec<f64> = profile
                .cognitive
                .knowledge_tracing
                .values()
                .map(|t| t.value())
                .collect();
            let mastery = if kt.is_empty() { 1.0 } else { mean(&kt) };
            let bloom = f64::from(profile.cognitive.bloom_level.ordinal()) / 6.0;
            mean(&[mastery, bloom])
        }
        Dimension::Behavioral => {
            (profile.behavioral.session_count as f64 / saturation as f64).min(1.0)
        }
        Dimension::Emotional => mean(&[
            profile.emotional.self_efficacy.value(),
            profile.emotional.motivation.value(),
        ]),
        Dimension::Metacognitive => mean(&[
            profile.metacognitive.self_regulation.value(),
            profile.metacognitive.reflection_ability.value(),
        ]),
        Dimension::Contextual => {
            // grade is always valid by construction, so only the goal can be missing
            if profile.contextual.learning_goal.trim().is_empty() {
                0.5
            } else {
                1.0
            }
        }
    }
}

pub fn assess_profile_with(
    profile: &LearnerProfile,
    config: &AssessmentConfig,
    generated_at: DateTime<Utc>,
) -> Result<AssessmentReport, AssessmentError> {
    config.weights.validate()?;
    if config.behavioral_saturation == 0 {
        return Err(AssessmentError::ZeroSaturation);
    }
    let per_dimension: BTreeMap<Dimension, f64> = Dimension::ALL
        .iter()
        .map(|d| (*d, dimension_score(profile, *d, config.behavioral_saturation)))
        .collect();
    let overall = Dimension::ALL
        .iter()
        .map(|d| config.weights.get(*d) * per_dimension[d])
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(AssessmentReport {
        student_id: profile.student_id.to_string(),
        per_dimension,
        weights: config.weights.clone(),
        overall,
        generated_at,
    })
}

/// Scores `profile` with the given weights and the default saturation.
pub fn assess_profile(
    profile: &LearnerProfile,
    weights: &AssessmentWeights,
    generated_at: DateTime<Utc>,
) -> Result<AssessmentReport, AssessmentError> {
    let config = AssessmentConfig {
        weights: weights.clone(),
        ..AssessmentConfig::default()
    };
    assess_profile_with(profile, &config, generated_at)
}

//! Evaluation kit: latent-topology metrics over scenario embeddings,
//! judge prompts with score extraction, and mean ± SD aggregation.

pub mod judge;
pub mod topology;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use judge::{
    build_fsr_audit_prompt, build_scenario_judge_prompt, parse_fsr_audit, parse_scenario_judgment,
    JudgeError,
};
pub use topology::{
    aligned_variance, centroid_shift, cse, directional_similarity, diversity, effective_rank,
    pairwise_direction_mean, EmbeddingSet, TopologyError,
};

/// Which rubric produced a judge result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rubric {
    ScenarioQuality,
    FsrAudit,
}

impl Rubric {
    /// Metric keys this rubric must produce, in report order.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            Self::ScenarioQuality => &["PR", "LR", "FSR"],
            Self::FsrAudit => &["CC", "PRC", "LRC"],
        }
    }
}

/// One judged target with its 1..=10 integer scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeResult {
    pub target_id: String,
    pub rubric: Rubric,
    pub scores: BTreeMap<String, u8>,
    pub justification: String,
    #[serde(skip)]
    pub raw_transcript: String,
}

/// Per-method, per-metric mean ± sample SD.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreSummary {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n−1 normalization); 0 when n = 1.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Aggregate judge results grouped by (method, metric). The method label
/// is supplied by the caller (it is not part of the transcript).
pub fn aggregate(items: &[(String, JudgeResult)]) -> Vec<ScoreSummary> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (method, result) in items {
        for (metric, score) in &result.scores {
            groups
                .entry((method.clone(), metric.clone()))
                .or_default()
                .push(f64::from(*score));
        }
    }
    groups
        .into_iter()
        .map(|((method, metric), values)| ScoreSummary {
            method,
            metric,
            mean: mean(&values),
            sd: sample_sd(&values),
            n: values.len(),
        })
        .collect()
}

/// Per-method topology metrics against a fixed anchor set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyReport {
    pub label: String,
    pub eff_rank: f64,
    pub shift: f64,
    pub aligned_var: f64,
    /// `None` when the centroid shift is below the configured epsilon,
    /// which makes the expansion ratio undefined.
    pub cse: Option<f64>,
    pub dir_sim: f64,
    pub anchor_label: String,
}

//! Stage-I back half: enumerate k-factor rule combinations, render the
//! hazard-generation prompts (attribute-injected, vanilla baseline, and
//! chain-of-thought baseline), and parse the two-line hazard output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{RiskRule, RobotSpec, RuleBase, SeedScenario};
use crate::grounding::AttributeMatch;
use crate::llm::BackendError;

pub const MECHANISM_PREFIX: &str = "Hazard mechanism:";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HazardParseError {
    #[error("backend response is empty")]
    EmptyResponse,
    #[error("expected exactly two non-empty lines, found {0}")]
    WrongLineCount(usize),
    #[error("mechanism line does not start with {MECHANISM_PREFIX:?}")]
    MissingMechanismPrefix,
}

#[derive(Debug, thiserror::Error)]
pub enum HazardGenError {
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
    #[error(transparent)]
    Parse(#[from] HazardParseError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Generation method for a hazard scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ours,
    Vanilla,
    Cot,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ours, Method::Vanilla, Method::Cot];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ours => "ours",
            Self::Vanilla => "vanilla",
            Self::Cot => "cot",
        }
    }

    /// Human-facing label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Ours => "Ours",
            Self::Vanilla => "Vanilla",
            Self::Cot => "CoT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "ours" => Ok(Self::Ours),
            "vanilla" => Ok(Self::Vanilla),
            "cot" => Ok(Self::Cot),
            other => Err(format!(
                "unknown method {other:?} (expected ours|vanilla|cot)"
            )),
        }
    }
}

/// A strictly ascending set of 1..=k_max rule ids for one seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorCombination {
    pub seed_id: String,
    pub rule_ids: Vec<String>,
}

/// A parsed Stage-I output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HazardScenario {
    pub id: String,
    pub seed_id: String,
    pub method: Method,
    pub rule_ids: Vec<String>,
    pub description: String,
    pub mechanism: String,
    pub backend_model: String,
    pub prompt_sha256: String,
    #[serde(skip)]
    pub raw_output: String,
}

impl HazardScenario {
    /// Text embedded for clause retrieval and topology analysis.
    pub fn embedding_text(&self) -> String {
        format!("{} {}", self.description, self.mechanism)
    }
}

/// Stable hazard id: seed, method, and (for the attribute-injected method)
/// the rule combination.
pub fn hazard_id(seed_id: &str, method: Method, rule_ids: &[String]) -> String {
    if rule_ids.is_empty() {
        format!("{seed_id}:{method}")
    } else {
        format!("{seed_id}:{method}:{}", rule_ids.join("+"))
    }
}

fn k_subsets(
    ids: &[String],
    k: usize,
    start: usize,
    current: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for i in start..ids.len() {
        current.push(ids[i].clone());
        k_subsets(ids, k, i + 1, current, out);
        current.pop();
    }
}

/// Enumerate all subsets of the distinct matched rule ids with sizes
/// 1..=min(k_max, n), ordered by (size, lexicographic rule ids).
pub fn enumerate_combinations(
    matches: &[AttributeMatch],
    seed_id: &str,
    k_max: usize,
) -> Vec<FactorCombination> {
    let mut ids: Vec<String> = Vec::new();
    for m in matches {
        if !ids.contains(&m.rule_id) {
            ids.push(m.rule_id.clone());
        }
    }
    ids.sort();

    let mut subsets = Vec::new();
    for size in 1..=k_max.min(ids.len()) {
        k_subsets(&ids, size, 0, &mut Vec::new(), &mut subsets);
    }
    subsets
        .into_iter()
        .map(|rule_ids| FactorCombination {
            seed_id: seed_id.to_string(),
            rule_ids,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

const FACTOR_LABELS: [&str; 3] = ["A", "B", "C"];

struct KVariant {
    generate_line: &'static str,
    interaction_line: &'static str,
    condition_line: &'static str,
    constraint4: &'static str,
    constraint5: &'static str,
    line1: &'static str,
}

fn k_variant(k: usize) -> KVariant {
    match k {
        1 => KVariant {
            generate_line: "Generate a scenario where a hazard occurs due to the specified risk factor.",
            interaction_line: "The hazard must be caused by the single specified risk factor.",
            condition_line: "Condition: The hazard occurs because the factor is present.",
            constraint4: "The root cause must be the effect of the single specified risk factor.",
            constraint5: "If the factor is removed, the accident must become impossible.",
            line1: "2-3 sentences describing the robot's task execution and how the factor caused the hazard.",
        },
        2 => KVariant {
            generate_line: "Generate a scenario where a hazard occurs due to the interaction of the specified risk factors.",
            interaction_line: "The hazard must be caused by the INTERACTION of TWO specific risk factors.",
            condition_line: "Condition: The hazard occurs because BOTH factors are present simultaneously.",
            constraint4: "The root cause must be the coupling effect of Factor A and Factor B.",
            constraint5: "If one factor is removed, the accident must become impossible.",
            line1: "2-3 sentences describing the robot's task execution and how the two factors combined to cause the hazard.",
        },
        _ => KVariant {
            generate_line: "Generate a scenario where a hazard occurs due to the interaction of the specified risk factors.",
            interaction_line: "The hazard must be caused by the INTERACTION of THREE specific risk factors.",
            condition_line: "Condition: The hazard occurs because all THREE factors are present simultaneously.",
            constraint4: "The root cause must be the coupling effect of Factor A, Factor B and Factor C.",
            constraint5: "If any one factor is removed, the accident must become impossible.",
            line1: "2-3 sentences describing the robot's task execution and how the three factors combined to cause the hazard.",
        },
    }
}

/// Render the attribute-injected prompt for a rule combination.
pub fn build_prompt_ours(
    seed: &SeedScenario,
    combo: &FactorCombination,
    rules: &RuleBase,
    robot_spec: &RobotSpec,
) -> Result<String, HazardGenError> {
    let factors: Vec<&RiskRule> = combo
        .rule_ids
        .iter()
        .map(|id| {
            rules
                .get(id)
                .ok_or_else(|| HazardGenError::UnknownRule(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let variant = k_variant(factors.len());

    let mut prompt = String::new();
    prompt.push_str("[SYSTEM ROLE]\n");
    prompt.push_str("You are a safety engineer identifying how SPECIFIC, REAL-WORLD risk conditions can lead to harm during home robot tasks.\n\n");
    prompt.push_str(variant.generate_line);
    prompt.push_str("\n\n");
    prompt.push_str(&robot_spec.canonical_text);
    prompt.push_str("\n\n[RISK INTERACTION]\n");
    prompt.push_str(variant.interaction_line);
    prompt.push('\n');
    prompt.push_str(variant.condition_line);
    prompt.push('\n');
    for (label, rule) in FACTOR_LABELS.iter().zip(&factors) {
        prompt.push_str(&format!(
            "\nRisk Factor {label}: {} ({})\nDefinition: \"{}\"\n",
            rule.name,
            rule.dimension.label(),
            rule.definition
        ));
    }
    prompt.push_str(&format!("\nSeed scenario: \"{}\"\n", seed.text));
    prompt.push_str("\n[CONSTRAINTS FOR SCENARIO GENERATION]\n\n");
    prompt.push_str("1.The scenario must remain strictly within the semantic boundary defined by the seed scenario.\n");
    prompt.push_str("2.Only entities explicitly mentioned in the seed or logically indispensable for the task may be used.\n");
    prompt.push_str("3.No unmentioned object, state, event, or environmental condition may be introduced under any circumstance.\n");
    prompt.push_str(&format!("4.{}\n", variant.constraint4));
    prompt.push_str(&format!("5.{}\n", variant.constraint5));
    prompt.push_str("6.Robots will not have emotions.\n");
    prompt.push_str("7.[STRICT CLOSED WORLD] ROBOT CAPABILITIES: Strictly control the robot's behavior within the defined capabilities.\n");
    prompt.push_str("8.STRICT ADHERENCE TO SPECIFICATIONS: Strictly enforce the union of all sensor coverage ranges defined in the robot capabilities.\n");
    prompt.push_str("9.[CRITICAL] MAINTAIN PHYSICAL REALISM.\n");
    prompt.push_str("10.[LOGICAL CONSISTENCY] CAUSAL VALIDITY (DETECTION != PREVENTION).\n");
    prompt.push_str("[OUTPUT FORMAT]\nEXACTLY TWO LINES:\n");
    prompt.push_str(&format!("Line 1: {}\n", variant.line1));
    prompt
        .push_str("Line 2: \"Hazard mechanism: [one sentence explaining the coupling effect].\"\n");
    Ok(prompt)
}

const BASELINE_HEAD: &str = "[SYSTEM ROLE]
You are a safety engineer identifying how real-world conditions can lead to harm during home robot tasks.

Generate a scenario where a hazard occurs due to potential risks inherent in the task or environment.

[ROBOT CAPABILITIES]
{Robot_Specifications}

[SEED SCENARIO]
\"{Seed_Scenario}\"

[CONSTRAINTS]

1.The scenario must remain strictly within the semantic boundary defined by the seed scenario.
2.Only entities explicitly mentioned in the seed or logically indispensable for the task may be used.
3.Robots will not have emotions similar to humans, such as fear or anxiety, startle.
4.No unmentioned object, state, event, or environmental condition may be introduced under any circumstance.
5.STRICT ADHERENCE TO SPECIFICATIONS: Strictly enforce the union of all sensor coverage ranges defined in the robot capabilities.
6.[STRICT CLOSED WORLD] ROBOT CAPABILITIES: Strictly control the robot's behavior within the defined capabilities.
7.[CRITICAL] MAINTAIN PHYSICAL REALISM.
8.[LOGICAL CONSISTENCY] CAUSAL VALIDITY (DETECTION != PREVENTION).
";

const BASELINE_OUTPUT: &str = "
[OUTPUT FORMAT]
Line 1: 2-3 sentences describing the robot's task execution and how the two factors combined to cause the hazard.
Line 2: \"Hazard mechanism: [one sentence explaining the coupling effect].
";

const COT_ADDON: &str = "[REASONING INSTRUCTIONS]
Before generating the final result, you must analyze the seed scenario step-by-step inside an [ANALYSIS] block:

Entity & Vulnerability Analysis (Decomposition):

Extract all key Entities (Who/What), Actions (Task), and Environmental Context.
Vulnerability Inference: Analyze inherent physical limitations or vulnerabilities.
Micro-Action Simulation (Step-by-Step Trace):

Break down the robot's task into a sequence of logical micro-actions.
Simulate the physical interaction between the robot and identified entities.
Consequence Analysis:

Identify identifies accident chains.
[OUTPUT FORMAT]
[ANALYSIS]

Decomposition: [Entities, Context, and vulnerabilities...]
Simulation: [Step-by-step trace...]
Prediction: [Logical deduction...]
[OUTPUT FORMAT]
Line 1: 2-3 sentences describing the robot's task execution and how the two factors combined to cause the hazard.
Line 2: \"Hazard mechanism: [one sentence explaining the coupling effect].
";

fn fill_baseline(template: &str, seed: &SeedScenario, robot_spec: &RobotSpec) -> String {
    template
        .replacen("{Robot_Specifications}", &robot_spec.canonical_text, 1)
        .replacen("{Seed_Scenario}", &seed.text, 1)
}

/// Render the baseline prompt: robot capabilities plus the eight-constraint
/// block, no risk injection.
pub fn build_prompt_vanilla(seed: &SeedScenario, robot_spec: &RobotSpec) -> String {
    fill_baseline(
        &format!("{BASELINE_HEAD}{BASELINE_OUTPUT}"),
        seed,
        robot_spec,
    )
}

/// Render the chain-of-thought baseline: the baseline constraints plus the
/// three-step reasoning instructions and the analysis-block output format.
pub fn build_prompt_cot(seed: &SeedScenario, robot_spec: &RobotSpec) -> String {
    fill_baseline(&format!("{BASELINE_HEAD}{COT_ADDON}"), seed, robot_spec)
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

fn split_mechanism(line: &str) -> Result<String, HazardParseError> {
    let trimmed = line.trim();
    let mechanism = trimmed
        .strip_prefix(MECHANISM_PREFIX)
        .ok_or(HazardParseError::MissingMechanismPrefix)?
        .trim();
    if mechanism.is_empty() {
        return Err(HazardParseError::MissingMechanismPrefix);
    }
    Ok(mechanism.to_string())
}

/// Parse a backend response into (description, mechanism).
///
/// Strict mode (the attribute-injected and vanilla methods) requires
/// exactly two non-empty lines. Lenient mode (always used for the
/// chain-of-thought method) discards everything through the analysis block
/// by applying the strict rules to the final two non-empty lines.
pub fn parse_hazard(raw: &str, method: Method) -> Result<(String, String), HazardParseError> {
    let lines: Vec<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(HazardParseError::EmptyResponse);
    }
    match method {
        Method::Ours | Method::Vanilla => {
            if lines.len() != 2 {
                return Err(HazardParseError::WrongLineCount(lines.len()));
            }
            Ok((lines[0].to_string(), split_mechanism(lines[1])?))
        }
        Method::Cot => {
            if lines.len() < 2 {
                return Err(HazardParseError::WrongLineCount(lines.len()));
            }
            let description = lines[lines.len() - 2].to_string();
            Ok((description, split_mechanism(lines[lines.len() - 1])?))
        }
    }
}

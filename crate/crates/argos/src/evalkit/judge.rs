//! Judge prompts and score extraction.
//!
//! Two rubrics: scenario quality (Physical Reliability / Long-tail Risk /
//! Safety Requirements, scored per scenario across three anonymized method
//! blocks) and the standalone FSR audit (Capability Compliance / Scenario
//! Risk Coverage / Logic Robustness). Method blocks are mapped
//! deterministically: A = attribute-injected, B = vanilla, C = chain of
//! thought.

use std::collections::BTreeMap;

use crate::corpus::{RobotSpec, SeedScenario};
use crate::fsrsynth::FSRecord;
use crate::hazardgen::HazardScenario;
use crate::llm::BackendError;

use super::{JudgeResult, Rubric};

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("cannot parse judge line: {0:?}")]
    JudgeParseError(String),
    #[error("score {0} outside 1..=10")]
    ScoreOutOfRange(i64),
    #[error("transcript missing metric {0}")]
    MissingMetric(String),
    #[error("method {method} block scored {got} scenarios, expected {expected}")]
    CountMismatch {
        method: char,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

const SCENARIO_JUDGE_TEMPLATE: &str = r#"You are a robotic safety engineer.

[REFERENCE: ROBOT CAPABILITIES & CONSTRAINTS]
{ROBOT_HARDWARE_SPECIFICATION_DOC}
(All evaluations must be grounded in the specific hardware and functional limits of the robot platform.)

I will provide three sets of scenarios (Method A, Method B, and Method C), all generated from the same seed scenario.

Please evaluate **each scenario independently**, and assign a quantitative score (1-10 points) based on the strict abstract metrics defined below.

**STEP 1: Global Comparative Thinking**
Before any scoring, perform a high-level comparative analysis of Method A, B, and C. Address the following:
- **Methodological Divergence**: How does each method approach the "expansion" of the seed? (e.g., semantic changes vs. physical perturbations).
- **Constraint Adherence**: Which method stays truest to the seed's environment, and which one tends to "hallucinate" external factors?
- **Risk Profile**: Compare the "sophistication" of the risks discovered. Are they identifying simple failures or complex, multi-factor safety boundary violations?
- **FSR Derivation Potential**: Which method provides the most complete causal chain (Trigger -> System Failure -> Hazard) to support the derivation of Functional Safety Requirements?

**STEP 2: Individual Scenario Scoring**
Evaluate each scenario based on the metrics below, informed by your global analysis.


### Scoring Metrics (1-10 points)

**1. Physical Reliability (Higher is Better)**
*   **Definition**: Whether the scenario adheres to real-world physics AND strictly maintains the "closed-world" constraints of the seed scenario.
*   **High Score (8-10)**: The scenario operates **strictly** using only the entities, agents, and environmental features explicitly defined or inherently implied in the seed.
*   **Medium Score (4-7)**: Physical interactions are valid, but the scenario makes **minor assumptions** about environmental states without introducing new active agents.
*   **Low Score (1-3)**: **CRITICAL FAILURE**. The scenario introduces **new active entities, obstacles, or external forces** not present in the seed.

**2. Long-tail Risk Discovery Capability (Higher is Better)**
*   **Definition**: The degree to which the scenario uncovers statistically rare, concealed, or system-boundary hazards *within the bounds of the seed context*.
*   **High Score (8-10)**: Identifies risks characterized by **multi-factor coupling**, **sensor/actuator physical limits**, or **semantic ambiguity**.
*   **Medium Score (4-7)**: Risks are valid but represent standard operational hazards or "Fat-tail" events.
*   **Low Score (1-3)**: Describes routine operations with no significant hazard; risks are trivial.

**3. Functional Safety Requirement Derivation Capability (Higher is Better)**

*   **Definition**: The degree to which the scenario clarifies the failure mechanism (the "Why" and "How"), enabling the systematic synthesis of Functional Safety Requirements (FSR).
*   **High Score (8-10)**: The scenario explicitly identifies the triggering condition and the system performance limit. The causal chain (Trigger -> System Behavior -> Hazard) is logically complete, making the derivation of quantitative, verifiable safety requirements straightforward.
*   **Medium Score (4-7)**: The scenario identifies a credible hazard and its qualitative root cause. It supports the definition of high-level Safety Goals (SG), but the logic lacks the specific parameters needed to synthesize precise FSRs without further decomposition.
*   **Low Score (1-3)**: CRITICAL FAILURE. The scenario describes a "bad outcome" without explaining the underlying failure logic or triggering events. It offers no actionable path for safety requirement engineering.
**Please reply in the following format**:

[Global Comparative Analysis]
(Provide your deep-dive comparison here, identifying the "DNA" of each method's approach.)


[Method A Scenario Evaluation]
Scenario 1: [Brief justification]
Physical Reliability: X pts, Long-tail Risk: X pts, Safety Requirements: X pts
...

[Method B Scenario Evaluation]
Scenario 1: [Brief justification]
Physical Reliability: X pts, Long-tail Risk: X pts, Safety Requirements: X pts
...

[Method C Scenario Evaluation]
Scenario 1: [Brief justification]
Physical Reliability: X pts, Long-tail Risk: X pts, Safety Requirements: X pts
...

[Conclusion]
A brief conclusion comparing the three methods.

**Seed Scenario**:
{seed_scenario}

**Method A Scenarios**:
{method_a_scenarios}

**Method B Scenarios**:
{method_b_scenarios}

**Method C Scenarios**:
{method_c_scenarios}

Please begin your evaluation:"#;

fn render_scenarios(scenarios: &[&HazardScenario]) -> String {
    scenarios
        .iter()
        .enumerate()
        .map(|(i, h)| {
            format!(
                "Scenario {}: {} Hazard mechanism: {}",
                i + 1,
                h.description,
                h.mechanism
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render the comparative scenario-quality prompt for one seed. The three
/// lists are presented as Method A/B/C in the order given.
pub fn build_scenario_judge_prompt(
    seed: &SeedScenario,
    method_a: &[&HazardScenario],
    method_b: &[&HazardScenario],
    method_c: &[&HazardScenario],
    robot_spec: &RobotSpec,
) -> String {
    SCENARIO_JUDGE_TEMPLATE
        .replacen(
            "{ROBOT_HARDWARE_SPECIFICATION_DOC}",
            &robot_spec.canonical_text,
            1,
        )
        .replacen("{seed_scenario}", &seed.text, 1)
        .replacen("{method_a_scenarios}", &render_scenarios(method_a), 1)
        .replacen("{method_b_scenarios}", &render_scenarios(method_b), 1)
        .replacen("{method_c_scenarios}", &render_scenarios(method_c), 1)
}

const FSR_AUDIT_TEMPLATE: &str = r#"You are a Principal Functional Safety Auditor and Robotics Systems Architect. Your task is to perform a rigorous, standalone evaluation of a set of Functional Safety Requirements (FSRs) generated for a specific robotic scenario.

[IMPORTANT INSTRUCTION]
Ignore the name/label of the method (e.g., "Method A and FSR ID"). Focus exclusively on the technical quality, completeness, and hardware-grounding of the FSRs provided.

[INPUT DATA]
Seed Scenario: {seed_scenario}

Target FSRs to Evaluate:
{fsr_content}

[STAGE 1: AUDIT FOUNDATIONS - THE LAWS OF PHYSICS AND HARDWARE]
[ROBOT FUNCTIONAL SPECIFICATIONS - EXTERNAL REFERENCE]
{ROBOT_HARDWARE_SPECIFICATION_DOC}
(This document defines the absolute physical constraints, including Perception Systems, Actuation Systems, Interaction Systems, and Control/Safety Behaviors. Any FSR violating these limits is considered a "Hallucination" and must be severely penalized.)

[STAGE 2: SCORING RUBRICS (THE AUDIT STANDARD)]

Metric 1: Capability Compliance & Grounding (CC)
*   9-10 (Hardware-Optimized): The method perfectly leverages specific hardware capabilities (e.g., specific control modes, memory engines, sensor fusion) to solve safety problems. It explicitly accounts for sensor limits and blind spots defined in the spec.
*   7-8 (Advanced Adaptation): The method aligns well with hardware specs and accounts for most sensor limitations, though it may not fully exploit advanced features like specific memory engines or complex fusion algorithms.
*   5-6 (Generic): The method uses generic logic without leveraging the robot's specific advanced capabilities. It does not violate limits but does not optimize for them.
*   3-4 (Suboptimal Alignment): The method has loose integration with hardware specs. It fails to account for obvious sensor limits or blind spots, potentially leading to unstable performance in specific hardware environments.
*   1-2 (Hallucination/Violation): The method demands capabilities the robot does not have. Specifically, it requires detection ranges or sensor modalities that contradict the [ROBOT FUNCTIONAL SPECIFICATIONS]. This is an automatic failure.

Metric 2: Scenario Risk Coverage (PRC)
*   9-10 (Exhaustive Coverage): The FSRs identify and mitigate all primary hazards, secondary consequences (e.g., inertia, load stability), and **long-tail/edge-case risks** specific to this scenario (e.g., rare environmental interferences, complex human behaviors, or multi-system failures).
*   7-8 (Advanced Physics & Risk): The method goes beyond simple collision avoidance and addresses dynamic effects and most secondary risks, but coverage of complex long-tail interaction dynamics is incomplete.
*   5-6 (First-Order/Basic): The method covers direct risks only. It addresses primary collisions and slips but ignores the secondary effects of the robot's reaction or scenario-specific nuances.
*   3-4 (Basic Physics): The method has a narrow understanding of physical risks, identifying only the most obvious contact risks while neglecting friction, slippage, or basic kinematic constraints.
*   1-2 (Superficial): The method relies solely on semantic rules and ignores physical dynamics and scenario-specific risks entirely.

Metric 3: Logic Robustness & Continuity (LRC)
*   9-10 (Closed-Loop System): The method defines clear Entry AND Exit conditions for every safety state. It utilizes recovery logic (e.g., Trajectory Buffer) to exit failure modes instead of just freezing. It uses memory/persistence to handle perception gaps.
*   7-8 (Robust Closed-Loop): The method defines clear entry/exit conditions and includes basic recovery logic. However, it may be slightly lacking in handling complex perception gaps or long-term memory persistence.
*   5-6 (Open-Loop): The method defines when to stop but provides vague or missing conditions for when to resume operation.
*   3-4 (Fragmented Logic): The method has basic trigger logic, but state transitions are inconsistent and lack clear recovery paths, likely leading to frequent freezing or requiring manual intervention.
*   1-2 (Deadlock/Dangerous): The method creates logical deadlocks (robot freezes permanently) or prescribes dangerous actions that violate basic safety principles.

[STAGE 3: THE AUDIT PROCESS (THINK STEP-BY-STEP)]

**STEP 1: INDEPENDENT HARDWARE REALITY CHECK**
*   Cross-reference every FSR against the [ROBOT FUNCTIONAL SPECIFICATIONS].
*   Identify any requirement that assumes a sensor range, coverage, or capability that is explicitly listed as a limitation or not listed at all.

**STEP 2: SCENARIO-SPECIFIC HAZARD ENUMERATION**
*   Analyze the "Seed Scenario" deeply. List all potential risks:
    1. Primary Risks (e.g., direct collision).
    2. Secondary Risks (e.g., inertia after emergency stop, object dropping).
    3. **Long-tail Risks** (e.g., sensor blinding by sunlight, floor slip during heavy load, unexpected human interference).
*   Check if the provided FSRs cover these specific points.

**STEP 3: LOGICAL STATE MACHINE & RECOVERY ANALYSIS**
*   Analyze the "Trigger -> Action -> Recovery" loop.
*   Does the method utilize the **Trajectory Buffer** or **Object Persistence Engine** to handle blind spots or recovery?

**STEP 4: FINAL SCORING**
*   Assign scores based on the evidence. Be extremely critical of generic requirements that ignore the robot's advanced hardware.

[OUTPUT FORMAT]

**1. Detailed Audit Analysis (Chain of Thought)**
*   **Hardware Alignment Analysis**: [Detailed reasoning on hardware alignment]
*   **Scenario Risk & Long-tail Coverage Analysis**: [Detailed reasoning on how well the FSRs cover primary, secondary, and long-tail risks of the specific scenario]
*   **Logic Robustness & Recovery Analysis**: [Detailed reasoning on state transitions and recovery logic]

**2. Capability Violation Report**
*   Identify and list any specific FSR IDs that contradict the [ROBOT FUNCTIONAL SPECIFICATIONS]. If none, state "None".

**3. Final Scores**

 **Capability Compliance (CC)** | X/10 | [Brief justification]
 **Scenario Risk Coverage (PRC)** | X/10 | [Brief justification]
|**Logic Robustness (LRC)** | X/10 | [Brief justification]

**4. Final Verdict**
*   [Summary of the FSR quality ]"#;

/// Render the standalone FSR audit prompt for one seed's requirement set.
pub fn build_fsr_audit_prompt(
    seed: &SeedScenario,
    records: &[&FSRecord],
    robot_spec: &RobotSpec,
) -> String {
    let content = records
        .iter()
        .map(|r| r.to_block())
        .collect::<Vec<_>>()
        .join("\n\n");
    FSR_AUDIT_TEMPLATE
        .replacen("{seed_scenario}", &seed.text, 1)
        .replacen("{fsr_content}", &content, 1)
        .replacen(
            "{ROBOT_HARDWARE_SPECIFICATION_DOC}",
            &robot_spec.canonical_text,
            1,
        )
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

fn check_range(value: i64) -> Result<u8, JudgeError> {
    if !(1..=10).contains(&value) {
        return Err(JudgeError::ScoreOutOfRange(value));
    }
    Ok(value as u8)
}

/// Parse `Physical Reliability: X pts, Long-tail Risk: X pts, Safety
/// Requirements: X pts`.
fn parse_score_triple(line: &str) -> Result<(u8, u8, u8), JudgeError> {
    let fail = || JudgeError::JudgeParseError(line.to_string());
    let mut rest = line.trim();
    let mut values = [0i64; 3];
    for (i, label) in [
        "Physical Reliability:",
        "Long-tail Risk:",
        "Safety Requirements:",
    ]
    .iter()
    .enumerate()
    {
        rest = rest.strip_prefix(label).ok_or_else(fail)?.trim_start();
        let digits: String = rest
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '-')
            .collect();
        if digits.is_empty() {
            return Err(fail());
        }
        values[i] = digits.parse().map_err(|_| fail())?;
        rest = rest[digits.len()..].trim_start();
        rest = rest.strip_prefix("pts").ok_or_else(fail)?.trim_start();
        if i < 2 {
            rest = rest.strip_prefix(',').ok_or_else(fail)?.trim_start();
        }
    }
    Ok((
        check_range(values[0])?,
        check_range(values[1])?,
        check_range(values[2])?,
    ))
}

/// Parse the scenario-quality transcript. `ids_*` map block ordinals back
/// to hazard ids (the prompt listed the scenarios in this order); every
/// block must score exactly its listed scenarios.
pub fn parse_scenario_judgment(
    raw: &str,
    ids_a: &[String],
    ids_b: &[String],
    ids_c: &[String],
) -> Result<Vec<JudgeResult>, JudgeError> {
    let blocks: [(char, &[String]); 3] = [('A', ids_a), ('B', ids_b), ('C', ids_c)];
    let mut results = Vec::new();
    let mut current: Option<usize> = None;
    let mut counts = [0usize; 3];
    let mut last_justification = String::new();

    for line in raw.lines() {
        let line = line.trim();
        if let Some(index) = blocks
            .iter()
            .position(|(letter, _)| line == format!("[Method {letter} Scenario Evaluation]"))
        {
            current = Some(index);
            continue;
        }
        if line == "[Conclusion]" {
            current = None;
            continue;
        }
        let Some(block) = current else { continue };
        if line.starts_with("Scenario ") {
            last_justification = line
                .split_once(':')
                .map(|(_, j)| j.trim().to_string())
                .unwrap_or_default();
            continue;
        }
        if line.starts_with("Physical Reliability") {
            let (pr, lr, fsr) = parse_score_triple(line)?;
            let (letter, ids) = blocks[block];
            let ordinal = counts[block];
            counts[block] += 1;
            let target_id = ids.get(ordinal).ok_or(JudgeError::CountMismatch {
                method: letter,
                expected: ids.len(),
                got: ordinal + 1,
            })?;
            let mut scores = BTreeMap::new();
            scores.insert("PR".to_string(), pr);
            scores.insert("LR".to_string(), lr);
            scores.insert("FSR".to_string(), fsr);
            results.push(JudgeResult {
                target_id: target_id.clone(),
                rubric: Rubric::ScenarioQuality,
                scores,
                justification: std::mem::take(&mut last_justification),
                raw_transcript: raw.to_string(),
            });
        }
    }

    for (block, (letter, ids)) in blocks.iter().enumerate() {
        if counts[block] != ids.len() {
            return Err(JudgeError::CountMismatch {
                method: *letter,
                expected: ids.len(),
                got: counts[block],
            });
        }
    }
    Ok(results)
}

/// Parse the audit transcript's Final Scores rows (`<METRIC> | <int>/10`).
pub fn parse_fsr_audit(raw: &str, target_id: &str) -> Result<JudgeResult, JudgeError> {
    let mut scores = BTreeMap::new();
    let mut justifications = Vec::new();
    for line in raw.lines() {
        for (marker, key) in [("(CC)", "CC"), ("(PRC)", "PRC"), ("(LRC)", "LRC")] {
            let Some(marker_at) = line.find(marker) else {
                continue;
            };
            if scores.contains_key(key) {
                continue;
            }
            // The separator bar after the metric name, not a leading one.
            let Some(bar) = line[marker_at..].find('|') else {
                continue;
            };
            let after = line[marker_at + bar + 1..].trim_start();
            let digits: String = after
                .chars()
                .take_while(|c| c.is_ascii_digit() || *c == '-')
                .collect();
            let Some(rest) = after[digits.len()..].strip_prefix("/10") else {
                return Err(JudgeError::JudgeParseError(line.to_string()));
            };
            let value: i64 = digits
                .parse()
                .map_err(|_| JudgeError::JudgeParseError(line.to_string()))?;
            scores.insert(key.to_string(), check_range(value)?);
            if let Some(text) = rest.trim_start().strip_prefix('|') {
                let text = text.trim();
                if !text.is_empty() {
                    justifications.push(format!("{key}: {text}"));
                }
            }
        }
    }
    for key in Rubric::FsrAudit.metrics() {
        if !scores.contains_key(*key) {
            return Err(JudgeError::MissingMetric((*key).to_string()));
        }
    }
    Ok(JudgeResult {
        target_id: target_id.to_string(),
        rubric: Rubric::FsrAudit,
        scores,
        justification: justifications.join("; "),
        raw_transcript: raw.to_string(),
    })
}

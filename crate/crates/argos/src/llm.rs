//! Chat-completion backends behind a common contract.
//!
//! `MockBackend` is a pure function of the prompt text: it classifies the
//! prompt by sentinel substrings and emits a well-formed response of that
//! kind whose variable content derives from a 64-bit hash of the prompt.
//! Every response parser in the pipeline accepts every mock transcript of
//! its kind, so the whole pipeline closes deterministically offline.

use serde::Deserialize;

use crate::net::{classify_response, with_retry, RetryPolicy};
use crate::util::{fnv1a64, HashStream};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("cannot generate from an empty prompt")]
    EmptyPrompt,
    #[error("backend error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Http {
        status: Option<u16>,
        message: String,
    },
    #[error("unusable backend response: {0}")]
    BadResponse(String),
}

/// Decoding parameters passed to the backend.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
            seed: None,
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError>;
}

/// Entry point used by the pipeline: rejects empty prompts, then delegates.
pub fn generate(
    backend: &dyn LlmBackend,
    prompt: &str,
    params: &GenParams,
) -> Result<String, BackendError> {
    if prompt.trim().is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    backend.complete(prompt, params)
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// The response families the mock backend can emit, keyed by prompt
/// sentinels. Checked in order; the first match wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    FsrAudit,
    ScenarioJudge,
    FsrSynthesis,
    HazardOurs,
    HazardCot,
    HazardVanilla,
}

pub fn classify_prompt(prompt: &str) -> MockKind {
    if prompt.contains("Functional Safety Auditor") {
        MockKind::FsrAudit
    } else if prompt.contains("robotic safety engineer") {
        MockKind::ScenarioJudge
    } else if prompt.contains("counterfactual") {
        MockKind::FsrSynthesis
    } else if prompt.contains("Risk Factor A") {
        MockKind::HazardOurs
    } else if prompt.contains("[REASONING INSTRUCTIONS]") {
        MockKind::HazardCot
    } else {
        MockKind::HazardVanilla
    }
}

pub struct MockBackend {
    model: String,
}

impl MockBackend {
    pub fn new(model: &str) -> Self {
        Self {
            model: model.to_string(),
        }
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str, _params: &GenParams) -> Result<String, BackendError> {
        let mut stream = HashStream::new(fnv1a64(prompt.as_bytes()));
        Ok(match classify_prompt(prompt) {
            MockKind::HazardOurs | MockKind::HazardVanilla => mock_hazard(&mut stream),
            MockKind::HazardCot => mock_hazard_cot(&mut stream),
            MockKind::FsrSynthesis => mock_fsr(&mut stream, &offered_clause_ids(prompt)),
            MockKind::FsrAudit => mock_audit(&mut stream),
            MockKind::ScenarioJudge => mock_scenario_judgment(&mut stream, prompt),
        })
    }
}

const TASKS: &[&str] = &[
    "carries a tray of hot soup toward the dining table",
    "guides the resident along the narrow hallway",
    "retrieves a dropped utensil from the kitchen floor",
    "escorts the walker user through the doorway",
    "positions a filled cup at the edge of the counter",
    "lifts the laundry basket over the raised threshold",
];

const COMPLICATIONS: &[&str] = &[
    "A sudden lateral dash crosses the planned path inside the close-range blind zone",
    "A low-friction film cuts traction exactly where the braking window closes",
    "An occluded gap hides the approach until the reflex loop is already committed",
    "The handover target shifts faster than the cognitive loop can refresh",
    "A low obstacle sits below the vantage of the long-range sensors",
    "The single-file passage leaves no lateral margin for evasive motion",
];

const OUTCOMES: &[&str] = &[
    "The evasive command arrives only after the contact point is reached",
    "The carried load's inertia defeats the compliant grip during the abrupt stop",
    "The platform slides past the commanded stop line",
    "The retraction path is blocked before the recovery logic can engage",
];

const MECHANISMS: &[&str] = &[
    "the detection gap and the actuation limit overlap, so mitigation begins only after contact is unavoidable",
    "the abrupt deceleration converts carried momentum into an uncontrolled spill toward the person",
    "traction loss extends the stopping distance beyond the protective separation distance",
    "the reflex stop satisfies the collision rule while violating the load-stability envelope",
];

fn mock_hazard(stream: &mut HashStream) -> String {
    format!(
        "The robot {}. {}. {}.\nHazard mechanism: {}.",
        stream.pick(TASKS),
        stream.pick(COMPLICATIONS),
        stream.pick(OUTCOMES),
        stream.pick(MECHANISMS),
    )
}

fn mock_hazard_cot(stream: &mut HashStream) -> String {
    let analysis = format!(
        "[ANALYSIS]\n\nDecomposition: The task involves the robot, the person named in the seed, and the stated workspace.\nSimulation: The robot {}; midway, {}.\nPrediction: {}.\n",
        stream.pick(TASKS),
        stream.pick(COMPLICATIONS).to_lowercase(),
        stream.pick(OUTCOMES),
    );
    format!("{analysis}\n{}", mock_hazard(stream))
}

/// Clause ids offered by a synthesis prompt, recognized from the
/// `- [id] ...` listing the prompt template uses.
fn offered_clause_ids(prompt: &str) -> Vec<String> {
    let mut ids = Vec::new();
    for line in prompt.lines() {
        if let Some(rest) = line.trim_start().strip_prefix("- [") {
            if let Some(end) = rest.find(']') {
                ids.push(rest[..end].to_string());
            }
        }
    }
    ids
}

const FSR_SYSTEMS: &[&str] = &[
    "Mobility System",
    "Manipulation Arm",
    "Perception Stack",
    "Gripper",
];
const FSR_ACTIONS: &[&str] = &[
    "limit maximum deceleration to the configured safe bound",
    "reduce approach speed and widen the protective separation distance",
    "cap end-effector contact force at the configured ceiling",
    "hold position and re-acquire the target before resuming motion",
];
const FSR_TRIGGERS: &[&str] = &[
    "a person is detected within the close-range sensing envelope while a load is carried",
    "traction confidence drops below the nominal band during transport",
    "the tracked target leaves the field of view for more than one cognitive frame",
    "measured contact force exceeds the chassis activation threshold",
];
const FSR_EXITS: &[&str] = &[
    "the protective separation distance is restored for two consecutive frames",
    "traction confidence returns to the nominal band and the path is clear",
    "the target is re-acquired and its velocity stays below the caution band",
    "contact force returns below threshold and the retraction completes",
];

fn mock_fsr(stream: &mut HashStream, offered: &[String]) -> String {
    let blocks = 1 + (stream.next_u64() % 2) as usize;
    let mut out = String::new();
    for index in 0..blocks {
        if index > 0 {
            out.push_str("\n\n");
        }
        let cites: Vec<String> = if offered.is_empty() {
            Vec::new()
        } else {
            let take = (1 + (stream.next_u64() as usize % offered.len().min(2))).min(offered.len());
            offered
                .iter()
                .skip(index % offered.len())
                .take(take)
                .cloned()
                .collect()
        };
        out.push_str(&format!(
            "FSR-ID: FSR-{:02}\nTITLE: Constrained {} response\nREQUIREMENT: When {}, the {} shall {}, prioritizing controlled motion over an instantaneous stop.\nTRIGGER: {}\nEXIT: {}\nCITES: {}",
            index + 1,
            stream.pick(&["approach", "handover", "transit", "recovery"]),
            stream.pick(FSR_TRIGGERS),
            stream.pick(FSR_SYSTEMS),
            stream.pick(FSR_ACTIONS),
            stream.pick(FSR_TRIGGERS),
            stream.pick(FSR_EXITS),
            cites.join(", "),
        ));
    }
    out
}

fn mock_audit(stream: &mut HashStream) -> String {
    let cc = stream.in_range(5, 10);
    let prc = stream.in_range(4, 10);
    let lrc = stream.in_range(4, 10);
    format!(
        "**1. Detailed Audit Analysis (Chain of Thought)**\n\
         *   **Hardware Alignment Analysis**: The requirements reference sensing ranges and force limits that exist in the platform profile.\n\
         *   **Scenario Risk & Long-tail Coverage Analysis**: Primary contact risks are covered; secondary load-stability effects are partially addressed.\n\
         *   **Logic Robustness & Recovery Analysis**: Entry conditions are explicit and most states define a recovery path.\n\n\
         **2. Capability Violation Report**\n\
         *   None\n\n\
         **3. Final Scores**\n\n \
         **Capability Compliance (CC)** | {cc}/10 | Grounded in the stated platform limits.\n \
         **Scenario Risk Coverage (PRC)** | {prc}/10 | Covers the dominant hazards with partial edge-case coverage.\n\
         |**Logic Robustness (LRC)** | {lrc}/10 | Entry and exit conditions are mostly closed.\n\n\
         **4. Final Verdict**\n\
         *   The requirement set is actionable with minor coverage gaps."
    )
}

/// Count `Scenario N:` lines inside one method block of the judge prompt.
fn count_block_scenarios(prompt: &str, begin: &str, ends: &[&str]) -> usize {
    let Some(start) = prompt.find(begin) else {
        return 0;
    };
    let tail = &prompt[start + begin.len()..];
    let end = ends
        .iter()
        .filter_map(|marker| tail.find(marker))
        .min()
        .unwrap_or(tail.len());
    tail[..end]
        .lines()
        .filter(|line| line.trim_start().starts_with("Scenario "))
        .count()
}

fn mock_scenario_judgment(stream: &mut HashStream, prompt: &str) -> String {
    let a = count_block_scenarios(
        prompt,
        "**Method A Scenarios**",
        &["**Method B Scenarios**"],
    );
    let b = count_block_scenarios(
        prompt,
        "**Method B Scenarios**",
        &["**Method C Scenarios**"],
    );
    let c = count_block_scenarios(
        prompt,
        "**Method C Scenarios**",
        &["Please begin your evaluation"],
    );

    let mut out = String::from(
        "[Global Comparative Analysis]\nMethod A couples explicit physical attributes, Method B stays close to the seed wording, and Method C narrates stepwise traces with recurring failure themes.\n",
    );
    for (label, count, lo) in [("A", a, 6), ("B", b, 4), ("C", c, 4)] {
        out.push_str(&format!("\n[Method {label} Scenario Evaluation]\n"));
        for index in 1..=count {
            let pr = stream.in_range(lo, 10);
            let lr = stream.in_range(lo.saturating_sub(1).max(1), 9);
            let fsr = stream.in_range(lo.saturating_sub(1).max(1), 10);
            out.push_str(&format!(
                "Scenario {index}: The causal chain is stated and stays within the seed boundary.\nPhysical Reliability: {pr} pts, Long-tail Risk: {lr} pts, Safety Requirements: {fsr} pts\n"
            ));
        }
    }
    out.push_str("\n[Conclusion]\nMethod A exposes coupled limits the baselines miss; Method C repeats near-duplicate failure modes.\n");
    out
}

// ---------------------------------------------------------------------------
// Remote backend (chat-completions shape)
// ---------------------------------------------------------------------------

pub struct RemoteBackend {
    endpoint: String,
    model: String,
    token: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, model: &str, token: Option<String>, retry: RetryPolicy) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token,
            retry,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl LlmBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        let outcome = with_retry(&self.retry, || {
            let mut request = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            classify_response(request.send())
        });
        let text = outcome.map_err(|(status, message)| BackendError::Http { status, message })?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponse(format!("unparseable response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::BadResponse("response contained no choices".into()))
    }
}

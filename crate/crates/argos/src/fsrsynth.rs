//! Stage II: retrieve relevant regulatory clauses for a hazard, build the
//! constraint context together with the robot specification, synthesize
//! functional safety requirements, and parse them into structured records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{RegClause, RobotSpec};
use crate::embedding::{cosine, EmbedError, Embedder};
use crate::hazardgen::{HazardScenario, Method};
use crate::llm::{self, BackendError, GenParams, LlmBackend};
use crate::util::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum FsrError {
    #[error("no well-formed requirement block in backend response: {0:?}")]
    FsrParseError(String),
    #[error("similarity threshold {0} outside (-1, 1]")]
    InvalidThreshold(f64),
    #[error("regulatory clause base is empty")]
    EmptyClauseBase,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Ablation arm: which inputs the synthesis stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Attribute-injected hazards, clause retrieval on.
    Full,
    /// Attribute-injected hazards, clause retrieval off.
    NoIso,
    /// Baseline hazards, clause retrieval on.
    IsoOnly,
    /// Baseline hazards, clause retrieval off.
    Vanilla,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Full, Arm::NoIso, Arm::IsoOnly, Arm::Vanilla];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoIso => "no-iso",
            Self::IsoOnly => "iso-only",
            Self::Vanilla => "vanilla",
        }
    }

    /// Row label used in the ablation report.
    pub fn label(self) -> &'static str {
        match self {
            Self::Full => "Full",
            Self::NoIso => "w/o ISO",
            Self::IsoOnly => "ISO-Only",
            Self::Vanilla => "Vanilla",
        }
    }

    /// Which Stage-I method supplies the hazards for this arm.
    pub fn hazard_method(self) -> Method {
        match self {
            Self::Full | Self::NoIso => Method::Ours,
            Self::IsoOnly | Self::Vanilla => Method::Vanilla,
        }
    }

    /// Whether regulatory retrieval runs for this arm.
    pub fn retrieval_enabled(self) -> bool {
        matches!(self, Self::Full | Self::IsoOnly)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "no-iso" => Ok(Self::NoIso),
            "iso-only" => Ok(Self::IsoOnly),
            "vanilla" => Ok(Self::Vanilla),
            other => Err(format!(
                "unknown arm {other:?} (expected full|no-iso|iso-only|vanilla)"
            )),
        }
    }
}

/// Retrieved clauses plus the robot specification reference, conditioning
/// one hazard's synthesis.
#[derive(Debug, Clone)]
pub struct ConstraintContext {
    pub hazard_id: String,
    pub clauses: Vec<(RegClause, f64)>,
    pub robot_spec_ref: String,
}

impl ConstraintContext {
    pub fn empty(hazard_id: &str) -> Self {
        Self {
            hazard_id: hazard_id.to_string(),
            clauses: Vec::new(),
            robot_spec_ref: "robot-spec".into(),
        }
    }

    pub fn offered_ids(&self) -> Vec<&str> {
        self.clauses
            .iter()
            .map(|(clause, _)| clause.id.as_str())
            .collect()
    }
}

/// A parsed functional safety requirement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FSRecord {
    pub id: String,
    pub hazard_id: String,
    pub title: String,
    pub requirement: String,
    pub trigger: String,
    pub exit: String,
    pub cited_clause_ids: Vec<String>,
    pub prompt_sha256: String,
    #[serde(skip)]
    pub raw_output: String,
}

impl FSRecord {
    /// Render the record in the labeled-field block format (also the shape
    /// fed to the audit prompt).
    pub fn to_block(&self) -> String {
        format!(
            "FSR-ID: {}\nTITLE: {}\nREQUIREMENT: {}\nTRIGGER: {}\nEXIT: {}\nCITES: {}",
            self.id,
            self.title,
            self.requirement,
            self.trigger,
            self.exit,
            self.cited_clause_ids.join(", ")
        )
    }
}

/// Retrieve every clause whose text embeds above `tau_reg` cosine
/// similarity with the hazard (description plus mechanism), sorted by
/// descending similarity then clause id.
pub fn retrieve_clauses(
    hazard: &HazardScenario,
    kb: &[RegClause],
    embedder: &Embedder,
    tau_reg: f64,
) -> Result<Vec<(RegClause, f64)>, FsrError> {
    if !(tau_reg > -1.0 && tau_reg <= 1.0) {
        return Err(FsrError::InvalidThreshold(tau_reg));
    }
    if kb.is_empty() {
        return Err(FsrError::EmptyClauseBase);
    }
    let hazard_vec = embedder.embed(&hazard.embedding_text())?;
    let clause_texts: Vec<String> = kb.iter().map(|c| c.text.clone()).collect();
    let clause_vecs = embedder.embed_batch(&clause_texts)?;
    let mut hits: Vec<(RegClause, f64)> = Vec::new();
    for (clause, vec) in kb.iter().zip(&clause_vecs) {
        let similarity = cosine(&hazard_vec, vec)?;
        if similarity > tau_reg {
            hits.push((clause.clone(), similarity));
        }
    }
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("similarities are finite")
            .then_with(|| a.0.id.cmp(&b.0.id))
    });
    Ok(hits)
}

pub const NO_CLAUSES_NOTICE: &str = "No regulatory clauses retrieved";

/// Render the synthesis prompt: hazard, retrieved clauses, hardware
/// specification, a counterfactual feasibility instruction, and the
/// labeled-field output contract.
pub fn build_synthesis_prompt(
    hazard: &HazardScenario,
    context: &ConstraintContext,
    robot_spec: &RobotSpec,
) -> String {
    let mut prompt = String::new();
    prompt.push_str("[SYSTEM ROLE]\n");
    prompt.push_str("You are a functional safety engineer deriving testable Functional Safety Requirements (FSRs) for a home robot.\n\n");
    prompt.push_str("[HAZARD SCENARIO]\n");
    prompt.push_str(&format!("Description: {}\n", hazard.description));
    prompt.push_str(&format!("Hazard mechanism: {}\n", hazard.mechanism));
    prompt.push_str("\n[RELEVANT REGULATORY CLAUSES]\n");
    if context.clauses.is_empty() {
        prompt.push_str(NO_CLAUSES_NOTICE);
        prompt.push('\n');
    } else {
        for (clause, _) in &context.clauses {
            prompt.push_str(&format!(
                "- [{}] ({}) {}\n",
                clause.id, clause.standard, clause.text
            ));
        }
    }
    prompt.push_str("\n[ROBOT HARDWARE SPECIFICATION]\n");
    prompt.push_str(&robot_spec.canonical_text);
    prompt.push_str("\n\n[SYNTHESIS INSTRUCTIONS]\n");
    prompt.push_str("1. Derive one or more FSRs that mitigate the hazard mechanism above.\n");
    prompt.push_str("2. Perform a counterfactual feasibility check: for each candidate mitigation, verify that a standard response (e.g. an emergency stop) does not violate the physical limits in the hardware specification; if it would, constrain the requirement to the feasible actuation space instead.\n");
    prompt.push_str("3. Ground every requirement in the hardware specification; never assume capabilities that are not listed.\n");
    prompt.push_str("4. Each requirement must be a normative \"shall\" statement with explicit entry and exit conditions.\n");
    prompt
        .push_str("5. Cite only clause ids from the list above; cite none if the list is empty.\n");
    prompt.push_str("\n[OUTPUT FORMAT]\n");
    prompt.push_str("One block per FSR, blocks separated by a blank line, each block exactly these labeled lines:\n");
    prompt.push_str("FSR-ID: <identifier>\nTITLE: <one line>\nREQUIREMENT: <one normative \"shall\" statement>\nTRIGGER: <entry condition>\nEXIT: <recovery/exit condition>\nCITES: <comma-separated clause ids, possibly empty>\n");
    prompt
}

#[derive(Debug, Default)]
struct RawBlock {
    title: Option<String>,
    requirement: Option<String>,
    trigger: Option<String>,
    exit: Option<String>,
    cites: Vec<String>,
    any_field: bool,
}

fn contains_shall(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|token| token.eq_ignore_ascii_case("shall"))
}

fn parse_blocks(raw: &str) -> Vec<RawBlock> {
    let mut blocks = Vec::new();
    let mut current = RawBlock::default();
    for line in raw.lines().chain(std::iter::once("")) {
        let line = line.trim();
        if line.is_empty() {
            if current.any_field {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        current.any_field = true;
        match key.trim().to_uppercase().as_str() {
            "TITLE" => current.title = Some(value.to_string()),
            "REQUIREMENT" => current.requirement = Some(value.to_string()),
            "TRIGGER" => current.trigger = Some(value.to_string()),
            "EXIT" => current.exit = Some(value.to_string()),
            "CITES" => {
                current.cites = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            // FSR-ID and anything else: provenance only, ids are assigned
            // by the pipeline.
            _ => {}
        }
    }
    blocks
}

/// Parse a synthesis response into records. Malformed blocks (missing a
/// required field, or a requirement without the token "shall") are
/// skipped; citations outside the offered clause set are dropped with a
/// warning. Zero well-formed blocks is an error.
pub fn parse_fsr(
    raw: &str,
    hazard_id: &str,
    offered: &[&str],
    prompt_sha256: &str,
) -> Result<(Vec<FSRecord>, Vec<String>), FsrError> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for block in parse_blocks(raw) {
        let (Some(title), Some(requirement), Some(trigger), Some(exit)) =
            (block.title, block.requirement, block.trigger, block.exit)
        else {
            continue;
        };
        if title.is_empty() || requirement.is_empty() || trigger.is_empty() || exit.is_empty() {
            continue;
        }
        if !contains_shall(&requirement) {
            continue;
        }
        let mut cited = Vec::new();
        for cite in block.cites {
            if offered.contains(&cite.as_str()) {
                cited.push(cite);
            } else {
                let warning = format!("{hazard_id}: dropped citation of unknown clause {cite:?}");
                log::warn!("{warning}");
                warnings.push(warning);
            }
        }
        records.push(FSRecord {
            id: format!("{hazard_id}#F{}", records.len() + 1),
            hazard_id: hazard_id.to_string(),
            title,
            requirement,
            trigger,
            exit,
            cited_clause_ids: cited,
            prompt_sha256: prompt_sha256.to_string(),
            raw_output: raw.to_string(),
        });
    }
    if records.is_empty() {
        return Err(FsrError::FsrParseError(raw.to_string()));
    }
    Ok((records, warnings))
}

/// Generate and parse the requirements for one hazard.
pub fn synthesize(
    backend: &dyn LlmBackend,
    params: &GenParams,
    hazard: &HazardScenario,
    context: &ConstraintContext,
    robot_spec: &RobotSpec,
) -> Result<(Vec<FSRecord>, Vec<String>), FsrError> {
    let prompt = build_synthesis_prompt(hazard, context, robot_spec);
    let raw = llm::generate(backend, &prompt, params)?;
    let offered = context.offered_ids();
    parse_fsr(&raw, &hazard.id, &offered, &sha256_hex(&prompt))
}

//! Knowledge sources for the pipeline: seed scenarios, the risk-attribute
//! rule base, the regulatory clause base, and the robot capability
//! specification.
//!
//! All four corpora are line-delimited JSON record files (UTF-8, no BOM,
//! one object per line). Corpus objects are immutable after load and safe
//! for unrestricted concurrent reads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("rule id {0:?} does not match <U|E|S|T><digit><digit>")]
    BadIdPattern(String),
    #[error("rule {0:?} declares a dimension inconsistent with its id prefix")]
    InconsistentDimension(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("record has empty required field {field:?} (id {id:?})")]
    EmptyField { id: String, field: &'static str },
}

/// Risk dimension, derived from the leading letter of a rule id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    UserState,
    Environment,
    Supervision,
    Task,
}

impl Dimension {
    pub fn from_prefix(letter: char) -> Option<Self> {
        match letter {
            'U' => Some(Self::UserState),
            'E' => Some(Self::Environment),
            'S' => Some(Self::Supervision),
            'T' => Some(Self::Task),
            _ => None,
        }
    }

    /// Label used when a rule is injected into a prompt.
    pub fn label(self) -> &'static str {
        match self {
            Self::UserState => "User State",
            Self::Environment => "Environment",
            Self::Supervision => "Supervision",
            Self::Task => "Task",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A natural-language instruction the pipeline expands into hazards.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SeedScenario {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

/// One entry of the risk-attribute rule base: a named risk factor with a
/// quantified physical definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskRule {
    pub id: String,
    pub dimension: Dimension,
    pub name: String,
    pub definition: String,
}

impl RiskRule {
    /// Build a rule, deriving the dimension from the id prefix.
    pub fn new(id: &str, name: &str, definition: &str) -> Result<Self, CorpusError> {
        let dimension = parse_rule_id(id)?;
        if name.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: id.to_string(),
                field: "name",
            });
        }
        if definition.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: id.to_string(),
                field: "definition",
            });
        }
        Ok(Self {
            id: id.to_string(),
            dimension,
            name: name.to_string(),
            definition: definition.to_string(),
        })
    }

    /// Text embedded when matching semantic units against this rule.
    /// The definition carries the physical content, so it participates.
    pub fn embedding_text(&self) -> String {
        format!("{} {}", self.name, self.definition)
    }
}

fn parse_rule_id(id: &str) -> Result<Dimension, CorpusError> {
    let bytes = id.as_bytes();
    if bytes.len() != 3 || !bytes[1].is_ascii_digit() || !bytes[2].is_ascii_digit() {
        return Err(CorpusError::BadIdPattern(id.to_string()));
    }
    Dimension::from_prefix(bytes[0] as char)
        .ok_or_else(|| CorpusError::BadIdPattern(id.to_string()))
}

/// The rule base, indexed by rule id (sorted, so iteration is stable).
#[derive(Debug, Clone, Default)]
pub struct RuleBase {
    rules: BTreeMap<String, RiskRule>,
}

impl RuleBase {
    pub fn from_rules(rules: Vec<RiskRule>) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for rule in rules {
            if map.contains_key(&rule.id) {
                return Err(CorpusError::DuplicateId(rule.id));
            }
            map.insert(rule.id.clone(), rule);
        }
        if map.is_empty() {
            return Err(CorpusError::EmptyCorpus("rule base".into()));
        }
        Ok(Self { rules: map })
    }

    pub fn get(&self, id: &str) -> Option<&RiskRule> {
        self.rules.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RiskRule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// A regulatory clause available for retrieval.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RegClause {
    pub id: String,
    pub standard: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpecSection {
    pub heading: String,
    pub body: String,
}

/// The robot capability specification. Numeric limits stay inside the
/// free text; the whole document is injected verbatim into prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotSpec {
    pub sections: Vec<SpecSection>,
    pub canonical_text: String,
}

impl RobotSpec {
    pub fn from_sections(sections: Vec<SpecSection>) -> Result<Self, CorpusError> {
        if sections.is_empty() {
            return Err(CorpusError::EmptyCorpus("robot spec".into()));
        }
        let canonical_text = sections
            .iter()
            .map(|s| format!("{}\n{}", s.heading, s.body))
            .collect::<Vec<_>>()
            .join("\n\n");
        Ok(Self {
            sections,
            canonical_text,
        })
    }
}

// ---------------------------------------------------------------------------
// Record file IO
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    name: String,
    definition: String,
    /// Optional; when present it must agree with the id prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dimension: Option<Dimension>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSpecRecord {
    sections: Vec<SpecSection>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(raw
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_line<T: for<'de> Deserialize<'de>>(
    path: &Path,
    line_no: usize,
    line: &str,
) -> Result<T, CorpusError> {
    serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
        path: path.display().to_string(),
        line: line_no,
        message: e.to_string(),
    })
}

/// Load the rule base from a line-delimited record file.
pub fn load_rules(path: &Path) -> Result<RuleBase, CorpusError> {
    let mut rules = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let record: RuleRecord = parse_line(path, line_no, &line)?;
        let rule = RiskRule::new(&record.id, &record.name, &record.definition)?;
        if let Some(declared) = record.dimension {
            if declared != rule.dimension {
                return Err(CorpusError::InconsistentDimension(record.id));
            }
        }
        rules.push(rule);
    }
    RuleBase::from_rules(rules)
}

/// Load seed scenarios. Ids must be unique and texts non-empty.
pub fn load_seeds(path: &Path) -> Result<Vec<SeedScenario>, CorpusError> {
    let mut seeds: Vec<SeedScenario> = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let seed: SeedScenario = parse_line(path, line_no, &line)?;
        if seed.text.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: seed.id,
                field: "text",
            });
        }
        if seeds.iter().any(|s| s.id == seed.id) {
            return Err(CorpusError::DuplicateId(seed.id));
        }
        seeds.push(seed);
    }
    if seeds.is_empty() {
        return Err(CorpusError::EmptyCorpus("seed scenarios".into()));
    }
    Ok(seeds)
}

/// Load the regulatory clause base.
pub fn load_clauses(path: &Path) -> Result<Vec<RegClause>, CorpusError> {
    let mut clauses: Vec<RegClause> = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let clause: RegClause = parse_line(path, line_no, &line)?;
        if clause.text.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: clause.id,
                field: "text",
            });
        }
        if clauses.iter().any(|c| c.id == clause.id) {
            return Err(CorpusError::DuplicateId(clause.id));
        }
        clauses.push(clause);
    }
    if clauses.is_empty() {
        return Err(CorpusError::EmptyCorpus("regulatory clauses".into()));
    }
    Ok(clauses)
}

/// Load the robot capability specification (a single record whose
/// `sections` array carries the document).
pub fn load_robot_spec(path: &Path) -> Result<RobotSpec, CorpusError> {
    let lines = read_lines(path)?;
    let (line_no, line) = lines
        .first()
        .ok_or_else(|| CorpusError::EmptyCorpus("robot spec".into()))?;
    if lines.len() > 1 {
        return Err(CorpusError::MalformedRecord {
            path: path.display().to_string(),
            line: lines[1].0,
            message: "robot spec file must contain exactly one record".into(),
        });
    }
    let record: RobotSpecRecord = parse_line(path, *line_no, line)?;
    for section in &record.sections {
        if section.heading.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                id: "robot-spec".into(),
                field: "heading",
            });
        }
    }
    RobotSpec::from_sections(record.sections)
}

// Serializers used by tests and by corpus tooling; `load(serialize(x)) == x`.

pub fn serialize_rules(base: &RuleBase) -> String {
    let mut out = String::new();
    for rule in base.iter() {
        let record = RuleRecord {
            id: rule.id.clone(),
            name: rule.name.clone(),
            definition: rule.definition.clone(),
            dimension: None,
        };
        out.push_str(&serde_json::to_string(&record).expect("rule record serializes"));
        out.push('\n');
    }
    out
}

pub fn serialize_seeds(seeds: &[SeedScenario]) -> String {
    let mut out = String::new();
    for seed in seeds {
        out.push_str(&serde_json::to_string(seed).expect("seed serializes"));
        out.push('\n');
    }
    out
}

pub fn serialize_clauses(clauses: &[RegClause]) -> String {
    let mut out = String::new();
    for clause in clauses {
        out.push_str(&serde_json::to_string(clause).expect("clause serializes"));
        out.push('\n');
    }
    out
}

pub fn serialize_robot_spec(spec: &RobotSpec) -> String {
    let record = RobotSpecRecord {
        sections: spec.sections.clone(),
    };
    let mut out = serde_json::to_string(&record).expect("robot spec serializes");
    out.push('\n');
    out
}

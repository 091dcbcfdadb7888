//! Stage-I front half: extract semantic risk units from a seed instruction
//! and inject matching rule attributes via threshold retrieval.
//!
//! Two extractors are available. The lexicon matcher scans the seed text
//! for whole-word, case-insensitive occurrences of rule names and
//! configured aliases; it is the default, deterministic path. The LLM
//! extractor asks a backend to list risk-relevant entities and tasks, one
//! per line. Unit extraction never assigns rules directly — attribution
//! goes through embedding similarity so near-synonyms can still retrieve.

use serde::{Deserialize, Serialize};

use crate::corpus::{RuleBase, SeedScenario};
use crate::embedding::{cosine, EmbedError, Embedder};
use crate::llm::{self, BackendError, GenParams, LlmBackend};

#[derive(Debug, thiserror::Error)]
pub enum GroundingError {
    #[error("LLM extraction output is not a parseable list: {0:?}")]
    LlmExtractionUnparseable(String),
    #[error("similarity threshold {0} outside (-1, 1]")]
    InvalidThreshold(f64),
    #[error("rule base is empty")]
    EmptyRuleBase,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSource {
    Lexicon,
    Llm,
}

/// A surface-form risk unit extracted from a seed instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticUnit {
    pub text: String,
    pub source: UnitSource,
}

/// One retrieved rule attribute for one unit; `similarity` is strictly
/// above the threshold used at retrieval time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeMatch {
    pub unit: SemanticUnit,
    pub rule_id: String,
    pub similarity: f64,
}

/// Alias phrase → rule id table for the lexicon extractor. The rule id is
/// only used to decide which phrases are scanned for; retrieval still runs
/// through embeddings.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    entries: Vec<(String, String)>,
}

impl AliasTable {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        Self { entries }
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(phrase, _)| phrase.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Simple per-char case fold that keeps a 1:1 index mapping with the
/// original text (sufficient for the ASCII-centric corpus language).
fn fold_chars(text: &str) -> Vec<char> {
    text.chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect()
}

/// Find all whole-word occurrences of `pattern` in `haystack` and return
/// (char offset, surface form) pairs taken from the original text.
fn whole_word_occurrences(
    original: &[char],
    folded: &[char],
    pattern: &str,
) -> Vec<(usize, String)> {
    let needle = fold_chars(pattern);
    if needle.is_empty() || needle.len() > folded.len() {
        return Vec::new();
    }
    let mut hits = Vec::new();
    for start in 0..=(folded.len() - needle.len()) {
        if folded[start..start + needle.len()] != needle[..] {
            continue;
        }
        let end = start + needle.len();
        let left_ok = start == 0 || !folded[start - 1].is_alphanumeric();
        let right_ok = end == folded.len() || !folded[end].is_alphanumeric();
        if left_ok && right_ok {
            hits.push((start, original[start..end].iter().collect()));
        }
    }
    hits
}

fn lexicon_units(seed: &SeedScenario, rules: &RuleBase, aliases: &AliasTable) -> Vec<SemanticUnit> {
    let original: Vec<char> = seed.text.chars().collect();
    let folded = fold_chars(&seed.text);
    let mut patterns: Vec<&str> = rules.iter().map(|r| r.name.as_str()).collect();
    patterns.extend(aliases.phrases());

    let mut hits: Vec<(usize, String)> = Vec::new();
    for pattern in patterns {
        hits.extend(whole_word_occurrences(&original, &folded, pattern));
    }
    // Order of first occurrence; prefer the longer surface form when two
    // patterns start at the same offset.
    hits.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.chars().count().cmp(&a.1.chars().count()))
    });
    let mut seen = Vec::new();
    let mut units = Vec::new();
    for (_, surface) in hits {
        let key = surface.to_lowercase();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        units.push(SemanticUnit {
            text: surface,
            source: UnitSource::Lexicon,
        });
    }
    units
}

const LLM_EXTRACTION_PROMPT: &str = "From the instruction below, list the risk-relevant entities and tasks, one per line. Reply with the list only.\n\nInstruction: ";

fn llm_units(
    seed: &SeedScenario,
    backend: &dyn LlmBackend,
    params: &GenParams,
) -> Result<Vec<SemanticUnit>, GroundingError> {
    let prompt = format!("{LLM_EXTRACTION_PROMPT}{}", seed.text);
    let raw = llm::generate(backend, &prompt, params)?;
    let mut units = Vec::new();
    let mut seen = Vec::new();
    for line in raw.lines() {
        let cleaned = line
            .trim()
            .trim_start_matches(|c: char| {
                c == '-' || c == '*' || c.is_ascii_digit() || c == '.' || c == ')'
            })
            .trim();
        if cleaned.is_empty() {
            continue;
        }
        let key = cleaned.to_lowercase();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        units.push(SemanticUnit {
            text: cleaned.to_string(),
            source: UnitSource::Llm,
        });
    }
    if units.is_empty() {
        return Err(GroundingError::LlmExtractionUnparseable(raw));
    }
    Ok(units)
}

/// Extraction mode selector mirroring [`UnitSource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionMode {
    Lexicon,
    Llm,
}

/// Extract deduplicated semantic units in order of first occurrence.
pub fn extract_units(
    seed: &SeedScenario,
    mode: ExtractionMode,
    rules: &RuleBase,
    aliases: &AliasTable,
    llm: Option<(&dyn LlmBackend, &GenParams)>,
) -> Result<Vec<SemanticUnit>, GroundingError> {
    match mode {
        ExtractionMode::Lexicon => Ok(lexicon_units(seed, rules, aliases)),
        ExtractionMode::Llm => {
            let (backend, params) = llm.expect("Llm extraction mode needs a backend");
            llm_units(seed, backend, params)
        }
    }
}

/// Retrieve every rule whose embedded attribute text exceeds `tau_attr`
/// cosine similarity with a unit. A unit may match several rules and a
/// rule several units. Results are sorted by (unit order, descending
/// similarity, ascending rule id); the ordering is a pure function of the
/// inputs.
pub fn match_attributes(
    units: &[SemanticUnit],
    rules: &RuleBase,
    embedder: &Embedder,
    tau_attr: f64,
) -> Result<Vec<AttributeMatch>, GroundingError> {
    if !(tau_attr > -1.0 && tau_attr <= 1.0) {
        return Err(GroundingError::InvalidThreshold(tau_attr));
    }
    if rules.is_empty() {
        return Err(GroundingError::EmptyRuleBase);
    }
    let rule_texts: Vec<String> = rules.iter().map(|r| r.embedding_text()).collect();
    let rule_vectors = embedder.embed_batch(&rule_texts)?;
    let unit_texts: Vec<String> = units.iter().map(|u| u.text.clone()).collect();
    let unit_vectors = embedder.embed_batch(&unit_texts)?;

    let mut matches = Vec::new();
    for (unit, unit_vec) in units.iter().zip(&unit_vectors) {
        let mut per_unit: Vec<AttributeMatch> = Vec::new();
        for (rule, rule_vec) in rules.iter().zip(&rule_vectors) {
            let similarity = cosine(unit_vec, rule_vec)?;
            if similarity > tau_attr {
                per_unit.push(AttributeMatch {
                    unit: unit.clone(),
                    rule_id: rule.id.clone(),
                    similarity,
                });
            }
        }
        per_unit.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .expect("similarities are finite")
                .then_with(|| a.rule_id.cmp(&b.rule_id))
        });
        matches.extend(per_unit);
    }
    Ok(matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RiskRule;
    use crate::embedding::{Embedder, MockEmbedding};

    fn rule(id: &str, name: &str, definition: &str) -> RiskRule {
        RiskRule::new(id, name, definition).unwrap()
    }

    fn seed(text: &str) -> SeedScenario {
        SeedScenario {
            id: "S1".into(),
            text: text.into(),
            tags: vec![],
        }
    }

    fn embedder() -> Embedder {
        Embedder::new(Box::new(MockEmbedding::new("m", 64)))
    }

    #[test]
    fn lexicon_finds_names_and_aliases_in_first_occurrence_order() {
        let rules = RuleBase::from_rules(vec![
            rule("U02", "Child", "small human"),
            rule("T01", "Delivery", "transfer an object"),
        ])
        .unwrap();
        let aliases = AliasTable::new(vec![("deliver".into(), "T01".into())]);
        let units = extract_units(
            &seed("Deliver hot soup while a child is playing"),
            ExtractionMode::Lexicon,
            &rules,
            &aliases,
            None,
        )
        .unwrap();
        let texts: Vec<&str> = units.iter().map(|u| u.text.as_str()).collect();
        assert_eq!(texts, vec!["Deliver", "child"]);
        assert!(units.iter().all(|u| u.source == UnitSource::Lexicon));
    }

    #[test]
    fn lexicon_requires_whole_words() {
        let rules = RuleBase::from_rules(vec![rule("U02", "Child", "x")]).unwrap();
        let units = extract_units(
            &seed("childish games"),
            ExtractionMode::Lexicon,
            &rules,
            &AliasTable::default(),
            None,
        )
        .unwrap();
        assert!(units.is_empty());
    }

    #[test]
    fn lexicon_handles_multiword_names() {
        let rules = RuleBase::from_rules(vec![rule("E03", "Wet Floor", "low friction")]).unwrap();
        let units = extract_units(
            &seed("Mop around the wet floor sign"),
            ExtractionMode::Lexicon,
            &rules,
            &AliasTable::default(),
            None,
        )
        .unwrap();
        assert_eq!(units[0].text, "wet floor");
    }

    #[test]
    fn lexicon_no_occurrences_yields_empty_list() {
        let rules = RuleBase::from_rules(vec![rule("U02", "Child", "x")]).unwrap();
        let units = extract_units(
            &seed("Water the plants"),
            ExtractionMode::Lexicon,
            &rules,
            &AliasTable::default(),
            None,
        )
        .unwrap();
        assert!(units.is_empty());
    }

    #[test]
    fn lexicon_is_deterministic() {
        let rules = RuleBase::from_rules(vec![
            rule("U02", "Child", "x"),
            rule("E03", "Wet Floor", "y"),
        ])
        .unwrap();
        let s = seed("A child crosses the wet floor while another child watches");
        let a = extract_units(
            &s,
            ExtractionMode::Lexicon,
            &rules,
            &AliasTable::default(),
            None,
        )
        .unwrap();
        let b = extract_units(
            &s,
            ExtractionMode::Lexicon,
            &rules,
            &AliasTable::default(),
            None,
        )
        .unwrap();
        assert_eq!(a, b);
        // Dedup keeps the first "child" only.
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn identical_texts_match_at_any_threshold_below_one() {
        let rules = RuleBase::from_rules(vec![rule("U02", "child", "courier")]).unwrap();
        let units = vec![SemanticUnit {
            text: "child courier".into(),
            source: UnitSource::Lexicon,
        }];
        let matches = match_attributes(&units, &rules, &embedder(), 0.7).unwrap();
        assert_eq!(matches.len(), 1);
        assert!((matches[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tau_of_one_yields_nothing_for_distinct_texts() {
        let rules =
            RuleBase::from_rules(vec![rule("U02", "Child", "unrelated definition")]).unwrap();
        let units = vec![SemanticUnit {
            text: "courier".into(),
            source: UnitSource::Lexicon,
        }];
        let matches = match_attributes(&units, &rules, &embedder(), 1.0).unwrap();
        assert!(matches.is_empty());
    }

    #[test]
    fn raising_tau_never_adds_matches() {
        let rules = RuleBase::from_rules(vec![
            rule("U02", "child", "runs fast"),
            rule("T01", "delivery", "carry object"),
            rule("E03", "wet floor", "slippery surface"),
        ])
        .unwrap();
        let units = vec![
            SemanticUnit {
                text: "child runs".into(),
                source: UnitSource::Lexicon,
            },
            SemanticUnit {
                text: "delivery of soup".into(),
                source: UnitSource::Lexicon,
            },
        ];
        let e = embedder();
        let mut previous: Option<Vec<(String, String)>> = None;
        for tau in [-0.99, 0.0, 0.3, 0.7, 0.99] {
            let matches = match_attributes(&units, &rules, &e, tau).unwrap();
            let keys: Vec<(String, String)> = matches
                .iter()
                .map(|m| (m.unit.text.clone(), m.rule_id.clone()))
                .collect();
            if let Some(prev) = &previous {
                assert!(
                    keys.iter().all(|k| prev.contains(k)),
                    "tau {tau} added a match"
                );
            }
            previous = Some(keys);
        }
    }

    #[test]
    fn every_match_is_strictly_above_threshold() {
        let rules = RuleBase::from_rules(vec![rule("U02", "child", "plays")]).unwrap();
        let units = vec![SemanticUnit {
            text: "child plays outside".into(),
            source: UnitSource::Lexicon,
        }];
        let tau = 0.2;
        for m in match_attributes(&units, &rules, &embedder(), tau).unwrap() {
            assert!(m.similarity > tau);
        }
    }

    #[test]
    fn invalid_threshold_is_rejected() {
        let rules = RuleBase::from_rules(vec![rule("U02", "Child", "x")]).unwrap();
        assert!(matches!(
            match_attributes(&[], &rules, &embedder(), 1.5),
            Err(GroundingError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn llm_mode_parses_line_lists_and_rejects_empty() {
        struct Fake(&'static str);
        impl LlmBackend for Fake {
            fn name(&self) -> &str {
                "fake"
            }
            fn model(&self) -> &str {
                "fake"
            }
            fn complete(&self, _: &str, _: &GenParams) -> Result<String, BackendError> {
                Ok(self.0.to_string())
            }
        }
        let rules = RuleBase::from_rules(vec![rule("U02", "Child", "x")]).unwrap();
        let params = GenParams::default();

        let ok = Fake("- Child\n- hot soup\n1. delivery\n");
        let units = extract_units(
            &seed("irrelevant"),
            ExtractionMode::Llm,
            &rules,
            &AliasTable::default(),
            Some((&ok, &params)),
        )
        .unwrap();
        let texts: Vec<&str> = units.iter().map(|u| u.text.as_str()).collect();
        assert_eq!(texts, vec!["Child", "hot soup", "delivery"]);
        assert!(units.iter().all(|u| u.source == UnitSource::Llm));

        let empty = Fake("   \n\n");
        assert!(matches!(
            extract_units(
                &seed("irrelevant"),
                ExtractionMode::Llm,
                &rules,
                &AliasTable::default(),
                Some((&empty, &params)),
            ),
            Err(GroundingError::LlmExtractionUnparseable(_))
        ));
    }
}

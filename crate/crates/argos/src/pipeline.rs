//! Stage orchestration over a run directory.
//!
//! Stages: `ground` → `generate:<method>` → `synthesize:<arm>` →
//! `evaluate` → `report`. Each stage replaces its record file atomically
//! and then flips its manifest flag, so a flag is only ever set for a
//! fully written file. Record ordering is a documented total order (seed
//! id, then combination, then ordinal), independent of request
//! interleaving.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{AnchorChoice, ConfigError, ExtractorKind, ProviderKind, RunConfig};
use crate::corpus::{self, CorpusError, RegClause, RobotSpec, RuleBase, SeedScenario};
use crate::embedding::{Embedder, EmbeddingCache, EmbeddingVector, MockEmbedding, RemoteEmbedding};
use crate::evalkit::{
    self, aggregate, EmbeddingSet, JudgeResult, Rubric, ScoreSummary, TopologyReport,
};
use crate::fsrsynth::{self, Arm, ConstraintContext, FSRecord};
use crate::grounding::{self, AliasTable, ExtractionMode, SemanticUnit, UnitSource};
use crate::hazardgen::{self, HazardScenario, Method};
use crate::llm::{GenParams, LlmBackend, MockBackend, RemoteBackend};
use crate::net::RetryPolicy;
use crate::report;
use crate::runstore::{RunManifest, RunStore, StageEntry, StoreError};
use crate::util::{bounded_map, sha256_hex};

pub const GROUND_FILE: &str = "ground.jsonl";
pub const UNITS_FILE: &str = "units.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const TOPOLOGY_FILE: &str = "topology.jsonl";
pub const JUDGE_SCENARIOS_FILE: &str = "judge_scenarios.jsonl";
pub const JUDGE_FSR_FILE: &str = "judge_fsr.jsonl";
pub const SUMMARY_FILE: &str = "summary.jsonl";
pub const REPORT_FILE: &str = "report.md";

pub fn hazards_file(method: Method) -> String {
    format!("hazards_{method}.jsonl")
}

pub fn fsr_file(arm: Arm) -> String {
    format!("fsr_{arm}.jsonl")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {0:?} has not run (or is stale) in this run directory")]
    MissingStage(String),
    #[error("backend failure in stage {stage}: {message}")]
    Backend { stage: String, message: String },
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    /// Documented exit codes: 2 config, 3 missing stage, 4 backend failure
    /// after retries, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::MissingStage(_) => 3,
            Self::Backend { .. } => 4,
            _ => 1,
        }
    }
}

/// Wrap a module error with stage context, routing backend/provider
/// failures to their dedicated variant (exit code 4).
fn stage_err(stage: &str, error: impl std::fmt::Display + BackendProbe) -> PipelineError {
    if error.is_backend() {
        PipelineError::Backend {
            stage: stage.to_string(),
            message: error.to_string(),
        }
    } else {
        PipelineError::Stage {
            stage: stage.to_string(),
            message: error.to_string(),
        }
    }
}

/// Whether an error ultimately came from a remote backend/provider.
trait BackendProbe {
    fn is_backend(&self) -> bool;
}

impl BackendProbe for grounding::GroundingError {
    fn is_backend(&self) -> bool {
        matches!(
            self,
            grounding::GroundingError::Backend(_)
                | grounding::GroundingError::Embed(crate::embedding::EmbedError::Provider { .. })
        )
    }
}

impl BackendProbe for hazardgen::HazardGenError {
    fn is_backend(&self) -> bool {
        matches!(self, hazardgen::HazardGenError::Backend(_))
    }
}

impl BackendProbe for fsrsynth::FsrError {
    fn is_backend(&self) -> bool {
        matches!(
            self,
            fsrsynth::FsrError::Backend(_)
                | fsrsynth::FsrError::Embed(crate::embedding::EmbedError::Provider { .. })
        )
    }
}

impl BackendProbe for evalkit::JudgeError {
    fn is_backend(&self) -> bool {
        matches!(self, evalkit::JudgeError::Backend(_))
    }
}

impl BackendProbe for crate::embedding::EmbedError {
    fn is_backend(&self) -> bool {
        matches!(self, crate::embedding::EmbedError::Provider { .. })
    }
}

impl BackendProbe for crate::llm::BackendError {
    fn is_backend(&self) -> bool {
        true
    }
}

impl BackendProbe for evalkit::TopologyError {
    fn is_backend(&self) -> bool {
        false
    }
}

impl BackendProbe for hazardgen::HazardParseError {
    fn is_backend(&self) -> bool {
        false
    }
}

/// One attribute match as persisted by the ground stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundRecord {
    pub seed_id: String,
    pub unit: String,
    pub rule_id: String,
    pub similarity: f64,
}

/// Every extracted unit, matched or not, kept for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRecord {
    pub seed_id: String,
    pub unit: String,
    pub source: UnitSource,
    pub matched: bool,
}

/// One judge result as persisted by the evaluate stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub target_id: String,
    pub rubric: Rubric,
    pub scores: BTreeMap<String, u8>,
    pub prompt_sha256: String,
}

pub struct Pipeline {
    config: RunConfig,
    store: RunStore,
    seeds: Vec<SeedScenario>,
    rules: RuleBase,
    clauses: Vec<RegClause>,
    robot_spec: RobotSpec,
    embedder: Embedder,
    backend: Box<dyn LlmBackend>,
    params: GenParams,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let store = RunStore::open(&config.run_dir)?;

        let mut seeds = corpus::load_seeds(&config.corpus.seeds)?;
        seeds.sort_by(|a, b| a.id.cmp(&b.id));
        let rules = corpus::load_rules(&config.corpus.rules)?;
        let clauses = corpus::load_clauses(&config.corpus.clauses)?;
        let robot_spec = corpus::load_robot_spec(&config.corpus.robot_spec)?;

        let retry = RetryPolicy::with_retries(config.concurrency.retries);
        let provider: Box<dyn crate::embedding::EmbeddingProvider> = match config.embedding.provider
        {
            ProviderKind::Mock => Box::new(MockEmbedding::new(
                &config.embedding.model,
                config.embedding.dims,
            )),
            ProviderKind::Remote => Box::new(RemoteEmbedding::new(
                config.embedding.endpoint.as_deref().expect("validated"),
                &config.embedding.model,
                config.embedding.dims,
                RunConfig::token_for("embedding"),
                retry.clone(),
            )),
        };
        let cache = EmbeddingCache::open(&store.path("embedding_cache.jsonl"))
            .map_err(|e| stage_err("init", e))?;
        let embedder = Embedder::new(provider)
            .with_cache(cache)
            .with_max_in_flight(config.concurrency.max_in_flight);

        let backend: Box<dyn LlmBackend> = match config.llm.backend {
            ProviderKind::Mock => Box::new(MockBackend::new(&config.llm.model)),
            ProviderKind::Remote => Box::new(RemoteBackend::new(
                config.llm.endpoint.as_deref().expect("validated"),
                &config.llm.model,
                RunConfig::token_for("llm"),
                retry,
            )),
        };
        let params = GenParams {
            temperature: config.llm.temperature,
            max_tokens: config.llm.max_tokens,
            seed: None,
        };

        Ok(Self {
            config,
            store,
            seeds,
            rules,
            clauses,
            robot_spec,
            embedder,
            backend,
            params,
        })
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn seeds_filtered(&self, seed_filter: Option<&str>) -> Vec<&SeedScenario> {
        self.seeds
            .iter()
            .filter(|s| seed_filter.is_none_or(|wanted| s.id == wanted))
            .collect()
    }

    // -- manifest ----------------------------------------------------------

    fn fresh_manifest(&self) -> Result<RunManifest, PipelineError> {
        let mut inputs = BTreeMap::new();
        for (name, path) in [
            ("rules", &self.config.corpus.rules),
            ("seeds", &self.config.corpus.seeds),
            ("clauses", &self.config.corpus.clauses),
            ("robot_spec", &self.config.corpus.robot_spec),
        ] {
            let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            inputs.insert(name.to_string(), sha256_hex(&raw));
        }
        let config = serde_json::to_value(&self.config).expect("config serializes");
        Ok(RunManifest::new(config, inputs))
    }

    /// Current manifest; stage flags survive only while config and inputs
    /// are unchanged (staleness detection).
    fn manifest(&self) -> Result<RunManifest, PipelineError> {
        let fresh = self.fresh_manifest()?;
        match self.store.read_manifest()? {
            Some(existing) if existing.run_id == fresh.run_id => Ok(existing),
            _ => Ok(fresh),
        }
    }

    fn complete_stage(
        &self,
        stage: &str,
        files: Vec<(String, usize)>,
    ) -> Result<(), PipelineError> {
        let mut manifest = self.manifest()?;
        manifest.stages.insert(
            stage.to_string(),
            StageEntry {
                files: files.into_iter().collect(),
            },
        );
        self.store.write_manifest(&manifest)?;
        Ok(())
    }

    fn require_stage(&self, stage: &str) -> Result<(), PipelineError> {
        if !self.manifest()?.stage_done(stage) {
            return Err(PipelineError::MissingStage(stage.to_string()));
        }
        Ok(())
    }

    // -- ground ------------------------------------------------------------

    pub fn cmd_ground(&self, seed_filter: Option<&str>) -> Result<usize, PipelineError> {
        const STAGE: &str = "ground";
        let aliases = AliasTable::new(self.config.aliases.clone());
        let mode = match self.config.extractor {
            ExtractorKind::Lexicon => ExtractionMode::Lexicon,
            ExtractorKind::Llm => ExtractionMode::Llm,
        };
        let mut records: Vec<GroundRecord> = Vec::new();
        let mut unit_records: Vec<UnitRecord> = Vec::new();
        for seed in self.seeds_filtered(seed_filter) {
            let units = grounding::extract_units(
                seed,
                mode,
                &self.rules,
                &aliases,
                Some((self.backend.as_ref(), &self.params)),
            )
            .map_err(|e| stage_err(STAGE, e))?;
            let matches = grounding::match_attributes(
                &units,
                &self.rules,
                &self.embedder,
                self.config.thresholds.tau_attr,
            )
            .map_err(|e| stage_err(STAGE, e))?;
            for unit in &units {
                unit_records.push(UnitRecord {
                    seed_id: seed.id.clone(),
                    unit: unit.text.clone(),
                    source: unit.source,
                    matched: matches.iter().any(|m| m.unit == *unit),
                });
            }
            for m in matches {
                records.push(GroundRecord {
                    seed_id: seed.id.clone(),
                    unit: m.unit.text,
                    rule_id: m.rule_id,
                    similarity: m.similarity,
                });
            }
        }
        self.store.write_records(GROUND_FILE, &records)?;
        self.store.write_records(UNITS_FILE, &unit_records)?;
        self.complete_stage(
            STAGE,
            vec![
                (GROUND_FILE.to_string(), records.len()),
                (UNITS_FILE.to_string(), unit_records.len()),
            ],
        )?;
        Ok(records.len())
    }

    // -- generate ----------------------------------------------------------

    fn generate_hazards(
        &self,
        stage: &str,
        method: Method,
        jobs: Vec<(String, Vec<String>, String)>, // (seed_id, rule_ids, prompt)
    ) -> Result<Vec<HazardScenario>, PipelineError> {
        let raw_outputs = bounded_map(
            &jobs,
            self.config.concurrency.max_in_flight,
            |(_, _, prompt)| crate::llm::generate(self.backend.as_ref(), prompt, &self.params),
        );
        let mut hazards = Vec::with_capacity(jobs.len());
        for ((seed_id, rule_ids, prompt), raw) in jobs.iter().zip(raw_outputs) {
            let raw = raw.map_err(|e| stage_err(stage, e))?;
            let (description, mechanism) =
                hazardgen::parse_hazard(&raw, method).map_err(|e| stage_err(stage, e))?;
            hazards.push(HazardScenario {
                id: hazardgen::hazard_id(seed_id, method, rule_ids),
                seed_id: seed_id.clone(),
                method,
                rule_ids: rule_ids.clone(),
                description,
                mechanism,
                backend_model: self.backend.model().to_string(),
                prompt_sha256: sha256_hex(prompt),
                raw_output: raw,
            });
        }
        Ok(hazards)
    }

    pub fn cmd_generate(
        &self,
        method: Method,
        k_max: Option<usize>,
        seed_filter: Option<&str>,
    ) -> Result<usize, PipelineError> {
        let stage = format!("generate:{method}");
        let seeds = self.seeds_filtered(seed_filter);
        let jobs: Vec<(String, Vec<String>, String)> = match method {
            Method::Ours => {
                self.require_stage("ground")?;
                let k_max = k_max.unwrap_or(self.config.k_max);
                let ground: Vec<GroundRecord> = self.store.read_records(GROUND_FILE)?;
                let mut jobs = Vec::new();
                for seed in &seeds {
                    let matches: Vec<grounding::AttributeMatch> = ground
                        .iter()
                        .filter(|r| r.seed_id == seed.id)
                        .map(|r| grounding::AttributeMatch {
                            unit: SemanticUnit {
                                text: r.unit.clone(),
                                source: UnitSource::Lexicon,
                            },
                            rule_id: r.rule_id.clone(),
                            similarity: r.similarity,
                        })
                        .collect();
                    for combo in hazardgen::enumerate_combinations(&matches, &seed.id, k_max) {
                        let prompt = hazardgen::build_prompt_ours(
                            seed,
                            &combo,
                            &self.rules,
                            &self.robot_spec,
                        )
                        .map_err(|e| stage_err(&stage, e))?;
                        jobs.push((seed.id.clone(), combo.rule_ids, prompt));
                    }
                }
                jobs
            }
            Method::Vanilla => seeds
                .iter()
                .map(|seed| {
                    (
                        seed.id.clone(),
                        Vec::new(),
                        hazardgen::build_prompt_vanilla(seed, &self.robot_spec),
                    )
                })
                .collect(),
            Method::Cot => seeds
                .iter()
                .map(|seed| {
                    (
                        seed.id.clone(),
                        Vec::new(),
                        hazardgen::build_prompt_cot(seed, &self.robot_spec),
                    )
                })
                .collect(),
        };
        let hazards = self.generate_hazards(&stage, method, jobs)?;
        let file = hazards_file(method);
        self.store.write_records(&file, &hazards)?;
        self.complete_stage(&stage, vec![(file, hazards.len())])?;
        Ok(hazards.len())
    }

    // -- synthesize ----------------------------------------------------------

    pub fn cmd_synthesize(
        &self,
        arm: Arm,
        seed_filter: Option<&str>,
    ) -> Result<usize, PipelineError> {
        let stage = format!("synthesize:{arm}");
        let method = arm.hazard_method();
        self.require_stage(&format!("generate:{method}"))?;
        let hazards: Vec<HazardScenario> = self
            .store
            .read_records(&hazards_file(method))?
            .into_iter()
            .filter(|h: &HazardScenario| seed_filter.is_none_or(|wanted| h.seed_id == wanted))
            .collect();

        // Retrieval first (sequential: embeddings are cached), then the
        // synthesis calls in parallel, then parsing in input order.
        let mut contexts: Vec<ConstraintContext> = Vec::with_capacity(hazards.len());
        for hazard in &hazards {
            if arm.retrieval_enabled() {
                let hits = fsrsynth::retrieve_clauses(
                    hazard,
                    &self.clauses,
                    &self.embedder,
                    self.config.thresholds.tau_reg,
                )
                .map_err(|e| stage_err(&stage, e))?;
                contexts.push(ConstraintContext {
                    hazard_id: hazard.id.clone(),
                    clauses: hits,
                    robot_spec_ref: "robot-spec".into(),
                });
            } else {
                contexts.push(ConstraintContext::empty(&hazard.id));
            }
        }

        let prompts: Vec<String> = hazards
            .iter()
            .zip(&contexts)
            .map(|(hazard, context)| {
                fsrsynth::build_synthesis_prompt(hazard, context, &self.robot_spec)
            })
            .collect();
        let raw_outputs = bounded_map(&prompts, self.config.concurrency.max_in_flight, |prompt| {
            crate::llm::generate(self.backend.as_ref(), prompt, &self.params)
        });

        let mut records: Vec<FSRecord> = Vec::new();
        for (((hazard, context), prompt), raw) in
            hazards.iter().zip(&contexts).zip(&prompts).zip(raw_outputs)
        {
            let raw = raw.map_err(|e| stage_err(&stage, e))?;
            let offered = context.offered_ids();
            let (mut parsed, _warnings) =
                fsrsynth::parse_fsr(&raw, &hazard.id, &offered, &sha256_hex(prompt))
                    .map_err(|e| stage_err(&stage, e))?;
            records.append(&mut parsed);
        }
        let file = fsr_file(arm);
        self.store.write_records(&file, &records)?;
        self.complete_stage(&stage, vec![(file, records.len())])?;
        Ok(records.len())
    }

    // -- evaluate ------------------------------------------------------------

    fn hazard_topology_text(&self, hazard: &HazardScenario) -> String {
        if self.config.evaluate.embed_mechanism {
            hazard.embedding_text()
        } else {
            hazard.description.clone()
        }
    }

    pub fn cmd_evaluate(&self) -> Result<usize, PipelineError> {
        const STAGE: &str = "evaluate";
        for method in Method::ALL {
            self.require_stage(&format!("generate:{method}"))?;
        }
        let mut by_method: BTreeMap<Method, Vec<HazardScenario>> = BTreeMap::new();
        for method in Method::ALL {
            by_method.insert(method, self.store.read_records(&hazards_file(method))?);
        }

        // Embed seeds and all hazard texts in one deterministic batch.
        let seed_texts: Vec<String> = self.seeds.iter().map(|s| s.text.clone()).collect();
        let seed_vectors = self
            .embedder
            .embed_batch(&seed_texts)
            .map_err(|e| stage_err(STAGE, e))?;
        let seed_vec_by_id: BTreeMap<&str, &EmbeddingVector> = self
            .seeds
            .iter()
            .zip(&seed_vectors)
            .map(|(s, v)| (s.id.as_str(), v))
            .collect();

        let mut method_vectors: BTreeMap<Method, Vec<EmbeddingVector>> = BTreeMap::new();
        for (method, hazards) in &by_method {
            let texts: Vec<String> = hazards
                .iter()
                .map(|h| self.hazard_topology_text(h))
                .collect();
            method_vectors.insert(
                *method,
                self.embedder
                    .embed_batch(&texts)
                    .map_err(|e| stage_err(STAGE, e))?,
            );
        }

        // Labeled embedding dump for external plotting.
        let mut dump = String::from("label,id");
        for i in 0..self.embedder.dims() {
            dump.push_str(&format!(",c{i}"));
        }
        dump.push('\n');
        let mut dump_rows = 0usize;
        for (seed, vector) in self.seeds.iter().zip(&seed_vectors) {
            dump.push_str(&format!("seed,{}", seed.id));
            for v in vector.values() {
                dump.push_str(&format!(",{v}"));
            }
            dump.push('\n');
            dump_rows += 1;
        }
        for (method, hazards) in &by_method {
            for (hazard, vector) in hazards.iter().zip(&method_vectors[method]) {
                dump.push_str(&format!("{method},{}", hazard.id));
                for v in vector.values() {
                    dump.push_str(&format!(",{v}"));
                }
                dump.push('\n');
                dump_rows += 1;
            }
        }
        self.store.write_text(EMBEDDINGS_FILE, &dump)?;

        // Topology rows per method.
        let sets: Vec<EmbeddingSet> = by_method
            .keys()
            .map(|method| {
                EmbeddingSet::new(method.as_str(), method_vectors[method].clone())
                    .map_err(|e| stage_err_topology(STAGE, *method, e))
            })
            .collect::<Result<_, _>>()?;
        let anchor_set = match self.config.evaluate.anchor {
            AnchorChoice::Vanilla => sets
                .iter()
                .find(|s| s.label == Method::Vanilla.as_str())
                .cloned()
                .expect("vanilla set exists"),
            AnchorChoice::Seed => EmbeddingSet::new("seed", seed_vectors.clone()).map_err(|e| {
                PipelineError::Stage {
                    stage: STAGE.into(),
                    message: e.to_string(),
                }
            })?,
        };

        let mut topology_rows: Vec<TopologyReport> = Vec::new();
        for (method, hazards) in &by_method {
            let set = sets
                .iter()
                .find(|s| s.label == method.as_str())
                .expect("set exists");
            let diffs: Vec<EmbeddingVector> = hazards
                .iter()
                .zip(&method_vectors[method])
                .map(|(hazard, vector)| {
                    let seed_vector =
                        seed_vec_by_id.get(hazard.seed_id.as_str()).ok_or_else(|| {
                            PipelineError::Stage {
                                stage: STAGE.into(),
                                message: format!(
                                    "hazard {} references unknown seed {}",
                                    hazard.id, hazard.seed_id
                                ),
                            }
                        })?;
                    vector.sub(seed_vector).map_err(|e| PipelineError::Stage {
                        stage: STAGE.into(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;

            let eff_rank =
                evalkit::effective_rank(set).map_err(|e| stage_err_topology(STAGE, *method, e))?;
            let shift = evalkit::centroid_shift(set, &anchor_set)
                .map_err(|e| stage_err_topology(STAGE, *method, e))?;
            let aligned_var =
                evalkit::aligned_variance(&sets, method.as_str(), self.config.evaluate.aligned_p)
                    .map_err(|e| stage_err_topology(STAGE, *method, e))?;
            let cse = evalkit::cse(set, &anchor_set, self.config.thresholds.eps_shift)
                .map_err(|e| stage_err_topology(STAGE, *method, e))?;
            let dir_sim = evalkit::pairwise_direction_mean(&diffs)
                .map_err(|e| stage_err_topology(STAGE, *method, e))?;
            topology_rows.push(TopologyReport {
                label: method.as_str().to_string(),
                eff_rank,
                shift,
                aligned_var,
                cse,
                dir_sim,
                anchor_label: anchor_set.label.clone(),
            });
        }
        self.store.write_records(TOPOLOGY_FILE, &topology_rows)?;

        // Scenario judging, seed by seed.
        let mut scenario_items: Vec<(String, JudgeResult)> = Vec::new();
        let mut scenario_records: Vec<JudgeRecord> = Vec::new();
        for seed in &self.seeds {
            let per_method: BTreeMap<Method, Vec<&HazardScenario>> = Method::ALL
                .iter()
                .map(|m| {
                    (
                        *m,
                        by_method[m]
                            .iter()
                            .filter(|h| h.seed_id == seed.id)
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            if per_method.values().any(|hazards| hazards.is_empty()) {
                log::warn!(
                    "seed {}: skipping scenario judging (a method has no scenarios)",
                    seed.id
                );
                continue;
            }
            let prompt = evalkit::build_scenario_judge_prompt(
                seed,
                &per_method[&Method::Ours],
                &per_method[&Method::Vanilla],
                &per_method[&Method::Cot],
                &self.robot_spec,
            );
            let raw = crate::llm::generate(self.backend.as_ref(), &prompt, &self.params)
                .map_err(|e| stage_err(STAGE, e))?;
            let ids = |method: Method| -> Vec<String> {
                per_method[&method].iter().map(|h| h.id.clone()).collect()
            };
            let results = evalkit::parse_scenario_judgment(
                &raw,
                &ids(Method::Ours),
                &ids(Method::Vanilla),
                &ids(Method::Cot),
            )
            .map_err(|e| stage_err(STAGE, e))?;
            let prompt_hash = sha256_hex(&prompt);
            for result in results {
                let method = Method::ALL
                    .iter()
                    .find(|m| per_method[m].iter().any(|h| h.id == result.target_id))
                    .expect("judged id belongs to a method");
                scenario_records.push(JudgeRecord {
                    target_id: result.target_id.clone(),
                    rubric: result.rubric,
                    scores: result.scores.clone(),
                    prompt_sha256: prompt_hash.clone(),
                });
                scenario_items.push((method.as_str().to_string(), result));
            }
        }
        self.store
            .write_records(JUDGE_SCENARIOS_FILE, &scenario_records)?;

        // FSR audits for every synthesized arm.
        let manifest = self.manifest()?;
        let mut fsr_items: Vec<(String, JudgeResult)> = Vec::new();
        let mut fsr_records_out: Vec<JudgeRecord> = Vec::new();
        for arm in Arm::ALL {
            if !manifest.stage_done(&format!("synthesize:{arm}")) {
                continue;
            }
            let records: Vec<FSRecord> = self.store.read_records(&fsr_file(arm))?;
            for seed in &self.seeds {
                let for_seed: Vec<&FSRecord> = records
                    .iter()
                    .filter(|r| r.hazard_id.starts_with(&format!("{}:", seed.id)))
                    .collect();
                if for_seed.is_empty() {
                    continue;
                }
                let prompt = evalkit::build_fsr_audit_prompt(seed, &for_seed, &self.robot_spec);
                let raw = crate::llm::generate(self.backend.as_ref(), &prompt, &self.params)
                    .map_err(|e| stage_err(STAGE, e))?;
                let target_id = format!("{arm}:{}", seed.id);
                let result =
                    evalkit::parse_fsr_audit(&raw, &target_id).map_err(|e| stage_err(STAGE, e))?;
                fsr_records_out.push(JudgeRecord {
                    target_id: result.target_id.clone(),
                    rubric: result.rubric,
                    scores: result.scores.clone(),
                    prompt_sha256: sha256_hex(&prompt),
                });
                fsr_items.push((arm.as_str().to_string(), result));
            }
        }
        self.store.write_records(JUDGE_FSR_FILE, &fsr_records_out)?;

        // Aggregation: per-method scenario metrics, per-arm audit metrics,
        // plus a pooled Overall row per arm.
        let mut summaries: Vec<ScoreSummary> = aggregate(&scenario_items);
        summaries.extend(aggregate(&fsr_items));
        for arm in Arm::ALL {
            let pooled: Vec<f64> = fsr_items
                .iter()
                .filter(|(method, _)| method == arm.as_str())
                .flat_map(|(_, r)| r.scores.values().map(|s| f64::from(*s)).collect::<Vec<_>>())
                .collect();
            if !pooled.is_empty() {
                summaries.push(ScoreSummary {
                    method: arm.as_str().to_string(),
                    metric: "Overall".to_string(),
                    mean: evalkit::mean(&pooled),
                    sd: evalkit::sample_sd(&pooled),
                    n: pooled.len(),
                });
            }
        }
        summaries.sort_by(|a, b| {
            a.method
                .cmp(&b.method)
                .then_with(|| a.metric.cmp(&b.metric))
        });
        self.store.write_records(SUMMARY_FILE, &summaries)?;

        // Rendered views (CSV + one markdown file).
        self.write_evaluate_renderings(
            &topology_rows,
            &scenario_records,
            &fsr_records_out,
            &summaries,
        )?;

        self.complete_stage(
            STAGE,
            vec![
                (TOPOLOGY_FILE.to_string(), topology_rows.len()),
                (JUDGE_SCENARIOS_FILE.to_string(), scenario_records.len()),
                (JUDGE_FSR_FILE.to_string(), fsr_records_out.len()),
                (SUMMARY_FILE.to_string(), summaries.len()),
                (EMBEDDINGS_FILE.to_string(), dump_rows),
            ],
        )?;
        Ok(scenario_records.len() + fsr_records_out.len())
    }

    fn write_evaluate_renderings(
        &self,
        topology_rows: &[TopologyReport],
        scenario_records: &[JudgeRecord],
        fsr_records: &[JudgeRecord],
        summaries: &[ScoreSummary],
    ) -> Result<(), PipelineError> {
        let judge_rows = |records: &[JudgeRecord], metrics: &[&str]| -> Vec<Vec<String>> {
            records
                .iter()
                .map(|r| {
                    let mut row = vec![r.target_id.clone()];
                    row.extend(
                        metrics
                            .iter()
                            .map(|m| r.scores.get(*m).map(|s| s.to_string()).unwrap_or_default()),
                    );
                    row
                })
                .collect()
        };
        let scenario_headers = ["target_id", "PR", "LR", "FSR"];
        let scenario_rows = judge_rows(scenario_records, Rubric::ScenarioQuality.metrics());
        self.store.write_text(
            "judge_scenarios.csv",
            &report::csv_table(&scenario_headers, &scenario_rows),
        )?;
        let audit_headers = ["target_id", "CC", "PRC", "LRC"];
        let audit_rows = judge_rows(fsr_records, Rubric::FsrAudit.metrics());
        self.store.write_text(
            "judge_fsr.csv",
            &report::csv_table(&audit_headers, &audit_rows),
        )?;

        let summary_headers = ["method", "metric", "mean", "sd", "n"];
        let summary_rows: Vec<Vec<String>> = summaries
            .iter()
            .map(|s| {
                vec![
                    s.method.clone(),
                    s.metric.clone(),
                    format!("{:.4}", s.mean),
                    format!("{:.4}", s.sd),
                    s.n.to_string(),
                ]
            })
            .collect();
        self.store.write_text(
            "summary.csv",
            &report::csv_table(&summary_headers, &summary_rows),
        )?;

        let (topology_md, topology_csv) = report::topology_table(topology_rows);
        self.store.write_text("topology.csv", &topology_csv)?;

        let mut md = String::from("# Evaluation\n\n## Latent topology\n\n");
        md.push_str(&topology_md);
        md.push_str("\n## Scenario judge scores\n\n");
        md.push_str(&report::markdown_table(&scenario_headers, &scenario_rows));
        md.push_str("\n## Requirement audit scores\n\n");
        md.push_str(&report::markdown_table(&audit_headers, &audit_rows));
        md.push_str("\n## Summaries (mean ± SD)\n\n");
        md.push_str(&report::markdown_table(&summary_headers, &summary_rows));
        self.store.write_text("evaluate.md", &md)?;
        Ok(())
    }

    // -- report --------------------------------------------------------------

    pub fn cmd_report(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "report";
        self.require_stage("evaluate")?;
        let summaries: Vec<ScoreSummary> = self.store.read_records(SUMMARY_FILE)?;
        let topology_rows: Vec<TopologyReport> = self.store.read_records(TOPOLOGY_FILE)?;

        let (quality_md, quality_csv) = report::scenario_quality_table(&summaries);
        let (topology_md, topology_csv) = report::topology_table(&topology_rows);
        let (ablation_md, ablation_csv) = report::ablation_table(&summaries);

        let mut md = String::from("# Pipeline report\n\n");
        md.push_str("## Hazard scenario quality (judge, mean ± SD)\n\n");
        md.push_str(&quality_md);
        md.push_str("\n## Latent semantic topology\n\n");
        md.push_str(&topology_md);
        md.push_str("\n## Requirement synthesis ablation (audit, mean ± SD)\n\n");
        md.push_str(&ablation_md);
        self.store.write_text(REPORT_FILE, &md)?;
        self.store
            .write_text("report_scenario_quality.csv", &quality_csv)?;
        self.store
            .write_text("report_topology.csv", &topology_csv)?;
        self.store
            .write_text("report_fsr_ablation.csv", &ablation_csv)?;
        self.complete_stage(STAGE, vec![])?;
        Ok(())
    }

    /// ground → generate (all methods) → synthesize (all arms) → evaluate →
    /// report.
    pub fn run_all(
        &self,
        k_max: Option<usize>,
        seed_filter: Option<&str>,
    ) -> Result<(), PipelineError> {
        self.cmd_ground(seed_filter)?;
        for method in Method::ALL {
            self.cmd_generate(method, k_max, seed_filter)?;
        }
        for arm in Arm::ALL {
            self.cmd_synthesize(arm, seed_filter)?;
        }
        self.cmd_evaluate()?;
        self.cmd_report()?;
        Ok(())
    }
}

fn stage_err_topology(stage: &str, method: Method, error: evalkit::TopologyError) -> PipelineError {
    PipelineError::Stage {
        stage: stage.to_string(),
        message: format!("{method}: {error}"),
    }
}

//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line. Oracles here are independent re-derivations (naive
//! double loops, Jacobi eigensolve on Gram/covariance matrices, a second
//! transcription of the mock embedding definition) — they never call the
//! implementation paths they check.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use argos::config::RunConfig;
use argos::corpus;
use argos::embedding::{Embedder, EmbeddingVector, MockEmbedding};
use argos::evalkit::{self, EmbeddingSet};
use argos::fsrsynth::{self, ConstraintContext};
use argos::grounding::{self, AliasTable, ExtractionMode, SemanticUnit, UnitSource};
use argos::hazardgen::{self, HazardParseError, HazardScenario, Method};
use argos::llm::{generate, GenParams, MockBackend};
use argos::util::HashStream;

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/demo")
}

fn demo_embedder() -> Embedder {
    Embedder::new(Box::new(MockEmbedding::new("mock-embed", 64)))
}

fn demo_aliases() -> AliasTable {
    AliasTable::new(vec![
        ("deliver".into(), "T01".into()),
        ("carry".into(), "T01".into()),
        ("away".into(), "S01".into()),
    ])
}

// ---------------------------------------------------------------------------
// Criterion 1: mock end-to-end determinism
// ---------------------------------------------------------------------------

fn run_all_into(run_dir: &Path) -> std::time::Duration {
    let demo = demo_dir();
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_argos"))
        .args([
            "run-all",
            "--mock",
            "--k_max",
            "2",
            "--grounding.aliases",
            "deliver=T01,carry=T01,away=S01",
        ])
        .arg("--corpus.rules")
        .arg(demo.join("rules.jsonl"))
        .arg("--corpus.seeds")
        .arg(demo.join("seeds.jsonl"))
        .arg("--corpus.clauses")
        .arg(demo.join("clauses.jsonl"))
        .arg("--corpus.robot_spec")
        .arg(demo.join("robot_spec.jsonl"))
        .arg("--run-dir")
        .arg(run_dir)
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    assert!(
        output.status.success(),
        "run-all failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    elapsed
}

fn dir_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|entry| entry.unwrap().file_name().to_string_lossy().to_string())
        .collect();
    names.sort();
    names
}

#[test]
fn criterion_1_mock_end_to_end_determinism() {
    let temp = tempfile::tempdir().unwrap();
    let dir_a = temp.path().join("a");
    let dir_b = temp.path().join("b");
    let first = run_all_into(&dir_a);
    let second = run_all_into(&dir_b);
    assert!(first.as_secs_f64() < 10.0, "first run took {first:?}");
    assert!(second.as_secs_f64() < 10.0, "second run took {second:?}");

    // Every stage file must match byte for byte across the two processes.
    // The manifest snapshots the configured run_dir, so it is compared on
    // the in-place rerun below instead.
    let names = dir_files(&dir_a);
    assert_eq!(names, dir_files(&dir_b));
    let mut compared = 0;
    for name in &names {
        if name == "manifest.json" {
            continue;
        }
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "stage file {name} differs between processes");
        compared += 1;
    }
    assert!(
        compared >= 20,
        "expected the full stage-file set, saw {compared}"
    );

    // In-place rerun: byte-identical including the manifest.
    let manifest_before = std::fs::read(dir_a.join("manifest.json")).unwrap();
    run_all_into(&dir_a);
    assert_eq!(
        manifest_before,
        std::fs::read(dir_a.join("manifest.json")).unwrap()
    );

    // Manifest record counts equal record-file line counts.
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir_a.join("manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_object().unwrap();
    assert!(
        stages.len() >= 10,
        "expected all stages recorded, saw {}",
        stages.len()
    );
    let mut counted_files = 0;
    for (stage, entry) in stages {
        for (file, count) in entry["files"].as_object().unwrap() {
            let raw = std::fs::read_to_string(dir_a.join(file)).unwrap();
            let lines = if file.ends_with(".csv") {
                raw.lines().count().saturating_sub(1) // header
            } else {
                raw.lines().count()
            };
            assert_eq!(
                lines,
                count.as_u64().unwrap() as usize,
                "stage {stage} file {file} count mismatch"
            );
            counted_files += 1;
        }
    }
    assert!(counted_files >= 10);
    println!("[PASS] criterion 1: mock run-all is deterministic across processes (< 10 s)");
}

// ---------------------------------------------------------------------------
// Criterion 2: enumeration oracle
// ---------------------------------------------------------------------------

fn attr_match(rule_id: &str) -> grounding::AttributeMatch {
    grounding::AttributeMatch {
        unit: SemanticUnit {
            text: "u".into(),
            source: UnitSource::Lexicon,
        },
        rule_id: rule_id.to_string(),
        similarity: 0.9,
    }
}

#[test]
fn criterion_2_enumeration_matches_power_set_oracle() {
    for n in 0..=8usize {
        let ids: Vec<String> = (0..n).map(|i| format!("E{i:02}")).collect();
        for k_max in 1..=3usize {
            // Oracle: filter the full power set by size.
            let mut expected: Vec<Vec<String>> = Vec::new();
            for mask in 1u32..(1 << n) {
                let size = mask.count_ones() as usize;
                if size > k_max {
                    continue;
                }
                let subset: Vec<String> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| ids[i].clone())
                    .collect();
                expected.push(subset);
            }
            expected.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

            let matches: Vec<_> = ids.iter().map(|id| attr_match(id)).collect();
            let combos = hazardgen::enumerate_combinations(&matches, "S", k_max);
            let got: Vec<Vec<String>> = combos.into_iter().map(|c| c.rule_ids).collect();
            assert_eq!(got.len(), expected.len(), "count for n={n} k_max={k_max}");
            assert_eq!(got, expected, "exact set and order for n={n} k_max={k_max}");
        }
    }
    println!("[PASS] criterion 2: enumeration equals power-set filtering for n <= 8, k_max <= 3");
}

// ---------------------------------------------------------------------------
// Criterion 3: retrieval thresholding against precomputed mock cosines
// ---------------------------------------------------------------------------

/// Independent transcription of the documented mock embedding definition.
fn oracle_mock_embed(text: &str, dims: usize) -> Vec<f64> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    assert!(!tokens.is_empty(), "oracle embeds non-empty content only");
    let mut values = vec![0.0f64; dims];
    for token in tokens {
        for (i, slot) in values.iter_mut().enumerate() {
            let mut hash: u64 = 0xcbf29ce484222325;
            for byte in format!("{token}:{i}").bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x100000001b3);
            }
            *slot += (hash as f64 / u64::MAX as f64) * 2.0 - 1.0;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.into_iter().map(|v| v / norm).collect()
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn criterion_3_retrieval_thresholding_and_monotonicity() {
    let rules = corpus::load_rules(&demo_dir().join("rules.jsonl")).unwrap();
    let units = vec![
        SemanticUnit {
            text: "Deliver".into(),
            source: UnitSource::Lexicon,
        },
        SemanticUnit {
            text: "child".into(),
            source: UnitSource::Lexicon,
        },
    ];
    let embedder = demo_embedder();

    // Precompute the expected over-threshold sets with the oracle.
    let expected_at = |tau: f64| -> BTreeSet<(String, String)> {
        let mut set = BTreeSet::new();
        for unit in &units {
            let uv = oracle_mock_embed(&unit.text, 64);
            for rule in rules.iter() {
                let rv = oracle_mock_embed(&rule.embedding_text(), 64);
                if oracle_cosine(&uv, &rv) > tau {
                    set.insert((unit.text.clone(), rule.id.clone()));
                }
            }
        }
        set
    };

    let expected = expected_at(0.7);
    let total_pairs = units.len() * rules.len();
    assert!(
        !expected.is_empty() && expected.len() < total_pairs,
        "fixture is discriminative"
    );

    let matches = grounding::match_attributes(&units, &rules, &embedder, 0.7).unwrap();
    let got: BTreeSet<(String, String)> = matches
        .iter()
        .map(|m| (m.unit.text.clone(), m.rule_id.clone()))
        .collect();
    assert_eq!(got, expected, "tau = 0.7 over-threshold set");
    for m in &matches {
        let uv = oracle_mock_embed(&m.unit.text, 64);
        let rv = oracle_mock_embed(&rules.get(&m.rule_id).unwrap().embedding_text(), 64);
        assert!((m.similarity - oracle_cosine(&uv, &rv)).abs() < 1e-12);
    }

    // Subset chain across tau = 0.5, 0.7, 0.9 for both oracle and impl.
    let mut previous: Option<BTreeSet<(String, String)>> = None;
    for tau in [0.5, 0.7, 0.9] {
        let at_tau: BTreeSet<(String, String)> =
            grounding::match_attributes(&units, &rules, &embedder, tau)
                .unwrap()
                .iter()
                .map(|m| (m.unit.text.clone(), m.rule_id.clone()))
                .collect();
        assert_eq!(at_tau, expected_at(tau));
        if let Some(prev) = &previous {
            assert!(at_tau.is_subset(prev), "raising tau added a match at {tau}");
        }
        previous = Some(at_tau);
    }
    println!(
        "[PASS] criterion 3: threshold retrieval matches precomputed mock cosines; monotone in tau"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: topology oracle equivalence
// ---------------------------------------------------------------------------

#[allow(clippy::needless_range_loop)] // index form mirrors the matrix algebra
mod oracle {
    /// Cyclic Jacobi eigensolve for a symmetric matrix; returns
    /// (eigenvalues, eigenvectors as columns), unsorted.
    pub fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v = vec![vec![0.0; n]; n];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off.sqrt() < 1e-15 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vp = row[p];
                        let vq = row[q];
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[i][i]).collect(), v)
    }

    pub fn centroid(vs: &[Vec<f64>]) -> Vec<f64> {
        let d = vs[0].len();
        let mut out = vec![0.0; d];
        for v in vs {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= vs.len() as f64;
        }
        out
    }

    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn shift(set: &[Vec<f64>], anchor: &[Vec<f64>]) -> f64 {
        distance(&centroid(set), &centroid(anchor))
    }

    pub fn diversity(set: &[Vec<f64>]) -> f64 {
        let n = set.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += distance(&set[i], &set[j]);
            }
        }
        total * 2.0 / (n as f64 * (n - 1) as f64)
    }

    pub fn cse(set: &[Vec<f64>], anchor: &[Vec<f64>], eps: f64) -> Option<f64> {
        let s = shift(set, anchor);
        if s < eps {
            return None;
        }
        Some(diversity(set) / s)
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    pub fn directional_similarity(set: &[Vec<f64>], seed: &[f64]) -> f64 {
        let diffs: Vec<Vec<f64>> = set
            .iter()
            .map(|v| v.iter().zip(seed).map(|(x, s)| x - s).collect::<Vec<f64>>())
            .filter(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt() > 0.0)
            .collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..diffs.len() {
            for j in i + 1..diffs.len() {
                total += cosine(&diffs[i], &diffs[j]);
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    fn centered(set: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mean = centroid(set);
        set.iter()
            .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect()
    }

    /// Effective rank via eigenvalues of the n×n Gram matrix of the
    /// centered rows (singular values are their square roots). The sqrt
    /// lifts eigensolver noise on exact-zero eigenvalues to ~1e-8·σmax, so
    /// the zero floor sits at 1e-6; generic test data has no true singular
    /// value in that band.
    pub fn effective_rank(set: &[Vec<f64>]) -> f64 {
        let rows = centered(set);
        let n = rows.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                gram[i][j] = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            }
        }
        let (eigenvalues, _) = jacobi(gram);
        let mut sigmas: Vec<f64> = eigenvalues.into_iter().map(|l| l.max(0.0).sqrt()).collect();
        let max = sigmas.iter().cloned().fold(0.0f64, f64::max);
        sigmas.retain(|&s| s > 1e-6 * max);
        let total: f64 = sigmas.iter().sum();
        sigmas
            .iter()
            .map(|&s| {
                let p = s / total;
                -p * p.ln()
            })
            .sum::<f64>()
            .exp()
    }

    pub fn aligned_variance(sets: &[&[Vec<f64>]], target: &[Vec<f64>], p: usize) -> f64 {
        let pooled: Vec<Vec<f64>> = sets.iter().flat_map(|s| s.iter().cloned()).collect();
        let d = pooled[0].len();
        let rows = centered(&pooled);
        let mut covariance = vec![vec![0.0; d]; d];
        for row in &rows {
            for i in 0..d {
                for j in 0..d {
                    covariance[i][j] += row[i] * row[j];
                }
            }
        }
        for row in covariance.iter_mut() {
            for value in row.iter_mut() {
                *value /= (pooled.len() - 1) as f64;
            }
        }
        let (eigenvalues, eigenvectors) = jacobi(covariance);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
        let max = eigenvalues[order[0]].max(0.0);
        if max <= 0.0 {
            return 0.0;
        }
        let rank = order
            .iter()
            .filter(|&&i| eigenvalues[i].max(0.0) > 1e-12 * max)
            .count();
        let q = p.min(rank);
        if q == 0 || target.len() < 2 {
            return 0.0;
        }
        let target_rows = centered(target);
        let mut sum = 0.0;
        for &col in order.iter().take(q) {
            let direction: Vec<f64> = (0..d).map(|r| eigenvectors[r][col]).collect();
            let variance: f64 = target_rows
                .iter()
                .map(|row| {
                    let projection: f64 = row.iter().zip(&direction).map(|(a, b)| a * b).sum();
                    projection * projection
                })
                .sum::<f64>()
                / (target.len() - 1) as f64;
            sum += variance;
        }
        sum / q as f64
    }
}

fn random_set(stream: &mut HashStream, n: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dims)
                .map(|_| (stream.next_u64() as f64 / u64::MAX as f64) * 2.0 - 1.0)
                .collect()
        })
        .collect()
}

fn to_set(label: &str, raw: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::new(
        label,
        raw.iter()
            .map(|v| EmbeddingVector::new(v.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_4_topology_metrics_match_independent_oracles() {
    let mut stream = HashStream::new(0x4152474f53);
    for case in 0..100 {
        let dims = 2 + (stream.next_u64() % 7) as usize; // 2..=8
        let n = 2 + (stream.next_u64() % 9) as usize; // 2..=10
        let m = 2 + (stream.next_u64() % 9) as usize;
        let raw_set = random_set(&mut stream, n, dims);
        let raw_anchor = random_set(&mut stream, m, dims);
        let raw_seed: Vec<f64> = random_set(&mut stream, 1, dims).pop().unwrap();
        let p = 1 + (stream.next_u64() % 32) as usize;

        let set = to_set("set", &raw_set);
        let anchor = to_set("anchor", &raw_anchor);
        let seed = EmbeddingVector::new(raw_seed.clone()).unwrap();

        let tolerance = 1e-9;
        let er = evalkit::effective_rank(&set).unwrap();
        assert!(
            (er - oracle::effective_rank(&raw_set)).abs() < tolerance,
            "eff_rank case {case}"
        );

        let sh = evalkit::centroid_shift(&set, &anchor).unwrap();
        assert!(
            (sh - oracle::shift(&raw_set, &raw_anchor)).abs() < tolerance,
            "shift case {case}"
        );

        let dv = evalkit::diversity(&set).unwrap();
        assert!(
            (dv - oracle::diversity(&raw_set)).abs() < tolerance,
            "diversity case {case}"
        );

        let cs = evalkit::cse(&set, &anchor, 1e-6).unwrap();
        let cs_oracle = oracle::cse(&raw_set, &raw_anchor, 1e-6);
        match (cs, cs_oracle) {
            (Some(a), Some(b)) => assert!((a - b).abs() < tolerance, "cse case {case}"),
            (a, b) => assert_eq!(a.is_none(), b.is_none(), "cse definedness case {case}"),
        }

        let ds = evalkit::directional_similarity(&set, &seed).unwrap();
        assert!(
            (ds - oracle::directional_similarity(&raw_set, &raw_seed)).abs() < tolerance,
            "dir_sim case {case}"
        );

        let sets = vec![set.clone(), anchor.clone()];
        let av = evalkit::aligned_variance(&sets, "set", p).unwrap();
        let av_oracle = oracle::aligned_variance(&[&raw_set, &raw_anchor], &raw_set, p);
        assert!(
            (av - av_oracle).abs() < tolerance,
            "aligned_var case {case}: {av} vs {av_oracle}"
        );
    }

    // Analytic anchors.
    let axes: Vec<Vec<f64>> = (0..4)
        .flat_map(|i| {
            let mut plus = vec![0.0; 4];
            plus[i] = 1.0;
            let mut minus = vec![0.0; 4];
            minus[i] = -1.0;
            [plus, minus]
        })
        .collect();
    let equal_spectrum = to_set("axes", &axes);
    assert!((evalkit::effective_rank(&equal_spectrum).unwrap() - 4.0).abs() < 1e-9);

    let at_origin = to_set("o", &[vec![0.0, 0.0]]);
    let at_3_4 = to_set("p", &[vec![3.0, 4.0]]);
    assert_eq!(evalkit::centroid_shift(&at_origin, &at_3_4).unwrap(), 5.0);

    let antipodal = to_set("a", &[vec![1.0, 0.0], vec![-1.0, 0.0]]);
    let origin = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
    assert!((evalkit::directional_similarity(&antipodal, &origin).unwrap() + 1.0).abs() < 1e-12);

    let near = to_set("n", &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let near_anchor = to_set("m", &[vec![1.0 + 1e-9, 0.0], vec![0.0, 1.0 - 1e-9]]);
    assert_eq!(
        evalkit::cse(&near, &near_anchor, 1e-6).unwrap(),
        None,
        "shift below epsilon"
    );

    println!("[PASS] criterion 4: topology metrics agree with naive oracles within 1e-9 (100 random sets)");
}

// ---------------------------------------------------------------------------
// Criterion 5: parser closure over mock transcripts
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_parsers_accept_all_mock_transcripts_and_name_rejections() {
    let demo = demo_dir();
    let rules = corpus::load_rules(&demo.join("rules.jsonl")).unwrap();
    let seeds = corpus::load_seeds(&demo.join("seeds.jsonl")).unwrap();
    let clauses = corpus::load_clauses(&demo.join("clauses.jsonl")).unwrap();
    let robot_spec = corpus::load_robot_spec(&demo.join("robot_spec.jsonl")).unwrap();
    let embedder = demo_embedder();
    let backend = MockBackend::new("mock-llm");
    let params = GenParams::default();
    let aliases = demo_aliases();

    let mut hazard_transcripts = 0;
    let mut fsr_transcripts = 0;
    let mut judge_transcripts = 0;

    for seed in &seeds {
        let units = grounding::extract_units(seed, ExtractionMode::Lexicon, &rules, &aliases, None)
            .unwrap();
        let matches = grounding::match_attributes(&units, &rules, &embedder, 0.7).unwrap();
        let mut per_seed_ours: Vec<HazardScenario> = Vec::new();
        for combo in hazardgen::enumerate_combinations(&matches, &seed.id, 2) {
            let prompt = hazardgen::build_prompt_ours(seed, &combo, &rules, &robot_spec).unwrap();
            let raw = generate(&backend, &prompt, &params).unwrap();
            let (description, mechanism) = hazardgen::parse_hazard(&raw, Method::Ours)
                .unwrap_or_else(|e| panic!("mock transcript rejected: {e}"));
            hazard_transcripts += 1;
            per_seed_ours.push(HazardScenario {
                id: hazardgen::hazard_id(&seed.id, Method::Ours, &combo.rule_ids),
                seed_id: seed.id.clone(),
                method: Method::Ours,
                rule_ids: combo.rule_ids.clone(),
                description,
                mechanism,
                backend_model: "mock-llm".into(),
                prompt_sha256: String::new(),
                raw_output: raw,
            });
        }
        assert!(
            !per_seed_ours.is_empty(),
            "demo seed {} grounds at tau 0.7",
            seed.id
        );

        let mut baseline = |method: Method, prompt: String| -> HazardScenario {
            let raw = generate(&backend, &prompt, &params).unwrap();
            let (description, mechanism) = hazardgen::parse_hazard(&raw, method).unwrap();
            hazard_transcripts += 1;
            HazardScenario {
                id: hazardgen::hazard_id(&seed.id, method, &[]),
                seed_id: seed.id.clone(),
                method,
                rule_ids: vec![],
                description,
                mechanism,
                backend_model: "mock-llm".into(),
                prompt_sha256: String::new(),
                raw_output: raw,
            }
        };
        let vanilla = baseline(
            Method::Vanilla,
            hazardgen::build_prompt_vanilla(seed, &robot_spec),
        );
        let cot = baseline(Method::Cot, hazardgen::build_prompt_cot(seed, &robot_spec));

        // Synthesis transcripts, with retrieval on and off.
        let mut audit_records = Vec::new();
        for hazard in per_seed_ours.iter().take(2) {
            let hits = fsrsynth::retrieve_clauses(hazard, &clauses, &embedder, 0.7).unwrap();
            for context in [
                ConstraintContext {
                    hazard_id: hazard.id.clone(),
                    clauses: hits.clone(),
                    robot_spec_ref: "robot-spec".into(),
                },
                ConstraintContext::empty(&hazard.id),
            ] {
                let (records, _warnings) =
                    fsrsynth::synthesize(&backend, &params, hazard, &context, &robot_spec)
                        .unwrap_or_else(|e| panic!("mock synthesis rejected: {e}"));
                fsr_transcripts += 1;
                assert!(records
                    .iter()
                    .all(|r| r.requirement.to_lowercase().contains("shall")));
                audit_records.extend(records);
            }
        }

        // Judge transcripts.
        let ours_refs: Vec<&HazardScenario> = per_seed_ours.iter().collect();
        let prompt = evalkit::build_scenario_judge_prompt(
            seed,
            &ours_refs,
            &[&vanilla],
            &[&cot],
            &robot_spec,
        );
        let raw = generate(&backend, &prompt, &params).unwrap();
        let ids: Vec<String> = per_seed_ours.iter().map(|h| h.id.clone()).collect();
        let results =
            evalkit::parse_scenario_judgment(&raw, &ids, std::slice::from_ref(&vanilla.id), std::slice::from_ref(&cot.id))
                .unwrap_or_else(|e| panic!("mock judgment rejected: {e}"));
        assert_eq!(results.len(), per_seed_ours.len() + 2);
        judge_transcripts += 1;

        let record_refs: Vec<&fsrsynth::FSRecord> = audit_records.iter().collect();
        let prompt = evalkit::build_fsr_audit_prompt(seed, &record_refs, &robot_spec);
        let raw = generate(&backend, &prompt, &params).unwrap();
        evalkit::parse_fsr_audit(&raw, &format!("full:{}", seed.id))
            .unwrap_or_else(|e| panic!("mock audit rejected: {e}"));
        judge_transcripts += 1;
    }
    assert!(hazard_transcripts >= 20 && fsr_transcripts >= 12 && judge_transcripts == 6);

    // Documented malformation classes, each with its named error.
    assert!(matches!(
        hazardgen::parse_hazard("only one line", Method::Vanilla),
        Err(HazardParseError::WrongLineCount(1))
    ));
    assert!(matches!(
        hazardgen::parse_hazard("", Method::Ours),
        Err(HazardParseError::EmptyResponse)
    ));
    assert!(matches!(
        hazardgen::parse_hazard("desc\nmechanismless second line", Method::Ours),
        Err(HazardParseError::MissingMechanismPrefix)
    ));
    assert!(matches!(
        fsrsynth::parse_fsr("TITLE: t\nTRIGGER: x\nEXIT: y\n", "H", &[], "00"),
        Err(fsrsynth::FsrError::FsrParseError(_))
    ));
    assert!(matches!(
        evalkit::parse_scenario_judgment(
            "[Method A Scenario Evaluation]\nPhysical Reliability: eight pts, Long-tail Risk: 7 pts, Safety Requirements: 9 pts\n[Method B Scenario Evaluation]\n[Method C Scenario Evaluation]\n",
            &["a".into()],
            &[],
            &[],
        ),
        Err(evalkit::JudgeError::JudgeParseError(_))
    ));
    assert!(matches!(
        evalkit::parse_scenario_judgment(
            "[Method A Scenario Evaluation]\nPhysical Reliability: 11 pts, Long-tail Risk: 7 pts, Safety Requirements: 9 pts\n[Method B Scenario Evaluation]\n[Method C Scenario Evaluation]\n",
            &["a".into()],
            &[],
            &[],
        ),
        Err(evalkit::JudgeError::ScoreOutOfRange(11))
    ));
    assert!(matches!(
        evalkit::parse_fsr_audit(" **Capability Compliance (CC)** | 9/10 | x\n **Scenario Risk Coverage (PRC)** | 7/10 | y\n", "t"),
        Err(evalkit::JudgeError::MissingMetric(m)) if m == "LRC"
    ));
    println!("[PASS] criterion 5: parsers accept 100% of mock transcripts and name each rejection");
}

// ---------------------------------------------------------------------------
// Criterion 6: template fidelity (golden files + anchors)
// ---------------------------------------------------------------------------

fn golden_compare(name: &str, rendered: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var("UPDATE_GOLDENS").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden {name}; run with UPDATE_GOLDENS=1"));
    assert_eq!(rendered, expected, "golden mismatch for {name}");
}

#[test]
fn criterion_6_template_fidelity_against_goldens() {
    let demo = demo_dir();
    let rules = corpus::load_rules(&demo.join("rules.jsonl")).unwrap();
    let seeds = corpus::load_seeds(&demo.join("seeds.jsonl")).unwrap();
    let robot_spec = corpus::load_robot_spec(&demo.join("robot_spec.jsonl")).unwrap();
    let seed = &seeds[0];

    let combo = |ids: &[&str]| hazardgen::FactorCombination {
        seed_id: seed.id.clone(),
        rule_ids: ids.iter().map(|s| s.to_string()).collect(),
    };
    let ours_k1 =
        hazardgen::build_prompt_ours(seed, &combo(&["U02"]), &rules, &robot_spec).unwrap();
    let ours_k2 =
        hazardgen::build_prompt_ours(seed, &combo(&["T01", "U02"]), &rules, &robot_spec).unwrap();
    let ours_k3 =
        hazardgen::build_prompt_ours(seed, &combo(&["E03", "T01", "U02"]), &rules, &robot_spec)
            .unwrap();
    let vanilla = hazardgen::build_prompt_vanilla(seed, &robot_spec);
    let cot = hazardgen::build_prompt_cot(seed, &robot_spec);

    let hazard = HazardScenario {
        id: format!("{}:ours:T01+U02", seed.id),
        seed_id: seed.id.clone(),
        method: Method::Ours,
        rule_ids: vec!["T01".into(), "U02".into()],
        description: "The robot carries the soup toward the table as the child darts across its path inside the blind zone.".into(),
        mechanism: "the emergency stop sheds the load because braking and grip limits overlap.".into(),
        backend_model: "mock-llm".into(),
        prompt_sha256: "00".into(),
        raw_output: String::new(),
    };
    let clauses = corpus::load_clauses(&demo.join("clauses.jsonl")).unwrap();
    let context = ConstraintContext {
        hazard_id: hazard.id.clone(),
        clauses: vec![(clauses[0].clone(), 0.91), (clauses[1].clone(), 0.82)],
        robot_spec_ref: "robot-spec".into(),
    };
    let synthesis = fsrsynth::build_synthesis_prompt(&hazard, &context, &robot_spec);
    let synthesis_empty = fsrsynth::build_synthesis_prompt(
        &hazard,
        &ConstraintContext::empty(&hazard.id),
        &robot_spec,
    );

    let baseline_hazard = |method: Method| HazardScenario {
        id: hazardgen::hazard_id(&seed.id, method, &[]),
        seed_id: seed.id.clone(),
        method,
        rule_ids: vec![],
        description: "The robot crosses the dining room with the bowl held level.".into(),
        mechanism: "an unnoticed obstacle forces a hard stop that sloshes the load.".into(),
        backend_model: "mock-llm".into(),
        prompt_sha256: "00".into(),
        raw_output: String::new(),
    };
    let vanilla_h = baseline_hazard(Method::Vanilla);
    let cot_h = baseline_hazard(Method::Cot);
    let judge = evalkit::build_scenario_judge_prompt(
        seed,
        &[&hazard],
        &[&vanilla_h],
        &[&cot_h],
        &robot_spec,
    );

    let record = fsrsynth::FSRecord {
        id: format!("{}#F1", hazard.id),
        hazard_id: hazard.id.clone(),
        title: "Constrained deceleration while carrying thermal loads".into(),
        requirement: "When a thermal hazard is carried and a person is within the protective envelope, the Mobility System shall limit deceleration to the configured safe bound.".into(),
        trigger: "thermal load held and person inside protective envelope".into(),
        exit: "separation restored for two consecutive frames".into(),
        cited_clause_ids: vec![clauses[0].id.clone()],
        prompt_sha256: "00".into(),
        raw_output: String::new(),
    };
    let audit = evalkit::build_fsr_audit_prompt(seed, &[&record], &robot_spec);

    // Anchors demanded of the rendered prompts, verbatim.
    for prompt in [&ours_k1, &ours_k2, &ours_k3] {
        assert!(prompt.contains("EXACTLY TWO LINES"));
        assert!(prompt.contains("Hazard mechanism:"));
        assert!(prompt.contains("STRICT CLOSED WORLD"));
    }
    assert!(vanilla.contains("STRICT CLOSED WORLD"));
    assert!(vanilla.contains("Hazard mechanism:"));
    assert!(cot.contains("[REASONING INSTRUCTIONS]"));
    assert!(cot.contains("[ANALYSIS]"));
    assert!(audit.contains("Principal Functional Safety Auditor"));
    assert!(judge.contains("Physical Reliability: X pts"));
    assert!(synthesis.contains("counterfactual") && synthesis_empty.contains("counterfactual"));
    assert!(synthesis_empty.contains("No regulatory clauses retrieved"));

    golden_compare("prompt_ours_k1.txt", &ours_k1);
    golden_compare("prompt_ours_k2.txt", &ours_k2);
    golden_compare("prompt_ours_k3.txt", &ours_k3);
    golden_compare("prompt_vanilla.txt", &vanilla);
    golden_compare("prompt_cot.txt", &cot);
    golden_compare("prompt_synthesis.txt", &synthesis);
    golden_compare("prompt_synthesis_no_clauses.txt", &synthesis_empty);
    golden_compare("prompt_judge_scenario.txt", &judge);
    golden_compare("prompt_fsr_audit.txt", &audit);
    println!("[PASS] criterion 6: rendered prompts match goldens and carry the required anchors");
}

// ---------------------------------------------------------------------------
// Criterion 7: default-constant conformance
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_default_constants() {
    let config = RunConfig::default();
    assert_eq!(config.thresholds.tau_attr, 0.7);
    assert_eq!(config.thresholds.tau_reg, 0.7);
    assert_eq!(config.thresholds.eps_shift, 1e-6);
    assert_eq!(config.k_max, 3);
    println!("[PASS] criterion 7: tau_attr = 0.7 and k_max = 3 from a default-constructed config");
}

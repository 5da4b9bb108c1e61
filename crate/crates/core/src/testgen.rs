//! Twin-test construction: question selection, distractor/guide pairing,
//! truncation-grid expansion, and contains-answer tagging.
//!
//! Everything here is a pure transformation over loaded stores. All sampling
//! routes through per-item RNGs derived from (run seed, stable keys), so item
//! files are byte-identical across reruns regardless of iteration order.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    content_id, Question, QuestionSet, SteerSpec, SteeredItem, TestKind, Trajectory, TrajectoryRef,
    TrajectoryVerdict,
};
use crate::segmenter::{first_paragraph, splice, SegmentError, Segmenter};
use crate::verifier;

#[derive(Debug, Error)]
pub enum TestGenError {
    #[error("eligible pool has {found} questions, {needed} required")]
    InsufficientPool { found: usize, needed: usize },
    #[error("question {0} has no correct solo trajectory to truncate")]
    NoCorrectOg(String),
    #[error("no usable distractor for question {0}: only same-question or answer-equivalent steers available")]
    DistractorCollision(String),
    #[error("distractor store is empty")]
    EmptyDistractorPool,
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

/// Per-question solo statistics for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoloProfile {
    pub question_id: String,
    pub model: String,
    pub solve_count: u32,
    pub k: u32,
    pub trajectories: Vec<TrajectoryRef>,
}

/// Truncation grids and pool sizes for item construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub m_grid: Vec<f64>,
    pub n_default: f64,
    pub n_grid: Vec<f64>,
    pub og_count: usize,
    pub steer_count: usize,
    pub preserve_first_paragraph: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            n_default: 0.2,
            n_grid: vec![0.2, 0.4, 0.6, 0.8],
            og_count: 200,
            steer_count: 50,
            preserve_first_paragraph: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), TestGenError> {
        let ok = |f: &f64| (0.0..=1.0).contains(f);
        if !self.m_grid.iter().all(ok)
            || !ok(&self.n_default)
            || !self.n_grid.iter().all(ok)
            || self.og_count == 0
            || self.steer_count == 0
        {
            return Err(TestGenError::InsufficientPool { found: 0, needed: 1 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Shared,
    Individual,
}

/// How the individual subset is drawn. The uniform strategy samples over
/// fully-solved questions; the stratified strategy samples over questions
/// with at least one solve, weighted by inverse solve rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    UniformFullySolved,
    InverseSolveRate,
}

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Weighted sampling without replacement (exponential-key method): draw a key
/// per candidate in a fixed order, keep the `count` largest.
fn weighted_sample<'a>(
    candidates: &[(&'a Question, f64)],
    count: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<&'a Question> {
    let mut keyed: Vec<(f64, &Question)> = candidates
        .iter()
        .map(|(q, w)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.powf(1.0 / w), *q)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.id.cmp(&b.1.id)));
    keyed.truncate(count);
    // Restore pool order for the emitted set.
    let chosen: BTreeSet<&str> = keyed.iter().map(|(_, q)| q.id.as_str()).collect();
    candidates.iter().map(|(q, _)| *q).filter(|q| chosen.contains(q.id.as_str())).collect()
}

/// Select the recoverability question subset.
///
/// Shared mode keeps questions every profiled model fully solves; individual
/// mode keeps questions by the strategy above and then samples down to
/// `target_count` deterministically.
pub fn select_recoverability_questions(
    pool: &QuestionSet,
    profiles: &BTreeMap<String, Vec<SoloProfile>>,
    target_model: &str,
    mode: SelectionMode,
    strategy: SelectionStrategy,
    target_count: Option<usize>,
    seed: u64,
) -> Result<QuestionSet, TestGenError> {
    let by_model: BTreeMap<&str, BTreeMap<&str, &SoloProfile>> = profiles
        .iter()
        .map(|(model, ps)| {
            (model.as_str(), ps.iter().map(|p| (p.question_id.as_str(), p)).collect())
        })
        .collect();
    let eligible: Vec<(&Question, f64)> = pool
        .questions
        .iter()
        .filter_map(|q| match mode {
            SelectionMode::Shared => {
                let all_solved = !by_model.is_empty()
                    && by_model.values().all(|m| {
                        m.get(q.id.as_str()).is_some_and(|p| p.solve_count == p.k)
                    });
                all_solved.then_some((q, 1.0))
            }
            SelectionMode::Individual => {
                let profile = by_model.get(target_model)?.get(q.id.as_str())?;
                match strategy {
                    SelectionStrategy::UniformFullySolved => {
                        (profile.solve_count == profile.k).then_some((q, 1.0))
                    }
                    SelectionStrategy::InverseSolveRate => (profile.solve_count >= 1)
                        .then_some((q, profile.k as f64 / profile.solve_count as f64)),
                }
            }
        })
        .collect();
    let needed = target_count.unwrap_or(eligible.len());
    if eligible.len() < needed {
        return Err(TestGenError::InsufficientPool { found: eligible.len(), needed });
    }
    let selected = if needed == eligible.len() {
        eligible.iter().map(|(q, _)| *q).collect::<Vec<_>>()
    } else {
        let mut rng = rng_for(seed, &["select_recoverability", target_model]);
        weighted_sample(&eligible, needed, &mut rng)
    };
    Ok(QuestionSet {
        name: format!("{}-recoverability", pool.name),
        questions: selected.into_iter().cloned().collect(),
    })
}

/// Questions the model almost never solves alone: solve rate 0 or 1 out of k.
pub fn select_guidability_questions(pool: &QuestionSet, profiles: &[SoloProfile]) -> QuestionSet {
    let eligible: BTreeSet<&str> = profiles
        .iter()
        .filter(|p| p.solve_count <= 1)
        .map(|p| p.question_id.as_str())
        .collect();
    QuestionSet {
        name: format!("{}-guidability", pool.name),
        questions: pool
            .questions
            .iter()
            .filter(|q| eligible.contains(q.id.as_str()))
            .cloned()
            .collect(),
    }
}

/// True iff any boxed expression or extractable candidate in the steer prefix
/// is equivalent to the gold answer. Uses the same equivalence engine as
/// scoring so the contains-answer decomposition stays internally consistent.
pub fn steer_contains_answer(steer_prefix: &str, gold: &str) -> bool {
    let mut candidates = verifier::boxed_candidates(steer_prefix);
    if let Some(extracted) = verifier::extract_answer(steer_prefix) {
        candidates.push(extracted);
    }
    candidates.iter().any(|c| verifier::normalize_equal(c, gold))
}

/// A skipped (question, guide) pairing, kept for support statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub question_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guide: Option<String>,
    pub reason: String,
}

/// Per-guide support statistics for guidability runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GuideSupport {
    pub problems: usize,
    pub trajectories: usize,
}

/// Generation report: item counts per cell plus individually logged skips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub kind: String,
    pub questions: usize,
    pub items_emitted: usize,
    pub per_cell_counts: BTreeMap<String, usize>,
    pub skipped: Vec<SkipRecord>,
    #[serde(default)]
    pub distractor_pool: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub guide_support: BTreeMap<String, GuideSupport>,
}

fn correct_trajectory<'a>(store: &'a [Trajectory], question_id: &str) -> Option<&'a Trajectory> {
    store
        .iter()
        .filter(|t| t.question_id == question_id && t.verdict == TrajectoryVerdict::CORRECT)
        .min_by_key(|t| t.sample_index)
}

/// Deterministic distractor pool: trajectories sorted by (question, sample),
/// shuffled with the run seed, preferring one trajectory per question before
/// reusing questions, truncated to the configured pool size.
fn build_distractor_pool(
    store: &[Trajectory],
    steer_count: usize,
    seed: u64,
) -> Result<Vec<&Trajectory>, TestGenError> {
    if store.is_empty() {
        return Err(TestGenError::EmptyDistractorPool);
    }
    let mut sorted: Vec<&Trajectory> = store.iter().collect();
    sorted.sort_by(|a, b| {
        a.question_id.cmp(&b.question_id).then_with(|| a.sample_index.cmp(&b.sample_index))
    });
    let mut rng = rng_for(seed, &["distractor_pool"]);
    for i in (1..sorted.len()).rev() {
        let j = rng.gen_range(0..=i);
        sorted.swap(i, j);
    }
    let mut pool: Vec<&Trajectory> = Vec::with_capacity(steer_count.min(sorted.len()));
    let mut seen = BTreeSet::new();
    for t in &sorted {
        if pool.len() == steer_count {
            break;
        }
        if seen.insert(t.question_id.as_str()) {
            pool.push(t);
        }
    }
    for t in &sorted {
        if pool.len() == steer_count {
            break;
        }
        if !pool.iter().any(|p| std::ptr::eq(*p, *t)) {
            pool.push(t);
        }
    }
    Ok(pool)
}

fn fraction_label(f: f64) -> String {
    format!("{f}")
}

/// Build recoverability items: for each (question, m) pick the og trajectory
/// and one distractor whose origin question and gold answer differ, truncate
/// both, and splice.
pub fn build_recoverability_items(
    questions: &QuestionSet,
    og_store: &[Trajectory],
    distractor_store: &[Trajectory],
    grid: &GridConfig,
    segmenter: &Segmenter,
    gold_lookup: &BTreeMap<String, String>,
    seed: u64,
) -> Result<(Vec<SteeredItem>, GenReport), TestGenError> {
    grid.validate()?;
    let pool = build_distractor_pool(distractor_store, grid.steer_count, seed)?;
    let mut items = Vec::with_capacity(questions.len() * grid.m_grid.len());
    let mut report = GenReport {
        kind: "recoverability".into(),
        questions: questions.len(),
        distractor_pool: pool.len(),
        ..GenReport::default()
    };
    for question in &questions.questions {
        let og = correct_trajectory(og_store, &question.id)
            .ok_or_else(|| TestGenError::NoCorrectOg(question.id.clone()))?;
        for &m in &grid.m_grid {
            let mut rng = rng_for(seed, &["recov_item", &question.id, &fraction_label(m)]);
            let mut order: Vec<usize> = (0..pool.len()).collect();
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let distractor = order
                .iter()
                .map(|&i| pool[i])
                .find(|d| {
                    d.question_id != question.id
                        && gold_lookup
                            .get(&d.question_id)
                            .map(|g| !verifier::normalize_equal(g, &question.gold_answer))
                            .unwrap_or(false)
                })
                .ok_or_else(|| TestGenError::DistractorCollision(question.id.clone()))?;
            let og_prefix = if grid.preserve_first_paragraph {
                let head = first_paragraph(&og.reasoning).to_string();
                let frac = segmenter.truncate_fraction(&og.reasoning, m)?;
                if frac.len() >= head.len() {
                    frac
                } else {
                    head
                }
            } else {
                segmenter.truncate_fraction(&og.reasoning, m)?
            };
            let steer_prefix = segmenter.truncate_fraction(&distractor.reasoning, grid.n_default)?;
            let prefix_text = splice(&og_prefix, &steer_prefix);
            let spec = SteerSpec {
                m_fraction: m,
                n_fraction: grid.n_default,
                preserve_first_paragraph: grid.preserve_first_paragraph,
            };
            let item_id = content_id(&[
                "recoverability",
                &question.id,
                &og.model,
                &og.sample_index.to_string(),
                &distractor.question_id,
                &distractor.sample_index.to_string(),
                &fraction_label(m),
                &fraction_label(grid.n_default),
                &grid.preserve_first_paragraph.to_string(),
            ]);
            *report.per_cell_counts.entry(format!("m={m}")).or_default() += 1;
            items.push(SteeredItem {
                item_id,
                kind: TestKind::RECOVERABILITY,
                question_id: question.id.clone(),
                og_source: Some(og.reference()),
                steer_source: distractor.reference(),
                steer_origin_question_id: distractor.question_id.clone(),
                spec,
                prefix_text,
                steer_contains_answer: steer_contains_answer(&steer_prefix, &question.gold_answer),
            });
        }
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    report.items_emitted = items.len();
    Ok((items, report))
}

/// Build guidability items: for each (question, guide, n) truncate the
/// guide's correct trajectory to the first n fraction; no og content at all.
pub fn build_guidability_items(
    questions: &QuestionSet,
    guide_stores: &BTreeMap<String, Vec<Trajectory>>,
    grid: &GridConfig,
    segmenter: &Segmenter,
    _seed: u64,
) -> Result<(Vec<SteeredItem>, GenReport), TestGenError> {
    grid.validate()?;
    let mut items = Vec::new();
    let mut report = GenReport {
        kind: "guidability".into(),
        questions: questions.len(),
        ..GenReport::default()
    };
    for question in &questions.questions {
        for (guide, store) in guide_stores {
            let Some(traj) = correct_trajectory(store, &question.id) else {
                report.skipped.push(SkipRecord {
                    question_id: question.id.clone(),
                    guide: Some(guide.clone()),
                    reason: "NO_CORRECT_GUIDE".into(),
                });
                continue;
            };
            let support = report.guide_support.entry(guide.clone()).or_default();
            support.problems += 1;
            support.trajectories += 1;
            for &n in &grid.n_grid {
                let steer_prefix = segmenter.truncate_fraction(&traj.reasoning, n)?;
                let item_id = content_id(&[
                    "guidability",
                    &question.id,
                    guide,
                    &traj.sample_index.to_string(),
                    &fraction_label(n),
                ]);
                *report
                    .per_cell_counts
                    .entry(format!("guide={guide},n={n}"))
                    .or_default() += 1;
                items.push(SteeredItem {
                    item_id,
                    kind: TestKind::GUIDABILITY,
                    question_id: question.id.clone(),
                    og_source: None,
                    steer_source: traj.reference(),
                    steer_origin_question_id: question.id.clone(),
                    spec: SteerSpec {
                        m_fraction: 0.0,
                        n_fraction: n,
                        preserve_first_paragraph: false,
                    },
                    prefix_text: steer_prefix.clone(),
                    steer_contains_answer: steer_contains_answer(
                        &steer_prefix,
                        &question.gold_answer,
                    ),
                });
            }
        }
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    report.items_emitted = items.len();
    Ok((items, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Benchmark;

    fn question(id: &str, gold: &str) -> Question {
        Question {
            id: id.into(),
            benchmark: Benchmark::CUSTOM,
            text: format!("compute {id}"),
            gold_answer: gold.into(),
        }
    }

    fn trajectory(qid: &str, model: &str, idx: u32, reasoning: &str, verdict: TrajectoryVerdict) -> Trajectory {
        Trajectory {
            question_id: qid.into(),
            model: model.into(),
            sample_index: idx,
            reasoning: reasoning.into(),
            answer: Some("x".into()),
            verdict,
        }
    }

    fn profile(model: &str, qid: &str, solves: u32, k: u32) -> SoloProfile {
        SoloProfile {
            question_id: qid.into(),
            model: model.into(),
            solve_count: solves,
            k,
            trajectories: vec![],
        }
    }

    fn pool3() -> QuestionSet {
        QuestionSet::new(
            "pool",
            vec![question("q1", "1"), question("q2", "2"), question("q3", "3")],
        )
        .unwrap()
    }

    #[test]
    fn shared_selection_requires_full_solve_by_all() {
        let pool = pool3();
        let mut profiles = BTreeMap::new();
        for model in ["m1", "m2", "m3"] {
            profiles.insert(
                model.to_string(),
                vec![
                    profile(model, "q1", 8, 8),
                    profile(model, "q2", if model == "m2" { 7 } else { 8 }, 8),
                    profile(model, "q3", 8, 8),
                ],
            );
        }
        let set = select_recoverability_questions(
            &pool,
            &profiles,
            "m1",
            SelectionMode::Shared,
            SelectionStrategy::UniformFullySolved,
            None,
            7,
        )
        .unwrap();
        let ids: Vec<&str> = set.questions.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, vec!["q1", "q3"]);
    }

    #[test]
    fn individual_selection_is_deterministic() {
        let pool = pool3();
        let mut profiles = BTreeMap::new();
        profiles.insert(
            "m1".to_string(),
            vec![profile("m1", "q1", 8, 8), profile("m1", "q2", 8, 8), profile("m1", "q3", 8, 8)],
        );
        let pick = |seed| {
            select_recoverability_questions(
                &pool,
                &profiles,
                "m1",
                SelectionMode::Individual,
                SelectionStrategy::UniformFullySolved,
                Some(2),
                seed,
            )
            .unwrap()
            .questions
            .iter()
            .map(|q| q.id.clone())
            .collect::<Vec<_>>()
        };
        assert_eq!(pick(7), pick(7));
        assert_eq!(pick(7).len(), 2);
    }

    #[test]
    fn insufficient_pool_is_reported_with_counts() {
        let pool = pool3();
        let mut profiles = BTreeMap::new();
        profiles.insert("m1".to_string(), vec![profile("m1", "q1", 8, 8)]);
        let err = select_recoverability_questions(
            &pool,
            &profiles,
            "m1",
            SelectionMode::Individual,
            SelectionStrategy::UniformFullySolved,
            Some(3),
            7,
        )
        .unwrap_err();
        assert!(matches!(err, TestGenError::InsufficientPool { found: 1, needed: 3 }));
    }

    #[test]
    fn inverse_solve_rate_admits_partially_solved() {
        let pool = pool3();
        let mut profiles = BTreeMap::new();
        profiles.insert(
            "m1".to_string(),
            vec![profile("m1", "q1", 1, 8), profile("m1", "q2", 0, 8), profile("m1", "q3", 8, 8)],
        );
        let set = select_recoverability_questions(
            &pool,
            &profiles,
            "m1",
            SelectionMode::Individual,
            SelectionStrategy::InverseSolveRate,
            None,
            7,
        )
        .unwrap();
        let ids: Vec<&str> = set.questions.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, vec!["q1", "q3"]);
    }

    #[test]
    fn guidability_selection_threshold() {
        let pool = pool3();
        let profiles = vec![
            profile("m1", "q1", 0, 8),
            profile("m1", "q2", 1, 8),
            profile("m1", "q3", 2, 8),
        ];
        let set = select_guidability_questions(&pool, &profiles);
        let ids: Vec<&str> = set.questions.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, vec!["q1", "q2"]);
    }

    #[test]
    fn contains_answer_detection() {
        assert!(steer_contains_answer("we get \\boxed{42} midway", "42"));
        assert!(steer_contains_answer("so \\boxed{0.5} it is", "1/2"));
        assert!(!steer_contains_answer("no candidate expressions here", "42"));
        assert!(steer_contains_answer("the answer is 42", "42"));
    }

    fn lookup(pool: &QuestionSet) -> BTreeMap<String, String> {
        pool.questions.iter().map(|q| (q.id.clone(), q.gold_answer.clone())).collect()
    }

    fn reasoning(words: usize, qid: &str) -> String {
        let mut text = format!("start-{qid}");
        for i in 1..words {
            text.push_str(&format!(" w{i}"));
        }
        text
    }

    #[test]
    fn recoverability_items_cover_the_grid() {
        let pool = pool3();
        let seg = Segmenter::whitespace();
        let solo: Vec<Trajectory> = pool
            .questions
            .iter()
            .map(|q| trajectory(&q.id, "m1", 0, &reasoning(20, &q.id), TrajectoryVerdict::CORRECT))
            .collect();
        let grid = GridConfig { steer_count: 3, og_count: 3, ..GridConfig::default() };
        let (items, report) =
            build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 7).unwrap();
        assert_eq!(items.len(), 3 * 5);
        assert_eq!(report.items_emitted, 15);
        assert_eq!(report.per_cell_counts["m=0.2"], 3);
        for item in &items {
            assert_ne!(item.steer_origin_question_id, item.question_id);
            item.validate().unwrap();
            // m = 0 items carry only steer content.
            if item.spec.m_fraction == 0.0 {
                assert!(item.prefix_text.starts_with(&format!(
                    "start-{}",
                    item.steer_origin_question_id
                )));
            }
        }
    }

    #[test]
    fn recoverability_items_are_deterministic() {
        let pool = pool3();
        let seg = Segmenter::whitespace();
        let solo: Vec<Trajectory> = pool
            .questions
            .iter()
            .flat_map(|q| {
                (0..2).map(|i| {
                    trajectory(&q.id, "m1", i, &reasoning(30, &q.id), TrajectoryVerdict::CORRECT)
                })
            })
            .collect();
        let grid = GridConfig { steer_count: 4, ..GridConfig::default() };
        let (a, _) =
            build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 42).unwrap();
        let (b, _) =
            build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 42).unwrap();
        assert_eq!(a, b);
        let (c, _) =
            build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn equivalent_gold_distractors_are_rejected() {
        let pool = QuestionSet::new(
            "pool",
            vec![question("q1", "0.5"), question("q2", "1/2")],
        )
        .unwrap();
        let seg = Segmenter::whitespace();
        let solo: Vec<Trajectory> = pool
            .questions
            .iter()
            .map(|q| trajectory(&q.id, "m1", 0, &reasoning(20, &q.id), TrajectoryVerdict::CORRECT))
            .collect();
        let grid = GridConfig { steer_count: 2, ..GridConfig::default() };
        let err = build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 7)
            .unwrap_err();
        assert!(matches!(err, TestGenError::DistractorCollision(_)));
    }

    #[test]
    fn no_correct_og_is_an_error() {
        let pool = pool3();
        let seg = Segmenter::whitespace();
        let solo: Vec<Trajectory> = pool
            .questions
            .iter()
            .map(|q| trajectory(&q.id, "m1", 0, &reasoning(20, &q.id), TrajectoryVerdict::WRONG))
            .collect();
        let grid = GridConfig::default();
        let err = build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 7)
            .unwrap_err();
        assert!(matches!(err, TestGenError::NoCorrectOg(_)));
    }

    #[test]
    fn preserve_first_paragraph_extends_plain_prefix() {
        let pool = QuestionSet::new("pool", vec![question("q1", "1"), question("q2", "2")]).unwrap();
        let seg = Segmenter::whitespace();
        let head = "restating the problem here.\n\n";
        let body = reasoning(40, "q1");
        let solo = vec![
            trajectory("q1", "m1", 0, &format!("{head}{body}"), TrajectoryVerdict::CORRECT),
            trajectory("q2", "m1", 0, &reasoning(40, "q2"), TrajectoryVerdict::CORRECT),
        ];
        let grid = GridConfig {
            steer_count: 2,
            preserve_first_paragraph: true,
            ..GridConfig::default()
        };
        let (items, _) =
            build_recoverability_items(&pool, &solo, &solo, &grid, &seg, &lookup(&pool), 7).unwrap();
        for item in items.iter().filter(|i| i.question_id == "q1") {
            // Every og prefix contains at least the first paragraph.
            assert!(
                item.prefix_text.starts_with("restating the problem here."),
                "m={} prefix {:?}",
                item.spec.m_fraction,
                item.prefix_text
            );
        }
    }

    #[test]
    fn guidability_items_skip_and_count_missing_guides() {
        let pool = pool3();
        let seg = Segmenter::whitespace();
        let mut guides = BTreeMap::new();
        guides.insert(
            "guide-a".to_string(),
            vec![
                trajectory("q1", "guide-a", 0, &reasoning(20, "q1"), TrajectoryVerdict::CORRECT),
                trajectory("q2", "guide-a", 0, &reasoning(20, "q2"), TrajectoryVerdict::WRONG),
                trajectory("q3", "guide-a", 0, &reasoning(20, "q3"), TrajectoryVerdict::CORRECT),
            ],
        );
        let grid = GridConfig::default();
        let (items, report) =
            build_guidability_items(&pool, &guides, &grid, &seg, 7).unwrap();
        // q2 has no correct guide trajectory: 2 questions x 4 n values.
        assert_eq!(items.len(), 8);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].question_id, "q2");
        assert_eq!(report.guide_support["guide-a"].problems, 2);
        for item in &items {
            assert!(item.og_source.is_none());
            assert_eq!(item.spec.m_fraction, 0.0);
            item.validate().unwrap();
        }
    }
}

//! Every reported statistic: pass@1, benchmark averages, the twin-test
//! tables, contains-answer decomposition, rank deltas, and Welch t-tests.
//!
//! Cells carry integer numerators and denominators so any value can be
//! re-derived from raw sample records by an independent recount.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{Benchmark, CompletionSample, SampleVerdict, SteeredItem, Trajectory, TrajectoryVerdict};
use crate::testgen::SoloProfile;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty sample list")]
    EmptySamples,
    #[error("missing benchmark {0}")]
    MissingBenchmark(String),
    #[error("item {0} has unscored or missing samples")]
    UnscoredSample(String),
    #[error("model sets differ: {0}")]
    ModelMismatch(String),
    #[error("question {0} has an incomplete sample set")]
    Incomplete(String),
    #[error("welch t-test needs at least two observations per group")]
    SmallSample,
}

/// One aggregated score with its exact integer ratio and grouping key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub value: f64,
    pub numerator: i64,
    pub denominator: i64,
    pub grouping: CellGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGroup {
    pub model: String,
    pub kind: String,
    pub subset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_or_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guide: Option<String>,
}

impl ScoreCell {
    fn new(numerator: i64, denominator: i64, grouping: CellGroup) -> Self {
        debug_assert!(denominator > 0);
        Self { value: numerator as f64 / denominator as f64, numerator, denominator, grouping }
    }
}

/// Rank movement of one model between the benchmark column and a test column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDelta {
    pub model: String,
    pub benchmark_rank: usize,
    pub test_rank: usize,
    pub delta: i64,
}

/// Mean of indicator values over one item's samples.
pub fn pass_at_1(verdicts: &[bool]) -> Result<f64, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let correct = verdicts.iter().filter(|v| **v).count();
    Ok(correct as f64 / verdicts.len() as f64)
}

/// Unweighted mean over exactly the configured benchmark list.
pub fn benchmark_average(
    per_benchmark: &BTreeMap<Benchmark, f64>,
    expected: &[Benchmark],
) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    for bench in expected {
        let value = per_benchmark
            .get(bench)
            .ok_or_else(|| MetricsError::MissingBenchmark(bench.name().to_string()))?;
        sum += value;
    }
    Ok(sum / expected.len() as f64)
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs().max(1)
}

/// Exact unweighted mean of cell fractions, reduced to an integer ratio.
fn average_fraction(cells: &[ScoreCell]) -> (i64, i64) {
    assert!(!cells.is_empty());
    let mut lcm: i128 = 1;
    for c in cells {
        let d = c.denominator as i128;
        lcm = lcm / gcd(lcm, d) * d;
    }
    let sum: i128 = cells.iter().map(|c| c.numerator as i128 * (lcm / c.denominator as i128)).sum();
    let denom = lcm * cells.len() as i128;
    let g = gcd(sum, denom);
    (
        i64::try_from(sum / g).expect("avg numerator fits"),
        i64::try_from(denom / g).expect("avg denominator fits"),
    )
}

/// Recoverability: per-position score cells plus their unweighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTable {
    pub positions: Vec<ScoreCell>,
    pub avg: ScoreCell,
}

/// Guidability: per-n score cells, average, contains-answer decomposition,
/// per-guide breakdown, and the teach-minus-answer delta in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidabilityTable {
    pub by_n: Vec<ScoreCell>,
    pub avg: ScoreCell,
    pub ans_by_n: Vec<ScoreCell>,
    pub ans_overall: ScoreCell,
    pub delta_pp: f64,
    pub by_guide: Vec<ScoreCell>,
}

fn correct_counts_per_item(
    items: &[SteeredItem],
    samples: &[CompletionSample],
    k: u32,
) -> Result<BTreeMap<String, i64>, MetricsError> {
    let mut by_item: BTreeMap<String, (u32, i64)> = BTreeMap::new();
    for sample in samples {
        let entry = by_item.entry(sample.item_id.clone()).or_insert((0, 0));
        entry.0 += 1;
        match sample.verdict {
            Some(SampleVerdict::CORRECT) => entry.1 += 1,
            Some(SampleVerdict::WRONG) => {}
            None => return Err(MetricsError::UnscoredSample(sample.item_id.clone())),
        }
    }
    let mut out = BTreeMap::new();
    for item in items {
        let (count, correct) = by_item
            .get(&item.item_id)
            .copied()
            .ok_or_else(|| MetricsError::UnscoredSample(item.item_id.clone()))?;
        if count != k {
            return Err(MetricsError::UnscoredSample(item.item_id.clone()));
        }
        out.insert(item.item_id.clone(), correct);
    }
    Ok(out)
}

fn fraction_key(value: f64) -> i64 {
    (value * 1e9).round() as i64
}

/// Per-position mean pass@1 plus the unweighted position average.
pub fn recoverability_table(
    model: &str,
    subset: &str,
    items: &[SteeredItem],
    samples: &[CompletionSample],
    k: u32,
) -> Result<PositionTable, MetricsError> {
    let correct = correct_counts_per_item(items, samples, k)?;
    let mut by_position: BTreeMap<i64, (f64, i64, i64)> = BTreeMap::new();
    for item in items {
        let entry = by_position
            .entry(fraction_key(item.spec.m_fraction))
            .or_insert((item.spec.m_fraction, 0, 0));
        entry.1 += correct[&item.item_id];
        entry.2 += k as i64;
    }
    let positions: Vec<ScoreCell> = by_position
        .values()
        .map(|(m, numer, denom)| {
            ScoreCell::new(
                *numer,
                *denom,
                CellGroup {
                    model: model.to_string(),
                    kind: "recoverability".into(),
                    subset: subset.to_string(),
                    position_or_n: Some(*m),
                    guide: None,
                },
            )
        })
        .collect();
    if positions.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let (numer, denom) = average_fraction(&positions);
    let avg = ScoreCell::new(
        numer,
        denom,
        CellGroup {
            model: model.to_string(),
            kind: "recoverability".into(),
            subset: subset.to_string(),
            position_or_n: None,
            guide: None,
        },
    );
    Ok(PositionTable { positions, avg })
}

/// Per-n mean pass@1, contains-answer fractions, and Teach-minus-Ans delta.
pub fn guidability_table(
    model: &str,
    subset: &str,
    items: &[SteeredItem],
    samples: &[CompletionSample],
    k: u32,
) -> Result<GuidabilityTable, MetricsError> {
    let correct = correct_counts_per_item(items, samples, k)?;
    let mut by_n: BTreeMap<i64, (f64, i64, i64)> = BTreeMap::new();
    let mut ans_by_n: BTreeMap<i64, (f64, i64, i64)> = BTreeMap::new();
    let mut by_guide: BTreeMap<String, (i64, i64)> = BTreeMap::new();
    for item in items {
        let key = fraction_key(item.spec.n_fraction);
        let entry = by_n.entry(key).or_insert((item.spec.n_fraction, 0, 0));
        entry.1 += correct[&item.item_id];
        entry.2 += k as i64;
        let ans = ans_by_n.entry(key).or_insert((item.spec.n_fraction, 0, 0));
        ans.1 += i64::from(item.steer_contains_answer);
        ans.2 += 1;
        let guide = by_guide.entry(item.steer_source.model.clone()).or_insert((0, 0));
        guide.0 += correct[&item.item_id];
        guide.1 += k as i64;
    }
    if by_n.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let group = |position_or_n: Option<f64>, kind: &str, guide: Option<String>| CellGroup {
        model: model.to_string(),
        kind: kind.into(),
        subset: subset.to_string(),
        position_or_n,
        guide,
    };
    let by_n: Vec<ScoreCell> = by_n
        .values()
        .map(|(n, numer, denom)| ScoreCell::new(*numer, *denom, group(Some(*n), "guidability", None)))
        .collect();
    let ans_by_n: Vec<ScoreCell> = ans_by_n
        .values()
        .map(|(n, numer, denom)| ScoreCell::new(*numer, *denom, group(Some(*n), "contains_answer", None)))
        .collect();
    let (numer, denom) = average_fraction(&by_n);
    let avg = ScoreCell::new(numer, denom, group(None, "guidability", None));
    let (ans_numer, ans_denom) = average_fraction(&ans_by_n);
    let ans_overall = ScoreCell::new(ans_numer, ans_denom, group(None, "contains_answer", None));
    let delta_pp = (avg.value - ans_overall.value) * 100.0;
    let by_guide: Vec<ScoreCell> = by_guide
        .into_iter()
        .map(|(guide, (numer, denom))| {
            ScoreCell::new(numer, denom, group(None, "guidability", Some(guide)))
        })
        .collect();
    Ok(GuidabilityTable { by_n, avg, ans_by_n, ans_overall, delta_pp, by_guide })
}

/// Descending-score ranks in both columns; delta = benchmark_rank - test_rank.
/// Ties break by descending score then model name.
pub fn rank_deltas(
    benchmark_scores: &BTreeMap<String, f64>,
    test_scores: &BTreeMap<String, f64>,
) -> Result<Vec<RankDelta>, MetricsError> {
    if benchmark_scores.len() != test_scores.len()
        || !benchmark_scores.keys().all(|k| test_scores.contains_key(k))
    {
        return Err(MetricsError::ModelMismatch(format!(
            "benchmark has {} models, test has {}",
            benchmark_scores.len(),
            test_scores.len()
        )));
    }
    let ranks = |scores: &BTreeMap<String, f64>| -> BTreeMap<String, usize> {
        let mut ordered: Vec<(&String, &f64)> = scores.iter().collect();
        ordered.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        ordered.into_iter().enumerate().map(|(i, (m, _))| (m.clone(), i + 1)).collect()
    };
    let bench_ranks = ranks(benchmark_scores);
    let test_ranks = ranks(test_scores);
    Ok(benchmark_scores
        .keys()
        .map(|model| {
            let benchmark_rank = bench_ranks[model];
            let test_rank = test_ranks[model];
            RankDelta {
                model: model.clone(),
                benchmark_rank,
                test_rank,
                delta: benchmark_rank as i64 - test_rank as i64,
            }
        })
        .collect())
}

/// Welch's two-sample t statistic with Welch-Satterthwaite degrees of freedom
/// and a two-sided p from the Student-t CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_two_sided: f64,
    pub degenerate: bool,
}

pub fn welch_t_test(group_a: &[f64], group_b: &[f64]) -> Result<WelchTest, MetricsError> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(MetricsError::SmallSample);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let (ma, mb) = (mean(group_a), mean(group_b));
    let (va, vb) = (var(group_a, ma), var(group_b, mb));
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        // Zero variance in both groups: equal means are indistinguishable,
        // different means are separated with certainty. Flag either way.
        return Ok(WelchTest {
            t: if ma == mb { 0.0 } else { f64::INFINITY * (ma - mb).signum() },
            degrees_of_freedom: na + nb - 2.0,
            p_two_sided: if ma == mb { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchTest { t, degrees_of_freedom: dof, p_two_sided: p, degenerate: false })
}

/// Per-question solve counts for one model's solo store.
pub fn solve_profiles(trajectories: &[Trajectory], k: u32) -> Result<Vec<SoloProfile>, MetricsError> {
    let mut by_question: BTreeMap<String, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        by_question.entry(t.question_id.clone()).or_default().push(t);
    }
    let mut profiles = Vec::with_capacity(by_question.len());
    for (question_id, mut trajs) in by_question {
        if trajs.len() != k as usize {
            return Err(MetricsError::Incomplete(question_id));
        }
        trajs.sort_by_key(|t| t.sample_index);
        if trajs.iter().any(|t| t.verdict == TrajectoryVerdict::UNVERIFIED) {
            return Err(MetricsError::Incomplete(question_id));
        }
        let solve_count =
            trajs.iter().filter(|t| t.verdict == TrajectoryVerdict::CORRECT).count() as u32;
        profiles.push(SoloProfile {
            question_id,
            model: trajs[0].model.clone(),
            solve_count,
            k,
            trajectories: trajs.iter().map(|t| t.reference()).collect(),
        });
    }
    Ok(profiles)
}

/// Full metric output for one run; everything the reporter renders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub manifest_hash: String,
    pub models: BTreeMap<String, ModelMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark_avg: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub benchmark_by_suite: BTreeMap<String, ScoreCell>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recoverability: BTreeMap<String, PositionTable>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub guidability: BTreeMap<String, GuidabilityTable>,
    #[serde(default)]
    pub judge_calls: u64,
}

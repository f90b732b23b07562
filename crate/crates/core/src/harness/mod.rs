//! Evaluation metrics, threshold sweeps, synthetic benchmarks and the
//! end-to-end pipeline.

mod pipeline;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decide::{CorrectionResult, Decision};
use crate::error::{Error, Result};
use crate::relate::{CandidateList, GroundTruth, TargetAssertion};

pub use pipeline::{
    consistency_scores, run_pipeline, score_candidates, split_dev_test, ConsistencyConfig, ConsistencyModel,
    InputConfig, LinkConfig, LinkModel, PipelineConfig, PipelineOutput, ScoreFile, SweepConfig, SweepReport,
};
pub use synth::{generate_synthetic_case, relational_benchmark, GenConfig, RelationalBenchmark, SyntheticCase};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_5: f64,
}

/// MRR and Hits@{1,5} of the ground truths in the ranked lists. An absent
/// ground truth contributes reciprocal rank 0.
pub fn ranking_metrics<S: AsRef<str>>(ranked: &[Vec<S>], truths: &[&str]) -> Result<RankingMetrics> {
    if ranked.is_empty() {
        return Err(Error::Empty("ranked lists"));
    }
    if ranked.len() != truths.len() {
        return Err(Error::Config("one ground truth per ranked list is required".into()));
    }
    let (mut rr, mut h1, mut h5) = (0.0, 0usize, 0usize);
    for (list, gt) in ranked.iter().zip(truths) {
        if let Some(pos) = list.iter().position(|e| e.as_ref() == *gt) {
            rr += 1.0 / (pos + 1) as f64;
            h1 += (pos == 0) as usize;
            h5 += (pos < 5) as usize;
        }
    }
    let n = ranked.len() as f64;
    Ok(RankingMetrics {
        mrr: rr / n,
        hits_at_1: h1 as f64 / n,
        hits_at_5: h5 as f64 / n,
    })
}

/// Fraction of entity ground truths found within the first `k` candidates.
pub fn recall_at_k(candidates: &[CandidateList], k: usize) -> Option<f64> {
    let mut found = 0usize;
    let mut total = 0usize;
    for c in candidates {
        if let GroundTruth::Entity(gt) = &c.target.ground_truth {
            total += 1;
            found += c.ids().take(k).any(|e| e == gt) as usize;
        }
    }
    (total > 0).then(|| found as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMetrics {
    /// Right substitutes among entity ground truths.
    pub correction_rate: Option<f64>,
    /// `none` decisions among empty ground truths.
    pub empty_rate: Option<f64>,
    /// Right decisions among all targets.
    pub accuracy: Option<f64>,
}

pub fn correction_metrics(results: &[CorrectionResult]) -> Result<CorrectionMetrics> {
    let (mut ent, mut ent_ok, mut emp, mut emp_ok) = (0usize, 0usize, 0usize, 0usize);
    for r in results {
        match &r.target.ground_truth {
            GroundTruth::Entity(gt) => {
                ent += 1;
                ent_ok += (r.decision == Decision::Substitute(gt.clone())) as usize;
            }
            GroundTruth::Empty => {
                emp += 1;
                emp_ok += (r.decision == Decision::None) as usize;
            }
            GroundTruth::Unknown => return Err(Error::UnknownGroundTruth(r.target.id())),
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(CorrectionMetrics {
        correction_rate: ratio(ent_ok, ent),
        empty_rate: ratio(emp_ok, emp),
        accuracy: ratio(ent_ok + emp_ok, ent + emp),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall_at_k: BTreeMap<usize, f64>,
    pub ranking: Option<RankingMetrics>,
    pub correction: CorrectionMetrics,
}

pub const RECALL_KS: [usize; 6] = [1, 5, 10, 20, 30, 50];

/// Candidates of each target re-ranked by ensemble score, ties kept in
/// relatedness order. Filtering is not applied.
pub fn reranked(results_at_zero: &[CorrectionResult]) -> Vec<Vec<String>> {
    results_at_zero
        .iter()
        .map(|r| {
            let mut c: Vec<_> = r.survivors.iter().collect();
            c.sort_by(|a, b| b.y.total_cmp(&a.y).then(a.rank.cmp(&b.rank)));
            c.into_iter().map(|c| c.entity.clone()).collect()
        })
        .collect()
}

/// Recall over the relatedness lists, ranking metrics over the ensemble
/// re-ranking (`results_at_zero` must come from τ = 0) and correction ratios
/// of `results`.
pub fn evaluate(
    candidates: &[CandidateList],
    results_at_zero: &[CorrectionResult],
    results: &[CorrectionResult],
) -> Result<Metrics> {
    let recall_at_k = RECALL_KS
        .iter()
        .filter_map(|&k| recall_at_k(candidates, k).map(|r| (k, r)))
        .collect();
    let mut lists = Vec::new();
    let mut truths = Vec::new();
    for (r, ranked) in results_at_zero.iter().zip(reranked(results_at_zero)) {
        if let GroundTruth::Entity(gt) = &r.target.ground_truth {
            lists.push(ranked);
            truths.push(gt.as_str());
        }
    }
    let ranking = if lists.is_empty() {
        None
    } else {
        Some(ranking_metrics(&lists, &truths)?)
    };
    Ok(Metrics {
        recall_at_k,
        ranking,
        correction: correction_metrics(results)?,
    })
}

/// `0, step, 2·step, …, 1`.
pub fn tau_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("sweep step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
    if *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub metrics: CorrectionMetrics,
}

/// Correction metrics at each threshold, from decisions made by `decide_at`.
pub fn tau_sweep<F>(grid: &[f64], mut decide_at: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(f64) -> Result<Vec<CorrectionResult>>,
{
    if grid.is_empty() {
        return Err(Error::Empty("tau grid"));
    }
    grid.iter()
        .map(|&tau| {
            Ok(SweepRow {
                tau,
                metrics: correction_metrics(&decide_at(tau)?)?,
            })
        })
        .collect()
}

/// The row with the highest accuracy; ties go to the smaller threshold.
pub fn best_tau(rows: &[SweepRow]) -> Option<&SweepRow> {
    let mut best: Option<&SweepRow> = None;
    for r in rows {
        let acc = r.metrics.accuracy?;
        if best.is_none_or(|b| acc > b.metrics.accuracy.unwrap_or(f64::NEG_INFINITY)) {
            best = Some(r);
        }
    }
    best
}

/// Targets of `targets` with the given indices.
pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Ground-truth kind label used in reports.
pub fn gt_kind(t: &TargetAssertion) -> &'static str {
    match t.ground_truth {
        GroundTruth::Entity(_) => "entity",
        GroundTruth::Empty => "empty",
        GroundTruth::Unknown => "unknown",
    }
}

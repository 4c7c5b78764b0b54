//! Transaction-mix workload profiling: type counts, traffic concentration,
//! and the number of types that make up key workload percentiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TransactionRecord;

/// Coverage percentiles reported in the profile.
pub const COVERAGE_PERCENTILES: [u8; 4] = [80, 90, 95, 100];

/// One transaction type's traffic, ranked by descending share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub label: String,
    pub count: u64,
    pub share: f64,
}

/// Workload mix summary over a record collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub total_tx: u64,
    pub n_types: usize,
    /// Combined share of the ten highest-traffic types.
    pub top10_share: f64,
    /// Number of types carrying at least 1% of traffic.
    pub types_ge_1pct: usize,
    /// Shares of the five highest-traffic types, descending.
    pub top5_shares: Vec<f64>,
    /// Coverage percentile -> number of top-ranked types whose cumulative
    /// traffic share is nearest that fraction of total traffic (ties go to
    /// the larger type count, so 100 always maps to every type).
    pub types_to_cover: BTreeMap<u8, usize>,
    /// All types, ranked by descending share with lexicographic
    /// tie-breaking on the label.
    pub ranked_types: Vec<TypeShare>,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot profile an empty record collection")]
    EmptyInput,
}

/// Build the workload profile of a record collection.
pub fn workload_profile(records: &[TransactionRecord]) -> Result<WorkloadProfile, ProfileError> {
    if records.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records {
        *counts.entry(r.tx_type.as_str()).or_insert(0) += 1;
    }
    let total: u64 = records.len() as u64;

    // descending count; BTreeMap iteration already orders equal counts
    // lexicographically and the stable sort keeps that order
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by_key(|&(_, count)| std::cmp::Reverse(count));

    let ranked_types: Vec<TypeShare> = ranked
        .iter()
        .map(|&(label, count)| TypeShare {
            label: label.to_string(),
            count,
            share: count as f64 / total as f64,
        })
        .collect();

    let top10_share = ranked_types.iter().take(10).map(|t| t.share).sum();
    let top5_shares = ranked_types.iter().take(5).map(|t| t.share).collect();
    // exact integer test for share >= 1%
    let types_ge_1pct = ranked_types
        .iter()
        .filter(|t| 100 * t.count >= total)
        .count();

    let mut cumulative: Vec<u64> = Vec::with_capacity(ranked_types.len());
    let mut acc = 0u64;
    for t in &ranked_types {
        acc += t.count;
        cumulative.push(acc);
    }

    let types_to_cover = COVERAGE_PERCENTILES
        .iter()
        .map(|&p| (p, types_covering(&cumulative, total, p)))
        .collect();

    Ok(WorkloadProfile {
        total_tx: total,
        n_types: ranked_types.len(),
        top10_share,
        types_ge_1pct,
        top5_shares,
        types_to_cover,
        ranked_types,
    })
}

/// Number of top-ranked types whose cumulative traffic comes nearest to
/// `p` percent of the total, in exact integer arithmetic; ties resolve to
/// the larger count.
fn types_covering(cumulative: &[u64], total: u64, p: u8) -> usize {
    let target = p as u64 * total; // compare 100*cum against p*total
    let mut best_m = 1;
    let mut best_d = u64::MAX;
    for (i, &cum) in cumulative.iter().enumerate() {
        let d = (100 * cum).abs_diff(target);
        if d <= best_d {
            best_d = d;
            best_m = i + 1;
        }
    }
    best_m
}

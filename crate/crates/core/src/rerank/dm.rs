use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::knn::CandidateList;
use crate::scalar::Scalar;

use super::flow::MinCostFlow;
use super::{normalized_scores, ranked, Algorithm, RankedList, RerankConfig};

/// User-to-item edge costs are `round(DM_COST_RESOLUTION · (1 - rel_norm))`.
pub const DM_COST_RESOLUTION: i64 = 100;

/// Result of the global discrepancy-minimizing assignment.
#[derive(Debug, Clone)]
pub struct DmOutcome {
    /// One list per input user, in input order.
    pub lists: Vec<RankedList>,
    /// `Σ_i max(0, target_i - count_i)` of the returned assignment.
    pub discrepancy: usize,
}

/// Uniform exposure target `⌊scale · n·|U| / |I_cand|⌋` for every item that
/// appears in some candidate list.
pub fn uniform_target(all: &[CandidateList], n: usize, scale: f64) -> BTreeMap<String, usize> {
    let mut items: Vec<&str> = all.iter().flat_map(|c| c.items()).collect();
    items.sort_unstable();
    items.dedup();
    if items.is_empty() {
        return BTreeMap::new();
    }
    let per_item = (scale * (n * all.len()) as f64 / items.len() as f64).floor().max(0.0) as usize;
    items.into_iter().map(|i| (i.to_string(), per_item)).collect()
}

/// `Σ_i max(0, target_i - count_i)` for the given lists.
pub fn discrepancy(lists: &[RankedList], target: &BTreeMap<String, usize>) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in lists {
        for i in &l.items {
            *counts.entry(i.as_str()).or_insert(0) += 1;
        }
    }
    target
        .iter()
        .map(|(i, &t)| t.saturating_sub(counts.get(i.as_str()).copied().unwrap_or(0)))
        .sum()
}

/// Discrepancy minimization by min-cost flow.
///
/// Network: source → user (capacity n), user → candidate (capacity 1, cost
/// from the normalized score), candidate → sink twice: up to `target_i`
/// units free, any further units at a penalty larger than every possible
/// total of user-item costs. The minimum-cost flow of `n·|U|` units therefore
/// first minimizes the exposure shortfall against the target and then
/// maximizes normalized relevance. Each user's items are returned in
/// candidate order.
pub fn dm_rerank<T: Scalar>(
    all: &[CandidateList],
    target: &BTreeMap<String, usize>,
    cfg: &RerankConfig<T>,
) -> Result<DmOutcome> {
    cfg.validate()?;
    let n = cfg.n;
    if all.is_empty() {
        return Err(Error::EmptyList);
    }
    for c in all {
        if c.len() < n {
            return Err(Error::Infeasible(format!(
                "user {} has {} candidates but the user capacity is n = {n}",
                c.user,
                c.len()
            )));
        }
    }
    let slots = n * all.len();
    let wanted: usize = target.values().sum();
    if wanted > slots {
        return Err(Error::Infeasible(format!(
            "total target {wanted} exceeds the {slots} available slots"
        )));
    }

    let mut item_node: BTreeMap<&str, usize> = BTreeMap::new();
    for c in all {
        for i in c.items() {
            let next = item_node.len();
            item_node.entry(i).or_insert(next);
        }
    }
    let users = all.len();
    let source = 0;
    let item_base = 1 + users;
    let sink = item_base + item_node.len();
    let mut g = MinCostFlow::new(sink + 1);

    let mut user_edges: Vec<Vec<usize>> = Vec::with_capacity(users);
    for (u, c) in all.iter().enumerate() {
        g.add_edge(source, 1 + u, n as i64, 0);
        let rel = normalized_scores::<f64>(c);
        let edges = c
            .items()
            .zip(&rel)
            .map(|(i, r)| {
                let cost = ((1.0 - r) * DM_COST_RESOLUTION as f64).round() as i64;
                g.add_edge(1 + u, item_base + item_node[i], 1, cost)
            })
            .collect();
        user_edges.push(edges);
    }
    let overflow_cost = slots as i64 * DM_COST_RESOLUTION + 1;
    for (&item, &node) in &item_node {
        let t = target.get(item).copied().unwrap_or(0);
        if t > 0 {
            g.add_edge(item_base + node, sink, t as i64, 0);
        }
        g.add_edge(item_base + node, sink, slots as i64, overflow_cost);
    }

    let (flow, _) = g.solve(source, sink, slots as i64);
    if flow != slots as i64 {
        return Err(Error::Infeasible(format!("routed {flow} of {slots} recommendation slots")));
    }

    let provenance = cfg.provenance(Algorithm::Dm);
    let lists: Vec<RankedList> = all
        .iter()
        .zip(&user_edges)
        .map(|(c, edges)| {
            let picks: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(_, &e)| g.flow_on(e) > 0)
                .map(|(k, _)| k)
                .collect();
            ranked(c, &picks, provenance.clone())
        })
        .collect();
    let discrepancy = discrepancy(&lists, target);
    Ok(DmOutcome { lists, discrepancy })
}

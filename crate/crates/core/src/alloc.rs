//! Candidate selection and greedy conflict-free beam allocation.
//!
//! Each user keeps its `K` candidates sorted by the modulus of their phase-2
//! pilot response. Repeatedly, the unassigned user whose current head
//! candidate has the largest modulus is served: it receives the head if no
//! one holds that codeword yet, otherwise the head is discarded. With `K`
//! distinct candidates per user and at most `K - 1` codewords taken by
//! others, no list can run dry.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::C64;

/// One user's candidates ordered by descending pilot modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedCandidates {
    /// 1-based flat codeword indices.
    pub c: Vec<usize>,
    pub r_sort: Vec<f64>,
}

/// Flat codeword index assigned to each user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationResult {
    pub u: Vec<usize>,
}

/// One decision of the allocation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationStep {
    pub user: usize,
    pub codeword: usize,
    pub modulus: f64,
    /// False when the codeword was already taken and got discarded.
    pub assigned: bool,
}

/// The `k` most probable flat indices (1-based), most probable first; equal
/// probabilities are ordered by index.
pub fn select_candidates(p: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > p.len() {
        return Err(Error::Invalid(format!("{k} candidates requested from {} codewords", p.len())));
    }
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    Ok(idx[..k].iter().map(|i| i + 1).collect())
}

/// Reorders candidates by descending `|r|`, keeping the original order on ties.
pub fn sort_candidates(candidates: &[usize], r: &[C64]) -> Result<SortedCandidates> {
    if candidates.len() != r.len() {
        return Err(Error::Shape(format!("{} candidates, {} responses", candidates.len(), r.len())));
    }
    let moduli: Vec<f64> = r.iter().map(|v| v.norm()).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| moduli[b].total_cmp(&moduli[a]));
    Ok(SortedCandidates {
        c: order.iter().map(|&i| candidates[i]).collect(),
        r_sort: order.iter().map(|&i| moduli[i]).collect(),
    })
}

pub fn allocate_beams(sorted: &[SortedCandidates]) -> Result<AllocationResult> {
    allocate_beams_traced(sorted).map(|(a, _)| a)
}

/// [`allocate_beams`] plus the ordered list of decisions.
pub fn allocate_beams_traced(sorted: &[SortedCandidates]) -> Result<(AllocationResult, Vec<AllocationStep>)> {
    let k = sorted.len();
    for (user, s) in sorted.iter().enumerate() {
        if s.c.len() != s.r_sort.len() {
            return Err(Error::Shape(format!("user {user}: {} candidates, {} moduli", s.c.len(), s.r_sort.len())));
        }
        let distinct: HashSet<_> = s.c.iter().collect();
        if distinct.len() != s.c.len() {
            return Err(Error::Invalid(format!("user {user} has duplicate candidates")));
        }
    }

    let mut head = vec![0usize; k];
    let mut u = vec![0usize; k];
    let mut assigned = vec![false; k];
    let mut taken = HashSet::with_capacity(k);
    let mut trace = Vec::new();
    let mut pops = 0usize;
    for _ in 0..k {
        loop {
            let mut best: Option<usize> = None;
            for user in 0..k {
                if assigned[user] {
                    continue;
                }
                let s = &sorted[user];
                if head[user] >= s.c.len() {
                    return Err(Error::Invalid(format!("user {user} ran out of candidates")));
                }
                if best.is_none_or(|b| s.r_sort[head[user]] > sorted[b].r_sort[head[b]]) {
                    best = Some(user);
                }
            }
            let user = best.expect("an unassigned user remains");
            let (codeword, modulus) = (sorted[user].c[head[user]], sorted[user].r_sort[head[user]]);
            if taken.insert(codeword) {
                u[user] = codeword;
                assigned[user] = true;
                trace.push(AllocationStep { user, codeword, modulus, assigned: true });
                break;
            }
            trace.push(AllocationStep { user, codeword, modulus, assigned: false });
            head[user] += 1;
            pops += 1;
            debug_assert!(pops <= k * k);
        }
    }
    Ok((AllocationResult { u }, trace))
}

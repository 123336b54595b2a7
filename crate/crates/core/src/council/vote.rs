use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CouncilError;
use crate::dsl::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub winner: u64,
    /// Candidate ids best-first, one list per analyzer.
    pub rankings: Vec<Vec<u64>>,
    /// Each analyzer's top candidate.
    pub votes: Vec<u64>,
    pub tally: BTreeMap<u64, usize>,
    pub tie_broken: bool,
    /// Voting score per analyzer, aligned with the candidate id order.
    pub scores: Vec<Vec<f64>>,
    pub candidate_ids: Vec<u64>,
}

/// Ids ordered best-first under `direction`; equal scores keep the lower
/// id first.
pub fn rank(ids: &[u64], scores: &[f64], direction: Direction) -> Vec<u64> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        direction
            .cmp_best_first(scores[a], scores[b])
            .then(ids[a].cmp(&ids[b]))
    });
    order.into_iter().map(|i| ids[i]).collect()
}

/// Plurality vote. `scores[j][c]` is analyzer `j`'s score of candidate
/// `ids[c]`. A tie on votes goes to whichever tied candidate analyzer 1
/// ranks highest; analyzer 1's ranking itself breaks score ties by lowest
/// id.
pub fn vote(
    ids: &[u64],
    scores: &[Vec<f64>],
    directions: &[Direction],
) -> Result<SelectionResult, CouncilError> {
    if ids.is_empty() {
        return Err(CouncilError::NoCandidates);
    }
    assert_eq!(scores.len(), directions.len(), "one direction per analyzer");
    assert!(!scores.is_empty(), "at least one analyzer");
    let rankings: Vec<Vec<u64>> = scores
        .iter()
        .zip(directions)
        .map(|(s, &d)| {
            assert_eq!(s.len(), ids.len(), "one score per candidate");
            rank(ids, s, d)
        })
        .collect();
    let votes: Vec<u64> = rankings.iter().map(|r| r[0]).collect();
    let mut tally: BTreeMap<u64, usize> = BTreeMap::new();
    for &v in &votes {
        *tally.entry(v).or_default() += 1;
    }
    let top = *tally.values().max().expect("non-empty");
    let leaders: Vec<u64> = tally.iter().filter(|(_, &c)| c == top).map(|(&id, _)| id).collect();
    let (winner, tie_broken) = if leaders.len() == 1 {
        (leaders[0], false)
    } else {
        let w = rankings[0]
            .iter()
            .copied()
            .find(|id| leaders.contains(id))
            .expect("analyzer 1 ranks every candidate");
        (w, true)
    };
    Ok(SelectionResult {
        winner,
        rankings,
        votes,
        tally,
        tie_broken,
        scores: scores.to_vec(),
        candidate_ids: ids.to_vec(),
    })
}

/// Best id under a single score vector; ties go to the lowest id.
pub fn argbest(ids: &[u64], scores: &[f64], direction: Direction) -> Result<u64, CouncilError> {
    if ids.is_empty() {
        return Err(CouncilError::NoCandidates);
    }
    Ok(rank(ids, scores, direction)[0])
}

//! Elicited information demand: a ranking of alternatives and how many of
//! the top-ranked signals to acquire.

use crate::gaussian::{AcquisitionMask, BeliefState};
use crate::voi::{self, DecisionContext, VoiError};

/// Most signals an agent may select.
pub const MAX_SELECTED: usize = 3;

/// How an agent orders alternatives when asked which information it wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingRule {
    /// Singleton net value of information.
    #[default]
    Voi,
    PriorMean,
    Familiarity,
}

/// Ranking (0-based alternative ids, most wanted first) plus the number
/// selected. `selected_count` is `None` when the selection was not elicited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandProfile {
    ranking: Vec<usize>,
    selected_count: Option<usize>,
}

impl DemandProfile {
    pub fn new(ranking: Vec<usize>, selected_count: Option<usize>) -> Result<Self, VoiError> {
        let mut seen = vec![false; ranking.len()];
        for &r in &ranking {
            if r >= ranking.len() || seen[r] {
                return Err(VoiError::Parameter(format!("ranking {ranking:?} is not a permutation")));
            }
            seen[r] = true;
        }
        if let Some(n) = selected_count {
            if n > MAX_SELECTED.min(ranking.len()) {
                return Err(VoiError::Parameter(format!(
                    "selected count {n} exceeds {}",
                    MAX_SELECTED.min(ranking.len())
                )));
            }
        }
        Ok(Self {
            ranking,
            selected_count,
        })
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn selected_count(&self) -> Option<usize> {
        self.selected_count
    }

    /// Prefix of the ranking that was selected; empty if not elicited.
    pub fn selected_set(&self) -> &[usize] {
        &self.ranking[..self.selected_count.unwrap_or(0)]
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    /// 1-based rank position of alternative `j`.
    pub fn rank_of(&self, j: usize) -> usize {
        self.ranking.iter().position(|&r| r == j).expect("ranking is a permutation") + 1
    }

    pub fn without_selection(&self) -> Self {
        Self {
            ranking: self.ranking.clone(),
            selected_count: None,
        }
    }
}

/// Order indices by descending score; equal scores keep index order.
fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Singleton net values `V({j})`, evaluated exactly.
pub fn singleton_values(belief: &BeliefState, noise_var: f64, ctx: DecisionContext) -> Result<Vec<f64>, VoiError> {
    (0..belief.len())
        .map(|j| voi::voi_single_signal(belief, noise_var, j, ctx).map(|r| r.value))
        .collect()
}

/// Rank alternatives by the net value of information about each alone.
pub fn rank_information(belief: &BeliefState, noise_var: f64, ctx: DecisionContext) -> Result<Vec<usize>, VoiError> {
    Ok(order_by_score(&singleton_values(belief, noise_var, ctx)?))
}

pub fn rank_by(
    rule: RankingRule,
    belief: &BeliefState,
    noise_var: f64,
    ctx: DecisionContext,
    familiarity: &[f64],
) -> Result<Vec<usize>, VoiError> {
    match rule {
        RankingRule::Voi => rank_information(belief, noise_var, ctx),
        RankingRule::PriorMean => Ok(order_by_score(belief.mu())),
        RankingRule::Familiarity => {
            if familiarity.len() != belief.len() {
                return Err(VoiError::Parameter("familiarity length differs from alternatives".into()));
            }
            Ok(order_by_score(familiarity))
        }
    }
}

/// Number of top-ranked signals to acquire.
///
/// Prefix bundles of size 1..=3 are valued on shared draws. A larger prefix
/// replaces the current best only when it beats it by more than one paired
/// standard error, so near-ties resolve to fewer signals.
pub fn select_count(
    belief: &BeliefState,
    noise_var: f64,
    ranking: &[usize],
    ctx: DecisionContext,
    draws: u64,
    seed: u64,
) -> Result<usize, VoiError> {
    let j = belief.len();
    let max_n = MAX_SELECTED.min(j);
    if max_n == 0 {
        return Ok(0);
    }
    let masks = (1..=max_n)
        .map(|n| AcquisitionMask::from_indices(j, &ranking[..n], ctx.cost))
        .collect::<Result<Vec<_>, _>>()?;
    let m = voi::monte_carlo_moments(belief, noise_var, &masks, ctx, draws, seed)?;
    let mut best = 0usize;
    let mut best_value = 0.0;
    for n in 1..=max_n {
        let value = m.mean(n - 1);
        let se = if best == 0 {
            m.std_err(n - 1)
        } else {
            m.diff_std_err(n - 1, best - 1)
        };
        if value - best_value > se {
            best = n;
            best_value = value;
        }
    }
    Ok(best)
}

/// Full elicitation under `rule`.
pub fn demand_profile(
    rule: RankingRule,
    belief: &BeliefState,
    noise_var: f64,
    ctx: DecisionContext,
    familiarity: &[f64],
    draws: u64,
    seed: u64,
) -> Result<DemandProfile, VoiError> {
    let ranking = rank_by(rule, belief, noise_var, ctx, familiarity)?;
    let n = select_count(belief, noise_var, &ranking, ctx, draws, seed)?;
    DemandProfile::new(ranking, Some(n))
}

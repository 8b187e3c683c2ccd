//! Synthetic-agent simulation of the randomized information experiment.
//!
//! Each agent states prior beliefs, ranks the vaccines and selects how many
//! to learn about, is randomized into a treatment arm, receives signals for
//! the arm's exposure set, and reports posterior beliefs and preferences.

mod record;
mod scenario;

use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{self, AcquisitionMask, BeliefState, GaussianError, SignalModel};
use crate::policy::{self, DemandProfile, MAX_SELECTED};
use crate::rng::{tag, KeyedStream};
use crate::voi::{DecisionContext, VoiError};

pub use record::{write_trials, TrialRecord, TRIAL_COLUMNS};
pub use scenario::{
    ArmWeights, Arms, Attribute, ConfigError, ConfigIssue, CovariateSpec, Model, NormalSpec, Population, Preference,
    Scenario, VACCINES,
};

/// Number of vaccines shown under the T3 and RA protocols.
pub const EXPOSURE_SIZE: usize = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Voi(#[from] VoiError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreatmentArm {
    Fc,
    T3,
    Ra,
    /// T3 without the selection question.
    T3Star,
    /// RA without ranking or selection.
    RaStar,
}

impl TreatmentArm {
    pub const ALL: [TreatmentArm; 5] = [
        TreatmentArm::Fc,
        TreatmentArm::T3,
        TreatmentArm::Ra,
        TreatmentArm::T3Star,
        TreatmentArm::RaStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TreatmentArm::Fc => "FC",
            TreatmentArm::T3 => "T3",
            TreatmentArm::Ra => "RA",
            TreatmentArm::T3Star => "T3star",
            TreatmentArm::RaStar => "RAstar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn elicits_ranking(self) -> bool {
        self != TreatmentArm::RaStar
    }

    pub fn elicits_selection(self) -> bool {
        matches!(self, TreatmentArm::Fc | TreatmentArm::T3 | TreatmentArm::Ra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DemandCategory {
    SelectedTop3,
    NotSelectedTop3,
    NotTop3,
    Unelicited,
}

impl DemandCategory {
    pub const ALL: [DemandCategory; 4] = [
        DemandCategory::SelectedTop3,
        DemandCategory::NotSelectedTop3,
        DemandCategory::NotTop3,
        DemandCategory::Unelicited,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DemandCategory::SelectedTop3 => "selected_top3",
            DemandCategory::NotSelectedTop3 => "not_selected_top3",
            DemandCategory::NotTop3 => "not_top3",
            DemandCategory::Unelicited => "unelicited",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: u64,
    pub beliefs: BTreeMap<Attribute, BeliefState>,
    /// Reservation value on the demand index scale.
    pub reservation: f64,
    pub familiarity: Vec<f64>,
    /// Coded covariates in scenario order.
    pub covariates: Vec<f64>,
    pub arm: TreatmentArm,
    pub received_before: Vec<bool>,
}

impl Agent {
    pub fn vaccine_count(&self) -> usize {
        self.familiarity.len()
    }
}

/// Draw one categorical arm from `weights` (assumed validated).
fn draw_arm(weights: &[f64; 5], seed: u64, id: u64) -> TreatmentArm {
    let total: f64 = weights.iter().sum();
    let u = KeyedStream::new(seed, &[tag::ARMS, id]).uniform() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if u < acc {
                return TreatmentArm::ALL[k];
            }
        }
    }
    TreatmentArm::ALL[last]
}

/// Independent arm draws for agents `1..=n`, in the order FC, T3, RA, T3*, RA*.
pub fn assign_arms(n: usize, weights: &[f64; 5], seed: u64) -> Result<Vec<TreatmentArm>, SimError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(SimError::Protocol(format!(
            "arm weights must be nonnegative and not all zero, got {weights:?}"
        )));
    }
    Ok((1..=n as u64).map(|id| draw_arm(weights, seed, id)).collect())
}

/// Normal draw truncated to `[0, 100]` by rejection.
fn truncated_percent(rng: &mut KeyedStream, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        for _ in 0..10_000 {
            let x = mean + sd * rng.standard_normal();
            if (0.0..=100.0).contains(&x) {
                return x;
            }
        }
    }
    mean.clamp(0.0, 100.0)
}

/// Specific variance implied by a familiarity rating.
pub fn specific_variance(base_var: f64, familiarity: f64) -> f64 {
    base_var * (4.0 - familiarity).exp2()
}

/// Population of agents `1..=n`, each drawn from its own stream.
pub fn generate_population(scenario: &Scenario) -> Result<Vec<Agent>, SimError> {
    scenario.validate()?;
    let arms = assign_arms(scenario.population.n, &scenario.arms.weights.as_array(), scenario.seed)?;
    arms.into_iter()
        .enumerate()
        .map(|(k, arm)| generate_agent(scenario, k as u64 + 1, arm))
        .collect()
}

fn generate_agent(scenario: &Scenario, id: u64, arm: TreatmentArm) -> Result<Agent, SimError> {
    let pop = &scenario.population;
    let model = &scenario.model;
    let j = scenario.vaccine_count();
    let mut rng = KeyedStream::new(scenario.seed, &[tag::POPULATION, id]);

    let familiarity: Vec<f64> = (0..j)
        .map(|v| {
            let x = pop.familiarity.mean[v] + pop.familiarity.sd[v] * rng.standard_normal();
            x.round().clamp(1.0, 7.0)
        })
        .collect();
    let specific: Vec<f64> = familiarity
        .iter()
        .map(|&f| specific_variance(model.base_var, f))
        .collect();

    let mut beliefs = BTreeMap::new();
    for (&attr, spec) in &pop.prior_mean {
        let mu = (0..j)
            .map(|v| truncated_percent(&mut rng, spec.mean[v], spec.sd[v]))
            .collect();
        beliefs.insert(attr, BeliefState::new(mu, model.common_var, specific.clone())?);
    }
    let covariates = pop
        .covariates
        .iter()
        .map(|c| if rng.uniform() < c.p { 1.0 } else { 0.0 })
        .collect();
    let received_before = pop.received_before.iter().map(|&q| rng.uniform() < q).collect();

    let mut agent = Agent {
        id,
        beliefs,
        reservation: 0.0,
        familiarity,
        covariates,
        arm,
        received_before,
    };
    let index = demand_belief(scenario, &agent)?;
    agent.reservation = index.mu().iter().copied().fold(f64::NEG_INFINITY, f64::max) + model.reservation_offset;
    Ok(agent)
}

/// Belief about the demand index `Σ_a w_a θ_a`, attributes independent.
///
/// Means combine linearly; common and specific variances by squared weights.
pub fn demand_belief(scenario: &Scenario, agent: &Agent) -> Result<BeliefState, SimError> {
    let j = agent.vaccine_count();
    let mut mu = vec![0.0; j];
    let mut common = 0.0;
    let mut specific = vec![0.0; j];
    for (attr, &w) in &scenario.model.demand_weights {
        let b = agent
            .beliefs
            .get(attr)
            .ok_or_else(|| SimError::Protocol(format!("agent {} has no belief about {attr}", agent.id)))?;
        for v in 0..j {
            mu[v] += w * b.mu()[v];
            specific[v] += w * w * b.specific_var()[v];
        }
        common += w * w * b.common_var();
    }
    Ok(BeliefState::new(mu, common, specific)?)
}

/// Signal noise on the demand index scale.
pub fn demand_noise_var(scenario: &Scenario) -> f64 {
    let w2: f64 = scenario.model.demand_weights.values().map(|w| w * w).sum();
    w2 * scenario.model.noise_var
}

/// Latent ranking and selection, whether or not the arm asks for them.
pub fn latent_demand(scenario: &Scenario, agent: &Agent) -> Result<DemandProfile, SimError> {
    let belief = demand_belief(scenario, agent)?;
    let ctx = DecisionContext::new(agent.reservation, scenario.model.cost)?;
    let voi_seed = KeyedStream::new(scenario.seed, &[tag::VOI, agent.id]).next_u64();
    Ok(policy::demand_profile(
        scenario.model.ranking_rule,
        &belief,
        demand_noise_var(scenario),
        ctx,
        &agent.familiarity,
        scenario.model.draws,
        voi_seed,
    )?)
}

/// Vaccines (0-based, increasing) whose information the agent is shown.
pub fn exposure_set(agent: &Agent, demand: Option<&DemandProfile>, seed: u64) -> Result<Vec<usize>, SimError> {
    let j = agent.vaccine_count();
    let need = |what: &str| {
        demand.ok_or_else(|| SimError::Protocol(format!("agent {} in arm {what} has no demand", agent.id)))
    };
    let mut set = match agent.arm {
        TreatmentArm::Fc => {
            let d = need("FC")?;
            if d.selected_count().is_none() {
                return Err(SimError::Protocol(format!("agent {} in arm FC has no selection", agent.id)));
            }
            d.selected_set().to_vec()
        }
        TreatmentArm::T3 | TreatmentArm::T3Star => need(agent.arm.name())?.top(EXPOSURE_SIZE).to_vec(),
        TreatmentArm::Ra | TreatmentArm::RaStar => random_subset(j, EXPOSURE_SIZE, seed, agent.id),
    };
    set.sort_unstable();
    Ok(set)
}

/// Uniform `k`-subset of `0..j` by partial Fisher-Yates.
pub fn random_subset(j: usize, k: usize, seed: u64, id: u64) -> Vec<usize> {
    let mut rng = KeyedStream::new(seed, &[tag::EXPOSURE, id]);
    let mut items: Vec<usize> = (0..j).collect();
    let k = k.min(j);
    for i in 0..k {
        let pick = i + rng.below((j - i) as u64) as usize;
        items.swap(i, pick);
    }
    items.truncate(k);
    items
}

/// Demand category of `vaccine` (0-based); `None` means not elicited.
pub fn categorize(demand: Option<&DemandProfile>, vaccine: usize) -> DemandCategory {
    let Some(d) = demand else {
        return DemandCategory::Unelicited;
    };
    let rank = d.rank_of(vaccine);
    if rank > MAX_SELECTED {
        DemandCategory::NotTop3
    } else if rank <= d.selected_count().unwrap_or(0) {
        DemandCategory::SelectedTop3
    } else {
        DemandCategory::NotSelectedTop3
    }
}

/// Stated preference and weeks willing to wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceOutcome {
    /// 0–100.
    pub preference: f64,
    /// 0–52, `None` for never-take.
    pub wait_weeks: Option<f64>,
}

impl PreferenceOutcome {
    pub fn never_take(&self) -> bool {
        self.wait_weeks.is_none()
    }
}

pub const MAX_WAIT_WEEKS: f64 = 52.0;

/// Logistic map from a weighted attribute score to a 0–100 preference.
///
/// Adverse-event attributes enter with a negative sign. Below the threshold
/// the vaccine is never taken; above it the wait scales linearly to 52 weeks.
pub fn preference_map(means: &BTreeMap<Attribute, f64>, pref: &Preference) -> PreferenceOutcome {
    let score: f64 = pref
        .weights
        .iter()
        .filter_map(|(attr, &w)| {
            means
                .get(attr)
                .map(|&m| if attr.is_adverse() { -w * m } else { w * m })
        })
        .sum();
    let preference = 100.0 / (1.0 + (-(score - pref.center) / pref.scale).exp());
    let thr = pref.never_take_threshold;
    let wait_weeks = if preference < thr {
        None
    } else if thr >= 100.0 {
        Some(MAX_WAIT_WEEKS)
    } else {
        Some((MAX_WAIT_WEEKS * (preference - thr) / (100.0 - thr)).clamp(0.0, MAX_WAIT_WEEKS))
    };
    PreferenceOutcome { preference, wait_weeks }
}

fn report(x: f64) -> f64 {
    x.clamp(0.0, 100.0)
}

/// Posterior means per attribute for one agent given its exposure set.
pub fn post_beliefs(
    scenario: &Scenario,
    agent: &Agent,
    exposure: &[usize],
) -> Result<BTreeMap<Attribute, Vec<f64>>, SimError> {
    let j = agent.vaccine_count();
    let mask = AcquisitionMask::from_indices(j, exposure, 0.0)?;
    agent
        .beliefs
        .iter()
        .map(|(&attr, belief)| {
            let signal = SignalModel::new(scenario.model.noise_var, scenario.truth[&attr].clone())?;
            let post = gaussian::posterior_multi(belief, &signal, &mask)?;
            Ok((attr, post.mean.iter().copied().collect()))
        })
        .collect()
}

fn simulate_agent(scenario: &Scenario, agent: &Agent) -> Result<Vec<TrialRecord>, SimError> {
    let j = agent.vaccine_count();
    let latent = if agent.arm.elicits_ranking() {
        Some(latent_demand(scenario, agent)?)
    } else {
        None
    };
    let exposure = exposure_set(agent, latent.as_ref(), scenario.seed)?;
    let post = post_beliefs(scenario, agent, &exposure)?;

    let preferences = |beliefs: &dyn Fn(Attribute, usize) -> f64| -> Vec<PreferenceOutcome> {
        (0..j)
            .map(|v| {
                let means = agent.beliefs.keys().map(|&a| (a, beliefs(a, v))).collect();
                preference_map(&means, &scenario.preference)
            })
            .collect()
    };
    let pref_pre = preferences(&|a, v| report(agent.beliefs[&a].mu()[v]));
    let pref_post = preferences(&|a, v| report(post[&a][v]));

    let selected_count = if agent.arm.elicits_selection() {
        latent.as_ref().and_then(|d| d.selected_count())
    } else {
        None
    };
    let mut out = Vec::with_capacity(j * agent.beliefs.len());
    for v in 0..j {
        let category = categorize(latent.as_ref(), v);
        let received = exposure.contains(&v);
        for (&attr, belief) in &agent.beliefs {
            let s = scenario.truth[&attr][v];
            let pre = report(belief.mu()[v]);
            let post_v = report(post[&attr][v]);
            let error_pre = pre - s;
            let error_post = post_v - s;
            out.push(TrialRecord {
                agent_id: agent.id,
                vaccine_id: v + 1,
                vaccine: scenario.vaccines[v].clone(),
                attribute: attr,
                category,
                received,
                pre_belief: pre,
                post_belief: post_v,
                signal_value: s,
                disagreement: s - pre,
                error_pre,
                error_post,
                learning: error_pre.abs() - error_post.abs(),
                pref_pre: pref_pre[v].preference,
                pref_post: pref_post[v].preference,
                wtw_pre: pref_pre[v].wait_weeks,
                wtw_post: pref_post[v].wait_weeks,
                arm: agent.arm,
                rank: latent.as_ref().map(|d| d.rank_of(v)),
                selected_count,
                familiarity: agent.familiarity[v],
                reservation: agent.reservation,
                received_before: agent.received_before[v],
                covariates: agent.covariates.clone(),
            });
        }
    }
    Ok(out)
}

/// Run every phase for every agent. Records come out in canonical
/// (agent, vaccine, attribute) order regardless of scheduling.
pub fn run_phase_sequence(scenario: &Scenario) -> Result<Vec<TrialRecord>, SimError> {
    let agents = generate_population(scenario)?;
    let per_agent: Vec<Vec<TrialRecord>> = agents
        .par_iter()
        .map(|a| simulate_agent(scenario, a))
        .collect::<Result<_, _>>()?;
    Ok(per_agent.into_iter().flatten().collect())
}

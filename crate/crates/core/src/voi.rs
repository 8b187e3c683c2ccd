//! Value of information.
//!
//! For one alternative the expected value of a signal has a closed form. For
//! a single signal over several correlated alternatives every posterior mean
//! is affine in the one realised signal, so the expectation of their upper
//! envelope is also exact. Larger bundles are valued by Monte Carlo over
//! keyed random streams, sharing draws across bundles so comparisons between
//! bundles are paired.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{self, AcquisitionMask, BeliefState, GaussianError, ScalarBelief, SignalModel};
use crate::normal;
use crate::rng::{tag, KeyedStream};

pub const MIN_DRAWS: u64 = 1000;
pub const DEFAULT_DRAWS: u64 = 100_000;
pub const MAX_BUNDLE_ALTERNATIVES: usize = 16;

const CHUNK: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoiError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// Outside option and information cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub reservation: f64,
    pub cost: f64,
}

impl DecisionContext {
    pub fn new(reservation: f64, cost: f64) -> Result<Self, VoiError> {
        let ctx = Self { reservation, cost };
        ctx.validate()?;
        Ok(ctx)
    }

    fn validate(&self) -> Result<(), VoiError> {
        if !self.reservation.is_finite() {
            return Err(VoiError::Domain("reservation value is not finite".into()));
        }
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(VoiError::Domain(format!("cost must be finite and >= 0, got {}", self.cost)));
        }
        Ok(())
    }

    /// No-information value `max(v̄, max_j μ_j)`.
    pub fn baseline(&self, means: &[f64]) -> f64 {
        means.iter().copied().fold(self.reservation, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    /// Exact expectation over one signal; also used for the empty bundle.
    Exact,
    MonteCarlo,
}

/// Net value of information, `E[v(s)] - v₀ - cost`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiResult {
    pub value: f64,
    pub std_err: f64,
    pub draws: u64,
    pub method: Method,
}

impl VoiResult {
    fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            std_err: 0.0,
            draws: 0,
            method,
        }
    }
}

/// Signal at which the posterior mean equals the reservation value.
pub fn critical_signal(prior: ScalarBelief, noise_var: f64, ctx: DecisionContext) -> Result<f64, VoiError> {
    let prior = ScalarBelief::new(prior.mu, prior.sigma2)?;
    let noise_var = gaussian::noise(noise_var)?;
    ctx.validate()?;
    if prior.sigma2 == 0.0 {
        return Err(VoiError::Domain(
            "critical signal undefined for a zero-variance prior".into(),
        ));
    }
    let gamma = noise_var / prior.sigma2;
    Ok(ctx.reservation + gamma * (ctx.reservation - prior.mu))
}

/// Closed-form value of one signal about one alternative.
pub fn voi_closed_form(prior: ScalarBelief, noise_var: f64, ctx: DecisionContext) -> Result<VoiResult, VoiError> {
    let s_star = critical_signal(prior, noise_var, ctx)?;
    let gamma = noise_var / prior.sigma2;
    let sd = (noise_var + prior.sigma2).sqrt();
    let z = (s_star - prior.mu) / sd;
    let gap = prior.mu - ctx.reservation;
    // (μ-v̄)(1-Φ(z*)) - (v₀-v̄), folded so neither branch cancels
    let option = if gap >= 0.0 {
        -gap * normal::cdf(z)
    } else {
        gap * normal::sf(z)
    };
    let gross = option + sd * normal::pdf(z) / (1.0 + gamma);
    Ok(VoiResult::exact(gross - ctx.cost, Method::ClosedForm))
}

/// Exact value of receiving only signal `i`, accounting for spillover to
/// every correlated alternative.
pub fn voi_single_signal(
    belief: &BeliefState,
    noise_var: f64,
    i: usize,
    ctx: DecisionContext,
) -> Result<VoiResult, VoiError> {
    ctx.validate()?;
    let noise_var = gaussian::noise(noise_var)?;
    if i >= belief.len() {
        return Err(VoiError::Parameter(format!(
            "alternative {i} out of range for {} alternatives",
            belief.len()
        )));
    }
    let sd = (belief.variance(i) + noise_var).sqrt();
    // posterior mean_j = μ_j + cov(θ_j, θ_i)/sd · z, z ~ N(0, 1)
    let mut lines: Vec<(f64, f64)> = Vec::with_capacity(belief.len() + 1);
    lines.push((ctx.reservation, 0.0));
    for j in 0..belief.len() {
        let cov = if j == i { belief.variance(i) } else { belief.common_var() };
        lines.push((belief.mu()[j], cov / sd));
    }
    let gross = expected_max_of_lines(&lines) - ctx.baseline(belief.mu());
    Ok(VoiResult::exact(gross - ctx.cost, Method::Exact))
}

/// `E[max_k (a_k + b_k Z)]` for `Z ~ N(0, 1)`.
pub(crate) fn expected_max_of_lines(lines: &[(f64, f64)]) -> f64 {
    // upper envelope, swept left to right: slopes increase along it
    let mut sorted = lines.to_vec();
    sorted.sort_by(|p, q| p.1.total_cmp(&q.1).then(q.0.total_cmp(&p.0)));
    sorted.dedup_by(|q, p| q.1 == p.1);

    // hull holds (line, left breakpoint)
    let mut hull: Vec<((f64, f64), f64)> = Vec::new();
    for &line in &sorted {
        loop {
            match hull.last() {
                None => {
                    hull.push((line, f64::NEG_INFINITY));
                    break;
                }
                Some(&(top, start)) => {
                    let x = (top.0 - line.0) / (line.1 - top.1);
                    if x <= start {
                        hull.pop();
                    } else {
                        hull.push((line, x));
                        break;
                    }
                }
            }
        }
    }

    let mut total = 0.0;
    for (k, &((a, b), lo)) in hull.iter().enumerate() {
        let hi = hull.get(k + 1).map_or(f64::INFINITY, |next| next.1);
        let mass = normal::cdf(hi) - normal::cdf(lo);
        let pdf_lo = if lo.is_finite() { normal::pdf(lo) } else { 0.0 };
        let pdf_hi = if hi.is_finite() { normal::pdf(hi) } else { 0.0 };
        total += a * mass + b * (pdf_lo - pdf_hi);
    }
    total
}

/// Running first and second co-moments for several payoff streams.
#[derive(Debug, Clone)]
pub(crate) struct CoMoments {
    n: u64,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl CoMoments {
    fn new(k: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; k],
            m2: DMatrix::zeros(k, k),
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let k = self.mean.len();
        let delta: Vec<f64> = (0..k).map(|a| x[a] - self.mean[a]).collect();
        for a in 0..k {
            self.mean[a] += delta[a] / n;
        }
        for a in 0..k {
            for b in 0..k {
                self.m2[(a, b)] += delta[a] * (x[b] - self.mean[b]);
            }
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other.clone();
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let k = self.mean.len();
        let delta: Vec<f64> = (0..k).map(|a| other.mean[a] - self.mean[a]).collect();
        for a in 0..k {
            for b in 0..k {
                self.m2[(a, b)] += other.m2[(a, b)] + delta[a] * delta[b] * na * nb / n;
            }
        }
        for a in 0..k {
            self.mean[a] += delta[a] * nb / n;
        }
        self.n += other.n;
        self
    }

    fn covariance(&self, a: usize, b: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2[(a, b)] / (self.n - 1) as f64
    }

    /// Standard error of the mean of stream `a`.
    pub(crate) fn std_err(&self, a: usize) -> f64 {
        (self.covariance(a, a).max(0.0) / self.n as f64).sqrt()
    }

    /// Standard error of the mean of `a - b` over paired draws.
    pub(crate) fn diff_std_err(&self, a: usize, b: usize) -> f64 {
        let v = self.covariance(a, a) + self.covariance(b, b) - 2.0 * self.covariance(a, b);
        (v.max(0.0) / self.n as f64).sqrt()
    }

    pub(crate) fn mean(&self, a: usize) -> f64 {
        self.mean[a]
    }
}

/// Precomputed per-bundle map from a simulated world to the best payoff.
struct BundleEval {
    received: Vec<usize>,
    gain: DMatrix<f64>,
    offset: f64,
}

impl BundleEval {
    fn payoff(&self, belief: &BeliefState, signals: &[f64], reservation: f64, scratch: &mut Vec<f64>) -> f64 {
        let mu = belief.mu();
        scratch.clear();
        scratch.extend(self.received.iter().map(|&r| signals[r] - mu[r]));
        let mut best = reservation;
        for j in 0..mu.len() {
            let mut m = mu[j];
            for (a, &innov) in scratch.iter().enumerate() {
                m += self.gain[(j, a)] * innov;
            }
            if m > best {
                best = m;
            }
        }
        best - self.offset
    }
}

fn check_draws(draws: u64) -> Result<(), VoiError> {
    if draws < MIN_DRAWS {
        return Err(VoiError::Parameter(format!(
            "draws must be at least {MIN_DRAWS}, got {draws}"
        )));
    }
    Ok(())
}

/// Draw one world: signals `s_j = θ_j + ε_j` for every alternative.
///
/// The stream is keyed by `(seed, draw)` only, so every bundle evaluated
/// with the same seed sees the same world on the same draw.
fn draw_world(belief: &BeliefState, noise_sd: f64, seed: u64, draw: u64, out: &mut [f64]) {
    let mut rng = KeyedStream::new(seed, &[tag::VOI, draw]);
    let common = belief.common_var().sqrt() * rng.standard_normal();
    for (j, slot) in out.iter_mut().enumerate() {
        let specific = belief.specific_var()[j].sqrt() * rng.standard_normal();
        let eps = noise_sd * rng.standard_normal();
        *slot = belief.mu()[j] + common + specific + eps;
    }
}

/// Monte Carlo payoffs for several bundles on shared draws.
pub(crate) fn monte_carlo_moments(
    belief: &BeliefState,
    noise_var: f64,
    masks: &[AcquisitionMask],
    ctx: DecisionContext,
    draws: u64,
    seed: u64,
) -> Result<CoMoments, VoiError> {
    ctx.validate()?;
    check_draws(draws)?;
    let noise_var = gaussian::noise(noise_var)?;
    let prior = belief.to_gaussian();
    let baseline = ctx.baseline(belief.mu());
    let evals = masks
        .iter()
        .map(|mask| {
            if mask.len() != belief.len() {
                return Err(VoiError::Gaussian(GaussianError::DimensionMismatch {
                    what: "acquisition mask",
                    expected: belief.len(),
                    got: mask.len(),
                }));
            }
            let g = gaussian::gain(&prior, noise_var, mask)?;
            Ok(BundleEval {
                received: g.received,
                gain: g.gain,
                offset: baseline + mask.total_cost(),
            })
        })
        .collect::<Result<Vec<_>, VoiError>>()?;

    let noise_sd = noise_var.sqrt();
    let chunks = draws.div_ceil(CHUNK);
    let partials: Vec<CoMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = CoMoments::new(evals.len());
            let mut world = vec![0.0; belief.len()];
            let mut scratch = Vec::new();
            let mut payoffs = vec![0.0; evals.len()];
            for draw in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                draw_world(belief, noise_sd, seed, draw, &mut world);
                for (p, e) in payoffs.iter_mut().zip(&evals) {
                    *p = e.payoff(belief, &world, ctx.reservation, &mut scratch);
                }
                acc.push(&payoffs);
            }
            acc
        })
        .collect();
    Ok(partials
        .iter()
        .fold(CoMoments::new(evals.len()), |acc, p| acc.merge(p)))
}

/// Monte Carlo value of the bundle `mask`.
///
/// The empty bundle is worth exactly zero and is not simulated.
pub fn voi_monte_carlo(
    belief: &BeliefState,
    signal: &SignalModel,
    mask: &AcquisitionMask,
    ctx: DecisionContext,
    draws: u64,
    seed: u64,
) -> Result<VoiResult, VoiError> {
    check_draws(draws)?;
    if mask.len() != belief.len() {
        return Err(GaussianError::DimensionMismatch {
            what: "acquisition mask",
            expected: belief.len(),
            got: mask.len(),
        }
        .into());
    }
    if mask.count() == 0 {
        ctx.validate()?;
        return Ok(VoiResult::exact(0.0, Method::Exact));
    }
    let m = monte_carlo_moments(belief, signal.noise_var(), std::slice::from_ref(mask), ctx, draws, seed)?;
    Ok(VoiResult {
        value: m.mean(0),
        std_err: m.std_err(0),
        draws,
        method: Method::MonteCarlo,
    })
}

/// Values of every subset of alternatives. Entry `k` is the subset whose bit
/// `j` is set iff alternative `j` is included.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleValueTable {
    alternatives: usize,
    entries: Vec<VoiResult>,
}

impl BundleValueTable {
    pub fn alternatives(&self) -> usize {
        self.alternatives
    }

    pub fn entries(&self) -> &[VoiResult] {
        &self.entries
    }

    pub fn get(&self, subset: u32) -> &VoiResult {
        &self.entries[subset as usize]
    }

    /// Best subset; ties go to the lowest subset id (the empty bundle first).
    pub fn argmax(&self) -> u32 {
        let mut best = 0usize;
        for (k, e) in self.entries.iter().enumerate() {
            if e.value > self.entries[best].value {
                best = k;
            }
        }
        best as u32
    }

    /// 1-based member list, e.g. `{1,3}`.
    pub fn label(&self, subset: u32) -> String {
        subset_label(self.alternatives, subset)
    }
}

pub fn subset_label(alternatives: usize, subset: u32) -> String {
    let members: Vec<String> = (0..alternatives)
        .filter(|j| subset >> j & 1 == 1)
        .map(|j| (j + 1).to_string())
        .collect();
    format!("{{{}}}", members.join(","))
}

pub fn bundle_table(
    belief: &BeliefState,
    signal: &SignalModel,
    ctx: DecisionContext,
    draws: u64,
    seed: u64,
) -> Result<BundleValueTable, VoiError> {
    let j = belief.len();
    if j == 0 {
        return Err(VoiError::Parameter("no alternatives".into()));
    }
    if j > MAX_BUNDLE_ALTERNATIVES {
        return Err(VoiError::Parameter(format!(
            "bundle enumeration supports at most {MAX_BUNDLE_ALTERNATIVES} alternatives, got {j}"
        )));
    }
    ctx.validate()?;
    check_draws(draws)?;
    let entries = (0..1u32 << j)
        .into_par_iter()
        .map(|subset| {
            let mask = AcquisitionMask::from_subset(j, subset, ctx.cost)?;
            voi_monte_carlo(belief, signal, &mask, ctx, draws, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BundleValueTable {
        alternatives: j,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Outside,
    /// 0-based index.
    Alternative(usize),
}

/// Best alternative if its mean reaches the reservation value; ties go to the
/// lowest index.
pub fn choose_alternative(means: &[f64], ctx: DecisionContext) -> Result<Choice, VoiError> {
    if means.is_empty() {
        return Err(VoiError::Parameter("no alternatives to choose from".into()));
    }
    let mut best = 0;
    for (j, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = j;
        }
    }
    Ok(if means[best] < ctx.reservation {
        Choice::Outside
    } else {
        Choice::Alternative(best)
    })
}

// ---------------------------------------------------------------------------
// Comparative statics

/// Grid over which the single-alternative value is checked for monotonicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Grid {
    pub sigma2: f64,
    pub noise_var: f64,
    pub reservation: f64,
    pub cost: f64,
    /// `|v̄ - μ|` values, evaluated on both sides of the reservation value.
    pub gaps: Vec<f64>,
    /// Relative accuracy `γ = noise_var / sigma2`.
    pub gammas: Vec<f64>,
    pub costs: Vec<f64>,
}

pub const MIN_GRID_POINTS: usize = 10;
pub const MONOTONICITY_TOL: f64 = 1e-9;
pub const COST_SHIFT_TOL: f64 = 1e-12;

impl Prop1Grid {
    /// Evenly spaced gaps, log-spaced γ, evenly spaced costs.
    pub fn regular(
        sigma2: f64,
        noise_var: f64,
        reservation: f64,
        cost: f64,
        points: usize,
        max_gap: f64,
        gamma_range: (f64, f64),
        max_cost: f64,
    ) -> Result<Self, VoiError> {
        if points < MIN_GRID_POINTS {
            return Err(VoiError::Parameter(format!(
                "grid needs at least {MIN_GRID_POINTS} points per axis, got {points}"
            )));
        }
        let step = |k: usize| k as f64 / (points - 1) as f64;
        let (g0, g1) = (gamma_range.0.ln(), gamma_range.1.ln());
        let grid = Self {
            sigma2,
            noise_var,
            reservation,
            cost,
            gaps: (0..points).map(|k| max_gap * step(k)).collect(),
            gammas: (0..points).map(|k| (g0 + (g1 - g0) * step(k)).exp()).collect(),
            costs: (0..points).map(|k| max_cost * step(k)).collect(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), VoiError> {
        for (name, axis) in [("gaps", &self.gaps), ("gammas", &self.gammas), ("costs", &self.costs)] {
            if axis.len() < MIN_GRID_POINTS {
                return Err(VoiError::Parameter(format!(
                    "{name} axis has {} points, need {MIN_GRID_POINTS}",
                    axis.len()
                )));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(VoiError::Parameter(format!("{name} axis must be strictly increasing")));
            }
        }
        if self.gaps[0] < 0.0 || self.gammas[0] <= 0.0 || self.costs[0] < 0.0 {
            return Err(VoiError::Parameter("grid axes must be non-negative (γ positive)".into()));
        }
        if !(self.sigma2 > 0.0) || !(self.noise_var > 0.0) {
            return Err(VoiError::Parameter("grid variances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub axis: &'static str,
    pub detail: String,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonotonicityReport {
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn non_increasing(&mut self, axis: &'static str, context: &str, xs: &[f64], values: &[f64]) {
        for k in 1..values.len() {
            self.checks += 1;
            let rise = values[k] - values[k - 1];
            if rise > MONOTONICITY_TOL {
                self.violations.push(Violation {
                    axis,
                    detail: format!("{context}: V rises from {} to {} between {} and {}", values[k - 1], values[k], xs[k - 1], xs[k]),
                    excess: rise,
                });
            }
        }
    }
}

fn closed(mu: f64, sigma2: f64, noise_var: f64, reservation: f64, cost: f64) -> f64 {
    let prior = ScalarBelief { mu, sigma2 };
    let ctx = DecisionContext { reservation, cost };
    voi_closed_form(prior, noise_var, ctx)
        .expect("grid parameters validated")
        .value
}

/// Check that the single-alternative value falls in the distance to the
/// reservation value, in γ, and one-for-one in the cost.
pub fn verify_prop1(grid: &Prop1Grid) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    if let Err(e) = grid.validate() {
        report.violations.push(Violation {
            axis: "grid",
            detail: e.to_string(),
            excess: f64::NAN,
        });
        return report;
    }
    let v = grid.reservation;

    for side in [-1.0, 1.0] {
        let values: Vec<f64> = grid
            .gaps
            .iter()
            .map(|&g| closed(v + side * g, grid.sigma2, grid.noise_var, v, grid.cost))
            .collect();
        let context = if side < 0.0 { "prior below reservation" } else { "prior above reservation" };
        report.non_increasing("gap", context, &grid.gaps, &values);
    }

    // γ moved through the signal noise, and separately through the prior variance
    for &gap in [grid.gaps[0], grid.gaps[grid.gaps.len() / 2], grid.gaps[grid.gaps.len() - 1]].iter() {
        for side in [-1.0, 1.0] {
            let mu = v + side * gap;
            let by_noise: Vec<f64> = grid
                .gammas
                .iter()
                .map(|&g| closed(mu, grid.sigma2, g * grid.sigma2, v, grid.cost))
                .collect();
            report.non_increasing("gamma", &format!("noise varied, gap {}", side * gap), &grid.gammas, &by_noise);
            let by_prior: Vec<f64> = grid
                .gammas
                .iter()
                .map(|&g| closed(mu, grid.noise_var / g, grid.noise_var, v, grid.cost))
                .collect();
            report.non_increasing("gamma", &format!("prior varied, gap {}", side * gap), &grid.gammas, &by_prior);
        }
    }

    let mu = v - grid.gaps[grid.gaps.len() / 2];
    let base = closed(mu, grid.sigma2, grid.noise_var, v, grid.costs[0]);
    for &c in &grid.costs[1..] {
        report.checks += 1;
        let shifted = closed(mu, grid.sigma2, grid.noise_var, v, c);
        let err = ((shifted - base) + (c - grid.costs[0])).abs();
        if err > COST_SHIFT_TOL {
            report.violations.push(Violation {
                axis: "cost",
                detail: format!("V difference at c={c} departs from -Δc by {err:e}"),
                excess: err,
            });
        }
    }
    report
}

/// Two-alternative parameters in the notation of the bundle value functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoAlternatives {
    pub mu: [f64; 2],
    /// Marginal variances `σ₁², σ₂²`.
    pub var: [f64; 2],
    pub common_var: f64,
    pub noise_var: f64,
    pub reservation: f64,
    pub cost: f64,
}

impl TwoAlternatives {
    fn belief(&self) -> Result<BeliefState, VoiError> {
        Ok(BeliefState::new(
            self.mu.to_vec(),
            self.common_var,
            vec![self.var[0] - self.common_var, self.var[1] - self.common_var],
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
    Flat,
}

/// One measured comparative static for one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMeasurement {
    pub parameter: &'static str,
    pub bundle: &'static str,
    pub claimed: Direction,
    pub delta: f64,
    pub std_err: f64,
    pub measured: Direction,
}

impl DirectionMeasurement {
    pub fn agrees(&self) -> bool {
        self.measured == self.claimed
    }
}

/// Measure how `V₁`, `V₂` and `V₁,₂` move when each parameter is nudged,
/// using paired draws. The measured sign is reported, not asserted: a
/// difference within two standard errors is reported as flat.
pub fn measure_bundle_directions(
    base: TwoAlternatives,
    step: f64,
    draws: u64,
    seed: u64,
) -> Result<Vec<DirectionMeasurement>, VoiError> {
    check_draws(draws)?;
    let params: [(&'static str, Direction, fn(&mut TwoAlternatives, f64)); 6] = [
        ("mu1", Direction::Increasing, |p, h| p.mu[0] += h),
        ("mu2", Direction::Increasing, |p, h| p.mu[1] += h),
        ("var1", Direction::Decreasing, |p, h| p.var[0] += h),
        ("var2", Direction::Decreasing, |p, h| p.var[1] += h),
        // common variance moved with the marginal variances held fixed
        ("common_var", Direction::Decreasing, |p, h| {
            p.common_var = (p.common_var + h).min(p.var[0].min(p.var[1]))
        }),
        ("noise_var", Direction::Increasing, |p, h| p.noise_var += h),
    ];
    let bundles: [(&'static str, [bool; 2]); 3] = [("V1", [true, false]), ("V2", [false, true]), ("V12", [true, true])];
    let mut out = Vec::new();
    for (name, claimed, apply) in params {
        let mut moved = base;
        apply(&mut moved, step);
        for (label, bits) in bundles {
            let mask = AcquisitionMask::new(bits.to_vec(), base.cost)?;
            let a = payoff_samples(&base.belief()?, base.noise_var, &mask, base.reservation, draws, seed)?;
            let b = payoff_samples(&moved.belief()?, moved.noise_var, &mask, moved.reservation, draws, seed)?;
            let n = a.len() as f64;
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
            let delta = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|d| (d - delta).powi(2)).sum::<f64>() / (n - 1.0);
            let std_err = (var / n).sqrt();
            let measured = if delta > 2.0 * std_err {
                Direction::Increasing
            } else if delta < -2.0 * std_err {
                Direction::Decreasing
            } else {
                Direction::Flat
            };
            out.push(DirectionMeasurement {
                parameter: name,
                bundle: label,
                claimed,
                delta,
                std_err,
                measured,
            });
        }
    }
    Ok(out)
}

fn payoff_samples(
    belief: &BeliefState,
    noise_var: f64,
    mask: &AcquisitionMask,
    reservation: f64,
    draws: u64,
    seed: u64,
) -> Result<Vec<f64>, VoiError> {
    let prior = belief.to_gaussian();
    let g = gaussian::gain(&prior, noise_var, mask)?;
    let eval = BundleEval {
        received: g.received,
        gain: g.gain,
        offset: DecisionContext { reservation, cost: 0.0 }.baseline(belief.mu()) + mask.total_cost(),
    };
    let noise_sd = noise_var.sqrt();
    let mut world = vec![0.0; belief.len()];
    let mut scratch = Vec::new();
    Ok((0..draws)
        .map(|d| {
            draw_world(belief, noise_sd, seed, d, &mut world);
            eval.payoff(belief, &world, reservation, &mut scratch)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sb(mu: f64, sigma2: f64) -> ScalarBelief {
        ScalarBelief::new(mu, sigma2).unwrap()
    }

    fn ctx(reservation: f64, cost: f64) -> DecisionContext {
        DecisionContext::new(reservation, cost).unwrap()
    }

    /// Value exactly as printed: (μ-v̄)(1-Φ(z*)) + √(σ_s²+σ_θ²)φ(z*)/(1+γ) - (v₀-v̄) - c.
    fn literal_formula(mu: f64, s2: f64, n2: f64, v: f64, c: f64) -> f64 {
        let gamma = n2 / s2;
        let s_star = ((s2 + n2) * v - n2 * mu) / s2;
        let sd = (n2 + s2).sqrt();
        let z = (s_star - mu) / sd;
        let v0 = v.max(mu);
        (mu - v) * (1.0 - normal::cdf(z)) + sd * normal::pdf(z) / (1.0 + gamma) - (v0 - v) - c
    }

    /// E_s[v(s)] - v₀ - c by Simpson quadrature over the predictive density of s.
    fn quadrature(mu: f64, s2: f64, n2: f64, v: f64, c: f64) -> f64 {
        let sd = (s2 + n2).sqrt();
        let (lo, hi, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 400_000);
        let h = (hi - lo) / n as f64;
        let f = |s: f64| {
            let post = (n2 * mu + s2 * s) / (n2 + s2);
            post.max(v) * normal::pdf((s - mu) / sd) / sd
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            acc += f(lo + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 - v.max(mu) - c
    }

    #[test]
    fn critical_signal_examples() {
        assert_eq!(critical_signal(sb(0.0, 1.0), 1.0, ctx(1.0, 0.0)).unwrap(), 2.0);
        for n2 in [0.1, 1.0, 30.0] {
            assert_eq!(critical_signal(sb(4.0, 2.0), n2, ctx(4.0, 0.0)).unwrap(), 4.0);
        }
        let s = critical_signal(sb(69.0, 400.0), 100.0, ctx(80.0, 0.0)).unwrap();
        assert!((s - 82.75).abs() < 1e-12);
        let post = gaussian::posterior_scalar(sb(69.0, 400.0), 100.0, s).unwrap();
        assert!((post.mu - 80.0).abs() < 1e-10);
        assert!(matches!(
            critical_signal(sb(69.0, 0.0), 100.0, ctx(80.0, 0.0)),
            Err(VoiError::Domain(_))
        ));
    }

    #[test]
    fn closed_form_examples() {
        let r = voi_closed_form(sb(0.0, 1.0), 1.0, ctx(0.0, 0.0)).unwrap();
        let expect = 2f64.sqrt() * normal::pdf(0.0) / 2.0;
        assert!((r.value - expect).abs() < 1e-15);
        assert!((r.value - 0.28209).abs() < 1e-5);
        assert_eq!(r.std_err, 0.0);
        assert_eq!(r.method, Method::ClosedForm);

        let r = voi_closed_form(sb(69.0, 1e-10), 1.0, ctx(80.0, 0.0)).unwrap();
        assert!(r.value.abs() < 1e-12);

        assert!(voi_closed_form(sb(0.0, 1.0), f64::NAN, ctx(0.0, 0.0)).is_err());
        assert!(DecisionContext::new(f64::INFINITY, 0.0).is_err());
        assert!(DecisionContext::new(0.0, -1.0).is_err());
    }

    #[test]
    fn closed_form_matches_literal_formula_and_quadrature() {
        for &(mu, s2, n2, v, c) in &[
            (69.0, 400.0, 100.0, 80.0, 0.0),
            (90.0, 50.0, 200.0, 80.0, 1.5),
            (0.0, 1.0, 1.0, 0.0, 0.0),
            (10.0, 3.0, 0.5, 12.0, 0.2),
        ] {
            let cf = voi_closed_form(sb(mu, s2), n2, ctx(v, c)).unwrap().value;
            assert!((cf - literal_formula(mu, s2, n2, v, c)).abs() < 1e-10);
            assert!((cf - quadrature(mu, s2, n2, v, c)).abs() < 1e-7, "{cf} vs {}", quadrature(mu, s2, n2, v, c));
        }
    }

    #[test]
    fn closed_form_matches_monte_carlo_example() {
        let c = ctx(80.0, 0.0);
        let cf = voi_closed_form(sb(69.0, 400.0), 100.0, c).unwrap();
        let b = BeliefState::scalar(sb(69.0, 400.0)).unwrap();
        let sig = SignalModel::new(100.0, vec![94.1]).unwrap();
        let mask = AcquisitionMask::from_binary(&[1], 0.0).unwrap();
        let mc = voi_monte_carlo(&b, &sig, &mask, c, 1_000_000, 17).unwrap();
        assert!((cf.value - mc.value).abs() <= 4.0 * mc.std_err, "{cf:?} {mc:?}");
        assert_eq!(mc.method, Method::MonteCarlo);
        assert!(mc.std_err > 0.0);
    }

    #[test]
    fn single_signal_exact_matches_closed_form_for_one_alternative() {
        for &(mu, s2, n2, v, c) in &[(69.0, 400.0, 100.0, 80.0, 0.0), (90.0, 50.0, 200.0, 80.0, 1.5), (0.0, 1.0, 1.0, 0.0, 0.0)] {
            let b = BeliefState::scalar(sb(mu, s2)).unwrap();
            let exact = voi_single_signal(&b, n2, 0, ctx(v, c)).unwrap().value;
            let cf = voi_closed_form(sb(mu, s2), n2, ctx(v, c)).unwrap().value;
            assert!((exact - cf).abs() < 1e-12);
        }
    }

    #[test]
    fn single_signal_exact_matches_monte_carlo_with_spillover() {
        let b = BeliefState::new(vec![70.0, 78.0, 60.0], 60.0, vec![100.0, 40.0, 250.0]).unwrap();
        let sig = SignalModel::new(90.0, vec![0.0; 3]).unwrap();
        let c = ctx(80.0, 0.5);
        for i in 0..3 {
            let exact = voi_single_signal(&b, 90.0, i, c).unwrap();
            let mask = AcquisitionMask::from_indices(3, &[i], 0.5).unwrap();
            let mc = voi_monte_carlo(&b, &sig, &mask, c, 400_000, 3).unwrap();
            assert!((exact.value - mc.value).abs() <= 4.0 * mc.std_err, "{i}: {exact:?} {mc:?}");
        }
    }

    #[test]
    fn expected_max_of_lines_brute_force() {
        let lines = [(1.0, 0.0), (0.0, 1.0), (0.5, -2.0), (-3.0, 0.3), (2.0, 0.5)];
        let brute = {
            let (lo, hi, n) = (-12.0, 12.0, 240_000);
            let h = (hi - lo) / n as f64;
            (0..=n)
                .map(|k| {
                    let z = lo + h * k as f64;
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    w * lines.iter().map(|(a, b)| a + b * z).fold(f64::NEG_INFINITY, f64::max) * normal::pdf(z)
                })
                .sum::<f64>()
                * h
        };
        assert!((expected_max_of_lines(&lines) - brute).abs() < 1e-7);
        assert!((expected_max_of_lines(&[(3.0, 0.0)]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_bundle_is_exactly_zero() {
        let b = BeliefState::new(vec![1.0, 2.0], 0.2, vec![1.0, 1.0]).unwrap();
        let sig = SignalModel::new(1.0, vec![0.0, 0.0]).unwrap();
        let r = voi_monte_carlo(&b, &sig, &AcquisitionMask::none(2), ctx(3.0, 5.0), 1000, 1).unwrap();
        assert_eq!((r.value, r.std_err, r.draws), (0.0, 0.0, 0));
    }

    #[test]
    fn monte_carlo_rejects_few_draws_and_is_deterministic() {
        let b = BeliefState::new(vec![1.0, 2.0], 0.2, vec![1.0, 1.0]).unwrap();
        let sig = SignalModel::new(1.0, vec![0.0, 0.0]).unwrap();
        let mask = AcquisitionMask::from_binary(&[1, 1], 0.1).unwrap();
        assert!(matches!(
            voi_monte_carlo(&b, &sig, &mask, ctx(2.0, 0.1), 999, 1),
            Err(VoiError::Parameter(_))
        ));
        let a = voi_monte_carlo(&b, &sig, &mask, ctx(2.0, 0.1), 20_000, 9).unwrap();
        let c = voi_monte_carlo(&b, &sig, &mask, ctx(2.0, 0.1), 20_000, 9).unwrap();
        assert_eq!(a, c);
        assert!((a.std_err - 0.0).abs() > 0.0);
    }

    #[test]
    fn symmetric_alternatives_have_exchangeable_singletons() {
        let b = BeliefState::new(vec![75.0, 75.0], 50.0, vec![150.0, 150.0]).unwrap();
        let c = ctx(80.0, 0.0);
        let m = monte_carlo_moments(
            &b,
            100.0,
            &[
                AcquisitionMask::from_binary(&[1, 0], 0.0).unwrap(),
                AcquisitionMask::from_binary(&[0, 1], 0.0).unwrap(),
            ],
            c,
            200_000,
            5,
        )
        .unwrap();
        let combined = (m.std_err(0).powi(2) + m.std_err(1).powi(2)).sqrt();
        assert!((m.mean(0) - m.mean(1)).abs() <= 4.0 * combined);
    }

    #[test]
    fn bundle_table_examples() {
        let b = BeliefState::new(vec![78.0, 76.0], 0.0, vec![200.0, 200.0]).unwrap();
        let sig = SignalModel::new(100.0, vec![0.0, 0.0]).unwrap();
        let t = bundle_table(&b, &sig, ctx(80.0, 1e9), 2000, 1).unwrap();
        assert_eq!(t.entries().len(), 4);
        assert_eq!(t.argmax(), 0);
        assert_eq!(t.label(0), "{}");
        assert_eq!(t.label(3), "{1,2}");

        let b = BeliefState::new(vec![75.0, 75.0], 0.0, vec![200.0, 200.0]).unwrap();
        let t = bundle_table(&b, &sig, ctx(80.0, 0.0), 50_000, 2).unwrap();
        let both = t.get(3);
        let best_single = t.get(1).value.max(t.get(2).value);
        assert!(both.value >= best_single - 4.0 * both.std_err);
        assert_eq!(t.get(0).value, 0.0);

        let too_many = BeliefState::new(vec![0.0; 17], 0.0, vec![1.0; 17]).unwrap();
        let sig17 = SignalModel::new(1.0, vec![0.0; 17]).unwrap();
        assert!(matches!(
            bundle_table(&too_many, &sig17, ctx(0.0, 0.0), 1000, 1),
            Err(VoiError::Parameter(_))
        ));
    }

    #[test]
    fn bundle_values_fall_when_priors_shift_down() {
        // max{μ₁, μ₂} ≤ v̄; shifting both means down 5 units
        let sig = SignalModel::new(100.0, vec![0.0, 0.0]).unwrap();
        let c = ctx(80.0, 0.5);
        let hi = BeliefState::new(vec![75.0, 72.0], 40.0, vec![160.0, 110.0]).unwrap();
        let lo = BeliefState::new(vec![70.0, 67.0], 40.0, vec![160.0, 110.0]).unwrap();
        let a = bundle_table(&hi, &sig, c, 100_000, 11).unwrap();
        let b = bundle_table(&lo, &sig, c, 100_000, 11).unwrap();
        for s in 0..4 {
            assert!(b.get(s).value <= a.get(s).value, "subset {s}");
        }
    }

    #[test]
    fn choose_alternative_examples() {
        let c = ctx(80.0, 0.0);
        assert_eq!(choose_alternative(&[78.0, 85.0], c).unwrap(), Choice::Alternative(1));
        assert_eq!(choose_alternative(&[70.0, 75.0], c).unwrap(), Choice::Outside);
        assert_eq!(choose_alternative(&[85.0, 85.0], c).unwrap(), Choice::Alternative(0));
        assert_eq!(choose_alternative(&[80.0], c).unwrap(), Choice::Alternative(0));
        assert!(choose_alternative(&[], c).is_err());
    }

    #[test]
    fn threshold_flips_choice() {
        let prior = sb(69.0, 400.0);
        let c = ctx(80.0, 0.0);
        let s_star = critical_signal(prior, 100.0, c).unwrap();
        let below = gaussian::posterior_scalar(prior, 100.0, s_star - 1e-6).unwrap();
        let above = gaussian::posterior_scalar(prior, 100.0, s_star + 1e-6).unwrap();
        assert_eq!(choose_alternative(&[below.mu], c).unwrap(), Choice::Outside);
        assert_eq!(choose_alternative(&[above.mu], c).unwrap(), Choice::Alternative(0));
    }

    #[test]
    fn prop1_grids_have_no_violations() {
        let grid = Prop1Grid::regular(400.0, 100.0, 80.0, 0.3, 50, 40.0, (0.01, 100.0), 5.0).unwrap();
        let report = verify_prop1(&grid);
        assert!(report.passed(), "{:?}", report.violations);
        assert!(report.checks > 400);
        assert!(Prop1Grid::regular(400.0, 100.0, 80.0, 0.3, 9, 40.0, (0.01, 100.0), 5.0).is_err());
    }

    #[test]
    fn prop1_report_flags_a_bad_grid() {
        let mut grid = Prop1Grid::regular(1.0, 1.0, 0.0, 0.0, 10, 4.0, (0.1, 10.0), 1.0).unwrap();
        grid.gaps.reverse();
        assert!(!verify_prop1(&grid).passed());
    }

    #[test]
    fn bundle_direction_measurement_reports_every_cell() {
        let base = TwoAlternatives {
            mu: [72.0, 70.0],
            var: [300.0, 250.0],
            common_var: 80.0,
            noise_var: 100.0,
            reservation: 80.0,
            cost: 0.0,
        };
        let m = measure_bundle_directions(base, 5.0, 20_000, 4).unwrap();
        assert_eq!(m.len(), 18);
        // raising μ₁ toward v̄ raises the value of a signal on alternative 1
        let mu1 = m.iter().find(|d| d.parameter == "mu1" && d.bundle == "V1").unwrap();
        assert_eq!(mu1.measured, Direction::Increasing);
        // a noisier signal is worth less, the opposite of the claimed sign
        let n = m.iter().find(|d| d.parameter == "noise_var" && d.bundle == "V12").unwrap();
        assert_eq!(n.measured, Direction::Decreasing);
    }

    proptest! {
        #[test]
        fn gross_value_is_nonnegative(mu in -100.0..200.0f64, s2 in 0.01..900.0f64,
                                      n2 in 0.01..900.0f64, v in -50.0..150.0f64,
                                      c in 0.0..10.0f64) {
            let r = voi_closed_form(sb(mu, s2), n2, ctx(v, c)).unwrap();
            prop_assert!(r.value + c >= -1e-12);
        }

        #[test]
        fn single_signal_exact_is_nonnegative(mu in prop::collection::vec(0.0..100.0f64, 3),
                                              common in 0.0..100.0f64,
                                              spec in prop::collection::vec(1.0..300.0f64, 3),
                                              n2 in 1.0..300.0f64, v in 0.0..100.0f64, i in 0usize..3) {
            let b = BeliefState::new(mu, common, spec).unwrap();
            let r = voi_single_signal(&b, n2, i, ctx(v, 0.0)).unwrap();
            prop_assert!(r.value >= -1e-12);
        }
    }
}

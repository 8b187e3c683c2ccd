//! Named regression specifications over the trial table.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::frame::{Column, Frame};
use super::ols::{cluster_robust_se, ols_fit, wald_test, WaldTest};
use super::AnalysisError;
use crate::normal;
use crate::rng::{label, KeyedStream};

/// Columns `prepare` needs in a trial table.
pub const REQUIRED_COLUMNS: [&str; 19] = [
    "agent_id",
    "vaccine_id",
    "attribute",
    "category",
    "received",
    "pre_belief",
    "post_belief",
    "signal_value",
    "disagreement",
    "error_pre",
    "error_post",
    "learning",
    "pref_pre",
    "pref_post",
    "wtw_pre",
    "wtw_post",
    "arm",
    "rank",
    "selected_count",
];

pub const INTERCEPT: &str = "const";

pub const FAMILIES: [&str; 5] = ["demand", "persuasion", "learning", "error_persistence", "preference"];

/// Arms whose exposure follows the elicited demand or a random draw with
/// both elicitations present.
pub const MAIN_ARMS: [&str; 3] = ["FC", "T3", "RA"];

/// Category × received cells, with not-received not-top-3 as the omitted baseline.
pub const CELL_DUMMIES: [(&str, &str, bool); 5] = [
    ("d_sel_rec", "selected_top3", true),
    ("d_sel_norec", "selected_top3", false),
    ("d_nsel_rec", "not_selected_top3", true),
    ("d_nsel_norec", "not_selected_top3", false),
    ("d_nt3_rec", "not_top3", true),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Equals(String, f64),
    TextIn(String, Vec<String>),
    /// Cell is not blank.
    Present(String),
}

impl Condition {
    fn describe(&self) -> String {
        match self {
            Condition::Equals(c, v) => format!("{c} == {v}"),
            Condition::TextIn(c, vs) => format!("{c} in {{{}}}", vs.join(",")),
            Condition::Present(c) => format!("{c} present"),
        }
    }

    fn mask(&self, frame: &Frame) -> Result<Vec<bool>, AnalysisError> {
        Ok(match self {
            Condition::Equals(c, v) => frame.num(c)?.iter().map(|x| x == v).collect(),
            Condition::TextIn(c, vs) => frame.text(c)?.iter().map(|x| vs.contains(x)).collect(),
            Condition::Present(c) => match frame.column(c)? {
                Column::Num(v) => v.iter().map(|x| !x.is_nan()).collect(),
                Column::Text(v) => v.iter().map(|x| !x.is_empty()).collect(),
            },
        })
    }
}

/// Linear restrictions `Σ w·β = 0`, one row per inner vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    pub description: String,
    pub rows: Vec<Vec<(String, f64)>>,
}

impl Contrast {
    fn difference(description: &str, plus: &str, minus: Option<&str>) -> Self {
        let mut row = vec![(plus.to_string(), 1.0)];
        if let Some(m) = minus {
            row.push((m.to_string(), -1.0));
        }
        Contrast {
            description: description.to_string(),
            rows: vec![row],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub name: String,
    pub family: String,
    pub outcome: String,
    /// Regressors after the intercept.
    pub regressors: Vec<String>,
    pub cluster: String,
    pub sample: Vec<Condition>,
    pub contrasts: Vec<Contrast>,
    /// Coefficients checked by planted recovery, with their planted values.
    pub planted: Vec<(String, f64)>,
}

impl RegressionSpec {
    pub fn terms(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.regressors.iter().cloned())
            .collect()
    }

    pub fn sample_description(&self) -> String {
        if self.sample.is_empty() {
            "all rows".into()
        } else {
            self.sample.iter().map(Condition::describe).collect::<Vec<_>>().join(" & ")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub spec: String,
    pub family: String,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub cluster_se: Vec<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r_squared: f64,
    pub wald_tests: Vec<WaldTest>,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<(f64, f64)> {
        let i = self.terms.iter().position(|t| t == term)?;
        Some((self.coefficients[i], self.cluster_se[i]))
    }

    pub fn t_stat(&self, i: usize) -> f64 {
        self.coefficients[i] / self.cluster_se[i]
    }

    /// Two-sided normal-reference p-value.
    pub fn p_value(&self, i: usize) -> f64 {
        normal::two_sided_p(self.t_stat(i))
    }
}

fn text_eq(frame: &Frame, col: &str, value: &str) -> Result<Vec<f64>, AnalysisError> {
    Ok(frame.text(col)?.iter().map(|x| f64::from(u8::from(x == value))).collect())
}

/// Per-row key formed from the text of several columns.
fn keys(frame: &Frame, cols: &[&str]) -> Result<Vec<String>, AnalysisError> {
    let parts: Vec<Vec<String>> = cols.iter().map(|c| frame.text(c)).collect::<Result<_, _>>()?;
    Ok((0..frame.rows())
        .map(|i| parts.iter().map(|p| p[i].as_str()).collect::<Vec<_>>().join("\u{1f}"))
        .collect())
}

pub fn covariate_columns(frame: &Frame) -> Vec<String> {
    frame.names().iter().filter(|n| n.starts_with("cov_")).cloned().collect()
}

pub fn attributes(frame: &Frame) -> Result<Vec<String>, AnalysisError> {
    let mut seen: Vec<String> = frame.text("attribute")?;
    seen.sort();
    seen.dedup();
    Ok(seen)
}

/// Add the constructed columns used by the specs.
pub fn prepare(raw: &Frame) -> Result<Frame, AnalysisError> {
    raw.require(&REQUIRED_COLUMNS)?;
    let mut f = raw.clone();
    let n = f.rows();
    let pre = raw.num("pre_belief")?.to_vec();
    let post = raw.num("post_belief")?.to_vec();
    let received = raw.num("received")?.to_vec();
    let category = raw.text("category")?;
    let err_pre: Vec<f64> = raw.num("error_pre")?.iter().map(|e| e.abs()).collect();
    let err_post: Vec<f64> = raw.num("error_post")?.iter().map(|e| e.abs()).collect();

    f.insert_num("is_hospitalization", text_eq(raw, "attribute", "hospitalization")?)?;
    f.insert_num("selected", text_eq(raw, "category", "selected_top3")?)?;
    f.insert_num(
        "main_arm",
        raw.text("arm")?.iter().map(|a| f64::from(u8::from(MAIN_ARMS.contains(&a.as_str())))).collect(),
    )?;
    f.insert_num("belief_change", post.iter().zip(&pre).map(|(a, b)| a - b).collect())?;
    f.insert_num(
        "pref_change",
        raw.num("pref_post")?.iter().zip(raw.num("pref_pre")?).map(|(a, b)| a - b).collect(),
    )?;
    f.insert_num(
        "wtw_change",
        raw.num("wtw_post")?.iter().zip(raw.num("wtw_pre")?).map(|(a, b)| a - b).collect(),
    )?;

    let group = keys(raw, &["agent_id", "attribute"])?;
    let mut best: HashMap<&str, f64> = HashMap::new();
    for (g, &p) in group.iter().zip(&pre) {
        let e = best.entry(g.as_str()).or_insert(f64::NEG_INFINITY);
        *e = e.max(p);
    }
    f.insert_num("gap", group.iter().zip(&pre).map(|(g, p)| best[g.as_str()] - p).collect())?;

    f.insert_num("abs_error_pre", err_pre.clone())?;
    f.insert_num("abs_error_post", err_post)?;
    for (name, cat, rec) in CELL_DUMMIES {
        let d: Vec<f64> = (0..n)
            .map(|i| f64::from(u8::from(category[i] == cat && (received[i] == 1.0) == rec)))
            .collect();
        let inter: Vec<f64> = d.iter().zip(&err_pre).map(|(a, b)| a * b).collect();
        f.insert_num(name, d)?;
        f.insert_num(&interaction_name(name), inter)?;
    }

    // Belief change in each attribute, aligned on (agent, vaccine).
    let cell = keys(raw, &["agent_id", "vaccine_id"])?;
    let attr = raw.text("attribute")?;
    let mut change: BTreeMap<&str, HashMap<&str, f64>> = BTreeMap::new();
    for i in 0..n {
        change
            .entry(attr[i].as_str())
            .or_default()
            .insert(cell[i].as_str(), post[i] - pre[i]);
    }
    for (a, by_cell) in &change {
        let col = cell.iter().map(|c| by_cell.get(c.as_str()).copied().unwrap_or(f64::NAN)).collect();
        f.insert_num(&format!("change_{a}"), col)?;
    }
    Ok(f)
}

pub fn interaction_name(dummy: &str) -> String {
    format!("abs_error_pre_x_{}", dummy.trim_start_matches("d_"))
}

fn main_arms() -> Condition {
    Condition::TextIn("arm".into(), MAIN_ARMS.iter().map(|s| s.to_string()).collect())
}

/// Every spec, given the covariates and attributes present in the data.
pub fn spec_library(covariates: &[String], attributes: &[String]) -> Vec<RegressionSpec> {
    let spec = |name: String, family: &str, outcome: &str, core: Vec<String>, sample: Vec<Condition>| RegressionSpec {
        name,
        family: family.into(),
        outcome: outcome.into(),
        regressors: core.into_iter().chain(covariates.iter().cloned()).collect(),
        cluster: "agent_id".into(),
        sample,
        contrasts: vec![],
        planted: vec![],
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut out = Vec::new();

    for a in attributes {
        for (index, regressor) in [("belief", "pre_belief"), ("gap", "gap")] {
            for (outcome, present) in [("rank", "rank"), ("selected", "selected_count")] {
                let mut sp = spec(
                    format!("demand_{index}_{outcome}_{a}"),
                    "demand",
                    outcome,
                    s(&[regressor]),
                    vec![
                        Condition::TextIn("attribute".into(), vec![a.clone()]),
                        Condition::Present(present.into()),
                    ],
                );
                sp.planted = vec![(regressor.to_string(), -0.05)];
                out.push(sp);
            }
        }
    }

    let hosp = attributes.len() > 1;
    let with_hosp = |mut v: Vec<String>| {
        if hosp {
            v.push("is_hospitalization".into());
        }
        v
    };

    let mut persuasion = spec(
        "persuasion".into(),
        "persuasion",
        "belief_change",
        with_hosp(s(&["disagreement"])),
        vec![Condition::Equals("received".into(), 1.0), main_arms()],
    );
    persuasion.planted = vec![("disagreement".into(), 0.4)];
    out.push(persuasion);

    let dummies: Vec<String> = CELL_DUMMIES.iter().map(|d| d.0.to_string()).collect();
    let mut learning = spec(
        "learning".into(),
        "learning",
        "learning",
        with_hosp(dummies.clone()),
        vec![main_arms()],
    );
    learning.contrasts = vec![
        Contrast::difference("selected_top3: received - not received", "d_sel_rec", Some("d_sel_norec")),
        Contrast::difference("not_selected_top3: received - not received", "d_nsel_rec", Some("d_nsel_norec")),
        Contrast::difference("not_top3: received - not received", "d_nt3_rec", None),
        Contrast {
            description: "equal treatment effects across categories".into(),
            rows: vec![
                vec![
                    ("d_sel_rec".into(), 1.0),
                    ("d_sel_norec".into(), -1.0),
                    ("d_nt3_rec".into(), -1.0),
                ],
                vec![
                    ("d_nsel_rec".into(), 1.0),
                    ("d_nsel_norec".into(), -1.0),
                    ("d_nt3_rec".into(), -1.0),
                ],
            ],
        },
    ];
    learning.planted = vec![("d_nt3_rec".into(), 4.5), ("d_sel_rec".into(), 1.0)];
    out.push(learning);

    let interactions: Vec<String> = dummies.iter().map(|d| interaction_name(d)).collect();
    let mut persistence = spec(
        "error_persistence".into(),
        "error_persistence",
        "abs_error_post",
        with_hosp(
            std::iter::once("abs_error_pre".to_string())
                .chain(dummies.iter().cloned())
                .chain(interactions.iter().cloned())
                .collect(),
        ),
        vec![main_arms()],
    );
    persistence.contrasts = vec![Contrast::difference(
        "not_top3 received: slope change",
        "abs_error_pre_x_nt3_rec",
        None,
    )];
    persistence.planted = vec![("abs_error_pre".into(), 0.8), ("abs_error_pre_x_nt3_rec".into(), -0.16)];
    out.push(persistence);

    if let Some(first) = attributes.first() {
        let changes: Vec<String> = attributes.iter().map(|a| format!("change_{a}")).collect();
        let one_row = Condition::TextIn("attribute".into(), vec![first.clone()]);
        let focal = changes[0].clone();
        let mut pref = spec(
            "preference".into(),
            "preference",
            "pref_change",
            changes.clone(),
            vec![one_row.clone()],
        );
        pref.planted = vec![(focal.clone(), 0.1)];
        out.push(pref);
        let mut wtw = spec(
            "preference_wtw".into(),
            "preference",
            "wtw_change",
            changes,
            vec![one_row, Condition::Present("wtw_change".into())],
        );
        wtw.planted = vec![(focal, 0.05)];
        out.push(wtw);
    }
    out
}

/// Design matrix, outcome and cluster labels for one spec.
#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub clusters: Vec<String>,
}

pub fn design(frame: &Frame, spec: &RegressionSpec) -> Result<Design, AnalysisError> {
    let mut needed: Vec<&str> = vec![spec.outcome.as_str(), spec.cluster.as_str()];
    needed.extend(spec.regressors.iter().map(String::as_str));
    frame.require(&needed)?;
    let mut keep = vec![true; frame.rows()];
    for c in &spec.sample {
        for (k, m) in keep.iter_mut().zip(c.mask(frame)?) {
            *k &= m;
        }
    }
    let sub = frame.filter(&keep);
    let terms = spec.terms();
    let n = sub.rows();
    let cols: Vec<&[f64]> = spec
        .regressors
        .iter()
        .map(|r| sub.num(r))
        .collect::<Result<_, _>>()?;
    let x = DMatrix::from_fn(n, terms.len(), |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let y = DVector::from_column_slice(sub.num(&spec.outcome)?);
    for (j, name) in terms.iter().enumerate() {
        if let Some(i) = (0..n).find(|&i| x[(i, j)].is_nan()) {
            return Err(AnalysisError::Estimation(format!(
                "{}: {name} is blank in sample row {i}; restrict the sample",
                spec.name
            )));
        }
    }
    if let Some(i) = y.iter().position(|v| v.is_nan()) {
        return Err(AnalysisError::Estimation(format!(
            "{}: outcome {} is blank in sample row {i}",
            spec.name, spec.outcome
        )));
    }
    Ok(Design {
        terms,
        x,
        y,
        clusters: sub.text(&spec.cluster)?,
    })
}

fn restriction(terms: &[String], c: &Contrast) -> Result<DMatrix<f64>, AnalysisError> {
    let mut r = DMatrix::zeros(c.rows.len(), terms.len());
    for (i, row) in c.rows.iter().enumerate() {
        for (term, w) in row {
            let j = terms
                .iter()
                .position(|t| t == term)
                .ok_or_else(|| AnalysisError::Estimation(format!("contrast names unknown term {term}")))?;
            r[(i, j)] = *w;
        }
    }
    Ok(r)
}

pub fn fit_design(spec: &RegressionSpec, d: &Design) -> Result<RegressionResult, AnalysisError> {
    let fit = ols_fit(&d.x, &d.y, &d.terms).map_err(|e| match e {
        AnalysisError::RankDeficient { columns } => AnalysisError::RankDeficient {
            columns: columns.into_iter().map(|c| format!("{}:{c}", spec.name)).collect(),
        },
        other => other,
    })?;
    let cov = cluster_robust_se(&d.x, &fit, &d.clusters)?;
    let wald_tests = spec
        .contrasts
        .iter()
        .map(|c| {
            let r = restriction(&d.terms, c)?;
            wald_test(&c.description, &fit.coefficients, &cov.vcov, &r, &DVector::zeros(r.nrows()))
        })
        .collect::<Result<_, _>>()?;
    Ok(RegressionResult {
        spec: spec.name.clone(),
        family: spec.family.clone(),
        terms: d.terms.clone(),
        coefficients: fit.coefficients.iter().copied().collect(),
        cluster_se: cov.se.iter().copied().collect(),
        n_obs: fit.n_obs,
        n_clusters: cov.n_clusters,
        r_squared: fit.r_squared,
        wald_tests,
    })
}

pub fn fit_spec(frame: &Frame, spec: &RegressionSpec) -> Result<RegressionResult, AnalysisError> {
    fit_design(spec, &design(frame, spec)?)
}

/// Prepare `raw` and fit every spec in `families` (all when empty).
pub fn run_specs(raw: &Frame, families: &[String]) -> Result<Vec<RegressionResult>, AnalysisError> {
    for f in families {
        if !FAMILIES.contains(&f.as_str()) {
            return Err(AnalysisError::UnknownFamily(f.clone()));
        }
    }
    let frame = prepare(raw)?;
    let specs: Vec<RegressionSpec> = spec_library(&covariate_columns(&frame), &attributes(&frame)?)
        .into_iter()
        .filter(|s| families.is_empty() || families.contains(&s.family))
        .collect();
    specs.par_iter().map(|s| fit_spec(&frame, s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub spec: String,
    pub successes: usize,
    pub replications: usize,
}

/// Replace the outcome with `Xβ + cluster effect + noise` and count the
/// replications in which every planted coefficient lies within 3 SE.
pub fn planted_recovery(
    frame: &Frame,
    spec: &RegressionSpec,
    replications: usize,
    seed: u64,
) -> Result<RecoveryReport, AnalysisError> {
    let d = design(frame, spec)?;
    let mut beta = DVector::from_element(d.terms.len(), 0.25);
    beta[0] = 1.0;
    let mut focal = Vec::new();
    for (term, value) in &spec.planted {
        let j = d
            .terms
            .iter()
            .position(|t| t == term)
            .ok_or_else(|| AnalysisError::Estimation(format!("planted term {term} is not in {}", spec.name)))?;
        beta[j] = *value;
        focal.push(j);
    }
    let mut ids: BTreeMap<&str, u64> = BTreeMap::new();
    for c in &d.clusters {
        let next = ids.len() as u64;
        ids.entry(c.as_str()).or_insert(next);
    }
    let cluster_idx: Vec<u64> = d.clusters.iter().map(|c| ids[c.as_str()]).collect();
    let mean = &d.x * &beta;
    let tag = label(&spec.name);
    let hits: Vec<bool> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let base = KeyedStream::new(seed, &[tag, rep]);
            let effects: Vec<f64> = (0..ids.len() as u64).map(|g| base.derive(g).standard_normal()).collect();
            let mut noise = base.derive(u64::MAX);
            let y = DVector::from_fn(mean.len(), |i, _| mean[i] + effects[cluster_idx[i] as usize] + noise.standard_normal());
            let planted = Design {
                terms: d.terms.clone(),
                x: d.x.clone(),
                y,
                clusters: d.clusters.clone(),
            };
            let r = fit_design(spec, &planted)?;
            Ok(focal
                .iter()
                .all(|&j| (r.coefficients[j] - beta[j]).abs() <= 3.0 * r.cluster_se[j]))
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok(RecoveryReport {
        spec: spec.name.clone(),
        successes: hits.iter().filter(|&&h| h).count(),
        replications,
    })
}

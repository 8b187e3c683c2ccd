//! One row per agent × vaccine × attribute, and its CSV encoding.

use std::io::Write;

use super::scenario::Attribute;
use super::{DemandCategory, SimError, TreatmentArm};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub agent_id: u64,
    /// 1-based.
    pub vaccine_id: usize,
    pub vaccine: String,
    pub attribute: Attribute,
    pub category: DemandCategory,
    pub received: bool,
    pub pre_belief: f64,
    pub post_belief: f64,
    pub signal_value: f64,
    /// Signal minus pre-treatment belief.
    pub disagreement: f64,
    pub error_pre: f64,
    pub error_post: f64,
    /// `|error_pre| - |error_post|`.
    pub learning: f64,
    pub pref_pre: f64,
    pub pref_post: f64,
    /// `None` marks never-take.
    pub wtw_pre: Option<f64>,
    pub wtw_post: Option<f64>,
    pub arm: TreatmentArm,
    /// 1-based; `None` when no ranking was elicited.
    pub rank: Option<usize>,
    pub selected_count: Option<usize>,
    pub familiarity: f64,
    pub reservation: f64,
    pub received_before: bool,
    pub covariates: Vec<f64>,
}

/// Fixed leading columns of `trials.csv`; covariates follow as `cov_<name>`.
pub const TRIAL_COLUMNS: [&str; 25] = [
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
    "never_take_pre",
    "never_take_post",
    "arm",
    "vaccine",
    "rank",
    "selected_count",
    "familiarity",
    "reservation",
    "received_before",
];

/// 17 significant digits, so values round-trip exactly.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

fn opt_int(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trials<W: Write>(out: W, records: &[TrialRecord], covariate_names: &[String]) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let header: Vec<String> = TRIAL_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(covariate_names.iter().map(|n| format!("cov_{n}")))
        .collect();
    w.write_record(&header)?;
    for r in records {
        if r.covariates.len() != covariate_names.len() {
            return Err(SimError::Protocol(format!(
                "agent {} has {} covariates, header has {}",
                r.agent_id,
                r.covariates.len(),
                covariate_names.len()
            )));
        }
        let mut row = vec![
            r.agent_id.to_string(),
            r.vaccine_id.to_string(),
            r.attribute.name().to_string(),
            r.category.name().to_string(),
            flag(r.received),
            real(r.pre_belief),
            real(r.post_belief),
            real(r.signal_value),
            real(r.disagreement),
            real(r.error_pre),
            real(r.error_post),
            real(r.learning),
            real(r.pref_pre),
            real(r.pref_post),
            opt_real(r.wtw_pre),
            opt_real(r.wtw_post),
            flag(r.wtw_pre.is_none()),
            flag(r.wtw_post.is_none()),
            r.arm.name().to_string(),
            r.vaccine.clone(),
            opt_int(r.rank),
            opt_int(r.selected_count),
            real(r.familiarity),
            real(r.reservation),
            flag(r.received_before),
        ];
        row.extend(r.covariates.iter().map(|&c| real(c)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 89.08, -12.98, 1e-300, 100.0] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn header_and_blank_optionals() {
        let r = TrialRecord {
            agent_id: 1,
            vaccine_id: 2,
            vaccine: "Johnson & Johnson".into(),
            attribute: Attribute::Efficacy,
            category: DemandCategory::Unelicited,
            received: true,
            pre_belief: 50.0,
            post_belief: 60.0,
            signal_value: 66.9,
            disagreement: 16.9,
            error_pre: -16.9,
            error_post: -6.9,
            learning: 10.0,
            pref_pre: 30.0,
            pref_post: 45.0,
            wtw_pre: None,
            wtw_post: Some(3.0),
            arm: TreatmentArm::RaStar,
            rank: None,
            selected_count: None,
            familiarity: 3.0,
            reservation: 70.0,
            received_before: false,
            covariates: vec![1.0],
        };
        let mut buf = Vec::new();
        write_trials(&mut buf, &[r.clone()], &["female".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().ends_with("received_before,cov_female"));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[14], "");
        assert_eq!(fields[16], "1");
        assert_eq!(fields[20], "");
        assert!(write_trials(Vec::new(), &[r], &[]).is_err());
    }
}

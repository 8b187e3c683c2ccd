//! Belief-change and preference summary tables.

use std::collections::{BTreeMap, HashSet};

use super::frame::Frame;
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation; NaN below two observations.
    pub sd: f64,
    pub n: usize,
}

impl Moments {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Moments { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Moments { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefRow {
    pub attribute: String,
    pub row: &'static str,
    pub sample: &'static str,
    pub stats: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub attribute: String,
    pub category: String,
    pub received: bool,
    pub belief_change: Moments,
    pub learning: Moments,
    pub error_pre: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRow {
    pub vaccine: String,
    pub pref_pre: Moments,
    pub pref_post: Moments,
    /// Among those who would take it.
    pub wtw_pre: Moments,
    pub wtw_post: Moments,
    pub never_take_pre_pct: f64,
    pub never_take_post_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTables {
    pub beliefs: Vec<BeliefRow>,
    pub cells: Vec<CellRow>,
    pub preferences: Vec<PreferenceRow>,
}

pub const ADJUSTMENT: &str = "adjustment_post_minus_pre";
pub const PRE_MINUS_INFO: &str = "pre_minus_information";
pub const POST_MINUS_INFO: &str = "post_minus_information";

pub fn summary_tables(frame: &Frame) -> Result<SummaryTables, AnalysisError> {
    frame.require(&[
        "agent_id",
        "vaccine_id",
        "vaccine",
        "attribute",
        "category",
        "received",
        "pre_belief",
        "post_belief",
        "signal_value",
        "learning",
        "pref_pre",
        "pref_post",
        "wtw_pre",
        "wtw_post",
    ])?;
    if frame.rows() == 0 {
        return Err(AnalysisError::Estimation("trial table is empty".into()));
    }
    let attr = frame.text("attribute")?;
    let cat = frame.text("category")?;
    let rec = frame.num("received")?;
    let pre = frame.num("pre_belief")?;
    let post = frame.num("post_belief")?;
    let s = frame.num("signal_value")?;
    let learning = frame.num("learning")?;
    let n = frame.rows();

    let mut attributes: Vec<&str> = attr.iter().map(String::as_str).collect();
    attributes.sort_unstable();
    attributes.dedup();

    let mut beliefs = Vec::new();
    for &a in &attributes {
        let attr = &attr;
        let rows = |received_only: bool| (0..n).filter(move |&i| attr[i] == a && (!received_only || rec[i] == 1.0));
        for (sample, only) in [("all", false), ("received", true)] {
            beliefs.push(BeliefRow {
                attribute: a.into(),
                row: ADJUSTMENT,
                sample,
                stats: Moments::of(rows(only).map(|i| post[i] - pre[i])),
            });
            beliefs.push(BeliefRow {
                attribute: a.into(),
                row: PRE_MINUS_INFO,
                sample,
                stats: Moments::of(rows(only).map(|i| pre[i] - s[i])),
            });
            beliefs.push(BeliefRow {
                attribute: a.into(),
                row: POST_MINUS_INFO,
                sample,
                stats: Moments::of(rows(only).map(|i| post[i] - s[i])),
            });
        }
    }

    let mut groups: BTreeMap<(&str, &str, bool), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups
            .entry((attr[i].as_str(), cat[i].as_str(), rec[i] == 1.0))
            .or_default()
            .push(i);
    }
    let cells = groups
        .into_iter()
        .map(|((a, c, r), idx)| CellRow {
            attribute: a.into(),
            category: c.into(),
            received: r,
            belief_change: Moments::of(idx.iter().map(|&i| post[i] - pre[i])),
            learning: Moments::of(idx.iter().map(|&i| learning[i])),
            error_pre: Moments::of(idx.iter().map(|&i| pre[i] - s[i])),
        })
        .collect();

    // Preferences repeat across attribute rows; keep one row per (agent, vaccine).
    let agent = frame.text("agent_id")?;
    let vid = frame.num("vaccine_id")?;
    let vaccine = frame.text("vaccine")?;
    let (pp, pq) = (frame.num("pref_pre")?, frame.num("pref_post")?);
    let (wp, wq) = (frame.num("wtw_pre")?, frame.num("wtw_post")?);
    let mut seen = HashSet::new();
    let mut by_vaccine: BTreeMap<(u64, String), Vec<usize>> = BTreeMap::new();
    let mut all = Vec::new();
    for i in 0..n {
        if seen.insert((agent[i].as_str(), vid[i].to_bits())) {
            by_vaccine.entry((vid[i] as u64, vaccine[i].clone())).or_default().push(i);
            all.push(i);
        }
    }
    let pref_row = |name: String, idx: &[usize]| {
        let pct = |w: &[f64]| 100.0 * idx.iter().filter(|&&i| w[i].is_nan()).count() as f64 / idx.len() as f64;
        PreferenceRow {
            vaccine: name,
            pref_pre: Moments::of(idx.iter().map(|&i| pp[i])),
            pref_post: Moments::of(idx.iter().map(|&i| pq[i])),
            wtw_pre: Moments::of(idx.iter().map(|&i| wp[i]).filter(|w| !w.is_nan())),
            wtw_post: Moments::of(idx.iter().map(|&i| wq[i]).filter(|w| !w.is_nan())),
            never_take_pre_pct: pct(wp),
            never_take_post_pct: pct(wq),
        }
    };
    let mut preferences: Vec<PreferenceRow> = by_vaccine
        .into_iter()
        .map(|((_, name), idx)| pref_row(name, &idx))
        .collect();
    preferences.push(pref_row("Total".into(), &all));

    Ok(SummaryTables {
        beliefs,
        cells,
        preferences,
    })
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

impl SummaryTables {
    pub fn belief_csv(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let header = vec!["attribute", "row", "sample", "mean", "sd", "n"];
        let rows = self
            .beliefs
            .iter()
            .map(|r| {
                vec![
                    r.attribute.clone(),
                    r.row.into(),
                    r.sample.into(),
                    num(r.stats.mean),
                    num(r.stats.sd),
                    r.stats.n.to_string(),
                ]
            })
            .collect();
        (header, rows)
    }

    pub fn cell_csv(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let header = vec![
            "attribute",
            "category",
            "received",
            "n",
            "belief_change_mean",
            "belief_change_sd",
            "learning_mean",
            "learning_sd",
            "error_pre_mean",
            "error_pre_sd",
        ];
        let rows = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.attribute.clone(),
                    c.category.clone(),
                    u8::from(c.received).to_string(),
                    c.learning.n.to_string(),
                    num(c.belief_change.mean),
                    num(c.belief_change.sd),
                    num(c.learning.mean),
                    num(c.learning.sd),
                    num(c.error_pre.mean),
                    num(c.error_pre.sd),
                ]
            })
            .collect();
        (header, rows)
    }

    pub fn preference_csv(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let header = vec![
            "vaccine",
            "n",
            "pref_pre_mean",
            "pref_post_mean",
            "wtw_pre_mean",
            "wtw_post_mean",
            "never_take_pre_pct",
            "never_take_post_pct",
        ];
        let rows = self
            .preferences
            .iter()
            .map(|p| {
                vec![
                    p.vaccine.clone(),
                    p.pref_pre.n.to_string(),
                    num(p.pref_pre.mean),
                    num(p.pref_post.mean),
                    num(p.wtw_pre.mean),
                    num(p.wtw_post.mean),
                    num(p.never_take_pre_pct),
                    num(p.never_take_post_pct),
                ]
            })
            .collect();
        (header, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(rows: &[(u64, u64, &str, f64, f64, f64)]) -> Frame {
        let mut text = String::from(
            "agent_id,vaccine_id,vaccine,attribute,category,received,pre_belief,post_belief,signal_value,learning,pref_pre,pref_post,wtw_pre,wtw_post\n",
        );
        for (a, v, attr, pre, post, s) in rows {
            let l = (pre - s).abs() - (post - s).abs();
            text += &format!("{a},{v},V{v},{attr},not_top3,1,{pre},{post},{s},{l},50,55,,10\n");
        }
        Frame::from_csv(text.as_bytes()).unwrap()
    }

    #[test]
    fn no_change_gives_zero_adjustment() {
        let f = frame(&[(1, 1, "efficacy", 60.0, 60.0, 70.0), (2, 1, "efficacy", 50.0, 50.0, 70.0)]);
        let t = summary_tables(&f).unwrap();
        for r in t.beliefs.iter().filter(|r| r.row == ADJUSTMENT) {
            assert_eq!(r.stats.mean, 0.0);
        }
        let pre = t.beliefs.iter().find(|r| r.row == PRE_MINUS_INFO && r.sample == "all").unwrap();
        assert_eq!(pre.stats.mean, -15.0);
    }

    #[test]
    fn beliefs_at_truth_give_zero_errors() {
        let f = frame(&[(1, 1, "efficacy", 70.0, 70.0, 70.0), (1, 2, "efficacy", 90.0, 90.0, 90.0)]);
        let t = summary_tables(&f).unwrap();
        for r in t.beliefs.iter().filter(|r| r.row != ADJUSTMENT) {
            assert_eq!(r.stats.mean, 0.0);
        }
    }

    #[test]
    fn preferences_count_agent_vaccine_pairs_once() {
        let f = frame(&[
            (1, 1, "efficacy", 70.0, 70.0, 70.0),
            (1, 1, "hospitalization", 70.0, 70.0, 70.0),
            (2, 1, "efficacy", 70.0, 70.0, 70.0),
            (2, 1, "hospitalization", 70.0, 70.0, 70.0),
        ]);
        let t = summary_tables(&f).unwrap();
        let total = t.preferences.last().unwrap();
        assert_eq!(total.vaccine, "Total");
        assert_eq!(total.pref_pre.n, 2);
        assert_eq!(total.never_take_pre_pct, 100.0);
        assert_eq!(total.never_take_post_pct, 0.0);
        assert_eq!(total.wtw_post.mean, 10.0);
    }
}

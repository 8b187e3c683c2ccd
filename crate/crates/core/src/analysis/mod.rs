//! Estimation over trial tables: OLS with cluster-robust errors, the named
//! regression specs, Wald contrasts, binned scatters and summary tables.

mod bins;
mod frame;
mod ols;
mod specs;
mod summary;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use bins::{bin_scatter, bin_sizes, DEFAULT_BIN_SIZE};
pub use frame::{Column, Frame};
pub use ols::{cluster_robust_se, ols_fit, wald_test, ClusterCovariance, OlsFit, WaldTest, RANK_TOL};
pub use specs::{
    attributes, covariate_columns, design, fit_design, fit_spec, interaction_name, planted_recovery, prepare,
    run_specs, spec_library, Condition, Contrast, Design, RecoveryReport, RegressionResult, RegressionSpec,
    CELL_DUMMIES, FAMILIES, INTERCEPT, MAIN_ARMS, REQUIRED_COLUMNS,
};
pub use summary::{
    summary_tables, BeliefRow, CellRow, Moments, PreferenceRow, SummaryTables, ADJUSTMENT, POST_MINUS_INFO,
    PRE_MINUS_INFO,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trial table is missing columns: {}", .missing.join(", "))]
    Schema { missing: Vec<String> },
    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("unknown spec family {0:?} (expected one of {families})", families = FAMILIES.join(", "))]
    UnknownFamily(String),
    #[error("malformed trial table: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), AnalysisError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn real(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

const COEF_HEADER: [&str; 6] = ["spec", "term", "estimate", "cluster_se", "t", "p"];

fn coefficient_rows<'a>(results: impl Iterator<Item = &'a RegressionResult>) -> Vec<Vec<String>> {
    results
        .flat_map(|r| {
            (0..r.terms.len()).map(move |i| {
                vec![
                    r.spec.clone(),
                    r.terms[i].clone(),
                    real(r.coefficients[i]),
                    real(r.cluster_se[i]),
                    real(r.t_stat(i)),
                    real(r.p_value(i)),
                ]
            })
        })
        .collect()
}

/// Fit the requested spec families (all when empty) and write every table
/// into `out_dir`. Returns the files written, in a fixed order.
pub fn write_analysis(trials: &Frame, families: &[String], out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    let results = run_specs(trials, families)?;
    let tables = summary_tables(trials)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: &[Vec<String>]| -> Result<(), AnalysisError> {
        let path = out_dir.join(name);
        write_csv(&path, header, rows)?;
        written.push(path);
        Ok(())
    };

    emit("regressions.csv", &COEF_HEADER, &coefficient_rows(results.iter()))?;
    let mut fams: Vec<&str> = results.iter().map(|r| r.family.as_str()).collect();
    fams.dedup();
    for fam in fams {
        emit(
            &format!("regressions_{fam}.csv"),
            &COEF_HEADER,
            &coefficient_rows(results.iter().filter(|r| r.family == fam)),
        )?;
    }
    let fits: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.spec.clone(),
                r.family.clone(),
                r.n_obs.to_string(),
                r.n_clusters.to_string(),
                real(r.r_squared),
            ]
        })
        .collect();
    emit("regression_fits.csv", &["spec", "family", "n_obs", "n_clusters", "r_squared"], &fits)?;
    let walds: Vec<Vec<String>> = results
        .iter()
        .flat_map(|r| {
            r.wald_tests.iter().map(move |w| {
                vec![
                    r.spec.clone(),
                    w.description.clone(),
                    w.estimate.iter().map(|&e| real(e)).collect::<Vec<_>>().join(";"),
                    real(w.statistic),
                    w.df.to_string(),
                    real(w.p_value),
                ]
            })
        })
        .collect();
    emit("wald_tests.csv", &["spec", "test", "estimate", "statistic", "df", "p"], &walds)?;

    let (h, rows) = tables.belief_csv();
    emit("summary_beliefs.csv", &h, &rows)?;
    let (h, rows) = tables.cell_csv();
    emit("summary_belief_cells.csv", &h, &rows)?;
    let (h, rows) = tables.preference_csv();
    emit("summary_preferences.csv", &h, &rows)?;

    let received: Vec<bool> = trials.num("received")?.iter().map(|&r| r == 1.0).collect();
    let sub = trials.filter(&received);
    let (x, y) = (sub.num("error_pre")?, sub.num("error_post")?);
    let bins: Vec<Vec<String>> = if x.len() >= DEFAULT_BIN_SIZE {
        bin_scatter(x, y, DEFAULT_BIN_SIZE)
            .into_iter()
            .map(|(a, b)| vec![real(a), real(b)])
            .collect()
    } else {
        Vec::new()
    };
    emit("bins_error_received.csv", &["error_pre_median", "error_post_median"], &bins)?;
    Ok(written)
}

//! Least squares, cluster-robust covariance, and Wald tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::AnalysisError;

/// Relative size of an `R` diagonal entry below which a column is treated
/// as a linear combination of the ones before it.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(XᵀX)⁻¹`.
    pub bread: DMatrix<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
}

impl OlsFit {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// OLS by Householder QR on unit-norm columns.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit, AnalysisError> {
    let (n, k) = x.shape();
    if names.len() != k || y.len() != n {
        return Err(AnalysisError::Estimation(format!(
            "design is {n}×{k} with {} names and {} outcomes",
            names.len(),
            y.len()
        )));
    }
    if n <= k {
        return Err(AnalysisError::Estimation(format!(
            "{n} observations cannot identify {k} coefficients"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Estimation("design or outcome has non-finite values".into()));
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let mut scaled = x.clone();
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            scaled.column_mut(j).unscale_mut(s);
        }
    }
    let qr = scaled.qr();
    let r = qr.r();
    let collinear: Vec<String> = (0..k)
        .filter(|&j| norms[j] == 0.0 || r[(j, j)].abs() < RANK_TOL)
        .map(|j| names[j].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(AnalysisError::RankDeficient { columns: collinear });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, k).into_owned();
    let beta_scaled = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| AnalysisError::Estimation("triangular solve failed".into()))?;
    let coefficients = DVector::from_iterator(k, beta_scaled.iter().zip(&norms).map(|(b, s)| b / s));
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| AnalysisError::Estimation("triangular inverse failed".into()))?;
    let mut bread = &r_inv * r_inv.transpose();
    for i in 0..k {
        for j in 0..k {
            bread[(i, j)] /= norms[i] * norms[j];
        }
    }
    let residuals = y - x * &coefficients;
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = residuals.norm_squared();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Ok(OlsFit {
        names: names.to_vec(),
        coefficients,
        residuals,
        bread,
        r_squared,
        n_obs: n,
    })
}

#[derive(Debug, Clone)]
pub struct ClusterCovariance {
    pub vcov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub n_clusters: usize,
}

/// CR1 sandwich: `c · B (Σ_g X_gᵀu_g u_gᵀX_g) B` with `B = (XᵀX)⁻¹` and
/// `c = G/(G−1) · (N−1)/(N−K)`.
pub fn cluster_robust_se<C: Ord>(
    x: &DMatrix<f64>,
    fit: &OlsFit,
    clusters: &[C],
) -> Result<ClusterCovariance, AnalysisError> {
    let (n, k) = x.shape();
    if clusters.len() != n {
        return Err(AnalysisError::Estimation(format!(
            "{} cluster labels for {n} observations",
            clusters.len()
        )));
    }
    let mut scores: BTreeMap<&C, DVector<f64>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        let s = scores.entry(c).or_insert_with(|| DVector::zeros(k));
        s.axpy(fit.residuals[i], &x.row(i).transpose(), 1.0);
    }
    let g = scores.len();
    if g < 2 {
        return Err(AnalysisError::Estimation(format!(
            "cluster-robust errors need at least 2 clusters, got {g}"
        )));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat.ger(1.0, s, s, 1.0);
    }
    let (gf, nf, kf) = (g as f64, n as f64, k as f64);
    let scale = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    let mut vcov = &fit.bread * meat * &fit.bread * scale;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (vcov[(i, j)] + vcov[(j, i)]);
            vcov[(i, j)] = v;
            vcov[(j, i)] = v;
        }
    }
    let se = DVector::from_iterator(k, (0..k).map(|i| vcov[(i, i)].max(0.0).sqrt()));
    Ok(ClusterCovariance {
        vcov,
        se,
        n_clusters: g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub description: String,
    pub estimate: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald test of `Rβ = r` against a chi-square reference with `rows(R)` df.
pub fn wald_test(
    description: &str,
    beta: &DVector<f64>,
    vcov: &DMatrix<f64>,
    r_mat: &DMatrix<f64>,
    r_vec: &DVector<f64>,
) -> Result<WaldTest, AnalysisError> {
    let q = r_mat.nrows();
    if q == 0 || r_mat.ncols() != beta.len() || r_vec.len() != q {
        return Err(AnalysisError::Estimation(format!("malformed restriction for {description}")));
    }
    let diff = r_mat * beta - r_vec;
    let middle = r_mat * vcov * r_mat.transpose();
    let chol = middle
        .cholesky()
        .ok_or_else(|| AnalysisError::Estimation(format!("restriction covariance is singular for {description}")))?;
    let statistic = diff.dot(&chol.solve(&diff));
    let chi = ChiSquared::new(q as f64).expect("df is positive");
    Ok(WaldTest {
        description: description.to_string(),
        estimate: (r_mat * beta).iter().copied().collect(),
        statistic,
        df: q,
        p_value: chi.sf(statistic),
    })
}

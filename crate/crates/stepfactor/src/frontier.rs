//! Sample moments, maximal squared Sharpe ratios, spanning regressions, and
//! tangency portfolios.
//!
//! The maximal squared Sharpe ratio of an asset set `x` is the quadratic form
//!
//! ```text
//! SR²{x} = μ_x' Σ_x⁻¹ μ_x
//! ```
//!
//! and a time-series regression of LHS assets on an RHS factor set with an
//! intercept ties pricing errors to frontier improvements through
//!
//! ```text
//! α' Σ_ε⁻¹ α = SR²{lhs ∪ rhs} − SR²{rhs}.
//! ```
//!
//! That identity holds exactly in sample when every covariance uses divisor T
//! (maximum likelihood), which is the convention throughout this module.
//! Alpha t-statistics alone use the classical OLS residual-variance divisor
//! `T − |rhs| − 1`.
//!
//! Matrix inversion goes through a symmetric eigendecomposition with an
//! explicit singularity threshold: a matrix is rejected when its smallest
//! eigenvalue falls below [`SINGULARITY_RATIO`] times its largest. There is
//! no silent ridge regularization; callers are expected to pre-filter
//! collinear columns.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

/// Relative eigenvalue floor below which a covariance matrix is treated as singular.
pub const SINGULARITY_RATIO: f64 = 1e-10;

/// Default ex-ante per-period volatility used to normalize tangency weights.
pub const DEFAULT_VOL_TARGET: f64 = 0.045;

/// Residual variance below this fraction of the asset's own variance marks the
/// asset as exactly spanned by the regressors (its residual is rounding dust).
pub(crate) const SPANNED_RATIO: f64 = 1e-14;

/// Ordered set of factor names forming the right-hand side of a model.
///
/// Order is the inclusion order and is preserved by the stepwise routines;
/// set-level comparisons ignore it.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(transparent)]
pub struct ModelSet {
    names: Vec<String>,
}

impl ModelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptySelection { context: "model has no factors".into() });
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::DuplicateName { name: n.clone() });
            }
        }
        Ok(ModelSet { names })
    }

    /// Parses a comma-separated list, e.g. `"MKT,SMB,HML"`.
    pub fn parse(list: &str) -> Result<Self> {
        let names: Vec<String> =
            list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        ModelSet::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// New set with `name` appended.
    pub fn with(&self, name: &str) -> Self {
        let mut names = self.names.clone();
        names.push(name.to_string());
        ModelSet { names }
    }

    /// New set with `name` dropped; `None` if it would become empty.
    pub fn without(&self, name: &str) -> Option<Self> {
        let names: Vec<String> = self.names.iter().filter(|n| n.as_str() != name).cloned().collect();
        if names.is_empty() {
            None
        } else {
            Some(ModelSet { names })
        }
    }

    /// Display label, e.g. `MKT+SMB+HML`.
    pub fn label(&self) -> String {
        self.names.join("+")
    }

    pub fn sorted_names(&self) -> Vec<String> {
        let mut v = self.names.clone();
        v.sort();
        v
    }

    /// Set equality ignoring order.
    pub fn same_set(&self, other: &ModelSet) -> bool {
        self.sorted_names() == other.sorted_names()
    }
}

/// Sample mean vector and divisor-T covariance of a set of assets.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub t_obs: usize,
}

/// Result of regressing LHS asset returns on an RHS factor model with intercepts.
#[derive(Debug, Clone)]
pub struct SpanningFit {
    /// Per-LHS-asset intercepts (pricing errors), decimal per period.
    pub alphas: DVector<f64>,
    /// |rhs| x |lhs| loading matrix; column `i` holds asset `i`'s betas.
    pub betas: DMatrix<f64>,
    /// |lhs| x |lhs| residual covariance, divisor T.
    pub resid_cov: DMatrix<f64>,
    /// Classical OLS t-statistics of the intercepts (residual variance divisor T−|rhs|−1).
    pub alpha_t: DVector<f64>,
    pub rhs: ModelSet,
    pub lhs: Vec<String>,
    pub t_obs: usize,
    /// Maximal squared Sharpe ratio of the RHS factors (divisor-T moments).
    pub rhs_sr2: f64,
    /// Sample variance of each LHS asset (divisor T); scale reference for degeneracy checks.
    pub lhs_var: DVector<f64>,
}

// ---------------------------------------------------------------------------
// Symmetric solves with an explicit singularity threshold
// ---------------------------------------------------------------------------

pub(crate) struct SymSolver {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl SymSolver {
    /// Eigendecomposes a symmetric matrix, rejecting it as singular when
    /// `λ_min < SINGULARITY_RATIO · λ_max`.
    pub(crate) fn new(mat: &DMatrix<f64>, context: &str) -> Result<Self> {
        let eig = mat.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min < SINGULARITY_RATIO * max {
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            return Err(Error::SingularCovariance { cond, context: context.to_string() });
        }
        Ok(SymSolver { vectors: eig.eigenvectors, values: eig.eigenvalues })
    }

    /// `A⁻¹ v`.
    pub(crate) fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut proj = self.vectors.transpose() * v;
        for (i, p) in proj.iter_mut().enumerate() {
            *p /= self.values[i];
        }
        &self.vectors * proj
    }

    /// `A⁻¹ B` column by column.
    pub(crate) fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut proj = self.vectors.transpose() * b;
        for i in 0..proj.nrows() {
            let lam = self.values[i];
            for j in 0..proj.ncols() {
                proj[(i, j)] /= lam;
            }
        }
        &self.vectors * proj
    }

    /// Quadratic form `v' A⁻¹ v`, guaranteed non-negative for a PD matrix.
    pub(crate) fn quad(&self, v: &DVector<f64>) -> f64 {
        let proj = self.vectors.transpose() * v;
        proj.iter().enumerate().map(|(i, p)| p * p / self.values[i]).sum()
    }
}

/// Validates approximate positive semidefiniteness (λ_min ≥ −1e-10 · λ_max).
fn check_psd(cov: &DMatrix<f64>, context: &str) -> Result<()> {
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max.abs().max(1.0) {
        return Err(Error::NotPositiveDefinite { context: context.to_string() });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Full-panel moment cache
// ---------------------------------------------------------------------------

/// Mean vector and divisor-T covariance of every column in a universe of
/// assets, with name resolution. Sub-model moments are principal submatrices,
/// so candidate scans never touch the time dimension again.
#[derive(Debug, Clone)]
pub(crate) struct PanelMoments {
    pub names: Vec<String>,
    pub index: HashMap<String, usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub t_obs: usize,
    /// How many leading columns came from the factor panel (the rest are extra
    /// test assets appended by `from_panels`).
    pub n_factor_columns: usize,
    /// Lazily computed SR² of the whole universe; `None` marks a singular
    /// universe covariance.
    universe_sr2_cache: std::sync::OnceLock<Option<f64>>,
}

impl PanelMoments {
    pub(crate) fn from_panel(panel: &ReturnPanel) -> Result<Self> {
        Self::build(panel, panel.n_assets())
    }

    /// Universe = factor panel columns followed by extra test-asset columns.
    pub(crate) fn from_panels(panel: &ReturnPanel, extra: Option<&ReturnPanel>) -> Result<Self> {
        match extra {
            None => Self::from_panel(panel),
            Some(extra) => {
                let combined = panel.hstack(extra)?;
                Self::build(&combined, panel.n_assets())
            }
        }
    }

    fn build(panel: &ReturnPanel, n_factor_columns: usize) -> Result<Self> {
        let t = panel.n_periods();
        let n = panel.n_assets();
        if t < 2 {
            return Err(Error::InvalidParam {
                name: "t_obs".into(),
                reason: "at least two periods are required".into(),
            });
        }
        let data = panel.returns();
        let mut mean = DVector::zeros(n);
        for j in 0..n {
            mean[j] = data.column(j).sum() / t as f64;
        }
        let mut centered = data.clone();
        for j in 0..n {
            let m = mean[j];
            for r in 0..t {
                centered[(r, j)] -= m;
            }
        }
        let mut cov = centered.transpose() * centered;
        cov /= t as f64;
        // enforce exact symmetry against accumulation order differences
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        let index = panel.names().iter().enumerate().map(|(j, n)| (n.clone(), j)).collect();
        Ok(PanelMoments {
            names: panel.names().to_vec(),
            index,
            mean,
            cov,
            t_obs: t,
            n_factor_columns,
            universe_sr2_cache: std::sync::OnceLock::new(),
        })
    }

    /// SR² of the full universe, computed once in canonical name order.
    pub(crate) fn universe_sr2(&self) -> Result<f64> {
        let cached = self.universe_sr2_cache.get_or_init(|| {
            let idx = self.complement_canonical(&[]);
            self.sr2(&idx, "full-universe covariance").ok()
        });
        match cached {
            Some(v) => Ok(*v),
            None => {
                let idx = self.complement_canonical(&[]);
                Err(self.sr2(&idx, "full-universe covariance").unwrap_err())
            }
        }
    }

    pub(crate) fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.index.get(n).copied().ok_or_else(|| Error::UnknownName { name: n.clone() }))
            .collect()
    }

    /// Indices of `names` sorted lexicographically by name. Extracting
    /// submatrices in this canonical order makes every downstream statistic
    /// bit-identical under column permutations of the source panel.
    pub(crate) fn resolve_canonical(&self, names: &[String]) -> Result<Vec<usize>> {
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort();
        self.resolve(&sorted.into_iter().cloned().collect::<Vec<_>>())
    }

    /// Canonically ordered indices of every column not in `exclude`.
    pub(crate) fn complement_canonical(&self, exclude: &[usize]) -> Vec<usize> {
        let mut names: Vec<&String> =
            (0..self.names.len()).filter(|j| !exclude.contains(j)).map(|j| &self.names[j]).collect();
        names.sort();
        names.iter().map(|n| self.index[*n]).collect()
    }

    pub(crate) fn sub_mean(&self, idx: &[usize]) -> DVector<f64> {
        DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]])
    }

    pub(crate) fn sub_cov(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])])
    }

    pub(crate) fn cross_cov(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov[(rows[i], cols[j])])
    }

    pub(crate) fn sub_moments(&self, idx: &[usize]) -> Moments {
        Moments { mean: self.sub_mean(idx), cov: self.sub_cov(idx), t_obs: self.t_obs }
    }

    /// Maximal squared Sharpe ratio of the columns in `idx`.
    pub(crate) fn sr2(&self, idx: &[usize], context: &str) -> Result<f64> {
        let solver = SymSolver::new(&self.sub_cov(idx), context)?;
        Ok(solver.quad(&self.sub_mean(idx)))
    }

    /// Spanning regression of the `lhs_idx` columns on the `rhs_idx` columns,
    /// computed from the moment cache alone.
    ///
    /// With intercepts, OLS on raw data is OLS on centered data plus the mean
    /// identity `α = μ_y − β' μ_x`, and the residual cross-product matrix is
    /// the Schur complement `Σ_yy − Σ_xy' Σ_xx⁻¹ Σ_xy`.
    pub(crate) fn spanning(&self, lhs_idx: &[usize], rhs_idx: &[usize]) -> Result<SpanningFit> {
        let t = self.t_obs;
        let m = rhs_idx.len();
        let n1 = lhs_idx.len();
        if n1 == 0 {
            return Err(Error::EmptySelection { context: "spanning regression has no LHS assets".into() });
        }
        if t <= m + 1 {
            return Err(Error::InvalidParam {
                name: "t_obs".into(),
                reason: format!("need T > |rhs| + 1, got T = {}, |rhs| = {}", t, m),
            });
        }
        for i in lhs_idx {
            if rhs_idx.contains(i) {
                return Err(Error::InvalidParam {
                    name: "lhs".into(),
                    reason: format!("`{}` appears on both sides", self.names[*i]),
                });
            }
        }

        let sxx = self.sub_cov(rhs_idx);
        let sxy = self.cross_cov(rhs_idx, lhs_idx);
        let syy = self.sub_cov(lhs_idx);
        let mu_x = self.sub_mean(rhs_idx);
        let mu_y = self.sub_mean(lhs_idx);

        let solver = SymSolver::new(&sxx, "rhs factor covariance (collinear model?)")?;
        let betas = solver.solve_mat(&sxy); // m x n1
        let alphas = &mu_y - betas.transpose() * &mu_x;
        let rhs_sr2 = solver.quad(&mu_x);

        let mut resid_cov = &syy - sxy.transpose() * &betas;
        for i in 0..n1 {
            for j in (i + 1)..n1 {
                let s = 0.5 * (resid_cov[(i, j)] + resid_cov[(j, i)]);
                resid_cov[(i, j)] = s;
                resid_cov[(j, i)] = s;
            }
        }

        let lhs_var = DVector::from_fn(n1, |i, _| syy[(i, i)]);
        let dof = (t - m - 1) as f64;
        let alpha_t = DVector::from_fn(n1, |i, _| {
            let rv = resid_cov[(i, i)].max(0.0);
            let scale = lhs_var[i].max(f64::MIN_POSITIVE);
            if rv <= SPANNED_RATIO * scale {
                // exactly spanned asset: zero residual; the intercept is either
                // rounding dust (t = 0) or exact and infinitely significant
                if alphas[i].powi(2) <= SPANNED_RATIO * scale {
                    0.0
                } else {
                    f64::INFINITY.copysign(alphas[i])
                }
            } else {
                let sigma2 = rv * t as f64 / dof;
                alphas[i] / (sigma2 * (1.0 + rhs_sr2) / t as f64).sqrt()
            }
        });

        Ok(SpanningFit {
            alphas,
            betas,
            resid_cov,
            alpha_t,
            rhs: ModelSet::new(rhs_idx.iter().map(|&j| self.names[j].clone()).collect())?,
            lhs: lhs_idx.iter().map(|&j| self.names[j].clone()).collect(),
            t_obs: t,
            rhs_sr2,
            lhs_var,
        })
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Sample mean and divisor-T covariance of the named columns (all columns when
/// `names` is `None`), in the requested order.
pub fn moments(panel: &ReturnPanel, names: Option<&ModelSet>) -> Result<Moments> {
    let cache = PanelMoments::from_panel(panel)?;
    let idx = match names {
        Some(set) => cache.resolve(set.names())?,
        None => (0..panel.n_assets()).collect(),
    };
    let m = cache.sub_moments(&idx);
    check_psd(&m.cov, "sample covariance")?;
    Ok(m)
}

/// Maximal squared Sharpe ratio `μ' Σ⁻¹ μ`, in per-period units.
pub fn max_sq_sharpe(m: &Moments) -> Result<f64> {
    let solver = SymSolver::new(&m.cov, "asset covariance")?;
    Ok(solver.quad(&m.mean))
}

/// Time-series OLS of each LHS asset on the RHS model with an intercept.
pub fn spanning_regression(panel: &ReturnPanel, lhs: &[String], rhs: &ModelSet) -> Result<SpanningFit> {
    let cache = PanelMoments::from_panel(panel)?;
    let lhs_idx = cache.resolve(lhs)?;
    let rhs_idx = cache.resolve(rhs.names())?;
    cache.spanning(&lhs_idx, &rhs_idx)
}

/// Pricing-error quadratic form `α' Σ_ε⁻¹ α`.
///
/// With divisor-T moments this equals `SR²{lhs ∪ rhs} − SR²{rhs}` exactly.
pub fn alpha_quadratic(fit: &SpanningFit) -> Result<f64> {
    let solver = SymSolver::new(&fit.resid_cov, "residual covariance")?;
    Ok(solver.quad(&fit.alphas))
}

/// Tangency portfolio weights `Σ⁻¹ μ`, rescaled so the ex-ante per-period
/// volatility `√(w' Σ w)` equals `vol_target`.
///
/// Normalizing by volatility rather than by weight sum keeps the convention
/// meaningful for long-short factor sets whose raw weights can sum to zero.
pub fn tangency_weights(m: &Moments, vol_target: f64) -> Result<DVector<f64>> {
    if !(vol_target > 0.0) {
        return Err(Error::InvalidParam {
            name: "vol_target".into(),
            reason: "must be positive".into(),
        });
    }
    if m.mean.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMeanVector);
    }
    let solver = SymSolver::new(&m.cov, "asset covariance")?;
    let raw = solver.solve_vec(&m.mean);
    let vol2 = raw.dot(&(&m.cov * &raw));
    if !(vol2 > 0.0) {
        return Err(Error::ZeroMeanVector);
    }
    Ok(raw * (vol_target / vol2.sqrt()))
}

/// Realized per-period return series `w' F_t` of a weighted asset set.
pub fn portfolio_returns(panel: &ReturnPanel, model: &ModelSet, weights: &DVector<f64>) -> Result<Vec<f64>> {
    if weights.len() != model.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{} weights for {} factors", weights.len(), model.len()),
        });
    }
    let cols: Vec<usize> =
        model.names().iter().map(|n| panel.index_of(n)).collect::<Result<Vec<_>>>()?;
    let data = panel.returns();
    Ok((0..panel.n_periods())
        .map(|t| cols.iter().enumerate().map(|(i, &j)| weights[i] * data[(t, j)]).sum())
        .collect())
}

/// Mean and divisor-T standard deviation of a return series.
pub(crate) fn series_mean_sd(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::LoadOptions;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel_from(columns: &[(&str, Vec<f64>)]) -> ReturnPanel {
        let t = columns[0].1.len();
        let periods = (0..t).map(|i| format!("{:05}", i)).collect();
        let names = columns.iter().map(|(n, _)| n.to_string()).collect();
        let data = DMatrix::from_fn(t, columns.len(), |r, c| columns[c].1[r]);
        ReturnPanel::new(periods, names, data).unwrap()
    }

    fn random_panel(rng: &mut ChaCha8Rng, t: usize, n: usize) -> ReturnPanel {
        // random loadings on a couple of latent drivers keep the covariance PD
        // but generically correlated
        let drivers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.02).collect())
            .collect();
        let cols: Vec<(String, Vec<f64>)> = (0..n)
            .map(|j| {
                let mu = rng.gen_range(-0.005..0.01);
                let loads: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let noise_sd = rng.gen_range(0.005..0.03);
                let series = (0..t)
                    .map(|r| {
                        mu + loads.iter().zip(&drivers).map(|(l, d)| l * d[r]).sum::<f64>()
                            + rng.sample::<f64, _>(StandardNormal) * noise_sd
                    })
                    .collect();
                (format!("F{:02}", j), series)
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>)> = cols.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
        panel_from(&refs)
    }

    #[test]
    fn moments_by_hand() {
        let p = panel_from(&[("A", vec![0.01, 0.03])]);
        let m = moments(&p, None).unwrap();
        assert_relative_eq!(m.mean[0], 0.02, epsilon = 1e-15);
        assert_relative_eq!(m.cov[(0, 0)], 0.0001, epsilon = 1e-15);
        assert_eq!(m.t_obs, 2);
    }

    #[test]
    fn moments_respects_requested_order() {
        let p = panel_from(&[("A", vec![0.01, 0.03, 0.0]), ("B", vec![0.0, 0.01, 0.02])]);
        let ab = moments(&p, Some(&ModelSet::parse("A,B").unwrap())).unwrap();
        let ba = moments(&p, Some(&ModelSet::parse("B,A").unwrap())).unwrap();
        assert_eq!(ab.mean[0], ba.mean[1]);
        assert_eq!(ab.cov[(0, 1)], ba.cov[(1, 0)]);
        assert_eq!(ab.cov[(0, 0)], ba.cov[(1, 1)]);
    }

    #[test]
    fn constant_column_is_flagged_singular_downstream() {
        let p = panel_from(&[("A", vec![0.01; 6]), ("B", vec![0.0, 0.01, 0.02, -0.01, 0.03, 0.0])]);
        let m = moments(&p, None).unwrap();
        assert_eq!(m.cov[(0, 0)], 0.0);
        assert!(matches!(max_sq_sharpe(&m), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn sr2_diagonal_closed_form_and_grid_oracle() {
        let m = Moments {
            mean: DVector::from_vec(vec![0.01, 0.02]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.01])),
            t_obs: 100,
        };
        let sr2 = max_sq_sharpe(&m).unwrap();
        assert_relative_eq!(sr2, 0.05, epsilon = 1e-12);

        // independent oracle: brute-force search over portfolio directions
        let mut best: f64 = 0.0;
        let steps = 200_000;
        for k in 0..steps {
            let theta = std::f64::consts::PI * k as f64 / steps as f64;
            let w = [theta.cos(), theta.sin()];
            let num = (w[0] * m.mean[0] + w[1] * m.mean[1]).powi(2);
            let den = w[0] * w[0] * m.cov[(0, 0)] + w[1] * w[1] * m.cov[(1, 1)];
            best = best.max(num / den);
        }
        assert_relative_eq!(sr2, best, max_relative = 1e-6);
    }

    #[test]
    fn sr2_zero_mean_is_zero() {
        let m = Moments {
            mean: DVector::zeros(3),
            cov: DMatrix::identity(3, 3),
            t_obs: 10,
        };
        assert_eq!(max_sq_sharpe(&m).unwrap(), 0.0);
    }

    #[test]
    fn spanning_recovers_exact_linear_combination() {
        let mkt = vec![0.012, -0.004, 0.021, 0.003, -0.011, 0.007, 0.015, -0.002];
        let double: Vec<f64> = mkt.iter().map(|x| 2.0 * x).collect();
        let p = panel_from(&[("MKT", mkt), ("X", double)]);
        let fit =
            spanning_regression(&p, &["X".to_string()], &ModelSet::parse("MKT").unwrap()).unwrap();
        assert!(fit.alphas[0].abs() < 1e-14);
        assert_relative_eq!(fit.betas[(0, 0)], 2.0, epsilon = 1e-12);
        assert!(fit.resid_cov[(0, 0)].abs() < 1e-18);
        assert_eq!(fit.alpha_t[0], 0.0);
    }

    #[test]
    fn spanning_null_alpha_within_four_standard_errors() {
        // LHS is independent noise with true mean zero: estimated intercepts
        // should be statistically indistinguishable from zero
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 600;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let y: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let p = panel_from(&[("F", f), ("Y", y)]);
        let fit = spanning_regression(&p, &["Y".to_string()], &ModelSet::parse("F").unwrap()).unwrap();
        assert!(fit.alpha_t[0].abs() < 4.0, "t = {}", fit.alpha_t[0]);
    }

    #[test]
    fn collinear_rhs_is_rejected() {
        let a = vec![0.01, 0.02, -0.01, 0.005, 0.0, 0.015];
        let b: Vec<f64> = a.iter().map(|x| x * 3.0).collect();
        let y = vec![0.0, 0.01, 0.02, -0.01, 0.01, 0.0];
        let p = panel_from(&[("A", a), ("B", b), ("Y", y)]);
        let err =
            spanning_regression(&p, &["Y".to_string()], &ModelSet::parse("A,B").unwrap()).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance { .. }));
    }

    #[test]
    fn alpha_quadratic_zero_for_zero_alphas() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_panel(&mut rng, 240, 5);
        let rhs = ModelSet::parse("F00,F01").unwrap();
        let lhs: Vec<String> = vec!["F02".into(), "F03".into(), "F04".into()];
        let mut fit = spanning_regression(&p, &lhs, &rhs).unwrap();
        fit.alphas.fill(0.0);
        assert_eq!(alpha_quadratic(&fit).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_single_asset_quadratic_equals_marginal_sr2() {
        // one LHS asset with zero loading on the RHS: α²/σ² collapses to the
        // asset's own squared Sharpe ratio
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = 50_000;
        let f: Vec<f64> = (0..t).map(|_| 0.006 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let y: Vec<f64> = (0..t).map(|_| 0.004 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let p = panel_from(&[("F", f), ("Y", y.clone())]);
        let fit = spanning_regression(&p, &["Y".to_string()], &ModelSet::parse("F").unwrap()).unwrap();
        let quad = alpha_quadratic(&fit).unwrap();
        let y_only = panel_from(&[("Y", y)]);
        let sr2_y = max_sq_sharpe(&moments(&y_only, None).unwrap()).unwrap();
        // β̂ ≈ 0 in-sample, so the two sides agree up to sampling noise
        assert_relative_eq!(quad, sr2_y, max_relative = 0.05);
    }

    #[test]
    fn quadratic_equals_sr2_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_panel(&mut rng, 120, 6);
        let rhs = ModelSet::parse("F00,F01").unwrap();
        let lhs: Vec<String> = vec!["F02".into(), "F03".into(), "F04".into(), "F05".into()];
        let fit = spanning_regression(&p, &lhs, &rhs).unwrap();
        let quad = alpha_quadratic(&fit).unwrap();
        let all = max_sq_sharpe(&moments(&p, None).unwrap()).unwrap();
        let rhs_only = max_sq_sharpe(&moments(&p, Some(&rhs)).unwrap()).unwrap();
        assert_relative_eq!(quad, all - rhs_only, max_relative = 1e-8);
    }

    #[test]
    fn tangency_diagonal_closed_form() {
        let m = Moments {
            mean: DVector::from_vec(vec![0.01, 0.02]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04])),
            t_obs: 100,
        };
        let w = tangency_weights(&m, DEFAULT_VOL_TARGET).unwrap();
        // pre-scaling direction is Σ⁻¹μ = (1.0, 0.5)
        assert_relative_eq!(w[0] / w[1], 2.0, epsilon = 1e-12);
        let vol = (w.dot(&(&m.cov * &w))).sqrt();
        assert_relative_eq!(vol, DEFAULT_VOL_TARGET, epsilon = 1e-12);
    }

    #[test]
    fn tangency_sharpe_is_scale_invariant_and_matches_sr2() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = random_panel(&mut rng, 300, 4);
        let model = ModelSet::parse("F00,F01,F02,F03").unwrap();
        let m = moments(&p, Some(&model)).unwrap();
        let sr2 = max_sq_sharpe(&m).unwrap();
        for target in [0.01, 0.045] {
            let w = tangency_weights(&m, target).unwrap();
            let series = portfolio_returns(&p, &model, &w).unwrap();
            let (mean, sd) = series_mean_sd(&series);
            assert_relative_eq!(mean / sd, sr2.sqrt(), max_relative = 1e-8);
        }
        // rescaling μ leaves the realized Sharpe ratio unchanged
        let scaled = Moments { mean: &m.mean * 3.0, cov: m.cov.clone(), t_obs: m.t_obs };
        let w2 = tangency_weights(&scaled, 0.02).unwrap();
        let series2 = portfolio_returns(&p, &model, &w2).unwrap();
        let (mean2, sd2) = series_mean_sd(&series2);
        assert_relative_eq!(mean2 / sd2, sr2.sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn tangency_zero_mean_is_flagged() {
        let m = Moments { mean: DVector::zeros(2), cov: DMatrix::identity(2, 2), t_obs: 10 };
        assert!(matches!(tangency_weights(&m, 0.045), Err(Error::ZeroMeanVector)));
    }

    #[test]
    fn sr2_monotone_under_asset_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let p = random_panel(&mut rng, 150, 8);
            let names = p.names().to_vec();
            let split = rng.gen_range(1..7);
            let a = ModelSet::new(names[..split].to_vec()).unwrap();
            let ab = ModelSet::new(names.clone()).unwrap();
            let sr_a = max_sq_sharpe(&moments(&p, Some(&a)).unwrap()).unwrap();
            let sr_ab = max_sq_sharpe(&moments(&p, Some(&ab)).unwrap()).unwrap();
            assert!(sr_ab >= sr_a - 1e-12, "SR² not monotone: {} < {}", sr_ab, sr_a);
        }
    }

    #[test]
    fn sr2_invariant_under_invertible_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p = random_panel(&mut rng, 200, 4);
        let sr2 = max_sq_sharpe(&moments(&p, None).unwrap()).unwrap();
        // apply a random invertible linear map to the asset set
        let map = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                1.0 + rng.gen_range(0.1..0.5)
            } else {
                rng.gen_range(-0.4..0.4)
            }
        });
        let mixed = p.returns() * &map;
        let names = vec!["G0".into(), "G1".into(), "G2".into(), "G3".into()];
        let q = ReturnPanel::new(p.periods().to_vec(), names, mixed).unwrap();
        let sr2_q = max_sq_sharpe(&moments(&q, None).unwrap()).unwrap();
        assert_relative_eq!(sr2, sr2_q, max_relative = 1e-8);
    }

    #[test]
    fn scaling_one_lhs_asset_scales_alpha_but_not_t_or_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = random_panel(&mut rng, 180, 5);
        let rhs = ModelSet::parse("F00,F01").unwrap();
        let lhs: Vec<String> = vec!["F02".into(), "F03".into(), "F04".into()];
        let fit = spanning_regression(&p, &lhs, &rhs).unwrap();

        let c = 3.7;
        let mut data = p.returns().clone();
        let j = p.index_of("F02").unwrap();
        for t in 0..p.n_periods() {
            data[(t, j)] *= c;
        }
        let scaled = ReturnPanel::new(p.periods().to_vec(), p.names().to_vec(), data).unwrap();
        let fit2 = spanning_regression(&scaled, &lhs, &rhs).unwrap();

        assert_relative_eq!(fit2.alphas[0], c * fit.alphas[0], max_relative = 1e-10);
        assert_relative_eq!(fit2.alpha_t[0], fit.alpha_t[0], max_relative = 1e-10);
        assert_relative_eq!(
            alpha_quadratic(&fit2).unwrap(),
            alpha_quadratic(&fit).unwrap(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn model_set_parsing_and_ops() {
        let m = ModelSet::parse("MKT, SMB ,HML").unwrap();
        assert_eq!(m.names(), &["MKT", "SMB", "HML"]);
        assert_eq!(m.label(), "MKT+SMB+HML");
        assert!(ModelSet::parse("A,A").is_err());
        assert!(ModelSet::parse("").is_err());
        let w = m.without("SMB").unwrap();
        assert!(w.same_set(&ModelSet::parse("HML,MKT").unwrap()));
    }

    #[test]
    fn panel_round_trip_via_loader_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let p = random_panel(&mut rng, 12, 3);
        let csv = p.to_csv_string(b',');
        let q = ReturnPanel::parse_str(&csv, &LoadOptions::default(), "mem").unwrap();
        assert_eq!(p.returns(), q.returns());
    }
}

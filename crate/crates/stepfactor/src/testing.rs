//! Joint pricing-error tests that certify a factor model.
//!
//! Both tests ask whether the intercepts from regressing every asset outside
//! the model (plus any extra test assets) on the model factors are jointly
//! zero.
//!
//! # GRS value and test
//!
//! The Gibbons-Ross-Shanken style statistic is evaluated through its
//! squared-Sharpe-ratio form,
//!
//! ```text
//! GRS(M) = (T − N)/(N − |M|) · [ (1 + SR²{F}) / (1 + SR²{F_M}) − 1 ],
//! ```
//!
//! where `F` is the full asset universe and `N` its column count. With
//! divisor-T moments this equals `(T − N)/(N − |M|) · α'Σ_ε⁻¹α / (1 + SR²{F_M})`
//! exactly, so minimizing the GRS value over candidate models of equal size is
//! the same as maximizing the model's SR². The p-value uses the central
//! `F(N − |M|, T − N)` null distribution.
//!
//! # High-dimensional alpha (HDA) test
//!
//! When the number of test assets is large relative to T, the unrestricted
//! residual covariance makes the GRS test weak. The HDA statistic, in the
//! spirit of Pesaran & Yamagata, keeps only the diagonal of the residual
//! covariance:
//!
//! ```text
//! HDA(M) = [ T · α' Diag(Σ_ε)⁻¹ α / (1 + SR²{F_M}) − N₁ ]
//!          / sqrt( 2 N₁ (1 + (N₁ − 1) ρ²) )
//! ```
//!
//! with `N₁` the number of LHS assets and `ρ²` a sparsity correction built
//! from thresholded residual correlations. Under the null the statistic is
//! asymptotically standard normal; the test is one-sided and rejects for
//! large positive values. No finite-sample adjustment is applied.
//!
//! An LHS asset that is exactly spanned by the model (zero residual up to
//! rounding) carries no evidence either way: it contributes zero to the
//! quadratic while still counting toward `N₁`. A zero-variance residual paired
//! with a non-negligible intercept is reported as an error instead.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};
use crate::frontier::{PanelMoments, SpanningFit, ModelSet, SymSolver, SPANNED_RATIO};
use crate::panel::ReturnPanel;

/// Reference distribution of a test statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family")]
pub enum RefDist {
    /// Central F distribution with the given degrees of freedom.
    F { d1: f64, d2: f64 },
    /// Standard normal, one-sided upper tail.
    StdNormalOneSided,
}

impl std::fmt::Display for RefDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RefDist::F { d1, d2 } => write!(f, "F({d1:.0},{d2:.0})"),
            RefDist::StdNormalOneSided => write!(f, "N(0,1) one-sided"),
        }
    }
}

/// Outcome of a joint pricing-error test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: RefDist,
    /// Number of LHS test assets.
    pub n_lhs: usize,
}

impl TestResult {
    /// True when the null of jointly zero alphas is rejected at level `lambda`.
    pub fn rejects(&self, lambda: f64) -> bool {
        self.p_value < lambda
    }
}

/// Settings for the HDA test.
#[derive(Debug, Clone)]
pub struct HdaConfig {
    /// Significance level λ of the one-sided test.
    pub significance: f64,
    /// Two-sided per-pair level of the residual-correlation screen. `None`
    /// uses `2 / (N₁ (N₁ − 1))`, one expected retained pair under independence.
    pub screening_level: Option<f64>,
}

impl Default for HdaConfig {
    fn default() -> Self {
        HdaConfig { significance: 0.05, screening_level: None }
    }
}

impl HdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidParam {
                name: "significance".into(),
                reason: "must lie strictly between 0 and 1".into(),
            });
        }
        if let Some(p) = self.screening_level {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParam {
                    name: "screening_level".into(),
                    reason: "must lie in (0, 1]".into(),
                });
            }
        }
        Ok(())
    }
}

/// Thresholded mean-squared residual correlation.
#[derive(Debug, Clone, Serialize)]
pub struct Rho2Estimate {
    pub value: f64,
    /// Off-diagonal pairs whose correlation survived the threshold.
    pub retained_pairs: usize,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Upper λ quantile of the standard normal.
pub fn z_critical(lambda: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - lambda)
}

// ---------------------------------------------------------------------------
// GRS
// ---------------------------------------------------------------------------

fn check_grs_preconditions(ws: &PanelMoments, model_len: usize) -> Result<(usize, usize)> {
    let n = ws.names.len();
    let t = ws.t_obs;
    if model_len >= n {
        return Err(Error::InvalidParam {
            name: "model".into(),
            reason: "model must leave at least one asset unselected".into(),
        });
    }
    if t <= n {
        return Err(Error::InvalidParam {
            name: "t_obs".into(),
            reason: format!("full-universe SR² needs T > N, got T = {t}, N = {n}"),
        });
    }
    Ok((n, t))
}

/// Diagonal-safe pricing-error quadratic: drops exactly-spanned LHS assets
/// (whose residual is the zero vector) and inverts the rest.
fn full_alpha_quadratic(fit: &SpanningFit) -> Result<f64> {
    let n1 = fit.lhs.len();
    let mut keep = Vec::with_capacity(n1);
    for i in 0..n1 {
        let rv = fit.resid_cov[(i, i)].max(0.0);
        let scale = fit.lhs_var[i].max(f64::MIN_POSITIVE);
        if rv <= SPANNED_RATIO * scale {
            if fit.alphas[i].powi(2) > SPANNED_RATIO * scale {
                return Err(Error::ZeroResidualVariance { name: fit.lhs[i].clone() });
            }
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Ok(0.0);
    }
    let sub = nalgebra::DMatrix::from_fn(keep.len(), keep.len(), |i, j| {
        fit.resid_cov[(keep[i], keep[j])]
    });
    let alpha = nalgebra::DVector::from_fn(keep.len(), |i, _| fit.alphas[keep[i]]);
    let solver = SymSolver::new(&sub, "residual covariance")?;
    Ok(solver.quad(&alpha))
}

pub(crate) fn grs_value_ws(ws: &PanelMoments, model_idx: &[usize]) -> Result<f64> {
    let (n, t) = check_grs_preconditions(ws, model_idx.len())?;
    let sr_m = ws.sr2(model_idx, "model covariance")?;
    let scale = (t - n) as f64 / (n - model_idx.len()) as f64;
    match ws.universe_sr2() {
        Ok(sr_f) => Ok(scale * ((1.0 + sr_f) / (1.0 + sr_m) - 1.0)),
        Err(_) => {
            // Universe covariance is singular (e.g. duplicated or exactly
            // spanned columns). Use the algebraically equal quadratic form,
            // which is still defined when the degeneracy carries no alpha.
            let lhs = ws.complement_canonical(model_idx);
            let fit = ws.spanning(&lhs, model_idx)?;
            let quad = full_alpha_quadratic(&fit)?;
            Ok(scale * quad / (1.0 + sr_m))
        }
    }
}

pub(crate) fn grs_test_ws(ws: &PanelMoments, model_idx: &[usize]) -> Result<TestResult> {
    let (n, t) = check_grs_preconditions(ws, model_idx.len())?;
    if t - n < 1 {
        return Err(Error::InvalidParam {
            name: "t_obs".into(),
            reason: "F test needs T − N ≥ 1".into(),
        });
    }
    let statistic = grs_value_ws(ws, model_idx)?;
    let d1 = (n - model_idx.len()) as f64;
    let d2 = (t - n) as f64;
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        let dist = FisherSnedecor::new(d1, d2).map_err(|_| Error::InvalidParam {
            name: "df".into(),
            reason: format!("invalid F degrees of freedom ({d1}, {d2})"),
        })?;
        (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
    };
    Ok(TestResult { statistic, p_value, df: RefDist::F { d1, d2 }, n_lhs: n - model_idx.len() })
}

/// GRS value of `model` against every other panel column plus optional extra
/// test assets (extras enter both the LHS and the full-universe SR²).
pub fn grs_value(panel: &ReturnPanel, model: &ModelSet, extra: Option<&ReturnPanel>) -> Result<f64> {
    let ws = PanelMoments::from_panels(panel, extra)?;
    let idx = ws.resolve_canonical(model.names())?;
    grs_value_ws(&ws, &idx)
}

/// GRS statistic with its `F(N − |M|, T − N)` p-value.
pub fn grs_test(panel: &ReturnPanel, model: &ModelSet, extra: Option<&ReturnPanel>) -> Result<TestResult> {
    let ws = PanelMoments::from_panels(panel, extra)?;
    let idx = ws.resolve_canonical(model.names())?;
    grs_test_ws(&ws, &idx)
}

// ---------------------------------------------------------------------------
// HDA
// ---------------------------------------------------------------------------

/// Thresholded mean-squared residual correlation
///
/// ```text
/// ρ² = 2 / (N₁ (N₁ − 1)) · Σ_{i<j} ρ̂²_ij · 1{ |ρ̂_ij| > θ_T },
/// θ_T = Φ⁻¹(1 − p_scr / 2) / √T.
/// ```
///
/// Pairs involving an exactly-spanned asset (zero residual) are treated as
/// uncorrelated. The estimator degrades to 0 for independent residuals and
/// approaches the common squared correlation under strong dependence.
pub fn rho2_correction(fit: &SpanningFit, screening_level: Option<f64>) -> Result<Rho2Estimate> {
    let n1 = fit.lhs.len();
    if n1 < 2 {
        return Err(Error::InvalidParam {
            name: "lhs".into(),
            reason: "correlation screen needs at least two LHS assets".into(),
        });
    }
    let pairs = (n1 * (n1 - 1) / 2) as f64;
    let p_scr = screening_level.unwrap_or_else(|| (1.0 / pairs).min(1.0));
    if !(p_scr > 0.0 && p_scr <= 1.0) {
        return Err(Error::InvalidParam {
            name: "screening_level".into(),
            reason: "must lie in (0, 1]".into(),
        });
    }
    let theta = std_normal().inverse_cdf(1.0 - p_scr / 2.0) / (fit.t_obs as f64).sqrt();

    let usable: Vec<bool> = (0..n1)
        .map(|i| {
            fit.resid_cov[(i, i)].max(0.0) > SPANNED_RATIO * fit.lhs_var[i].max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut sum = 0.0;
    let mut retained = 0usize;
    for i in 0..n1 {
        for j in (i + 1)..n1 {
            if !(usable[i] && usable[j]) {
                continue;
            }
            let denom = (fit.resid_cov[(i, i)] * fit.resid_cov[(j, j)]).sqrt();
            if !(denom > 0.0) {
                continue;
            }
            let rho = (fit.resid_cov[(i, j)] / denom).clamp(-1.0, 1.0);
            if rho.abs() > theta {
                sum += rho * rho;
                retained += 1;
            }
        }
    }
    Ok(Rho2Estimate { value: sum / pairs, retained_pairs: retained })
}

pub(crate) fn hda_test_ws(
    ws: &PanelMoments,
    model_idx: &[usize],
    cfg: &HdaConfig,
) -> Result<TestResult> {
    cfg.validate()?;
    let n1 = ws.names.len() - model_idx.len();
    if n1 < 2 {
        return Err(Error::InvalidParam {
            name: "model".into(),
            reason: "HDA test needs at least two LHS assets".into(),
        });
    }
    let t = ws.t_obs;
    if t <= model_idx.len() + 2 {
        return Err(Error::InvalidParam {
            name: "t_obs".into(),
            reason: format!("need T > |model| + 2, got T = {}, |model| = {}", t, model_idx.len()),
        });
    }
    let lhs = ws.complement_canonical(model_idx);
    let fit = ws.spanning(&lhs, model_idx)?;

    let mut quad = 0.0;
    for i in 0..n1 {
        let rv = fit.resid_cov[(i, i)].max(0.0);
        let scale = fit.lhs_var[i].max(f64::MIN_POSITIVE);
        if rv <= SPANNED_RATIO * scale {
            if fit.alphas[i].powi(2) > SPANNED_RATIO * scale {
                return Err(Error::ZeroResidualVariance { name: fit.lhs[i].clone() });
            }
            // exactly priced asset: no contribution, still counted in N₁
        } else {
            quad += fit.alphas[i] * fit.alphas[i] / rv;
        }
    }

    let rho2 = rho2_correction(&fit, cfg.screening_level)?;
    let n1f = n1 as f64;
    let numerator = t as f64 * quad / (1.0 + fit.rhs_sr2) - n1f;
    let denominator = (2.0 * n1f * (1.0 + (n1f - 1.0) * rho2.value)).sqrt();
    let statistic = numerator / denominator;
    let p_value = (1.0 - std_normal().cdf(statistic)).clamp(0.0, 1.0);
    Ok(TestResult { statistic, p_value, df: RefDist::StdNormalOneSided, n_lhs: n1 })
}

/// HDA statistic of `model` against every other panel column plus optional
/// extra test assets, with its one-sided normal p-value.
pub fn hda_test(
    panel: &ReturnPanel,
    model: &ModelSet,
    extra: Option<&ReturnPanel>,
    cfg: &HdaConfig,
) -> Result<TestResult> {
    let ws = PanelMoments::from_panels(panel, extra)?;
    let idx = ws.resolve_canonical(model.names())?;
    hda_test_ws(&ws, &idx, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontier::{max_sq_sharpe, moments, spanning_regression};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel_from(columns: Vec<(String, Vec<f64>)>) -> ReturnPanel {
        let t = columns[0].1.len();
        let periods = (0..t).map(|i| format!("{:05}", i)).collect();
        let names = columns.iter().map(|(n, _)| n.clone()).collect();
        let data = DMatrix::from_fn(t, columns.len(), |r, c| columns[c].1[r]);
        ReturnPanel::new(periods, names, data).unwrap()
    }

    /// Universe with a couple of driver factors and noisy dependents.
    fn structured_panel(rng: &mut ChaCha8Rng, t: usize, n: usize) -> ReturnPanel {
        let k = 2.min(n);
        let drivers: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..t).map(|_| 0.004 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect())
            .collect();
        let mut cols: Vec<(String, Vec<f64>)> = Vec::with_capacity(n);
        for (j, d) in drivers.iter().enumerate() {
            cols.push((format!("D{j}"), d.clone()));
        }
        for j in k..n {
            let b: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.5)).collect();
            let alpha = rng.gen_range(-0.002..0.004);
            let sd = rng.gen_range(0.01..0.03);
            let series = (0..t)
                .map(|r| {
                    alpha
                        + b.iter().zip(&drivers).map(|(bi, d)| bi * d[r]).sum::<f64>()
                        + rng.sample::<f64, _>(StandardNormal) * sd
                })
                .collect();
            cols.push((format!("A{:02}", j), series));
        }
        panel_from(cols)
    }

    #[test]
    fn grs_value_zero_when_lhs_exactly_spanned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 60;
        let f1: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let f2: Vec<f64> = (0..t).map(|_| 0.002 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let combo: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 0.5 * a - 1.2 * b).collect();
        let combo2: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a + 0.3 * b).collect();
        let p = panel_from(vec![
            ("F1".into(), f1),
            ("F2".into(), f2),
            ("C1".into(), combo),
            ("C2".into(), combo2),
        ]);
        let v = grs_value(&p, &ModelSet::parse("F1,F2").unwrap(), None).unwrap();
        assert!(v.abs() < 1e-10, "value = {v}");
        let test = grs_test(&p, &ModelSet::parse("F1,F2").unwrap(), None).unwrap();
        assert_eq!(test.p_value, 1.0);
    }

    #[test]
    fn grs_sr2_route_matches_quadratic_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let p = structured_panel(&mut rng, 200, 8);
            let model = ModelSet::parse("D0,D1").unwrap();
            let via_sr2 = grs_value(&p, &model, None).unwrap();

            let lhs: Vec<String> =
                p.names().iter().filter(|n| !model.contains(n)).cloned().collect();
            let fit = spanning_regression(&p, &lhs, &model).unwrap();
            let quad = crate::frontier::alpha_quadratic(&fit).unwrap();
            let t = p.n_periods() as f64;
            let n = p.n_assets() as f64;
            let direct = (t - n) / (n - 2.0) * quad / (1.0 + fit.rhs_sr2);
            assert_relative_eq!(via_sr2, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn grs_duality_argmin_is_sr2_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = structured_panel(&mut rng, 150, 10);
        let names = p.names().to_vec();
        let mut best_grs: Option<(f64, String)> = None;
        let mut best_sr2: Option<(f64, String)> = None;
        for cand in names.iter().skip(1) {
            let model = ModelSet::new(vec![names[0].clone(), cand.clone()]).unwrap();
            let g = grs_value(&p, &model, None).unwrap();
            let s = max_sq_sharpe(&moments(&p, Some(&model)).unwrap()).unwrap();
            if best_grs.as_ref().map_or(true, |(bg, _)| g < *bg) {
                best_grs = Some((g, cand.clone()));
            }
            if best_sr2.as_ref().map_or(true, |(bs, _)| s > *bs) {
                best_sr2 = Some((s, cand.clone()));
            }
        }
        assert_eq!(best_grs.unwrap().1, best_sr2.unwrap().1);
    }

    #[test]
    fn hda_zero_alpha_floor() {
        // shift each LHS column by its fitted intercept so alphas vanish, use
        // a tight screen so the correction term is zero: the statistic sits at
        // its floor −√(N₁/2), which is −2 for eight assets
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = 600;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let mut cols = vec![("F".to_string(), f.clone())];
        for j in 0..8 {
            let beta = rng.gen_range(0.2..1.2);
            let series: Vec<f64> = f
                .iter()
                .map(|x| beta * x + rng.sample::<f64, _>(StandardNormal) * 0.02)
                .collect();
            cols.push((format!("A{j}"), series));
        }
        let p0 = panel_from(cols.clone());
        let model = ModelSet::parse("F").unwrap();
        let lhs: Vec<String> = (0..8).map(|j| format!("A{j}")).collect();
        let fit = spanning_regression(&p0, &lhs, &model).unwrap();
        for (i, name) in lhs.iter().enumerate() {
            let col = cols.iter_mut().find(|(n, _)| n == name).unwrap();
            for v in col.1.iter_mut() {
                *v -= fit.alphas[i];
            }
        }
        let p = panel_from(cols);
        let cfg = HdaConfig { significance: 0.05, screening_level: Some(1e-6) };
        let res = hda_test(&p, &model, None, &cfg).unwrap();
        assert_relative_eq!(res.statistic, -2.0, epsilon = 1e-6);
        assert!(!res.rejects(0.05));
        assert_eq!(res.n_lhs, 8);
    }

    #[test]
    fn hda_errors_on_spanned_asset_with_real_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 80;
        let f: Vec<f64> = (0..t).map(|_| 0.004 + rng.sample::<f64, _>(StandardNormal) * 0.03).collect();
        let shifted: Vec<f64> = f.iter().map(|x| 2.0 * x + 0.005).collect();
        let noise: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        let p = panel_from(vec![("F".into(), f), ("COPY".into(), shifted), ("N".into(), noise)]);
        let err = hda_test(&p, &ModelSet::parse("F").unwrap(), None, &HdaConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroResidualVariance { ref name } if name == "COPY"));
    }

    #[test]
    fn hda_statistic_invariant_to_lhs_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = structured_panel(&mut rng, 240, 9);
        let model = ModelSet::parse("D0,D1").unwrap();
        let base = hda_test(&p, &model, None, &HdaConfig::default()).unwrap();

        let mut data = p.returns().clone();
        let j = p.index_of("A05").unwrap();
        for t in 0..p.n_periods() {
            data[(t, j)] *= 7.25;
        }
        let scaled = ReturnPanel::new(p.periods().to_vec(), p.names().to_vec(), data).unwrap();
        let res = hda_test(&scaled, &model, None, &HdaConfig::default()).unwrap();
        assert_relative_eq!(res.statistic, base.statistic, max_relative = 1e-8);
    }

    #[test]
    fn rho2_vanishes_for_independent_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = 5000;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let mut cols = vec![("F".to_string(), f.clone())];
        for j in 0..50 {
            let series: Vec<f64> = f
                .iter()
                .map(|x| 0.5 * x + rng.sample::<f64, _>(StandardNormal) * 0.02)
                .collect();
            cols.push((format!("A{:02}", j), series));
        }
        let p = panel_from(cols);
        let lhs: Vec<String> = (0..50).map(|j| format!("A{:02}", j)).collect();
        let fit = spanning_regression(&p, &lhs, &ModelSet::parse("F").unwrap()).unwrap();
        let est = rho2_correction(&fit, None).unwrap();
        assert!(est.value < 0.01, "rho2 = {}", est.value);
    }

    #[test]
    fn rho2_recovers_equicorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let t = 5000;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let g: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut cols = vec![("F".to_string(), f.clone())];
        let share = 0.5f64;
        for j in 0..20 {
            let series: Vec<f64> = (0..t)
                .map(|r| {
                    0.4 * f[r]
                        + 0.02 * (share.sqrt() * g[r]
                            + (1.0 - share).sqrt() * rng.sample::<f64, _>(StandardNormal))
                })
                .collect();
            cols.push((format!("A{:02}", j), series));
        }
        let p = panel_from(cols);
        let lhs: Vec<String> = (0..20).map(|j| format!("A{:02}", j)).collect();
        let fit = spanning_regression(&p, &lhs, &ModelSet::parse("F").unwrap()).unwrap();
        let est = rho2_correction(&fit, None).unwrap();
        assert!((est.value - 0.25).abs() < 0.02, "rho2 = {}", est.value);
        assert_eq!(est.retained_pairs, 20 * 19 / 2);
    }

    #[test]
    fn rho2_two_assets_below_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let t = 400;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
        let a: Vec<f64> = f.iter().map(|x| 0.8 * x + rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        let b: Vec<f64> = f.iter().map(|x| 0.3 * x + rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
        let p = panel_from(vec![("F".into(), f), ("A".into(), a), ("B".into(), b)]);
        let fit = spanning_regression(
            &p,
            &["A".to_string(), "B".to_string()],
            &ModelSet::parse("F").unwrap(),
        )
        .unwrap();
        // explicit screen: θ = Φ⁻¹(0.975)/√T ≈ 0.098, independent noise sits below it
        let est = rho2_correction(&fit, Some(0.05)).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.retained_pairs, 0);
    }

    #[test]
    fn hda_power_is_monotone_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let t = 300;
        let n1 = 20;
        let reps = 60;
        let mut rates = Vec::new();
        for alpha in [0.0, 0.002, 0.006] {
            let mut rejections = 0;
            for _ in 0..reps {
                let f: Vec<f64> =
                    (0..t).map(|_| 0.005 + rng.sample::<f64, _>(StandardNormal) * 0.04).collect();
                let mut cols = vec![("F".to_string(), f.clone())];
                for j in 0..n1 {
                    let series: Vec<f64> = f
                        .iter()
                        .map(|x| alpha + 0.6 * x + rng.sample::<f64, _>(StandardNormal) * 0.02)
                        .collect();
                    cols.push((format!("A{:02}", j), series));
                }
                let p = panel_from(cols);
                let res =
                    hda_test(&p, &ModelSet::parse("F").unwrap(), None, &HdaConfig::default()).unwrap();
                if res.rejects(0.05) {
                    rejections += 1;
                }
            }
            rates.push(rejections as f64 / reps as f64);
        }
        assert!(rates[0] <= rates[1] + 0.05 && rates[1] <= rates[2] + 0.05, "rates = {rates:?}");
        assert!(rates[2] > 0.9, "strong alternative should reject, rates = {rates:?}");
    }

    #[test]
    fn extra_assets_enter_lhs_and_universe() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let p = structured_panel(&mut rng, 260, 6);
        let t = p.n_periods();
        let extra_cols: Vec<(String, Vec<f64>)> = (0..3)
            .map(|j| {
                let series: Vec<f64> = (0..t)
                    .map(|_| 0.003 + rng.sample::<f64, _>(StandardNormal) * 0.05)
                    .collect();
                (format!("R{j}"), series)
            })
            .collect();
        let extra = panel_from(extra_cols);
        let model = ModelSet::parse("D0,D1").unwrap();

        let with = grs_test(&p, &model, Some(&extra)).unwrap();
        let without = grs_test(&p, &model, None).unwrap();
        assert_eq!(with.n_lhs, without.n_lhs + 3);
        match (with.df, without.df) {
            (RefDist::F { d1: a1, d2: a2 }, RefDist::F { d1: b1, d2: b2 }) => {
                assert_eq!(a1, b1 + 3.0);
                assert_eq!(a2, b2 - 3.0);
            }
            _ => panic!("expected F distributions"),
        }

        let hda = hda_test(&p, &model, Some(&extra), &HdaConfig::default()).unwrap();
        assert_eq!(hda.n_lhs, without.n_lhs + 3);
    }

    #[test]
    fn z_critical_matches_table_values() {
        assert_relative_eq!(z_critical(0.05), 1.6448536, epsilon = 1e-5);
        assert_relative_eq!(z_critical(0.01), 2.3263479, epsilon = 1e-5);
    }
}
